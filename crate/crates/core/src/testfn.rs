//! Seeded random test functions.
//!
//! Test functions are low-order trigonometric polynomials in the normalized
//! chart coordinates `s_i = 2π (u_i - lo_i) / len_i`, with coefficients drawn
//! uniformly from `[-1, 1]`. They are smooth and bounded, and so are their
//! leaf integrals.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::FoliatedChart;
use crate::quadrature::{Quadrature, ScalarField};

/// Highest frequency per axis.
pub const MAX_FREQUENCY: i32 = 2;

#[derive(Debug, Clone, PartialEq)]
struct Term {
    freq: Vec<i32>,
    cos_coef: f64,
    sin_coef: f64,
}

/// `φ(u) = Σ_k a_k cos(k·s) + b_k sin(k·s)` over frequency vectors
/// `k ∈ {0..=MAX_FREQUENCY}^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    lo: Vec<f64>,
    len: Vec<f64>,
    terms: Vec<Term>,
}

impl TrigPolynomial {
    /// Draws the `index`-th test function of the stream fixed by `seed`.
    pub fn random(chart: &FoliatedChart, seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let n = chart.dim_total();
        let width = (MAX_FREQUENCY + 1) as usize;
        let terms = (0..width.pow(n as u32))
            .map(|mut code| {
                let freq = (0..n)
                    .map(|_| {
                        let k = (code % width) as i32;
                        code /= width;
                        k
                    })
                    .collect();
                Term {
                    freq,
                    cos_coef: rng.random_range(-1.0..=1.0),
                    sin_coef: rng.random_range(-1.0..=1.0),
                }
            })
            .collect();
        Self {
            lo: chart.bounds().iter().map(|iv| iv.lo).collect(),
            len: chart.bounds().iter().map(|iv| iv.len()).collect(),
            terms,
        }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        let s: Vec<f64> = u
            .iter()
            .zip(self.lo.iter().zip(&self.len))
            .map(|(x, (lo, len))| std::f64::consts::TAU * (x - lo) / len)
            .collect();
        self.terms
            .iter()
            .map(|t| {
                let phase: f64 = t.freq.iter().zip(&s).map(|(&k, s)| k as f64 * s).sum();
                t.cos_coef * phase.cos() + t.sin_coef * phase.sin()
            })
            .sum()
    }

    pub fn sample(&self, quad: &Quadrature) -> ScalarField {
        quad.sample(|u| self.eval(u))
    }
}

/// `count` seeded test functions sampled on the grid.
pub fn random_fields(
    chart: &FoliatedChart,
    quad: &Quadrature,
    seed: u64,
    count: usize,
) -> Vec<ScalarField> {
    (0..count as u64)
        .map(|i| TrigPolynomial::random(chart, seed, i).sample(quad))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;

    #[test]
    fn deterministic_per_seed_and_index() {
        let torus = gallery::make_torus(2.0, 1.0).unwrap();
        let a = TrigPolynomial::random(&torus, 7, 0);
        assert_eq!(a, TrigPolynomial::random(&torus, 7, 0));
        assert_ne!(a, TrigPolynomial::random(&torus, 7, 1));
        assert_ne!(a, TrigPolynomial::random(&torus, 8, 0));
    }

    #[test]
    fn bounded_by_coefficient_sum() {
        let ring = gallery::make_ring(3, 1.0, 2.0).unwrap();
        let phi = TrigPolynomial::random(&ring, 3, 2);
        let bound: f64 = phi
            .terms
            .iter()
            .map(|t| t.cos_coef.abs() + t.sin_coef.abs())
            .sum();
        for u in [[1.2, 0.3, 0.1], [1.9, 3.0, 6.0]] {
            assert!(phi.eval(&u).abs() <= bound);
        }
        assert_eq!(phi.terms.len(), 27);
    }

    #[test]
    fn periodic_in_normalized_coordinates() {
        let torus = gallery::make_torus(2.0, 1.0).unwrap();
        let phi = TrigPolynomial::random(&torus, 1, 0);
        let tau = std::f64::consts::TAU;
        assert!((phi.eval(&[0.3, 0.4]) - phi.eval(&[0.3 + tau, 0.4 - tau])).abs() < 1e-12);
    }
}
