//! Direct minimization of the discretized modulus problem.
//!
//! By the coarea factorization `∫_M f^p dμ_M = ∫_N ∫_L f^p / JΦ dμ_L dμ_N`,
//! the discrete problem
//!
//! ```text
//! minimize ∫_M f^p dμ_M   subject to   ∫_L f dμ_L = 1 on every leaf, f ≥ 0
//! ```
//!
//! splits into one small problem per sampled leaf:
//! `minimize Σ v_i f_i^p` subject to `Σ w_i f_i = 1`, `f ≥ 0`. Each is solved
//! by a diagonally scaled projected gradient method with Armijo backtracking.
//! Nothing here uses the closed-form extremal function.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DensityBundle;
use crate::modulus::check_exponent;
use crate::quadrature::{integrate_base, pairwise_sum, Quadrature, ScalarField};

/// One leaf of the separable problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafProblem {
    objective_weights: Vec<f64>,
    constraint_weights: Vec<f64>,
    p: f64,
}

impl LeafProblem {
    pub fn new(objective_weights: Vec<f64>, constraint_weights: Vec<f64>, p: f64) -> Result<Self> {
        check_exponent(p)?;
        if objective_weights.len() != constraint_weights.len() {
            return Err(Error::ShapeMismatch {
                expected: objective_weights.len(),
                found: constraint_weights.len(),
            });
        }
        if objective_weights.is_empty() {
            return Err(Error::Precondition("leaf problem has no nodes".into()));
        }
        let positive = |w: &[f64]| w.iter().all(|&x| x > 0.0 && x.is_finite());
        if !positive(&objective_weights) || !positive(&constraint_weights) {
            return Err(Error::Precondition(
                "leaf weights must be positive and finite".into(),
            ));
        }
        Ok(Self {
            objective_weights,
            constraint_weights,
            p,
        })
    }

    pub fn objective_weights(&self) -> &[f64] {
        &self.objective_weights
    }

    pub fn constraint_weights(&self) -> &[f64] {
        &self.constraint_weights
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn len(&self) -> usize {
        self.objective_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objective_weights.is_empty()
    }

    /// `Σ v_i f_i^p`.
    pub fn objective(&self, f: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .objective_weights
            .iter()
            .zip(f)
            .map(|(v, x)| v * x.powf(self.p))
            .collect();
        pairwise_sum(&terms)
    }

    /// `Σ w_i f_i`.
    pub fn constraint(&self, f: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .constraint_weights
            .iter()
            .zip(f)
            .map(|(w, x)| w * x)
            .collect();
        pairwise_sum(&terms)
    }

    /// Lagrange multiplier estimates `p v_i f_i^{p-1} / w_i`; all equal at
    /// the optimum of the equality-constrained problem.
    pub fn multiplier_estimates(&self, f: &[f64]) -> Vec<f64> {
        self.objective_weights
            .iter()
            .zip(&self.constraint_weights)
            .zip(f)
            .map(|((v, w), x)| self.p * v * x.powf(self.p - 1.0) / w)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop when the relative objective change falls below this.
    pub objective_tol: f64,
    /// Stop when the scaled projected-gradient step falls below this
    /// (relative to the largest node value).
    pub gradient_tol: f64,
    /// First trial step of each backtracking line search; halved on failure.
    pub initial_step: f64,
    /// Feasibility target for `Σ w_i f_i = 1`.
    pub projection_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            objective_tol: 1e-12,
            gradient_tol: 1e-10,
            initial_step: 1.0,
            projection_tol: 1e-14,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.objective_tol,
            self.gradient_tol,
            self.initial_step,
            self.projection_tol,
        ];
        if self.max_iters == 0 || positive.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter(
                "solver tolerances and step must be positive, max_iters nonzero".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafSolution {
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

/// Projection onto `{Σ w_i f_i = 1, f ≥ 0}` in the norm `Σ d_i x_i²`.
///
/// The projection is `f_i = max(0, x_i + λ w_i / d_i)` with `λ` the root of a
/// nondecreasing piecewise-linear function, found exactly by sweeping its
/// sorted breakpoints.
fn project_scaled(x: &[f64], w: &[f64], d: &[f64], tol: f64) -> Vec<f64> {
    let c: Vec<f64> = w.iter().zip(d).map(|(w, d)| w / d).collect();
    let mut order: Vec<usize> = (0..x.len()).collect();
    let breakpoint = |i: usize| -x[i] / c[i];
    order.sort_by(|&a, &b| breakpoint(a).total_cmp(&breakpoint(b)));

    // Over (bp[k-1], bp[k]) the active set is order[..k]; sum = s0 + λ s1.
    let (mut s0, mut s1) = (0.0, 0.0);
    let mut lambda = f64::NAN;
    for k in 0..=order.len() {
        if k > 0 {
            let i = order[k - 1];
            s0 += w[i] * x[i];
            s1 += w[i] * c[i];
        }
        if s1 <= 0.0 {
            continue;
        }
        let candidate = (1.0 - s0) / s1;
        let lo = if k > 0 {
            breakpoint(order[k - 1])
        } else {
            f64::NEG_INFINITY
        };
        let hi = order.get(k).map_or(f64::INFINITY, |&i| breakpoint(i));
        if candidate >= lo && candidate <= hi {
            lambda = candidate;
            break;
        }
    }
    debug_assert!(lambda.is_finite());
    let mut f: Vec<f64> = x
        .iter()
        .zip(&c)
        .map(|(x, c)| (x + lambda * c).max(0.0))
        .collect();
    // rounding polish: the constraint is homogeneous of degree one
    for _ in 0..4 {
        let s: f64 = pairwise_sum(&f.iter().zip(w).map(|(f, w)| f * w).collect::<Vec<_>>());
        if (s - 1.0).abs() <= tol {
            break;
        }
        f.iter_mut().for_each(|v| *v /= s);
    }
    f
}

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

/// Minimizes `Σ v_i f_i^p` over `{Σ w_i f_i = 1, f ≥ 0}`.
///
/// Starts from the uniform feasible point. Each iteration takes a gradient
/// step scaled by the diagonal of the Hessian, projects in the same metric
/// and backtracks by halving until the Armijo condition holds, so the
/// objective never increases.
pub fn solve_leaf(prob: &LeafProblem, cfg: &SolverConfig) -> Result<LeafSolution> {
    cfg.validate()?;
    let p = prob.p;
    let v = &prob.objective_weights;
    let w = &prob.constraint_weights;
    let total_w = pairwise_sum(w);
    let mut f = vec![1.0 / total_w; prob.len()];
    let mut obj = prob.objective(&f);
    let mut history = vec![obj];
    let mut last_change = f64::INFINITY;

    for iter in 0..cfg.max_iters {
        let fmax = f.iter().copied().fold(0.0, f64::max);
        let floor = fmax * 1e-12;
        let grad: Vec<f64> = v
            .iter()
            .zip(&f)
            .map(|(v, x)| p * v * x.powf(p - 1.0))
            .collect();
        let diag: Vec<f64> = v
            .iter()
            .zip(&f)
            .map(|(v, x)| p * (p - 1.0) * v * x.max(floor).powf(p - 2.0))
            .collect();

        let trial = |step: f64| {
            let x: Vec<f64> = f
                .iter()
                .zip(grad.iter().zip(&diag))
                .map(|(x, (g, d))| x - step * g / d)
                .collect();
            project_scaled(&x, w, &diag, cfg.projection_tol)
        };

        let mut step = cfg.initial_step;
        let mut cand = trial(step);
        let stationarity = cand
            .iter()
            .zip(&f)
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()))
            / fmax;
        if stationarity < cfg.gradient_tol {
            return Ok(LeafSolution {
                objective: obj,
                values: f,
                iterations: iter,
                history,
            });
        }

        let accepted = loop {
            let cand_obj = prob.objective(&cand);
            let decrease: f64 = grad
                .iter()
                .zip(cand.iter().zip(&f))
                .map(|(g, (a, b))| g * (a - b))
                .sum();
            if cand_obj <= obj + ARMIJO * decrease {
                break Some(cand_obj);
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
            cand = trial(step);
        };
        let Some(new_obj) = accepted else {
            // no representable decrease left
            return Ok(LeafSolution {
                objective: obj,
                values: f,
                iterations: iter,
                history,
            });
        };
        last_change = (obj - new_obj).abs() / obj.abs().max(f64::MIN_POSITIVE);
        f = cand;
        obj = new_obj;
        history.push(obj);
        if last_change < cfg.objective_tol {
            return Ok(LeafSolution {
                objective: obj,
                values: f,
                iterations: iter + 1,
                history,
            });
        }
    }
    Err(Error::NonConvergence {
        leaf: 0,
        iterations: cfg.max_iters,
        gap: last_change,
    })
}

/// Stationary point `f_i = c (w_i / v_i)^{1/(p-1)}` of the leaf problem with
/// `c` fixed by the constraint. Used only to cross-check [`solve_leaf`].
pub fn kkt_closed_leaf(prob: &LeafProblem) -> Vec<f64> {
    let e = 1.0 / (prob.p - 1.0);
    let shape: Vec<f64> = prob
        .objective_weights
        .iter()
        .zip(&prob.constraint_weights)
        .map(|(v, w)| (w / v).powf(e))
        .collect();
    let c = 1.0 / prob.constraint(&shape);
    shape.into_iter().map(|s| c * s).collect()
}

/// Per-leaf problems assembled from the density bundle.
///
/// Objective weights are `(leaf weight)·(leaf density)/JΦ`, constraint
/// weights `(leaf weight)·(leaf density)`.
pub fn leaf_problems(
    bundle: &DensityBundle,
    quad: &Quadrature,
    p: f64,
) -> Result<Vec<LeafProblem>> {
    check_exponent(p)?;
    let k = quad.grid().leaf_len();
    let node_w = quad.leaf_node_weights();
    bundle
        .leaf_density()
        .chunks_exact(k)
        .zip(bundle.jac().chunks_exact(k))
        .map(|(dens, jac)| {
            let w: Vec<f64> = node_w.iter().zip(dens).map(|(a, d)| a * d).collect();
            let v: Vec<f64> = w.iter().zip(jac).map(|(w, j)| w / j).collect();
            LeafProblem::new(v, w, p)
        })
        .collect()
}

/// Solution of the full discrete problem.
#[derive(Debug, Clone)]
pub struct GlobalSolution {
    pub field: ScalarField,
    /// Discrete `∫_M f^p dμ_M`.
    pub objective: f64,
    /// `objective^{1/p}`.
    pub modulus: f64,
    pub iterations: Vec<usize>,
}

/// Solves every leaf problem (in parallel) and assembles the global field.
pub fn solve_global(
    bundle: &DensityBundle,
    quad: &Quadrature,
    p: f64,
    cfg: &SolverConfig,
) -> Result<GlobalSolution> {
    let problems = leaf_problems(bundle, quad, p)?;
    let solutions: Vec<LeafSolution> = problems
        .par_iter()
        .enumerate()
        .map(|(leaf, prob)| {
            solve_leaf(prob, cfg).map_err(|e| match e {
                Error::NonConvergence {
                    iterations, gap, ..
                } => Error::NonConvergence {
                    leaf,
                    iterations,
                    gap,
                },
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let per_leaf: Vec<f64> = solutions.iter().map(|s| s.objective).collect();
    let objective = integrate_base(&per_leaf, bundle, quad)?;
    let iterations = solutions.iter().map(|s| s.iterations).collect();
    let values = solutions.into_iter().flat_map(|s| s.values).collect();
    let field = ScalarField::new(quad.grid().clone(), values)?;
    Ok(GlobalSolution {
        field,
        objective,
        modulus: objective.powf(1.0 / p),
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solve(v: Vec<f64>, w: Vec<f64>, p: f64) -> Vec<f64> {
        let prob = LeafProblem::new(v, w, p).unwrap();
        solve_leaf(&prob, &SolverConfig::default()).unwrap().values
    }

    #[test]
    fn symmetric_two_node_problem() {
        let f = solve(vec![1.0, 1.0], vec![1.0, 1.0], 2.0);
        assert!((f[0] - 0.5).abs() < 1e-12 && (f[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_node_problem_matches_hand_solution() {
        let f = solve(vec![1.0, 8.0], vec![1.0, 1.0], 2.0);
        assert!((f[0] - 8.0 / 9.0).abs() < 1e-12);
        assert!((f[1] - 1.0 / 9.0).abs() < 1e-12);
        let prob = LeafProblem::new(vec![1.0, 8.0], vec![1.0, 1.0], 2.0).unwrap();
        let k = kkt_closed_leaf(&prob);
        assert!((k[0] - 8.0 / 9.0).abs() < 1e-15 && (k[1] - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn two_node_grid_search_oracle() {
        // brute force over f_1 on the segment f_1 + f_2 = 1
        let prob = LeafProblem::new(vec![1.0, 8.0], vec![1.0, 1.0], 2.0).unwrap();
        let n = 90_000;
        let best = (0..=n)
            .map(|i| i as f64 / n as f64)
            .min_by(|&a, &b| {
                prob.objective(&[a, 1.0 - a])
                    .total_cmp(&prob.objective(&[b, 1.0 - b]))
            })
            .unwrap();
        assert!((best - 8.0 / 9.0).abs() <= 1.0 / n as f64);
    }

    #[test]
    fn uniform_profile_when_weights_agree() {
        let w = vec![0.3, 0.7, 1.1, 0.2];
        let prob = LeafProblem::new(w.clone(), w.clone(), 3.0).unwrap();
        let k = kkt_closed_leaf(&prob);
        let expected = 1.0 / w.iter().sum::<f64>();
        assert!(k.iter().all(|x| (x - expected).abs() < 1e-15));
    }

    #[test]
    fn kkt_point_beats_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 12;
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        for p in [1.5, 2.0, 3.0] {
            let prob = LeafProblem::new(v.clone(), w.clone(), p).unwrap();
            let best = prob.objective(&kkt_closed_leaf(&prob));
            for _ in 0..100 {
                let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
                let s = prob.constraint(&raw);
                let feasible: Vec<f64> = raw.iter().map(|x| x / s).collect();
                assert!(best <= prob.objective(&feasible) * (1.0 + 1e-14));
            }
        }
    }

    #[test]
    fn projection_is_feasible_and_fixes_feasible_points() {
        let w = [0.5, 1.5, 2.0, 0.25];
        let d = [1.0, 3.0, 0.5, 2.0];
        let x = [-1.0, 0.4, 2.0, 0.1];
        let f = project_scaled(&x, &w, &d, 1e-14);
        assert!(f.iter().all(|&v| v >= 0.0));
        let s: f64 = f.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((s - 1.0).abs() < 1e-14);
        let feasible = [0.4, 0.2, 0.2, 0.4];
        let s: f64 = feasible.iter().zip(&w).map(|(a, b)| a * b).sum();
        let feasible: Vec<f64> = feasible.iter().map(|x| x / s).collect();
        let g = project_scaled(&feasible, &w, &d, 1e-14);
        for (a, b) in g.iter().zip(&feasible) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_matches_brute_force_on_two_nodes() {
        // minimize d1 (f1 - x1)^2 + d2 (f2 - x2)^2 on the segment w1 f1 + w2 f2 = 1
        let (w, d, x) = ([1.0, 2.0], [3.0, 1.0], [0.9, -0.2]);
        let f = project_scaled(&x, &w, &d, 1e-14);
        let n = 200_000;
        let best = (0..=n)
            .map(|i| i as f64 / n as f64 / w[0])
            .min_by(|&a, &b| {
                let cost = |f1: f64| {
                    let f2 = (1.0 - w[0] * f1) / w[1];
                    d[0] * (f1 - x[0]).powi(2) + d[1] * (f2 - x[1]).powi(2)
                };
                cost(a).total_cmp(&cost(b))
            })
            .unwrap();
        assert!((f[0] - best).abs() < 1e-5);
    }

    #[test]
    fn objective_history_is_nonincreasing_and_multipliers_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in [1.5, 2.5, 4.0] {
            let n = 40;
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..3.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..3.0)).collect();
            let prob = LeafProblem::new(v, w, p).unwrap();
            let sol = solve_leaf(&prob, &SolverConfig::default()).unwrap();
            assert!(sol.history.windows(2).all(|h| h[1] <= h[0]));
            assert!((prob.constraint(&sol.values) - 1.0).abs() < 1e-12);
            let lam = prob.multiplier_estimates(&sol.values);
            let mean = lam.iter().sum::<f64>() / lam.len() as f64;
            assert!(mean > 0.0);
            assert!(
                lam.iter().all(|l| (l - mean).abs() <= 1e-8 * mean),
                "p = {p}"
            );
        }
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let prob = LeafProblem::new(vec![1.0, 5.0, 0.2], vec![1.0, 0.3, 2.0], 1.5).unwrap();
        let cfg = SolverConfig {
            max_iters: 1,
            objective_tol: 1e-300,
            gradient_tol: 1e-300,
            ..SolverConfig::default()
        };
        assert!(matches!(
            solve_leaf(&prob, &cfg),
            Err(Error::NonConvergence { iterations: 1, .. })
        ));
    }

    #[test]
    fn invalid_problems_rejected() {
        assert!(LeafProblem::new(vec![1.0], vec![1.0], 1.0).is_err());
        assert!(LeafProblem::new(vec![1.0, 2.0], vec![1.0], 2.0).is_err());
        assert!(LeafProblem::new(vec![0.0], vec![1.0], 2.0).is_err());
        assert!(LeafProblem::new(vec![], vec![], 2.0).is_err());
        let bad = SolverConfig {
            objective_tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
