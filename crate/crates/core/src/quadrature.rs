//! Tensor-product quadrature on the chart box.
//!
//! Grid layout is row-major with the last axis fastest. Because base axes come
//! first, the nodes of one leaf form a contiguous block of
//! [`GridSpec::leaf_len`] values, and the flat index splits as
//! `base_index * leaf_len + leaf_offset`.
//!
//! All reductions contract the trailing axis first, one axis at a time, with
//! pairwise summation, so results do not depend on thread count.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DensityBundle, FoliatedChart};

/// Smallest admissible node count per axis.
pub const MIN_NODES: usize = 4;
/// Default node count for periodic axes.
pub const DEFAULT_PERIODIC_NODES: usize = 64;
/// Default node count for non-periodic axes.
pub const DEFAULT_NONPERIODIC_NODES: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisRule {
    UniformPeriodic,
    GaussLegendre,
}

/// Nodes and weights along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisQuadrature {
    pub rule: AxisRule,
    pub lo: f64,
    pub hi: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl AxisQuadrature {
    /// Equispaced rule on a periodic axis; weights sum to the period.
    pub fn uniform_periodic(lo: f64, hi: f64, m: usize) -> Self {
        let h = (hi - lo) / m as f64;
        Self {
            rule: AxisRule::UniformPeriodic,
            lo,
            hi,
            nodes: (0..m).map(|j| lo + j as f64 * h).collect(),
            weights: vec![h; m],
        }
    }

    /// Gauss-Legendre rule mapped affinely onto `[lo, hi]`; all nodes interior.
    pub fn gauss_legendre(lo: f64, hi: f64, m: usize) -> Self {
        let m = NonZeroUsize::new(m).expect("node count checked by caller");
        let rule = GaussLegendre::new(m);
        let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        Self {
            rule: AxisRule::GaussLegendre,
            lo,
            hi,
            nodes: pairs.iter().map(|&(x, _)| mid + half * x).collect(),
            weights: pairs.iter().map(|&(_, w)| half * w).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Shape of a product grid split into base and leaf axes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    counts: Vec<usize>,
    dim_base: usize,
}

impl GridSpec {
    pub fn new(counts: Vec<usize>, dim_base: usize) -> Self {
        assert!(dim_base < counts.len(), "base dimension exceeds grid rank");
        Self { counts, dim_base }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn dim_base(&self) -> usize {
        self.dim_base
    }

    pub fn base_counts(&self) -> &[usize] {
        &self.counts[..self.dim_base]
    }

    pub fn leaf_counts(&self) -> &[usize] {
        &self.counts[self.dim_base..]
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of base nodes (= number of sampled leaves).
    pub fn base_len(&self) -> usize {
        self.base_counts().iter().product()
    }

    /// Number of nodes on one leaf.
    pub fn leaf_len(&self) -> usize {
        self.leaf_counts().iter().product()
    }

    /// Flat index to per-axis multi-index.
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.counts.len()];
        for (slot, &m) in out.iter_mut().zip(&self.counts).rev() {
            *slot = idx % m;
            idx /= m;
        }
        out
    }

    /// Per-axis multi-index to flat index.
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.counts)
            .fold(0, |acc, (&i, &m)| acc * m + i)
    }

    /// Flat index to the index of its leaf (base node).
    pub fn base_of(&self, idx: usize) -> usize {
        idx / self.leaf_len()
    }

    /// Stride between consecutive nodes along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.counts[axis + 1..].iter().product()
    }
}

/// Per-axis rules over the full chart box.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    axes: Vec<AxisQuadrature>,
    grid: GridSpec,
}

/// Picks the rule for each axis from its periodicity and samples nodes.
pub fn build_quadrature(chart: &FoliatedChart, counts: &[usize]) -> Result<Quadrature> {
    if counts.len() != chart.dim_total() {
        return Err(Error::ShapeMismatch {
            expected: chart.dim_total(),
            found: counts.len(),
        });
    }
    if let Some(&m) = counts.iter().find(|&&m| m < MIN_NODES) {
        return Err(Error::Precondition(format!(
            "every axis needs at least {MIN_NODES} nodes, got {m}"
        )));
    }
    let axes = chart
        .bounds()
        .iter()
        .zip(chart.periodic())
        .zip(counts)
        .map(|((iv, &per), &m)| {
            if per {
                AxisQuadrature::uniform_periodic(iv.lo, iv.hi, m)
            } else {
                AxisQuadrature::gauss_legendre(iv.lo, iv.hi, m)
            }
        })
        .collect();
    Ok(Quadrature {
        axes,
        grid: GridSpec::new(counts.to_vec(), chart.dim_base()),
    })
}

/// Default per-axis node counts for a chart.
pub fn default_counts(chart: &FoliatedChart) -> Vec<usize> {
    chart
        .periodic()
        .iter()
        .map(|&p| {
            if p {
                DEFAULT_PERIODIC_NODES
            } else {
                DEFAULT_NONPERIODIC_NODES
            }
        })
        .collect()
}

impl Quadrature {
    pub fn axes(&self) -> &[AxisQuadrature] {
        &self.axes
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Chart coordinates of a grid node.
    pub fn node(&self, idx: usize) -> Vec<f64> {
        self.grid
            .multi_index(idx)
            .into_iter()
            .zip(&self.axes)
            .map(|(i, ax)| ax.nodes[i])
            .collect()
    }

    /// Base coordinates of a base node.
    pub fn base_node(&self, base_idx: usize) -> Vec<f64> {
        let mut u = self.node(base_idx * self.grid.leaf_len());
        u.truncate(self.grid.dim_base());
        u
    }

    /// Samples a function of the chart coordinates at every node.
    pub fn sample<F>(&self, f: F) -> ScalarField
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let values = (0..self.grid.len())
            .into_par_iter()
            .map(|idx| f(&self.node(idx)))
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Product weight of each node within a leaf, in leaf-offset order.
    pub fn leaf_node_weights(&self) -> Vec<f64> {
        let b = self.grid.dim_base();
        let leaf_grid = GridSpec::new(
            std::iter::once(1)
                .chain(self.grid.leaf_counts().iter().copied())
                .collect(),
            1,
        );
        (0..leaf_grid.len())
            .map(|j| {
                leaf_grid.multi_index(j)[1..]
                    .iter()
                    .zip(&self.axes[b..])
                    .map(|(&i, ax)| ax.weights[i])
                    .product()
            })
            .collect()
    }

    fn leaf_weights(&self) -> Vec<&[f64]> {
        self.axes[self.grid.dim_base()..]
            .iter()
            .map(|a| a.weights.as_slice())
            .collect()
    }

    fn base_weights(&self) -> Vec<&[f64]> {
        self.axes[..self.grid.dim_base()]
            .iter()
            .map(|a| a.weights.as_slice())
            .collect()
    }

    fn all_weights(&self) -> Vec<&[f64]> {
        self.axes.iter().map(|a| a.weights.as_slice()).collect()
    }
}

/// Grid-sampled function on the chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    /// Wraps node values; rejects wrong lengths and non-finite entries.
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!(
                "field value at node {i} is not finite"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Values on the nodes of one leaf.
    pub fn leaf(&self, base_idx: usize) -> &[f64] {
        let k = self.grid.leaf_len();
        &self.values[base_idx * k..(base_idx + 1) * k]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(
        &self,
        other: &ScalarField,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<ScalarField> {
        check_grid(&self.grid, &other.grid)?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_grid(expected: &GridSpec, found: &GridSpec) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch {
            expected: expected.len(),
            found: found.len(),
        });
    }
    Ok(())
}

fn check_bundle(f: &ScalarField, bundle: &DensityBundle, quad: &Quadrature) -> Result<()> {
    check_grid(quad.grid(), f.grid())?;
    check_grid(quad.grid(), bundle.grid())
}

/// Pairwise (tree) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Weighted contraction of a row-major tensor over all its axes, trailing axis
/// first.
fn contract(values: &[f64], weights: &[&[f64]]) -> f64 {
    let mut cur = values.to_vec();
    let mut scratch = Vec::new();
    for w in weights.iter().rev() {
        let m = w.len();
        scratch.clear();
        scratch.extend(cur.chunks_exact(m).map(|row| {
            let terms: Vec<f64> = row.iter().zip(w.iter()).map(|(v, w)| v * w).collect();
            pairwise_sum(&terms)
        }));
        std::mem::swap(&mut cur, &mut scratch);
    }
    debug_assert_eq!(cur.len(), 1);
    cur[0]
}

/// `∫_M f dμ_M`.
pub fn integrate_manifold(
    f: &ScalarField,
    bundle: &DensityBundle,
    quad: &Quadrature,
) -> Result<f64> {
    check_bundle(f, bundle, quad)?;
    let weighted: Vec<f64> = f
        .values
        .iter()
        .zip(bundle.man_density())
        .map(|(v, d)| v * d)
        .collect();
    Ok(contract(&weighted, &quad.all_weights()))
}

fn leaf_integral_unchecked(values: &[f64], leaf_density: &[f64], weights: &[&[f64]]) -> f64 {
    let weighted: Vec<f64> = values
        .iter()
        .zip(leaf_density)
        .map(|(v, d)| v * d)
        .collect();
    contract(&weighted, weights)
}

/// `∫_L f dμ_L` over the leaf through base node `leaf`.
pub fn integrate_leaf(
    f: &ScalarField,
    leaf: usize,
    bundle: &DensityBundle,
    quad: &Quadrature,
) -> Result<f64> {
    check_bundle(f, bundle, quad)?;
    let nb = quad.grid().base_len();
    if leaf >= nb {
        return Err(Error::IndexOutOfRange {
            index: leaf,
            len: nb,
        });
    }
    let k = quad.grid().leaf_len();
    let range = leaf * k..(leaf + 1) * k;
    Ok(leaf_integral_unchecked(
        &f.values[range.clone()],
        &bundle.leaf_density()[range],
        &quad.leaf_weights(),
    ))
}

/// Leaf integrals of `f`, one per base node.
pub fn leaf_integrals(
    f: &ScalarField,
    bundle: &DensityBundle,
    quad: &Quadrature,
) -> Result<Vec<f64>> {
    check_bundle(f, bundle, quad)?;
    let k = quad.grid().leaf_len();
    let weights = quad.leaf_weights();
    Ok(f.values
        .par_chunks_exact(k)
        .zip(bundle.leaf_density().par_chunks_exact(k))
        .map(|(vals, dens)| leaf_integral_unchecked(vals, dens, &weights))
        .collect())
}

/// Lifts base-indexed values to a field constant along each leaf.
pub fn lift(values: &[f64], grid: &GridSpec) -> Result<ScalarField> {
    if values.len() != grid.base_len() {
        return Err(Error::ShapeMismatch {
            expected: grid.base_len(),
            found: values.len(),
        });
    }
    let k = grid.leaf_len();
    Ok(ScalarField {
        grid: grid.clone(),
        values: values
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, k))
            .collect(),
    })
}

/// The hat operator: the leaf integral of `f`, lifted back to the manifold.
pub fn hat(f: &ScalarField, bundle: &DensityBundle, quad: &Quadrature) -> Result<ScalarField> {
    let per_leaf = leaf_integrals(f, bundle, quad)?;
    lift(&per_leaf, quad.grid())
}

/// `∫_N F dμ_N` for base-indexed values `F`.
pub fn integrate_base(values: &[f64], bundle: &DensityBundle, quad: &Quadrature) -> Result<f64> {
    let nb = quad.grid().base_len();
    if values.len() != nb {
        return Err(Error::ShapeMismatch {
            expected: nb,
            found: values.len(),
        });
    }
    let weighted: Vec<f64> = values
        .iter()
        .zip(bundle.base_density())
        .map(|(v, d)| v * d)
        .collect();
    Ok(contract(&weighted, &quad.base_weights()))
}

/// Relative discrepancy between `∫_M f dμ_M` and `∫_N ∫_L f/JΦ dμ_L dμ_N`.
pub fn coarea_residual(f: &ScalarField, bundle: &DensityBundle, quad: &Quadrature) -> Result<f64> {
    let direct = integrate_manifold(f, bundle, quad)?;
    let over_jac = ScalarField::new(
        f.grid.clone(),
        f.values
            .iter()
            .zip(bundle.jac())
            .map(|(v, j)| v / j)
            .collect(),
    )?;
    let inner = leaf_integrals(&over_jac, bundle, quad)?;
    let iterated = integrate_base(&inner, bundle, quad)?;
    Ok((direct - iterated).abs() / direct.abs().max(iterated.abs()).max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use crate::geometry::densities;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn uniform_rule_on_circle() {
        let ax = AxisQuadrature::uniform_periodic(0.0, TAU, 8);
        assert_eq!(ax.nodes.len(), 8);
        for (j, (&x, &w)) in ax.nodes.iter().zip(&ax.weights).enumerate() {
            assert!((x - j as f64 * PI / 4.0).abs() < 1e-15);
            assert!((w - PI / 4.0).abs() < 1e-15);
        }
        let cos2: f64 = ax
            .nodes
            .iter()
            .zip(&ax.weights)
            .map(|(x, w)| w * x.cos().powi(2))
            .sum();
        assert!((cos2 - PI).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_on_interval() {
        let ax = AxisQuadrature::gauss_legendre(1.0, 2.0, 4);
        assert!(ax.nodes.iter().all(|&x| x > 1.0 && x < 2.0));
        assert!(ax.nodes.windows(2).all(|w| w[0] < w[1]));
        let total: f64 = ax.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn weights_sum_to_axis_length() {
        for m in [4, 7, 16, 48, 129] {
            let gl = AxisQuadrature::gauss_legendre(-0.5, 2.5, m);
            assert!((pairwise_sum(&gl.weights) - 3.0).abs() < 3e-13);
            let un = AxisQuadrature::uniform_periodic(0.0, TAU, m);
            assert!((pairwise_sum(&un.weights) - TAU).abs() < TAU * 1e-13);
        }
    }

    #[test]
    fn gauss_legendre_exact_for_degree_2m_minus_1() {
        for m in [4, 6, 10] {
            let ax = AxisQuadrature::gauss_legendre(1.0, 3.0, m);
            let deg = 2 * m - 1;
            let got: f64 = ax
                .nodes
                .iter()
                .zip(&ax.weights)
                .map(|(x, w)| w * x.powi(deg as i32))
                .sum();
            let exact = (3f64.powi(deg as i32 + 1) - 1.0) / (deg as f64 + 1.0);
            assert!((got - exact).abs() <= 1e-12 * exact, "m={m}");
        }
    }

    #[test]
    fn too_few_nodes_rejected() {
        let torus = gallery::make_torus(2.0, 1.0).unwrap();
        assert!(matches!(
            build_quadrature(&torus, &[3, 8]),
            Err(Error::Precondition(_))
        ));
        assert!(build_quadrature(&torus, &[8]).is_err());
    }

    #[test]
    fn rules_follow_periodicity() {
        let ring = gallery::make_ring(2, 1.0, 2.0).unwrap();
        let q = build_quadrature(&ring, &[6, 8]).unwrap();
        assert_eq!(q.axes()[0].rule, AxisRule::GaussLegendre);
        assert_eq!(q.axes()[1].rule, AxisRule::UniformPeriodic);
    }

    #[test]
    fn index_round_trip() {
        let grid = GridSpec::new(vec![3, 4, 5], 1);
        for idx in 0..grid.len() {
            assert_eq!(grid.flat_index(&grid.multi_index(idx)), idx);
        }
        assert_eq!(grid.leaf_len(), 20);
        assert_eq!(grid.base_of(41), 2);
        assert_eq!(grid.stride(1), 5);
    }

    fn torus_setup(m: usize) -> (Quadrature, DensityBundle) {
        let torus = gallery::make_torus(2.0, 1.0).unwrap();
        let q = build_quadrature(&torus, &[m, m]).unwrap();
        let b = densities(&torus, &q).unwrap();
        (q, b)
    }

    #[test]
    fn torus_area_and_leaf_length() {
        let (q, b) = torus_setup(32);
        let one = ScalarField::constant(q.grid(), 1.0);
        let area = integrate_manifold(&one, &b, &q).unwrap();
        assert!((area - 8.0 * PI * PI).abs() < 1e-10 * area);
        for leaf in [0, 7, 31] {
            let len = integrate_leaf(&one, leaf, &b, &q).unwrap();
            assert!((len - TAU).abs() < 1e-13);
        }
        let hat1 = hat(&one, &b, &q).unwrap();
        assert!(hat1.values().iter().all(|v| (v - TAU).abs() < 1e-13));
        let zero = ScalarField::constant(q.grid(), 0.0);
        assert_eq!(integrate_manifold(&zero, &b, &q).unwrap(), 0.0);
        assert!(hat(&zero, &b, &q)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
        assert!(b.coarea_residual() <= 1e-10);
    }

    #[test]
    fn annulus_area_leaf_length_and_base_integrals() {
        let ring = gallery::make_ring(2, 1.0, 2.0).unwrap();
        let q = build_quadrature(&ring, &[16, 32]).unwrap();
        let b = densities(&ring, &q).unwrap();
        let one = ScalarField::constant(q.grid(), 1.0);
        assert!((integrate_manifold(&one, &b, &q).unwrap() - 3.0 * PI).abs() < 1e-12);
        let ones = vec![1.0; q.grid().base_len()];
        assert!((integrate_base(&ones, &b, &q).unwrap() - 1.0).abs() < 1e-14);
        let lengths = leaf_integrals(&one, &b, &q).unwrap();
        assert!((integrate_base(&lengths, &b, &q).unwrap() - 3.0 * PI).abs() < 1e-12);
        // the leaf through r = 1.5: sample a quadrature with a node there
        let q2 = build_quadrature(&ring, &[5, 32]).unwrap();
        let b2 = densities(&ring, &q2).unwrap();
        let one2 = ScalarField::constant(q2.grid(), 1.0);
        assert!((q2.base_node(2)[0] - 1.5).abs() < 1e-15);
        assert!((integrate_leaf(&one2, 2, &b2, &q2).unwrap() - 3.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn circle_base_integral() {
        let (q, b) = torus_setup(16);
        let ones = vec![1.0; q.grid().base_len()];
        assert!((integrate_base(&ones, &b, &q).unwrap() - TAU).abs() < 1e-13);
        assert!(integrate_base(&ones[1..], &b, &q).is_err());
    }

    #[test]
    fn leaf_index_out_of_range() {
        let (q, b) = torus_setup(8);
        let one = ScalarField::constant(q.grid(), 1.0);
        assert!(matches!(
            integrate_leaf(&one, 8, &b, &q),
            Err(Error::IndexOutOfRange { index: 8, len: 8 })
        ));
    }

    #[test]
    fn shape_mismatch_detected() {
        let (q, b) = torus_setup(8);
        let other = ScalarField::constant(&GridSpec::new(vec![8, 9], 1), 1.0);
        assert!(matches!(
            integrate_manifold(&other, &b, &q),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(ScalarField::new(q.grid().clone(), vec![1.0; 3]).is_err());
        let mut bad = vec![1.0; 64];
        bad[5] = f64::NAN;
        assert!(ScalarField::new(q.grid().clone(), bad).is_err());
    }

    #[test]
    fn spectral_convergence_on_periodic_axes() {
        // ∫ r/(1.1 + cos α) dα dβ over the torus, written as f·dμ_M
        let a = 1.1f64;
        let exact = TAU * 1.0 * TAU / (a * a - 1.0).sqrt();
        let err = |m: usize| {
            let (q, b) = torus_setup(m);
            let f = q.sample(|u| 1.0 / ((a + u[1].cos()) * (2.0 + u[1].cos())));
            (integrate_manifold(&f, &b, &q).unwrap() - exact).abs()
        };
        let (e16, e32, e64) = (err(16), err(32), err(64));
        assert!(e16 / e32 >= 100.0, "{e16} {e32}");
        assert!(e32 / e64 >= 100.0, "{e32} {e64}");
    }

    #[test]
    fn hat_is_linear() {
        let (q, b) = torus_setup(16);
        let f = q.sample(|u| (u[0] + 2.0 * u[1]).sin());
        let g = q.sample(|u| u[1].cos().powi(3) + u[0].cos());
        let (a, c) = (0.75, -2.5);
        let comb = f.zip_with(&g, |x, y| a * x + c * y).unwrap();
        let lhs = hat(&comb, &b, &q).unwrap();
        let hf = hat(&f, &b, &q).unwrap();
        let hg = hat(&g, &b, &q).unwrap();
        for ((l, x), y) in lhs.values().iter().zip(hf.values()).zip(hg.values()) {
            assert!((l - (a * x + c * y)).abs() < 1e-13);
        }
    }

    #[test]
    fn hat_is_constant_along_leaves() {
        let (q, b) = torus_setup(16);
        let f = q.sample(|u| (u[0] * u[1]).sin() + 2.0);
        let h = hat(&f, &b, &q).unwrap();
        for leaf in 0..q.grid().base_len() {
            let vals = h.leaf(leaf);
            assert!(vals.iter().all(|&v| v == vals[0]));
        }
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_input() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 4950.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
