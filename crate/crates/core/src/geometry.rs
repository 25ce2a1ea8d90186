//! Foliated Riemannian charts and pointwise geometry.
//!
//! A [`FoliatedChart`] is a box in parameter space `u = (y, t)` carrying a
//! Riemannian metric `g(u)`. The first `dim_base` coordinates `y` are the
//! coordinates of the submersion target `N` (with its own metric `h(y)`), the
//! remaining coordinates `t` run along the leaves. The submersion is the
//! coordinate projection `(y, t) -> y`, so every leaf is a grid-aligned slice
//! `{y = const}`.
//!
//! The tangent space splits g-orthogonally into the vertical part (spanned by
//! the leaf-coordinate directions, the kernel of the differential of the
//! submersion) and its horizontal complement. The Jacobian of the submersion
//! is the volume distortion of the differential restricted to the horizontal
//! space.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::{GridSpec, Quadrature};

/// Pointwise metric data of a chart.
///
/// Implementations must be pure: the same input always yields the same matrix.
pub trait MetricModel: Send + Sync + fmt::Debug {
    /// Metric `g(u)` on the full parameter space, an `n x n` SPD matrix.
    fn metric(&self, u: &[f64]) -> DMatrix<f64>;

    /// Metric `h(y)` on the base, a `b x b` SPD matrix.
    fn base_metric(&self, y: &[f64]) -> DMatrix<f64>;
}

/// Closed interval `[lo, hi]` of one chart parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Tolerance for periodic endpoint matching of the metric.
const PERIODIC_MATCH_TOL: f64 = 1e-12;

/// A parametrized Riemannian manifold foliated by the fibers of a coordinate
/// projection.
#[derive(Clone)]
pub struct FoliatedChart {
    name: String,
    dim_base: usize,
    bounds: Vec<Interval>,
    periodic: Vec<bool>,
    model: Arc<dyn MetricModel>,
}

impl fmt::Debug for FoliatedChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FoliatedChart")
            .field("name", &self.name)
            .field("dim_total", &self.dim_total())
            .field("dim_base", &self.dim_base)
            .field("bounds", &self.bounds)
            .field("periodic", &self.periodic)
            .finish()
    }
}

impl FoliatedChart {
    /// Builds a chart and validates its structural invariants.
    ///
    /// Periodic axes are checked for matching metric values at both ends of
    /// the axis on a handful of sample points.
    pub fn new(
        name: impl Into<String>,
        dim_base: usize,
        bounds: Vec<Interval>,
        periodic: Vec<bool>,
        model: Arc<dyn MetricModel>,
    ) -> Result<Self> {
        let n = bounds.len();
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "manifold dimension must be at least 2, got {n}"
            )));
        }
        if dim_base == 0 || dim_base >= n {
            return Err(Error::InvalidParameter(format!(
                "base dimension must satisfy 1 <= b < n = {n}, got {dim_base}"
            )));
        }
        if periodic.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                found: periodic.len(),
            });
        }
        for (axis, iv) in bounds.iter().enumerate() {
            if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo < iv.hi) {
                return Err(Error::InvalidParameter(format!(
                    "axis {axis}: interval [{}, {}] is empty or not finite",
                    iv.lo, iv.hi
                )));
            }
        }
        let chart = Self {
            name: name.into(),
            dim_base,
            bounds,
            periodic,
            model,
        };
        chart.check_periodic_endpoints()?;
        Ok(chart)
    }

    fn check_periodic_endpoints(&self) -> Result<()> {
        const SAMPLES: [f64; 3] = [0.25, 0.5, 0.75];
        for axis in (0..self.dim_total()).filter(|&a| self.periodic[a]) {
            for &s in &SAMPLES {
                let mut u: Vec<f64> = self.bounds.iter().map(|iv| iv.lo + s * iv.len()).collect();
                u[axis] = self.bounds[axis].lo;
                let g_lo = self.model.metric(&u);
                u[axis] = self.bounds[axis].hi;
                let g_hi = self.model.metric(&u);
                let scale = g_lo.amax().max(1.0);
                if (g_lo - g_hi).amax() > PERIODIC_MATCH_TOL * scale {
                    return Err(Error::InvalidParameter(format!(
                        "metric does not match across the periodic ends of axis {axis}"
                    )));
                }
                if axis < self.dim_base {
                    let y = &u[..self.dim_base];
                    let mut y_lo = y.to_vec();
                    y_lo[axis] = self.bounds[axis].lo;
                    let h_lo = self.model.base_metric(&y_lo);
                    let h_hi = self.model.base_metric(y);
                    let scale = h_lo.amax().max(1.0);
                    if (h_lo - h_hi).amax() > PERIODIC_MATCH_TOL * scale {
                        return Err(Error::InvalidParameter(format!(
                            "base metric does not match across the periodic ends of axis {axis}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Manifold dimension `n`.
    pub fn dim_total(&self) -> usize {
        self.bounds.len()
    }

    /// Dimension `b` of the submersion target.
    pub fn dim_base(&self) -> usize {
        self.dim_base
    }

    /// Leaf dimension `n - b`.
    pub fn dim_leaf(&self) -> usize {
        self.dim_total() - self.dim_base
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn model(&self) -> &Arc<dyn MetricModel> {
        &self.model
    }

    /// True when every leaf axis is periodic, i.e. the leaves are closed.
    pub fn has_closed_leaves(&self) -> bool {
        self.periodic[self.dim_base..].iter().all(|&p| p)
    }

    /// Wraps periodic coordinates into the box and rejects points outside it.
    pub fn normalize_point(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.dim_total() {
            return Err(Error::ShapeMismatch {
                expected: self.dim_total(),
                found: u.len(),
            });
        }
        u.iter()
            .zip(self.bounds.iter().zip(&self.periodic))
            .enumerate()
            .map(|(axis, (&x, (iv, &per)))| {
                if per {
                    Ok(iv.lo + (x - iv.lo).rem_euclid(iv.len()))
                } else if x.is_finite() && x >= iv.lo && x <= iv.hi {
                    Ok(x)
                } else {
                    Err(Error::Domain {
                        axis,
                        point: u.to_vec(),
                    })
                }
            })
            .collect()
    }

    /// Metric `g(u)`, symmetrized.
    pub fn eval_metric(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let u = self.normalize_point(u)?;
        Ok(symmetrize(self.model.metric(&u)))
    }

    /// Base metric `h(y)`, symmetrized. `y` holds the base coordinates only.
    pub fn eval_base_metric(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        if y.len() != self.dim_base {
            return Err(Error::ShapeMismatch {
                expected: self.dim_base,
                found: y.len(),
            });
        }
        let mut u: Vec<f64> = self.bounds.iter().map(Interval::mid).collect();
        u[..self.dim_base].copy_from_slice(y);
        let u = self.normalize_point(&u)?;
        Ok(symmetrize(self.model.base_metric(&u[..self.dim_base])))
    }

    /// Same chart with the base metric replaced by `s(y)^2 h(y)`.
    pub fn with_base_scale<S>(&self, scale: S) -> FoliatedChart
    where
        S: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        FoliatedChart {
            name: format!("{}+rescaled-base", self.name),
            dim_base: self.dim_base,
            bounds: self.bounds.clone(),
            periodic: self.periodic.clone(),
            model: Arc::new(RescaledBase {
                inner: Arc::clone(&self.model),
                scale: Box::new(scale),
            }),
        }
    }
}

type BaseScale = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

struct RescaledBase {
    inner: Arc<dyn MetricModel>,
    scale: BaseScale,
}

impl fmt::Debug for RescaledBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RescaledBase")
            .field("inner", &self.inner)
            .finish_non_exhaustive()
    }
}

impl MetricModel for RescaledBase {
    fn metric(&self, u: &[f64]) -> DMatrix<f64> {
        self.inner.metric(u)
    }

    fn base_metric(&self, y: &[f64]) -> DMatrix<f64> {
        let s = (self.scale)(y);
        self.inner.base_metric(y) * (s * s)
    }
}

fn symmetrize(g: DMatrix<f64>) -> DMatrix<f64> {
    let gt = g.transpose();
    (g + gt) * 0.5
}

/// `sqrt(det A)` for an SPD matrix, or `None` if `A` is not positive-definite.
pub(crate) fn sqrt_det_spd(a: &DMatrix<f64>) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    let d = chol.l_dirty().diagonal().product();
    (d.is_finite() && d > 0.0).then_some(d)
}

/// g-orthonormal frame adapted to the vertical/horizontal splitting at a point.
///
/// Columns of `vertical` span the leaf tangent space, columns of `horizontal`
/// its g-orthogonal complement. Both are g-orthonormal.
#[derive(Debug, Clone)]
pub struct AdaptedFrame {
    pub vertical: DMatrix<f64>,
    pub horizontal: DMatrix<f64>,
}

impl AdaptedFrame {
    /// g-orthogonal projection onto the vertical subspace.
    pub fn vertical_projector(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        &self.vertical * self.vertical.transpose() * g
    }
}

/// Pivots below this fraction of the metric scale are treated as degenerate.
const PIVOT_TOL: f64 = 1e-13;

/// Builds the adapted frame by Gram-Schmidt in the g inner product.
///
/// The leaf-coordinate basis vectors are orthonormalized first; then the
/// base-coordinate basis vectors, taken in `base_order`, are orthogonalized
/// against the vertical space and against each other. Each vector is
/// orthogonalized twice to keep the frame accurate to rounding.
pub fn adapted_frame(
    g: &DMatrix<f64>,
    dim_base: usize,
    base_order: &[usize],
) -> std::result::Result<AdaptedFrame, String> {
    let n = g.nrows();
    if base_order.len() != dim_base {
        return Err(format!(
            "horizontal ordering has {} entries, expected {dim_base}",
            base_order.len()
        ));
    }
    let ip = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(g * b));
    let scale = g.diagonal().amax();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
    let axes = (dim_base..n).chain(base_order.iter().copied());
    for axis in axes {
        let mut v = DVector::zeros(n);
        v[axis] = 1.0;
        let raw = ip(&v, &v);
        for _ in 0..2 {
            for e in &basis {
                let c = ip(e, &v);
                v -= e * c;
            }
        }
        let norm2 = ip(&v, &v);
        if norm2.partial_cmp(&(PIVOT_TOL * scale.max(raw))) != Some(std::cmp::Ordering::Greater) {
            return Err(format!("degenerate Gram-Schmidt pivot on axis {axis}"));
        }
        v /= norm2.sqrt();
        basis.push(v);
    }
    let k = n - dim_base;
    let vertical = DMatrix::from_columns(&basis[..k]);
    let horizontal = DMatrix::from_columns(&basis[k..]);
    Ok(AdaptedFrame {
        vertical,
        horizontal,
    })
}

/// Jacobian of the coordinate submersion from its metric data and a
/// horizontal ordering.
pub fn jacobian_from_metrics(
    g: &DMatrix<f64>,
    h: &DMatrix<f64>,
    base_order: &[usize],
) -> std::result::Result<f64, String> {
    let b = h.nrows();
    let frame = adapted_frame(g, b, base_order)?;
    // The differential keeps the y-components of each horizontal vector.
    let push = frame.horizontal.rows(0, b).into_owned();
    let gram = push.transpose() * h * push;
    sqrt_det_spd(&gram).ok_or_else(|| "pushed-forward Gram matrix is not positive".to_string())
}

/// Metric at a point, checked to be positive-definite.
pub(crate) fn checked_metric(chart: &FoliatedChart, u: &[f64]) -> Result<DMatrix<f64>> {
    let g = chart.eval_metric(u)?;
    if sqrt_det_spd(&g).is_none() {
        return Err(Error::singular(u, "metric is not positive-definite"));
    }
    Ok(g)
}

/// Adapted frame of the chart at `u`, with the default horizontal ordering.
pub fn frame_at(chart: &FoliatedChart, u: &[f64]) -> Result<(DMatrix<f64>, AdaptedFrame)> {
    let g = checked_metric(chart, u)?;
    let order: Vec<usize> = (0..chart.dim_base()).collect();
    let frame = adapted_frame(&g, chart.dim_base(), &order).map_err(|e| Error::singular(u, e))?;
    Ok((g, frame))
}

/// Jacobian `JΦ(u)` of the submersion at `u`.
pub fn jacobian(chart: &FoliatedChart, u: &[f64]) -> Result<f64> {
    let order: Vec<usize> = (0..chart.dim_base()).collect();
    jacobian_with_order(chart, u, &order)
}

/// Jacobian computed with the horizontal Gram-Schmidt run in `base_order`.
pub fn jacobian_with_order(chart: &FoliatedChart, u: &[f64], base_order: &[usize]) -> Result<f64> {
    let g = checked_metric(chart, u)?;
    let u = chart.normalize_point(u)?;
    let h = chart.eval_base_metric(&u[..chart.dim_base()])?;
    if sqrt_det_spd(&h).is_none() {
        return Err(Error::singular(&u, "base metric is not positive-definite"));
    }
    jacobian_from_metrics(&g, &h, base_order).map_err(|e| Error::singular(&u, e))
}

/// Geometric densities sampled on a quadrature grid.
///
/// Immutable once built; shared freely between threads.
#[derive(Debug, Clone)]
pub struct DensityBundle {
    grid: GridSpec,
    man_density: Vec<f64>,
    leaf_density: Vec<f64>,
    base_density: Vec<f64>,
    jac: Vec<f64>,
    coarea_residual: f64,
}

impl DensityBundle {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `sqrt(det g)` per full-grid node.
    pub fn man_density(&self) -> &[f64] {
        &self.man_density
    }

    /// `sqrt(det g_tt)` per full-grid node.
    pub fn leaf_density(&self) -> &[f64] {
        &self.leaf_density
    }

    /// `sqrt(det h)` per base node.
    pub fn base_density(&self) -> &[f64] {
        &self.base_density
    }

    /// `JΦ` per full-grid node.
    pub fn jac(&self) -> &[f64] {
        &self.jac
    }

    /// Relative residual of the coarea self-check run at construction.
    pub fn coarea_residual(&self) -> f64 {
        self.coarea_residual
    }
}

struct NodeDensities {
    man: f64,
    leaf: f64,
    jac: f64,
}

fn node_densities(chart: &FoliatedChart, u: &[f64]) -> Result<NodeDensities> {
    let b = chart.dim_base();
    let g = chart.eval_metric(u)?;
    let man =
        sqrt_det_spd(&g).ok_or_else(|| Error::singular(u, "metric is not positive-definite"))?;
    let k = chart.dim_leaf();
    let g_tt = g.view((b, b), (k, k)).into_owned();
    // A principal block of an SPD matrix is SPD.
    let leaf = sqrt_det_spd(&g_tt)
        .ok_or_else(|| Error::singular(u, "leaf block of the metric is not positive-definite"))?;
    let h = chart.eval_base_metric(&u[..b])?;
    let order: Vec<usize> = (0..b).collect();
    let jac = jacobian_from_metrics(&g, &h, &order).map_err(|e| Error::singular(u, e))?;
    if !(jac > 0.0 && jac.is_finite()) {
        return Err(Error::singular(u, "non-positive Jacobian"));
    }
    Ok(NodeDensities { man, leaf, jac })
}

/// Smooth positive field used for the coarea self-check.
fn coarea_probe(chart: &FoliatedChart, u: &[f64]) -> f64 {
    let phase: f64 = u
        .iter()
        .zip(chart.bounds())
        .enumerate()
        .map(|(i, (&x, iv))| {
            let s = std::f64::consts::TAU * (x - iv.lo) / iv.len();
            (s + 0.3 * i as f64).sin()
        })
        .sum();
    (0.5 * phase).exp()
}

/// Samples all densities on the quadrature grid and runs the coarea self-check.
pub fn densities(chart: &FoliatedChart, quad: &Quadrature) -> Result<DensityBundle> {
    let grid = quad.grid().clone();
    if grid.counts().len() != chart.dim_total() || grid.dim_base() != chart.dim_base() {
        return Err(Error::ShapeMismatch {
            expected: chart.dim_total(),
            found: grid.counts().len(),
        });
    }
    let nodes: Vec<NodeDensities> = (0..grid.len())
        .into_par_iter()
        .map(|idx| node_densities(chart, &quad.node(idx)))
        .collect::<Result<_>>()?;

    let base_density = (0..grid.base_len())
        .map(|bidx| {
            let y = quad.base_node(bidx);
            let h = chart.eval_base_metric(&y)?;
            sqrt_det_spd(&h)
                .ok_or_else(|| Error::singular(&y, "base metric is not positive-definite"))
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut bundle = DensityBundle {
        grid,
        man_density: nodes.iter().map(|d| d.man).collect(),
        leaf_density: nodes.iter().map(|d| d.leaf).collect(),
        base_density,
        jac: nodes.iter().map(|d| d.jac).collect(),
        coarea_residual: f64::NAN,
    };
    let probe = quad.sample(|u| coarea_probe(chart, u));
    bundle.coarea_residual = crate::quadrature::coarea_residual(&probe, &bundle, quad)?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn torus_metric_at_origin() {
        let torus = gallery::make_torus(2.0, 1.0).unwrap();
        let g = torus.eval_metric(&[0.0, 0.0]).unwrap();
        assert!((g[(0, 0)] - 9.0).abs() < 1e-14);
        assert!((g[(1, 1)] - 1.0).abs() < 1e-14);
        assert_eq!(g[(0, 1)], 0.0);
    }

    #[test]
    fn annulus_metric_is_polar() {
        let ring = gallery::make_ring(2, 1.0, 2.0).unwrap();
        let g = ring.eval_metric(&[1.5, 0.0]).unwrap();
        assert!((g[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((g[(1, 1)] - 2.25).abs() < 1e-14);
    }

    #[test]
    fn flat_product_metric_is_identity() {
        let chart = gallery::make_product(
            &[Interval::new(0.0, 1.0)],
            &[Interval::new(0.0, 1.0)],
            gallery::Warp::None,
        )
        .unwrap();
        let g = chart.eval_metric(&[0.3, 0.7]).unwrap();
        assert_eq!(g, DMatrix::identity(2, 2));
    }

    #[test]
    fn metric_outside_box_is_domain_error() {
        let ring = gallery::make_ring(2, 1.0, 2.0).unwrap();
        assert!(matches!(
            ring.eval_metric(&[2.5, 0.0]),
            Err(Error::Domain { axis: 0, .. })
        ));
        // the angular axis wraps
        let g = ring.eval_metric(&[1.5, 7.0 * PI]).unwrap();
        assert!((g[(1, 1)] - 2.25).abs() < 1e-14);
    }

    #[test]
    fn torus_jacobian() {
        let torus = gallery::make_torus(2.0, 1.0).unwrap();
        let j = jacobian(&torus, &[0.0, 0.0]).unwrap();
        assert!((j - 1.0 / 3.0).abs() < 1e-14);
        let j = jacobian(&torus, &[1.0, FRAC_PI_2]).unwrap();
        assert!((j - 0.5).abs() < 1e-14);
    }

    #[test]
    fn annulus_jacobian_is_one() {
        let ring = gallery::make_ring(2, 1.0, 2.0).unwrap();
        for u in [[1.1, 0.2], [1.5, 3.0], [1.9, 6.0]] {
            assert!((jacobian(&ring, &u).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[derive(Debug)]
    struct Sheared;

    impl MetricModel for Sheared {
        fn metric(&self, u: &[f64]) -> DMatrix<f64> {
            // pullback of the Euclidean metric under a smooth shear map
            let a = DMatrix::from_row_slice(
                3,
                3,
                &[
                    1.0,
                    0.3 * u[2].cos(),
                    0.1,
                    0.2 * u[1].sin(),
                    1.5,
                    0.4 * u[2].sin(),
                    0.0,
                    0.25,
                    1.0 + 0.5 * u[0],
                ],
            );
            a.transpose() * a
        }

        fn base_metric(&self, y: &[f64]) -> DMatrix<f64> {
            DMatrix::from_row_slice(2, 2, &[2.0 + y[0].sin(), 0.3, 0.3, 1.0])
        }
    }

    fn sheared_chart() -> FoliatedChart {
        FoliatedChart::new(
            "sheared",
            2,
            vec![
                Interval::new(0.0, 1.0),
                Interval::new(0.0, 1.0),
                Interval::new(0.0, 1.0),
            ],
            vec![false; 3],
            Arc::new(Sheared),
        )
        .unwrap()
    }

    #[test]
    fn jacobian_independent_of_horizontal_ordering() {
        let chart = sheared_chart();
        for u in [[0.1, 0.2, 0.3], [0.7, 0.4, 0.9], [0.5, 0.5, 0.5]] {
            let a = jacobian_with_order(&chart, &u, &[0, 1]).unwrap();
            let b = jacobian_with_order(&chart, &u, &[1, 0]).unwrap();
            assert!((a - b).abs() <= 1e-12 * a, "{a} vs {b}");
        }
    }

    #[test]
    fn jacobian_matches_inverse_metric_formula() {
        // JΦ^2 = det(h * (g^{-1})_{yy}) is an independent route to the Jacobian.
        let chart = sheared_chart();
        let u = [0.3, 0.6, 0.2];
        let g = chart.eval_metric(&u).unwrap();
        let h = chart.eval_base_metric(&u[..2]).unwrap();
        let ginv = g.try_inverse().unwrap();
        let expected = (h * ginv.view((0, 0), (2, 2))).determinant().sqrt();
        let j = jacobian(&chart, &u).unwrap();
        assert!((j - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn base_metric_rescaling_scales_jacobian() {
        let chart = sheared_chart();
        let u = [0.3, 0.6, 0.2];
        let j0 = jacobian(&chart, &u).unwrap();
        let doubled = chart.with_base_scale(|_| 2.0);
        let j1 = jacobian(&doubled, &u).unwrap();
        assert!((j1 - 4.0 * j0).abs() < 1e-12 * j1);
        let s = |y: &[f64]| 1.0 + 0.5 * y[0] * y[1] + y[1].cos();
        let warped = chart.with_base_scale(s);
        let j2 = jacobian(&warped, &u).unwrap();
        let sv = s(&u[..2]);
        assert!((j2 - sv * sv * j0).abs() < 1e-12 * j2);
    }

    #[test]
    fn frame_is_orthonormal_and_projector_is_self_adjoint() {
        let chart = sheared_chart();
        let (g, frame) = frame_at(&chart, &[0.4, 0.1, 0.8]).unwrap();
        let all = DMatrix::from_columns(
            &frame
                .vertical
                .column_iter()
                .chain(frame.horizontal.column_iter())
                .map(|c| c.into_owned())
                .collect::<Vec<_>>(),
        );
        let gram = all.transpose() * &g * &all;
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-12);
        let p = frame.vertical_projector(&g);
        assert!((&p * &p - &p).amax() < 1e-12);
        // g-self-adjoint: g P = (g P)^T
        let gp = &g * &p;
        assert!((&gp - gp.transpose()).amax() < 1e-12);
    }

    #[test]
    fn degenerate_metric_is_reported() {
        #[derive(Debug)]
        struct Flat0;
        impl MetricModel for Flat0 {
            fn metric(&self, u: &[f64]) -> DMatrix<f64> {
                DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, u[1]]))
            }
            fn base_metric(&self, _y: &[f64]) -> DMatrix<f64> {
                DMatrix::identity(1, 1)
            }
        }
        let chart = FoliatedChart::new(
            "degenerate",
            1,
            vec![Interval::new(0.0, 1.0), Interval::new(0.0, 1.0)],
            vec![false, false],
            Arc::new(Flat0),
        )
        .unwrap();
        assert!(matches!(
            jacobian(&chart, &[0.5, 0.0]),
            Err(Error::SingularGeometry { .. })
        ));
    }

    #[test]
    fn mismatched_periodic_metric_rejected() {
        #[derive(Debug)]
        struct Ramp;
        impl MetricModel for Ramp {
            fn metric(&self, u: &[f64]) -> DMatrix<f64> {
                DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0 + u[1]]))
            }
            fn base_metric(&self, _y: &[f64]) -> DMatrix<f64> {
                DMatrix::identity(1, 1)
            }
        }
        let res = FoliatedChart::new(
            "ramp",
            1,
            vec![Interval::new(0.0, 1.0), Interval::new(0.0, 1.0)],
            vec![false, true],
            Arc::new(Ramp),
        );
        assert!(matches!(res, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn bad_dimensions_rejected() {
        let model: Arc<dyn MetricModel> = Arc::new(Sheared);
        let iv = Interval::new(0.0, 1.0);
        assert!(FoliatedChart::new("x", 0, vec![iv; 3], vec![false; 3], model.clone()).is_err());
        assert!(FoliatedChart::new("x", 3, vec![iv; 3], vec![false; 3], model.clone()).is_err());
        let empty = Interval::new(1.0, 1.0);
        assert!(FoliatedChart::new("x", 1, vec![iv, iv, empty], vec![false; 3], model).is_err());
    }
}
