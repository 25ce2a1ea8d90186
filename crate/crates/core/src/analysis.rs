//! Differential-geometric checks on the extremal function.
//!
//! * [`mean_curvature_orthogonal`]: mean curvature `Σ_i (∇_{E_i} E_i)^⊤` of the
//!   distribution orthogonal to the leaves, from Christoffel symbols and a
//!   finite-difference derivative of the horizontal frame.
//! * [`tangential_grad_log`]: `(p-1) (∇ ln f0)^⊤` from grid derivatives of the
//!   sampled extremal function. The two agree for the extremal function.
//! * [`leafwise_laplacian`] and [`harmonic_residual`]: the leafwise
//!   Laplace-Beltrami operator and the harmonicity of `f0^{p-1} μ_M`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{adapted_frame, frame_at, DensityBundle, FoliatedChart};
use crate::modulus::check_exponent;
use crate::quadrature::{
    integrate_manifold, AxisQuadrature, AxisRule, GridSpec, Quadrature, ScalarField,
};

/// Relative step for central differences of the metric and the frame.
pub fn fd_relative_step() -> f64 {
    1e-5f64.max(f64::EPSILON.cbrt())
}

fn fd_steps(chart: &FoliatedChart) -> Vec<f64> {
    chart
        .bounds()
        .iter()
        .map(|iv| iv.len() * fd_relative_step())
        .collect()
}

/// Christoffel symbols `Γ^k_{ij}` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// `Γ^k_{ij}`.
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    /// `Γ(X, Y)^k = Γ^k_{ij} X^i Y^j`.
    pub fn contract(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n, |k, _| {
            let mut s = 0.0;
            for i in 0..self.n {
                for j in 0..self.n {
                    s += self.get(k, i, j) * x[i] * y[j];
                }
            }
            s
        })
    }
}

/// Christoffel symbols from central differences of the metric with per-axis
/// steps `steps` (defaults to [`fd_relative_step`] times the axis length).
pub fn christoffels(
    chart: &FoliatedChart,
    u: &[f64],
    steps: Option<&[f64]>,
) -> Result<Christoffel> {
    let n = chart.dim_total();
    let default_steps;
    let steps = match steps {
        Some(s) => s,
        None => {
            default_steps = fd_steps(chart);
            &default_steps
        }
    };
    let g = chart.eval_metric(u)?;
    let ginv = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::singular(u, "metric is not positive-definite"))?
        .inverse();
    let u = chart.normalize_point(u)?;
    // dg[l] = ∂_l g
    let dg: Vec<DMatrix<f64>> = (0..n)
        .map(|l| {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[l] += steps[l];
            dn[l] -= steps[l];
            (chart.model().metric(&up) - chart.model().metric(&dn)) / (2.0 * steps[l])
        })
        .collect();
    let mut data = vec![0.0; n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                data[(k * n + i) * n + j] = 0.5 * s;
                data[(k * n + j) * n + i] = 0.5 * s;
            }
        }
    }
    Ok(Christoffel { n, data })
}

/// Vector field sampled on the grid, as chart-coordinate components.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVectorField {
    grid: GridSpec,
    dim: usize,
    values: Vec<f64>,
    vertical: bool,
}

impl TangentVectorField {
    fn from_nodes(grid: GridSpec, dim: usize, nodes: Vec<DVector<f64>>, vertical: bool) -> Self {
        let values = nodes.iter().flat_map(|v| v.iter().copied()).collect();
        Self {
            grid,
            dim,
            values,
            vertical,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether the field is tangent to the leaves.
    pub fn is_vertical(&self) -> bool {
        self.vertical
    }

    /// Components at a node.
    pub fn at(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Largest pointwise g-norm of `self - other`.
    pub fn max_distance(
        &self,
        other: &TangentVectorField,
        chart: &FoliatedChart,
        quad: &Quadrature,
    ) -> Result<f64> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(Error::ShapeMismatch {
                expected: self.values.len(),
                found: other.values.len(),
            });
        }
        (0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                let g = chart.eval_metric(&quad.node(idx))?;
                let d = DVector::from_fn(self.dim, |c, _| self.at(idx)[c] - other.at(idx)[c]);
                Ok(d.dot(&(&g * &d)).max(0.0).sqrt())
            })
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
    }

    /// Largest pointwise g-norm of the field.
    pub fn max_norm(&self, chart: &FoliatedChart, quad: &Quadrature) -> Result<f64> {
        let zero = TangentVectorField {
            values: vec![0.0; self.values.len()],
            ..self.clone()
        };
        self.max_distance(&zero, chart, quad)
    }
}

/// Mean curvature of the orthogonal distribution at `u`.
///
/// Sums `∇_{E_i} E_i` over the g-orthonormal horizontal frame and projects
/// g-orthogonally onto the leaf tangent space. No `1/b` averaging.
pub fn mean_curvature_orthogonal(chart: &FoliatedChart, u: &[f64]) -> Result<DVector<f64>> {
    let n = chart.dim_total();
    let b = chart.dim_base();
    let (g, frame) = frame_at(chart, u)?;
    let u = chart.normalize_point(u)?;
    let gamma = christoffels(chart, &u, None)?;
    let steps = fd_steps(chart);
    let order: Vec<usize> = (0..b).collect();
    let frame_near = |v: &[f64]| -> Result<DMatrix<f64>> {
        let gv = chart.model().metric(v);
        let gv = (&gv + gv.transpose()) * 0.5;
        adapted_frame(&gv, b, &order)
            .map(|f| f.horizontal)
            .map_err(|e| Error::singular(v, e))
    };
    // d_frame[l] = ∂_l (horizontal frame)
    let d_frame: Vec<DMatrix<f64>> = (0..n)
        .map(|l| {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[l] += steps[l];
            dn[l] -= steps[l];
            Ok((frame_near(&up)? - frame_near(&dn)?) / (2.0 * steps[l]))
        })
        .collect::<Result<_>>()?;
    let mut acc = DVector::zeros(n);
    for i in 0..b {
        let e = frame.horizontal.column(i).into_owned();
        for (l, dl) in d_frame.iter().enumerate() {
            acc += dl.column(i) * e[l];
        }
        acc += gamma.contract(&e, &e);
    }
    Ok(frame.vertical_projector(&g) * acc)
}

/// [`mean_curvature_orthogonal`] at every grid node.
pub fn mean_curvature_field(
    chart: &FoliatedChart,
    quad: &Quadrature,
) -> Result<TangentVectorField> {
    let nodes = (0..quad.grid().len())
        .into_par_iter()
        .map(|idx| mean_curvature_orthogonal(chart, &quad.node(idx)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TangentVectorField::from_nodes(
        quad.grid().clone(),
        chart.dim_total(),
        nodes,
        true,
    ))
}

/// Discretization of first derivatives of grid fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeScheme {
    /// Trigonometric (spectral) differentiation on periodic axes, fourth-order
    /// finite differences on the others.
    #[default]
    Spectral,
    /// Fourth-order finite differences on every axis.
    FiniteDifference,
}

/// Spectral differentiation matrix on `m` equispaced nodes of a period `len`.
fn spectral_matrix(m: usize, len: f64) -> DMatrix<f64> {
    let scale = std::f64::consts::TAU / len;
    DMatrix::from_fn(m, m, |j, k| {
        if j == k {
            return 0.0;
        }
        let d = j as f64 - k as f64;
        let sign = if (j + k) % 2 == 0 { 1.0 } else { -1.0 };
        let x = d * std::f64::consts::PI / m as f64;
        let kernel = if m.is_multiple_of(2) {
            1.0 / x.tan()
        } else {
            1.0 / x.sin()
        };
        0.5 * sign * kernel * scale
    })
}

/// Finite-difference weights for the first derivative at `z` on the nodes
/// `xs` (Fornberg's recursion).
fn fornberg_first_derivative(z: f64, xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    // c[j][k]: weight of node j for derivative order k (k = 0, 1)
    let mut c = vec![[0.0f64; 2]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|w| w[1]).collect()
}

/// Dense first-derivative operator along one axis.
fn axis_derivative_matrix(
    axis: &AxisQuadrature,
    periodic: bool,
    scheme: DerivativeScheme,
) -> DMatrix<f64> {
    let m = axis.len();
    let len = axis.hi - axis.lo;
    match (periodic, scheme) {
        (true, DerivativeScheme::Spectral) => spectral_matrix(m, len),
        (true, DerivativeScheme::FiniteDifference) => {
            let h = len / m as f64;
            let mut d = DMatrix::zeros(m, m);
            for j in 0..m {
                let at = |o: isize| (j as isize + o).rem_euclid(m as isize) as usize;
                d[(j, at(-2))] += 1.0 / (12.0 * h);
                d[(j, at(-1))] -= 8.0 / (12.0 * h);
                d[(j, at(1))] += 8.0 / (12.0 * h);
                d[(j, at(2))] -= 1.0 / (12.0 * h);
            }
            d
        }
        (false, _) => {
            // five-point stencils, centered where possible
            let width = 5.min(m);
            let mut d = DMatrix::zeros(m, m);
            for j in 0..m {
                let start = j.saturating_sub(width / 2).min(m - width);
                let w = fornberg_first_derivative(axis.nodes[j], &axis.nodes[start..start + width]);
                for (o, wk) in w.into_iter().enumerate() {
                    d[(j, start + o)] = wk;
                }
            }
            d
        }
    }
}

/// Partial derivative of grid values along `axis`.
pub fn partial_derivative(
    values: &[f64],
    quad: &Quadrature,
    axis: usize,
    periodic: bool,
    scheme: DerivativeScheme,
) -> Vec<f64> {
    let ax = &quad.axes()[axis];
    debug_assert_eq!(periodic, ax.rule == AxisRule::UniformPeriodic);
    let d = axis_derivative_matrix(ax, periodic, scheme);
    let grid = quad.grid();
    let m = grid.counts()[axis];
    let stride = grid.stride(axis);
    let block = m * stride;
    let mut out = vec![0.0; values.len()];
    for outer in 0..values.len() / block {
        for inner in 0..stride {
            let base = outer * block + inner;
            let line = DVector::from_fn(m, |j, _| values[base + j * stride]);
            let dl = &d * line;
            for j in 0..m {
                out[base + j * stride] = dl[j];
            }
        }
    }
    out
}

/// `(p-1) (∇ ln f0)^⊤`: the leaf-tangential part of the gradient of `ln f0`.
pub fn tangential_grad_log(
    f0: &ScalarField,
    chart: &FoliatedChart,
    quad: &Quadrature,
    p: f64,
    scheme: DerivativeScheme,
) -> Result<TangentVectorField> {
    check_exponent(p)?;
    if f0.grid() != quad.grid() {
        return Err(Error::ShapeMismatch {
            expected: quad.grid().len(),
            found: f0.grid().len(),
        });
    }
    if f0.min().partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Precondition(
            "extremal function must be positive to take its logarithm".into(),
        ));
    }
    let n = chart.dim_total();
    let log_f: Vec<f64> = f0.values().iter().map(|v| v.ln()).collect();
    let partials: Vec<Vec<f64>> = (0..n)
        .map(|axis| partial_derivative(&log_f, quad, axis, chart.periodic()[axis], scheme))
        .collect();
    let nodes = (0..quad.grid().len())
        .into_par_iter()
        .map(|idx| {
            let u = quad.node(idx);
            let (g, frame) = frame_at(chart, &u)?;
            let d = DVector::from_fn(n, |a, _| partials[a][idx]);
            let grad = g
                .clone()
                .cholesky()
                .ok_or_else(|| Error::singular(&u, "metric is not positive-definite"))?
                .solve(&d);
            Ok(frame.vertical_projector(&g) * grad * (p - 1.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TangentVectorField::from_nodes(
        quad.grid().clone(),
        n,
        nodes,
        true,
    ))
}

fn require_closed_leaves(chart: &FoliatedChart) -> Result<()> {
    if chart.has_closed_leaves() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "chart {:?} has non-periodic leaf axes; the leafwise Laplacian needs closed leaves",
            chart.name()
        )))
    }
}

/// Leafwise Laplace-Beltrami operator `Δ_F f = div_F (∇f)^⊤`.
///
/// On each leaf this is `(1/√det g_tt) ∂_a (√det g_tt g_tt^{ab} ∂_b f)` in the
/// leaf coordinates, differentiated spectrally.
pub fn leafwise_laplacian(
    f: &ScalarField,
    chart: &FoliatedChart,
    quad: &Quadrature,
) -> Result<ScalarField> {
    require_closed_leaves(chart)?;
    if f.grid() != quad.grid() {
        return Err(Error::ShapeMismatch {
            expected: quad.grid().len(),
            found: f.grid().len(),
        });
    }
    let b = chart.dim_base();
    let k = chart.dim_leaf();
    let scheme = DerivativeScheme::Spectral;
    let df: Vec<Vec<f64>> = (b..b + k)
        .map(|axis| partial_derivative(f.values(), quad, axis, true, scheme))
        .collect();
    // per node: sqrt(det g_tt) and the densitized leaf gradient
    let node_data = (0..quad.grid().len())
        .into_par_iter()
        .map(|idx| {
            let u = quad.node(idx);
            let g = chart.eval_metric(&u)?;
            let chol = g
                .view((b, b), (k, k))
                .into_owned()
                .cholesky()
                .ok_or_else(|| Error::singular(&u, "leaf metric is not positive-definite"))?;
            let root = chol.l_dirty().diagonal().product();
            let d = DVector::from_fn(k, |a, _| df[a][idx]);
            let flux = chol.solve(&d) * root;
            Ok((root, flux))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut lap = vec![0.0; quad.grid().len()];
    for a in 0..k {
        let flux_a: Vec<f64> = node_data.iter().map(|(_, fl)| fl[a]).collect();
        let div = partial_derivative(&flux_a, quad, b + a, true, scheme);
        lap.iter_mut().zip(div).for_each(|(l, d)| *l += d);
    }
    lap.iter_mut()
        .zip(&node_data)
        .for_each(|(l, (root, _))| *l /= root);
    // exact zero on leaves where f is constant
    let kl = quad.grid().leaf_len();
    for (vals, out) in f.values().chunks_exact(kl).zip(lap.chunks_exact_mut(kl)) {
        if vals.iter().all(|&v| v == vals[0]) {
            out.fill(0.0);
        }
    }
    ScalarField::new(quad.grid().clone(), lap)
}

/// Normalized harmonicity residual of `f0^{p-1} μ_M` against `f`:
/// `|∫ Δ_F f · f0^{p-1} dμ_M| / ∫ |Δ_F f| · f0^{p-1} dμ_M`.
pub fn harmonic_residual(
    f0: &ScalarField,
    f: &ScalarField,
    chart: &FoliatedChart,
    bundle: &DensityBundle,
    quad: &Quadrature,
    p: f64,
) -> Result<f64> {
    check_exponent(p)?;
    let lap = leafwise_laplacian(f, chart, quad)?;
    let weight = f0.map(|v| v.powf(p - 1.0));
    let signed = integrate_manifold(&lap.zip_with(&weight, |a, w| a * w)?, bundle, quad)?;
    let total = integrate_manifold(&lap.zip_with(&weight, |a, w| a.abs() * w)?, bundle, quad)?;
    Ok(if total > 0.0 {
        signed.abs() / total
    } else {
        0.0
    })
}
