//! Extremal function and p-modulus of a submersion foliation.
//!
//! For a foliation by the fibers of `Φ`, the extremal function is
//!
//! ```text
//! f0 = JΦ^{1/(p-1)} / hat(JΦ^{1/(p-1)})
//! ```
//!
//! and the modulus is `(∫_N hat(JΦ^{1/(p-1)})^{1-p} dμ_N)^{1/p}`. The same
//! value is obtained as `‖f0‖_p` ([`modulus_direct`]) and, independently, by
//! the optimizer module.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::DensityBundle;
use crate::quadrature::{
    integrate_base, integrate_manifold, leaf_integrals, lift, Quadrature, ScalarField,
};

/// Rejects exponents outside `(1, ∞)`.
pub fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::UnsupportedExponent(p))
    }
}

/// Hölder conjugate `q` with `1/p + 1/q = 1`.
pub fn conjugate_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

/// Per-leaf integrals of `JΦ^{1/(p-1)}`, checked to be positive.
fn powered_jacobian_integrals(
    bundle: &DensityBundle,
    quad: &Quadrature,
    p: f64,
) -> Result<(ScalarField, Vec<f64>)> {
    check_exponent(p)?;
    let e = 1.0 / (p - 1.0);
    let powered = ScalarField::new(
        bundle.grid().clone(),
        bundle.jac().iter().map(|j| j.powf(e)).collect(),
    )?;
    let integrals = leaf_integrals(&powered, bundle, quad)?;
    if let Some(b) = integrals.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::singular(
            &quad.base_node(b),
            "leaf integral of the powered Jacobian is not positive",
        ));
    }
    Ok((powered, integrals))
}

/// Closed-form extremal function `f0`.
pub fn closed_form_extremal(
    bundle: &DensityBundle,
    quad: &Quadrature,
    p: f64,
) -> Result<ScalarField> {
    let (powered, integrals) = powered_jacobian_integrals(bundle, quad, p)?;
    let denom = lift(&integrals, quad.grid())?;
    powered.zip_with(&denom, |a, b| a / b)
}

/// Modulus from the base integral.
pub fn modulus_base_formula(bundle: &DensityBundle, quad: &Quadrature, p: f64) -> Result<f64> {
    let mask = vec![true; quad.grid().base_len()];
    submodulus(bundle, quad, p, &mask)
}

/// Modulus of the subfamily of leaves over the masked base nodes.
///
/// An all-false mask selects the empty family, whose modulus is 0.
pub fn submodulus(
    bundle: &DensityBundle,
    quad: &Quadrature,
    p: f64,
    base_mask: &[bool],
) -> Result<f64> {
    let nb = quad.grid().base_len();
    if base_mask.len() != nb {
        return Err(Error::ShapeMismatch {
            expected: nb,
            found: base_mask.len(),
        });
    }
    let (_, integrals) = powered_jacobian_integrals(bundle, quad, p)?;
    let outer: Vec<f64> = integrals
        .iter()
        .zip(base_mask)
        .map(|(&v, &keep)| if keep { v.powf(1.0 - p) } else { 0.0 })
        .collect();
    Ok(integrate_base(&outer, bundle, quad)?.powf(1.0 / p))
}

/// `‖f‖_p` over the manifold.
pub fn modulus_direct(
    f0: &ScalarField,
    bundle: &DensityBundle,
    quad: &Quadrature,
    p: f64,
) -> Result<f64> {
    check_exponent(p)?;
    if f0.min() < 0.0 {
        return Err(Error::Precondition("field must be nonnegative".into()));
    }
    let powered = f0.map(|v| v.powf(p));
    Ok(integrate_manifold(&powered, bundle, quad)?.powf(1.0 / p))
}

/// `max_L |∫_L f dμ_L - 1|`.
pub fn normalization_residual(
    f: &ScalarField,
    bundle: &DensityBundle,
    quad: &Quadrature,
) -> Result<f64> {
    Ok(leaf_integrals(f, bundle, quad)?
        .iter()
        .fold(0.0, |m, v| m.max((v - 1.0).abs())))
}

/// Largest per-leaf standard deviation of the node values of `f`.
pub fn max_leaf_stddev(f: &ScalarField) -> f64 {
    let nb = f.grid().base_len();
    (0..nb)
        .map(|b| {
            let vals = f.leaf(b);
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .fold(0.0, f64::max)
}

fn relative_gap(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0)
}

/// Normalized residual of `∫ f0^{p-1} φ dμ_M = ∫ f0^p hat(φ) dμ_M`.
pub fn integral_formula_residual(
    f0: &ScalarField,
    phi: &ScalarField,
    bundle: &DensityBundle,
    quad: &Quadrature,
    p: f64,
) -> Result<f64> {
    check_exponent(p)?;
    if phi.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("test function is not finite".into()));
    }
    let phi_hat = crate::quadrature::hat(phi, bundle, quad)?;
    let lhs_field = f0.zip_with(phi, |f, v| f.powf(p - 1.0) * v)?;
    let rhs_field = f0.zip_with(&phi_hat, |f, v| f.powf(p) * v)?;
    let lhs = integrate_manifold(&lhs_field, bundle, quad)?;
    let rhs = integrate_manifold(&rhs_field, bundle, quad)?;
    Ok(relative_gap(lhs, rhs))
}

/// Largest `t` allowed by the perturbation bound `t < 1 / (2 sup|hat φ|)`.
pub fn perturbation_bound(
    phi: &ScalarField,
    bundle: &DensityBundle,
    quad: &Quadrature,
) -> Result<f64> {
    let sup = crate::quadrature::hat(phi, bundle, quad)?.sup_abs();
    Ok(if sup > 0.0 { 0.5 / sup } else { f64::INFINITY })
}

/// Norm increase of the admissible perturbations
/// `f_t^± = (f0 ± tφ) / (1 ± t hat(φ))` over `f0`.
///
/// Returns `(‖f_t^+‖_p - ‖f0‖_p, ‖f_t^-‖_p - ‖f0‖_p)`; both are nonnegative
/// (up to rounding) when `f0` is extremal.
pub fn perturbation_extremality(
    f0: &ScalarField,
    phi: &ScalarField,
    bundle: &DensityBundle,
    quad: &Quadrature,
    p: f64,
    t: f64,
) -> Result<(f64, f64)> {
    check_exponent(p)?;
    let bound = perturbation_bound(phi, bundle, quad)?;
    if !(t >= 0.0 && t < bound) {
        return Err(Error::Precondition(format!(
            "perturbation size t = {t} outside [0, {bound})"
        )));
    }
    let phi_hat = crate::quadrature::hat(phi, bundle, quad)?;
    let base = modulus_direct(f0, bundle, quad, p)?;
    let mut diffs = [0.0; 2];
    for (slot, sign) in diffs.iter_mut().zip([1.0, -1.0]) {
        let num = f0.zip_with(phi, |f, v| f + sign * t * v)?;
        if num.min() < 0.0 {
            return Err(Error::Precondition(format!(
                "f0 {} t·φ is negative somewhere for t = {t}",
                if sign > 0.0 { "+" } else { "-" }
            )));
        }
        let perturbed = num.zip_with(&phi_hat, |a, h| a / (1.0 + sign * t * h))?;
        *slot = modulus_direct(&perturbed, bundle, quad, p)? - base;
    }
    Ok((diffs[0], diffs[1]))
}

/// Wall-clock timings of a report run, in seconds.
#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub densities: f64,
    pub closed_form: f64,
    pub optimizer: f64,
}

/// Modulus values from every route plus the residuals of the checks run on
/// them.
#[derive(Debug, Clone, Serialize)]
pub struct ModulusReport {
    pub chart: String,
    pub grid: Vec<usize>,
    pub p: f64,
    pub q: f64,
    pub mod_closed: f64,
    pub mod_direct: f64,
    pub mod_opt: Option<f64>,
    pub norm_residual: f64,
    pub norm_residual_opt: Option<f64>,
    pub min_f0: f64,
    pub coarea_residual: f64,
    pub intformula_residuals: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl ModulusReport {
    /// Largest relative disagreement among the available modulus routes.
    pub fn cross_route_gap(&self) -> f64 {
        let mut vals = vec![self.mod_closed, self.mod_direct];
        vals.extend(self.mod_opt);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        (hi - lo) / hi.abs().max(f64::MIN_POSITIVE)
    }
}
