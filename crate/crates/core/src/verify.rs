//! Named verification suites and report assembly.
//!
//! Every check records its measured value and the tolerance it was held to,
//! so a report is self-describing.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::analysis::{self, DerivativeScheme};
use crate::error::{Error, Result};
use crate::geometry::{densities, DensityBundle, FoliatedChart};
use crate::modulus::{self, ModulusReport, Timings};
use crate::optimizer::{solve_global, SolverConfig};
use crate::quadrature::{build_quadrature, coarea_residual, hat, Quadrature, ScalarField};
use crate::testfn::random_fields;

/// Tolerances of the individual checks.
pub mod tolerances {
    /// Relative coarea residual per test field.
    pub const COAREA: f64 = 1e-8;
    /// `max_L |∫_L f0 - 1|` for the closed form.
    pub const NORMALIZATION: f64 = 1e-10;
    /// `max_L |∫_L f - 1|` for the optimizer field.
    pub const NORMALIZATION_OPT: f64 = 1e-6;
    /// Closed-form vs direct-norm modulus, relative.
    pub const CLOSED_VS_DIRECT: f64 = 1e-8;
    /// Optimizer vs closed-form modulus, relative.
    pub const CROSS_ROUTE: f64 = 1e-6;
    /// Optimizer vs closed-form field, relative sup norm.
    pub const FIELD_AGREEMENT: f64 = 1e-5;
    /// Normalized integral-formula residual.
    pub const INTEGRAL_FORMULA: f64 = 1e-7;
    /// Admissible norm decrease under perturbation (times `‖f0‖_p`).
    pub const EXTREMALITY: f64 = 1e-9;
    /// Allowed deviation of the log-log slope of the perturbation gain from 2.
    pub const EXTREMALITY_SLOPE: f64 = 0.1;
    /// Sup g-norm distance between the two sides of the mean-curvature identity.
    pub const MEAN_CURVATURE: f64 = 1e-4;
    /// Normalized harmonic-measure residual.
    pub const HARMONIC: f64 = 1e-7;
    /// Relative partition additivity of `mod_p^p`.
    pub const ADDITIVITY: f64 = 1e-10;
}

/// Perturbation sizes of the extremality check.
pub const PERTURBATION_SIZES: [f64; 3] = [1e-1, 1e-2, 1e-3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    All,
    Coarea,
    Extremal,
    CrossRoute,
    IntegralFormula,
    Extremality,
    MeanCurvature,
    Harmonic,
    ModulusProperties,
}

impl Suite {
    pub const ALL_CHECKS: [Suite; 8] = [
        Suite::Coarea,
        Suite::Extremal,
        Suite::CrossRoute,
        Suite::IntegralFormula,
        Suite::Extremality,
        Suite::MeanCurvature,
        Suite::Harmonic,
        Suite::ModulusProperties,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::All => "all",
            Suite::Coarea => "coarea",
            Suite::Extremal => "extremal",
            Suite::CrossRoute => "cross-route",
            Suite::IntegralFormula => "integral-formula",
            Suite::Extremality => "extremality",
            Suite::MeanCurvature => "mean-curvature",
            Suite::Harmonic => "harmonic",
            Suite::ModulusProperties => "modulus-properties",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        std::iter::once(Suite::All)
            .chain(Suite::ALL_CHECKS)
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub status: Status,
    pub value: Option<f64>,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn measured(name: &str, value: f64, tolerance: f64, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            status: if pass { Status::Pass } else { Status::Fail },
            value: Some(value),
            tolerance,
            detail,
        }
    }

    fn skipped(name: &str, tolerance: f64, reason: String) -> Self {
        Self {
            name: name.to_string(),
            status: Status::Skipped,
            value: None,
            tolerance,
            detail: reason,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub chart: String,
    pub grid: Vec<usize>,
    pub p: f64,
    pub seed: u64,
    pub suite: Suite,
    pub checks: Vec<CheckOutcome>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }
}

/// Chart, grid and densities shared by every check.
#[derive(Debug, Clone)]
pub struct Context {
    pub chart: FoliatedChart,
    pub quad: Quadrature,
    pub bundle: DensityBundle,
    pub p: f64,
    pub seed: u64,
    pub solver: SolverConfig,
    densities_seconds: f64,
}

impl Context {
    pub fn new(
        chart: FoliatedChart,
        counts: &[usize],
        p: f64,
        seed: u64,
        solver: SolverConfig,
    ) -> Result<Self> {
        modulus::check_exponent(p)?;
        solver.validate()?;
        let quad = build_quadrature(&chart, counts)?;
        let start = Instant::now();
        let bundle = densities(&chart, &quad)?;
        let densities_seconds = start.elapsed().as_secs_f64();
        Ok(Self {
            chart,
            quad,
            bundle,
            p,
            seed,
            solver,
            densities_seconds,
        })
    }

    /// The same chart and grid at another exponent.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        modulus::check_exponent(p)?;
        Ok(Self { p, ..self.clone() })
    }

    pub fn extremal(&self) -> Result<ScalarField> {
        modulus::closed_form_extremal(&self.bundle, &self.quad, self.p)
    }
}

fn coarea_check(ctx: &Context) -> Result<CheckOutcome> {
    let fields = random_fields(&ctx.chart, &ctx.quad, ctx.seed, 5);
    let mut worst = ctx.bundle.coarea_residual();
    for phi in fields {
        let positive = phi.map(|v| (0.2 * v).exp());
        worst = worst.max(coarea_residual(&positive, &ctx.bundle, &ctx.quad)?);
    }
    let tol = tolerances::COAREA;
    Ok(CheckOutcome::measured(
        "coarea",
        worst,
        tol,
        worst <= tol,
        "max relative gap between the two evaluation orders over 5 positive fields".into(),
    ))
}

fn extremal_check(ctx: &Context) -> Result<CheckOutcome> {
    let f0 = ctx.extremal()?;
    let norm = modulus::normalization_residual(&f0, &ctx.bundle, &ctx.quad)?;
    let min = f0.min();
    let admissible = hat(&f0, &ctx.bundle, &ctx.quad)?.min() >= 1.0 - tolerances::NORMALIZATION;
    let tol = tolerances::NORMALIZATION;
    Ok(CheckOutcome::measured(
        "extremal",
        norm,
        tol,
        norm <= tol && min > 0.0 && admissible,
        format!("per-leaf normalization residual; min f0 = {min:e}, admissible = {admissible}"),
    ))
}

fn relative_sup_error(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs() / y.abs())
        .fold(0.0, f64::max)
}

fn cross_route_check(ctx: &Context) -> Result<CheckOutcome> {
    let f0 = ctx.extremal()?;
    let closed = modulus::modulus_base_formula(&ctx.bundle, &ctx.quad, ctx.p)?;
    let direct = modulus::modulus_direct(&f0, &ctx.bundle, &ctx.quad, ctx.p)?;
    let opt = solve_global(&ctx.bundle, &ctx.quad, ctx.p, &ctx.solver)?;
    let cd = (closed - direct).abs() / closed;
    let co = (closed - opt.modulus).abs() / closed;
    let field = relative_sup_error(&opt.field, &f0);
    let norm_opt = modulus::normalization_residual(&opt.field, &ctx.bundle, &ctx.quad)?;
    let pass = cd <= tolerances::CLOSED_VS_DIRECT
        && co <= tolerances::CROSS_ROUTE
        && field <= tolerances::FIELD_AGREEMENT
        && norm_opt <= tolerances::NORMALIZATION_OPT;
    Ok(CheckOutcome::measured(
        "cross-route",
        co.max(cd),
        tolerances::CROSS_ROUTE,
        pass,
        format!(
            "closed {closed:.12} direct {direct:.12} optimizer {:.12}; field sup rel err {field:.2e}; optimizer normalization {norm_opt:.2e}",
            opt.modulus
        ),
    ))
}

fn integral_formula_check(ctx: &Context) -> Result<CheckOutcome> {
    let f0 = ctx.extremal()?;
    let mut worst: f64 = 0.0;
    for phi in random_fields(&ctx.chart, &ctx.quad, ctx.seed, 10) {
        worst = worst.max(modulus::integral_formula_residual(
            &f0,
            &phi,
            &ctx.bundle,
            &ctx.quad,
            ctx.p,
        )?);
    }
    let tol = tolerances::INTEGRAL_FORMULA;
    Ok(CheckOutcome::measured(
        "integral-formula",
        worst,
        tol,
        worst <= tol,
        "max normalized residual over 10 random test functions".into(),
    ))
}

/// Scales `phi` so the largest perturbation stays a 10% relative change of
/// `f0` and of the leaf normalization.
pub fn scale_for_perturbation(
    phi: &ScalarField,
    f0: &ScalarField,
    bundle: &DensityBundle,
    quad: &Quadrature,
    t_max: f64,
) -> Result<ScalarField> {
    let sup = phi.sup_abs();
    let sup_hat = hat(phi, bundle, quad)?.sup_abs();
    if sup == 0.0 {
        return Ok(phi.clone());
    }
    let mut s = 0.1 * f0.min() / (t_max * sup);
    if sup_hat > 0.0 {
        s = s.min(0.1 / (t_max * sup_hat));
    }
    Ok(phi.map(|v| s * v))
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Perturbation gains for each size in [`PERTURBATION_SIZES`], as
/// `(plus, minus)` pairs.
pub fn perturbation_sweep(
    f0: &ScalarField,
    phi: &ScalarField,
    bundle: &DensityBundle,
    quad: &Quadrature,
    p: f64,
) -> Result<Vec<(f64, f64)>> {
    PERTURBATION_SIZES
        .iter()
        .map(|&t| modulus::perturbation_extremality(f0, phi, bundle, quad, p, t))
        .collect()
}

fn extremality_check(ctx: &Context) -> Result<CheckOutcome> {
    let f0 = ctx.extremal()?;
    let norm = modulus::modulus_direct(&f0, &ctx.bundle, &ctx.quad, ctx.p)?;
    let floor = -tolerances::EXTREMALITY * norm;
    let mut min_gain = f64::INFINITY;
    let mut worst_slope: f64 = 0.0;
    for phi in random_fields(&ctx.chart, &ctx.quad, ctx.seed, 5) {
        let phi = scale_for_perturbation(&phi, &f0, &ctx.bundle, &ctx.quad, PERTURBATION_SIZES[0])?;
        let gains = perturbation_sweep(&f0, &phi, &ctx.bundle, &ctx.quad, ctx.p)?;
        for side in [0, 1] {
            let ys: Vec<f64> = gains
                .iter()
                .map(|g| if side == 0 { g.0 } else { g.1 })
                .collect();
            min_gain = ys.iter().copied().fold(min_gain, f64::min);
            let slope = if ys.iter().all(|&y| y > 0.0) {
                log_log_slope(&PERTURBATION_SIZES, &ys)
            } else {
                f64::NAN
            };
            let dev = (slope - 2.0).abs();
            worst_slope = if dev.is_nan() {
                f64::NAN
            } else {
                worst_slope.max(dev)
            };
        }
    }
    let pass = min_gain >= floor && worst_slope <= tolerances::EXTREMALITY_SLOPE;
    Ok(CheckOutcome::measured(
        "extremality",
        min_gain,
        tolerances::EXTREMALITY,
        pass,
        format!("min norm gain over 5 functions and t in {PERTURBATION_SIZES:?}; worst |slope - 2| = {worst_slope:.3}"),
    ))
}

fn mean_curvature_check(ctx: &Context) -> Result<CheckOutcome> {
    let f0 = ctx.extremal()?;
    let lhs = analysis::tangential_grad_log(
        &f0,
        &ctx.chart,
        &ctx.quad,
        ctx.p,
        DerivativeScheme::Spectral,
    )?;
    let rhs = analysis::mean_curvature_field(&ctx.chart, &ctx.quad)?;
    let dist = lhs.max_distance(&rhs, &ctx.chart, &ctx.quad)?;
    let tol = tolerances::MEAN_CURVATURE;
    Ok(CheckOutcome::measured(
        "mean-curvature",
        dist,
        tol,
        dist <= tol,
        "sup g-norm of H - (p-1) (grad ln f0)^T over the grid".into(),
    ))
}

fn harmonic_check(ctx: &Context) -> Result<CheckOutcome> {
    let tol = tolerances::HARMONIC;
    if !ctx.chart.has_closed_leaves() {
        return Ok(CheckOutcome::skipped(
            "harmonic",
            tol,
            "leaves are not closed (non-periodic leaf axis)".into(),
        ));
    }
    let f0 = ctx.extremal()?;
    let mut worst: f64 = 0.0;
    for f in random_fields(&ctx.chart, &ctx.quad, ctx.seed, 5) {
        worst = worst.max(analysis::harmonic_residual(
            &f0,
            &f,
            &ctx.chart,
            &ctx.bundle,
            &ctx.quad,
            ctx.p,
        )?);
    }
    Ok(CheckOutcome::measured(
        "harmonic",
        worst,
        tol,
        worst <= tol,
        "max normalized residual over 5 random functions".into(),
    ))
}

fn modulus_properties_check(ctx: &Context) -> Result<CheckOutcome> {
    let (bundle, quad, p) = (&ctx.bundle, &ctx.quad, ctx.p);
    let nb = quad.grid().base_len();
    let full = modulus::modulus_base_formula(bundle, quad, p)?;
    let masks: Vec<Vec<bool>> = vec![
        (0..nb).map(|i| i < nb / 2).collect(),
        (0..nb).map(|i| i >= nb / 2).collect(),
        (0..nb).map(|i| i % 2 == 0).collect(),
        (0..nb).map(|i| i % 3 == 1).collect(),
    ];
    let subs: Vec<f64> = masks
        .iter()
        .map(|m| modulus::submodulus(bundle, quad, p, m))
        .collect::<Result<_>>()?;
    let monotone = subs.iter().all(|&s| s <= full);
    let additivity = (subs[0].powf(p) + subs[1].powf(p) - full.powf(p)).abs() / full.powf(p);
    let tol = tolerances::ADDITIVITY;
    Ok(CheckOutcome::measured(
        "modulus-properties",
        additivity,
        tol,
        monotone && additivity <= tol,
        format!("partition additivity of mod^p; monotone under restriction = {monotone}"),
    ))
}

fn run_check(ctx: &Context, suite: Suite) -> Result<CheckOutcome> {
    match suite {
        Suite::Coarea => coarea_check(ctx),
        Suite::Extremal => extremal_check(ctx),
        Suite::CrossRoute => cross_route_check(ctx),
        Suite::IntegralFormula => integral_formula_check(ctx),
        Suite::Extremality => extremality_check(ctx),
        Suite::MeanCurvature => mean_curvature_check(ctx),
        Suite::Harmonic => harmonic_check(ctx),
        Suite::ModulusProperties => modulus_properties_check(ctx),
        Suite::All => unreachable!("expanded by run_suite"),
    }
}

/// Runs one suite (or all of them) on a prepared context.
pub fn run_suite(ctx: &Context, suite: Suite) -> Result<SuiteReport> {
    let selected: Vec<Suite> = match suite {
        Suite::All => Suite::ALL_CHECKS.to_vec(),
        one => vec![one],
    };
    let checks = selected
        .into_iter()
        .map(|s| run_check(ctx, s))
        .collect::<Result<_>>()?;
    Ok(SuiteReport {
        chart: ctx.chart.name().to_string(),
        grid: ctx.quad.grid().counts().to_vec(),
        p: ctx.p,
        seed: ctx.seed,
        suite,
        checks,
    })
}

/// Computes the modulus by all three routes with the accompanying residuals.
pub fn compute_report(
    ctx: &Context,
    n_test_functions: usize,
    with_timings: bool,
) -> Result<ModulusReport> {
    let t0 = Instant::now();
    let f0 = ctx.extremal()?;
    let mod_closed = modulus::modulus_base_formula(&ctx.bundle, &ctx.quad, ctx.p)?;
    let mod_direct = modulus::modulus_direct(&f0, &ctx.bundle, &ctx.quad, ctx.p)?;
    let t_closed = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let opt = solve_global(&ctx.bundle, &ctx.quad, ctx.p, &ctx.solver)?;
    let t_opt = t1.elapsed().as_secs_f64();
    let intformula_residuals = random_fields(&ctx.chart, &ctx.quad, ctx.seed, n_test_functions)
        .iter()
        .map(|phi| modulus::integral_formula_residual(&f0, phi, &ctx.bundle, &ctx.quad, ctx.p))
        .collect::<Result<_>>()?;
    Ok(ModulusReport {
        chart: ctx.chart.name().to_string(),
        grid: ctx.quad.grid().counts().to_vec(),
        p: ctx.p,
        q: modulus::conjugate_exponent(ctx.p),
        mod_closed,
        mod_direct,
        mod_opt: Some(opt.modulus),
        norm_residual: modulus::normalization_residual(&f0, &ctx.bundle, &ctx.quad)?,
        norm_residual_opt: Some(modulus::normalization_residual(
            &opt.field,
            &ctx.bundle,
            &ctx.quad,
        )?),
        min_f0: f0.min(),
        coarea_residual: ctx.bundle.coarea_residual(),
        intformula_residuals,
        timings: with_timings.then_some(Timings {
            densities: ctx.densities_seconds,
            closed_form: t_closed,
            optimizer: t_opt,
        }),
    })
}

/// Whether a report meets the cross-route and normalization tolerances.
pub fn report_passes(report: &ModulusReport) -> bool {
    let closed_direct = (report.mod_closed - report.mod_direct).abs() / report.mod_closed;
    closed_direct <= tolerances::CLOSED_VS_DIRECT
        && report.cross_route_gap() <= tolerances::CROSS_ROUTE
        && report.norm_residual <= tolerances::NORMALIZATION
        && report.min_f0 > 0.0
        && report
            .intformula_residuals
            .iter()
            .all(|&r| r <= tolerances::INTEGRAL_FORMULA)
}
