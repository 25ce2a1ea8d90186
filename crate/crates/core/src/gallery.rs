//! Built-in foliated charts with known extremal functions.
//!
//! * `ring`: an annulus or spherical shell foliated by concentric spheres.
//! * `torus`: a torus of revolution foliated by its meridian circles.
//! * `ellipse-tube`: a one-sided neighborhood of an ellipse foliated by the
//!   level sets of the distance to the ellipse.
//! * `product`: a flat box, optionally warped along the leaves.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FoliatedChart, Interval, MetricModel};

#[derive(Debug, Clone, Copy)]
struct RingMetric {
    dim: usize,
}

impl MetricModel for RingMetric {
    fn metric(&self, u: &[f64]) -> DMatrix<f64> {
        let r2 = u[0] * u[0];
        let diag = match self.dim {
            2 => vec![1.0, r2],
            _ => vec![1.0, r2, r2 * u[1].sin().powi(2)],
        };
        DMatrix::from_diagonal(&DVector::from_vec(diag))
    }

    fn base_metric(&self, _y: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(1, 1)
    }
}

/// Shell `r1 < |x| < r2` in `R^n` (`n` = 2 or 3), foliated by spheres.
///
/// Coordinates are `(r, θ)` for `n = 2` and `(r, θ, φ)` with polar angle `θ`
/// for `n = 3`. The radius is the base coordinate with metric `dr²`.
pub fn make_ring(n: usize, r1: f64, r2: f64) -> Result<FoliatedChart> {
    if !(0.0 < r1 && r1 < r2 && r2.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "ring radii must satisfy 0 < r1 < r2, got ({r1}, {r2})"
        )));
    }
    let (bounds, periodic) = match n {
        2 => (
            vec![Interval::new(r1, r2), Interval::new(0.0, TAU)],
            vec![false, true],
        ),
        3 => (
            vec![
                Interval::new(r1, r2),
                Interval::new(0.0, PI),
                Interval::new(0.0, TAU),
            ],
            vec![false, false, true],
        ),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "ring dimension must be 2 or 3, got {n}"
            )))
        }
    };
    FoliatedChart::new(
        format!("ring{n}"),
        1,
        bounds,
        periodic,
        Arc::new(RingMetric { dim: n }),
    )
}

#[derive(Debug, Clone, Copy)]
struct TorusMetric {
    big_r: f64,
    small_r: f64,
}

impl MetricModel for TorusMetric {
    fn metric(&self, u: &[f64]) -> DMatrix<f64> {
        let w = self.big_r + self.small_r * u[1].cos();
        DMatrix::from_diagonal(&DVector::from_vec(vec![w * w, self.small_r * self.small_r]))
    }

    fn base_metric(&self, _y: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(1, 1)
    }
}

/// Torus of revolution with coordinates `(β, α)`, foliated by the circles
/// `β = const`. The base is the unit circle with metric `dβ²`.
pub fn make_torus(big_r: f64, small_r: f64) -> Result<FoliatedChart> {
    if !(0.0 < small_r && small_r < big_r && big_r.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "torus radii must satisfy 0 < r < R (self-intersecting otherwise), got R = {big_r}, r = {small_r}"
        )));
    }
    FoliatedChart::new(
        "torus",
        1,
        vec![Interval::new(0.0, TAU), Interval::new(0.0, TAU)],
        vec![true, true],
        Arc::new(TorusMetric { big_r, small_r }),
    )
}

/// Which complementary region of the ellipse the tube occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Outward,
    Inward,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Outward => 1.0,
            Side::Inward => -1.0,
        }
    }
}

/// Ellipse `s ↦ (a cos s, b sin s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub a: f64,
    pub b: f64,
}

impl Ellipse {
    /// Speed `|γ'(s)|`.
    pub fn speed(&self, s: f64) -> f64 {
        (self.a * self.a * s.sin().powi(2) + self.b * self.b * s.cos().powi(2)).sqrt()
    }

    /// Curvature `κ(s)`, positive for the counter-clockwise parametrization.
    pub fn curvature(&self, s: f64) -> f64 {
        self.a * self.b / self.speed(s).powi(3)
    }

    /// Largest curvature, attained at the ends of the major axis.
    pub fn max_curvature(&self) -> f64 {
        self.a.max(self.b) / self.a.min(self.b).powi(2)
    }
}

#[derive(Debug, Clone, Copy)]
struct TubeMetric {
    ellipse: Ellipse,
    side: Side,
}

impl MetricModel for TubeMetric {
    fn metric(&self, u: &[f64]) -> DMatrix<f64> {
        let (t, s) = (u[0], u[1]);
        let stretch =
            (1.0 + self.side.sign() * t * self.ellipse.curvature(s)) * self.ellipse.speed(s);
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, stretch * stretch]))
    }

    fn base_metric(&self, _y: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(1, 1)
    }
}

/// Tube `t_min ≤ dist(x, ellipse) ≤ t_max` on one side of an ellipse with
/// semi-axes `a ≥ b`, in normal-exponential coordinates `(t, s)`.
///
/// The distance `t` is the base coordinate; the ellipse parameter `s` runs
/// along the leaves (parallel curves). On the inward side the tube must stay
/// below the focal distance `1/κ_max = b²/a`.
pub fn make_ellipse_tube(
    a: f64,
    b: f64,
    t_min: f64,
    t_max: f64,
    side: Side,
) -> Result<FoliatedChart> {
    if !(a >= b && b > 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "ellipse semi-axes must satisfy a >= b > 0, got a = {a}, b = {b}"
        )));
    }
    if !(0.0 < t_min && t_min < t_max && t_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "distance range must satisfy 0 < t_min < t_max, got [{t_min}, {t_max}]"
        )));
    }
    let ellipse = Ellipse { a, b };
    if side == Side::Inward && t_max >= 1.0 / ellipse.max_curvature() {
        return Err(Error::InvalidParameter(format!(
            "t_max = {t_max} reaches the focal distance b²/a = {}; parallel curves degenerate",
            1.0 / ellipse.max_curvature()
        )));
    }
    FoliatedChart::new(
        "ellipse-tube",
        1,
        vec![Interval::new(t_min, t_max), Interval::new(0.0, TAU)],
        vec![false, true],
        Arc::new(TubeMetric { ellipse, side }),
    )
}

/// Optional warping of the base directions along the leaves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Warp {
    None,
    /// Base directions scaled by `1 + amplitude·cos(2π s)` where `s` is the
    /// normalized first leaf coordinate; needs `|amplitude| < 1`.
    Cosine {
        amplitude: f64,
    },
}

#[derive(Debug, Clone)]
struct ProductMetric {
    dim_base: usize,
    dim_total: usize,
    leaf_axis: Interval,
    warp: Warp,
}

impl ProductMetric {
    fn warp_factor(&self, u: &[f64]) -> f64 {
        match self.warp {
            Warp::None => 1.0,
            Warp::Cosine { amplitude } => {
                let s = (u[self.dim_base] - self.leaf_axis.lo) / self.leaf_axis.len();
                1.0 + amplitude * (TAU * s).cos()
            }
        }
    }
}

impl MetricModel for ProductMetric {
    fn metric(&self, u: &[f64]) -> DMatrix<f64> {
        let w = self.warp_factor(u);
        let diag: Vec<f64> = (0..self.dim_total)
            .map(|i| if i < self.dim_base { w * w } else { 1.0 })
            .collect();
        DMatrix::from_diagonal(&DVector::from_vec(diag))
    }

    fn base_metric(&self, _y: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim_base, self.dim_base)
    }
}

/// Flat box `base_box × leaf_box` with closed (periodic) leaf axes.
///
/// Unwarped, the metric is the identity. With a warp the base block becomes
/// `w(t)² I`, which makes the Jacobian `w^{-b}` vary along each leaf.
pub fn make_product(
    base_box: &[Interval],
    leaf_box: &[Interval],
    warp: Warp,
) -> Result<FoliatedChart> {
    if base_box.is_empty() || leaf_box.is_empty() {
        return Err(Error::InvalidParameter(
            "product chart needs at least one base and one leaf axis".into(),
        ));
    }
    if let Warp::Cosine { amplitude } = warp {
        if amplitude.abs().partial_cmp(&1.0) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidParameter(format!(
                "warp amplitude must lie in (-1, 1), got {amplitude}"
            )));
        }
    }
    let bounds: Vec<Interval> = base_box.iter().chain(leaf_box).copied().collect();
    let periodic = (0..bounds.len()).map(|i| i >= base_box.len()).collect();
    let model = ProductMetric {
        dim_base: base_box.len(),
        dim_total: bounds.len(),
        leaf_axis: leaf_box[0],
        warp,
    };
    FoliatedChart::new("product", base_box.len(), bounds, periodic, Arc::new(model))
}

/// A numeric gallery parameter with its default and validity range.
#[derive(Debug, Clone, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    pub range: &'static str,
}

/// Catalog entry for a built-in example.
#[derive(Debug, Clone, Serialize)]
pub struct ExampleDescriptor {
    pub name: &'static str,
    pub summary: &'static str,
    pub params: Vec<ParamSpec>,
    /// Extremal function in closed form.
    pub extremal: &'static str,
    /// Modulus in closed form, where one is known.
    pub modulus: &'static str,
}

/// All built-in examples.
pub fn catalog() -> Vec<ExampleDescriptor> {
    let p = |name, default, range| ParamSpec {
        name,
        default,
        range,
    };
    vec![
        ExampleDescriptor {
            name: "ring",
            summary: "annulus / spherical shell foliated by concentric spheres",
            params: vec![
                p("n", 2.0, "2 or 3"),
                p("r1", 1.0, "0 < r1 < r2"),
                p("r2", 2.0, "r2 > r1"),
            ],
            extremal: "f0 = r^(1-n) / |S^(n-1)|",
            modulus: "mod_p^p = |S^(n-1)|^(1-p) * integral_{r1}^{r2} r^((n-1)(1-p)) dr",
        },
        ExampleDescriptor {
            name: "torus",
            summary: "torus of revolution foliated by meridian circles",
            params: vec![p("R", 2.0, "R > r"), p("r", 1.0, "0 < r < R")],
            extremal: "f0 = C (R + r cos a)^(-1/(p-1))",
            modulus: "mod_2 = (R^2 - r^2)^(1/4) / sqrt(r)",
        },
        ExampleDescriptor {
            name: "ellipse-tube",
            summary: "parallel curves at distance t from an ellipse",
            params: vec![
                p("a", 2.0, "a >= b"),
                p("b", 1.0, "b > 0"),
                p("t_min", 0.1, "0 < t_min < t_max"),
                p("t_max", 0.5, "t_max > t_min; inward: t_max < b^2/a"),
                p("side", 1.0, "+1 outward, -1 inward"),
            ],
            extremal: "f0 = 1 / (L0 + 2 pi t) outward, 1 / (L0 - 2 pi t) inward",
            modulus: "mod_p^p = integral (L0 +- 2 pi t)^(1-p) dt",
        },
        ExampleDescriptor {
            name: "product",
            summary: "flat box with periodic leaves, optionally warped along the leaves",
            params: vec![
                p("base_len", 1.0, "> 0"),
                p("leaf_len", 1.0, "> 0"),
                p("base_dims", 1.0, "integer >= 1"),
                p("leaf_dims", 1.0, "integer >= 1"),
                p("warp", 0.0, "|warp| < 1"),
            ],
            extremal: "unwarped: f0 = 1 / leaf volume",
            modulus: "unwarped: mod_p^p = base volume / leaf volume^(p-1)",
        },
    ]
}

/// Looks up a catalog entry by name.
pub fn descriptor(name: &str) -> Option<ExampleDescriptor> {
    catalog().into_iter().find(|d| d.name == name)
}

fn int_param(name: &str, v: f64) -> Result<usize> {
    if v.fract() != 0.0 || v < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "parameter {name} must be a positive integer, got {v}"
        )));
    }
    Ok(v as usize)
}

/// Builds a gallery chart from its name and parameter overrides.
///
/// Unknown names or parameters are rejected; missing parameters take their
/// catalog defaults.
pub fn build_example(name: &str, overrides: &BTreeMap<String, f64>) -> Result<FoliatedChart> {
    let desc = descriptor(name)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown example {name:?}")))?;
    if let Some(bad) = overrides
        .keys()
        .find(|k| !desc.params.iter().any(|p| p.name == k.as_str()))
    {
        return Err(Error::InvalidParameter(format!(
            "example {name:?} has no parameter {bad:?}"
        )));
    }
    let get = |key: &str| -> f64 {
        overrides.get(key).copied().unwrap_or_else(|| {
            desc.params
                .iter()
                .find(|p| p.name == key)
                .map(|p| p.default)
                .expect("catalog parameter")
        })
    };
    match name {
        "ring" => make_ring(int_param("n", get("n"))?, get("r1"), get("r2")),
        "torus" => make_torus(get("R"), get("r")),
        "ellipse-tube" => {
            let side = match get("side") {
                1.0 => Side::Outward,
                -1.0 => Side::Inward,
                s => {
                    return Err(Error::InvalidParameter(format!(
                        "side must be +1 or -1, got {s}"
                    )))
                }
            };
            make_ellipse_tube(get("a"), get("b"), get("t_min"), get("t_max"), side)
        }
        "product" => {
            let (bl, ll) = (get("base_len"), get("leaf_len"));
            let base = vec![Interval::new(0.0, bl); int_param("base_dims", get("base_dims"))?];
            let leaf = vec![Interval::new(0.0, ll); int_param("leaf_dims", get("leaf_dims"))?];
            let warp = match get("warp") {
                0.0 => Warp::None,
                amplitude => Warp::Cosine { amplitude },
            };
            make_product(&base, &leaf, warp)
        }
        _ => unreachable!("catalog and builder disagree on {name}"),
    }
}

/// Chart description as read from a TOML document.
///
/// The geometry is always one of the built-in families; `dims`, `bounds` and
/// `periodic`, when present, must agree with the chart the family produces.
///
/// ```toml
/// family = "torus"
/// dims = [2, 1]
/// periodic = [true, true]
///
/// [params]
/// R = 2.0
/// r = 1.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartDocument {
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// `[n, b]`: manifold and base dimension.
    #[serde(default)]
    pub dims: Option<[usize; 2]>,
    #[serde(default)]
    pub bounds: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub periodic: Option<Vec<bool>>,
}

impl ChartDocument {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("chart document: {e}")))
    }

    pub fn build(&self) -> Result<FoliatedChart> {
        let chart = build_example(&self.family, &self.params)?;
        if let Some([n, b]) = self.dims {
            if n != chart.dim_total() || b != chart.dim_base() {
                return Err(Error::InvalidParameter(format!(
                    "dims [{n}, {b}] disagree with family {:?} ([{}, {}])",
                    self.family,
                    chart.dim_total(),
                    chart.dim_base()
                )));
            }
        }
        if let Some(bounds) = &self.bounds {
            let matches = bounds.len() == chart.dim_total()
                && bounds
                    .iter()
                    .zip(chart.bounds())
                    .all(|(d, iv)| (d[0] - iv.lo).abs() <= 1e-12 && (d[1] - iv.hi).abs() <= 1e-12);
            if !matches {
                return Err(Error::InvalidParameter(format!(
                    "bounds disagree with family {:?}",
                    self.family
                )));
            }
        }
        if let Some(periodic) = &self.periodic {
            if periodic.as_slice() != chart.periodic() {
                return Err(Error::InvalidParameter(format!(
                    "periodicity flags disagree with family {:?}",
                    self.family
                )));
            }
        }
        Ok(chart)
    }
}

/// Closed-form reference values for the built-in examples.
pub mod expected {
    use super::*;

    /// Area of the unit sphere `S^{n-1}` for `n` = 2 or 3.
    pub fn unit_sphere_area(n: usize) -> f64 {
        match n {
            2 => TAU,
            3 => 4.0 * PI,
            _ => panic!("unsupported dimension {n}"),
        }
    }

    /// Extremal function of the ring at radius `r`.
    pub fn ring_extremal(n: usize, r: f64) -> f64 {
        r.powi(1 - n as i32) / unit_sphere_area(n)
    }

    /// p-modulus of the ring foliation.
    pub fn ring_modulus(n: usize, r1: f64, r2: f64, p: f64) -> f64 {
        let e = (n as f64 - 1.0) * (1.0 - p);
        let radial = if (e + 1.0).abs() < 1e-15 {
            (r2 / r1).ln()
        } else {
            (r2.powf(e + 1.0) - r1.powf(e + 1.0)) / (e + 1.0)
        };
        (unit_sphere_area(n).powf(1.0 - p) * radial).powf(1.0 / p)
    }

    /// Normalizing constant of the torus extremal function for `p = 2`.
    pub fn torus_constant_p2(big_r: f64, small_r: f64) -> f64 {
        (big_r * big_r - small_r * small_r).sqrt() / (TAU * small_r)
    }

    /// 2-modulus of the torus foliation.
    pub fn torus_modulus_p2(big_r: f64, small_r: f64) -> f64 {
        (big_r * big_r - small_r * small_r).powf(0.25) / small_r.sqrt()
    }

    /// Mean curvature of the orthogonal circles on the torus: the `∂_α`
    /// coefficient `sin α / (r (R + r cos α))`.
    pub fn torus_mean_curvature(big_r: f64, small_r: f64, alpha: f64) -> f64 {
        alpha.sin() / ((big_r + small_r * alpha.cos()) * small_r)
    }

    /// Perimeter of an ellipse by the trapezoidal rule on `m` nodes.
    pub fn ellipse_perimeter(ellipse: Ellipse, m: usize) -> f64 {
        let h = TAU / m as f64;
        (0..m).map(|j| h * ellipse.speed(j as f64 * h)).sum()
    }

    /// Modulus of the unwarped product chart.
    pub fn product_modulus(base_volume: f64, leaf_volume: f64, p: f64) -> f64 {
        (base_volume / leaf_volume.powf(p - 1.0)).powf(1.0 / p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_parameters_rejected() {
        assert!(make_ring(2, 1.0, 1.0).is_err());
        assert!(make_ring(4, 1.0, 2.0).is_err());
        assert!(make_ring(2, 0.0, 2.0).is_err());
        assert!(make_torus(1.0, 1.0).is_err());
        assert!(make_torus(1.0, 2.0).is_err());
        assert!(make_ellipse_tube(1.0, 2.0, 0.1, 0.2, Side::Outward).is_err());
        assert!(make_ellipse_tube(2.0, 1.0, 0.2, 0.1, Side::Outward).is_err());
        // focal distance b²/a = 0.5
        assert!(make_ellipse_tube(2.0, 1.0, 0.1, 0.5, Side::Inward).is_err());
        assert!(make_ellipse_tube(2.0, 1.0, 0.1, 0.49, Side::Inward).is_ok());
        assert!(make_ellipse_tube(2.0, 1.0, 0.1, 5.0, Side::Outward).is_ok());
        let iv = Interval::new(0.0, 1.0);
        assert!(make_product(&[iv], &[iv], Warp::Cosine { amplitude: 1.0 }).is_err());
    }

    #[test]
    fn ellipse_curvature_extremes() {
        let e = Ellipse { a: 2.0, b: 1.0 };
        assert!((e.curvature(0.0) - 2.0).abs() < 1e-15);
        assert!((e.curvature(PI / 2.0) - 0.25).abs() < 1e-15);
        assert_eq!(e.max_curvature(), 2.0);
    }

    #[test]
    fn total_curvature_of_ellipse_is_two_pi() {
        let e = Ellipse { a: 2.0, b: 1.0 };
        let m = 256;
        let h = TAU / m as f64;
        let turning: f64 = (0..m)
            .map(|j| {
                let s = j as f64 * h;
                h * e.curvature(s) * e.speed(s)
            })
            .sum();
        assert!((turning - TAU).abs() < 1e-12);
    }

    #[test]
    fn build_by_name() {
        let mut params = BTreeMap::new();
        params.insert("R".to_string(), 3.0);
        let chart = build_example("torus", &params).unwrap();
        assert_eq!(chart.name(), "torus");
        params.insert("bogus".to_string(), 1.0);
        assert!(build_example("torus", &params).is_err());
        assert!(build_example("klein", &BTreeMap::new()).is_err());
        let ring3 = build_example("ring", &BTreeMap::from([("n".to_string(), 3.0)])).unwrap();
        assert_eq!(ring3.dim_total(), 3);
        assert!(build_example("ring", &BTreeMap::from([("n".to_string(), 2.5)])).is_err());
        let prod = build_example(
            "product",
            &BTreeMap::from([("leaf_dims".to_string(), 2.0), ("warp".to_string(), 0.3)]),
        )
        .unwrap();
        assert_eq!((prod.dim_total(), prod.dim_base()), (3, 1));
    }

    #[test]
    fn chart_document_round_trip_and_validation() {
        let text = r#"
family = "torus"
dims = [2, 1]
periodic = [true, true]

[params]
R = 2.0
r = 1.0
"#;
        let doc = ChartDocument::from_toml(text).unwrap();
        let chart = doc.build().unwrap();
        assert_eq!(chart.dim_total(), 2);
        let again = ChartDocument::from_toml(&toml::to_string(&doc).unwrap()).unwrap();
        assert_eq!(again, doc);

        let wrong = ChartDocument {
            dims: Some([3, 1]),
            ..doc.clone()
        };
        assert!(wrong.build().is_err());
        let wrong = ChartDocument {
            periodic: Some(vec![true, false]),
            ..doc.clone()
        };
        assert!(wrong.build().is_err());
        assert!(ChartDocument::from_toml("family = \"torus\"\nmetric = \"x^2\"").is_err());
    }

    #[test]
    fn circle_tube_reduces_to_annulus_metric() {
        let tube = make_ellipse_tube(1.0, 1.0, 0.2, 0.8, Side::Outward).unwrap();
        let ring = make_ring(2, 1.2, 1.8).unwrap();
        for (t, s) in [(0.3, 0.1), (0.5, 2.0), (0.75, 5.0)] {
            let gt = tube.eval_metric(&[t, s]).unwrap();
            let gr = ring.eval_metric(&[1.0 + t, s]).unwrap();
            assert!((gt - gr).amax() < 1e-14);
        }
    }

    #[test]
    fn ring_modulus_reference() {
        let m = expected::ring_modulus(2, 1.0, 2.0, 2.0);
        assert!((m - (2f64.ln() / TAU).sqrt()).abs() < 1e-15);
        assert!((expected::torus_modulus_p2(2.0, 1.0) - 3f64.powf(0.25)).abs() < 1e-15);
    }
}
