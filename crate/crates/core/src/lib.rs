//! p-modulus of foliations given by submersions.
//!
//! The crate computes the extremal function and the p-modulus of the foliation
//! of a Riemannian chart by the fibers of a coordinate submersion, in three
//! independent ways:
//!
//! * the closed form built from the Jacobian of the submersion
//!   ([`modulus::closed_form_extremal`], [`modulus::modulus_base_formula`]);
//! * the `L^p` norm of the closed-form extremal function
//!   ([`modulus::modulus_direct`]);
//! * a projected-gradient solve of the discretized convex problem that never
//!   looks at the closed form ([`optimizer::solve_global`]).
//!
//! The [`analysis`] module checks the differential-geometric identities tied
//! to the extremal function (mean curvature of the orthogonal distribution,
//! harmonic measure), and [`verify`] bundles every check into named suites.

pub mod analysis;
pub mod error;
pub mod gallery;
pub mod geometry;
pub mod modulus;
pub mod optimizer;
pub mod quadrature;
pub mod testfn;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{densities, jacobian, DensityBundle, FoliatedChart, Interval, MetricModel};
pub use modulus::ModulusReport;
pub use quadrature::{build_quadrature, Quadrature, ScalarField};
