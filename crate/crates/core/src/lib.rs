//! Numerical laboratory for type-II superconductors in the surface regime.
//!
//! Everything revolves around one rescaled boundary model: minimize, over
//! profiles `f : [0, t_eps] -> R` and phase rates `alpha`, the energy
//!
//! ```text
//! E[f; k, alpha] = int (1 - eps k t) { f'^2 + V f^2 - (1/2b)(2 f^2 - f^4) } dt,
//! V(t) = ((t + alpha - eps k t^2 / 2) / (1 - eps k t))^2,
//! ```
//!
//! and climb back up: from the spectral threshold `Theta_0` of the model
//! half-line operator, through optimal 1D profiles and the cost-function
//! certificates built from them, to the splitting of a periodic boundary-layer
//! energy and finally to full 2D Ginzburg-Landau minimization on a disc.
//!
//! Modules are ordered by that pipeline: [`spectral`], [`profile1d`],
//! [`costfn`], [`layer`], [`gl2d`], [`report`]. The [`oracle`] module holds
//! independent reference implementations (dense eigensolver, projected
//! gradient descent) used to cross-check the fast paths; nothing in the main
//! pipeline calls into it.

pub mod costfn;
pub mod error;
pub mod gl2d;
pub mod grid;
pub mod layer;
pub mod oracle;
pub mod profile1d;
mod optim;
pub mod spectral;
pub mod tridiag;

pub use costfn::CostCurve;
pub use error::{Error, Result};
pub use gl2d::{DensityReport, DiscField, DiscGrid, Mode, WindingReport};
pub use layer::{LayerField, LayerParams, ReducedField, ReducedTerms, SplitEnergy, Variant};
pub use profile1d::{OptimalProfile, Profile1D, ProfileParams};
pub use spectral::{CurvedOperatorSpec, OscillatorSpec, SpectralResult};

use once_cell::sync::Lazy;

/// `(theta0, alpha0)` for the half-line oscillator family, computed once on a
/// fine grid. `theta0` is the infimum over `alpha` of the ground-state energy;
/// the minimizer satisfies `alpha0 = -sqrt(theta0)`.
static THETA0: Lazy<(f64, f64)> = Lazy::new(|| {
    let cfg = spectral::Theta0Config::default();
    spectral::find_theta0(&cfg).expect("theta0 search on the default bracket cannot fail")
});

/// Ground-state threshold `theta0 ~ 0.5901`. First call pays one spectral solve.
pub fn theta0() -> f64 {
    THETA0.0
}

/// Minimizing frequency `alpha0 = -sqrt(theta0) ~ -0.7682`.
pub fn alpha0() -> f64 {
    THETA0.1
}

/// Upper edge `1/theta0 ~ 1.6946` of the surface regime `1 < b < 1/theta0`.
pub fn b_upper() -> f64 {
    1.0 / THETA0.0
}

/// `|log eps|` as used throughout: natural log, positive for `eps < 1`.
pub fn abs_log(eps: f64) -> f64 {
    -eps.ln()
}
