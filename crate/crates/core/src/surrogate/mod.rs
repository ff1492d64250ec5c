//! Output moments and the surrogate densities built from them.

mod copula;
mod density;
mod gamma;
mod propagate;

pub use copula::{forward_correlation, CopulaGrid, CopulaTable};
pub use density::{
    bivariate_gamma_logpdf, fit_gamma, fit_normal, fit_surrogate, mixture_surrogate, MvNormal,
    SurrogateDensity, SurrogateKind,
};
pub use gamma::{clamp_skew, fit_marginal, fit_shifted_gamma, GammaFit, ShiftedGammaParams, SkewMarginal, SKEW_CLAMP};
pub use propagate::{propagate, raw_moments, OutputMoments, RawMoments};

/// Log-density returned outside a surrogate's support.
pub const LOG_FLOOR: f64 = -1e10;
