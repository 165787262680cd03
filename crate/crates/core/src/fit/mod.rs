//! Damped least squares and the model-specific fitters.

mod lsq;
mod models;

pub use lsq::{least_squares, numerical_jacobian, Bounds, FitReport, LsqOptions};
pub use models::{
    fit_dispersion, fit_intensity_profile, fit_te_spectrum, fit_te_spectrum_from, fit_tm_spectrum, linear_regression, intensity_profile_model,
    te_initial_guess, tm_initial_guess, DispersionFit, ProfileFit, TeModel, TmModel, TE_PARAMETERS, TM_PARAMETERS,
};
