//! Ellipsoidal density models for 2D/3D point clouds.
//!
//! The model treats a point cloud as noisy observations of an ellipsoid
//! surface: a point is drawn as `x = mu + Sigma^{1/2} * w * u`, where `u` is a
//! uniform direction on the unit sphere and `w` is a radial factor
//! concentrated around 1 with spread `noise_sigma`. The crate provides
//!
//! * the radial moment machinery behind the density's normalization constant
//!   ([`radial`]),
//! * the density itself plus Mahalanobis helpers ([`model`]),
//! * exact seeded samplers ([`sampler`]),
//! * moment-based and backfitting estimators for a single ellipsoid
//!   ([`estimators`]),
//! * an EM loop with K-means initialization for mixtures of ellipsoids
//!   ([`mixture`]).

pub mod error;
pub mod estimators;
pub mod mixture;
pub mod model;
pub mod quad;
pub mod radial;
pub mod sampler;

pub use error::{Error, Result};
pub use estimators::{backfit_step, fit_backfit, fit_direct, FitConfig, SingleFitReport};
pub use mixture::{
    classify, e_step, fit_em, kmeans_init, m_step, EStep, EmConfig, EmReport, Termination,
};
pub use model::{
    log_density, mahalanobis, mixture_log_likelihood, EllipsoidParams, MixtureParams, PointCloud,
    Responsibilities,
};
pub use radial::{
    j_moment, j_moment_oracle, norm_constant, sigma_star_factor, sigma_tilde_sq, ConstantMode,
    JTable, NormConstant, SigmaWarning,
};
pub use sampler::{
    derive_seed, sample_ellipsoid, sample_mixture, sample_unit_direction, sample_w,
    sample_w_counted, SeededRng,
};
