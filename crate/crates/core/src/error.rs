use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by model construction, fitting, and sampling.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A scalar argument fell outside its mathematical domain.
    Domain { what: &'static str, value: f64 },
    /// Noise spread outside the usable range: must be positive, finite, and < 1.
    SigmaOutOfRange { sigma: f64 },
    /// Dimension outside the supported set for the operation.
    UnsupportedDimension { dim: usize },
    /// Two inputs disagree on dimension or length.
    DimensionMismatch { expected: usize, got: usize },
    /// Adaptive quadrature could not reach the requested relative accuracy.
    QuadratureDidNotConverge { requested: f64, achieved: f64 },
    /// Shape matrix is not symmetric within tolerance.
    NonSymmetricShape { max_asymmetry: f64 },
    /// Shape matrix has an eigenvalue at or below the conditioning floor.
    IllConditionedShape { min_eigenvalue: f64, floor: f64 },
    /// A point cloud must contain at least one point.
    EmptyCloud,
    /// A point coordinate is NaN or infinite.
    NonFinitePoint { row: usize },
    /// Too few (effective) points for the requested fit.
    InsufficientPoints { needed: usize, got: usize },
    /// Scatter of the data is rank-deficient, no ellipsoid can be fitted.
    DegenerateCloud { min_eigenvalue: f64, floor: f64 },
    /// Per-point weights are malformed (wrong length, negative, or non-finite).
    InvalidWeights { detail: String },
    /// Mixture parameters are malformed (weights, dimensions, or counts).
    InvalidMixture { detail: String },
    /// A configuration field has an unusable value.
    InvalidConfig { what: &'static str },
    /// Rejection sampler exceeded its attempt budget; the noise regime is
    /// unusable for sampling.
    SamplerStall { attempts: u64 },
    /// K-means produced a cluster too small to seed a component.
    InitDegenerate { cluster: usize, size: usize, needed: usize },
    /// A component's responsibility mass dropped below the survival
    /// threshold during EM.
    ComponentCollapse { component: usize, mass: f64, min_mass: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain { what, value } => {
                write!(f, "argument {what} = {value} is outside its domain")
            }
            Error::SigmaOutOfRange { sigma } => {
                write!(
                    f,
                    "noise sigma = {sigma} is outside (0, 1); the radial model needs \
                     a positive spread below 1"
                )
            }
            Error::UnsupportedDimension { dim } => {
                write!(f, "dimension {dim} is not supported here")
            }
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::QuadratureDidNotConverge {
                requested,
                achieved,
            } => {
                write!(
                    f,
                    "quadrature reached relative accuracy {achieved:.3e}, \
                     requested {requested:.3e}"
                )
            }
            Error::NonSymmetricShape { max_asymmetry } => {
                write!(
                    f,
                    "shape matrix is not symmetric (max |A - A^T| entry {max_asymmetry:.3e} \
                     relative to scale)"
                )
            }
            Error::IllConditionedShape {
                min_eigenvalue,
                floor,
            } => {
                write!(
                    f,
                    "shape matrix is ill-conditioned: min eigenvalue {min_eigenvalue:.6e} \
                     at or below floor {floor:.6e}"
                )
            }
            Error::EmptyCloud => write!(f, "point cloud is empty"),
            Error::NonFinitePoint { row } => {
                write!(f, "point at row {row} has a NaN or infinite coordinate")
            }
            Error::InsufficientPoints { needed, got } => {
                write!(f, "need at least {needed} effective points, got {got}")
            }
            Error::DegenerateCloud {
                min_eigenvalue,
                floor,
            } => {
                write!(
                    f,
                    "cloud scatter is degenerate: min eigenvalue {min_eigenvalue:.6e} \
                     at or below floor {floor:.6e}"
                )
            }
            Error::InvalidWeights { detail } => write!(f, "invalid weights: {detail}"),
            Error::InvalidMixture { detail } => write!(f, "invalid mixture: {detail}"),
            Error::InvalidConfig { what } => write!(f, "invalid configuration: {what}"),
            Error::SamplerStall { attempts } => {
                write!(
                    f,
                    "radial sampler stalled after {attempts} consecutive rejections; \
                     the noise regime is unusable"
                )
            }
            Error::InitDegenerate {
                cluster,
                size,
                needed,
            } => {
                write!(
                    f,
                    "initialization cluster {cluster} has {size} points, \
                     need at least {needed}"
                )
            }
            Error::ComponentCollapse {
                component,
                mass,
                min_mass,
            } => {
                write!(
                    f,
                    "component {component} collapsed: responsibility mass {mass:.6} \
                     below threshold {min_mass:.6}"
                )
            }
        }
    }
}

impl std::error::Error for Error {}
