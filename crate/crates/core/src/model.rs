//! The ellipsoidal density and its parameter types.
//!
//! A cloud point is modeled as `x = mu + Sigma^{1/2} w u` with `u` uniform
//! on the unit sphere and `w` a radial factor concentrated around 1. The
//! resulting density is elliptical:
//!
//! ```text
//! f(x) = C_d exp(-(d_m(x) - 1)^2 / (2 sigma^2)),
//! d_m(x) = sqrt((x - mu)^T Sigma^{-1} (x - mu))
//! ```
//!
//! with `C_d` from [`crate::radial::norm_constant`]. Mahalanobis distances
//! are always computed through a triangular solve against the Cholesky
//! factor of `Sigma`, never through an explicit inverse.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::radial::{self, norm_constant, ConstantMode};

/// Relative tolerance for the symmetry check on shape matrices.
const SYMMETRY_REL_TOL: f64 = 1e-12;
/// Eigenvalue floor for shape matrices, relative to trace/d.
const EIGEN_FLOOR_REL: f64 = 1e-12;
/// Tolerance on responsibility row sums.
const RESP_ROW_TOL: f64 = 1e-10;
/// Tolerance on mixture weight sums.
const WEIGHT_SUM_TOL: f64 = 1e-12;

// ── Shape matrix helpers ────────────────────────────────────────────────────

/// Largest relative asymmetry |a_ij - a_ji| / max|a|; 0 for the zero matrix.
pub(crate) fn symmetry_violation(m: &DMatrix<f64>) -> f64 {
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// (min eigenvalue, conditioning floor) of a symmetric matrix.
pub(crate) fn shape_eigen_floor(m: &DMatrix<f64>) -> (f64, f64) {
    let eigen = m.clone().symmetric_eigen();
    let min_eig = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let floor = EIGEN_FLOOR_REL * m.trace() / m.nrows() as f64;
    (min_eig, floor)
}

/// Lower Cholesky factor of an SPD matrix.
pub(crate) fn lower_cholesky(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(sigma.clone())
        .map(|c| c.unpack())
        .ok_or(Error::IllConditionedShape {
            min_eigenvalue: 0.0,
            floor: 0.0,
        })
}

/// Mahalanobis distance given a precomputed lower Cholesky factor.
pub(crate) fn mahalanobis_with_factor(
    l: &DMatrix<f64>,
    mu: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<f64> {
    let z = l
        .solve_lower_triangular(&(x - mu))
        .ok_or(Error::IllConditionedShape {
            min_eigenvalue: 0.0,
            floor: 0.0,
        })?;
    Ok(z.norm())
}

// ── EllipsoidParams ─────────────────────────────────────────────────────────

/// Parameters of one ellipsoidal component: center, SPD shape matrix, and
/// relative radial spread.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidParams {
    mu: DVector<f64>,
    sigma_mat: DMatrix<f64>,
    noise_sigma: f64,
    dim: usize,
    validity: bool,
}

impl EllipsoidParams {
    /// Validates and wraps parameters.
    ///
    /// `sigma_mat` must be symmetric within 1e-12 relative and have all
    /// eigenvalues above 1e-12 * trace/d. `noise_sigma` must lie in (0, 1);
    /// above 0.1 the parameters are accepted but flagged as outside the
    /// small-noise validity regime.
    pub fn new(mu: DVector<f64>, sigma_mat: DMatrix<f64>, noise_sigma: f64) -> Result<Self> {
        let dim = mu.len();
        if dim != 2 && dim != 3 {
            return Err(Error::UnsupportedDimension { dim });
        }
        if sigma_mat.nrows() != dim || sigma_mat.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: sigma_mat.nrows().max(sigma_mat.ncols()),
            });
        }
        for v in mu.iter() {
            if !v.is_finite() {
                return Err(Error::Domain {
                    what: "mu entry",
                    value: *v,
                });
            }
        }
        for v in sigma_mat.iter() {
            if !v.is_finite() {
                return Err(Error::Domain {
                    what: "sigma_mat entry",
                    value: *v,
                });
            }
        }
        let asym = symmetry_violation(&sigma_mat);
        if asym > SYMMETRY_REL_TOL {
            return Err(Error::NonSymmetricShape {
                max_asymmetry: asym,
            });
        }
        let (min_eigenvalue, floor) = shape_eigen_floor(&sigma_mat);
        if min_eigenvalue <= floor {
            return Err(Error::IllConditionedShape {
                min_eigenvalue,
                floor,
            });
        }
        let warning = radial::check_sigma(noise_sigma)?;
        Ok(EllipsoidParams {
            mu,
            sigma_mat,
            noise_sigma,
            dim,
            validity: warning.is_none(),
        })
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma_mat(&self) -> &DMatrix<f64> {
        &self.sigma_mat
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether `noise_sigma` is within the small-noise regime the
    /// approximate constants and estimators were derived for.
    pub fn is_within_validity(&self) -> bool {
        self.validity
    }
}

// ── MixtureParams ───────────────────────────────────────────────────────────

/// A finite mixture of ellipsoidal components.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    components: Vec<EllipsoidParams>,
    weights: Vec<f64>,
}

impl MixtureParams {
    /// Validates component consistency and that weights are a probability
    /// vector (non-negative, summing to 1 within 1e-12).
    pub fn new(components: Vec<EllipsoidParams>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidMixture {
                detail: "mixture needs at least one component".into(),
            });
        }
        if weights.len() != components.len() {
            return Err(Error::InvalidMixture {
                detail: format!(
                    "{} components but {} weights",
                    components.len(),
                    weights.len()
                ),
            });
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::InvalidMixture {
                detail: "components disagree on dimension".into(),
            });
        }
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::InvalidMixture {
                    detail: format!("weight {i} = {w} is not a probability"),
                });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMixture {
                detail: format!("weights sum to {sum}, expected 1"),
            });
        }
        Ok(MixtureParams {
            components,
            weights,
        })
    }

    pub fn components(&self) -> &[EllipsoidParams] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }
}

// ── PointCloud ──────────────────────────────────────────────────────────────

/// An n x d matrix of observed points, d in {2, 3}, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: DMatrix<f64>,
}

impl PointCloud {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::EmptyCloud);
        }
        let dim = points.ncols();
        if dim != 2 && dim != 3 {
            return Err(Error::UnsupportedDimension { dim });
        }
        for i in 0..points.nrows() {
            if points.row(i).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinitePoint { row: i });
            }
        }
        Ok(PointCloud { points })
    }

    /// Builds a cloud from `n * dim` values laid out row by row.
    pub fn from_row_major(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * dim {
            return Err(Error::DimensionMismatch {
                expected: n * dim,
                got: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, dim, &data))
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    /// The i-th point as a column vector.
    pub fn point(&self, i: usize) -> DVector<f64> {
        self.points.row(i).transpose()
    }

    /// A new cloud holding `rows` in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut data = DMatrix::zeros(rows.len(), self.dim());
        for (dst, &src) in rows.iter().enumerate() {
            data.set_row(dst, &self.points.row(src));
        }
        Ok(PointCloud { points: data })
    }
}

// ── Responsibilities ────────────────────────────────────────────────────────

/// Posterior component memberships: an n x K matrix with entries in [0, 1]
/// and rows summing to 1 within 1e-10.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    t: DMatrix<f64>,
}

impl Responsibilities {
    pub fn new(t: DMatrix<f64>) -> Result<Self> {
        if t.nrows() == 0 || t.ncols() == 0 {
            return Err(Error::InvalidMixture {
                detail: "responsibility matrix is empty".into(),
            });
        }
        for i in 0..t.nrows() {
            let mut sum = 0.0;
            for j in 0..t.ncols() {
                let v = t[(i, j)];
                if !(0.0..=1.0 + 1e-12).contains(&v) {
                    return Err(Error::InvalidMixture {
                        detail: format!("responsibility ({i}, {j}) = {v} outside [0, 1]"),
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > RESP_ROW_TOL {
                return Err(Error::InvalidMixture {
                    detail: format!("responsibility row {i} sums to {sum}"),
                });
            }
        }
        Ok(Responsibilities { t })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn n(&self) -> usize {
        self.t.nrows()
    }

    pub fn k(&self) -> usize {
        self.t.ncols()
    }

    /// Per-component effective point counts (column sums).
    pub fn column_masses(&self) -> Vec<f64> {
        (0..self.k()).map(|j| self.t.column(j).sum()).collect()
    }

    /// The j-th column as a plain weight vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.t.column(j).iter().cloned().collect()
    }
}

// ── Density evaluation ──────────────────────────────────────────────────────

/// log(sum(exp(a))) with the max factored out; -inf iff every term is -inf.
pub(crate) fn logsumexp(a: &[f64]) -> f64 {
    let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    let s: f64 = a.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// One component's density, prepared for repeated evaluation: Cholesky
/// factor and log-constant are computed once.
pub(crate) struct PreparedDensity {
    mu: DVector<f64>,
    l: DMatrix<f64>,
    log_c: f64,
    inv_two_sigma_sq: f64,
}

impl PreparedDensity {
    pub(crate) fn new(params: &EllipsoidParams, mode: ConstantMode) -> Result<Self> {
        let chol =
            nalgebra::Cholesky::new(params.sigma_mat().clone()).ok_or(Error::IllConditionedShape {
                min_eigenvalue: 0.0,
                floor: 0.0,
            })?;
        let det = chol.determinant();
        let c = norm_constant(params.dim(), det, params.noise_sigma(), mode)?;
        let s = params.noise_sigma();
        Ok(PreparedDensity {
            mu: params.mu().clone(),
            l: chol.unpack(),
            log_c: c.value.ln(),
            inv_two_sigma_sq: 1.0 / (2.0 * s * s),
        })
    }

    pub(crate) fn mahalanobis(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.mu.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mu.len(),
                got: x.len(),
            });
        }
        mahalanobis_with_factor(&self.l, &self.mu, x)
    }

    pub(crate) fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let dm = self.mahalanobis(x)?;
        let dev = dm - 1.0;
        Ok(self.log_c - dev * dev * self.inv_two_sigma_sq)
    }
}

/// Mahalanobis distance of `x` from the component center under its shape
/// matrix.
pub fn mahalanobis(x: &DVector<f64>, params: &EllipsoidParams) -> Result<f64> {
    if x.len() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: x.len(),
        });
    }
    let l = lower_cholesky(params.sigma_mat())?;
    mahalanobis_with_factor(&l, params.mu(), x)
}

/// Log of the ellipsoidal density at `x`.
pub fn log_density(x: &DVector<f64>, params: &EllipsoidParams, mode: ConstantMode) -> Result<f64> {
    PreparedDensity::new(params, mode)?.log_density(x)
}

/// Total log-likelihood of the cloud under the mixture.
///
/// Per point, component terms `log w_k + log f_k(x)` are combined with
/// log-sum-exp, so the tiny densities of the small-noise regime never
/// underflow. The approximate constant is used throughout, matching what
/// the EM fit optimizes.
pub fn mixture_log_likelihood(cloud: &PointCloud, mix: &MixtureParams) -> Result<f64> {
    if cloud.dim() != mix.dim() {
        return Err(Error::DimensionMismatch {
            expected: mix.dim(),
            got: cloud.dim(),
        });
    }
    let prepared: Vec<PreparedDensity> = mix
        .components()
        .iter()
        .map(|c| PreparedDensity::new(c, ConstantMode::Approx))
        .collect::<Result<_>>()?;
    let log_w: Vec<f64> = mix.weights().iter().map(|w| w.ln()).collect();
    let mut total = 0.0;
    let mut terms = vec![0.0f64; mix.k()];
    for i in 0..cloud.n() {
        let x = cloud.point(i);
        for (k, p) in prepared.iter().enumerate() {
            terms[k] = log_w[k] + p.log_density(&x)?;
        }
        total += logsumexp(&terms);
    }
    Ok(total)
}
