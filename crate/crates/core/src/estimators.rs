//! Moment-based and backfitting estimators for a single ellipsoid.
//!
//! The direct estimator uses the law of the sampled cloud: the empirical
//! mean estimates the center, `d` times the scatter matrix estimates the
//! (slightly inflated) shape, and the variance of the per-point Mahalanobis
//! radii estimates the squared noise spread.
//!
//! The backfitting estimator sharpens the center: given a current
//! `(mu, Sigma)`, each point is pulled back onto the estimated surface and
//! the leftover radial offset is subtracted from the empirical mean,
//!
//! ```text
//! mu' = mean_w(x_i) - mean_w((x_i - mu) / xi_i),   xi_i = d_m(x_i; mu, Sigma)
//! ```
//!
//! after which the shape is re-estimated about `mu'`. Iterating to a fixed
//! point removes most of the radial noise contribution from the center
//! estimate.
//!
//! All estimators take optional per-point weights (used by the mixture
//! M-step). Zero-weight points are skipped outright, so a 0/1 weight vector
//! reproduces the unweighted fit on the corresponding subset bit for bit,
//! and omitted weights are exactly an all-ones vector.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    lower_cholesky, mahalanobis_with_factor, shape_eigen_floor, EllipsoidParams, PointCloud,
};

/// Fitted spreads are floored here so that exact-surface data (sample
/// variance 0) still yields constructible parameters.
const MIN_FITTED_SIGMA: f64 = 1e-12;

/// Controls for the backfitting loop.
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Iteration cap for the mu/Sigma refinement.
    pub max_backfit_iters: usize,
    /// Convergence threshold on the relative parameter change, measured as
    /// max(|mu' - mu| / (1 + |mu'|), |Sigma' - Sigma|_F / |Sigma'|_F).
    pub param_tol: f64,
    /// Mahalanobis radii are clamped below by this before dividing, so
    /// points that land on the current center cannot blow up the update.
    pub min_xi: f64,
    /// Relative ridge added to a near-singular re-estimated shape matrix
    /// (scaled by trace/d). 0 disables; the mixture M-step enables it.
    pub ridge_rel: f64,
    /// Estimate the spread as the weighted scatter of radii about their
    /// unweighted mean over all points, instead of about their weighted
    /// mean. Matches the mixture update in its published form; off by
    /// default because the weighted mean is the self-consistent choice.
    pub literal_xi_bar: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_backfit_iters: 100,
            param_tol: 1e-10,
            min_xi: 1e-9,
            ridge_rel: 0.0,
            literal_xi_bar: false,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.max_backfit_iters == 0 {
            return Err(Error::InvalidConfig {
                what: "max_backfit_iters must be at least 1",
            });
        }
        if !(self.param_tol > 0.0) || !self.param_tol.is_finite() {
            return Err(Error::InvalidConfig {
                what: "param_tol must be positive and finite",
            });
        }
        if !(self.min_xi > 0.0) || !self.min_xi.is_finite() {
            return Err(Error::InvalidConfig {
                what: "min_xi must be positive and finite",
            });
        }
        if !(self.ridge_rel >= 0.0) || !self.ridge_rel.is_finite() {
            return Err(Error::InvalidConfig {
                what: "ridge_rel must be non-negative and finite",
            });
        }
        Ok(())
    }
}

/// Outcome of a backfitting fit.
#[derive(Debug, Clone)]
pub struct SingleFitReport {
    pub iterations: usize,
    pub final_param_delta: f64,
    pub converged: bool,
    pub estimate: EllipsoidParams,
}

// ── Weighted accumulation ───────────────────────────────────────────────────

/// Uniform weights and explicit weights share one code path; uniform means
/// multiplying by exactly 1.0, which is a bitwise no-op.
#[derive(Clone, Copy)]
enum WeightsView<'a> {
    Uniform,
    Per(&'a [f64]),
}

impl<'a> WeightsView<'a> {
    fn get(&self, i: usize) -> f64 {
        match self {
            WeightsView::Uniform => 1.0,
            WeightsView::Per(w) => w[i],
        }
    }
}

/// Validates weights against the cloud and returns the view plus the total
/// effective mass.
fn weights_view<'a>(
    cloud: &PointCloud,
    weights: Option<&'a [f64]>,
) -> Result<(WeightsView<'a>, f64)> {
    let n = cloud.n();
    let view = match weights {
        None => WeightsView::Uniform,
        Some(w) => {
            if w.len() != n {
                return Err(Error::InvalidWeights {
                    detail: format!("{} weights for {} points", w.len(), n),
                });
            }
            if let Some((i, v)) = w
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v < 0.0)
            {
                return Err(Error::InvalidWeights {
                    detail: format!("weight {i} = {v} is negative or non-finite"),
                });
            }
            WeightsView::Per(w)
        }
    };
    let mass = match view {
        WeightsView::Uniform => n as f64,
        WeightsView::Per(w) => w.iter().sum(),
    };
    let needed = cloud.dim() + 1;
    if mass < needed as f64 {
        return Err(Error::InsufficientPoints {
            needed,
            got: mass.floor() as usize,
        });
    }
    Ok((view, mass))
}

fn weighted_mean(cloud: &PointCloud, view: WeightsView, mass: f64) -> DVector<f64> {
    let mut sum = DVector::zeros(cloud.dim());
    for i in 0..cloud.n() {
        let w = view.get(i);
        if w == 0.0 {
            continue;
        }
        sum += w * cloud.point(i);
    }
    sum / mass
}

/// `d` times the weighted scatter about `center`, which estimates the
/// inflated shape matrix. Applies the ridge if the result is
/// rank-deficient and errors if it still is afterwards.
fn shape_about(
    cloud: &PointCloud,
    view: WeightsView,
    mass: f64,
    center: &DVector<f64>,
    ridge_rel: f64,
) -> Result<DMatrix<f64>> {
    let d = cloud.dim();
    let mut scatter = DMatrix::zeros(d, d);
    for i in 0..cloud.n() {
        let w = view.get(i);
        if w == 0.0 {
            continue;
        }
        let diff = cloud.point(i) - center;
        scatter.ger(w, &diff, &diff, 1.0);
    }
    let mut shape = scatter * (d as f64 / mass);
    let (mut min_eigenvalue, mut floor) = shape_eigen_floor(&shape);
    if min_eigenvalue <= floor && ridge_rel > 0.0 {
        let bump = ridge_rel * shape.trace() / d as f64;
        for i in 0..d {
            shape[(i, i)] += bump;
        }
        let rechecked = shape_eigen_floor(&shape);
        min_eigenvalue = rechecked.0;
        floor = rechecked.1;
    }
    if min_eigenvalue <= floor {
        return Err(Error::DegenerateCloud {
            min_eigenvalue,
            floor,
        });
    }
    Ok(shape)
}

/// Spread estimate from the Mahalanobis radii under `(mu, Sigma)`;
/// `l` is the Cholesky factor of the shape just estimated.
fn sigma_hat(
    cloud: &PointCloud,
    view: WeightsView,
    mass: f64,
    l: &DMatrix<f64>,
    mu: &DVector<f64>,
    literal_xi_bar: bool,
) -> Result<f64> {
    let var = if literal_xi_bar {
        // Radii mean taken unweighted over all points, per the published
        // mixture update; the scatter about it stays weighted.
        let n = cloud.n();
        let mut xi = Vec::with_capacity(n);
        for i in 0..n {
            xi.push(mahalanobis_with_factor(l, mu, &cloud.point(i))?);
        }
        let xi_bar: f64 = xi.iter().sum::<f64>() / n as f64;
        let mut num = 0.0;
        for (i, v) in xi.iter().enumerate() {
            let w = view.get(i);
            if w == 0.0 {
                continue;
            }
            num += w * (v - xi_bar) * (v - xi_bar);
        }
        num / mass
    } else {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for i in 0..cloud.n() {
            let w = view.get(i);
            if w == 0.0 {
                continue;
            }
            let v = mahalanobis_with_factor(l, mu, &cloud.point(i))?;
            s1 += w * v;
            s2 += w * v * v;
        }
        let m1 = s1 / mass;
        s2 / mass - m1 * m1
    };
    Ok(var.max(0.0).sqrt().max(MIN_FITTED_SIGMA))
}

/// One mu/Sigma refinement given the current center and shape factor.
fn backfit_mu_sigma(
    cloud: &PointCloud,
    view: WeightsView,
    mass: f64,
    l0: &DMatrix<f64>,
    mu0: &DVector<f64>,
    config: &FitConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = cloud.dim();
    let mut sum_x = DVector::zeros(d);
    let mut sum_corr = DVector::zeros(d);
    for i in 0..cloud.n() {
        let w = view.get(i);
        if w == 0.0 {
            continue;
        }
        let x = cloud.point(i);
        let xi = mahalanobis_with_factor(l0, mu0, &x)?.max(config.min_xi);
        sum_corr += (w / xi) * (&x - mu0);
        sum_x += w * x;
    }
    let mu1 = sum_x / mass - sum_corr / mass;
    let sigma1 = shape_about(cloud, view, mass, &mu1, config.ridge_rel)?;
    Ok((mu1, sigma1))
}

/// Relative parameter movement between two (mu, Sigma) states.
fn param_delta(
    mu_old: &DVector<f64>,
    sigma_old: &DMatrix<f64>,
    mu_new: &DVector<f64>,
    sigma_new: &DMatrix<f64>,
) -> f64 {
    let mu_change = (mu_new - mu_old).norm() / (1.0 + mu_new.norm());
    let sigma_change = (sigma_new - sigma_old).norm() / sigma_new.norm();
    mu_change.max(sigma_change)
}

// ── Public estimators ───────────────────────────────────────────────────────

/// Moment estimator: weighted mean, `d` x weighted scatter, and the
/// weighted variance of the Mahalanobis radii.
pub fn fit_direct(cloud: &PointCloud, weights: Option<&[f64]>) -> Result<EllipsoidParams> {
    let (view, mass) = weights_view(cloud, weights)?;
    let mu = weighted_mean(cloud, view, mass);
    let shape = shape_about(cloud, view, mass, &mu, 0.0)?;
    let l = lower_cholesky(&shape)?;
    let sigma = sigma_hat(cloud, view, mass, &l, &mu, false)?;
    EllipsoidParams::new(mu, shape, sigma)
}

/// One backfitting update from `current`, re-estimating the spread under
/// the new center and shape.
pub fn backfit_step(
    cloud: &PointCloud,
    weights: Option<&[f64]>,
    current: &EllipsoidParams,
    config: &FitConfig,
) -> Result<EllipsoidParams> {
    config.validate()?;
    if cloud.dim() != current.dim() {
        return Err(Error::DimensionMismatch {
            expected: current.dim(),
            got: cloud.dim(),
        });
    }
    let (view, mass) = weights_view(cloud, weights)?;
    let l0 = lower_cholesky(current.sigma_mat())?;
    let (mu1, sigma1) = backfit_mu_sigma(cloud, view, mass, &l0, current.mu(), config)?;
    let l1 = lower_cholesky(&sigma1)?;
    let sigma = sigma_hat(cloud, view, mass, &l1, &mu1, config.literal_xi_bar)?;
    EllipsoidParams::new(mu1, sigma1, sigma)
}

/// Backfitting fit: starts from `init` (or the direct estimate) and
/// iterates the mu/Sigma update until the relative parameter change drops
/// below `param_tol` or the iteration cap is hit. The spread is estimated
/// once, from the final center and shape.
pub fn fit_backfit(
    cloud: &PointCloud,
    weights: Option<&[f64]>,
    init: Option<&EllipsoidParams>,
    config: &FitConfig,
) -> Result<(EllipsoidParams, SingleFitReport)> {
    config.validate()?;
    let (view, mass) = weights_view(cloud, weights)?;
    let (mut mu, mut sigma_mat) = match init {
        Some(p) => {
            if p.dim() != cloud.dim() {
                return Err(Error::DimensionMismatch {
                    expected: cloud.dim(),
                    got: p.dim(),
                });
            }
            (p.mu().clone(), p.sigma_mat().clone())
        }
        None => {
            let mu = weighted_mean(cloud, view, mass);
            let shape = shape_about(cloud, view, mass, &mu, config.ridge_rel)?;
            (mu, shape)
        }
    };

    let mut iterations = 0;
    let mut delta = f64::INFINITY;
    while iterations < config.max_backfit_iters {
        let l = lower_cholesky(&sigma_mat)?;
        let (mu_new, sigma_new) = backfit_mu_sigma(cloud, view, mass, &l, &mu, config)?;
        delta = param_delta(&mu, &sigma_mat, &mu_new, &sigma_new);
        mu = mu_new;
        sigma_mat = sigma_new;
        iterations += 1;
        if delta < config.param_tol {
            break;
        }
    }
    let converged = delta < config.param_tol;

    let l = lower_cholesky(&sigma_mat)?;
    let sigma = sigma_hat(cloud, view, mass, &l, &mu, config.literal_xi_bar)?;
    let estimate = EllipsoidParams::new(mu, sigma_mat, sigma)?;
    let report = SingleFitReport {
        iterations,
        final_param_delta: delta,
        converged,
        estimate: estimate.clone(),
    };
    Ok((estimate, report))
}
