//! Mixture fitting: K-means initialization, EM with soft responsibilities,
//! and hard classification.
//!
//! The E-step evaluates responsibilities in log space with a log-sum-exp
//! reduction, so well-separated components cannot underflow each other.
//! The M-step reuses the single-ellipsoid backfitting fit, weighted by the
//! responsibility column of each component and warm-started at that
//! component's previous parameters. Zero responsibilities are skipped in
//! the weighted accumulations, so a hard 0/1 responsibility matrix
//! reproduces independent per-subset fits bit for bit.
//!
//! A component whose responsibility mass falls below the configured floor
//! is treated as collapsed: the driver stops and returns the last state
//! that still had every component populated, flagged accordingly.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::{fit_backfit, fit_direct, FitConfig};
use crate::model::{logsumexp, MixtureParams, PointCloud, PreparedDensity, Responsibilities};
use crate::radial::ConstantMode;
use crate::sampler::SeededRng;

/// Largest tolerated per-step relative drop in the log-likelihood. A
/// candidate M-step that falls further than this below the current value
/// is rejected and the loop stops at the current iterate.
const ASCENT_SLACK: f64 = 1e-6;

/// Why the EM loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative log-likelihood improvement fell below the tolerance, or a
    /// candidate step that would have lowered the log-likelihood beyond
    /// the ascent slack was rejected.
    Converged,
    /// Iteration cap reached first.
    MaxIters,
    /// A component lost its responsibility mass; the last fully populated
    /// state is returned.
    ComponentCollapse,
}

/// Controls for `fit_em` and `kmeans_init`.
#[derive(Debug, Clone)]
pub struct EmConfig {
    /// Number of mixture components.
    pub k: usize,
    /// EM iteration cap.
    pub max_iters: usize,
    /// Stop when (ll' - ll) / |ll| drops below this.
    pub ll_rel_tol: f64,
    /// A component collapses when its responsibility mass drops below this;
    /// `None` means `dim + 1`, the minimum mass a shape estimate needs.
    pub min_responsibility_mass: Option<f64>,
    /// Independent K-means starts; the lowest within-cluster sum of squares
    /// wins.
    pub kmeans_restarts: usize,
    /// Lloyd iteration cap per start.
    pub kmeans_max_iters: usize,
    /// Lloyd stops when the relative centroid movement drops below this.
    pub kmeans_tol: f64,
    /// Seed for the initialization RNG (K-means starting picks).
    pub seed: u64,
    /// Configuration forwarded to the per-component backfitting fits. The
    /// default enables a tiny relative ridge so a momentarily flat
    /// responsibility column cannot abort the whole run.
    pub fit: FitConfig,
}

impl EmConfig {
    pub fn new(k: usize) -> Self {
        EmConfig {
            k,
            max_iters: 500,
            ll_rel_tol: 1e-8,
            min_responsibility_mass: None,
            kmeans_restarts: 5,
            kmeans_max_iters: 100,
            kmeans_tol: 1e-10,
            seed: 0,
            fit: FitConfig {
                ridge_rel: 1e-10,
                ..FitConfig::default()
            },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig {
                what: "k must be at least 1",
            });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig {
                what: "max_iters must be at least 1",
            });
        }
        if !(self.ll_rel_tol > 0.0) || !self.ll_rel_tol.is_finite() {
            return Err(Error::InvalidConfig {
                what: "ll_rel_tol must be positive and finite",
            });
        }
        if let Some(m) = self.min_responsibility_mass {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::InvalidConfig {
                    what: "min_responsibility_mass must be positive and finite",
                });
            }
        }
        if self.kmeans_restarts == 0 || self.kmeans_max_iters == 0 {
            return Err(Error::InvalidConfig {
                what: "kmeans_restarts and kmeans_max_iters must be at least 1",
            });
        }
        if !(self.kmeans_tol > 0.0) || !self.kmeans_tol.is_finite() {
            return Err(Error::InvalidConfig {
                what: "kmeans_tol must be positive and finite",
            });
        }
        Ok(())
    }
}

/// Result of one E-step.
#[derive(Debug, Clone)]
pub struct EStep {
    pub resp: Responsibilities,
    pub log_likelihood: f64,
    /// Points whose responsibility row had to fall back to uniform because
    /// every component's log term was -inf.
    pub uniform_fallback_rows: usize,
}

/// Progress record for an EM run.
#[derive(Debug, Clone)]
pub struct EmReport {
    /// Completed M-steps.
    pub iterations: usize,
    pub termination: Termination,
    /// Log-likelihood of the returned state.
    pub log_likelihood: f64,
    /// Log-likelihood after initialization and after each iteration.
    pub ll_trace: Vec<f64>,
    /// Largest relative parameter movement across components, per iteration.
    pub param_delta_trace: Vec<f64>,
    /// Uniform fallback count in the final E-step.
    pub uniform_fallback_rows: usize,
}

// ── K-means initialization ──────────────────────────────────────────────────

fn squared_distance(a: nalgebra::DVectorView<f64>, b: &nalgebra::DVector<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..b.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

struct KmeansRun {
    labels: Vec<usize>,
    wcss: f64,
}

/// One K-means run: the first center is a random point, the rest are picked
/// greedily as the point farthest from the chosen set, then Lloyd updates.
fn kmeans_once(cloud: &PointCloud, config: &EmConfig, rng: &mut SeededRng) -> KmeansRun {
    let n = cloud.n();
    let k = config.k;
    let points = cloud.points();

    let mut centers: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(k);
    centers.push(points.row(rng.random_range(0..n)).transpose());
    let mut min_d2 = vec![f64::INFINITY; n];
    while centers.len() < k {
        let newest = centers.last().unwrap();
        let mut best = 0;
        let mut best_d2 = f64::NEG_INFINITY;
        for i in 0..n {
            let d2 = squared_distance(points.row(i).transpose().as_view(), newest);
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
            if min_d2[i] > best_d2 {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        centers.push(points.row(best).transpose());
    }

    let mut labels = vec![0usize; n];
    for _ in 0..config.kmeans_max_iters {
        // Assignment: nearest center, ties to the lowest index.
        let mut changed = false;
        let mut nearest_d2 = vec![f64::INFINITY; n];
        for i in 0..n {
            let x = points.row(i).transpose();
            let mut best_j = 0;
            let mut best_d2 = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let d2 = squared_distance(x.as_view(), c);
                if d2 < best_d2 {
                    best_d2 = d2;
                    best_j = j;
                }
            }
            nearest_d2[i] = best_d2;
            if labels[i] != best_j {
                labels[i] = best_j;
                changed = true;
            }
        }

        // Update: means of the assigned points; an empty cluster is reseeded
        // at the point currently worst-served by its own center.
        let d = cloud.dim();
        let mut sums = vec![nalgebra::DVector::zeros(d); centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for i in 0..n {
            sums[labels[i]] += points.row(i).transpose();
            counts[labels[i]] += 1;
        }
        let mut movement = 0.0f64;
        let mut taken = vec![false; n];
        for j in 0..centers.len() {
            let new_center = if counts[j] > 0 {
                &sums[j] / counts[j] as f64
            } else {
                let mut far = 0;
                let mut far_d2 = f64::NEG_INFINITY;
                for i in 0..n {
                    if !taken[i] && nearest_d2[i] > far_d2 {
                        far_d2 = nearest_d2[i];
                        far = i;
                    }
                }
                taken[far] = true;
                changed = true;
                points.row(far).transpose()
            };
            movement = movement.max((&new_center - &centers[j]).norm() / (1.0 + new_center.norm()));
            centers[j] = new_center;
        }
        if !changed || movement < config.kmeans_tol {
            break;
        }
    }

    // Final assignment and objective under the final centers.
    let mut wcss = 0.0;
    for i in 0..n {
        let x = points.row(i).transpose();
        let mut best_j = 0;
        let mut best_d2 = f64::INFINITY;
        for (j, c) in centers.iter().enumerate() {
            let d2 = squared_distance(x.as_view(), c);
            if d2 < best_d2 {
                best_d2 = d2;
                best_j = j;
            }
        }
        labels[i] = best_j;
        wcss += best_d2;
    }
    KmeansRun { labels, wcss }
}

/// K-means initialization for the mixture: best of `kmeans_restarts` runs
/// by within-cluster sum of squares, then a direct ellipsoid fit per
/// cluster with proportions from the cluster sizes.
pub fn kmeans_init(
    cloud: &PointCloud,
    config: &EmConfig,
    rng: &mut SeededRng,
) -> Result<MixtureParams> {
    config.validate()?;
    let n = cloud.n();
    let needed = config.k * (cloud.dim() + 1);
    if n < needed {
        return Err(Error::InsufficientPoints { needed, got: n });
    }

    let mut best: Option<KmeansRun> = None;
    for _ in 0..config.kmeans_restarts {
        let run = kmeans_once(cloud, config, rng);
        if best.as_ref().map_or(true, |b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    let run = best.unwrap();

    let mut components = Vec::with_capacity(config.k);
    let mut weights = Vec::with_capacity(config.k);
    for j in 0..config.k {
        let rows: Vec<usize> = (0..n).filter(|&i| run.labels[i] == j).collect();
        if rows.len() < cloud.dim() + 1 {
            return Err(Error::InitDegenerate {
                cluster: j,
                size: rows.len(),
                needed: cloud.dim() + 1,
            });
        }
        let sub = cloud.subset(&rows)?;
        components.push(fit_direct(&sub, None)?);
        weights.push(rows.len() as f64 / n as f64);
    }
    MixtureParams::new(components, weights)
}

// ── EM proper ───────────────────────────────────────────────────────────────

/// Soft assignment of every point to every component, with the mixture
/// log-likelihood evaluated on the way.
pub fn e_step(cloud: &PointCloud, mix: &MixtureParams) -> Result<EStep> {
    let k = mix.components().len();
    if cloud.dim() != mix.components()[0].dim() {
        return Err(Error::DimensionMismatch {
            expected: mix.components()[0].dim(),
            got: cloud.dim(),
        });
    }
    let prepared: Vec<PreparedDensity> = mix
        .components()
        .iter()
        .map(|c| PreparedDensity::new(c, ConstantMode::Approx))
        .collect::<Result<_>>()?;
    let log_w: Vec<f64> = mix.weights().iter().map(|w| w.ln()).collect();

    let n = cloud.n();
    let mut t = DMatrix::zeros(n, k);
    let mut ll = 0.0;
    let mut fallback = 0usize;
    let mut row = vec![0.0f64; k];
    for i in 0..n {
        let x = cloud.point(i);
        for j in 0..k {
            row[j] = log_w[j] + prepared[j].log_density(&x)?;
        }
        let lse = logsumexp(&row);
        ll += lse;
        if lse == f64::NEG_INFINITY {
            fallback += 1;
            for j in 0..k {
                t[(i, j)] = 1.0 / k as f64;
            }
        } else {
            for j in 0..k {
                t[(i, j)] = (row[j] - lse).exp();
            }
        }
    }
    Ok(EStep {
        resp: Responsibilities::new(t)?,
        log_likelihood: ll,
        uniform_fallback_rows: fallback,
    })
}

/// Re-estimates every component from its responsibility column, warm-started
/// at the previous parameters, and the proportions from the column masses.
/// Errors with `ComponentCollapse` if any column's mass is below the floor.
pub fn m_step(
    cloud: &PointCloud,
    resp: &Responsibilities,
    prev: &MixtureParams,
    config: &EmConfig,
) -> Result<MixtureParams> {
    config.validate()?;
    let k = prev.components().len();
    if resp.k() != k || resp.n() != cloud.n() {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: resp.k(),
        });
    }
    let min_mass = config
        .min_responsibility_mass
        .unwrap_or((cloud.dim() + 1) as f64);
    let masses = resp.column_masses();
    for (j, &mass) in masses.iter().enumerate() {
        if mass < min_mass {
            return Err(Error::ComponentCollapse {
                component: j,
                mass,
                min_mass,
            });
        }
    }

    let mut components = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for j in 0..k {
        let col = resp.column(j);
        let (est, _) = fit_backfit(
            cloud,
            Some(col.as_slice()),
            Some(&prev.components()[j]),
            &config.fit,
        )?;
        components.push(est);
        weights.push(masses[j] / cloud.n() as f64);
    }
    MixtureParams::new(components, weights)
}

fn max_component_delta(old: &MixtureParams, new: &MixtureParams) -> f64 {
    let mut delta = 0.0f64;
    for (a, b) in old.components().iter().zip(new.components()) {
        let mu_change = (b.mu() - a.mu()).norm() / (1.0 + b.mu().norm());
        let sigma_change = (b.sigma_mat() - a.sigma_mat()).norm() / b.sigma_mat().norm();
        delta = delta.max(mu_change).max(sigma_change);
    }
    for (wa, wb) in old.weights().iter().zip(new.weights()) {
        delta = delta.max((wb - wa).abs());
    }
    delta
}

/// Full EM run. Starts from `init` when given, otherwise from K-means.
/// Returns the fitted mixture, the responsibilities under it, and the
/// iteration record. A component collapse is not an error here: the last
/// fully populated state is returned with the termination flag set.
pub fn fit_em(
    cloud: &PointCloud,
    init: Option<&MixtureParams>,
    config: &EmConfig,
) -> Result<(MixtureParams, Responsibilities, EmReport)> {
    config.validate()?;
    let mut current = match init {
        Some(m) => {
            if m.components().len() != config.k {
                return Err(Error::InvalidMixture {
                    detail: format!(
                        "init has {} components, config.k = {}",
                        m.components().len(),
                        config.k
                    ),
                });
            }
            m.clone()
        }
        None => {
            let mut rng = SeededRng::new(config.seed);
            kmeans_init(cloud, config, &mut rng)?
        }
    };

    let mut e = e_step(cloud, &current)?;
    let mut ll = e.log_likelihood;
    let mut ll_trace = vec![ll];
    let mut param_delta_trace = Vec::new();
    let mut iterations = 0;
    let mut termination = Termination::MaxIters;

    for _ in 0..config.max_iters {
        let next = match m_step(cloud, &e.resp, &current, config) {
            Ok(next) => next,
            Err(Error::ComponentCollapse { .. }) => {
                termination = Termination::ComponentCollapse;
                break;
            }
            Err(other) => return Err(other),
        };
        let e_next = e_step(cloud, &next)?;
        let ll_next = e_next.log_likelihood;
        let rel = (ll_next - ll) / ll.abs().max(f64::MIN_POSITIVE);
        // The moment-based M-step is a surrogate, not an exact likelihood
        // maximizer, so near a stationary point a candidate can lower the
        // log-likelihood. Reject such a step and keep the current iterate;
        // accepted steps never dip below the per-step slack, so the trace
        // stays (near-)monotone by construction.
        if rel < -ASCENT_SLACK {
            termination = Termination::Converged;
            break;
        }
        param_delta_trace.push(max_component_delta(&current, &next));
        current = next;
        e = e_next;
        iterations += 1;
        ll_trace.push(ll_next);
        ll = ll_next;
        if rel < config.ll_rel_tol {
            termination = Termination::Converged;
            break;
        }
    }

    let report = EmReport {
        iterations,
        termination,
        log_likelihood: ll,
        ll_trace,
        param_delta_trace,
        uniform_fallback_rows: e.uniform_fallback_rows,
    };
    Ok((current, e.resp, report))
}

/// Hard labels: the most responsible component per point, ties to the
/// lowest index.
pub fn classify(resp: &Responsibilities) -> Vec<usize> {
    let t = resp.matrix();
    let mut labels = Vec::with_capacity(resp.n());
    for i in 0..resp.n() {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for j in 0..resp.k() {
            if t[(i, j)] > best_v {
                best_v = t[(i, j)];
                best = j;
            }
        }
        labels.push(best);
    }
    labels
}
