//! JSON report payloads written next to fitted models.

use serde::Serialize;

use ellmix::{EmReport, SingleFitReport, Termination};

#[derive(Serialize)]
pub struct FitReportJson {
    pub method: String,
    pub n: usize,
    pub dim: usize,
    /// Backfitting iterations; 0 for the direct estimator.
    pub iterations: usize,
    /// Final relative parameter change; absent for the direct estimator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_param_delta: Option<f64>,
    pub converged: bool,
    pub noise_sigma: f64,
    /// Whether the fitted spread sits inside the small-spread regime the
    /// model's approximations are built for.
    pub within_validity: bool,
}

impl FitReportJson {
    pub fn direct(n: usize, dim: usize, noise_sigma: f64, within_validity: bool) -> Self {
        FitReportJson {
            method: "direct".into(),
            n,
            dim,
            iterations: 0,
            final_param_delta: None,
            converged: true,
            noise_sigma,
            within_validity,
        }
    }

    pub fn backfit(n: usize, dim: usize, report: &SingleFitReport) -> Self {
        FitReportJson {
            method: "backfit".into(),
            n,
            dim,
            iterations: report.iterations,
            final_param_delta: Some(report.final_param_delta),
            converged: report.converged,
            noise_sigma: report.estimate.noise_sigma(),
            within_validity: report.estimate.is_within_validity(),
        }
    }
}

pub fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::MaxIters => "max_iters",
        Termination::ComponentCollapse => "component_collapse",
    }
}

#[derive(Serialize)]
pub struct EmReportJson {
    pub k: usize,
    pub n: usize,
    pub dim: usize,
    pub iterations: usize,
    pub termination: String,
    pub log_likelihood: f64,
    pub ll_trace: Vec<f64>,
    pub param_delta_trace: Vec<f64>,
    pub uniform_fallback_rows: usize,
    pub weights: Vec<f64>,
}

impl EmReportJson {
    pub fn new(k: usize, n: usize, dim: usize, report: &EmReport, weights: &[f64]) -> Self {
        EmReportJson {
            k,
            n,
            dim,
            iterations: report.iterations,
            termination: termination_name(report.termination).into(),
            log_likelihood: report.log_likelihood,
            ll_trace: report.ll_trace.clone(),
            param_delta_trace: report.param_delta_trace.clone(),
            uniform_fallback_rows: report.uniform_fallback_rows,
            weights: weights.to_vec(),
        }
    }
}

pub fn save_json<T: Serialize>(value: &T, path: &std::path::Path) -> Result<(), crate::error::CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| crate::error::CliError::data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}
