//! Implementations of the CLI subcommands other than `experiment`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ellmix::model::PointCloud;
use ellmix::{
    fit_backfit, fit_direct, log_density, mahalanobis, sample_ellipsoid, sample_mixture,
    ConstantMode, EmConfig, FitConfig, MixtureParams, SeededRng, Termination,
};

use crate::args::{Format, Method, Mode};
use crate::error::{compute_error, CliError};
use crate::model_file::{ModelFile, Provenance};
use crate::points_io::{read_points, write_points};
use crate::report::{save_json, EmReportJson, FitReportJson};

pub fn require_out(out: &Option<PathBuf>) -> Result<&Path, CliError> {
    out.as_deref()
        .ok_or_else(|| CliError::usage("--out is required for this command"))
}

pub fn cmd_sample(
    model_path: &Path,
    n: usize,
    seed: u64,
    out: &Path,
    format: Format,
) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    let model = ModelFile::load(model_path)?;
    let params = model.to_params()?;
    let mut rng = SeededRng::new(seed);
    if params.components().len() == 1 {
        let cloud =
            sample_ellipsoid(&params.components()[0], n, &mut rng).map_err(compute_error)?;
        write_points(out, &cloud, None, format)
    } else {
        let (cloud, labels) = sample_mixture(&params, n, &mut rng).map_err(compute_error)?;
        write_points(out, &cloud, Some(&labels), format)
    }
}

pub fn cmd_fit(
    points_path: &Path,
    method: Method,
    out: &Path,
    report_path: Option<&Path>,
    provenance: Provenance,
) -> Result<(), CliError> {
    let loaded = read_points(points_path)?;
    let cloud = loaded.cloud;
    let (estimate, report) = match method {
        Method::Direct => {
            let est = fit_direct(&cloud, None).map_err(compute_error)?;
            let report = FitReportJson::direct(
                cloud.n(),
                cloud.dim(),
                est.noise_sigma(),
                est.is_within_validity(),
            );
            (est, report)
        }
        Method::Backfit => {
            let (est, rep) =
                fit_backfit(&cloud, None, None, &FitConfig::default()).map_err(compute_error)?;
            let report = FitReportJson::backfit(cloud.n(), cloud.dim(), &rep);
            (est, report)
        }
    };
    let mix = MixtureParams::new(vec![estimate], vec![1.0]).map_err(compute_error)?;
    ModelFile::from_params(&mix, provenance).save(out)?;
    if let Some(path) = report_path {
        save_json(&report, path)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_fit_mixture(
    points_path: &Path,
    k: usize,
    seed: u64,
    out: &Path,
    report_path: Option<&Path>,
    max_iters: Option<usize>,
    ll_rel_tol: Option<f64>,
    min_mass: Option<f64>,
    kmeans_restarts: Option<usize>,
    literal_xi_bar: bool,
    provenance: Provenance,
) -> Result<(), CliError> {
    if k == 0 {
        return Err(CliError::usage("--k must be at least 1"));
    }
    let loaded = read_points(points_path)?;
    let cloud = loaded.cloud;
    let mut config = EmConfig::new(k);
    config.seed = seed;
    if let Some(v) = max_iters {
        config.max_iters = v;
    }
    if let Some(v) = ll_rel_tol {
        config.ll_rel_tol = v;
    }
    if let Some(v) = min_mass {
        config.min_responsibility_mass = Some(v);
    }
    if let Some(v) = kmeans_restarts {
        config.kmeans_restarts = v;
    }
    config.fit.literal_xi_bar = literal_xi_bar;

    let (mix, _resp, report) = ellmix::fit_em(&cloud, None, &config).map_err(compute_error)?;
    ModelFile::from_params(&mix, provenance).save(out)?;
    if let Some(path) = report_path {
        let json = EmReportJson::new(k, cloud.n(), cloud.dim(), &report, mix.weights());
        save_json(&json, path)?;
    }
    if report.termination == Termination::ComponentCollapse {
        return Err(CliError::collapse(format!(
            "a component collapsed after {} iterations; last fully populated state written to {}",
            report.iterations,
            out.display()
        )));
    }
    Ok(())
}

pub fn cmd_density(
    model_path: &Path,
    points_path: &Path,
    mode: Mode,
    out: &Path,
) -> Result<(), CliError> {
    let model = ModelFile::load(model_path)?;
    let params = model.to_params()?;
    let loaded = read_points(points_path)?;
    let cloud: PointCloud = loaded.cloud;
    let k = params.components().len();
    let dim = params.components()[0].dim();
    if cloud.dim() != dim {
        return Err(CliError::data(format!(
            "dimension mismatch: model is {dim}D, points are {}D",
            cloud.dim()
        )));
    }
    let const_mode = match mode {
        Mode::Exact => ConstantMode::Exact,
        Mode::Approx => ConstantMode::Approx,
    };

    let mut text = String::new();
    text.push_str("index");
    for j in 1..=k {
        let _ = write!(text, ",dm_{j}");
    }
    for j in 1..=k {
        let _ = write!(text, ",logf_{j}");
    }
    text.push_str(",mixture_log_density\n");

    let log_w: Vec<f64> = params.weights().iter().map(|w| w.ln()).collect();
    let mut row = vec![0.0f64; k];
    for i in 0..cloud.n() {
        let x = cloud.point(i);
        let _ = write!(text, "{i}");
        for comp in params.components() {
            let dm = mahalanobis(&x, comp).map_err(compute_error)?;
            let _ = write!(text, ",{dm}");
        }
        for (j, comp) in params.components().iter().enumerate() {
            let lf = log_density(&x, comp, const_mode).map_err(compute_error)?;
            let _ = write!(text, ",{lf}");
            row[j] = log_w[j] + lf;
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mix_ld = if max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
        };
        let _ = writeln!(text, ",{mix_ld}");
    }
    std::fs::write(out, text)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", out.display())))?;
    Ok(())
}
