//! Simulation studies with machine-readable outputs.
//!
//! Each study writes one or two per-replicate CSV data files plus an
//! aggregate JSON. Data files are pure functions of (command, seed): all
//! randomness flows through seed chains derived as
//!
//! ```text
//! base      = derive_seed(master, study_tag)
//! replicate = derive_seed(derive_seed(base, n), r)
//! ```
//!
//! so replicates are independent and insertion-order free. Wall-clock
//! measurements never enter the CSVs; they live in the JSON `timing` block
//! alongside the provenance, which is the only part of the output allowed
//! to differ between two identically seeded runs.
//!
//! Files are written to `<name>.partial` first and renamed into place, so
//! an interrupted run never leaves a truncated file under the final name.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use ellmix::{
    classify, derive_seed, fit_backfit, fit_direct, fit_em, sample_ellipsoid, sample_mixture,
    EllipsoidParams, EmConfig, FitConfig, MixtureParams, SeededRng,
};

use crate::args::StudyName;
use crate::error::{compute_error, CliError};
use crate::model_file::Provenance;
use crate::report::termination_name;

// ── Study parameter sets ────────────────────────────────────────────────────

/// Anisotropic single-ellipsoid truth: axes 100/50(/50), centered, spread 0.01.
pub fn single_truth(dim: usize) -> EllipsoidParams {
    let diag: Vec<f64> = match dim {
        2 => vec![100.0 * 100.0, 50.0 * 50.0],
        _ => vec![100.0 * 100.0, 50.0 * 50.0, 50.0 * 50.0],
    };
    EllipsoidParams::new(
        DVector::zeros(dim),
        DMatrix::from_diagonal(&DVector::from_row_slice(&diag)),
        0.01,
    )
    .unwrap()
}

/// Three equally weighted shells along the x axis, 1800 apart.
pub fn mixture_truth() -> MixtureParams {
    let shape = DMatrix::from_diagonal(&DVector::from_row_slice(&[
        1000.0 * 1000.0,
        500.0 * 500.0,
        500.0 * 500.0,
    ]));
    let comps = [0.0, 1800.0, 3600.0]
        .iter()
        .map(|&x| {
            EllipsoidParams::new(
                DVector::from_row_slice(&[x, 0.0, 0.0]),
                shape.clone(),
                0.01,
            )
            .unwrap()
        })
        .collect();
    MixtureParams::new(comps, vec![1.0 / 3.0; 3]).unwrap()
}

/// Greedy nearest-center matching: `out[slot]` is the fitted component
/// claimed by truth component `slot`.
pub fn match_components(truth: &MixtureParams, fitted: &MixtureParams) -> Vec<usize> {
    let k = truth.components().len();
    let mut taken = vec![false; k];
    let mut out = vec![0usize; k];
    for slot in 0..k {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for j in 0..k {
            if taken[j] {
                continue;
            }
            let d = (fitted.components()[j].mu() - truth.components()[slot].mu()).norm();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        taken[best] = true;
        out[slot] = best;
    }
    out
}

/// Adjusted Rand index between two hard labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let comb2 = |x: f64| x * (x - 1.0) / 2.0;
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let n = a.len() as f64;
    let sum_cells: f64 = table.iter().flatten().map(|&c| comb2(c as f64)).sum();
    let sum_rows: f64 = table
        .iter()
        .map(|row| comb2(row.iter().sum::<usize>() as f64))
        .sum();
    let sum_cols: f64 = (0..kb)
        .map(|j| comb2(table.iter().map(|row| row[j]).sum::<usize>() as f64))
        .sum();
    let expected = sum_rows * sum_cols / comb2(n);
    let max_index = 0.5 * (sum_rows + sum_cols);
    if max_index == expected {
        return 1.0;
    }
    (sum_cells - expected) / (max_index - expected)
}

// ── Aggregation plumbing ────────────────────────────────────────────────────

#[derive(Serialize, Debug, Clone, Copy)]
pub struct QuantileSet {
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

/// Quantiles by sorted linear interpolation.
pub fn quantiles(values: &[f64]) -> QuantileSet {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let at = |p: f64| -> f64 {
        let h = p * (v.len() as f64 - 1.0);
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    QuantileSet {
        q05: at(0.05),
        q25: at(0.25),
        q50: at(0.50),
        q75: at(0.75),
        q95: at(0.95),
    }
}

#[derive(Serialize)]
struct GroupJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    n: usize,
    estimator: String,
    quantiles: BTreeMap<String, QuantileSet>,
}

#[derive(Serialize)]
struct VarianceJson {
    estimator: String,
    per_coordinate_variance: Vec<f64>,
}

/// Wall-clock measurements, written to a separate `<study>_timing.json`
/// so every data file stays a pure function of (command, seed).
#[derive(Serialize)]
struct TimingJson {
    study: String,
    total_seconds: f64,
    /// One entry per replicate, in execution order: seconds spent sampling
    /// and fitting that replicate.
    per_replicate_seconds: Vec<f64>,
}

#[derive(Serialize)]
struct StudyJson {
    study: String,
    replicates: u64,
    n_grid: Vec<usize>,
    groups: Vec<GroupJson>,
    /// Least-squares slope of ln(median center error) against ln(n),
    /// per estimator (rate study only).
    #[serde(skip_serializing_if = "Option::is_none")]
    slope: Option<BTreeMap<String, f64>>,
    /// Replicate variance of the fitted center per coordinate
    /// (variance-reduction study only).
    #[serde(skip_serializing_if = "Option::is_none")]
    variance: Option<Vec<VarianceJson>>,
    /// variance(backfit) / variance(direct) per coordinate.
    #[serde(skip_serializing_if = "Option::is_none")]
    variance_ratio: Option<Vec<f64>>,
    provenance: Provenance,
}

/// Writes through a `.partial` name so interrupted runs never leave a
/// truncated file under the final name.
fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    std::fs::write(&partial, text)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", partial.display())))?;
    std::fs::rename(&partial, path)
        .map_err(|e| CliError::data(format!("cannot finalize {}: {e}", path.display())))?;
    Ok(())
}

fn float_column(rows: &[Vec<f64>], col: usize) -> Vec<f64> {
    rows.iter().map(|r| r[col]).collect()
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

// ── Study drivers ───────────────────────────────────────────────────────────

pub struct ExperimentRequest {
    pub name: StudyName,
    pub replicates: Option<u64>,
    pub n_grid: Option<Vec<usize>>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub command_line: String,
}

pub fn run_experiment(req: &ExperimentRequest) -> Result<(), CliError> {
    std::fs::create_dir_all(&req.out_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", req.out_dir.display())))?;
    match req.name {
        StudyName::Single => run_single(req),
        StudyName::Rate => run_rate(req),
        StudyName::VarianceReduction => run_variance_reduction(req),
        StudyName::Mixture => run_mixture(req),
    }
}

fn provenance_for(req: &ExperimentRequest) -> Provenance {
    Provenance {
        seed: req.seed,
        command: req.command_line.clone(),
        timestamp: crate::model_file::timestamp_now(),
    }
}

/// Single-ellipsoid recovery in 3D and 2D: per replicate, the direct and
/// the backfitting fits of one sampled cloud.
fn run_single(req: &ExperimentRequest) -> Result<(), CliError> {
    let replicates = req.replicates.unwrap_or(50);
    let n_grid = req.n_grid.clone().unwrap_or_else(|| vec![10_000]);
    let started = Instant::now();
    let mut per_replicate = Vec::new();
    let mut groups = Vec::new();

    let study_base = derive_seed(req.seed, 1);
    for dim in [3usize, 2] {
        let truth = single_truth(dim);
        let base = derive_seed(study_base, dim as u64);
        let mut csv = String::new();
        let mu_names: &[&str] = if dim == 3 {
            &["mu_1", "mu_2", "mu_3"]
        } else {
            &["mu_1", "mu_2"]
        };
        let _ = writeln!(
            csv,
            "n,replicate,seed,estimator,{},e_sigma,sigma_hat",
            mu_names.join(",")
        );
        for &n in &n_grid {
            // rows[estimator] -> per-replicate [mu..., e_sigma, sigma_hat]
            let mut rows: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
            for r in 0..replicates {
                let seed = derive_seed(derive_seed(base, n as u64), r);
                let tick = Instant::now();
                let cloud = sample_ellipsoid(&truth, n, &mut SeededRng::new(seed))
                    .map_err(compute_error)?;
                let direct = fit_direct(&cloud, None).map_err(compute_error)?;
                let (backfit, _) = fit_backfit(&cloud, None, None, &FitConfig::default())
                    .map_err(compute_error)?;
                per_replicate.push(tick.elapsed().as_secs_f64());
                for (which, fit) in [(0usize, &direct), (1, &backfit)] {
                    let e_sigma = (fit.sigma_mat() - truth.sigma_mat()).norm();
                    let mut rec: Vec<f64> = fit.mu().iter().copied().collect();
                    rec.push(e_sigma);
                    rec.push(fit.noise_sigma());
                    let name = ["direct", "backfit"][which];
                    let _ = write!(csv, "{n},{r},{seed},{name}");
                    for v in &rec {
                        let _ = write!(csv, ",{v}");
                    }
                    csv.push('\n');
                    rows[which].push(rec);
                }
            }
            for (which, name) in [(0usize, "direct"), (1, "backfit")] {
                let mut q = BTreeMap::new();
                for (c, stat) in mu_names.iter().enumerate() {
                    q.insert(stat.to_string(), quantiles(&float_column(&rows[which], c)));
                }
                q.insert(
                    "e_sigma".into(),
                    quantiles(&float_column(&rows[which], dim)),
                );
                q.insert(
                    "sigma_hat".into(),
                    quantiles(&float_column(&rows[which], dim + 1)),
                );
                groups.push(GroupJson {
                    dim: Some(dim),
                    n,
                    estimator: name.into(),
                    quantiles: q,
                });
            }
        }
        write_atomic(&req.out_dir.join(format!("single_d{dim}.csv")), &csv)?;
    }

    let json = StudyJson {
        study: "single".into(),
        replicates,
        n_grid,
        groups,
        slope: None,
        variance: None,
        variance_ratio: None,
        provenance: provenance_for(req),
    };
    write_timing(req, "single", started, per_replicate)?;
    write_json(&req.out_dir.join("single.json"), &json)
}

/// Convergence-rate study: center error of the plain empirical mean and of
/// the backfitting center across a grid of sample sizes.
fn run_rate(req: &ExperimentRequest) -> Result<(), CliError> {
    let replicates = req.replicates.unwrap_or(50);
    let n_grid = req
        .n_grid
        .clone()
        .unwrap_or_else(|| vec![1_000, 10_000, 100_000]);
    let truth = single_truth(3);
    let base = derive_seed(req.seed, 3);
    let started = Instant::now();
    let mut per_replicate = Vec::new();

    let mut csv = String::from("n,replicate,seed,estimator,mu_err,e_sigma,sigma_hat\n");
    let mut groups = Vec::new();
    let mut medians: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    for &n in &n_grid {
        let mut rows: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
        for r in 0..replicates {
            let seed = derive_seed(derive_seed(base, n as u64), r);
            let tick = Instant::now();
            let cloud =
                sample_ellipsoid(&truth, n, &mut SeededRng::new(seed)).map_err(compute_error)?;
            let direct = fit_direct(&cloud, None).map_err(compute_error)?;
            let (backfit, _) =
                fit_backfit(&cloud, None, None, &FitConfig::default()).map_err(compute_error)?;
            per_replicate.push(tick.elapsed().as_secs_f64());
            for (which, fit) in [(0usize, &direct), (1, &backfit)] {
                let mu_err = (fit.mu() - truth.mu()).norm();
                let e_sigma = (fit.sigma_mat() - truth.sigma_mat()).norm();
                let name = ["direct", "backfit"][which];
                let _ = writeln!(
                    csv,
                    "{n},{r},{seed},{name},{mu_err},{e_sigma},{}",
                    fit.noise_sigma()
                );
                rows[which].push(vec![mu_err, e_sigma, fit.noise_sigma()]);
            }
        }
        for (which, name) in [(0usize, "direct"), (1, "backfit")] {
            let mut q = BTreeMap::new();
            for (c, stat) in ["mu_err", "e_sigma", "sigma_hat"].iter().enumerate() {
                q.insert(stat.to_string(), quantiles(&float_column(&rows[which], c)));
            }
            medians[which].push((n as f64, q["mu_err"].q50));
            groups.push(GroupJson {
                dim: Some(3),
                n,
                estimator: name.into(),
                quantiles: q,
            });
        }
    }
    write_atomic(&req.out_dir.join("rate.csv"), &csv)?;

    let mut slope = BTreeMap::new();
    for (which, name) in [(0usize, "direct"), (1, "backfit")] {
        slope.insert(name.to_string(), log_log_slope(&medians[which]));
    }
    let json = StudyJson {
        study: "rate".into(),
        replicates,
        n_grid,
        groups,
        slope: Some(slope),
        variance: None,
        variance_ratio: None,
        provenance: provenance_for(req),
    };
    write_timing(req, "rate", started, per_replicate)?;
    write_json(&req.out_dir.join("rate.json"), &json)
}

/// Least-squares slope of ln(y) on ln(x).
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

/// Replicate variance of the fitted center: plain empirical mean (the
/// direct estimator's center) against the backfitting center.
fn run_variance_reduction(req: &ExperimentRequest) -> Result<(), CliError> {
    let replicates = req.replicates.unwrap_or(200);
    let n = req.n_grid.as_ref().map_or(1_000, |g| g[0]);
    let truth = single_truth(3);
    let base = derive_seed(req.seed, 4);
    let started = Instant::now();
    let mut per_replicate = Vec::new();

    let mut csv = String::from("replicate,seed,estimator,mu_1,mu_2,mu_3\n");
    let mut centers: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    for r in 0..replicates {
        let seed = derive_seed(derive_seed(base, n as u64), r);
        let tick = Instant::now();
        let cloud =
            sample_ellipsoid(&truth, n, &mut SeededRng::new(seed)).map_err(compute_error)?;
        let direct = fit_direct(&cloud, None).map_err(compute_error)?;
        let (backfit, _) =
            fit_backfit(&cloud, None, None, &FitConfig::default()).map_err(compute_error)?;
        per_replicate.push(tick.elapsed().as_secs_f64());
        for (which, fit) in [(0usize, &direct), (1, &backfit)] {
            let name = ["direct", "backfit"][which];
            let mu: Vec<f64> = fit.mu().iter().copied().collect();
            let _ = writeln!(csv, "{r},{seed},{name},{},{},{}", mu[0], mu[1], mu[2]);
            centers[which].push(mu);
        }
    }
    write_atomic(&req.out_dir.join("variance_reduction.csv"), &csv)?;

    let mut groups = Vec::new();
    let mut variances = Vec::new();
    for (which, name) in [(0usize, "direct"), (1, "backfit")] {
        let mut q = BTreeMap::new();
        for c in 0..3 {
            q.insert(
                format!("mu_{}", c + 1),
                quantiles(&float_column(&centers[which], c)),
            );
        }
        groups.push(GroupJson {
            dim: Some(3),
            n,
            estimator: name.into(),
            quantiles: q,
        });
        variances.push(VarianceJson {
            estimator: name.into(),
            per_coordinate_variance: (0..3)
                .map(|c| variance(&float_column(&centers[which], c)))
                .collect(),
        });
    }
    let ratio: Vec<f64> = (0..3)
        .map(|c| {
            variances[1].per_coordinate_variance[c] / variances[0].per_coordinate_variance[c]
        })
        .collect();

    let json = StudyJson {
        study: "variance-reduction".into(),
        replicates,
        n_grid: vec![n],
        groups,
        slope: None,
        variance: Some(variances),
        variance_ratio: Some(ratio),
        provenance: provenance_for(req),
    };
    write_timing(req, "variance_reduction", started, per_replicate)?;
    write_json(&req.out_dir.join("variance_reduction.json"), &json)
}

/// Three-shell mixture recovery with EM from K-means starts; components
/// are matched to the truth by nearest center before errors are recorded.
fn run_mixture(req: &ExperimentRequest) -> Result<(), CliError> {
    let replicates = req.replicates.unwrap_or(50);
    let n = req.n_grid.as_ref().map_or(3_000, |g| g[0]);
    let truth = mixture_truth();
    let base = derive_seed(req.seed, 2);
    let started = Instant::now();
    let mut per_replicate = Vec::new();

    let mut csv = String::from(
        "replicate,seed,n,iterations,termination,log_likelihood,ari,\
         center_err_1,center_err_2,center_err_3,weight_1,weight_2,weight_3,\
         sigma_hat_1,sigma_hat_2,sigma_hat_3\n",
    );
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for r in 0..replicates {
        let data_seed = derive_seed(derive_seed(base, n as u64), r);
        let em_seed = derive_seed(data_seed, 1);
        let tick = Instant::now();
        let (cloud, labels) =
            sample_mixture(&truth, n, &mut SeededRng::new(data_seed)).map_err(compute_error)?;
        let mut config = EmConfig::new(3);
        config.seed = em_seed;
        let (mix, resp, report) = fit_em(&cloud, None, &config).map_err(compute_error)?;
        per_replicate.push(tick.elapsed().as_secs_f64());

        let order = match_components(&truth, &mix);
        let hard = classify(&resp);
        let mapped: Vec<usize> = labels.iter().map(|&l| order[l]).collect();
        let ari = adjusted_rand_index(&mapped, &hard);

        let mut rec = vec![report.iterations as f64, report.log_likelihood, ari];
        let mut center_errs = Vec::new();
        let mut weights = Vec::new();
        let mut sigmas = Vec::new();
        for (slot, &j) in order.iter().enumerate() {
            center_errs
                .push((mix.components()[j].mu() - truth.components()[slot].mu()).norm());
            weights.push(mix.weights()[j]);
            sigmas.push(mix.components()[j].noise_sigma());
        }
        rec.extend_from_slice(&center_errs);
        rec.extend_from_slice(&weights);
        rec.extend_from_slice(&sigmas);
        rows.push(rec);

        let _ = writeln!(
            csv,
            "{r},{data_seed},{n},{},{},{},{ari},{},{},{},{},{},{},{},{},{}",
            report.iterations,
            termination_name(report.termination),
            report.log_likelihood,
            center_errs[0],
            center_errs[1],
            center_errs[2],
            weights[0],
            weights[1],
            weights[2],
            sigmas[0],
            sigmas[1],
            sigmas[2]
        );
    }
    write_atomic(&req.out_dir.join("mixture.csv"), &csv)?;

    let stat_names = [
        "iterations",
        "log_likelihood",
        "ari",
        "center_err_1",
        "center_err_2",
        "center_err_3",
        "weight_1",
        "weight_2",
        "weight_3",
        "sigma_hat_1",
        "sigma_hat_2",
        "sigma_hat_3",
    ];
    let mut q = BTreeMap::new();
    for (c, stat) in stat_names.iter().enumerate() {
        q.insert(stat.to_string(), quantiles(&float_column(&rows, c)));
    }
    let json = StudyJson {
        study: "mixture".into(),
        replicates,
        n_grid: vec![n],
        groups: vec![GroupJson {
            dim: Some(3),
            n,
            estimator: "em".into(),
            quantiles: q,
        }],
        slope: None,
        variance: None,
        variance_ratio: None,
        provenance: provenance_for(req),
    };
    write_timing(req, "mixture", started, per_replicate)?;
    write_json(&req.out_dir.join("mixture.json"), &json)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, &text)
}

fn write_timing(
    req: &ExperimentRequest,
    study: &str,
    started: Instant,
    per_replicate: Vec<f64>,
) -> Result<(), CliError> {
    let timing = TimingJson {
        study: study.into(),
        total_seconds: started.elapsed().as_secs_f64(),
        per_replicate_seconds: per_replicate,
    };
    write_json(&req.out_dir.join(format!("{study}_timing.json")), &timing)
}
