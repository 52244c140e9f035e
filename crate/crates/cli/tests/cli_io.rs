//! End-to-end behavior of the `ellmix` binary: file formats, diagnostics,
//! exit codes, and reproducibility of outputs.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ellmix"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .env("SOURCE_DATE_EPOCH", "1755475200")
        .output()
        .expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("read {name}: {e}"))
}

const MODEL_3D: &str = r#"{
  "schema_version": "1",
  "dim": 3,
  "components": [
    {
      "mu": [0.0, 0.0, 0.0],
      "sigma_mat": [10000.0, 0.0, 0.0, 0.0, 2500.0, 0.0, 0.0, 0.0, 2500.0],
      "noise_sigma": 0.01,
      "weight": 1.0
    }
  ],
  "provenance": {"seed": 0, "command": "fixture", "timestamp": "2026-08-18T00:00:00+00:00"}
}
"#;

const MODEL_2D: &str = r#"{
  "schema_version": "1",
  "dim": 2,
  "components": [
    {
      "mu": [10.0, -4.0],
      "sigma_mat": [9.0, 0.0, 0.0, 4.0],
      "noise_sigma": 0.02,
      "weight": 1.0
    }
  ],
  "provenance": {"seed": 0, "command": "fixture", "timestamp": "2026-08-18T00:00:00+00:00"}
}
"#;

const MODEL_MIX_3: &str = r#"{
  "schema_version": "1",
  "dim": 2,
  "components": [
    {"mu": [0.0, 0.0], "sigma_mat": [100.0, 0.0, 0.0, 25.0], "noise_sigma": 0.02, "weight": 0.5},
    {"mu": [200.0, 0.0], "sigma_mat": [100.0, 0.0, 0.0, 25.0], "noise_sigma": 0.02, "weight": 0.25},
    {"mu": [0.0, 200.0], "sigma_mat": [100.0, 0.0, 0.0, 25.0], "noise_sigma": 0.02, "weight": 0.25}
  ],
  "provenance": {"seed": 0, "command": "fixture", "timestamp": "2026-08-18T00:00:00+00:00"}
}
"#;

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("model3.json"), MODEL_3D).unwrap();
    std::fs::write(dir.path().join("model2.json"), MODEL_2D).unwrap();
    std::fs::write(dir.path().join("mix3.json"), MODEL_MIX_3).unwrap();
    dir
}

// ── sample ──────────────────────────────────────────────────────────────────

#[test]
fn sample_writes_a_csv_with_the_right_header_and_row_count() {
    let dir = setup();
    let out = run_in(
        dir.path(),
        &["sample", "--model", "model3.json", "--n", "100", "--seed", "1", "--out", "pts.csv"],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = read(dir.path(), "pts.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,z"));
    assert_eq!(lines.count(), 100);
}

#[test]
fn sample_with_n_zero_is_a_usage_error_and_writes_nothing() {
    let dir = setup();
    let out = run_in(
        dir.path(),
        &["sample", "--model", "model3.json", "--n", "0", "--out", "pts.csv"],
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    assert!(!dir.path().join("pts.csv").exists());
}

#[test]
fn sample_from_a_mixture_adds_a_label_column() {
    let dir = setup();
    let out = run_in(
        dir.path(),
        &["sample", "--model", "mix3.json", "--n", "400", "--seed", "3", "--out", "pts.csv"],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = read(dir.path(), "pts.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,label"));
    let mut seen = [false; 3];
    for line in lines {
        let label: usize = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(label < 3, "label out of range in {line:?}");
        seen[label] = true;
    }
    assert_eq!(seen, [true; 3], "all three labels should occur at n=400");
}

#[test]
fn sample_is_reproducible_for_a_fixed_seed() {
    let dir = setup();
    for name in ["a.csv", "b.csv"] {
        let out = run_in(
            dir.path(),
            &["sample", "--model", "model3.json", "--n", "50", "--seed", "9", "--out", name],
        );
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    assert_eq!(read(dir.path(), "a.csv"), read(dir.path(), "b.csv"));
}

#[test]
fn sample_rejects_an_unknown_schema_version() {
    let dir = setup();
    let bumped = MODEL_3D.replace("\"schema_version\": \"1\"", "\"schema_version\": \"2\"");
    std::fs::write(dir.path().join("future.json"), bumped).unwrap();
    let out = run_in(
        dir.path(),
        &["sample", "--model", "future.json", "--n", "5", "--out", "pts.csv"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("schema_version"));
}

#[test]
fn sample_rejects_a_model_with_a_non_spd_shape() {
    let dir = setup();
    let bad = MODEL_2D.replace(
        "[9.0, 0.0, 0.0, 4.0]",
        "[9.0, 0.0, 0.0, -4.0]",
    );
    std::fs::write(dir.path().join("bad.json"), bad).unwrap();
    let out = run_in(
        dir.path(),
        &["sample", "--model", "bad.json", "--n", "5", "--out", "pts.csv"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
}

// ── point-file formats ──────────────────────────────────────────────────────

#[test]
fn ply_output_round_trips_through_fit() {
    let dir = setup();
    let out = run_in(
        dir.path(),
        &[
            "sample", "--model", "model3.json", "--n", "2000", "--seed", "4",
            "--format", "ply", "--out", "pts.ply",
        ],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let head = read(dir.path(), "pts.ply");
    assert!(head.starts_with("ply\n"), "PLY magic missing");
    assert!(head.contains("element vertex 2000"));

    let out = run_in(
        dir.path(),
        &["fit", "--points", "pts.ply", "--out", "fit.json"],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let fitted: serde_json::Value = serde_json::from_str(&read(dir.path(), "fit.json")).unwrap();
    let mu = fitted["components"][0]["mu"].as_array().unwrap();
    for v in mu {
        assert!(v.as_f64().unwrap().abs() < 5.0, "center off: {mu:?}");
    }
}

#[test]
fn ply_output_in_two_dimensions_is_a_usage_error() {
    let dir = setup();
    let out = run_in(
        dir.path(),
        &[
            "sample", "--model", "model2.json", "--n", "10", "--format", "ply",
            "--out", "pts.ply",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
}

#[test]
fn a_malformed_csv_cell_is_reported_with_row_and_column() {
    let dir = setup();
    std::fs::write(
        dir.path().join("bad.csv"),
        "x,y,z\n1.0,2.0,3.0\n0.5,0.5,0.5\n1,2,abc\n",
    )
    .unwrap();
    let out = run_in(dir.path(), &["fit", "--points", "bad.csv", "--out", "fit.json"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    let msg = stderr_of(&out);
    assert!(msg.contains("row 4"), "no row number in {msg:?}");
    assert!(msg.contains("column \"z\""), "no column name in {msg:?}");
    assert!(msg.contains("abc"), "offending token missing in {msg:?}");
}

#[test]
fn a_csv_with_the_wrong_field_count_names_the_row() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.csv"), "x,y\n1.0,2.0\n3.0\n").unwrap();
    let out = run_in(dir.path(), &["fit", "--points", "bad.csv", "--out", "fit.json"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("row 3"), "{}", stderr_of(&out));
}

// ── fit ─────────────────────────────────────────────────────────────────────

#[test]
fn fit_recovers_the_generating_model_end_to_end() {
    let dir = setup();
    let out = run_in(
        dir.path(),
        &["sample", "--model", "model3.json", "--n", "4000", "--seed", "12", "--out", "pts.csv"],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let out = run_in(
        dir.path(),
        &["fit", "--points", "pts.csv", "--out", "fit.json", "--report", "rep.json"],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));

    let fitted: serde_json::Value = serde_json::from_str(&read(dir.path(), "fit.json")).unwrap();
    let comp = &fitted["components"][0];
    for v in comp["mu"].as_array().unwrap() {
        assert!(v.as_f64().unwrap().abs() < 3.0);
    }
    let sig = comp["sigma_mat"].as_array().unwrap();
    let diag_truth = [10000.0, 2500.0, 2500.0];
    for (i, truth) in diag_truth.iter().enumerate() {
        let got = sig[i * 3 + i].as_f64().unwrap();
        assert!(
            (got - truth).abs() / truth < 0.15,
            "sigma_mat[{i},{i}] = {got}, want ~{truth}"
        );
    }
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "rep.json")).unwrap();
    assert_eq!(report["method"], "backfit");
    assert!(report["iterations"].as_u64().unwrap() >= 1);
    assert_eq!(report["converged"], true);
}

#[test]
fn fit_direct_reports_zero_iterations() {
    let dir = setup();
    run_in(
        dir.path(),
        &["sample", "--model", "model2.json", "--n", "300", "--seed", "2", "--out", "pts.csv"],
    );
    let out = run_in(
        dir.path(),
        &[
            "fit", "--points", "pts.csv", "--method", "direct",
            "--out", "fit.json", "--report", "rep.json",
        ],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "rep.json")).unwrap();
    assert_eq!(report["method"], "direct");
    assert_eq!(report["iterations"], 0);
}

#[test]
fn fitting_a_degenerate_cloud_exits_with_the_numeric_code() {
    let dir = setup();
    let mut text = String::from("x,y\n");
    for i in 0..40 {
        text.push_str(&format!("{}.0,0.0\n", i));
    }
    std::fs::write(dir.path().join("line.csv"), text).unwrap();
    let out = run_in(dir.path(), &["fit", "--points", "line.csv", "--out", "fit.json"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr_of(&out));
}

#[test]
fn fit_model_files_round_trip_byte_identically() {
    let dir = setup();
    run_in(
        dir.path(),
        &["sample", "--model", "model2.json", "--n", "200", "--seed", "5", "--out", "pts.csv"],
    );
    for name in ["m1.json", "m2.json"] {
        // Identical command text matters: the command line is recorded in
        // the provenance block, so use one output name and rename.
        let out = run_in(
            dir.path(),
            &["fit", "--points", "pts.csv", "--out", "m.json"],
        );
        assert!(out.status.success(), "{}", stderr_of(&out));
        std::fs::rename(dir.path().join("m.json"), dir.path().join(name)).unwrap();
    }
    assert_eq!(read(dir.path(), "m1.json"), read(dir.path(), "m2.json"));
}

// ── fit-mixture ─────────────────────────────────────────────────────────────

#[test]
fn fit_mixture_recovers_three_separated_components() {
    let dir = setup();
    run_in(
        dir.path(),
        &["sample", "--model", "mix3.json", "--n", "900", "--seed", "21", "--out", "pts.csv"],
    );
    let out = run_in(
        dir.path(),
        &[
            "fit-mixture", "--points", "pts.csv", "--k", "3", "--seed", "8",
            "--out", "mix.json", "--report", "rep.json",
        ],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let fitted: serde_json::Value = serde_json::from_str(&read(dir.path(), "mix.json")).unwrap();
    let comps = fitted["components"].as_array().unwrap();
    assert_eq!(comps.len(), 3);
    let truth = [[0.0, 0.0], [200.0, 0.0], [0.0, 200.0]];
    for t in truth {
        let best = comps
            .iter()
            .map(|c| {
                let mu = c["mu"].as_array().unwrap();
                let dx = mu[0].as_f64().unwrap() - t[0];
                let dy = mu[1].as_f64().unwrap() - t[1];
                (dx * dx + dy * dy).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(best < 15.0, "no component near {t:?} (closest {best})");
    }
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "rep.json")).unwrap();
    assert_eq!(report["termination"], "converged");
    let trace = report["ll_trace"].as_array().unwrap();
    for w in trace.windows(2) {
        let prev = w[0].as_f64().unwrap();
        let next = w[1].as_f64().unwrap();
        assert!(next >= prev - 1e-6 * prev.abs(), "log-likelihood dropped");
    }
}

#[test]
fn fit_mixture_twice_with_one_seed_gives_identical_models() {
    let dir = setup();
    run_in(
        dir.path(),
        &["sample", "--model", "mix3.json", "--n", "600", "--seed", "30", "--out", "pts.csv"],
    );
    for name in ["m1.json", "m2.json"] {
        let out = run_in(
            dir.path(),
            &["fit-mixture", "--points", "pts.csv", "--k", "3", "--seed", "8", "--out", "m.json"],
        );
        assert!(out.status.success(), "{}", stderr_of(&out));
        std::fs::rename(dir.path().join("m.json"), dir.path().join(name)).unwrap();
    }
    assert_eq!(read(dir.path(), "m1.json"), read(dir.path(), "m2.json"));
}

#[test]
fn a_forced_collapse_exits_with_its_own_code_but_still_writes_the_model() {
    let dir = setup();
    run_in(
        dir.path(),
        &["sample", "--model", "mix3.json", "--n", "300", "--seed", "14", "--out", "pts.csv"],
    );
    let out = run_in(
        dir.path(),
        &[
            "fit-mixture", "--points", "pts.csv", "--k", "3", "--seed", "8",
            "--min-mass", "1e9", "--out", "mix.json", "--report", "rep.json",
        ],
    );
    assert_eq!(out.status.code(), Some(5), "{}", stderr_of(&out));
    let fitted: serde_json::Value = serde_json::from_str(&read(dir.path(), "mix.json")).unwrap();
    assert_eq!(fitted["components"].as_array().unwrap().len(), 3);
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "rep.json")).unwrap();
    assert_eq!(report["termination"], "component_collapse");
}

#[test]
fn an_oversized_k_still_terminates() {
    let dir = setup();
    run_in(
        dir.path(),
        &["sample", "--model", "model2.json", "--n", "500", "--seed", "40", "--out", "pts.csv"],
    );
    let out = run_in(
        dir.path(),
        &[
            "fit-mixture", "--points", "pts.csv", "--k", "5", "--seed", "8",
            "--max-iters", "60", "--out", "mix.json", "--report", "rep.json",
        ],
    );
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 5, "unexpected exit {code}: {}", stderr_of(&out));
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "rep.json")).unwrap();
    let term = report["termination"].as_str().unwrap();
    assert!(
        ["converged", "max_iters", "component_collapse"].contains(&term),
        "unexpected termination {term}"
    );
}

// ── density ─────────────────────────────────────────────────────────────────

#[test]
fn density_emits_one_row_per_point_with_distances_and_log_densities() {
    let dir = setup();
    run_in(
        dir.path(),
        &["sample", "--model", "mix3.json", "--n", "50", "--seed", "17", "--out", "pts.csv"],
    );
    let out = run_in(
        dir.path(),
        &[
            "density", "--model", "mix3.json", "--points", "pts.csv",
            "--mode", "approx", "--out", "dens.csv",
        ],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = read(dir.path(), "dens.csv");
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("index,dm_1,dm_2,dm_3,logf_1,logf_2,logf_3,mixture_log_density")
    );
    assert_eq!(lines.count(), 50);

    // A point exactly at the first component's center has d_m = 0 there.
    std::fs::write(dir.path().join("center.csv"), "x,y\n0.0,0.0\n").unwrap();
    let out = run_in(
        dir.path(),
        &["density", "--model", "mix3.json", "--points", "center.csv", "--out", "c.csv"],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let row = read(dir.path(), "c.csv").lines().nth(1).unwrap().to_string();
    let dm1: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(dm1, 0.0);
}

#[test]
fn density_rejects_points_of_the_wrong_dimension() {
    let dir = setup();
    run_in(
        dir.path(),
        &["sample", "--model", "model3.json", "--n", "10", "--seed", "2", "--out", "pts.csv"],
    );
    let out = run_in(
        dir.path(),
        &["density", "--model", "model2.json", "--points", "pts.csv", "--out", "dens.csv"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("dimension"));
}

// ── experiment ──────────────────────────────────────────────────────────────

#[test]
fn a_single_replicate_experiment_yields_a_degenerate_but_valid_summary() {
    let dir = setup();
    let out = run_in(
        dir.path(),
        &[
            "experiment", "--name", "variance-reduction", "--replicates", "1",
            "--n-grid", "400", "--seed", "6", "--out", "exp",
        ],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let summary: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "exp/variance_reduction.json")).unwrap();
    assert_eq!(summary["replicates"], 1);
    for group in summary["groups"].as_array().unwrap() {
        for (_, q) in group["quantiles"].as_object().unwrap() {
            let (q05, q50, q95) = (
                q["q05"].as_f64().unwrap(),
                q["q50"].as_f64().unwrap(),
                q["q95"].as_f64().unwrap(),
            );
            assert_eq!(q05, q50);
            assert_eq!(q50, q95);
        }
    }
    // No leftover partial files once the run completed.
    for entry in std::fs::read_dir(dir.path().join("exp")).unwrap() {
        let name = entry.unwrap().file_name();
        assert!(
            !name.to_string_lossy().ends_with(".partial"),
            "leftover partial file {name:?}"
        );
    }
}

#[test]
fn experiment_csv_record_counts_and_quantile_order_hold() {
    let dir = setup();
    let out = run_in(
        dir.path(),
        &[
            "experiment", "--name", "single", "--replicates", "4",
            "--n-grid", "500", "--seed", "11", "--out", "exp",
        ],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    for csv in ["exp/single_d3.csv", "exp/single_d2.csv"] {
        let text = read(dir.path(), csv);
        // 4 replicates x 2 estimators + header.
        assert_eq!(text.lines().count(), 1 + 4 * 2, "wrong row count in {csv}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "exp/single.json")).unwrap();
    for group in summary["groups"].as_array().unwrap() {
        for (stat, q) in group["quantiles"].as_object().unwrap() {
            let vals = [
                q["q05"].as_f64().unwrap(),
                q["q25"].as_f64().unwrap(),
                q["q50"].as_f64().unwrap(),
                q["q75"].as_f64().unwrap(),
                q["q95"].as_f64().unwrap(),
            ];
            for w in vals.windows(2) {
                assert!(w[0] <= w[1], "quantiles out of order for {stat}: {vals:?}");
            }
        }
    }
}

#[test]
fn experiment_requires_an_out_directory() {
    let dir = setup();
    let out = run_in(dir.path(), &["experiment", "--name", "rate"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
}
