use std::path::PathBuf;
use std::process::{Command, Output};

use hcbm_cli::report::AnalysisReport;
use hcbm_cli::schema;
use hcbm_core::Method;

fn hcbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcbm")).args(args).output().unwrap()
}

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn report_for(name: &str) -> (AnalysisReport, String) {
    let out = hcbm(&["analyze", &data(name), "--no-timestamp"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    (schema::validate_str(&text).unwrap(), text)
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn interval(r: &AnalysisReport, m: Method) -> (f64, f64) {
    let i = r.results.iter().find(|e| e.method == m).unwrap().interval.as_ref().unwrap();
    (i.lower, i.upper)
}

fn assert_endpoints(r: &AnalysisReport, m: Method, lo: f64, hi: f64) {
    let (l, u) = interval(r, m);
    assert!(
        (round2(l) - lo).abs() <= 0.01 + 1e-9 && (round2(u) - hi).abs() <= 0.01 + 1e-9,
        "{m:?}: ({l}, {u}) vs ({lo}, {hi})"
    );
}

#[test]
fn acute_rejection_report_carries_case_study_values() {
    let (r, _) = report_for("crins_ar.csv");
    assert_eq!(r.dataset.rows, 6);
    assert_eq!(r.config.methods, Method::ALL.to_vec());
    assert_eq!(round2(r.heterogeneity.tau2_dl.unwrap()), 0.16);
    assert_eq!(round2(r.heterogeneity.tau2_bm.unwrap()), 0.38);
    assert_endpoints(&r, Method::Dl, -2.21, -0.96);
    assert_endpoints(&r, Method::Bm, -2.35, -0.87);
    assert_endpoints(&r, Method::Hc, -2.24, -0.89);
    assert_endpoints(&r, Method::HcBm, -2.31, -0.82);
}

#[test]
fn steroid_resistant_rejection_report_shows_sign_change() {
    let (r, _) = report_for("crins_srr.csv");
    assert_endpoints(&r, Method::HcBm, -2.53, 0.20);
    assert!(interval(&r, Method::HcBm).1 > 0.0);
    assert!(interval(&r, Method::Hc).1 < 0.0);
    assert!(interval(&r, Method::Dl).1 < 0.0);
}

#[test]
fn report_round_trips_through_schema_validator() {
    let (r, text) = report_for("crins_ar.csv");
    let mut again = serde_json::to_string_pretty(&r).unwrap();
    again.push('\n');
    assert_eq!(again, text);

    let stamped = hcbm(&["analyze", &data("crins_srr.csv")]);
    let doc: serde_json::Value = serde_json::from_slice(&stamped.stdout).unwrap();
    assert!(doc["metadata"]["generated_at"].is_string());
    assert!(schema::validate(&doc).is_ok());
}

#[test]
fn validator_rejects_tampered_reports() {
    let (_, text) = report_for("crins_ar.csv");
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();

    let mut extra = doc.clone();
    extra["results"][0]["note"] = "x".into();
    assert!(schema::validate(&extra).is_err());

    let mut missing = doc.clone();
    missing["results"].as_array_mut().unwrap().pop();
    assert!(schema::validate(&missing).is_err());

    let mut swapped = doc.clone();
    swapped["results"][0]["interval"]["lower"] = 5.0.into();
    assert!(schema::validate(&swapped).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    std::fs::write(&path, serde_json::to_string(&extra).unwrap()).unwrap();
    assert_eq!(hcbm(&["validate", path.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&path, &text).unwrap();
    assert_eq!(hcbm(&["validate", path.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn analysis_output_is_deterministic_without_timestamp() {
    for format in ["json", "table", "csv"] {
        let a = hcbm(&["analyze", &data("crins_ar.csv"), "--no-timestamp", "--format", format]);
        let b = hcbm(&["analyze", &data("crins_ar.csv"), "--no-timestamp", "--format", format]);
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn malformed_row_names_line_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "study_id,effect,std_err\nHeffron,-2.31,0.60\nGibelli,abc,0.56\n").unwrap();
    let out = hcbm(&["analyze", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert!(out.stdout.is_empty());
}

#[test]
fn exit_codes_follow_the_contract() {
    assert_eq!(hcbm(&["analyze", "/nonexistent/x.csv"]).status.code(), Some(2));
    assert_eq!(hcbm(&["analyze", &data("crins_ar.csv"), "--level", "1.5"]).status.code(), Some(2));
    assert_eq!(hcbm(&["analyze", &data("crins_ar.csv"), "--bm-shape", "0.5"]).status.code(), Some(2));
    assert_eq!(hcbm(&["analyze", &data("crins_ar.csv"), "--methods", "XYZ"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    std::fs::write(&one, "study_id,effect,std_err\nA,1.0,0.5\n").unwrap();
    let partial = hcbm(&["analyze", one.to_str().unwrap(), "--no-timestamp"]);
    assert_eq!(partial.status.code(), Some(4));
    let r = schema::validate_str(&String::from_utf8(partial.stdout).unwrap()).unwrap();
    assert_eq!(r.results.len(), 6);
    let none = hcbm(&["analyze", one.to_str().unwrap(), "--methods", "HC,DL"]);
    assert_eq!(none.status.code(), Some(2));
}

#[test]
fn simulate_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (k, jobs) in ["1", "1", "4"].iter().enumerate() {
        let path = dir.path().join(format!("sim{k}.csv"));
        let out = hcbm(&[
            "simulate", "--tau2", "0.05,0.25", "--n-studies", "3", "--bias", "none,severe", "--reps", "1", "--seed",
            "7", "--jobs", jobs, "--output", path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(text.starts_with("bias,tau2,n_studies,method,coverage,median_length,mean_length,failures,reps,seed\n"));
    assert_eq!(text.lines().count(), 1 + 4 * 5);
}

#[test]
fn reference_grid_has_one_row_per_cell_and_method() {
    let out = hcbm(&["simulate", "--paper-grid", "--reps", "2", "--seed", "42"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 45 * 5);
}

#[test]
fn config_file_matches_equivalent_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    std::fs::write(
        &cfg,
        "theta = 0.5\ntau2 = [0.15]\nn_studies = [3, 6]\nbias = [\"moderate\"]\nreps = 20\nseed = 3\nmethods = [\"DL\", \"HC_BM\"]\n",
    )
    .unwrap();
    let a = hcbm(&["simulate", "--config", cfg.to_str().unwrap()]);
    let b = hcbm(&[
        "simulate", "--tau2", "0.15", "--n-studies", "3,6", "--bias", "moderate", "--reps", "20", "--seed", "3",
        "--methods", "DL,HC_BM",
    ]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);

    std::fs::write(&cfg, "tau2 = [0.15]\nn_studies = [3]\nunknown = 1\n").unwrap();
    assert_eq!(hcbm(&["simulate", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn first_reference_row_is_reproduced() {
    let out = hcbm(&["simulate", "--tau2", "0.05", "--n-studies", "3", "--bias", "none", "--reps", "2000", "--seed", "42"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let expected = [("DL", 0.815), ("HC", 0.878), ("HC_BM", 1.134), ("BM", 1.109), ("IVH", 0.830)];
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let want = expected.iter().find(|(m, _)| *m == cols[3]).unwrap().1;
        let got: f64 = cols[5].parse().unwrap();
        assert!((got - want).abs() <= 0.04, "{}: {got} vs {want}", cols[3]);
    }
}

fn quantile(args: &[&str]) -> f64 {
    let mut full = vec!["quantile"];
    full.extend_from_slice(args);
    let out = hcbm(&full);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let u: f64 = lines.next().unwrap().strip_prefix("u ").unwrap().parse().unwrap();
    let err: f64 = lines.next().unwrap().strip_prefix("abs_cdf_error ").unwrap().parse().unwrap();
    assert!(err <= 1e-6, "achieved error {err}");
    u
}

#[test]
fn quantile_is_symmetric_and_grows_with_plug_in() {
    let w = ["--weights", "1,2,4", "--tau2-plug", "0.15"];
    assert!(quantile(&[&w[..], &["--gamma", "0.5"]].concat()).abs() <= 1e-6);
    let hi = quantile(&[&w[..], &["--gamma", "0.975"]].concat());
    let lo = quantile(&[&w[..], &["--gamma", "0.025"]].concat());
    assert!((hi + lo).abs() <= 1e-5, "{hi} vs {lo}");

    let ar = data("crins_ar.csv");
    let wide = quantile(&[&ar, "--tau2-plug", "0.38"]);
    let narrow = quantile(&[&ar, "--tau2-plug", "0.16"]);
    assert!(wide > narrow, "{wide} vs {narrow}");
}

#[test]
fn quantile_rejects_bad_weights() {
    assert_eq!(hcbm(&["quantile", "--weights", "1,-2"]).status.code(), Some(2));
    assert_eq!(hcbm(&["quantile", "--weights", "1,2", "--gamma", "1.5"]).status.code(), Some(2));
}
