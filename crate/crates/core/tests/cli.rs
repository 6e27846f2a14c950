use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::Parser;
use cogrelay::cli::{run, Cli, EXIT_CONFIG, EXIT_FAIL, EXIT_OK, EXIT_VALIDITY};
use cogrelay::closed_form::secondary_outage_mrc;
use cogrelay::scenario::ScenarioParams;
use cogrelay::validate::{assess, gather};

/// Reference MRC outage from a 30-digit evaluation.
const REFERENCE_OUTAGE: f64 = 0.014_284_062_562_942_833;

fn reference_text() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/reference.conf");
    fs::read_to_string(path).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn invoke(args: &[&str]) -> (u8, String) {
    let cli = Cli::try_parse_from(std::iter::once("cogrelay").chain(args.iter().copied())).unwrap();
    let mut out = Vec::new();
    let code = run(cli, &mut out);
    (code, String::from_utf8(out).unwrap())
}

#[test]
fn eval_reports_budget_and_outage() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "ref.conf", &reference_text());
    let (code, text) = invoke(&["eval", f.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(text.contains("P_ST = 3.1622776602e1 (15.0000 dB, peak)"), "{text}");
    assert!(text.contains("P_SR = 3.1622776602e1 (15.0000 dB, peak)"));
    assert!(text.contains("[closed_form] validity = valid"));
    let outage: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("[closed_form] outage_mrc = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((outage / REFERENCE_OUTAGE - 1.0).abs() < 1e-9);

    let (code, json) = invoke(&["eval", f.to_str().unwrap(), "--json", "--engine", "quadrature", "--engine", "closed-form"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(json.trim()).unwrap();
    assert_eq!(v["budget"]["st_binding"], "peak");
    let (cf, q) = (v["closed_form"]["outage_mrc"].as_f64().unwrap(), v["quadrature"]["outage_mrc"].as_f64().unwrap());
    assert!(((cf - q) / q).abs() < 1e-6);
}

#[test]
fn config_error_exits_two_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "bad.conf", &reference_text().replace("lambda_p = 0.1", "lambda_p = 1.5"));
    let (code, _) = invoke(&["eval", f.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
    let out = Process::new(env!("CARGO_BIN_EXE_cogrelay"))
        .args(["eval", f.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda_p"));
    let (code, _) = invoke(&["eval", dir.path().join("missing.conf").to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn outside_validity_exits_three_only_for_closed_form_alone() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "weak.conf", &reference_text().replace("omega_st_sd = 1.5", "omega_st_sd = 0.4"));
    let (code, text) = invoke(&["eval", f.to_str().unwrap()]);
    assert_eq!(code, EXIT_VALIDITY);
    assert!(text.contains("outside_validity_region"));
    let (code, _) = invoke(&["eval", f.to_str().unwrap(), "--engine", "closed-form", "--engine", "quadrature"]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn degenerate_scenario_quadrature_and_labeled_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let text = reference_text()
        .replace("omega_st_sd = 1.5", "omega_st_sd = 0.5")
        .replace("n_relays = 2", "n_relays = 1");
    let f = write(dir.path(), "degenerate.conf", &text);
    let (code, out) = invoke(&["eval", f.to_str().unwrap(), "--engine", "quadrature"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("[quadrature] outage_mrc"));
    let (code, out) = invoke(&["eval", f.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("validity = degenerate_fallback"), "{out}");
    assert!(out.contains("substituted by quadrature"));
}

fn sweep_file(dir: &Path, values: &str, engines: &str) -> PathBuf {
    let text = reference_text().replace("p_pt_db = 20\n", "")
        + &format!("sweep_axis = p_pt_db\nsweep_values = {values}\nengines = {engines}\ncurves = mrc_with_direct, relay_only\nmc_samples = 20000\nmc_seed = 9\n");
    write(dir, "grid.sweep", &text)
}

#[test]
fn single_point_sweep_has_one_row_per_curve_and_engine() {
    let dir = tempfile::tempdir().unwrap();
    let f = sweep_file(dir.path(), "20", "closed_form, monte_carlo, quadrature");
    let out = dir.path().join("out.csv");
    let (code, _) = invoke(&["sweep", f.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "axis_name,axis_value,curve,engine,outage,ci_low,ci_high,p_st,p_sr,st_binding,sr_binding,validity"
    );
    assert_eq!(lines.len(), 1 + 2 * 3);
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 12);
        let is_mc = cols[3] == "monte_carlo";
        assert_eq!(cols[5].is_empty(), !is_mc, "{line}");
        assert_eq!(cols[11].is_empty(), cols[3] != "closed_form", "{line}");
    }
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&first[..4], ["p_pt_db", "2.0000000000000000e1", "mrc_with_direct", "closed_form"]);
    assert!((first[4].parse::<f64>().unwrap() / REFERENCE_OUTAGE - 1.0).abs() < 1e-9);
    assert_eq!(&first[9..], ["peak", "peak", "valid"]);
}

#[test]
fn sweep_output_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let f = sweep_file(dir.path(), "6, 12, 18, 24", "closed_form, monte_carlo");
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4", "1"].into_iter().enumerate() {
        let out = dir.path().join(format!("out{i}.csv"));
        let (code, _) = invoke(&["sweep", f.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(code, EXIT_OK);
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn bad_sweep_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = sweep_file(dir.path(), "10, 5", "closed_form");
    let out = dir.path().join("out.csv");
    let (code, _) = invoke(&["sweep", f.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(!out.exists());
}

#[test]
fn validate_passes_on_reference() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "ref.conf", &reference_text());
    let (code, text) = invoke(&["validate", f.to_str().unwrap(), "--seed", "42", "--samples", "1000000"]);
    assert_eq!(code, EXIT_OK, "{text}");
    assert!(text.trim_end().ends_with("PASS"));
    assert_eq!(text.matches("FAIL").count(), 0);
}

#[test]
fn validate_passes_when_primary_outage_binds() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "bound.conf", &reference_text().replace("p_pk_db = 15", "p_pk_db = 30"));
    let (code, text) = invoke(&["validate", f.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{text}");
    assert!(text.contains("PASS primary_outage_st: primary_outage binding"), "{text}");
}

#[test]
fn flipped_i3_sign_fails_validation() {
    let p = ScenarioParams::reference(20.0, 15.0, 0.1, 2);
    let mut inputs = gather(&p, 42, 1_000_000).unwrap();
    assert!(assess(&inputs).passed());
    let r = secondary_outage_mrc(&p).unwrap();
    inputs.closed_mrc = r.i1 - r.i2 + r.i3;
    let report = assess(&inputs);
    assert!(!report.passed());
    let failed: Vec<&str> = report.failed_checks().map(|c| c.name.as_str()).collect();
    assert!(failed.contains(&"closed_form_vs_quadrature"), "{failed:?}");
    assert!(report.to_string().contains("FAIL closed_form_vs_quadrature"));
    assert_ne!(EXIT_FAIL, EXIT_OK);
}
