use std::path::Path;
use std::process::{Command, Output};

use privshape_cli::report::percent_increase;
use privshape_cli::{
    cmd_gen_data, load_inputs, parse_case_list, parse_weights, GenDataArgs, InputArgs,
};
use privshape_core::experiment::{run_experiment, ExperimentSettings};
use privshape_core::privacy::{entropy, quantize, QuantizerSpec};
use privshape_core::solve::{CaseSpec, HighsBackend, SolverSettings};

fn privshape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privshape"))
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn gen(dir: &Path, days: usize) {
    cmd_gen_data(&GenDataArgs {
        seed: 42,
        out: dir.to_path_buf(),
        days,
        step_minutes: 15,
        irradiance_days: 4,
        day_index: 0,
    })
    .unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn case_lists() {
    assert_eq!(parse_case_list("0-6").unwrap(), (0..=6).collect::<Vec<_>>());
    assert_eq!(parse_case_list("3, 1,1,0-1").unwrap(), vec![0, 1, 3]);
    assert!(parse_case_list("7").is_err());
    assert!(parse_case_list("4-2").is_err());
    assert!(parse_case_list("").is_err());
    assert_eq!(parse_weights("1,0,0.5,0").unwrap(), [1.0, 0.0, 0.5, 0.0]);
    assert!(parse_weights("1,0,0").is_err());
    assert!(parse_weights("0,0,0,0").is_err());
    assert!(parse_weights("1,-1,0,0").is_err());
}

#[test]
fn percent_increase_rounding() {
    // Cost 46.58 against an optimum of 30.70 is reported as +51.7%.
    let pct = percent_increase(46.58, 30.70).unwrap();
    assert_eq!(format!("{pct:.1}"), "51.7");
    assert_eq!(percent_increase(3.0, 3.0), Some(0.0));
    assert_eq!(percent_increase(1.0, 0.0), None);
}

#[test]
fn gen_data_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, 730);
    gen(&b, 730);
    for f in ["traces.csv", "household.toml", "irradiance.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let rows = std::fs::read_to_string(a.join("traces.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 730 * 96 + 1);
}

#[test]
fn reference_case_run_writes_complete_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    gen(&data, 30);
    let res = privshape(&[
        "run",
        "--config",
        s(&data.join("household.toml")),
        "--out",
        s(&out),
        "--cases",
        "0",
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<String> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let mut present: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    present.sort();
    let mut sorted = listed.clone();
    sorted.sort();
    assert_eq!(present, sorted);
    assert_eq!(listed.last().map(String::as_str), Some("manifest.json"));
    assert_eq!(manifest["cases"][0]["status"], "optimal");

    let objectives = std::fs::read_to_string(out.join("objectives.csv")).unwrap();
    assert_eq!(objectives.lines().count(), 2);
    assert!(objectives.starts_with("case,O1,O2,O3,O4,Z,gap,runtime_s"));

    let report = privshape(&["report", "--results", s(&out)]);
    assert!(report.status.success());
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.contains("MI/MI0"));
}

#[test]
fn reference_case_mi_is_the_entropy_of_the_load() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), 30);
    let inputs = load_inputs(&InputArgs {
        config: tmp.path().join("household.toml"),
        traces: None,
        irradiance: None,
        slot_minutes: None,
        k: 10,
        seed: 42,
        allow_export: false,
        exclusive_storage: false,
    })
    .unwrap();
    let settings = ExperimentSettings {
        cases: vec![CaseSpec::TABLE[0]],
        ..ExperimentSettings::default()
    };
    let backend = HighsBackend::new(SolverSettings::default());
    let exp = run_experiment(
        &inputs.config,
        &inputs.traces,
        &inputs.irradiance,
        &settings,
        &backend,
    )
    .unwrap();
    let r = exp.matrix.result(0).unwrap();
    let actual = exp.prepared.actual_series(r);
    let spec = QuantizerSpec::default();
    let h_p = entropy(&quantize(&actual.p, &spec).unwrap());
    let h_q = entropy(&quantize(&actual.q, &spec).unwrap());
    assert!((exp.privacy[0].aggregate_p - h_p).abs() < 1e-12);
    assert!((exp.privacy[0].aggregate_q - h_q).abs() < 1e-12);
}

#[test]
fn missing_traces_name_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), 30);
    let ghost = tmp.path().join("nowhere.csv");
    let res = privshape(&[
        "run",
        "--config",
        s(&tmp.path().join("household.toml")),
        "--traces",
        s(&ghost),
        "--out",
        s(&tmp.path().join("out")),
        "--cases",
        "0",
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nowhere.csv"));
}

#[test]
fn unsolved_cases_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), 30);
    let out = tmp.path().join("out");
    let res = privshape(&[
        "run",
        "--config",
        s(&tmp.path().join("household.toml")),
        "--out",
        s(&out),
        "--cases",
        "0,1",
        "--time-limit",
        "0",
    ]);
    assert_eq!(
        res.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let objectives = std::fs::read_to_string(out.join("objectives.csv")).unwrap();
    assert!(objectives.lines().nth(2).unwrap().contains("failed"));
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn report_needs_a_finished_run() {
    let tmp = tempfile::tempdir().unwrap();
    let res = privshape(&["report", "--results", s(tmp.path())]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn unknown_backend_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), 30);
    let res = Command::new(env!("CARGO_BIN_EXE_privshape"))
        .env("PRIVSHAPE_BACKEND", "cplex")
        .args([
            "--quiet",
            "run",
            "--config",
            s(&tmp.path().join("household.toml")),
        ])
        .args(["--out", s(&tmp.path().join("out")), "--cases", "1"])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("cplex"));
}

#[test]
fn export_lp_writes_model() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), 30);
    let lp = tmp.path().join("model").join("o3.lp");
    let res = privshape(&[
        "export-lp",
        "--config",
        s(&tmp.path().join("household.toml")),
        "--objective",
        "3",
        "--out",
        s(&lp),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let text = std::fs::read_to_string(&lp).unwrap();
    assert!(text.starts_with("\\ privshape: 96 slots"));
    assert!(text.contains("objective O3"));
    assert!(text.trim_end().ends_with("End"));
}

#[test]
fn oracle_check_passes() {
    let res = privshape(&["oracle-check"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("ok")).count(), 12);
}
