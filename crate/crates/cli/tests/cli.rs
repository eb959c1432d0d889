use std::path::Path;
use std::process::{Command, Output};

use dcat_core::analysis::RunReport;
use dcat_core::engine::{simulate, Scenario};

fn dcat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SHORT: &str = r#"{
  "config": {"module_count": 4, "v_dc": 400.0},
  "reference": {"type": "squared-sine", "peak": 400.0, "frequency": 50.0},
  "duration": 0.02,
  "record_decimation": 20
}"#;

#[test]
fn simulate_writes_waveform_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write(tmp.path(), "s.json", SHORT);
    let out = tmp.path().join("out");
    let run = dcat(&["simulate", &scenario, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));

    let csv = std::fs::read_to_string(out.join("waveform.csv")).unwrap();
    assert!(csv.starts_with("time,v_out,v_ref,v_cap_0"));
    assert!(!csv.contains('\r'));

    // The file holds exactly the in-process report.
    let text = std::fs::read_to_string(out.join("report.json")).unwrap();
    let report = RunReport::from_json_str(&text).unwrap();
    let expected = simulate(&Scenario::from_json_str(SHORT).unwrap())
        .unwrap()
        .report;
    assert_eq!(report, expected);
    assert!(report.thd.unwrap().is_finite());
}

#[test]
fn bundled_prototype_runs_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("proto");
    let run = dcat(&[
        "simulate",
        "prototype-m4.json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let report =
        RunReport::from_json_str(&std::fs::read_to_string(out.join("report.json")).unwrap())
            .unwrap();
    assert!(report.thd.unwrap().is_finite());
    assert_eq!(report.f_bridge, 110e3);
}

#[test]
fn input_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();

    let missing = dcat(&["simulate", "/nonexistent/scenario.json", "--out", out]);
    assert_eq!(code(&missing), 2);

    let zero = write(tmp.path(), "zero.json", &SHORT.replace("0.02", "0.0"));
    let run = dcat(&["simulate", &zero, "--out", out]);
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("duration"));

    let typo = write(
        tmp.path(),
        "typo.json",
        &SHORT.replace("\"v_dc\"", "\"vdc\""),
    );
    let run = dcat(&["simulate", &typo, "--out", out]);
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("vdc"));

    let coarse = dcat(&["simulate", "prototype-m4", "--out", out, "--dt", "1e-6"]);
    assert_eq!(code(&coarse), 2);
}

#[test]
fn diverging_run_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    // Initial voltages near f64::MAX overflow on the first step.
    let text = SHORT.replace(
        "\"record_decimation\": 20",
        "\"record_decimation\": 20, \"initial_v_cap\": [1e308, -1e308, 1e308, -1e308]",
    );
    let scenario = write(tmp.path(), "bad.json", &text);
    let run = dcat(&[
        "simulate",
        &scenario,
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 3, "{}", String::from_utf8_lossy(&run.stderr));
}

#[test]
fn sweep_module_count_thd_decreases() {
    let tmp = tempfile::tempdir().unwrap();
    let template = write(
        tmp.path(),
        "t.json",
        r#"{
          "reference": {"type": "sine", "amplitude": 190.0, "frequency": 50.0, "offset": 200.0},
          "duration": 0.02,
          "record_decimation": 4
        }"#,
    );
    let out = tmp.path().join("sweep");
    let run = dcat(&[
        "sweep",
        &template,
        "--param",
        "module_count",
        "--values",
        "2,4,8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    for i in 0..3 {
        assert!(out.join(format!("run_{i:03}.json")).is_file());
    }
    let mut reader = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    let thd: Vec<f64> = reader
        .records()
        .map(|r| r.unwrap()[1].parse().unwrap())
        .collect();
    assert_eq!(thd.len(), 3);
    assert!(thd[0] > thd[1] && thd[1] > thd[2], "{thd:?}");
}

#[test]
fn sweep_unbalance_settles() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("unb");
    let run = dcat(&[
        "sweep",
        "balance-recovery",
        "--param",
        "initial_unbalance",
        "--values",
        "5%,10%,20%",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let mut reader = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    for r in reader.records() {
        let r = r.unwrap();
        let settle: f64 = r[3].parse().expect("settling time reported");
        let spread: f64 = r[4].parse().unwrap();
        assert!(settle < 0.05 && spread < 1.0, "{r:?}");
    }
}

#[test]
fn sweep_input_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let out = out.to_str().unwrap();
    let empty = dcat(&[
        "sweep",
        "prototype-m4",
        "--param",
        "module_count",
        "--values",
        "",
        "--out",
        out,
    ]);
    assert_eq!(code(&empty), 2);
    let unknown = dcat(&[
        "sweep",
        "prototype-m4",
        "--param",
        "modules",
        "--values",
        "2",
        "--out",
        out,
    ]);
    assert_eq!(code(&unknown), 2);
    let junk = dcat(&[
        "sweep",
        "prototype-m4",
        "--param",
        "v_dc",
        "--values",
        "abc",
        "--out",
        out,
    ]);
    assert_eq!(code(&junk), 2);
}

#[test]
fn gatedrive_energy_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("gd");
    let run = dcat(&[
        "gatedrive",
        "gatedrive-ideal",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let energy: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("energy.json")).unwrap()).unwrap();
    assert!(energy["report"]["ratio"].as_f64().unwrap() < 1e-3);
    assert_eq!(energy["periods"].as_array().unwrap().len(), 10);
    assert!(std::fs::read_to_string(out.join("trajectory.csv"))
        .unwrap()
        .starts_with("time,v_gate,i_lmag,v_reference"));

    // Same circuit with a 1 ohm loop.
    let mut spec: serde_json::Value =
        serde_json::from_str(include_str!("../../core/scenarios/gatedrive-ideal.json")).unwrap();
    spec["params"]["r_loop"] = 1.0.into();
    let lossy = write(tmp.path(), "lossy.json", &spec.to_string());
    let out = tmp.path().join("lossy");
    let run = dcat(&["gatedrive", &lossy, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 0);
    let energy: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("energy.json")).unwrap()).unwrap();
    assert!(energy["report"]["ratio"].as_f64().unwrap() > 0.0);

    let coarse = dcat(&[
        "gatedrive",
        "gatedrive-ideal",
        "--out",
        out.to_str().unwrap(),
        "--dt",
        "1e-7",
    ]);
    assert_eq!(code(&coarse), 2);
}
