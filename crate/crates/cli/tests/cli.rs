use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bragg(args: &[&str], dir: &Path, threads: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bragg"));
    cmd.args(args).current_dir(dir);
    if let Some(n) = threads {
        cmd.env("RAYON_NUM_THREADS", n.to_string());
    }
    cmd.output().expect("bragg runs")
}

fn write_config(dir: &Path, name: &str, config: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("{}", String::from_utf8_lossy(&out.stderr)))
}

fn noisy() -> Value {
    json!({
        "geometry": {},
        "noise": { "sigma_width": 8.0 },
        "chain": { "source_power_dbm": 10.0, "coupling_loss_db": 0.0, "detector_floor_dbm": -75.0 },
        "seed": 11,
        "trials": 6
    })
}

fn run_ok(args: &[&str], dir: &Path) -> Output {
    let out = bragg(args, dir, None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn same_seed_gives_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.json", &noisy());
    run_ok(&["simulate", "--config", "c.json", "--out", "a"], tmp.path());
    run_ok(&["simulate", "--config", "c.json", "--out", "b"], tmp.path());
    for file in ["spectrum.csv", "measured.csv", "metrics.json"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(file)).unwrap(),
            fs::read(tmp.path().join("b").join(file)).unwrap(),
            "{file}"
        );
    }
    run_ok(&["simulate", "--config", "c.json", "--seed", "12", "--out", "c"], tmp.path());
    assert_ne!(
        fs::read(tmp.path().join("a/spectrum.csv")).unwrap(),
        fs::read(tmp.path().join("c/spectrum.csv")).unwrap()
    );
}

#[test]
fn ensemble_bytes_do_not_depend_on_thread_count() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.json", &noisy());
    for (threads, out) in [(1, "one"), (4, "four")] {
        let o = bragg(&["montecarlo", "--config", "c.json", "--out", out], tmp.path(), Some(threads));
        assert!(o.status.success());
    }
    for file in ["ensemble.json", "trials.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("one").join(file)).unwrap(),
            fs::read(tmp.path().join("four").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn analyze_reproduces_simulate_metrics() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.json", &noisy());
    run_ok(&["simulate", "--config", "c.json", "--out", "s"], tmp.path());
    let out = run_ok(&["analyze", "s/spectrum.csv", "--config", "c.json"], tmp.path());
    assert_eq!(out.stdout, fs::read(tmp.path().join("s/metrics.json")).unwrap());
}

#[test]
fn effective_config_reruns_identically() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.json", &noisy());
    run_ok(&["simulate", "--config", "c.json", "--trials", "3", "--out", "a"], tmp.path());
    let effective = read_json(tmp.path().join("a/effective_config.json"));
    assert_eq!(effective["trials"], json!(3));
    assert_eq!(effective["cascade"]["link_width"], json!(400.0));
    run_ok(&["simulate", "--config", "a/effective_config.json", "--out", "b"], tmp.path());
    assert_eq!(
        fs::read(tmp.path().join("a/metrics.json")).unwrap(),
        fs::read(tmp.path().join("b/metrics.json")).unwrap()
    );
    let again = read_json(tmp.path().join("b/effective_config.json"));
    assert_eq!(again["output_dir"], json!("b"));
}

#[test]
fn single_trial_ensemble_matches_simulate() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.json", &noisy());
    run_ok(&["simulate", "--config", "c.json", "--out", "s"], tmp.path());
    run_ok(&["montecarlo", "--config", "c.json", "--trials", "1", "--out", "m"], tmp.path());
    let metrics = read_json(tmp.path().join("s/metrics.json"));
    let ensemble = read_json(tmp.path().join("m/ensemble.json"));
    let record = &ensemble["records"][0];
    assert_eq!(record["rejection_db"], metrics["rejection_db"]);
    assert_eq!(record["bandwidth_nm"], metrics["bandwidth_nm"]);
    assert_eq!(record["measured_rejection_db"], metrics["measured"]["rejection_db"]);
    assert_eq!(ensemble["median_rejection_db"], metrics["rejection_db"]);
}

#[test]
fn zero_coupling_is_flat() {
    let tmp = TempDir::new().unwrap();
    let config = json!({ "geometry": {}, "cascade": { "section": { "kappa": 0.0 }, "count": 3 } });
    write_config(tmp.path(), "c.json", &config);
    run_ok(&["simulate", "--config", "c.json", "--out", "s"], tmp.path());
    let metrics = read_json(tmp.path().join("s/metrics.json"));
    assert!(metrics["rejection_db"].as_f64().unwrap().abs() < 1e-9, "{}", metrics["rejection_db"]);
    assert_eq!(metrics["bandwidth_nm"], Value::Null);
}

#[test]
fn malformed_row_is_reported_by_line() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("bad.csv"),
        "wavelength_nm,transmission_linear,transmission_db\n1550,1,0\n1551,0.5\n1552,1,0\n",
    )
    .unwrap();
    let out = bragg(&["analyze", "bad.csv"], tmp.path(), None);
    assert_eq!(out.status.code(), Some(2));
    let message = error_of(&out)["error"]["message"].as_str().unwrap().to_string();
    assert!(message.contains("line 3"), "{message}");
}

#[test]
fn clipped_spectrum_is_flagged() {
    let tmp = TempDir::new().unwrap();
    let mut text = String::from("wavelength_nm,transmission_linear,transmission_db\n");
    for k in 0..=200 {
        let l = 1500.0 + k as f64 * 0.5;
        let t: f64 = if (l - 1550.0).abs() < 1.0 { 10f64.powf(-8.5) } else { 1.0 };
        text += &format!("{l},{t},{}\n", 10.0 * t.log10());
    }
    fs::write(tmp.path().join("clipped.csv"), text).unwrap();
    let out = run_ok(&["analyze", "clipped.csv", "--floor-db", "-85"], tmp.path());
    let metrics: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["clipped"], json!(true));
    assert!((metrics["rejection_db"].as_f64().unwrap() - 85.0).abs() < 1e-9);
}

#[test]
fn missing_geometry_names_the_field() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.json", &json!({ "trials": 3 }));
    let out = bragg(&["modes", "--config", "c.json"], tmp.path(), None);
    assert_eq!(out.status.code(), Some(2));
    let message = error_of(&out)["error"]["message"].as_str().unwrap().to_string();
    assert!(message.contains("geometry"), "{message}");
}

#[test]
fn unknown_field_is_rejected() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.json", &json!({ "geometry": {}, "noise": { "sigma": 1.0 } }));
    let out = bragg(&["simulate", "--config", "c.json"], tmp.path(), None);
    assert_eq!(out.status.code(), Some(2));
    let message = error_of(&out)["error"]["message"].as_str().unwrap().to_string();
    assert!(message.contains("noise.sigma"), "{message}");
}

#[test]
fn missing_config_file_is_io() {
    let tmp = TempDir::new().unwrap();
    let out = bragg(&["simulate", "--config", "nope.json"], tmp.path(), None);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_of(&out)["error"]["kind"], json!("io"));
}

#[test]
fn modes_report_lists_both_orders() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.json", &json!({ "geometry": {} }));
    run_ok(&["modes", "--config", "c.json", "--out", "m"], tmp.path());
    let report = read_json(tmp.path().join("m/modes.json"));
    let lambda0 = report["hybrid_lambda0_nm"].as_f64().unwrap();
    assert!((1500.0..=1600.0).contains(&lambda0), "{lambda0}");
    assert_eq!(report["modes"][1]["guided"], json!(true));

    write_config(tmp.path(), "narrow.json", &json!({ "geometry": { "core_width": 400.0 } }));
    run_ok(&["modes", "--config", "narrow.json", "--out", "n"], tmp.path());
    let report = read_json(tmp.path().join("n/modes.json"));
    assert_eq!(report["modes"][0]["guided"], json!(true));
    assert_eq!(report["modes"][1]["guided"], json!(false));
}

#[test]
fn infeasible_design_exits_three() {
    let tmp = TempDir::new().unwrap();
    let config = json!({
        "geometry": {},
        "design": {
            "target": { "min_rejection_db": 60.0, "bandwidth_nm": 0.05, "center_nm": 1550.0, "max_total_length": 2000.0 },
            "kappa_min": 1e-6,
            "kappa_max": 2e-5
        }
    });
    write_config(tmp.path(), "c.json", &config);
    let out = bragg(&["design", "--config", "c.json"], tmp.path(), None);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_of(&out)["error"]["kind"], json!("infeasible"));
}

#[test]
fn noiseless_design_meets_target() {
    let tmp = TempDir::new().unwrap();
    let config = json!({
        "geometry": {},
        "trials": 2,
        "grid": { "step": 0.05 },
        "design": {
            "target": { "min_rejection_db": 60.0, "bandwidth_nm": 6.0, "center_nm": 1550.0 },
            "kappa_min": 1e-6,
            "kappa_max": 2e-5
        }
    });
    write_config(tmp.path(), "c.json", &config);
    run_ok(&["design", "--config", "c.json", "--out", "d"], tmp.path());
    let design = read_json(tmp.path().join("d/design.json"));
    assert!(design["p25_rejection_db"].as_f64().unwrap() >= 60.0);
    let bw = design["predicted_bandwidth_nm"].as_f64().unwrap();
    assert!((bw / 6.0 - 1.0).abs() <= 0.05, "{bw}");
}

#[test]
fn cascade_under_osa_chain_reads_eighty_db_or_clips() {
    let tmp = TempDir::new().unwrap();
    let config = json!({
        "geometry": {},
        "cascade": { "count": 10, "composition": "incoherent" },
        "noise": { "calibrate": { "target_db": 40.0, "plateau_onset": 300000.0, "trials": 40 } },
        "chain": { "source_power_dbm": 10.0, "coupling_loss_db": 0.0, "detector_floor_dbm": -90.0 },
        "seed": 2018
    });
    write_config(tmp.path(), "c.json", &config);
    run_ok(&["simulate", "--config", "c.json", "--out", "s"], tmp.path());
    let metrics = read_json(tmp.path().join("s/metrics.json"));
    let measured = &metrics["measured"];
    assert!(
        measured["rejection_db"].as_f64().unwrap() >= 80.0 || measured["clipped"] == json!(true),
        "{measured}"
    );
    assert!(tmp.path().join("s/calibration.json").exists());
}
