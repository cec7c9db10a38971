use std::f64::consts::FRAC_2_PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn spt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spt"))
        .args(args)
        .output()
        .expect("spt runs")
}

fn ok(args: &[&str]) {
    let out = spt(args);
    assert!(
        out.status.success(),
        "spt {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(args: &[&str]) -> i32 {
    spt(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Header and rows of an output CSV, after its manifest line.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# manifest "));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

fn default_device() -> Value {
    let dir = TempDir::new().unwrap();
    ok(&["defaults", "--out", s(dir.path())]);
    serde_json::from_str(&fs::read_to_string(dir.path().join("device.json")).unwrap()).unwrap()
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path
}

fn ideal_device(dir: &Path) -> PathBuf {
    let mut d = default_device();
    d["cavity_i"]["kappa_int_mhz"] = json!(0.0);
    for k in ["t1_ge_us", "t1_ef_us", "t2_ge_us", "t2_gf_us"] {
        d["qubit_rates"][k] = Value::Null;
    }
    d["detection"] = json!({
        "efficiency": 1.0,
        "added_noise_photons": 0.0,
        "baseline_sigma_photons": 0.0
    });
    write_json(dir, "ideal_device.json", &d)
}

fn ideal_protocol(dir: &Path, mean_gate_photons: f64) -> PathBuf {
    let p = json!({
        "theta_rad": 0.0,
        "subspace": "ge",
        "pi_ef_pulse": false,
        "mean_gate_photons": mean_gate_photons,
        "gate_source": "coherent",
        "gate_pulse": { "kind": "gaussian", "duration_ns": 960.0, "carrier_detuning_mhz": 0.0 },
        "mean_signal_photons": 37.2,
        "signal_duration_us": 10.0,
        "signal_detuning_target": "resonant_with_e",
        "eta_override": 1.0,
        "dark_flip": 0.0,
        "signal_flip_rate_per_photon_per_us": 0.0,
        "n_shots": 2000,
        "seed": 7,
        "field_cutoff": 8
    });
    write_json(dir, "ideal_protocol.json", &p)
}

fn peak(rows: &[Vec<String>], f_col: usize, l_col: usize, a_col: usize, level: &str) -> f64 {
    rows.iter()
        .filter(|r| r[l_col] == level)
        .map(|r| (r[f_col].parse::<f64>().unwrap(), r[a_col].parse::<f64>().unwrap()))
        .fold((f64::NAN, f64::NEG_INFINITY), |best, x| if x.1 > best.1 { x } else { best })
        .0
}

#[test]
fn spectra_writes_header_and_all_levels() {
    let dir = TempDir::new().unwrap();
    ok(&["spectra", "--out", s(dir.path()), "--points", "101"]);
    let (header, rows) = read_csv(&dir.path().join("spectra.csv"));
    assert_eq!(header, ["frequency_mhz", "level", "amplitude", "phase_rad"]);
    assert_eq!(rows.len(), 303);
    assert!(dir.path().join("spectra.manifest.json").exists());
}

#[test]
fn cavity_ii_transmission_peaks_are_split_by_twice_chi() {
    let dir = TempDir::new().unwrap();
    ok(&["spectra", "--out", s(dir.path()), "--cavity", "ii", "--points", "40001"]);
    let (h, rows) = read_csv(&dir.path().join("spectra.csv"));
    let (f, l, a) = (column(&h, "frequency_mhz"), column(&h, "level"), column(&h, "amplitude"));
    let split = peak(&rows, f, l, a, "g") - peak(&rows, f, l, a, "e");
    assert!((split - 1.894).abs() < 1e-3, "split {split}");
}

#[test]
fn lossless_cavity_i_reflects_everything() {
    let dir = TempDir::new().unwrap();
    let mut d = default_device();
    d["cavity_i"]["kappa_int_mhz"] = json!(0.0);
    let dev = write_json(dir.path(), "device.json", &d);
    let out = dir.path().join("out");
    ok(&["spectra", "--device", s(&dev), "--out", s(&out), "--cavity", "i", "--points", "201"]);
    let (h, rows) = read_csv(&out.join("spectra.csv"));
    let a = column(&h, "amplitude");
    for r in &rows {
        assert!((r[a].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn ungated_ideal_switch_is_always_on() {
    let dir = TempDir::new().unwrap();
    let dev = ideal_device(dir.path());
    let proto = ideal_protocol(dir.path(), 0.18);
    let out = dir.path().join("out");
    ok(&["switch", "--device", s(&dev), "--protocol", s(&proto), "--out", s(&out)]);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("switch.json")).unwrap()).unwrap();
    assert_eq!(report["ungated"]["on"]["fraction"], json!(1.0));
    assert_eq!(report["ungated"]["off"]["count"], json!(0));
    let (h, rows) = read_csv(&out.join("switch.csv"));
    assert_eq!(h[..3], ["run", "label", "count"]);
    assert_eq!(rows.len(), 4);
}

#[test]
fn switch_is_reproducible_for_a_fixed_seed() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["switch", "--out", s(out), "--seed", "11", "--shots", "1500"]);
    }
    for name in ["switch.csv", "switch_shots.csv", "switch.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let c = dir.path().join("c");
    ok(&["switch", "--out", s(&c), "--seed", "12", "--shots", "1500"]);
    assert_ne!(fs::read(a.join("switch_shots.csv")).unwrap(), fs::read(c.join("switch_shots.csv")).unwrap());
}

#[test]
fn gain_sweep_covers_both_subspaces_with_regimes() {
    let dir = TempDir::new().unwrap();
    ok(&["gain-sweep", "--out", s(dir.path()), "--points", "12"]);
    let (h, rows) = read_csv(&dir.path().join("gain_sweep.csv"));
    let (sub, reg) = (column(&h, "subspace"), column(&h, "regime"));
    assert_eq!(rows.len(), 24);
    assert!(rows.iter().any(|r| r[sub] == "ge"));
    assert!(rows.iter().any(|r| r[sub] == "gf"));
    for r in &rows {
        assert!(["linear", "blockade", "bright"].contains(&r[reg].as_str()));
    }
}

#[test]
fn wigner_of_vacuum_gate_is_centred_and_symmetric() {
    let dir = TempDir::new().unwrap();
    let dev = ideal_device(dir.path());
    let proto = ideal_protocol(dir.path(), 0.0);
    let out = dir.path().join("out");
    ok(&[
        "wigner", "--device", s(&dev), "--protocol", s(&proto), "--out", s(&out),
        "--condition", "on", "--half-width", "1.5", "--points", "31",
    ]);
    let (h, rows) = read_csv(&out.join("wigner.csv"));
    assert_eq!(h, ["x", "p", "w"]);
    let pts: Vec<[f64; 3]> = rows
        .iter()
        .map(|r| [0, 1, 2].map(|i| r[i].parse().unwrap()))
        .collect();
    let at = |x: f64, p: f64| {
        pts.iter()
            .find(|q| (q[0] - x).abs() < 1e-9 && (q[1] - p).abs() < 1e-9)
            .unwrap()[2]
    };
    assert!((at(0.0, 0.0) - FRAC_2_PI).abs() < 1e-9);
    for q in &pts {
        assert!((q[2] - at(q[0], -q[1])).abs() < 1e-9);
    }
}

#[test]
fn wigner_of_an_empty_class_is_a_numeric_error() {
    let dir = TempDir::new().unwrap();
    let dev = ideal_device(dir.path());
    let proto = ideal_protocol(dir.path(), 0.0);
    let out = dir.path().join("out");
    let args = [
        "wigner", "--device", s(&dev), "--protocol", s(&proto), "--out", s(&out),
        "--condition", "off",
    ];
    assert_eq!(code(&args), 3);
}

fn calibration_file(dir: &Path, p: f64, ng: f64, ne: f64, beta: f64, extra: Value) -> PathBuf {
    let mix = |q: f64| q * ng + (1.0 - q) * ne;
    let mut v = json!({
        "n0_open": mix(p),
        "na_open": mix(p + beta),
        "n0_close": mix(1.0 - p),
        "na_close": mix(1.0 - p - beta),
        "beta": beta
    });
    v.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
    write_json(dir, "calibration_inputs.json", &v)
}

fn calibrate(dir: &Path, inputs: &Path) -> Value {
    let out = dir.join("out");
    ok(&["calibrate", "--inputs", s(inputs), "--out", s(&out)]);
    serde_json::from_str(&fs::read_to_string(out.join("calibration.json")).unwrap()).unwrap()
}

#[test]
fn calibrate_recovers_synthetic_inputs() {
    let dir = TempDir::new().unwrap();
    let inputs = calibration_file(dir.path(), 0.8, 30.0, 2.0, 0.15, json!({ "eta": 0.8 }));
    let r = calibrate(dir.path(), &inputs);
    let c = &r["calibration"];
    let get = |k: &str| c[k].as_f64().unwrap();
    assert!((get("p_g_open") - 0.8).abs() < 1e-9);
    assert!((get("p_g_close") - 0.2).abs() < 1e-9);
    assert!((get("n_g_state") - 30.0).abs() < 1e-9);
    assert!((get("n_e_state") - 2.0).abs() < 1e-9);
}

#[test]
fn calibrate_switching_probability_is_eta_times_survival() {
    let dir = TempDir::new().unwrap();
    let inputs = calibration_file(
        dir.path(),
        0.8,
        30.0,
        2.0,
        0.15,
        json!({ "eta": 0.8, "p_s": 0.925 }),
    );
    let r = calibrate(dir.path(), &inputs);
    assert!((r["switching_probability"].as_f64().unwrap() - 0.74).abs() < 1e-12);
}

#[test]
fn calibrate_without_a_beta_is_unsolvable() {
    let dir = TempDir::new().unwrap();
    let inputs = calibration_file(dir.path(), 0.8, 30.0, 2.0, 0.0, json!({ "eta": 0.8 }));
    let out = dir.path().join("out");
    assert_eq!(code(&["calibrate", "--inputs", s(&inputs), "--out", s(&out)]), 3);
}

#[test]
fn malformed_device_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let dev = write_json(dir.path(), "device.json", &json!({ "qubit_frequency_mhz": 5350.0, "nope": 1 }));
    let out = dir.path().join("out");
    assert_eq!(code(&["spectra", "--device", s(&dev), "--out", s(&out)]), 2);
    fs::write(&dev, "{ not json").unwrap();
    assert_eq!(code(&["spectra", "--device", s(&dev), "--out", s(&out)]), 2);
    let mut d = default_device();
    d["cavity_ii"]["kappa_ext_in_mhz"] = json!(-1.0);
    let dev = write_json(dir.path(), "negative.json", &d);
    assert_eq!(code(&["spectra", "--device", s(&dev), "--out", s(&out)]), 2);
}

#[test]
fn manifest_hash_is_stamped_on_outputs() {
    let dir = TempDir::new().unwrap();
    ok(&["spectra", "--out", s(dir.path()), "--points", "11"]);
    let m: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("spectra.manifest.json")).unwrap(),
    )
    .unwrap();
    let hash = m["hash"].as_str().unwrap();
    let first = fs::read_to_string(dir.path().join("spectra.csv")).unwrap();
    assert_eq!(first.lines().next().unwrap(), format!("# manifest {hash}"));
    assert_eq!(m["outputs"], json!(["spectra.csv"]));
}
