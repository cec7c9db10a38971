//! Subcommand implementations. Each returns the paths it wrote.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use spt_core::analysis::{calibration_report, CalibrationFile};
use spt_core::cavity::{gating_efficiency, spectrum, SpectrumMode};
use spt_core::device::PAPER_P_S;
use spt_core::hilbert::{mean_photon, QuantumState, QubitLevel};
use spt_core::measurement::wigner_grid;
use spt_core::protocol::{
    conditional_gate_field, label_records, Experiment, GateChannel, ProtocolConfig, ShotRecord,
};
use spt_core::semiclassical::{gain_sweep, log_grid, SaturableCavityModel};
use spt_core::{Clustering, DeviceParams, Error, Label, LabelCounts, Result, Subspace};

use crate::manifest::{load_device, load_protocol, num, read_json, OutputDir, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CavityChoice {
    I,
    Ii,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    On,
    Off,
}

impl From<Condition> for Label {
    fn from(c: Condition) -> Self {
        match c {
            Condition::On => Label::On,
            Condition::Off => Label::Off,
        }
    }
}

pub struct SpectraArgs<'a> {
    pub device: Option<&'a Path>,
    pub cavity: CavityChoice,
    pub points: usize,
    pub margin_mhz: Option<f64>,
    pub out: &'a Path,
}

pub fn spectra(a: SpectraArgs) -> Result<Vec<PathBuf>> {
    if a.points < 2 {
        return Err(Error::InvalidArgument("--points must be at least 2".into()));
    }
    let (device, device_hash) = load_device(a.device)?;
    let (c, mode) = match a.cavity {
        CavityChoice::I => (device.cavity_i, SpectrumMode::Reflect),
        CavityChoice::Ii => (device.cavity_ii, SpectrumMode::Transmit),
    };
    let shifts: Vec<f64> = QubitLevel::ALL.iter().map(|&l| c.shifted_frequency(l)).collect();
    let margin = a.margin_mhz.unwrap_or(5.0 * c.kappa_total() + 1.0);
    let lo = shifts.iter().copied().fold(f64::INFINITY, f64::min) - margin;
    let hi = shifts.iter().copied().fold(f64::NEG_INFINITY, f64::max) + margin;
    let step = (hi - lo) / (a.points - 1) as f64;
    let grid: Vec<f64> = (0..a.points).map(|i| lo + i as f64 * step).collect();
    let mut rows = Vec::with_capacity(3 * a.points);
    for level in QubitLevel::ALL {
        for (f, amp) in spectrum(&c, &grid, level, mode)? {
            rows.push(vec![num(f), level.label().to_string(), num(amp.norm()), num(amp.arg())]);
        }
    }
    let params = json!({ "cavity": a.cavity, "points": a.points, "margin_mhz": margin });
    let mut out = OutputDir::create(a.out, RunManifest::new("spectra", params, Some(device_hash), None))?;
    let csv = out.csv(
        "spectra.csv",
        &["frequency_mhz", "level", "amplitude", "phase_rad"],
        rows,
    )?;
    Ok(vec![csv, out.finish()?])
}

#[derive(Debug, Clone, Serialize)]
struct ClassSummary {
    count: usize,
    fraction: f64,
    mean_reading: Option<f64>,
    mean_transmitted_photons: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct RunSummary {
    counts: LabelCounts,
    on: ClassSummary,
    off: ClassSummary,
}

fn summarize(records: &[ShotRecord], counts: LabelCounts) -> RunSummary {
    let class = |label: Label| {
        let members: Vec<&ShotRecord> = records.iter().filter(|r| r.label == Some(label)).collect();
        let n = members.len();
        let mean = |f: &dyn Fn(&ShotRecord) -> f64| {
            (n > 0).then(|| members.iter().map(|r| f(r)).sum::<f64>() / n as f64)
        };
        ClassSummary {
            count: n,
            fraction: n as f64 / counts.total().max(1) as f64,
            mean_reading: mean(&|r| r.detected_reading),
            mean_transmitted_photons: mean(&|r| r.true_transmitted_photons),
        }
    };
    RunSummary {
        counts,
        on: class(Label::On),
        off: class(Label::Off),
    }
}

#[derive(Debug, Clone, Serialize)]
struct SwitchReport {
    threshold: f64,
    eta: f64,
    survival: f64,
    gated: RunSummary,
    ungated: RunSummary,
    conditional_mean_gate_photons_on: Option<f64>,
    conditional_mean_gate_photons_off: Option<f64>,
}

fn conditional_mean(records: &[ShotRecord], label: Label, cfg: &ProtocolConfig, d: &DeviceParams) -> Result<Option<f64>> {
    match conditional_gate_field(records, label, cfg, d) {
        Ok(field) => Ok(Some(mean_photon(&field, 0)?)),
        Err(Error::InsufficientData(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub struct RunArgs<'a> {
    pub device: Option<&'a Path>,
    pub protocol: Option<&'a Path>,
    pub seed: Option<u64>,
    pub shots: Option<usize>,
    pub out: &'a Path,
}

struct GatedRun {
    cfg: ProtocolConfig,
    device: DeviceParams,
    device_hash: String,
    clustering: Clustering,
    gated: Vec<ShotRecord>,
    gated_counts: LabelCounts,
}

fn gated_run(a: &RunArgs) -> Result<GatedRun> {
    let (device, device_hash) = load_device(a.device)?;
    let cfg = load_protocol(a.protocol, a.seed, a.shots)?;
    let exp = Experiment::new(&cfg, &device)?;
    let clustering = exp.calibrate_threshold()?;
    let mut gated = exp.run();
    let gated_counts = label_records(&mut gated, &clustering);
    Ok(GatedRun {
        cfg,
        device,
        device_hash,
        clustering,
        gated,
        gated_counts,
    })
}

pub fn switch(a: RunArgs) -> Result<Vec<PathBuf>> {
    let run = gated_run(&a)?;
    let ungated_cfg = ProtocolConfig {
        mean_gate_photons: 0.0,
        ..run.cfg.clone()
    };
    let mut ungated = Experiment::new(&ungated_cfg, &run.device)?.run();
    let ungated_counts = label_records(&mut ungated, &run.clustering);
    let channel = GateChannel::for_protocol(&run.cfg, &run.device)?;
    let report = SwitchReport {
        threshold: run.clustering.threshold,
        eta: channel.eta,
        survival: channel.survival,
        gated: summarize(&run.gated, run.gated_counts),
        ungated: summarize(&ungated, ungated_counts),
        conditional_mean_gate_photons_on: conditional_mean(&run.gated, Label::On, &run.cfg, &run.device)?,
        conditional_mean_gate_photons_off: conditional_mean(&run.gated, Label::Off, &run.cfg, &run.device)?,
    };

    let manifest = RunManifest::new("switch", json!({}), Some(run.device_hash.clone()), Some(run.cfg.clone()));
    let mut out = OutputDir::create(a.out, manifest)?;
    let opt = |x: Option<f64>| x.map_or(String::new(), num);
    let bars = [("gated", &report.gated), ("ungated", &report.ungated)]
        .into_iter()
        .flat_map(|(name, s)| {
            [("on", &s.on), ("off", &s.off)].map(|(label, c)| {
                vec![
                    name.to_string(),
                    label.to_string(),
                    c.count.to_string(),
                    num(c.fraction),
                    opt(c.mean_reading),
                    opt(c.mean_transmitted_photons),
                ]
            })
        })
        .collect::<Vec<_>>();
    let bars_path = out.csv(
        "switch.csv",
        &["run", "label", "count", "fraction", "mean_reading", "mean_transmitted_photons"],
        bars,
    )?;
    let shot_rows = [("gated", &run.gated), ("ungated", &ungated)]
        .into_iter()
        .flat_map(|(name, recs)| recs.iter().map(move |r| shot_row(name, r)))
        .collect::<Vec<_>>();
    let shots_path = out.csv(
        "switch_shots.csv",
        &[
            "run",
            "index",
            "gate_photons",
            "gate_flip",
            "level_start",
            "jump_time_us",
            "level_end",
            "transmitted_photons",
            "reading",
            "label",
        ],
        shot_rows,
    )?;
    let json_path = out.json("switch.json", &report)?;
    Ok(vec![bars_path, shots_path, json_path, out.finish()?])
}

fn shot_row(run: &str, r: &ShotRecord) -> Vec<String> {
    vec![
        run.to_string(),
        r.index.to_string(),
        r.gate_photons.to_string(),
        r.gate_flip_happened.to_string(),
        r.qubit_level_at_signal_start.label().to_string(),
        r.jump_time_us.map_or(String::new(), num),
        r.qubit_level_at_signal_end.label().to_string(),
        num(r.true_transmitted_photons),
        num(r.detected_reading),
        r.label.map_or("", |l| l.as_str()).to_string(),
    ]
}

pub struct GainArgs<'a> {
    pub device: Option<&'a Path>,
    pub protocol: Option<&'a Path>,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub eta: Option<f64>,
    pub p_s: f64,
    pub out: &'a Path,
}

pub fn gain(a: GainArgs) -> Result<Vec<PathBuf>> {
    let (device, device_hash) = load_device(a.device)?;
    let cfg = load_protocol(a.protocol, None, None)?;
    let eta = match a.eta {
        Some(e) => e,
        None => gating_efficiency(&device.cavity_i, &cfg.gate_pulse)?,
    };
    let grid = log_grid(a.lo, a.hi, a.points)?;
    let model = SaturableCavityModel::new(device.cavity_ii, &device.semiclassical, cfg.signal_duration_us);
    let mut rows = Vec::with_capacity(2 * grid.len());
    for sub in [Subspace::Ge, Subspace::Gf] {
        let name = match sub {
            Subspace::Ge => "ge",
            Subspace::Gf => "gf",
        };
        for p in gain_sweep(&model, eta, a.p_s, &grid, sub)? {
            rows.push(vec![
                name.to_string(),
                num(p.n_s),
                num(p.gain_db),
                num(p.extinction_db),
                p.regime.as_str().to_string(),
                num(p.signal_frequency_mhz),
                num(p.transmitted_g),
                num(p.transmitted_excited),
            ]);
        }
    }
    let params = json!({ "lo": a.lo, "hi": a.hi, "points": a.points, "eta": eta, "p_s": a.p_s });
    let mut out = OutputDir::create(a.out, RunManifest::new("gain-sweep", params, Some(device_hash), Some(cfg)))?;
    let csv = out.csv(
        "gain_sweep.csv",
        &[
            "subspace",
            "n_s",
            "gain_db",
            "extinction_db",
            "regime",
            "signal_frequency_mhz",
            "transmitted_g",
            "transmitted_excited",
        ],
        rows,
    )?;
    Ok(vec![csv, out.finish()?])
}

pub fn default_p_s() -> f64 {
    PAPER_P_S
}

/// Zero-pads a single-mode state to dimension `d`.
fn pad(field: &QuantumState, d: usize) -> Result<QuantumState> {
    let k = field.dim();
    if d <= k {
        return Ok(field.clone());
    }
    let mut rho = spt_core::hilbert::ComplexMatrix::zeros(d, d);
    rho.view_mut((0, 0), (k, k)).copy_from(field.rho());
    QuantumState::new(vec![d], rho)
}

pub struct WignerArgs<'a> {
    pub run: RunArgs<'a>,
    pub condition: Condition,
    pub half_width: f64,
    pub points: usize,
}

pub fn wigner(a: WignerArgs) -> Result<Vec<PathBuf>> {
    let run = gated_run(&a.run)?;
    let field = conditional_gate_field(&run.gated, a.condition.into(), &run.cfg, &run.device)?;
    // the conditional field is exactly zero above its cutoff, so padding is lossless
    let needed = (8.0 * a.half_width * a.half_width).ceil() as usize;
    let field = pad(&field, needed)?;
    let grid = wigner_grid(&field, a.half_width, a.points)?;
    let params = json!({
        "condition": a.condition,
        "half_width": a.half_width,
        "points": a.points,
    });
    let manifest = RunManifest::new("wigner", params, Some(run.device_hash), Some(run.cfg));
    let mut out = OutputDir::create(a.run.out, manifest)?;
    let rows = grid.iter().map(|p| [num(p.x), num(p.p), num(p.w)]);
    let csv = out.csv("wigner.csv", &["x", "p", "w"], rows)?;
    Ok(vec![csv, out.finish()?])
}

pub fn calibrate(inputs: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let (file, bytes): (CalibrationFile, _) = read_json(inputs)?;
    let report = calibration_report(&file)?;
    let params = json!({ "inputs_sha256": crate::manifest::sha256_hex(&bytes) });
    let mut dir = OutputDir::create(out, RunManifest::new("calibrate", params, None, None))?;
    let path = dir.json("calibration.json", &report)?;
    Ok(vec![path, dir.finish()?])
}

pub fn defaults(out: &Path, matched: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| crate::manifest::io_error(out, e))?;
    let device = if matched {
        DeviceParams::paper_matched()
    } else {
        DeviceParams::paper_defaults()
    };
    let device_path = out.join("device.json");
    device.save(&device_path)?;
    let protocol_path = out.join("protocol.json");
    let text = serde_json::to_string_pretty(&ProtocolConfig::paper_point())
        .map_err(|e| crate::manifest::io_error(&protocol_path, e))?;
    std::fs::write(&protocol_path, text + "\n").map_err(|e| crate::manifest::io_error(&protocol_path, e))?;
    Ok(vec![device_path, protocol_path])
}
