//! Mean-field model of the two-sided cavity at large photon numbers with a
//! saturable, qubit-state-dependent dispersive pull
//!
//! ```text
//! n·[(κ/2)² + (Δ − p_L/(1 + n/n_crit,L))²] = κ_in·P
//! ```
//!
//! where Δ is measured from the bare (qubit-decoupled) resonance and p_L is
//! the full pull of level L. All rates enter in angular units (rad/μs).

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{extinction_db, gain_db, predict_single_photon, CalibrationResult};
use crate::cavity::CavityParams;
use crate::error::{Error, Result};
use crate::hilbert::QubitLevel;
use crate::protocol::Subspace;

const SCAN_POINTS: usize = 4000;
const SCAN_DECADES: f64 = 16.0;

/// Device-file settings of the saturable model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationSettings {
    pub n_crit_g: f64,
    pub n_crit_e: f64,
    pub n_crit_f: f64,
    /// Dispersive shift of the g level relative to the bare cavity.
    pub chi_g_bare_mhz: f64,
    /// Intracavity drive photons delivered per nominal signal photon.
    pub drive_photons_per_signal_photon: f64,
}

impl Default for SaturationSettings {
    fn default() -> Self {
        Self {
            n_crit_g: 1e5,
            n_crit_e: 2e5,
            n_crit_f: 1e5,
            chi_g_bare_mhz: -1.9,
            drive_photons_per_signal_photon: 580.0,
        }
    }
}

impl SaturationSettings {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (name, v) in [
            ("n_crit_g", self.n_crit_g),
            ("n_crit_e", self.n_crit_e),
            ("n_crit_f", self.n_crit_f),
            ("drive_photons_per_signal_photon", self.drive_photons_per_signal_photon),
        ] {
            if !(v > 0.0) {
                return Err(Error::invariant(format!("{prefix}.{name}"), format!("must be > 0, got {v}")));
            }
        }
        if !self.chi_g_bare_mhz.is_finite() {
            return Err(Error::invariant(format!("{prefix}.chi_g_bare_mhz"), "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturableCavityModel {
    pub base: CavityParams,
    pub n_crit_g: f64,
    pub n_crit_e: f64,
    pub n_crit_f: f64,
    pub chi_g_bare_mhz: f64,
    /// √(photons/μs) incident on the input port.
    pub drive_amplitude: f64,
    pub window_us: f64,
    pub drive_photons_per_signal_photon: f64,
}

impl SaturableCavityModel {
    pub fn new(base: CavityParams, s: &SaturationSettings, window_us: f64) -> Self {
        Self {
            base,
            n_crit_g: s.n_crit_g,
            n_crit_e: s.n_crit_e,
            n_crit_f: s.n_crit_f,
            chi_g_bare_mhz: s.chi_g_bare_mhz,
            drive_amplitude: 0.0,
            window_us,
            drive_photons_per_signal_photon: s.drive_photons_per_signal_photon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate("base")?;
        if self.base.kappa_ext_in_mhz <= 0.0 || self.base.kappa_ext_out_mhz <= 0.0 {
            return Err(Error::invariant("base", "the saturable model needs a two-sided cavity"));
        }
        SaturationSettings {
            n_crit_g: self.n_crit_g,
            n_crit_e: self.n_crit_e,
            n_crit_f: self.n_crit_f,
            chi_g_bare_mhz: self.chi_g_bare_mhz,
            drive_photons_per_signal_photon: self.drive_photons_per_signal_photon,
        }
        .validate("model")?;
        if !(self.drive_amplitude >= 0.0) || !self.drive_amplitude.is_finite() {
            return Err(Error::invariant(
                "drive_amplitude",
                format!("must be finite and >= 0, got {}", self.drive_amplitude),
            ));
        }
        if !(self.window_us > 0.0) {
            return Err(Error::invariant("window_us", format!("must be > 0, got {}", self.window_us)));
        }
        Ok(())
    }

    /// Drive set to deliver the photon flux equivalent of `n_s` signal photons.
    pub fn with_signal_photons(&self, n_s: f64) -> Self {
        Self {
            drive_amplitude: (self.drive_photons_per_signal_photon * n_s / self.window_us).sqrt(),
            ..*self
        }
    }

    pub fn bare_frequency(&self) -> f64 {
        self.base.f0_mhz - 2.0 * self.chi_g_bare_mhz
    }

    pub fn n_crit(&self, level: QubitLevel) -> f64 {
        match level {
            QubitLevel::G => self.n_crit_g,
            QubitLevel::E => self.n_crit_e,
            QubitLevel::F => self.n_crit_f,
        }
    }

    /// Unsaturated pull of `level` from the bare resonance, in MHz.
    pub fn pull(&self, level: QubitLevel) -> f64 {
        2.0 * self.chi_g_bare_mhz + self.base.shifted_frequency(level) - self.base.f0_mhz
    }

    fn balance(&self, f: f64, level: QubitLevel) -> Balance {
        let k = 0.5 * TAU * self.base.kappa_total();
        Balance {
            k2: k * k,
            detuning: TAU * (f - self.bare_frequency()),
            pull: TAU * self.pull(level),
            n_crit: self.n_crit(level),
            source: TAU * self.base.kappa_ext_in_mhz * self.drive_amplitude.powi(2),
        }
    }
}

struct Balance {
    k2: f64,
    detuning: f64,
    pull: f64,
    n_crit: f64,
    source: f64,
}

impl Balance {
    fn residual(&self, n: f64) -> f64 {
        let u = self.detuning - self.pull / (1.0 + n / self.n_crit);
        n * (self.k2 + u * u) - self.source
    }

    fn slope(&self, n: f64) -> f64 {
        let s = 1.0 + n / self.n_crit;
        let u = self.detuning - self.pull / s;
        self.k2 + u * u + 2.0 * n * u * self.pull / (self.n_crit * s * s)
    }

    fn n_max(&self) -> f64 {
        self.source / self.k2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub photons: f64,
    pub stable: bool,
}

/// Every nonnegative steady state in ascending order, each tagged stable
/// when the balance residual increases through it.
pub fn steady_states(m: &SaturableCavityModel, f: f64, level: QubitLevel) -> Result<Vec<SteadyState>> {
    m.validate()?;
    let b = m.balance(f, level);
    if b.source == 0.0 {
        return Ok(vec![SteadyState { photons: 0.0, stable: true }]);
    }
    // a root can sit exactly at the bound n_max, so scan slightly past it
    let n_max = b.n_max() * (1.0 + 1e-9);
    let lo_exp = n_max.log10() - SCAN_DECADES;
    let mut grid = Vec::with_capacity(SCAN_POINTS + 1);
    grid.push(0.0);
    let step = SCAN_DECADES / (SCAN_POINTS - 1) as f64;
    grid.extend((0..SCAN_POINTS).map(|i| 10f64.powf(lo_exp + i as f64 * step)));
    *grid.last_mut().unwrap() = n_max;
    let values: Vec<f64> = grid.iter().map(|&n| b.residual(n)).collect();
    let mut roots = Vec::new();
    for i in 0..grid.len() {
        if values[i] == 0.0 {
            roots.push(grid[i]);
        } else if i + 1 < grid.len() && values[i] * values[i + 1] < 0.0 {
            let (lo, hi) = (grid[i], grid[i + 1]);
            roots.push(crate::quad::bisect(|n| b.residual(n), lo, hi, 4.0 * f64::EPSILON * hi)?);
        }
    }
    if roots.is_empty() {
        return Err(Error::Numeric(format!(
            "no steady state in [0, {n_max:.3e}] (residual at ends {:.3e}, {:.3e})",
            values[0],
            values[values.len() - 1]
        )));
    }
    Ok(roots
        .into_iter()
        .map(|n| SteadyState { photons: n, stable: b.slope(n) > 0.0 })
        .collect())
}

/// Stable intracavity photon numbers in ascending order.
pub fn steady_state_photons(m: &SaturableCavityModel, f: f64, level: QubitLevel) -> Result<Vec<f64>> {
    let stable: Vec<f64> = steady_states(m, f, level)?
        .into_iter()
        .filter(|s| s.stable)
        .map(|s| s.photons)
        .collect();
    if stable.is_empty() {
        return Err(Error::Numeric("no stable steady state found".into()));
    }
    Ok(stable)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Dim,
    Bright,
}

fn select(stable: &[f64], branch: Branch) -> f64 {
    match branch {
        Branch::Dim => stable[0],
        Branch::Bright => stable[stable.len() - 1],
    }
}

/// Output-port photons over the window, n·κ_out·T.
pub fn transmitted_photons(m: &SaturableCavityModel, f: f64, level: QubitLevel, branch: Branch) -> Result<f64> {
    let n = select(&steady_state_photons(m, f, level)?, branch);
    Ok(TAU * m.base.kappa_ext_out_mhz * n * m.window_us)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Linear,
    Blockade,
    Bright,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Linear => "linear",
            Regime::Blockade => "blockade",
            Regime::Bright => "bright",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPoint {
    pub n_s: f64,
    pub gain_db: f64,
    pub extinction_db: f64,
    pub regime: Regime,
    pub signal_frequency_mhz: f64,
    /// Transmitted signal photons with the qubit in g.
    pub transmitted_g: f64,
    /// Transmitted signal photons with the qubit in the active excited level.
    pub transmitted_excited: f64,
}

struct LevelResponse {
    photons: f64,
    transmitted: f64,
    root_count: usize,
}

fn level_response(m: &SaturableCavityModel, f: f64, level: QubitLevel) -> Result<LevelResponse> {
    let roots = steady_states(m, f, level)?;
    let stable: Vec<f64> = roots.iter().filter(|s| s.stable).map(|s| s.photons).collect();
    if stable.is_empty() {
        return Err(Error::Numeric("no stable steady state found".into()));
    }
    let n = select(&stable, Branch::Dim);
    Ok(LevelResponse {
        photons: n,
        transmitted: TAU * m.base.kappa_ext_out_mhz * n * m.window_us / m.drive_photons_per_signal_photon,
        root_count: roots.len(),
    })
}

fn classify(m: &SaturableCavityModel, levels: &[(QubitLevel, &LevelResponse)]) -> Regime {
    let mut regime = Regime::Linear;
    for &(level, r) in levels {
        let nc = m.n_crit(level);
        if r.photons >= nc {
            return Regime::Bright;
        }
        let saturated_shift = m.pull(level).abs() * r.photons / (r.photons + nc);
        if saturated_shift >= 0.25 * m.base.kappa_total() || r.root_count > 1 {
            regime = Regime::Blockade;
        }
    }
    regime
}

fn gain_point(
    m: &SaturableCavityModel,
    eta: f64,
    p_s: f64,
    n_s: f64,
    excited: QubitLevel,
) -> Result<GainPoint> {
    let driven = m.with_signal_photons(n_s);
    let candidates = [
        m.base.shifted_frequency(excited),
        m.base.f0_mhz,
        m.bare_frequency(),
    ];
    let mut best: Option<GainPoint> = None;
    for f in candidates {
        let g = level_response(&driven, f, QubitLevel::G)?;
        let e = level_response(&driven, f, excited)?;
        let cal = CalibrationResult {
            p_g_open: 1.0 - p_s,
            p_g_close: p_s,
            n_g_state: g.transmitted,
            n_e_state: e.transmitted,
            consistency_residual: 0.0,
        };
        let pred = predict_single_photon(&cal, eta);
        let point = GainPoint {
            n_s,
            gain_db: gain_db(pred.n1_open, pred.n0_open),
            extinction_db: extinction_db(pred.n0_open, pred.n1_open),
            regime: classify(&driven, &[(QubitLevel::G, &g), (excited, &e)]),
            signal_frequency_mhz: f,
            transmitted_g: g.transmitted,
            transmitted_excited: e.transmitted,
        };
        if best.is_none_or(|b| point.gain_db > b.gain_db) {
            best = Some(point);
        }
    }
    Ok(best.expect("candidate list is not empty"))
}

/// Gain and extinction across a signal photon grid. At each point the signal
/// is placed at whichever of the excited-dressed, g-dressed or bare resonance
/// gives the largest gain, and the dim branch is used throughout.
pub fn gain_sweep(
    m: &SaturableCavityModel,
    eta: f64,
    p_s: f64,
    grid: &[f64],
    subspace: Subspace,
) -> Result<Vec<GainPoint>> {
    m.validate()?;
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("n_s grid must be strictly ascending".into()));
    }
    if grid.iter().any(|&n| !(n > 0.0) || !n.is_finite()) {
        return Err(Error::InvalidArgument("n_s grid values must be finite and > 0".into()));
    }
    for (name, v) in [("eta", eta), ("p_s", p_s)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    let excited = subspace.excited();
    grid.par_iter()
        .map(|&n_s| gain_point(m, eta, p_s, n_s, excited))
        .collect()
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || points < 2 {
        return Err(Error::InvalidArgument(
            "log grid needs 0 < lo < hi and at least two points".into(),
        ));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (points - 1) as f64;
    let mut out: Vec<f64> = (0..points).map(|i| (a + i as f64 * step).exp()).collect();
    out[0] = lo;
    out[points - 1] = hi;
    Ok(out)
}
