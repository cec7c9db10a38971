//! The transistor pulse sequence, per shot and in aggregate.
//!
//! A shot prepares (|g⟩+|e⟩)/√2, reflects the gate field off cavity I
//! (conditional phase per photon), closes with a π/2 pulse of phase θ, optionally
//! moves e to f, and then transmits a square signal pulse through cavity II
//! while the qubit may relax, heat or be kicked by the signal itself.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavity::{self, CavityParams, PulseShape};
use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::hilbert::{
    c, embed, ComplexMatrix, ComplexVector, QubitLevel, QuantumState, DEFAULT_FIELD_CUTOFF,
};
use crate::measurement::{self, kmeans_threshold, Clustering, Label, LabelCounts};
use crate::qubit::{rotation_unitary, Transition, QUBIT_DIM};

/// Stream offset separating threshold-calibration shots from experiment shots.
const CALIBRATION_STREAM: u64 = 1 << 40;

/// Poisson series are summed until the remaining tail is below this.
const POISSON_TAIL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subspace {
    Ge,
    Gf,
}

impl Subspace {
    /// Excited level of the pair used during the signal window.
    pub fn excited(self) -> QubitLevel {
        match self {
            Subspace::Ge => QubitLevel::E,
            Subspace::Gf => QubitLevel::F,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalTarget {
    ResonantWithE,
    ResonantWithF,
    Bare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateSource {
    /// Poissonian photon number with mean `mean_gate_photons`.
    Coherent,
    /// Exactly `mean_gate_photons` photons (must be an integer).
    Fock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub theta_rad: f64,
    pub subspace: Subspace,
    #[serde(default)]
    pub pi_ef_pulse: bool,
    pub mean_gate_photons: f64,
    #[serde(default = "default_gate_source")]
    pub gate_source: GateSource,
    pub gate_pulse: PulseShape,
    pub mean_signal_photons: f64,
    pub signal_duration_us: f64,
    pub signal_detuning_target: SignalTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_override: Option<f64>,
    pub dark_flip: f64,
    /// Phenomenological signal-induced mixing rate per signal photon.
    pub signal_flip_rate_per_photon_per_us: f64,
    pub n_shots: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_shots: Option<usize>,
    pub seed: u64,
    #[serde(default = "default_cutoff")]
    pub field_cutoff: usize,
}

fn default_gate_source() -> GateSource {
    GateSource::Coherent
}

fn default_cutoff() -> usize {
    DEFAULT_FIELD_CUTOFF
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self::paper_point()
    }
}

impl ProtocolConfig {
    /// Normally-open ge operation with n_g = 0.18 and n_s = 37.2 in 10 μs.
    pub fn paper_point() -> Self {
        Self {
            theta_rad: 0.0,
            subspace: Subspace::Ge,
            pi_ef_pulse: false,
            mean_gate_photons: 0.18,
            gate_source: GateSource::Coherent,
            gate_pulse: PulseShape::gaussian(960.0),
            mean_signal_photons: 37.2,
            signal_duration_us: 10.0,
            signal_detuning_target: SignalTarget::ResonantWithE,
            eta_override: None,
            dark_flip: 0.04,
            signal_flip_rate_per_photon_per_us: 4e-8,
            n_shots: 10_000,
            calibration_shots: None,
            seed: 20_230_101,
            field_cutoff: DEFAULT_FIELD_CUTOFF,
        }
    }

    /// The gf variant: π_ef after the closing pulse and the signal on the
    /// f-dressed resonance.
    pub fn gf_variant(mut self) -> Self {
        self.subspace = Subspace::Gf;
        self.pi_ef_pulse = true;
        self.signal_detuning_target = SignalTarget::ResonantWithF;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| -> Result<()> {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invariant(name, format!("must be finite and >= 0, got {v}")));
            }
            Ok(())
        };
        let prob = |name: &str, v: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invariant(name, format!("must lie in [0, 1], got {v}")));
            }
            Ok(())
        };
        if !self.theta_rad.is_finite() {
            return Err(Error::invariant("theta_rad", "must be finite"));
        }
        nonneg("mean_gate_photons", self.mean_gate_photons)?;
        nonneg("mean_signal_photons", self.mean_signal_photons)?;
        nonneg(
            "signal_flip_rate_per_photon_per_us",
            self.signal_flip_rate_per_photon_per_us,
        )?;
        if !(self.signal_duration_us > 0.0) || !self.signal_duration_us.is_finite() {
            return Err(Error::invariant("signal_duration_us", "must be positive"));
        }
        prob("dark_flip", self.dark_flip)?;
        if let Some(eta) = self.eta_override {
            prob("eta_override", eta)?;
        }
        if self.n_shots == 0 {
            return Err(Error::invariant("n_shots", "must be >= 1"));
        }
        if self.calibration_shots == Some(0) || self.calibration_shots == Some(1) {
            return Err(Error::invariant("calibration_shots", "must be >= 2"));
        }
        if self.subspace == Subspace::Gf && !self.pi_ef_pulse {
            return Err(Error::invariant(
                "pi_ef_pulse",
                "the gf subspace requires the pi_ef pulse to be enabled",
            ));
        }
        if self.field_cutoff < 2 {
            return Err(Error::invariant("field_cutoff", "must be >= 2"));
        }
        match self.gate_source {
            GateSource::Fock => {
                let n = self.mean_gate_photons;
                if n.fract() != 0.0 || n >= self.field_cutoff as f64 {
                    return Err(Error::invariant(
                        "mean_gate_photons",
                        format!(
                            "a Fock source needs an integer photon number below field_cutoff ({}), got {n}",
                            self.field_cutoff
                        ),
                    ));
                }
            }
            GateSource::Coherent => {
                if self.mean_gate_photons > self.field_cutoff as f64 / 4.0 {
                    return Err(Error::invariant(
                        "field_cutoff",
                        format!(
                            "cutoff {} is inadequate for a mean gate photon number of {}",
                            self.field_cutoff, self.mean_gate_photons
                        ),
                    ));
                }
            }
        }
        self.gate_pulse.validate("gate_pulse")
    }

    pub fn calibration_shot_count(&self) -> usize {
        self.calibration_shots.unwrap_or(self.n_shots.max(200))
    }
}

/// Gate reflection as a quantum channel on qubit ⊗ field.
///
/// A photon-number component |n⟩ picks up the qubit phase flip Z^n, except
/// that with probability `1 − eta` (odd n) or `dark_flip` (even n) the parity
/// of the applied flip is wrong. The field then loses each photon
/// independently with probability `1 − survival`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateChannel {
    pub eta: f64,
    pub dark_flip: f64,
    pub survival: f64,
}

impl GateChannel {
    pub fn ideal() -> Self {
        Self {
            eta: 1.0,
            dark_flip: 0.0,
            survival: 1.0,
        }
    }

    pub fn from_cavity(c: &CavityParams, pulse: &PulseShape, dark_flip: f64) -> Result<Self> {
        let s = cavity::gate_scattering(c, pulse)?;
        Ok(Self {
            eta: s.efficiency(),
            dark_flip,
            survival: s.survival,
        })
    }

    pub fn for_protocol(cfg: &ProtocolConfig, device: &DeviceParams) -> Result<Self> {
        let mut ch = Self::from_cavity(&device.cavity_i, &cfg.gate_pulse, cfg.dark_flip)?;
        if let Some(eta) = cfg.eta_override {
            ch.eta = eta;
        }
        Ok(ch)
    }

    /// Probability that n reflected photons flip the qubit.
    pub fn flip_probability(&self, n: usize) -> f64 {
        if n % 2 == 1 {
            self.eta
        } else {
            self.dark_flip
        }
    }

    /// Applies the channel to a qubit (index 0, dim 3) ⊗ field (index 1) state.
    pub fn apply(&self, s: &QuantumState) -> Result<QuantumState> {
        let d = match s.dims() {
            [QUBIT_DIM, d] => *d,
            dims => {
                return Err(Error::DimensionMismatch {
                    expected: "[3, d] (qubit, gate field)".into(),
                    found: format!("{dims:?}"),
                })
            }
        };
        let z = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0), c(-1.0), c(1.0)]));
        let id = ComplexMatrix::identity(QUBIT_DIM, QUBIT_DIM);
        let dim = QUBIT_DIM * d;
        let mut k_right = ComplexMatrix::zeros(dim, dim);
        let mut k_wrong = ComplexMatrix::zeros(dim, dim);
        for n in 0..d {
            let q = self.flip_probability(n);
            // odd n: the right outcome is a flip; even n: no flip
            let (p_right, right, wrong) = if n % 2 == 1 {
                (q, &z, &id)
            } else {
                (1.0 - q, &id, &z)
            };
            for a in 0..QUBIT_DIM {
                let i = a * d + n;
                k_right[(i, i)] = right[(a, a)] * p_right.sqrt();
                k_wrong[(i, i)] = wrong[(a, a)] * (1.0 - p_right).sqrt();
            }
        }
        let rho = s.rho();
        let out = &k_right * rho * k_right.adjoint() + &k_wrong * rho * k_wrong.adjoint();
        let flipped = QuantumState::from_parts(s.dims().to_vec(), out)?;
        photon_loss(&flipped, 1, self.survival)
    }
}

/// Independent loss of each photon of subsystem `mode` with survival `s`.
pub fn photon_loss(state: &QuantumState, mode: usize, survival: f64) -> Result<QuantumState> {
    if !(0.0..=1.0).contains(&survival) {
        return Err(Error::InvalidArgument(format!(
            "survival must lie in [0, 1], got {survival}"
        )));
    }
    let dims = state.dims();
    let d = *dims.get(mode).ok_or(Error::InvalidSubsystem {
        index: mode,
        count: dims.len(),
    })?;
    if survival == 1.0 {
        return Ok(state.clone());
    }
    let mut out = ComplexMatrix::zeros(state.dim(), state.dim());
    for k in 0..d {
        let mut a = ComplexMatrix::zeros(d, d);
        for n in k..d {
            let w = binomial(n, k) * survival.powi((n - k) as i32) * (1.0 - survival).powi(k as i32);
            a[(n - k, n)] = c(w.sqrt());
        }
        let full = embed(&a, mode, dims)?;
        out += &full * state.rho() * full.adjoint();
    }
    QuantumState::from_parts(dims.to_vec(), out)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Gate reflection with the cavity-derived channel and no dark flips.
pub fn gate_interaction(
    qubit_field: &QuantumState,
    c: &CavityParams,
    p: &PulseShape,
) -> Result<QuantumState> {
    GateChannel::from_cavity(c, p, 0.0)?.apply(qubit_field)
}

fn poisson_weights(mean: f64) -> Vec<f64> {
    let mut w = vec![(-mean).exp()];
    let mut acc = w[0];
    let mut n = 0usize;
    while 1.0 - acc > POISSON_TAIL && n < 10_000 {
        n += 1;
        let next = w[n - 1] * mean / n as f64;
        w.push(next);
        acc += next;
    }
    w
}

/// β = Σ_n Poisson(n; n_g)·q(n) for the per-photon parity flip model.
pub fn coherent_flip_probability(n_g: f64, eta: f64, dark_flip: f64) -> f64 {
    let ch = GateChannel {
        eta,
        dark_flip,
        survival: 1.0,
    };
    poisson_weights(n_g)
        .iter()
        .enumerate()
        .map(|(n, w)| w * ch.flip_probability(n))
        .sum()
}

/// One Monte Carlo trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub index: u64,
    pub gate_photons: usize,
    pub gate_flip_happened: bool,
    pub qubit_level_at_signal_start: QubitLevel,
    pub jump_time_us: Option<f64>,
    pub qubit_level_at_signal_end: QubitLevel,
    pub true_transmitted_photons: f64,
    pub detected_reading: f64,
    pub label: Option<Label>,
}

/// Pre-computed per-run quantities shared by all shots.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: ProtocolConfig,
    device: DeviceParams,
    channel: GateChannel,
    signal_frequency_mhz: f64,
    transmission: [f64; 3],
    /// P(qubit ends in e after the closing pulse), without and with a flip.
    excited_prob: [f64; 2],
}

impl Experiment {
    pub fn new(cfg: &ProtocolConfig, device: &DeviceParams) -> Result<Self> {
        cfg.validate()?;
        device.validate()?;
        let channel = GateChannel::for_protocol(cfg, device)?;
        let cii = &device.cavity_ii;
        let signal_frequency_mhz = match cfg.signal_detuning_target {
            SignalTarget::ResonantWithE => cii.shifted_frequency(QubitLevel::E),
            SignalTarget::ResonantWithF => cii.shifted_frequency(QubitLevel::F),
            SignalTarget::Bare => cii.f0_mhz,
        };
        let mut transmission = [0.0; 3];
        for level in QubitLevel::ALL {
            transmission[level.index()] =
                cavity::transmission_coeff(cii, signal_frequency_mhz, level)?.norm_sqr();
        }
        let prep = rotation_unitary(Transition::Ge, FRAC_PI_2, FRAC_PI_2);
        let close = rotation_unitary(Transition::Ge, FRAC_PI_2, FRAC_PI_2 + cfg.theta_rad);
        let ground = ComplexVector::from_vec(vec![c(1.0), c(0.0), c(0.0)]);
        let plus = &prep * ground;
        let excited_after = |flip: bool| {
            let mut v = plus.clone();
            if flip {
                v[1] = -v[1];
            }
            (&close * v)[1].norm_sqr()
        };
        Ok(Self {
            cfg: cfg.clone(),
            device: device.clone(),
            channel,
            signal_frequency_mhz,
            transmission,
            excited_prob: [excited_after(false), excited_after(true)],
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    pub fn channel(&self) -> &GateChannel {
        &self.channel
    }

    pub fn signal_frequency_mhz(&self) -> f64 {
        self.signal_frequency_mhz
    }

    /// |t|² of cavity II at the signal frequency for each qubit level.
    pub fn transmission(&self, level: QubitLevel) -> f64 {
        self.transmission[level.index()]
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(stream);
        rng
    }

    fn sample_gate_photons<R: Rng>(&self, rng: &mut R) -> usize {
        let n = self.cfg.mean_gate_photons;
        match self.cfg.gate_source {
            GateSource::Fock => n as usize,
            GateSource::Coherent if n == 0.0 => 0,
            GateSource::Coherent => Poisson::new(n).expect("positive mean").sample(rng) as usize,
        }
    }

    /// Outgoing transitions (target, rate) during the signal window.
    fn transitions(&self, level: QubitLevel) -> Vec<(QubitLevel, f64)> {
        let r = &self.device.qubit_rates;
        let kick = self.cfg.signal_flip_rate_per_photon_per_us * self.cfg.mean_signal_photons;
        let partner = self.cfg.subspace.excited();
        let mut out = Vec::with_capacity(2);
        match level {
            QubitLevel::G => {
                out.push((QubitLevel::E, r.thermal_excitation_rate_per_us));
                out.push((partner, kick));
            }
            QubitLevel::E => {
                out.push((QubitLevel::G, r.decay_ge()));
                if partner == QubitLevel::E {
                    out.push((QubitLevel::G, kick));
                }
            }
            QubitLevel::F => {
                out.push((QubitLevel::E, r.decay_ef()));
                if partner == QubitLevel::F {
                    out.push((QubitLevel::G, kick));
                }
            }
        }
        out.retain(|&(_, rate)| rate > 0.0);
        out
    }

    /// Evolves the qubit level through the signal window. Returns the first
    /// jump time, the final level and the transmitted photon number.
    fn signal_window<R: Rng>(&self, start: QubitLevel, rng: &mut R) -> (Option<f64>, QubitLevel, f64) {
        let window = self.cfg.signal_duration_us;
        let mut level = start;
        let mut t = 0.0;
        let mut first_jump = None;
        let mut weighted = 0.0;
        loop {
            let moves = self.transitions(level);
            let total: f64 = moves.iter().map(|m| m.1).sum();
            let next = crate::qubit::sample_exit(total, window - t, rng);
            let Some(dt) = next else {
                weighted += (window - t) * self.transmission(level);
                break;
            };
            weighted += dt * self.transmission(level);
            t += dt;
            first_jump.get_or_insert(t);
            let mut pick = rng.random::<f64>() * total;
            let mut target = moves[moves.len() - 1].0;
            for &(to, rate) in &moves {
                if pick < rate {
                    target = to;
                    break;
                }
                pick -= rate;
            }
            level = target;
        }
        let transmitted = self.cfg.mean_signal_photons * weighted / window;
        (first_jump, level, transmitted.max(0.0))
    }

    /// Runs shot `index` on its own RNG stream.
    pub fn run_shot(&self, index: u64) -> ShotRecord {
        let mut rng = self.rng(index);
        let n = self.sample_gate_photons(&mut rng);
        let flip = rng.random_bool(self.channel.flip_probability(n));
        let p_excited = self.excited_prob[flip as usize];
        let mut level = if rng.random::<f64>() < p_excited {
            QubitLevel::E
        } else {
            QubitLevel::G
        };
        if self.cfg.pi_ef_pulse && level == QubitLevel::E {
            level = QubitLevel::F;
        }
        let (jump, end, transmitted) = self.signal_window(level, &mut rng);
        let reading = measurement::detect(transmitted, &self.device.detection, &mut rng);
        ShotRecord {
            index,
            gate_photons: n,
            gate_flip_happened: flip,
            qubit_level_at_signal_start: level,
            jump_time_us: jump,
            qubit_level_at_signal_end: end,
            true_transmitted_photons: transmitted,
            detected_reading: reading,
            label: None,
        }
    }

    /// All `n_shots` records in index order.
    pub fn run(&self) -> Vec<ShotRecord> {
        (0..self.cfg.n_shots as u64)
            .into_par_iter()
            .map(|i| self.run_shot(i))
            .collect()
    }

    /// Readings of reference shots with the qubit prepared alternately in g
    /// and in the active excited level at the start of the signal window.
    pub fn calibration_readings(&self) -> Vec<f64> {
        let excited = self.cfg.subspace.excited();
        (0..self.cfg.calibration_shot_count() as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = self.rng(CALIBRATION_STREAM + i);
                let start = if i % 2 == 0 { QubitLevel::G } else { excited };
                let (_, _, transmitted) = self.signal_window(start, &mut rng);
                measurement::detect(transmitted, &self.device.detection, &mut rng)
            })
            .collect()
    }

    /// K-means threshold from the reference shots.
    pub fn calibrate_threshold(&self) -> Result<Clustering> {
        kmeans_threshold(&self.calibration_readings())
    }
}

pub fn run_shot(cfg: &ProtocolConfig, device: &DeviceParams, stream: u64) -> Result<ShotRecord> {
    Ok(Experiment::new(cfg, device)?.run_shot(stream))
}

pub fn run_experiment(cfg: &ProtocolConfig, device: &DeviceParams) -> Result<Vec<ShotRecord>> {
    Ok(Experiment::new(cfg, device)?.run())
}

/// Assigns on/off labels in place and returns the counts.
pub fn label_records(records: &mut [ShotRecord], clustering: &Clustering) -> LabelCounts {
    for r in records.iter_mut() {
        r.label = Some(clustering.classify(r.detected_reading));
    }
    let labels: Vec<Label> = records.iter().filter_map(|r| r.label).collect();
    LabelCounts::tally(&labels)
}

/// Bayesian mixture Σ_n P(n | label) L_s(|n⟩⟨n|) of the reflected gate field,
/// with P(n | label) estimated from the labeled records.
pub fn conditional_gate_field(
    records: &[ShotRecord],
    condition: Label,
    cfg: &ProtocolConfig,
    device: &DeviceParams,
) -> Result<QuantumState> {
    if records.iter().any(|r| r.label.is_none()) {
        return Err(Error::InvalidArgument("records must be labeled first".into()));
    }
    let channel = GateChannel::for_protocol(cfg, device)?;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for r in records.iter().filter(|r| r.label == Some(condition)) {
        *counts.entry(r.gate_photons).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(Error::InsufficientData(format!(
            "no shots labeled `{}`",
            condition.as_str()
        )));
    }
    let d = cfg.field_cutoff;
    if let Some((&n, _)) = counts.iter().next_back().filter(|(&n, _)| n >= d) {
        return Err(Error::CutoffViolation { n, dim: d });
    }
    let mut diag = vec![c(0.0); d];
    for (&n, &k) in &counts {
        diag[n] = c(k as f64 / total as f64);
    }
    let mixture = QuantumState::from_parts(
        vec![d],
        ComplexMatrix::from_diagonal(&DVector::from_vec(diag)),
    )?;
    photon_loss(&mixture, 0, channel.survival)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{coherent_state, fock_state, mean_photon, partial_trace, qubit_state, tensor};
    use crate::measurement::DetectionModel;
    use crate::qubit::{apply_rotation, QubitRates};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn ideal_device() -> DeviceParams {
        let mut d = DeviceParams::paper_defaults();
        d.cavity_i.kappa_int_mhz = 0.0;
        d.qubit_rates = QubitRates::ideal();
        d.detection = DetectionModel::noiseless();
        d
    }

    fn ideal_cfg() -> ProtocolConfig {
        ProtocolConfig {
            eta_override: Some(1.0),
            dark_flip: 0.0,
            signal_flip_rate_per_photon_per_us: 0.0,
            n_shots: 2000,
            ..ProtocolConfig::paper_point()
        }
    }

    fn plus_with(field: QuantumState) -> QuantumState {
        let q = apply_rotation(&qubit_state(QubitLevel::G), Transition::Ge, FRAC_PI_2, FRAC_PI_2)
            .unwrap();
        tensor(&q, &field)
    }

    #[test]
    fn vacuum_leaves_qubit_untouched() {
        let s = plus_with(fock_state(0, 4).unwrap());
        let ch = GateChannel {
            eta: 0.8,
            dark_flip: 0.0,
            survival: 0.7,
        };
        let out = ch.apply(&s).unwrap();
        let q_in = partial_trace(&s, &[0]).unwrap();
        let q_out = partial_trace(&out, &[0]).unwrap();
        assert!((q_in.rho() - q_out.rho()).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn single_photon_entangles_phase() {
        let out = GateChannel::ideal().apply(&plus_with(fock_state(1, 4).unwrap())).unwrap();
        // (|1⟩|g⟩ − |1⟩|e⟩)/√2
        let mut ket = ComplexVector::zeros(12);
        ket[1] = c(FRAC_1_SQRT_2);
        ket[4 + 1] = c(-FRAC_1_SQRT_2);
        let target = QuantumState::from_ket(vec![3, 4], &ket).unwrap();
        assert!((out.rho() - target.rho()).iter().all(|z| z.norm() < 1e-14));
        let field = partial_trace(&out, &[1]).unwrap();
        assert_abs_diff_eq!(field.rho()[(1, 1)].re, 1.0, epsilon = 1e-14);
    }

    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn narrowband_lossless_cavity_matches_ideal_channel() {
        let mut c = DeviceParams::paper_defaults().cavity_i;
        c.kappa_int_mhz = 0.0;
        c.chi_ge_mhz = -0.5 * c.kappa_ext_in_mhz;
        let s = plus_with(fock_state(1, 4).unwrap());
        let out = gate_interaction(&s, &c, &PulseShape::gaussian(2.0e7)).unwrap();
        let ideal = GateChannel::ideal().apply(&s).unwrap();
        assert!((out.rho() - ideal.rho()).iter().all(|z| z.norm() < 1e-5));
    }

    #[test]
    fn coherent_gate_flip_probability_after_closing_pulse() {
        let alpha = num_complex::Complex64::new(0.18f64.sqrt(), 0.0);
        let s = plus_with(coherent_state(alpha, 8).unwrap());
        let out = GateChannel::ideal().apply(&s).unwrap();
        let closed = apply_rotation(&out, Transition::Ge, FRAC_PI_2, FRAC_PI_2).unwrap();
        let q = partial_trace(&closed, &[0]).unwrap();
        // no flip ends in e, flip ends in g
        let expected = (1.0 - (-2.0 * 0.18f64).exp()) / 2.0;
        assert_abs_diff_eq!(q.populations()[0], expected, epsilon = 1e-6);
        assert_abs_diff_eq!(expected, 0.1512, epsilon = 1e-4);
    }

    #[test]
    fn channel_flip_statistics_match_flip_probability() {
        let ch = GateChannel {
            eta: 0.8,
            dark_flip: 0.04,
            survival: 0.83,
        };
        for n in 0..5 {
            let out = ch.apply(&plus_with(fock_state(n, 6).unwrap())).unwrap();
            let closed = apply_rotation(&out, Transition::Ge, FRAC_PI_2, FRAC_PI_2).unwrap();
            let pg = partial_trace(&closed, &[0]).unwrap().populations()[0];
            assert_abs_diff_eq!(pg, ch.flip_probability(n), epsilon = 1e-12);
            let mean = mean_photon(&out, 1).unwrap();
            assert_abs_diff_eq!(mean, n as f64 * 0.83, epsilon = 1e-12);
        }
    }

    /// Independent parity oracle: Σ_odd Poisson(n) in closed form.
    fn parity_oracle(n_g: f64, eta: f64, dark: f64) -> f64 {
        let odd = 0.5 * (1.0 - (-2.0 * n_g).exp());
        eta * odd + dark * (1.0 - odd)
    }

    #[test]
    fn coherent_flip_probability_examples() {
        assert_abs_diff_eq!(coherent_flip_probability(0.0, 0.8, 0.04), 0.04, epsilon = 1e-15);
        assert_abs_diff_eq!(
            coherent_flip_probability(0.18, 1.0, 0.0),
            parity_oracle(0.18, 1.0, 0.0),
            epsilon = 1e-9
        );
        let beta = coherent_flip_probability(0.18, 0.80, 0.04);
        assert_abs_diff_eq!(beta, 0.155, epsilon = 1e-3);
    }

    #[test]
    fn photon_loss_thins_fock_states() {
        let s = photon_loss(&fock_state(3, 5).unwrap(), 0, 0.5).unwrap();
        let p = s.populations();
        for (k, expected) in [0.125, 0.375, 0.375, 0.125].into_iter().enumerate() {
            assert_abs_diff_eq!(p[k], expected, epsilon = 1e-14);
        }
        assert!(photon_loss(&s, 1, 0.5).is_err());
        assert!(photon_loss(&s, 0, 1.5).is_err());
    }

    #[test]
    fn fock_photon_switches_off_ideal_transistor() {
        let cfg = ProtocolConfig {
            gate_source: GateSource::Fock,
            mean_gate_photons: 1.0,
            ..ideal_cfg()
        };
        let dev = ideal_device();
        let exp = Experiment::new(&cfg, &dev).unwrap();
        let rec = exp.run_shot(0);
        assert!(rec.gate_flip_happened);
        assert_eq!(rec.qubit_level_at_signal_start, QubitLevel::G);
        assert_abs_diff_eq!(
            rec.true_transmitted_photons,
            37.2 * exp.transmission(QubitLevel::G),
            epsilon = 1e-12
        );
    }

    #[test]
    fn no_gate_photon_leaves_transistor_open() {
        let cfg = ProtocolConfig {
            mean_gate_photons: 0.0,
            ..ideal_cfg()
        };
        let exp = Experiment::new(&cfg, &ideal_device()).unwrap();
        let rec = exp.run_shot(5);
        assert_eq!(rec.qubit_level_at_signal_start, QubitLevel::E);
        assert_abs_diff_eq!(rec.true_transmitted_photons, 0.7511 * 37.2, epsilon = 1e-2);
        assert_eq!(rec.jump_time_us, None);
    }

    #[test]
    fn experiment_is_reproducible_and_sized() {
        let cfg = ProtocolConfig {
            n_shots: 1,
            ..ProtocolConfig::paper_point()
        };
        let dev = DeviceParams::paper_defaults();
        assert_eq!(run_experiment(&cfg, &dev).unwrap().len(), 1);
        let cfg = ProtocolConfig {
            n_shots: 300,
            ..cfg
        };
        assert_eq!(run_experiment(&cfg, &dev).unwrap(), run_experiment(&cfg, &dev).unwrap());
    }

    #[test]
    fn ungated_ideal_run_is_all_on() {
        let cfg = ProtocolConfig {
            mean_gate_photons: 0.0,
            n_shots: 10_000,
            ..ideal_cfg()
        };
        let exp = Experiment::new(&cfg, &ideal_device()).unwrap();
        let cl = exp.calibrate_threshold().unwrap();
        let mut recs = exp.run();
        let counts = label_records(&mut recs, &cl);
        assert_eq!(counts.on, 10_000);
    }

    #[test]
    fn flip_fraction_converges_to_beta() {
        let cfg = ProtocolConfig {
            n_shots: 20_000,
            ..ProtocolConfig::paper_point()
        };
        let dev = DeviceParams::paper_defaults();
        let exp = Experiment::new(&cfg, &dev).unwrap();
        let recs = exp.run();
        let flips = recs.iter().filter(|r| r.gate_flip_happened).count() as f64 / 2e4;
        let beta = coherent_flip_probability(0.18, exp.channel().eta, 0.04);
        let sigma = (beta * (1.0 - beta) / 2e4).sqrt();
        assert!((flips - beta).abs() < 4.0 * sigma, "{flips} vs {beta}");
    }

    #[test]
    fn theta_pi_gives_complementary_levels() {
        let base = ProtocolConfig {
            n_shots: 500,
            ..ideal_cfg()
        };
        let closed = ProtocolConfig {
            theta_rad: PI,
            ..base.clone()
        };
        let dev = ideal_device();
        let a = run_experiment(&base, &dev).unwrap();
        let b = run_experiment(&closed, &dev).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.gate_photons, y.gate_photons);
            assert_ne!(x.qubit_level_at_signal_start, y.qubit_level_at_signal_start);
        }
    }

    #[test]
    fn gf_operation_uses_f_level() {
        let cfg = ProtocolConfig {
            mean_gate_photons: 0.0,
            ..ideal_cfg().gf_variant()
        };
        let exp = Experiment::new(&cfg, &ideal_device()).unwrap();
        assert_eq!(exp.run_shot(0).qubit_level_at_signal_start, QubitLevel::F);
        let bad = ProtocolConfig {
            pi_ef_pulse: false,
            ..cfg
        };
        assert!(matches!(bad.validate(), Err(Error::Invariant { field, .. }) if field == "pi_ef_pulse"));
    }

    #[test]
    fn relaxation_rate_matches_jump_statistics() {
        let cfg = ProtocolConfig {
            mean_gate_photons: 0.0,
            n_shots: 20_000,
            ..ideal_cfg()
        };
        let mut dev = ideal_device();
        dev.qubit_rates = QubitRates::default();
        let recs = run_experiment(&cfg, &dev).unwrap();
        let jumped = recs.iter().filter(|r| r.jump_time_us.is_some()).count() as f64 / 2e4;
        let p = 1.0 - (-10.0f64 / 30.0).exp();
        let sigma = (p * (1.0 - p) / 2e4).sqrt();
        assert!((jumped - p).abs() < 4.0 * sigma);
    }

    #[test]
    fn conditional_fields_of_ideal_device() {
        let cfg = ProtocolConfig {
            n_shots: 10_000,
            ..ideal_cfg()
        };
        let dev = ideal_device();
        let exp = Experiment::new(&cfg, &dev).unwrap();
        let cl = exp.calibrate_threshold().unwrap();
        let mut recs = exp.run();
        label_records(&mut recs, &cl);
        let off = conditional_gate_field(&recs, Label::Off, &cfg, &dev).unwrap();
        // only odd photon numbers flip the ideal qubit
        let p = off.populations();
        assert_eq!(p[0], 0.0);
        assert_eq!(p[2], 0.0);
        assert!(p[1] > 0.99);
        let on = conditional_gate_field(&recs, Label::On, &cfg, &dev).unwrap();
        assert_eq!(on.populations()[1], 0.0);
    }

    #[test]
    fn empty_condition_is_insufficient_data() {
        let cfg = ProtocolConfig {
            mean_gate_photons: 0.0,
            n_shots: 50,
            ..ideal_cfg()
        };
        let dev = ideal_device();
        let mut recs = run_experiment(&cfg, &dev).unwrap();
        let cl = Clustering {
            threshold: 1.0,
            low_center: 0.0,
            high_center: 2.0,
            iterations: 1,
        };
        label_records(&mut recs, &cl);
        assert!(matches!(
            conditional_gate_field(&recs, Label::Off, &cfg, &dev),
            Err(Error::InsufficientData(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn parity_model_is_exact_for_fock_inputs(n in 0usize..6) {
            let cfg = ProtocolConfig {
                gate_source: GateSource::Fock,
                mean_gate_photons: n as f64,
                n_shots: 20,
                ..ideal_cfg()
            };
            for r in run_experiment(&cfg, &ideal_device()).unwrap() {
                prop_assert_eq!(r.gate_flip_happened, n % 2 == 1);
            }
        }

        #[test]
        fn series_matches_parity_oracle(n_g in 0.0f64..2.0, eta in 0.0f64..1.0, dark in 0.0f64..1.0) {
            let a = coherent_flip_probability(n_g, eta, dark);
            prop_assert!((a - parity_oracle(n_g, eta, dark)).abs() < 1e-9);
        }
    }

    #[test]
    fn gated_off_fraction_grows_with_gate_photons() {
        let dev = DeviceParams::paper_defaults();
        let mut last = 0.0;
        for n_g in [0.0, 0.1, 0.2, 0.3, 0.4, 0.5] {
            let cfg = ProtocolConfig {
                mean_gate_photons: n_g,
                n_shots: 20_000,
                ..ProtocolConfig::paper_point()
            };
            let exp = Experiment::new(&cfg, &dev).unwrap();
            let cl = exp.calibrate_threshold().unwrap();
            let mut recs = exp.run();
            let frac = label_records(&mut recs, &cl).off_fraction();
            let tol = 3.0 * (frac * (1.0 - frac) / 2e4).sqrt();
            assert!(frac + tol >= last, "n_g {n_g}: {frac} < {last}");
            last = frac;
        }
    }
}
