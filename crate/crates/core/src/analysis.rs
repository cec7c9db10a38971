//! Calibration and figure-of-merit pipeline: η fitting, the four-intensity
//! calibration solve, ideal single-photon prediction, gain and extinction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::LabelCounts;

/// Largest gate photon number admitted by the η fit.
pub const FIT_MAX_GATE_PHOTONS: f64 = 0.5;

/// Recovered probabilities outside this band are rejected.
const PROBABILITY_SLACK: f64 = 0.05;

/// Odd-photon-number probability of a coherent state, (1 − e^{−2n})/2.
pub fn odd_occupation(n_g: f64) -> f64 {
    0.5 * (1.0 - (-2.0 * n_g).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaFit {
    pub eta: f64,
    pub dark_flip: f64,
}

/// Unweighted least-squares fit of β(n_g) = η·o(n_g) + dark·(1 − o(n_g)).
pub fn fit_eta(points: &[(f64, f64)]) -> Result<EtaFit> {
    let weighted: Vec<(f64, f64, f64)> = points.iter().map(|&(n, b)| (n, b, 1.0)).collect();
    fit_eta_weighted(&weighted)
}

fn check_fit_points(points: &[(f64, f64, f64)]) -> Result<()> {
    for &(n, b, w) in points {
        if !(0.0..=FIT_MAX_GATE_PHOTONS).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "gate photon number {n} is outside the linear regime [0, {FIT_MAX_GATE_PHOTONS}]"
            )));
        }
        if !b.is_finite() || !(w > 0.0) || !w.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "flip probability {b} or weight {w} is not usable"
            )));
        }
    }
    Ok(())
}

/// Weighted least squares on `(n_g, β, weight)` triples.
pub fn fit_eta_weighted(points: &[(f64, f64, f64)]) -> Result<EtaFit> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(
            "the eta fit needs at least two points".into(),
        ));
    }
    check_fit_points(points)?;
    let (mut s_oo, mut s_oq, mut s_qq, mut s_ob, mut s_qb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(n, b, w) in points {
        let o = odd_occupation(n);
        let q = 1.0 - o;
        s_oo += w * o * o;
        s_oq += w * o * q;
        s_qq += w * q * q;
        s_ob += w * o * b;
        s_qb += w * q * b;
    }
    let det = s_oo * s_qq - s_oq * s_oq;
    if det.abs() <= 1e-14 * (s_oo * s_qq).max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate(
            "eta fit design is singular (gate photon numbers are not distinct)".into(),
        ));
    }
    Ok(EtaFit {
        eta: (s_qq * s_ob - s_oq * s_qb) / det,
        dark_flip: (s_oo * s_qb - s_oq * s_ob) / det,
    })
}

/// One-parameter fit of η with the dark-flip probability held fixed.
pub fn fit_eta_fixed_dark(points: &[(f64, f64)], dark_flip: f64) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::InsufficientData("the eta fit needs at least one point".into()));
    }
    let weighted: Vec<(f64, f64, f64)> = points.iter().map(|&(n, b)| (n, b, 1.0)).collect();
    check_fit_points(&weighted)?;
    let (mut num, mut den) = (0.0, 0.0);
    for &(n, b) in points {
        let o = odd_occupation(n);
        num += o * (b - dark_flip * (1.0 - o));
        den += o * o;
    }
    if den == 0.0 {
        return Err(Error::Degenerate(
            "eta is unconstrained without a point at n_g > 0".into(),
        ));
    }
    Ok(num / den)
}

/// Mean transmitted intensities in the four gate/mode settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationInputs {
    pub n0_open: f64,
    pub na_open: f64,
    pub n0_close: f64,
    pub na_close: f64,
    pub beta: f64,
}

impl CalibrationInputs {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n0_open", self.n0_open),
            ("na_open", self.na_open),
            ("n0_close", self.n0_close),
            ("na_close", self.na_close),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invariant(name, format!("intensity must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invariant(
                "beta",
                format!("must lie in [0, 1], got {}", self.beta),
            ));
        }
        Ok(())
    }

    /// Forward model with the closure P_g^close = 1 − P_g^open.
    pub fn synthesize(p_g_open: f64, n_g_state: f64, n_e_state: f64, beta: f64) -> Self {
        let p_c = 1.0 - p_g_open;
        let mix = |p: f64| p * n_g_state + (1.0 - p) * n_e_state;
        Self {
            n0_open: mix(p_g_open),
            na_open: mix(p_g_open + beta),
            n0_close: mix(p_c),
            na_close: mix(p_c - beta),
            beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub p_g_open: f64,
    pub p_g_close: f64,
    pub n_g_state: f64,
    pub n_e_state: f64,
    pub consistency_residual: f64,
}

/// Solves the four-intensity system under the closure P_g^close = 1 − P_g^open.
///
/// The two gated-minus-ungated differences each estimate n_g − n_e; their
/// mean is used and half their disagreement is the consistency residual.
pub fn solve_calibration(c: &CalibrationInputs) -> Result<CalibrationResult> {
    c.validate()?;
    if c.beta == 0.0 {
        return Err(Error::Unsolvable(
            "beta = 0: the gated and ungated intensities carry no information".into(),
        ));
    }
    let d_open = c.na_open - c.n0_open;
    let d_close = c.n0_close - c.na_close;
    if d_open == 0.0 || d_close == 0.0 {
        return Err(Error::Unsolvable(
            "a gated-ungated intensity difference vanishes, so n_g_state = n_e_state".into(),
        ));
    }
    let delta1 = d_open / c.beta;
    let delta2 = d_close / c.beta;
    let delta = 0.5 * (delta1 + delta2);
    let n_e = 0.5 * (c.n0_open + c.n0_close - delta);
    let n_g = n_e + delta;
    let p_open = (c.n0_open - n_e) / delta;
    let p_close = 1.0 - p_open;
    for (name, p) in [("p_g_open", p_open), ("p_g_close", p_close)] {
        if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&p) || !p.is_finite() {
            return Err(Error::Unphysical(format!(
                "recovered {name} = {p:.4} is not a probability"
            )));
        }
    }
    let scale = c.n0_open.max(c.n0_close).max(c.na_open).max(c.na_close);
    for (name, n) in [("n_g_state", n_g), ("n_e_state", n_e)] {
        if n < -1e-9 * scale {
            return Err(Error::Unphysical(format!(
                "recovered {name} = {n:.4} is a negative intensity"
            )));
        }
    }
    Ok(CalibrationResult {
        p_g_open: p_open,
        p_g_close: p_close,
        n_g_state: n_g,
        n_e_state: n_e,
        consistency_residual: 0.5 * (delta1 - delta2).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinglePhotonPrediction {
    pub n1_open: f64,
    pub n0_open: f64,
    /// Set when P_g^open + η exceeded 1 and was clamped.
    pub clamped: bool,
}

/// Normally-open intensities for an ideal single-photon gate.
pub fn predict_single_photon(r: &CalibrationResult, eta: f64) -> SinglePhotonPrediction {
    let p0 = r.p_g_open.clamp(0.0, 1.0);
    let raw = p0 + eta;
    let p1 = raw.clamp(0.0, 1.0);
    SinglePhotonPrediction {
        n0_open: p0 * r.n_g_state + (1.0 - p0) * r.n_e_state,
        n1_open: p1 * r.n_g_state + (1.0 - p1) * r.n_e_state,
        clamped: raw > 1.0,
    }
}

/// 10·log10|n1 − n0|; −∞ when the intensities coincide.
pub fn gain_db(n1: f64, n0: f64) -> f64 {
    let d = (n1 - n0).abs();
    if d == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * d.log10()
    }
}

/// On/off contrast 10·log10(max/min); +∞ when either intensity is zero.
pub fn extinction_db(n_on: f64, n_off: f64) -> f64 {
    let (hi, lo) = if n_on >= n_off { (n_on, n_off) } else { (n_off, n_on) };
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * (hi / lo).log10()
    }
}

pub fn switching_probability(eta: f64, p_s: f64) -> f64 {
    eta * p_s
}

/// Rounds a dB value to the one-decimal precision used in reports.
pub fn round_db(x: f64) -> f64 {
    if x.is_finite() {
        (x * 10.0).round() / 10.0
    } else {
        x
    }
}

/// Input file of the calibration pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    #[serde(flatten)]
    pub intensities: CalibrationInputs,
    /// Single-photon flip probability; fitted from `beta_table` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_s: Option<f64>,
    /// `(n_g, β)` measurements for the η fit.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta_table: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransistorReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<BTreeMap<String, LabelCounts>>,
    pub calibration: CalibrationResult,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_fit: Option<EtaFit>,
    pub prediction: SinglePhotonPrediction,
    pub gain_db: f64,
    pub extinction_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switching_probability: Option<f64>,
    pub provenance: BTreeMap<String, String>,
}

/// Runs fit_eta (when a table is given), the calibration solve, the
/// single-photon prediction and the figures of merit.
pub fn calibration_report(file: &CalibrationFile) -> Result<TransistorReport> {
    let mut provenance = BTreeMap::new();
    provenance.insert("intensities".to_string(), "user".to_string());
    let eta_fit = if file.beta_table.is_empty() {
        None
    } else {
        Some(fit_eta(&file.beta_table)?)
    };
    let eta = match (file.eta, eta_fit) {
        (Some(eta), _) => {
            provenance.insert("eta".into(), "user".into());
            eta
        }
        (None, Some(fit)) => {
            provenance.insert("eta".into(), "derived".into());
            fit.eta
        }
        (None, None) => {
            return Err(Error::invariant(
                "eta",
                "give either `eta` or a non-empty `beta_table` to fit it",
            ))
        }
    };
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Unphysical(format!("eta = {eta:.4} is not a probability")));
    }
    let calibration = solve_calibration(&file.intensities)?;
    let prediction = predict_single_photon(&calibration, eta);
    let switching = match file.p_s {
        Some(p) if !(0.0..=1.0).contains(&p) => {
            return Err(Error::invariant("p_s", format!("must lie in [0, 1], got {p}")))
        }
        Some(p) => {
            provenance.insert("p_s".into(), "user".into());
            Some(switching_probability(eta, p))
        }
        None => None,
    };
    Ok(TransistorReport {
        counts: None,
        calibration,
        eta,
        eta_fit,
        gain_db: round_db(gain_db(prediction.n1_open, prediction.n0_open)),
        extinction_db: round_db(extinction_db(prediction.n0_open, prediction.n1_open)),
        prediction,
        switching_probability: switching,
        provenance,
    })
}
