//! Input-output scattering of the gate (single-sided) and signal (two-sided)
//! cavities, and the gating efficiency of a reflected gate pulse.
//!
//! All frequencies and rates are ordinary frequencies in MHz. For a cavity
//! driven at detuning `Δ = f - f_res` the steady state of
//! `ȧ = (iΔ - κ/2) a + √κ_in a_in`, `a_out = √κ_in a - a_in` gives
//!
//! ```text
//! r(Δ) = ((κ_ext - κ_int)/2 + iΔ) / ((κ_ext + κ_int)/2 - iΔ)      single-sided
//! t(Δ) = √(κ_in κ_out) / (κ/2 - iΔ)                                two-sided
//! ```
//!
//! The closed forms only involve ratios, so no 2π factors appear.

use std::f64::consts::PI;

use errorfunctions::ComplexErrorFunctions;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::QubitLevel;
use crate::quad;

/// Quadrature tolerance for pulse-averaged scattering quantities.
pub const SPECTRAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityParams {
    pub f0_mhz: f64,
    pub kappa_ext_in_mhz: f64,
    pub kappa_ext_out_mhz: f64,
    pub kappa_int_mhz: f64,
    pub chi_ge_mhz: f64,
    pub chi_gf_mhz: f64,
}

impl CavityParams {
    pub fn kappa_total(&self) -> f64 {
        self.kappa_ext_in_mhz + self.kappa_ext_out_mhz + self.kappa_int_mhz
    }

    pub fn is_single_sided(&self) -> bool {
        self.kappa_ext_out_mhz == 0.0
    }

    /// Checks the rate invariants, naming offending fields under `prefix`.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let rates = [
            ("kappa_ext_in_mhz", self.kappa_ext_in_mhz),
            ("kappa_ext_out_mhz", self.kappa_ext_out_mhz),
            ("kappa_int_mhz", self.kappa_int_mhz),
        ];
        for (name, v) in rates {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invariant(
                    format!("{prefix}.{name}"),
                    format!("rate must be finite and >= 0, got {v}"),
                ));
            }
        }
        for (name, v) in [
            ("f0_mhz", self.f0_mhz),
            ("chi_ge_mhz", self.chi_ge_mhz),
            ("chi_gf_mhz", self.chi_gf_mhz),
        ] {
            if !v.is_finite() {
                return Err(Error::invariant(format!("{prefix}.{name}"), "must be finite"));
            }
        }
        if self.kappa_total() <= 0.0 {
            return Err(Error::invariant(
                format!("{prefix}.kappa_ext_in_mhz"),
                "total linewidth must be positive",
            ));
        }
        Ok(())
    }

    /// Level-dependent resonance. The pull of level L relative to g is 2χ_L.
    pub fn shifted_frequency(&self, level: QubitLevel) -> f64 {
        match level {
            QubitLevel::G => self.f0_mhz,
            QubitLevel::E => self.f0_mhz + 2.0 * self.chi_ge_mhz,
            QubitLevel::F => self.f0_mhz + 2.0 * self.chi_gf_mhz,
        }
    }

    /// Midpoint between the g- and e-dressed resonances.
    pub fn ge_midpoint(&self) -> f64 {
        self.f0_mhz + self.chi_ge_mhz
    }
}

pub fn shifted_frequency(c: &CavityParams, level: QubitLevel) -> f64 {
    c.shifted_frequency(level)
}

fn single_sided_r(c: &CavityParams, detuning: f64) -> Complex64 {
    let num = Complex64::new(0.5 * (c.kappa_ext_in_mhz - c.kappa_int_mhz), detuning);
    let den = Complex64::new(0.5 * (c.kappa_ext_in_mhz + c.kappa_int_mhz), -detuning);
    num / den
}

fn two_sided_t(c: &CavityParams, detuning: f64) -> Complex64 {
    let den = Complex64::new(0.5 * c.kappa_total(), -detuning);
    Complex64::new((c.kappa_ext_in_mhz * c.kappa_ext_out_mhz).sqrt(), 0.0) / den
}

/// Reflection amplitude of a single-sided cavity.
pub fn reflection_coeff(c: &CavityParams, f: f64, level: QubitLevel) -> Result<Complex64> {
    if !c.is_single_sided() {
        return Err(Error::ContractViolation(
            "reflection_coeff needs a single-sided cavity (kappa_ext_out = 0)".into(),
        ));
    }
    Ok(single_sided_r(c, f - c.shifted_frequency(level)))
}

/// Transmission amplitude of a two-sided cavity.
pub fn transmission_coeff(c: &CavityParams, f: f64, level: QubitLevel) -> Result<Complex64> {
    if c.kappa_ext_in_mhz <= 0.0 || c.kappa_ext_out_mhz <= 0.0 {
        return Err(Error::ContractViolation(
            "transmission_coeff needs a two-sided cavity (both external rates > 0)".into(),
        ));
    }
    Ok(two_sided_t(c, f - c.shifted_frequency(level)))
}

/// Reflection back into the input port of a two-sided cavity.
pub fn back_reflection_coeff(c: &CavityParams, f: f64, level: QubitLevel) -> Complex64 {
    let d = f - c.shifted_frequency(level);
    let k = c.kappa_total();
    Complex64::new(c.kappa_ext_in_mhz - 0.5 * k, d) / Complex64::new(0.5 * k, -d)
}

/// Fraction of the incident power dissipated through the internal loss channel.
pub fn loss_fraction(c: &CavityParams, f: f64, level: QubitLevel) -> f64 {
    let d = f - c.shifted_frequency(level);
    let k = c.kappa_total();
    c.kappa_ext_in_mhz * c.kappa_int_mhz / (0.25 * k * k + d * d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumMode {
    Reflect,
    Transmit,
}

/// Evaluates the scattering coefficient on an ascending frequency grid.
pub fn spectrum(
    c: &CavityParams,
    grid: &[f64],
    level: QubitLevel,
    mode: SpectrumMode,
) -> Result<Vec<(f64, Complex64)>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("frequency grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("frequency grid must be ascending".into()));
    }
    grid.iter()
        .map(|&f| {
            let amp = match mode {
                SpectrumMode::Reflect => reflection_coeff(c, f, level)?,
                SpectrumMode::Transmit => transmission_coeff(c, f, level)?,
            };
            Ok((f, amp))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseKind {
    Gaussian,
    Square,
}

/// Temporal envelope of a propagating pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseShape {
    pub kind: PulseKind,
    pub duration_ns: f64,
    /// Gaussian width; defaults to `duration_ns / 6`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_ns: Option<f64>,
    /// Carrier offset from the g/e midpoint of the gate cavity.
    #[serde(default)]
    pub carrier_detuning_mhz: f64,
}

impl PulseShape {
    pub fn gaussian(duration_ns: f64) -> Self {
        Self {
            kind: PulseKind::Gaussian,
            duration_ns,
            sigma_ns: None,
            carrier_detuning_mhz: 0.0,
        }
    }

    pub fn square(duration_ns: f64) -> Self {
        Self {
            kind: PulseKind::Square,
            duration_ns,
            sigma_ns: None,
            carrier_detuning_mhz: 0.0,
        }
    }

    pub fn sigma_ns(&self) -> f64 {
        self.sigma_ns.unwrap_or(self.duration_ns / 6.0)
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.duration_ns > 0.0) || !self.duration_ns.is_finite() {
            return Err(Error::invariant(
                format!("{prefix}.duration_ns"),
                format!("must be positive, got {}", self.duration_ns),
            ));
        }
        if self.kind == PulseKind::Gaussian && !(self.sigma_ns() > 0.0) {
            return Err(Error::invariant(format!("{prefix}.sigma_ns"), "must be positive"));
        }
        if !self.carrier_detuning_mhz.is_finite() {
            return Err(Error::invariant(
                format!("{prefix}.carrier_detuning_mhz"),
                "must be finite",
            ));
        }
        Ok(())
    }

    /// Characteristic spectral width in MHz.
    pub fn bandwidth_mhz(&self) -> f64 {
        match self.kind {
            PulseKind::Gaussian => 1.0 / (2.0 * PI * self.sigma_ns() * 1e-3),
            PulseKind::Square => 1.0 / (self.duration_ns * 1e-3),
        }
    }

    /// Envelope energy ∫|a(t)|² dt in μs.
    pub fn energy(&self) -> f64 {
        let t = self.duration_ns * 1e-3;
        match self.kind {
            PulseKind::Square => t,
            PulseKind::Gaussian => {
                let s = self.sigma_ns() * 1e-3;
                s * PI.sqrt() * libm_erf(0.5 * t / s)
            }
        }
    }

    /// Fourier amplitude F(ν) = ∫ a(t) e^{-2πiνt} dt of the envelope
    /// (real, since the envelope is even). `nu` is the offset from the carrier.
    pub fn amplitude_spectrum(&self, nu_mhz: f64) -> f64 {
        let t = self.duration_ns * 1e-3;
        match self.kind {
            PulseKind::Square => {
                let x = PI * nu_mhz * t;
                if x.abs() < 1e-8 {
                    t
                } else {
                    x.sin() / (PI * nu_mhz)
                }
            }
            PulseKind::Gaussian => {
                // ∫_{-L}^{L} e^{-t²/2σ²} e^{-iωt} dt = σ√(2π) Re[e^{-y²} erf(x + iy)]
                // with x = L/(√2σ), y = σω/√2; erf(z) = 1 - e^{-z²} w(iz).
                let s = self.sigma_ns() * 1e-3;
                let x = 0.5 * t / (2f64.sqrt() * s);
                let y = s * 2.0 * PI * nu_mhz / 2f64.sqrt();
                let w = Complex64::new(-y, x).w();
                let phase = Complex64::from_polar((-x * x).exp(), -2.0 * x * y);
                let val = Complex64::new((-y * y).exp(), 0.0) - phase * w;
                s * (2.0 * PI).sqrt() * val.re
            }
        }
    }

    /// Power spectral density normalized to unit integral over all frequencies.
    pub fn spectral_density(&self, nu_mhz: f64) -> f64 {
        let f = self.amplitude_spectrum(nu_mhz);
        f * f / self.energy()
    }
}

fn libm_erf(x: f64) -> f64 {
    Complex64::new(x, 0.0).erf().re
}

fn gate_window(c: &CavityParams, p: &PulseShape) -> (f64, Vec<f64>) {
    let mid = c.ge_midpoint();
    let carrier = mid + p.carrier_detuning_mhz;
    let k = c.kappa_total();
    let lo = mid - 10.0 * k;
    let hi = mid + 10.0 * k;
    let b = 12.0 * p.bandwidth_mhz();
    let mut breaks = vec![lo, hi];
    for x in [carrier - b, carrier, carrier + b] {
        if x > lo && x < hi {
            breaks.push(x);
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    (carrier, breaks)
}

/// Pulse-averaged scattering moments of a single-sided cavity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateScattering {
    /// ∮ |F|² r_g r_e* df
    pub overlap: Complex64,
    /// ∮ |F|² (|r_g|² + |r_e|²)/2 df
    pub survival: f64,
}

impl GateScattering {
    /// Probability that one photon flips the qubit after the closing π/2 pulse.
    pub fn efficiency(&self) -> f64 {
        (0.5 * (1.0 - self.overlap.re)).clamp(0.0, 1.0)
    }
}

/// Quadrature of the reflection products against the normalized pulse spectrum.
pub fn gate_scattering(c: &CavityParams, p: &PulseShape) -> Result<GateScattering> {
    if !c.is_single_sided() {
        return Err(Error::ContractViolation(
            "gating needs a single-sided gate cavity".into(),
        ));
    }
    p.validate("gate_pulse")?;
    let (carrier, breaks) = gate_window(c, p);
    let fg = c.shifted_frequency(QubitLevel::G);
    let fe = c.shifted_frequency(QubitLevel::E);
    let w = |f: f64| p.spectral_density(f - carrier);

    let norm = quad::piecewise_simpson(&w, &breaks, SPECTRAL_TOL)?;
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Numeric(format!(
            "pulse spectrum is not normalizable over the integration window (norm = {norm})"
        )));
    }
    let prod = |f: f64| single_sided_r(c, f - fg) * single_sided_r(c, f - fe).conj();
    let re = quad::piecewise_simpson(&|f| w(f) * prod(f).re, &breaks, SPECTRAL_TOL)?;
    let im = quad::piecewise_simpson(&|f| w(f) * prod(f).im, &breaks, SPECTRAL_TOL)?;
    let surv = quad::piecewise_simpson(
        &|f| {
            let rg = single_sided_r(c, f - fg).norm_sqr();
            let re_ = single_sided_r(c, f - fe).norm_sqr();
            w(f) * 0.5 * (rg + re_)
        },
        &breaks,
        SPECTRAL_TOL,
    )?;
    Ok(GateScattering {
        overlap: Complex64::new(re, im) / norm,
        survival: (surv / norm).clamp(0.0, 1.0),
    })
}

/// Single-photon qubit-flip probability η of a reflected pulse.
pub fn gating_efficiency(c: &CavityParams, p: &PulseShape) -> Result<f64> {
    Ok(gate_scattering(c, p)?.efficiency())
}

/// Internal loss that brings the gating efficiency down to `target`.
pub fn kappa_int_for_efficiency(c: &CavityParams, p: &PulseShape, target: f64) -> Result<f64> {
    let eval = |ki: f64| {
        let mut cc = *c;
        cc.kappa_int_mhz = ki;
        gating_efficiency(&cc, p).map(|eta| eta - target)
    };
    let hi = c.kappa_ext_in_mhz.max(1e-6);
    let lo_val = eval(0.0)?;
    let hi_val = eval(hi)?;
    if lo_val < 0.0 || hi_val > 0.0 {
        return Err(Error::Numeric(format!(
            "target efficiency {target} not reachable for kappa_int in [0, {hi}]"
        )));
    }
    quad::bisect(|ki| eval(ki).unwrap_or(f64::NAN), 0.0, hi, 1e-10)
}
