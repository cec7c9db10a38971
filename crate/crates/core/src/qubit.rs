//! Three-level transmon: ideal control rotations, Lindblad relaxation and
//! dephasing, and jump-time sampling for the Monte Carlo shots.
//!
//! The qubit is always subsystem 0 of a [`QuantumState`] and has dimension 3
//! with basis order `g, e, f`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    self, c, embed, hermitize, outer, trace, ComplexMatrix, QubitLevel, QuantumState,
};

pub const QUBIT_DIM: usize = 3;

/// Largest trace drift tolerated before an integration is rejected.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// Steps per shortest lifetime in the RK4 integrator.
const STEPS_PER_T1: f64 = 200.0;

/// Lifetimes in μs. An infinite lifetime is written as `null` in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitRates {
    #[serde(with = "lifetime")]
    pub t1_ge_us: f64,
    #[serde(with = "lifetime")]
    pub t1_ef_us: f64,
    #[serde(with = "lifetime")]
    pub t2_ge_us: f64,
    #[serde(with = "lifetime")]
    pub t2_gf_us: f64,
    #[serde(default)]
    pub thermal_excitation_rate_per_us: f64,
}

mod lifetime {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Default for QubitRates {
    fn default() -> Self {
        Self {
            t1_ge_us: 30.0,
            t1_ef_us: 30.0,
            t2_ge_us: 20.0,
            t2_gf_us: 20.0,
            thermal_excitation_rate_per_us: 0.0,
        }
    }
}

impl QubitRates {
    /// No relaxation, dephasing or heating.
    pub fn ideal() -> Self {
        Self {
            t1_ge_us: f64::INFINITY,
            t1_ef_us: f64::INFINITY,
            t2_ge_us: f64::INFINITY,
            t2_gf_us: f64::INFINITY,
            thermal_excitation_rate_per_us: 0.0,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (name, v) in [
            ("t1_ge_us", self.t1_ge_us),
            ("t1_ef_us", self.t1_ef_us),
            ("t2_ge_us", self.t2_ge_us),
            ("t2_gf_us", self.t2_gf_us),
        ] {
            if !(v > 0.0) {
                return Err(Error::invariant(
                    format!("{prefix}.{name}"),
                    format!("time must be positive, got {v}"),
                ));
            }
        }
        let th = self.thermal_excitation_rate_per_us;
        if !(th >= 0.0) || !th.is_finite() {
            return Err(Error::invariant(
                format!("{prefix}.thermal_excitation_rate_per_us"),
                format!("rate must be finite and >= 0, got {th}"),
            ));
        }
        if self.ge_dephasing_rate() < -1e-12 {
            return Err(Error::invariant(
                format!("{prefix}.t2_ge_us"),
                "T2_ge exceeds the relaxation limit 2/(1/T1_ge + thermal rate)",
            ));
        }
        if self.gf_dephasing_rate() < -1e-12 {
            return Err(Error::invariant(
                format!("{prefix}.t2_gf_us"),
                "T2_gf exceeds the relaxation limit 2/(1/T1_ef + thermal rate)",
            ));
        }
        Ok(())
    }

    pub fn decay_ge(&self) -> f64 {
        1.0 / self.t1_ge_us
    }

    pub fn decay_ef(&self) -> f64 {
        1.0 / self.t1_ef_us
    }

    /// Pure-dephasing rate of |e⟩ such that ρ_ge decays at 1/T2_ge.
    pub fn ge_dephasing_rate(&self) -> f64 {
        2.0 / self.t2_ge_us - self.decay_ge() - self.thermal_excitation_rate_per_us
    }

    /// Pure-dephasing rate of |f⟩ such that ρ_gf decays at 1/T2_gf.
    pub fn gf_dephasing_rate(&self) -> f64 {
        2.0 / self.t2_gf_us - self.decay_ef() - self.thermal_excitation_rate_per_us
    }

    /// Total rate out of `level`: relaxation for e and f, heating for g.
    pub fn exit_rate(&self, level: QubitLevel) -> f64 {
        match level {
            QubitLevel::G => self.thermal_excitation_rate_per_us,
            QubitLevel::E => self.decay_ge(),
            QubitLevel::F => self.decay_ef(),
        }
    }
}

/// Two-level transition addressed by a control pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transition {
    Ge,
    Ef,
}

impl Transition {
    fn levels(self) -> (usize, usize) {
        match self {
            Transition::Ge => (0, 1),
            Transition::Ef => (1, 2),
        }
    }
}

/// `exp(-i·angle/2·(cos φ X + sin φ Y))` on the transition, identity on the
/// spectator level.
pub fn rotation_unitary(transition: Transition, angle: f64, phase: f64) -> ComplexMatrix {
    let (a, b) = transition.levels();
    let mut u = ComplexMatrix::identity(QUBIT_DIM, QUBIT_DIM);
    let (s, co) = (0.5 * angle).sin_cos();
    let minus_i_s = Complex64::new(0.0, -s);
    u[(a, a)] = c(co);
    u[(b, b)] = c(co);
    u[(a, b)] = minus_i_s * Complex64::from_polar(1.0, -phase);
    u[(b, a)] = minus_i_s * Complex64::from_polar(1.0, phase);
    u
}

fn check_qubit(s: &QuantumState) -> Result<()> {
    match s.dims().first() {
        Some(&QUBIT_DIM) => Ok(()),
        Some(&d) => Err(Error::DimensionMismatch {
            expected: "qubit subsystem of dimension 3 at index 0".into(),
            found: format!("dimension {d}"),
        }),
        None => Err(Error::InvalidState("state has no subsystems".into())),
    }
}

pub fn apply_rotation(
    s: &QuantumState,
    transition: Transition,
    angle: f64,
    phase: f64,
) -> Result<QuantumState> {
    check_qubit(s)?;
    let u = embed(&rotation_unitary(transition, angle, phase), 0, s.dims())?;
    hilbert::conjugate(s, &u)
}

struct Lindbladian {
    h_eff: ComplexMatrix,
    jumps: Vec<ComplexMatrix>,
}

impl Lindbladian {
    fn new(dims: &[usize], r: &QubitRates) -> Result<Self> {
        let mut local: Vec<(f64, ComplexMatrix)> = vec![
            (r.decay_ge(), outer(0, 1, QUBIT_DIM)),
            (r.decay_ef(), outer(1, 2, QUBIT_DIM)),
            (r.thermal_excitation_rate_per_us, outer(1, 0, QUBIT_DIM)),
            (r.ge_dephasing_rate().max(0.0), outer(1, 1, QUBIT_DIM)),
            (r.gf_dephasing_rate().max(0.0), outer(2, 2, QUBIT_DIM)),
        ];
        local.retain(|(rate, _)| *rate > 0.0);
        let dim: usize = dims.iter().product();
        let mut h_eff = ComplexMatrix::zeros(dim, dim);
        let mut jumps = Vec::with_capacity(local.len());
        for (rate, op) in local {
            let l = embed(&(op * c(rate.sqrt())), 0, dims)?;
            h_eff += l.adjoint() * &l * c(0.5);
            jumps.push(l);
        }
        Ok(Self { h_eff, jumps })
    }

    /// dρ/dt = Σ L ρ L† − {½ΣL†L, ρ}
    fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let mut out = -(&self.h_eff * rho) - rho * &self.h_eff;
        for l in &self.jumps {
            out += l * rho * l.adjoint();
        }
        out
    }
}

/// Integrates the Lindblad equation over `dt` μs with fixed-step RK4.
pub fn evolve_lindblad(s: &QuantumState, dt: f64, r: &QubitRates) -> Result<QuantumState> {
    check_qubit(s)?;
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "evolution time must be finite and >= 0, got {dt}"
        )));
    }
    r.validate("qubit_rates")?;
    let gen = Lindbladian::new(s.dims(), r)?;
    if dt == 0.0 || gen.jumps.is_empty() {
        return Ok(s.clone());
    }
    let fastest = [
        r.decay_ge(),
        r.decay_ef(),
        r.thermal_excitation_rate_per_us,
        r.ge_dephasing_rate(),
        r.gf_dephasing_rate(),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    let h_max = 1.0 / (STEPS_PER_T1 * fastest);
    let steps = (dt / h_max).ceil().max(1.0) as usize;
    let h = dt / steps as f64;
    let hc = c(h);

    let mut rho = s.rho().clone();
    for _ in 0..steps {
        let k1 = gen.apply(&rho);
        let k2 = gen.apply(&(&rho + &k1 * c(0.5 * h)));
        let k3 = gen.apply(&(&rho + &k2 * c(0.5 * h)));
        let k4 = gen.apply(&(&rho + &k3 * hc));
        rho += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0);
        rho = hermitize(rho);
    }
    let drift = (trace(&rho).re - 1.0).abs();
    if drift > TRACE_DRIFT_LIMIT {
        return Err(Error::Numeric(format!(
            "Lindblad integration drifted in trace by {drift:.3e}; use a smaller step"
        )));
    }
    QuantumState::from_parts(s.dims().to_vec(), rho)
}

/// Samples the time of the first transition out of `level` within `window`
/// μs, or `None` if the level survives the window.
pub fn sample_jump_time<R: Rng + ?Sized>(
    level: QubitLevel,
    window: f64,
    r: &QubitRates,
    rng: &mut R,
) -> Option<f64> {
    sample_exit(r.exit_rate(level), window, rng)
}

pub(crate) fn sample_exit<R: Rng + ?Sized>(rate: f64, window: f64, rng: &mut R) -> Option<f64> {
    if !(rate > 0.0) || !(window > 0.0) {
        return None;
    }
    let t: f64 = Exp::new(rate).ok()?.sample(rng);
    (t <= window).then_some(t)
}

/// Single-qubit density matrix diag(p_g, p_e, p_f) as a convenience for tests
/// and callers building mixed preparations.
pub fn qubit_mixture(populations: [f64; 3]) -> Result<QuantumState> {
    let rho = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        3,
        populations.iter().map(|&p| c(p)),
    ));
    QuantumState::new(vec![QUBIT_DIM], rho)
}
