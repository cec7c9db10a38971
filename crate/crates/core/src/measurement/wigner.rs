//! Wigner function of a single truncated bosonic mode via displaced parity,
//! `W(α) = (2/π) Tr[ρ D(α) P D(α)†] = (2/π) Tr[ρ D(2α) P]`.
//!
//! The d×d block of `D(β)` holds the exact (untruncated) matrix elements
//!
//! ```text
//! ⟨n+k|D(β)|n⟩ = √(n!/(n+k)!) β^k e^{-|β|²/2} L_n^{(k)}(|β|²)
//! ⟨n|D(β)|n+k⟩ = (−1)^k conj⟨n+k|D(β)|n⟩
//! ```
//!
//! evaluated along each diagonal with a normalized Laguerre recurrence, so
//! the result is the Wigner function of the truncated state itself.

use std::f64::consts::FRAC_2_PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{ComplexMatrix, QuantumState};

/// Beyond this |β|² the vacuum overlap e^{-|β|²/2} underflows.
const MAX_BETA_SQR: f64 = 1400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: f64,
    pub p: f64,
    pub w: f64,
}

/// d×d block of the displacement operator D(β) in the Fock basis.
pub fn displacement_elements(beta: Complex64, d: usize) -> Result<ComplexMatrix> {
    let b2 = beta.norm_sqr();
    if b2 > MAX_BETA_SQR {
        return Err(Error::Numeric(format!(
            "displacement |beta|^2 = {b2:.1} is beyond the representable range"
        )));
    }
    let mut out = ComplexMatrix::zeros(d, d);
    if d == 0 {
        return Ok(out);
    }
    if b2 == 0.0 {
        return Ok(ComplexMatrix::identity(d, d));
    }
    let (r, phi) = beta.to_polar();
    let ln_r = r.ln();
    let mut log_fact_k = 0.0;
    for k in 0..d {
        if k > 0 {
            log_fact_k += (k as f64).ln();
        }
        let kf = k as f64;
        let phase = Complex64::from_polar(1.0, kf * phi);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        // f_n = √(n!/(n+k)!) |β|^k e^{-|β|²/2} L_n^{(k)}(|β|²)
        let mut prev = 0.0;
        let mut cur = (-0.5 * b2 + kf * ln_r - 0.5 * log_fact_k).exp();
        for n in 0..d - k {
            let z = phase * cur;
            out[(n + k, n)] = z;
            out[(n, n + k)] = z.conj() * sign;
            let nf = n as f64;
            let next = ((2.0 * nf + 1.0 + kf - b2) * cur - (nf * (nf + kf)).sqrt() * prev)
                / ((nf + 1.0) * (nf + 1.0 + kf)).sqrt();
            prev = cur;
            cur = next;
        }
    }
    Ok(out)
}

/// Number of leading Fock levels that carry any weight.
fn support(rho: &ComplexMatrix) -> usize {
    let d = rho.nrows();
    (0..d)
        .rev()
        .find(|&i| rho.row(i).iter().any(|z| *z != Complex64::new(0.0, 0.0)))
        .map_or(0, |i| i + 1)
}

fn single_mode(field: &QuantumState) -> Result<usize> {
    match field.dims() {
        [d] => Ok(*d),
        dims => Err(Error::DimensionMismatch {
            expected: "a single bosonic mode".into(),
            found: format!("subsystem dims {dims:?}"),
        }),
    }
}

fn check_cutoff(alpha: Complex64, d: usize) -> Result<()> {
    let a2 = alpha.norm_sqr();
    if a2 > d as f64 / 4.0 {
        return Err(Error::CutoffInadequate {
            mean_photons: a2,
            dim: d,
        });
    }
    Ok(())
}

fn wigner_point(rho: &ComplexMatrix, k: usize, alpha: Complex64) -> Result<f64> {
    if k == 0 {
        return Ok(0.0);
    }
    let dm = displacement_elements(alpha * 2.0, k)?;
    let mut acc = 0.0;
    for n in 0..k {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let mut row = Complex64::new(0.0, 0.0);
        for m in 0..k {
            row += rho[(n, m)] * dm[(m, n)];
        }
        acc += sign * row.re;
    }
    Ok(FRAC_2_PI * acc)
}

/// Wigner function at each phase-space point `α = x + ip`.
pub fn wigner(field: &QuantumState, grid: &[Complex64]) -> Result<Vec<f64>> {
    let d = single_mode(field)?;
    for &a in grid {
        check_cutoff(a, d)?;
    }
    let rho = field.rho();
    let k = support(rho);
    grid.par_iter().map(|&a| wigner_point(rho, k, a)).collect()
}

/// Square grid `x, p ∈ [-half_width, half_width]` with `points` samples per axis,
/// in row-major order over `p` then `x`.
pub fn wigner_grid(field: &QuantumState, half_width: f64, points: usize) -> Result<Vec<PhasePoint>> {
    if points < 2 || !(half_width > 0.0) {
        return Err(Error::InvalidArgument(
            "wigner grid needs >= 2 points per axis and a positive half width".into(),
        ));
    }
    let step = 2.0 * half_width / (points - 1) as f64;
    let axis: Vec<f64> = (0..points).map(|i| -half_width + i as f64 * step).collect();
    let grid: Vec<Complex64> = axis
        .iter()
        .flat_map(|&p| axis.iter().map(move |&x| Complex64::new(x, p)))
        .collect();
    let values = wigner(field, &grid)?;
    Ok(grid
        .iter()
        .zip(values)
        .map(|(a, w)| PhasePoint { x: a.re, p: a.im, w })
        .collect())
}
