//! Dense density matrices over small composite Hilbert spaces.
//!
//! States carry an ordered list of subsystem dimensions. By convention the
//! transmon is subsystem 0 (dimension 3, levels g/e/f) and the gate-field
//! mode, when present, is subsystem 1.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

pub const TRACE_TOL: f64 = 1e-9;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const EIGEN_FLOOR: f64 = -1e-10;

/// Default Fock cutoff of the gate field.
pub const DEFAULT_FIELD_CUTOFF: usize = 8;

/// Transmon level. The cavity pulls are referenced to `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QubitLevel {
    G,
    E,
    F,
}

impl QubitLevel {
    pub const ALL: [QubitLevel; 3] = [QubitLevel::G, QubitLevel::E, QubitLevel::F];

    pub fn index(self) -> usize {
        match self {
            QubitLevel::G => 0,
            QubitLevel::E => 1,
            QubitLevel::F => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            QubitLevel::G => "g",
            QubitLevel::E => "e",
            QubitLevel::F => "f",
        }
    }
}

#[inline]
pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|i| (i..n).all(|j| (m[(i, j)] - m[(j, i)].conj()).norm() <= tol))
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Density matrix with its subsystem structure.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    dims: Vec<usize>,
    rho: ComplexMatrix,
}

impl QuantumState {
    /// Builds a state after checking trace, hermiticity and positivity.
    pub fn new(dims: Vec<usize>, rho: ComplexMatrix) -> Result<Self> {
        let state = Self::from_parts(dims, rho)?;
        state.validate()?;
        Ok(state)
    }

    /// Builds a state without the eigenvalue check. Dimensions are still
    /// verified.
    pub(crate) fn from_parts(dims: Vec<usize>, rho: ComplexMatrix) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "subsystem dimensions must be nonempty and positive, got {dims:?}"
            )));
        }
        let total: usize = dims.iter().product();
        if rho.nrows() != total || rho.ncols() != total {
            return Err(Error::DimensionMismatch {
                expected: format!("{total}x{total}"),
                found: format!("{}x{}", rho.nrows(), rho.ncols()),
            });
        }
        Ok(Self { dims, rho })
    }

    /// Pure state |psi><psi| from a normalized ket.
    pub fn from_ket(dims: Vec<usize>, ket: &ComplexVector) -> Result<Self> {
        let norm = ket.norm();
        if (norm - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("ket norm {norm} is not 1")));
        }
        let rho = ket * ket.adjoint();
        Self::new(dims, rho)
    }

    pub fn validate(&self) -> Result<()> {
        let tr = trace(&self.rho);
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        if !is_hermitian(&self.rho, HERMITIAN_TOL) {
            return Err(Error::InvalidState("density matrix is not Hermitian".into()));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < EIGEN_FLOOR {
            return Err(Error::InvalidState(format!(
                "density matrix has negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn rho(&self) -> &ComplexMatrix {
        &self.rho
    }

    pub fn into_rho(self) -> ComplexMatrix {
        self.rho
    }

    pub fn trace(&self) -> Complex64 {
        trace(&self.rho)
    }

    pub fn purity(&self) -> f64 {
        trace(&(&self.rho * &self.rho)).re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.rho
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Diagonal of rho (real parts).
    pub fn populations(&self) -> Vec<f64> {
        self.rho.diagonal().iter().map(|z| z.re).collect()
    }

    /// Expectation value Tr[rho op].
    pub fn expect(&self, op: &ComplexMatrix) -> Complex64 {
        // Tr[rho op] = sum_ij rho_ij op_ji
        let n = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += self.rho[(i, j)] * op[(j, i)];
            }
        }
        acc
    }
}

/// Fock state |n><n| in a space of dimension `d`.
pub fn fock_state(n: usize, d: usize) -> Result<QuantumState> {
    if n >= d {
        return Err(Error::CutoffViolation { n, dim: d });
    }
    let mut rho = ComplexMatrix::zeros(d, d);
    rho[(n, n)] = c(1.0);
    QuantumState::from_parts(vec![d], rho)
}

/// Basis state of the three-level transmon.
pub fn qubit_state(level: QubitLevel) -> QuantumState {
    let mut rho = ComplexMatrix::zeros(3, 3);
    rho[(level.index(), level.index())] = c(1.0);
    QuantumState { dims: vec![3], rho }
}

fn coherent_ket(alpha: Complex64, d: usize) -> ComplexVector {
    let mut ket = ComplexVector::zeros(d);
    let mut amp = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for k in 0..d {
        if k > 0 {
            amp = amp * alpha / (k as f64).sqrt();
        }
        ket[k] = amp;
    }
    let norm = ket.norm();
    ket / c(norm)
}

/// Truncated, renormalized coherent state |alpha>.
///
/// Fails with [`Error::CutoffInadequate`] when |alpha|^2 > d/4.
pub fn coherent_state(alpha: Complex64, d: usize) -> Result<QuantumState> {
    if alpha.norm_sqr() > d as f64 / 4.0 {
        return Err(Error::CutoffInadequate {
            mean_photons: alpha.norm_sqr(),
            dim: d,
        });
    }
    coherent_state_unchecked(alpha, d)
}

/// Same as [`coherent_state`] without the cutoff adequacy check.
pub fn coherent_state_unchecked(alpha: Complex64, d: usize) -> Result<QuantumState> {
    if d == 0 {
        return Err(Error::InvalidArgument("cutoff dimension must be positive".into()));
    }
    let ket = coherent_ket(alpha, d);
    QuantumState::from_parts(vec![d], &ket * ket.adjoint())
}

/// Kronecker product a ⊗ b.
pub fn tensor(a: &QuantumState, b: &QuantumState) -> QuantumState {
    let mut dims = a.dims.clone();
    dims.extend_from_slice(&b.dims);
    QuantumState {
        dims,
        rho: a.rho.kronecker(&b.rho),
    }
}

fn unravel(mut index: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = index % dims[k];
        index /= dims[k];
    }
}

/// Reduced state on the subsystems listed in `keep` (taken in ascending order).
pub fn partial_trace(s: &QuantumState, keep: &[usize]) -> Result<QuantumState> {
    let count = s.dims.len();
    if keep.is_empty() {
        return Err(Error::InvalidArgument("keep set must be nonempty".into()));
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= count) {
        return Err(Error::InvalidSubsystem { index: bad, count });
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() == count {
        return Ok(s.clone());
    }
    let traced: Vec<usize> = (0..count).filter(|k| !kept.contains(k)).collect();
    let kept_dims: Vec<usize> = kept.iter().map(|&k| s.dims[k]).collect();
    let kept_total: usize = kept_dims.iter().product();

    let mut out = ComplexMatrix::zeros(kept_total, kept_total);
    let mut idx_i = vec![0usize; count];
    let mut idx_j = vec![0usize; count];
    let n = s.dim();
    for i in 0..n {
        unravel(i, &s.dims, &mut idx_i);
        for j in 0..n {
            unravel(j, &s.dims, &mut idx_j);
            if traced.iter().any(|&t| idx_i[t] != idx_j[t]) {
                continue;
            }
            let mut ri = 0;
            let mut rj = 0;
            for &k in &kept {
                ri = ri * s.dims[k] + idx_i[k];
                rj = rj * s.dims[k] + idx_j[k];
            }
            out[(ri, rj)] += s.rho[(i, j)];
        }
    }
    QuantumState::from_parts(kept_dims, out)
}

/// Tr[rho n] for the bosonic subsystem `mode`.
pub fn mean_photon(s: &QuantumState, mode: usize) -> Result<f64> {
    let reduced = partial_trace(s, &[mode])?;
    Ok(reduced
        .rho
        .diagonal()
        .iter()
        .enumerate()
        .map(|(n, p)| n as f64 * p.re)
        .sum())
}

/// Photon-number distribution of subsystem `mode`.
pub fn photon_distribution(s: &QuantumState, mode: usize) -> Result<Vec<f64>> {
    Ok(partial_trace(s, &[mode])?.populations())
}

/// Annihilation operator truncated to dimension `d`.
pub fn annihilation(d: usize) -> ComplexMatrix {
    let mut a = ComplexMatrix::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = c((n as f64).sqrt());
    }
    a
}

/// |i><j| in dimension `d`.
pub fn outer(i: usize, j: usize, d: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(d, d);
    m[(i, j)] = c(1.0);
    m
}

/// Lifts `op` acting on subsystem `target` to the full space.
pub fn embed(op: &ComplexMatrix, target: usize, dims: &[usize]) -> Result<ComplexMatrix> {
    if target >= dims.len() {
        return Err(Error::InvalidSubsystem {
            index: target,
            count: dims.len(),
        });
    }
    if op.nrows() != dims[target] || op.ncols() != dims[target] {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0}", dims[target]),
            found: format!("{}x{}", op.nrows(), op.ncols()),
        });
    }
    let mut full = ComplexMatrix::identity(1, 1);
    for (k, &d) in dims.iter().enumerate() {
        let factor = if k == target {
            op.clone()
        } else {
            ComplexMatrix::identity(d, d)
        };
        full = full.kronecker(&factor);
    }
    Ok(full)
}

/// Conjugation U rho U† preserving the subsystem structure.
pub fn conjugate(s: &QuantumState, u: &ComplexMatrix) -> Result<QuantumState> {
    if u.nrows() != s.dim() || u.ncols() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0}", s.dim()),
            found: format!("{}x{}", u.nrows(), u.ncols()),
        });
    }
    let rho = u * &s.rho * u.adjoint();
    Ok(QuantumState {
        dims: s.dims.clone(),
        rho: hermitize(rho),
    })
}

/// (m + m†)/2
pub(crate) fn hermitize(m: ComplexMatrix) -> ComplexMatrix {
    (&m + m.adjoint()) * c(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fock_basis_states() {
        let vac = fock_state(0, 5).unwrap();
        assert_eq!(vac.rho()[(0, 0)], c(1.0));
        let one = fock_state(1, 5).unwrap();
        assert_eq!(one.rho()[(1, 1)], c(1.0));
        assert_eq!(mean_photon(&one, 0).unwrap(), 1.0);
        assert_eq!(
            fock_state(5, 5).unwrap_err(),
            Error::CutoffViolation { n: 5, dim: 5 }
        );
    }

    #[test]
    fn coherent_vacuum_limit() {
        let s = coherent_state(c(0.0), 8).unwrap();
        assert_abs_diff_eq!(s.rho()[(0, 0)].re, 1.0, epsilon = 1e-15);
        assert_eq!(mean_photon(&s, 0).unwrap(), 0.0);
    }

    #[test]
    fn coherent_gate_pulse_statistics() {
        let n_bar: f64 = 0.18;
        let s = coherent_state(c(n_bar.sqrt()), 8).unwrap();
        assert_abs_diff_eq!(mean_photon(&s, 0).unwrap(), 0.18, epsilon = 1e-6);
        // Poisson weights e^{-n} n^k / k!
        let p = s.populations();
        assert_abs_diff_eq!(p[0], (-n_bar).exp(), epsilon = 1e-4);
        assert_abs_diff_eq!(p[0], 0.8353, epsilon = 1e-4);
        assert_abs_diff_eq!(p[1], 0.1503, epsilon = 1e-4);
    }

    #[test]
    fn coherent_cutoff_adequacy() {
        let err = coherent_state(c(2.0), 8).unwrap_err();
        assert!(matches!(err, Error::CutoffInadequate { dim: 8, .. }));
        assert!(coherent_state_unchecked(c(2.0), 8).is_ok());
    }

    #[test]
    fn tensor_dims_and_trace() {
        let vac = fock_state(0, 8).unwrap();
        let g = qubit_state(QubitLevel::G);
        let joint = tensor(&g, &vac);
        assert_eq!(joint.dims(), &[3, 8]);
        assert_abs_diff_eq!(joint.trace().re, 1.0, epsilon = 1e-15);
        joint.validate().unwrap();

        let q = QuantumState::new(vec![2], ComplexMatrix::identity(2, 2) * c(0.5)).unwrap();
        let t = fock_state(1, 3).unwrap();
        assert_eq!(tensor(&q, &t).dims(), &[2, 3]);
    }

    #[test]
    fn maximally_entangled_pair_reduces_to_mixed() {
        let s = 1.0 / 2f64.sqrt();
        let ket = ComplexVector::from_vec(vec![c(s), c(0.0), c(0.0), c(s)]);
        let bell = QuantumState::from_ket(vec![2, 2], &ket).unwrap();
        let red = partial_trace(&bell, &[1]).unwrap();
        assert_abs_diff_eq!(red.rho()[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(red.rho()[(1, 1)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(red.rho()[(0, 1)].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn photon_qubit_entangled_state_traces_to_fock_one() {
        // (|g>|1> - |e>|1>)/sqrt2 on dims [3, 4]
        let d = 4;
        let s = 1.0 / 2f64.sqrt();
        let mut ket = ComplexVector::zeros(3 * d);
        ket[1] = c(s); // |g>|1>
        ket[d + 1] = c(-s); // |e>|1>
        let st = QuantumState::from_ket(vec![3, d], &ket).unwrap();
        let field = partial_trace(&st, &[1]).unwrap();
        let expected = fock_state(1, d).unwrap();
        assert!((field.rho() - expected.rho()).norm() < 1e-15);
        let qubit = partial_trace(&st, &[0]).unwrap();
        assert_abs_diff_eq!(qubit.rho()[(0, 1)].re, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn partial_trace_rejects_bad_index() {
        let s = tensor(&qubit_state(QubitLevel::E), &fock_state(0, 3).unwrap());
        assert_eq!(
            partial_trace(&s, &[2]).unwrap_err(),
            Error::InvalidSubsystem { index: 2, count: 2 }
        );
        assert!(partial_trace(&s, &[]).is_err());
    }

    #[test]
    fn three_way_partial_trace_keeps_order() {
        let a = qubit_state(QubitLevel::E);
        let b = fock_state(2, 4).unwrap();
        let cst = coherent_state(c(0.3), 6).unwrap();
        let s = tensor(&tensor(&a, &b), &cst);
        let ac = partial_trace(&s, &[2, 0]).unwrap();
        assert_eq!(ac.dims(), &[3, 6]);
        let expected = tensor(&a, &cst);
        assert!((ac.rho() - expected.rho()).norm() < 1e-14);
    }

    #[test]
    fn invalid_states_are_rejected() {
        let mut rho = ComplexMatrix::zeros(2, 2);
        rho[(0, 0)] = c(1.5);
        rho[(1, 1)] = c(-0.5);
        assert!(matches!(
            QuantumState::new(vec![2], rho).unwrap_err(),
            Error::InvalidState(_)
        ));
        let mut rho = ComplexMatrix::identity(2, 2) * c(0.5);
        rho[(0, 1)] = Complex64::new(0.1, 0.1);
        assert!(QuantumState::new(vec![2], rho).is_err());
        assert!(QuantumState::new(vec![3], ComplexMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn embed_places_operator_on_target() {
        let a = annihilation(4);
        let full = embed(&a, 1, &[3, 4]).unwrap();
        let s = tensor(&qubit_state(QubitLevel::G), &fock_state(0, 4).unwrap());
        let n_op = full.adjoint() * &full;
        assert_abs_diff_eq!(s.expect(&n_op).re, 0.0);
        let s1 = tensor(&qubit_state(QubitLevel::F), &fock_state(3, 4).unwrap());
        assert_abs_diff_eq!(s1.expect(&n_op).re, 3.0, epsilon = 1e-12);
    }
}
