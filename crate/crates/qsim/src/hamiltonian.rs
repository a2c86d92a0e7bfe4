use dbq_core::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::state::{StateVector, C64};

/// Dense exponentiation limit.
pub const EVOLVE_CAPACITY: usize = 12;

const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pauli {
    X,
    Y,
    Z,
}

/// Adds `coef · P_{q1} P_{q2} …` to `h`.
fn add_pauli_string(h: &mut DMatrix<C64>, coef: f64, ops: &[(Pauli, usize)]) {
    for col in 0..h.ncols() {
        let mut amp = C64::new(coef, 0.0);
        let mut idx = col;
        for &(p, q) in ops.iter().rev() {
            let bit = (idx >> q) & 1;
            match p {
                Pauli::X => idx ^= 1 << q,
                Pauli::Y => {
                    amp *= if bit == 0 { C64::new(0.0, 1.0) } else { C64::new(0.0, -1.0) };
                    idx ^= 1 << q;
                }
                Pauli::Z => {
                    if bit == 1 {
                        amp = -amp;
                    }
                }
            }
        }
        h[(idx, col)] += amp;
    }
}

/// `Σ_i X_iX_{i+1} + Y_iY_{i+1} + 2Z_iZ_{i+1} + X_i` with qubit `n` wrapping to qubit 0.
pub fn hea_hamiltonian(n: usize) -> Result<DMatrix<C64>> {
    if n == 0 {
        return Err(Error::invalid("Hamiltonian needs at least one qubit"));
    }
    if n > EVOLVE_CAPACITY {
        return Err(Error::Capacity {
            requested: n,
            limit: EVOLVE_CAPACITY,
        });
    }
    let dim = 1usize << n;
    let mut h = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
    for i in 0..n {
        let j = (i + 1) % n;
        add_pauli_string(&mut h, 1.0, &[(Pauli::X, i), (Pauli::X, j)]);
        add_pauli_string(&mut h, 1.0, &[(Pauli::Y, i), (Pauli::Y, j)]);
        add_pauli_string(&mut h, 2.0, &[(Pauli::Z, i), (Pauli::Z, j)]);
        add_pauli_string(&mut h, 1.0, &[(Pauli::X, i)]);
    }
    Ok(h)
}

fn is_hermitian(h: &DMatrix<C64>) -> bool {
    let n = h.nrows();
    h.is_square() && (0..n).all(|i| (0..n).all(|j| (h[(i, j)] - h[(j, i)].conj()).norm() <= HERMITIAN_TOL))
}

/// Applies `e^{−iHt}` through a dense eigendecomposition of `H`.
pub fn evolve_hamiltonian(state: &mut StateVector, h: &DMatrix<C64>, t: f64) -> Result<()> {
    let n = state.n_qubits();
    if n > EVOLVE_CAPACITY {
        return Err(Error::Capacity {
            requested: n,
            limit: EVOLVE_CAPACITY,
        });
    }
    if h.nrows() != 1 << n {
        return Err(Error::invalid(format!("Hamiltonian of size {} on {n} qubits", h.nrows())));
    }
    if !is_hermitian(h) {
        return Err(Error::invalid("Hamiltonian is not Hermitian"));
    }
    if t == 0.0 {
        return Ok(());
    }
    let eig = SymmetricEigen::new(h.clone());
    let psi = DVector::from_column_slice(state.amplitudes());
    let mut coeffs = eig.eigenvectors.adjoint() * psi;
    for (c, &lambda) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *c *= C64::from_polar(1.0, -lambda * t);
    }
    let out = &eig.eigenvectors * coeffs;
    state.amplitudes_mut().copy_from_slice(out.as_slice());
    Ok(())
}

/// Von Neumann entropy (natural log) of qubits `0..cut` in a pure state.
pub fn entanglement_entropy(state: &StateVector, cut: usize) -> Result<f64> {
    let n = state.n_qubits();
    if cut == 0 || cut >= n {
        return Err(Error::invalid(format!("cut {cut} must split {n} qubits")));
    }
    let rows = 1usize << cut;
    let cols = 1usize << (n - cut);
    let m = DMatrix::from_fn(rows, cols, |lo, hi| state.amplitudes()[lo | (hi << cut)]);
    let sv = m.singular_values();
    Ok(sv
        .iter()
        .map(|s| s * s)
        .filter(|&p| p > 1e-300)
        .map(|p| -p * p.ln())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::gates;

    /// `e^{−iHt}` by scaling and squaring a truncated Taylor series.
    fn expm_series(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
        let n = h.nrows();
        let norm: f64 = h.iter().map(|x| x.norm()).sum::<f64>() * t.abs();
        let squarings = (norm.max(1.0).log2().ceil() as u32) + 4;
        let a = h * C64::new(0.0, -t / f64::from(1u32 << squarings));
        let mut term = DMatrix::identity(n, n);
        let mut sum = DMatrix::identity(n, n);
        for k in 1..40 {
            term = &term * &a / C64::new(k as f64, 0.0);
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn zero_time_is_identity() {
        let mut s = StateVector::new(2).unwrap();
        s.apply_gate(&gates::ry(0.4), &[0]).unwrap();
        let before = s.clone();
        evolve_hamiltonian(&mut s, &hea_hamiltonian(2).unwrap(), 0.0).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn z_evolution_is_phase_only() {
        let mut s = StateVector::new(1).unwrap();
        evolve_hamiltonian(&mut s, &gates::z(), 0.9).unwrap();
        assert!((s.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_is_hermitian_and_rejects_large() {
        assert!(is_hermitian(&hea_hamiltonian(4).unwrap()));
        assert!(matches!(hea_hamiltonian(EVOLVE_CAPACITY + 1), Err(Error::Capacity { .. })));
        let mut s = StateVector::new(1).unwrap();
        assert!(evolve_hamiltonian(&mut s, &gates::y().map(|x| x * C64::new(0.0, 1.0)), 1.0).is_err());
    }

    #[test]
    fn evolution_matches_series_and_entangles() {
        for n in [2, 3, 4, 5] {
            let h = hea_hamiltonian(n).unwrap();
            let mut s = StateVector::new(n).unwrap();
            evolve_hamiltonian(&mut s, &h, 1.0).unwrap();
            let u = expm_series(&h, 1.0);
            for i in 0..1 << n {
                assert!((s.amplitudes()[i] - u[(i, 0)]).norm() < 1e-10, "n={n} i={i}");
            }
            assert!((s.norm() - 1.0).abs() < 1e-10);
            for cut in 1..n {
                assert!(entanglement_entropy(&s, cut).unwrap() > 1e-3, "n={n} cut={cut}");
            }
        }
    }

    #[test]
    fn product_state_has_zero_entropy() {
        let mut s = StateVector::new(3).unwrap();
        s.apply_gate(&gates::ry(0.8), &[1]).unwrap();
        assert!(entanglement_entropy(&s, 1).unwrap().abs() < 1e-12);
    }
}
