//! Hardware-efficient ansatz: entangled initial state `e^{−iHt}|0…0⟩`, `R_X`
//! angle embedding, then repetitions of per-qubit `R_X(θ)` and a circular
//! CNOT ladder.

use std::f64::consts::FRAC_PI_2;

use dbq_core::rng::CounterRng;
use dbq_core::{Error, Result};

use crate::hamiltonian::{evolve_hamiltonian, hea_hamiltonian, EVOLVE_CAPACITY};
use crate::state::{gates, sample_index, StateVector};

#[derive(Debug, Clone, PartialEq)]
pub struct HeaSpec {
    pub n: usize,
    pub reps: usize,
    /// Embedding angles, one per qubit.
    pub z: Vec<f64>,
    /// `θ[k·n + i]` rotates qubit `i` in repetition `k`.
    pub theta: Vec<f64>,
    /// Evolution time of the initial state.
    pub t: f64,
}

impl HeaSpec {
    pub fn new(n: usize, reps: usize, t: f64) -> Self {
        Self {
            n,
            reps,
            z: vec![0.0; n],
            theta: vec![0.0; n * reps],
            t,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("circuit needs at least one qubit"));
        }
        if self.n > EVOLVE_CAPACITY {
            return Err(Error::Capacity {
                requested: self.n,
                limit: EVOLVE_CAPACITY,
            });
        }
        if self.z.len() != self.n || self.theta.len() != self.n * self.reps {
            return Err(Error::invalid(format!(
                "expected {} embedding and {} variational angles, got {} and {}",
                self.n,
                self.n * self.reps,
                self.z.len(),
                self.theta.len()
            )));
        }
        Ok(())
    }
}

/// Circuit shape with the initial state prepared once.
#[derive(Debug, Clone)]
pub struct HeaCircuit {
    n: usize,
    reps: usize,
    initial: StateVector,
}

impl HeaCircuit {
    pub fn new(n: usize, reps: usize, t: f64) -> Result<Self> {
        HeaSpec::new(n, reps, t).validate()?;
        let mut initial = StateVector::new(n)?;
        if t != 0.0 {
            evolve_hamiltonian(&mut initial, &hea_hamiltonian(n)?, t)?;
        }
        Ok(Self { n, reps, initial })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn reps(&self) -> usize {
        self.reps
    }

    pub fn n_params(&self) -> usize {
        self.n * self.reps
    }

    fn check(&self, z: &[f64], theta: &[f64]) -> Result<()> {
        if z.len() != self.n || theta.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "expected {} embedding and {} variational angles",
                self.n,
                self.n_params()
            )));
        }
        Ok(())
    }

    pub fn state(&self, z: &[f64], theta: &[f64]) -> Result<StateVector> {
        self.check(z, theta)?;
        let mut s = self.initial.clone();
        for (q, &a) in z.iter().enumerate() {
            s.apply_unchecked(&gates::rx(a), &[], &[q]);
        }
        for k in 0..self.reps {
            for q in 0..self.n {
                s.apply_unchecked(&gates::rx(theta[k * self.n + q]), &[], &[q]);
            }
            if self.n > 1 {
                for q in 0..self.n {
                    s.cnot(q, (q + 1) % self.n)?;
                }
            }
        }
        Ok(s)
    }

    /// Exact `⟨Z_i⟩` for every qubit.
    pub fn expectations(&self, z: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let s = self.state(z, theta)?;
        Ok((0..self.n).map(|q| s.expectation_z(q)).collect())
    }

    fn observable(&self, z: &[f64], theta: &[f64], weights: &[f64]) -> Result<f64> {
        Ok(self.expectations(z, theta)?.iter().zip(weights).map(|(e, w)| e * w).sum())
    }

    /// Shift-rule gradients of `Σ_i w_i⟨Z_i⟩` with respect to `θ` and `z`.
    pub fn gradients(&self, z: &[f64], theta: &[f64], weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(z, theta)?;
        if weights.len() != self.n {
            return Err(Error::invalid("observable needs one weight per qubit"));
        }
        let mut th = theta.to_vec();
        let mut d_theta = vec![0.0; theta.len()];
        for j in 0..theta.len() {
            d_theta[j] = shift(&mut th, j, |t| self.observable(z, t, weights))?;
        }
        let mut zz = z.to_vec();
        let mut d_z = vec![0.0; z.len()];
        for j in 0..z.len() {
            d_z[j] = shift(&mut zz, j, |zs| self.observable(zs, theta, weights))?;
        }
        Ok((d_theta, d_z))
    }

    /// Shift-rule Jacobian columns `∂⟨Z⟩/∂θ_j` and `∂⟨Z⟩/∂z_j`.
    pub fn jacobians(&self, z: &[f64], theta: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        self.check(z, theta)?;
        let column = |plus: Vec<f64>, minus: Vec<f64>| -> Vec<f64> {
            plus.iter().zip(&minus).map(|(p, m)| 0.5 * (p - m)).collect()
        };
        let mut th = theta.to_vec();
        let mut j_theta = Vec::with_capacity(theta.len());
        for j in 0..theta.len() {
            let orig = th[j];
            th[j] = orig + FRAC_PI_2;
            let plus = self.expectations(z, &th)?;
            th[j] = orig - FRAC_PI_2;
            let minus = self.expectations(z, &th)?;
            th[j] = orig;
            j_theta.push(column(plus, minus));
        }
        let mut zz = z.to_vec();
        let mut j_z = Vec::with_capacity(z.len());
        for j in 0..z.len() {
            let orig = zz[j];
            zz[j] = orig + FRAC_PI_2;
            let plus = self.expectations(&zz, theta)?;
            zz[j] = orig - FRAC_PI_2;
            let minus = self.expectations(&zz, theta)?;
            zz[j] = orig;
            j_z.push(column(plus, minus));
        }
        Ok((j_theta, j_z))
    }
}

/// `½·(f(x_j + π/2) − f(x_j − π/2))`, restoring `x_j`.
fn shift(x: &mut [f64], j: usize, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<f64> {
    let orig = x[j];
    x[j] = orig + FRAC_PI_2;
    let plus = f(x)?;
    x[j] = orig - FRAC_PI_2;
    let minus = f(x)?;
    x[j] = orig;
    Ok(0.5 * (plus - minus))
}

pub fn hea_expectations(spec: &HeaSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    HeaCircuit::new(spec.n, spec.reps, spec.t)?.expectations(&spec.z, &spec.theta)
}

/// Shift-rule derivative of `Σ_i w_i⟨Z_i⟩` with respect to `θ_j`.
pub fn param_shift_grad(spec: &HeaSpec, weights: &[f64], j: usize) -> Result<f64> {
    spec.validate()?;
    if j >= spec.theta.len() || weights.len() != spec.n {
        return Err(Error::invalid("parameter index or observable size out of range"));
    }
    let c = HeaCircuit::new(spec.n, spec.reps, spec.t)?;
    let mut th = spec.theta.clone();
    shift(&mut th, j, |t| c.observable(&spec.z, t, weights))
}

/// Gradients with respect to all variational and embedding angles.
pub fn hea_gradients(spec: &HeaSpec, weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate()?;
    HeaCircuit::new(spec.n, spec.reps, spec.t)?.gradients(&spec.z, &spec.theta, weights)
}

/// `⟨Z_i⟩` estimated from `shots` computational-basis measurements.
pub fn sampled_expectations(spec: &HeaSpec, shots: u64, rng: &mut CounterRng) -> Result<Vec<f64>> {
    spec.validate()?;
    if shots == 0 {
        return Err(Error::invalid("need at least one shot"));
    }
    let s = HeaCircuit::new(spec.n, spec.reps, spec.t)?.state(&spec.z, &spec.theta)?;
    let p = s.probabilities();
    let mut sums = vec![0i64; spec.n];
    for _ in 0..shots {
        let b = sample_index(&p, rng);
        for (q, acc) in sums.iter_mut().enumerate() {
            *acc += if b >> q & 1 == 0 { 1 } else { -1 };
        }
    }
    Ok(sums.into_iter().map(|x| x as f64 / shots as f64).collect())
}
