use std::ops::Range;

use dbq_core::rng::CounterRng;
use dbq_core::{Error, Result};
use nalgebra::DMatrix;

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;

/// Largest register the dense simulator will allocate.
pub const MAX_QUBITS: usize = 24;

const UNITARY_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-10;

/// Contiguous qubit range; qubit `start + j` carries bit `j` of the register value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Register {
    pub start: usize,
    pub len: usize,
}

impl Register {
    pub fn new(start: usize, len: usize) -> Self {
        Self { start, len }
    }

    pub fn qubits(&self) -> Range<usize> {
        self.start..self.start + self.len
    }

    pub fn mask(&self) -> usize {
        ((1usize << self.len) - 1) << self.start
    }

    /// Register value encoded in basis index `i`.
    pub fn value(&self, i: usize) -> usize {
        (i >> self.start) & ((1usize << self.len) - 1)
    }

    pub fn size(&self) -> usize {
        1 << self.len
    }
}

/// Dense `2^n` amplitude vector; basis index bit `q` is qubit `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
    registers: Vec<(String, Register)>,
}

fn check_capacity(n: usize) -> Result<()> {
    if n > MAX_QUBITS {
        return Err(Error::Capacity {
            requested: n,
            limit: MAX_QUBITS,
        });
    }
    Ok(())
}

pub fn is_unitary(m: &DMatrix<C64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let p = m.adjoint() * m;
    let n = m.nrows();
    (0..n).all(|i| {
        (0..n).all(|j| {
            let target = if i == j { 1.0 } else { 0.0 };
            (p[(i, j)] - C64::new(target, 0.0)).norm() <= UNITARY_TOL
        })
    })
}

impl StateVector {
    /// `|0…0⟩` on `n` qubits.
    pub fn new(n: usize) -> Result<Self> {
        check_capacity(n)?;
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        amps[0] = C64::new(1.0, 0.0);
        Ok(Self {
            n_qubits: n,
            amps,
            registers: Vec::new(),
        })
    }

    /// `|0…0⟩` with named registers laid out from qubit 0 upward.
    pub fn with_registers(layout: &[(&str, usize)]) -> Result<Self> {
        let n = layout.iter().map(|l| l.1).sum();
        let mut s = Self::new(n)?;
        let mut start = 0;
        for &(name, len) in layout {
            s.add_register(name, Register::new(start, len))?;
            start += len;
        }
        Ok(s)
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() || !amps.len().is_power_of_two() {
            return Err(Error::invalid("amplitude count must be a power of two"));
        }
        let n = amps.len().trailing_zeros() as usize;
        check_capacity(n)?;
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("state norm {norm} is not 1")));
        }
        Ok(Self {
            n_qubits: n,
            amps,
            registers: Vec::new(),
        })
    }

    pub fn add_register(&mut self, name: &str, reg: Register) -> Result<Register> {
        if reg.len == 0 || reg.start + reg.len > self.n_qubits {
            return Err(Error::invalid(format!("register {name} out of range")));
        }
        if self.registers.iter().any(|(n, r)| n == name || r.mask() & reg.mask() != 0) {
            return Err(Error::invalid(format!("register {name} clashes with an existing register")));
        }
        self.registers.push((name.to_string(), reg));
        Ok(reg)
    }

    pub fn register(&self, name: &str) -> Result<Register> {
        self.registers
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| *r)
            .ok_or_else(|| Error::invalid(format!("no register named {name}")))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    fn check_qubits(&self, controls: &[usize], targets: &[usize]) -> Result<()> {
        let mut seen = 0usize;
        for &q in controls.iter().chain(targets) {
            if q >= self.n_qubits {
                return Err(Error::invalid(format!("qubit {q} out of range for {} qubits", self.n_qubits)));
            }
            if seen & (1 << q) != 0 {
                return Err(Error::invalid(format!("qubit {q} listed twice")));
            }
            seen |= 1 << q;
        }
        Ok(())
    }

    /// Applies `gate` to `targets`; `targets[j]` carries bit `j` of the gate's basis index.
    pub fn apply_gate(&mut self, gate: &DMatrix<C64>, targets: &[usize]) -> Result<()> {
        self.apply_controlled(gate, &[], targets)
    }

    /// Applies `gate` to `targets` on the subspace where every control qubit is 1.
    pub fn apply_controlled(&mut self, gate: &DMatrix<C64>, controls: &[usize], targets: &[usize]) -> Result<()> {
        if targets.is_empty() || gate.nrows() != 1 << targets.len() {
            return Err(Error::invalid(format!(
                "gate of size {} does not match {} targets",
                gate.nrows(),
                targets.len()
            )));
        }
        if !is_unitary(gate) {
            return Err(Error::invalid("gate is not unitary"));
        }
        self.check_qubits(controls, targets)?;
        self.apply_unchecked(gate, controls, targets);
        Ok(())
    }

    /// Gate application without unitary or range checks, for gates built internally.
    pub(crate) fn apply_unchecked(&mut self, gate: &DMatrix<C64>, controls: &[usize], targets: &[usize]) {
        let cmask: usize = controls.iter().map(|&q| 1usize << q).sum();
        if targets.len() == 1 {
            let t = 1usize << targets[0];
            let (g00, g01, g10, g11) = (gate[(0, 0)], gate[(0, 1)], gate[(1, 0)], gate[(1, 1)]);
            for i in 0..self.amps.len() {
                if i & t == 0 && i & cmask == cmask {
                    let (a, b) = (self.amps[i], self.amps[i | t]);
                    self.amps[i] = g00 * a + g01 * b;
                    self.amps[i | t] = g10 * a + g11 * b;
                }
            }
            return;
        }
        let dim = 1usize << targets.len();
        let tmask: usize = targets.iter().map(|&q| 1usize << q).sum();
        let offsets: Vec<usize> = (0..dim)
            .map(|j| {
                targets
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| j >> b & 1 == 1)
                    .map(|(_, &q)| 1usize << q)
                    .sum()
            })
            .collect();
        let mut buf = vec![C64::new(0.0, 0.0); dim];
        for base in 0..self.amps.len() {
            if base & tmask != 0 || base & cmask != cmask {
                continue;
            }
            for (b, &o) in buf.iter_mut().zip(&offsets) {
                *b = self.amps[base | o];
            }
            for (r, &o) in offsets.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (c, b) in buf.iter().enumerate() {
                    acc += gate[(r, c)] * b;
                }
                self.amps[base | o] = acc;
            }
        }
    }

    pub fn cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubits(&[control], &[target])?;
        let (c, t) = (1usize << control, 1usize << target);
        for i in 0..self.amps.len() {
            if i & c != 0 && i & t == 0 {
                self.amps.swap(i, i | t);
            }
        }
        Ok(())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Marginal distribution of a register's value.
    pub fn register_probabilities(&self, reg: Register) -> Vec<f64> {
        let mut p = vec![0.0; reg.size()];
        for (i, a) in self.amps.iter().enumerate() {
            p[reg.value(i)] += a.norm_sqr();
        }
        p
    }

    pub fn probability_one(&self, qubit: usize) -> f64 {
        let m = 1usize << qubit;
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & m != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// `⟨Z_q⟩ = P(0) − P(1)`.
    pub fn expectation_z(&self, qubit: usize) -> f64 {
        1.0 - 2.0 * self.probability_one(qubit)
    }

    /// Draws one register value from the marginal distribution.
    pub fn sample_register(&self, reg: Register, rng: &mut CounterRng) -> usize {
        sample_index(&self.register_probabilities(reg), rng)
    }
}

/// Inverse-CDF draw from a (possibly slightly unnormalized) probability table.
pub(crate) fn sample_index(p: &[f64], rng: &mut CounterRng) -> usize {
    let total: f64 = p.iter().sum();
    let u = rng.uniform() * total;
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Standard single-qubit gates as 2×2 matrices.
pub mod gates {
    use super::C64;
    use nalgebra::DMatrix;

    fn m2(a: C64, b: C64, c: C64, d: C64) -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    fn r(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn im(x: f64) -> C64 {
        C64::new(0.0, x)
    }

    pub fn x() -> DMatrix<C64> {
        m2(r(0.0), r(1.0), r(1.0), r(0.0))
    }

    pub fn y() -> DMatrix<C64> {
        m2(r(0.0), im(-1.0), im(1.0), r(0.0))
    }

    pub fn z() -> DMatrix<C64> {
        m2(r(1.0), r(0.0), r(0.0), r(-1.0))
    }

    pub fn h() -> DMatrix<C64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        m2(r(s), r(s), r(s), r(-s))
    }

    pub fn rx(theta: f64) -> DMatrix<C64> {
        let (s, c) = (theta / 2.0).sin_cos();
        m2(r(c), im(-s), im(-s), r(c))
    }

    pub fn ry(theta: f64) -> DMatrix<C64> {
        let (s, c) = (theta / 2.0).sin_cos();
        m2(r(c), r(-s), r(s), r(c))
    }

    pub fn rz(theta: f64) -> DMatrix<C64> {
        m2(C64::from_polar(1.0, -theta / 2.0), r(0.0), r(0.0), C64::from_polar(1.0, theta / 2.0))
    }

    /// `diag(1, e^{iφ})`.
    pub fn phase(phi: f64) -> DMatrix<C64> {
        m2(r(1.0), r(0.0), r(0.0), C64::from_polar(1.0, phi))
    }
}
