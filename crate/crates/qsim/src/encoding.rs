use std::sync::Arc;

use dbq_core::ledger::{QueryLedger, Unitary};
use dbq_core::sde::DiscretizedDistribution;
use dbq_core::{Error, Result};

use crate::state::{gates, Register, StateVector, C64};

/// Sign-magnitude fixed point: `c1` integer bits, `c2` fraction bits and an
/// optional sign bit above the magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPointFormat {
    pub int_bits: u32,
    pub frac_bits: u32,
    pub signed: bool,
}

impl FixedPointFormat {
    pub fn new(int_bits: u32, frac_bits: u32, signed: bool) -> Result<Self> {
        if int_bits + frac_bits == 0 || int_bits + frac_bits + signed as u32 > 52 {
            return Err(Error::invalid("fixed-point width must be in 1..=52 bits"));
        }
        Ok(Self {
            int_bits,
            frac_bits,
            signed,
        })
    }

    pub fn total_bits(&self) -> u32 {
        self.int_bits + self.frac_bits + self.signed as u32
    }

    pub fn resolution(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// `R = 2^{c1} − 2^{−c2}`.
    pub fn max_value(&self) -> f64 {
        (self.int_bits as f64).exp2() - self.resolution()
    }

    fn magnitude_bits(&self) -> u32 {
        self.int_bits + self.frac_bits
    }

    /// Nearest grid label; values outside `[−R, R]` (or below 0 when unsigned) are rejected.
    pub fn encode(&self, x: f64) -> Result<u64> {
        let r = self.max_value();
        if !x.is_finite() || x.abs() > r || (!self.signed && x < 0.0) {
            return Err(Error::invalid(format!("{x} is outside the representable range ±{r}")));
        }
        let mag = (x.abs() / self.resolution()).round() as u64;
        let sign = if self.signed && x < 0.0 && mag != 0 { 1u64 } else { 0 };
        Ok(mag | (sign << self.magnitude_bits()))
    }

    pub fn decode(&self, label: u64) -> f64 {
        let mb = self.magnitude_bits();
        let mag = (label & ((1u64 << mb) - 1)) as f64 * self.resolution();
        if self.signed && (label >> mb) & 1 == 1 {
            -mag
        } else {
            mag
        }
    }
}

pub type LabelFn = Arc<dyn Fn(u64) -> u64 + Send + Sync>;

/// `|x⟩|y⟩ ↦ |x⟩|y ⊕ f(x)⟩` on two registers.
#[derive(Clone)]
pub struct FunctionOracle {
    pub input: Register,
    pub output: Register,
    pub f: LabelFn,
    /// Ledger counter bumped on every application.
    pub tag: Unitary,
}

impl FunctionOracle {
    pub fn new(input: Register, output: Register, f: LabelFn, tag: Unitary) -> Result<Self> {
        if input.mask() & output.mask() != 0 {
            return Err(Error::invalid("oracle input and output registers overlap"));
        }
        Ok(Self { input, output, f, tag })
    }

    pub fn apply(&self, state: &mut StateVector, ledger: Option<&QueryLedger>) -> Result<()> {
        let n_out = self.output.size() as u64;
        let table: Vec<u64> = (0..self.input.size() as u64).map(|x| (self.f)(x)).collect();
        if let Some(x) = table.iter().position(|&y| y >= n_out) {
            return Err(Error::contract(format!(
                "oracle value {} at input {x} does not fit {} output bits",
                table[x], self.output.len
            )));
        }
        let old = state.amplitudes().to_vec();
        let amps = state.amplitudes_mut();
        for (i, a) in old.into_iter().enumerate() {
            let fx = table[self.input.value(i)] as usize;
            amps[i ^ (fx << self.output.start)] = a;
        }
        if let Some(l) = ledger {
            l.record(self.tag, 1);
        }
        Ok(())
    }
}

fn register_is_clear(state: &StateVector, reg: Register) -> bool {
    state
        .amplitudes()
        .iter()
        .enumerate()
        .all(|(i, a)| reg.value(i) == 0 || a.norm_sqr() <= 1e-28)
}

/// Writes amplitudes `√p_i` onto a register that is currently `|0…0⟩`.
pub fn load_distribution(state: &mut StateVector, dist: &DiscretizedDistribution, reg: Register) -> Result<()> {
    if dist.n_bits != reg.len || dist.probs.len() != reg.size() {
        return Err(Error::invalid(format!(
            "distribution over {} bits does not fit a {}-qubit register",
            dist.n_bits, reg.len
        )));
    }
    let total: f64 = dist.probs.iter().sum();
    if (total - 1.0).abs() > 1e-10 || dist.probs.iter().any(|&p| p < 0.0) {
        return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
    }
    let roots: Vec<f64> = dist.probs.iter().map(|p| p.sqrt()).collect();
    spread_register(state, reg, &roots)
}

/// Amplitude-encodes `values` (zero-padded to the register size); returns the original norm.
pub fn load_amplitudes(state: &mut StateVector, values: &[f64], reg: Register) -> Result<f64> {
    if values.len() > reg.size() {
        return Err(Error::invalid(format!(
            "{} values do not fit a {}-qubit register",
            values.len(),
            reg.len
        )));
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::invalid("cannot amplitude-encode a zero-norm vector"));
    }
    let mut coeffs: Vec<f64> = values.iter().map(|v| v / norm).collect();
    coeffs.resize(reg.size(), 0.0);
    spread_register(state, reg, &coeffs)?;
    Ok(norm)
}

fn spread_register(state: &mut StateVector, reg: Register, coeffs: &[f64]) -> Result<()> {
    if !register_is_clear(state, reg) {
        return Err(Error::contract("target register is not in |0…0⟩"));
    }
    let old = state.amplitudes().to_vec();
    let amps = state.amplitudes_mut();
    for (base, a) in old.into_iter().enumerate() {
        if reg.value(base) != 0 || a == C64::new(0.0, 0.0) {
            continue;
        }
        for (x, &c) in coeffs.iter().enumerate() {
            amps[base | (x << reg.start)] = a * c;
        }
    }
    Ok(())
}

/// `Σ a_x|x⟩|0⟩ ↦ Σ a_x|x⟩(√(1−v(x))|0⟩ + √v(x)|1⟩)`, as a controlled `R_Y`.
pub fn oracle_rotation(
    state: &mut StateVector,
    v: &dyn Fn(usize) -> f64,
    reg: Register,
    ancilla: usize,
) -> Result<()> {
    if reg.qubits().contains(&ancilla) || ancilla >= state.n_qubits() {
        return Err(Error::invalid("ancilla must be a free qubit"));
    }
    let mut rot = Vec::with_capacity(reg.size());
    for x in 0..reg.size() {
        let vx = v(x);
        if !(0.0..=1.0).contains(&vx) {
            return Err(Error::contract(format!("rotation value {vx} at label {x} is outside [0, 1]")));
        }
        let (s, c) = (vx.sqrt(), (1.0 - vx).sqrt());
        rot.push((c, s));
    }
    let m = 1usize << ancilla;
    let amps = state.amplitudes_mut();
    for i in 0..amps.len() {
        if i & m == 0 {
            let (c, s) = rot[reg.value(i)];
            let (a0, a1) = (amps[i], amps[i | m]);
            amps[i] = a0 * c - a1 * s;
            amps[i | m] = a0 * s + a1 * c;
        }
    }
    Ok(())
}

const QUAD_TOL: f64 = 1e-13;
const QUAD_MAX_DEPTH: u32 = 48;

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::numeric(format!("quadrature did not converge on [{a}, {b}]")));
    }
    Ok(adaptive(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)?
        + adaptive(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)?)
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    let v = adaptive(f, a, fa, b, fb, m, fm, whole, tol, QUAD_MAX_DEPTH)?;
    if !v.is_finite() {
        return Err(Error::numeric("quadrature produced a non-finite value"));
    }
    Ok(v)
}

/// Per-level angles `θ_i = arccos √f(i)`, where `f(i)` is the share of region
/// `i`'s mass in its left half. Level `l` holds `2^l` angles. Meant for
/// log-concave densities supported on `[lo, hi]`.
pub fn grover_rudolph_angles(pdf: &dyn Fn(f64) -> f64, lo: f64, hi: f64, levels: usize) -> Result<Vec<Vec<f64>>> {
    if !(hi > lo) || levels == 0 || levels > 20 {
        return Err(Error::invalid("need lo < hi and 1..=20 levels"));
    }
    let cells = 1usize << levels;
    let h = (hi - lo) / cells as f64;
    let mut mass: Vec<f64> = (0..cells)
        .map(|i| integrate(pdf, lo + i as f64 * h, lo + (i + 1) as f64 * h, QUAD_TOL))
        .collect::<Result<_>>()?;
    let mut out = vec![Vec::new(); levels];
    for l in (0..levels).rev() {
        let angles: Vec<f64> = mass
            .chunks(2)
            .map(|c| {
                let total = c[0] + c[1];
                if total <= 0.0 {
                    0.0
                } else {
                    (c[0] / total).clamp(0.0, 1.0).sqrt().acos()
                }
            })
            .collect();
        mass = mass.chunks(2).map(|c| c[0] + c[1]).collect();
        out[l] = angles;
    }
    Ok(out)
}

/// Applies the level-by-level controlled `R_Y(2θ)` cascade to a register in
/// `|0…0⟩`; the most significant qubit splits first.
pub fn apply_grover_rudolph(state: &mut StateVector, angles: &[Vec<f64>], reg: Register) -> Result<()> {
    if angles.len() != reg.len || angles.iter().enumerate().any(|(l, a)| a.len() != 1 << l) {
        return Err(Error::invalid("angle table does not match the register width"));
    }
    if !register_is_clear(state, reg) {
        return Err(Error::contract("target register is not in |0…0⟩"));
    }
    for (l, level) in angles.iter().enumerate() {
        let target = reg.start + reg.len - 1 - l;
        let m = 1usize << target;
        let rots: Vec<_> = level.iter().map(|&t| gates::ry(2.0 * t)).collect();
        let amps = state.amplitudes_mut();
        for i in 0..amps.len() {
            if i & m != 0 {
                continue;
            }
            let region = (i >> (target + 1)) & ((1usize << l) - 1);
            let g = &rots[region];
            let (a, b) = (amps[i], amps[i | m]);
            amps[i] = g[(0, 0)] * a + g[(0, 1)] * b;
            amps[i | m] = g[(1, 0)] * a + g[(1, 1)] * b;
        }
    }
    Ok(())
}
