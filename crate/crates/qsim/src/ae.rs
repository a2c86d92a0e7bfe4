//! Amplitude estimation by phase estimation on the Grover iterate, the
//! powering-lemma median, bounded-range mean estimation and inner-product
//! estimation.

use std::f64::consts::PI;

use dbq_core::ledger::{QueryLedger, Unitary};
use dbq_core::mc::EstimatorResult;
use dbq_core::rng::{derive_seed, purpose, CounterRng};
use dbq_core::sde::DiscretizedDistribution;
use dbq_core::stats::median;
use dbq_core::{Error, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::encoding::{load_distribution, oracle_rotation};
use crate::state::{gates, sample_index, Register, StateVector, C64, MAX_QUBITS};

/// `U = I − 2|χ⟩⟨χ|` and `V = I − 2P` with `P` projecting onto `good_qubit = 1`.
fn reflections(chi: &StateVector, good_qubit: usize) -> (DMatrix<C64>, DMatrix<C64>) {
    let dim = chi.amplitudes().len();
    let a = chi.amplitudes();
    let u = DMatrix::from_fn(dim, dim, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        C64::new(id, 0.0) - a[i] * a[j].conj() * 2.0
    });
    let v = DMatrix::from_fn(dim, dim, |i, j| {
        if i != j {
            C64::new(0.0, 0.0)
        } else if i >> good_qubit & 1 == 1 {
            C64::new(-1.0, 0.0)
        } else {
            C64::new(1.0, 0.0)
        }
    });
    (u, v)
}

/// Grover iterate `G = −UV`; it rotates by twice the amplitude angle and
/// squares to `Q = UVUV`.
pub fn grover_iterate(chi: &StateVector, good_qubit: usize) -> DMatrix<C64> {
    let (u, v) = reflections(chi, good_qubit);
    -(u * v)
}

/// `Q = UVUV`, whose eigenphases `±4·asin√a` do not separate `a` from `1 − a`.
pub fn double_reflection(chi: &StateVector, good_qubit: usize) -> DMatrix<C64> {
    let (u, v) = reflections(chi, good_qubit);
    let uv = u * v;
    &uv * &uv
}

fn controlled_phase(state: &mut StateVector, control: usize, target: usize, phi: f64) {
    state.apply_unchecked(&gates::phase(phi), &[control], &[target]);
}

/// Inverse quantum Fourier transform on `reg` (value bit `j` on qubit `start + j`).
pub fn inverse_qft(state: &mut StateVector, reg: Register) {
    let q = |j: usize| reg.start + j;
    let m = reg.len;
    for j in 0..m / 2 {
        swap(state, q(j), q(m - 1 - j));
    }
    let h = gates::h();
    for j in 0..m {
        for l in 0..j {
            controlled_phase(state, q(l), q(j), -PI / (1u64 << (j - l)) as f64);
        }
        state.apply_unchecked(&h, &[], &[q(j)]);
    }
}

/// Forward transform `|y⟩ ↦ k^{−1/2} Σ_x e^{2πi·xy/k}|x⟩`.
pub fn qft(state: &mut StateVector, reg: Register) {
    let q = |j: usize| reg.start + j;
    let m = reg.len;
    let h = gates::h();
    for j in (0..m).rev() {
        state.apply_unchecked(&h, &[], &[q(j)]);
        for l in (0..j).rev() {
            controlled_phase(state, q(l), q(j), PI / (1u64 << (j - l)) as f64);
        }
    }
    for j in 0..m / 2 {
        swap(state, q(j), q(m - 1 - j));
    }
}

fn swap(state: &mut StateVector, a: usize, b: usize) {
    let (ma, mb) = (1usize << a, 1usize << b);
    let amps = state.amplitudes_mut();
    for i in 0..amps.len() {
        if i & ma != 0 && i & mb == 0 {
            amps.swap(i, i ^ ma ^ mb);
        }
    }
}

/// Outcome distribution of one phase-estimation run, ready for repeated sampling.
#[derive(Debug, Clone)]
pub struct AmplitudeEstimator {
    phase_bits: u32,
    outcome: Vec<f64>,
    good_probability: f64,
}

impl AmplitudeEstimator {
    /// Simulates phase estimation with `phase_bits` ancillas and controlled
    /// `G^{2^j}`, `j < phase_bits`, on the state `χ`.
    pub fn new(chi: &StateVector, good_qubit: usize, phase_bits: u32) -> Result<Self> {
        let s = chi.n_qubits();
        if good_qubit >= s {
            return Err(Error::invalid("good qubit outside the prepared state"));
        }
        if phase_bits == 0 {
            return Err(Error::invalid("phase estimation needs at least one phase bit"));
        }
        let total = s + phase_bits as usize;
        if total > MAX_QUBITS {
            return Err(Error::Capacity {
                requested: total,
                limit: MAX_QUBITS,
            });
        }
        let m = phase_bits as usize;
        let mut amps = vec![C64::new(0.0, 0.0); 1 << total];
        amps[..1 << s].copy_from_slice(chi.amplitudes());
        let mut st = StateVector::from_amplitudes(amps)?;
        let phase = Register::new(s, m);
        let h = gates::h();
        for q in phase.qubits() {
            st.apply_unchecked(&h, &[], &[q]);
        }
        let system: Vec<usize> = (0..s).collect();
        let mut power = grover_iterate(chi, good_qubit);
        for j in 0..m {
            st.apply_unchecked(&power, &[s + j], &system);
            if j + 1 < m {
                power = &power * &power;
            }
        }
        inverse_qft(&mut st, phase);
        Ok(Self {
            phase_bits,
            outcome: st.register_probabilities(phase),
            good_probability: chi.probability_one(good_qubit),
        })
    }

    /// `k = 2^{phase_bits}`.
    pub fn k(&self) -> u64 {
        1 << self.phase_bits
    }

    pub fn outcome_probabilities(&self) -> &[f64] {
        &self.outcome
    }

    /// The amplitude `a` the run is estimating.
    pub fn good_probability(&self) -> f64 {
        self.good_probability
    }

    /// `ã = sin²(πy/k)`.
    pub fn estimate_for(&self, y: usize) -> f64 {
        (PI * y as f64 / self.k() as f64).sin().powi(2)
    }

    pub fn sample(&self, rng: &mut CounterRng) -> f64 {
        self.estimate_for(sample_index(&self.outcome, rng))
    }

    /// Controlled Grover iterates per run, `k − 1`.
    pub fn grover_calls(&self) -> u64 {
        self.k() - 1
    }

    /// Applications of the state preparation (or its inverse) per run: once to
    /// build `χ`, twice inside every Grover iterate.
    pub fn preparation_calls(&self) -> u64 {
        2 * self.grover_calls() + 1
    }

    /// `2π√(a(1−a))/k + π²/k²`.
    pub fn error_bound(&self, a: f64) -> f64 {
        let k = self.k() as f64;
        2.0 * PI * (a * (1.0 - a)).max(0.0).sqrt() / k + PI * PI / (k * k)
    }
}

/// One amplitude-estimation run; `half_width` is the error bound at the estimate
/// and `cost` the number of Grover iterates.
pub fn amplitude_estimate(
    chi: &StateVector,
    good_qubit: usize,
    phase_bits: u32,
    rng: &mut CounterRng,
) -> Result<EstimatorResult> {
    let ae = AmplitudeEstimator::new(chi, good_qubit, phase_bits)?;
    let value = ae.sample(rng);
    Ok(EstimatorResult {
        value,
        half_width: ae.error_bound(value),
        cost: ae.grover_calls(),
    })
}

/// Repetitions for confidence `1 − δ`: `⌈18·ln(1/δ)⌉`, or one run when `δ ≥ ½`.
pub fn powering_runs(delta: f64) -> Result<u64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("δ must lie in (0, 1)"));
    }
    if delta >= 0.5 {
        return Ok(1);
    }
    Ok((18.0 * (1.0 / delta).ln()).ceil() as u64)
}

/// Median of `powering_runs(δ)` calls `estimator(run_index)`.
pub fn median_power(estimator: &mut dyn FnMut(u64) -> f64, delta: f64) -> Result<f64> {
    let runs = powering_runs(delta)?;
    let values: Vec<f64> = (0..runs).map(estimator).collect();
    Ok(median(&values))
}

/// Ledger counters bumped per application of the state preparation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleCosts(pub Vec<(Unitary, u64)>);

impl OracleCosts {
    fn charge(&self, ledger: &QueryLedger, preparations: u64) {
        for &(u, c) in &self.0 {
            ledger.record(u, c * preparations);
        }
    }
}

/// `E[v(X)]` for `X` drawn from a discretized distribution with `v` valued in `[lo, hi]`.
pub struct QamcTarget<'a> {
    pub dist: &'a DiscretizedDistribution,
    pub v: &'a (dyn Fn(f64) -> f64 + Sync),
    pub lo: f64,
    pub hi: f64,
}

impl QamcTarget<'_> {
    /// Values rescaled to `[0, 1]`, rejecting any outside `[lo, hi]`.
    fn unit_values(&self) -> Result<Vec<f64>> {
        if !(self.hi > self.lo) {
            return Err(Error::invalid("need lo < hi"));
        }
        self.dist
            .points
            .iter()
            .map(|&x| {
                let y = (self.v)(x);
                if !(y >= self.lo && y <= self.hi) {
                    return Err(Error::contract(format!(
                        "v({x}) = {y} is outside [{}, {}]",
                        self.lo, self.hi
                    )));
                }
                Ok((y - self.lo) / (self.hi - self.lo))
            })
            .collect()
    }

    /// Exact weighted mean `Σ p_i v(x_i)`.
    pub fn exact_mean(&self) -> f64 {
        self.dist.expectation(|x| (self.v)(x))
    }
}

/// Smallest phase-bit count whose worst-case bound, doubled by the dithered
/// rescale, stays within `ε` after unscaling.
fn phase_bits_for(eps: f64, width: f64) -> Result<u32> {
    if !(eps > 0.0) {
        return Err(Error::invalid("ε must be positive"));
    }
    for m in 1..=MAX_QUBITS as u32 {
        let k = (1u64 << m) as f64;
        if 2.0 * width * (PI / k + PI * PI / (k * k)) <= eps {
            return Ok(m);
        }
    }
    Err(Error::Capacity {
        requested: MAX_QUBITS + 1,
        limit: MAX_QUBITS,
    })
}

/// Quantum mean estimate with additive error `ε` except with probability `δ`.
pub fn qamc_mean(
    target: &QamcTarget,
    eps: f64,
    delta: f64,
    seed: u64,
    ledger: Option<(&QueryLedger, &OracleCosts)>,
) -> Result<EstimatorResult> {
    let m = phase_bits_for(eps, target.hi - target.lo)?;
    let mut r = qamc_mean_at(target, m, delta, seed, ledger)?;
    r.half_width = eps;
    Ok(r)
}

/// [`qamc_mean`] at a fixed `k = 2^{phase_bits}`. Each run rescales `v` to
/// `(w + u)/2` with a fresh uniform `u`, which keeps the target away from
/// fixed alignment with the phase grid; `u` is subtracted after estimation.
/// `cost` counts state-preparation applications across all runs.
pub fn qamc_mean_at(
    target: &QamcTarget,
    phase_bits: u32,
    delta: f64,
    seed: u64,
    ledger: Option<(&QueryLedger, &OracleCosts)>,
) -> Result<EstimatorResult> {
    let w = target.unit_values()?;
    let runs = powering_runs(delta)?;
    let n = target.dist.n_bits;
    let reg = Register::new(0, n);
    let mut base = StateVector::new(n + 1)?;
    load_distribution(&mut base, target.dist, reg)?;
    let stream = derive_seed(seed, phase_bits as u64);
    let outcomes: Vec<Result<(f64, u64)>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = CounterRng::new(stream, purpose::MEASUREMENT, run, 0);
            let u = rng.uniform();
            let mut chi = base.clone();
            oracle_rotation(&mut chi, &|x| 0.5 * (w[x] + u), reg, n)?;
            let ae = AmplitudeEstimator::new(&chi, n, phase_bits)?;
            Ok((2.0 * ae.sample(&mut rng) - u, ae.preparation_calls()))
        })
        .collect();
    let mut estimates = Vec::with_capacity(runs as usize);
    let mut cost = 0;
    for o in outcomes {
        let (e, c) = o?;
        estimates.push(e);
        cost += c;
    }
    if let Some((l, costs)) = ledger {
        costs.charge(l, cost);
    }
    let k = (1u64 << phase_bits) as f64;
    Ok(EstimatorResult {
        value: target.lo + (target.hi - target.lo) * median(&estimates),
        half_width: 2.0 * (target.hi - target.lo) * (PI / k + PI * PI / (k * k)),
        cost,
    })
}

/// Estimates `v·c` from the Hadamard-test state, whose ancilla reads 1 with
/// probability `(1 − ⟨v̂|ĉ⟩)/2`, by amplitude estimation and the powering median.
pub fn inner_product_estimate(v: &[f64], c: &[f64], eps: f64, gamma: f64, seed: u64) -> Result<EstimatorResult> {
    if v.len() != c.len() || v.is_empty() {
        return Err(Error::invalid("vectors must have equal, non-zero length"));
    }
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nc = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(nv > 0.0 && nc > 0.0) {
        return Err(Error::invalid("cannot estimate an inner product with a zero-norm vector"));
    }
    let bits = v.len().next_power_of_two().trailing_zeros() as usize;
    let dim = 1usize << bits;
    let mut amps = vec![C64::new(0.0, 0.0); 2 * dim];
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..v.len() {
        amps[i] = C64::new(r * v[i] / nv, 0.0);
        amps[dim + i] = C64::new(r * c[i] / nc, 0.0);
    }
    let mut chi = StateVector::from_amplitudes(amps)?;
    chi.apply_gate(&gates::h(), &[bits])?;
    let scale = 2.0 * nv * nc;
    let m = phase_bits_for(2.0 * eps, scale)?;
    let ae = AmplitudeEstimator::new(&chi, bits, m)?;
    let mut rng = CounterRng::new(seed, purpose::MEASUREMENT, 0, 0);
    let runs = powering_runs(gamma)?;
    let p1 = median_power(&mut |_| ae.sample(&mut rng), gamma)?;
    Ok(EstimatorResult {
        value: nv * nc * (1.0 - 2.0 * p1),
        half_width: eps,
        cost: runs * ae.grover_calls(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_qubit_chi(a: f64) -> StateVector {
        let mut s = StateVector::new(1).unwrap();
        s.apply_gate(&gates::ry(2.0 * a.sqrt().asin()), &[0]).unwrap();
        s
    }

    #[test]
    fn qft_matches_dft_matrix() {
        let m = 3;
        let k = 8;
        for y in 0..k {
            let mut amps = vec![C64::new(0.0, 0.0); k];
            amps[y] = C64::new(1.0, 0.0);
            let mut s = StateVector::from_amplitudes(amps).unwrap();
            qft(&mut s, Register::new(0, m));
            for x in 0..k {
                let want = C64::from_polar(1.0 / (k as f64).sqrt(), 2.0 * PI * (x * y) as f64 / k as f64);
                assert!((s.amplitudes()[x] - want).norm() < 1e-12);
            }
            inverse_qft(&mut s, Register::new(0, m));
            assert!((s.amplitudes()[y].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grover_iterate_squares_to_double_reflection() {
        let chi = single_qubit_chi(0.3);
        let g = grover_iterate(&chi, 0);
        let q = double_reflection(&chi, 0);
        assert!((&g * &g - q).iter().all(|x| x.norm() < 1e-12));
    }

    #[test]
    fn zero_amplitude_is_exact() {
        let chi = StateVector::new(2).unwrap();
        let mut rng = CounterRng::new(1, purpose::TEST, 0, 0);
        for _ in 0..20 {
            assert_eq!(amplitude_estimate(&chi, 1, 4, &mut rng).unwrap().value, 0.0);
        }
    }

    #[test]
    fn representable_phases_are_exact() {
        for m in [3u32, 5] {
            let k = 1usize << m;
            for big_m in 1..k / 2 {
                let a = (PI * big_m as f64 / k as f64).sin().powi(2);
                let ae = AmplitudeEstimator::new(&single_qubit_chi(a), 0, m).unwrap();
                let hit = ae.outcome_probabilities()[big_m] + ae.outcome_probabilities()[k - big_m];
                assert!((hit - 1.0).abs() < 1e-10, "m={m} M={big_m}");
                let mut rng = CounterRng::new(2, purpose::TEST, big_m as u64, 0);
                assert!((ae.sample(&mut rng) - a).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn powering_run_counts() {
        assert_eq!(powering_runs(0.5).unwrap(), 1);
        assert_eq!(powering_runs(0.01).unwrap(), 83);
        assert!(powering_runs(0.0).is_err());
        assert_eq!(median_power(&mut |_| 1.25, 0.01).unwrap(), 1.25);
    }

    #[test]
    fn constant_target() {
        let d = dbq_core::sde::discretize_gaussian(2, 1.0).unwrap();
        let t = QamcTarget {
            dist: &d,
            v: &|_| 0.7,
            lo: 0.0,
            hi: 1.0,
        };
        let r = qamc_mean(&t, 0.05, 0.1, 3, None).unwrap();
        assert!((r.value - 0.7).abs() <= 0.05);
        let bad = QamcTarget {
            dist: &d,
            v: &|_| 2.0,
            lo: 0.0,
            hi: 1.0,
        };
        assert!(matches!(qamc_mean(&bad, 0.1, 0.1, 3, None), Err(Error::Contract(_))));
    }

    #[test]
    fn ripe_trivial_cases() {
        let v = [0.6, 0.8];
        let s = inner_product_estimate(&v, &v, 0.05, 0.1, 1).unwrap();
        assert!((s.value - 1.0).abs() <= 0.05);
        let o = inner_product_estimate(&[1.0, 0.0], &[0.0, 1.0], 0.05, 0.1, 1).unwrap();
        assert!(o.value.abs() <= 0.05);
        assert!(inner_product_estimate(&[0.0, 0.0], &[1.0, 0.0], 0.05, 0.1, 1).is_err());
    }
}
