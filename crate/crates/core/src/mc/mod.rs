//! Classical Monte Carlo estimators, multilevel Monte Carlo and the
//! discretization error budget.

mod budget;
mod mlmc;

pub use budget::{
    error_budget, mlmc_sample_complexity, n_gauss_bound, qamlmc_sample_complexity, riemann_error_bound,
    riemann_left_sum, ErrorBudget,
};
pub use mlmc::{
    coarse_increments, coupled_level_sample, level_increments, mlmc_estimate, LevelStats, MlmcConfig, MlmcPlan, MlmcResult,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stats::mean_var;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub value: f64,
    pub half_width: f64,
    /// Samples drawn (classical) or oracle queries spent (quantum).
    pub cost: u64,
}

/// `⌈σ²/(δ·ε²)⌉`, at least one sample.
pub fn chebyshev_samples(variance: f64, eps: f64, delta: f64) -> Result<u64> {
    if !(eps > 0.0 && delta > 0.0) || variance < 0.0 {
        return Err(Error::invalid("need ε > 0, δ > 0 and σ² ≥ 0"));
    }
    Ok(((variance / (delta * eps * eps)).ceil() as u64).max(1))
}

/// Mean of `k` samples `sampler(0..k)` with Chebyshev half-width `√(σ̂²/(δk))`.
pub fn mc_mean(sampler: &(dyn Fn(u64) -> f64 + Sync), k: u64, delta: f64) -> Result<EstimatorResult> {
    if k == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let xs: Vec<f64> = (0..k).into_par_iter().map(sampler).collect();
    let (value, var) = mean_var(&xs);
    Ok(EstimatorResult {
        value,
        half_width: (var / (delta * k as f64)).sqrt(),
        cost: k,
    })
}

/// `⌈(2B²/ε²)·ln(2d/δ)⌉`: Hoeffding with a union bound over `d` coordinates.
pub fn mv_mc_samples(bound: f64, eps: f64, delta: f64, d: usize) -> Result<u64> {
    if !(eps > 0.0 && delta > 0.0 && bound >= 0.0) || d == 0 {
        return Err(Error::invalid("need ε > 0, δ > 0, B ≥ 0, d ≥ 1"));
    }
    Ok(((2.0 * bound * bound / (eps * eps)) * (2.0 * d as f64 / delta).ln()).ceil().max(1.0) as u64)
}

/// Coordinate-wise mean of a bounded vector sampler using the Hoeffding sample count.
pub fn mv_mc_mean(
    sampler: &(dyn Fn(u64) -> Vec<f64> + Sync),
    bound: f64,
    eps: f64,
    delta: f64,
    d: usize,
) -> Result<Vec<EstimatorResult>> {
    let k = mv_mc_samples(bound, eps, delta, d)?;
    let draws: Vec<Vec<f64>> = (0..k).into_par_iter().map(sampler).collect();
    let mut sums = vec![0.0; d];
    for (i, v) in draws.iter().enumerate() {
        if v.len() != d {
            return Err(Error::contract(format!("sample {i} has dimension {}, expected {d}", v.len())));
        }
        for (s, &x) in sums.iter_mut().zip(v) {
            if x.abs() > bound {
                return Err(Error::contract(format!("sample {i} has entry {x} beyond bound {bound}")));
            }
            *s += x;
        }
    }
    Ok(sums
        .into_iter()
        .map(|s| EstimatorResult {
            value: s / k as f64,
            half_width: eps,
            cost: k,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{purpose, CounterRng};

    #[test]
    fn chebyshev_examples() {
        assert_eq!(chebyshev_samples(1.0, 0.1, 0.01).unwrap(), 10_000);
        assert_eq!(chebyshev_samples(0.0, 0.1, 0.01).unwrap(), 1);
        assert!(chebyshev_samples(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn hoeffding_examples() {
        assert_eq!(mv_mc_samples(1.0, 0.1, 0.01, 8).unwrap(), 1476);
        let scalar = ((2.0 / 0.01) * (2.0f64 / 0.05).ln()).ceil() as u64;
        assert_eq!(mv_mc_samples(1.0, 0.1, 0.05, 1).unwrap(), scalar);
    }

    #[test]
    fn constant_sampler() {
        let r = mc_mean(&|_| 2.5, 100, 0.05).unwrap();
        assert_eq!(r.value, 2.5);
        assert_eq!(r.half_width, 0.0);
    }

    #[test]
    fn bernoulli_mean() {
        let s = |i: u64| {
            let mut r = CounterRng::new(3, purpose::MONTE_CARLO, i, 0);
            if r.bernoulli(0.5) {
                1.0
            } else {
                0.0
            }
        };
        let a = mc_mean(&s, 1_000_000, 0.05).unwrap();
        assert!((a.value - 0.5).abs() < 0.002);
        let b = mc_mean(&s, 1_000_000, 0.05).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bound_violation_is_reported() {
        let err = mv_mc_mean(&|_| vec![2.0], 1.0, 0.5, 0.1, 1).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
