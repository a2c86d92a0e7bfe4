use rayon::prelude::*;

use super::EstimatorResult;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, purpose, CounterRng};
use crate::sde::{euler_path, SdeSpec, TimeGrid};
use crate::stats::mean_var;

#[derive(Debug, Clone)]
pub struct MlmcConfig {
    pub eps: f64,
    /// Samples per level used to estimate `V_k` before allocation.
    pub pilot: u64,
    /// Finest level the caller is willing to simulate.
    pub max_level: u32,
    /// Overrides `K = ⌈log₂(2/ε)⌉` when set.
    pub levels: Option<u32>,
    pub seed: u64,
}

impl MlmcConfig {
    pub fn new(eps: f64, seed: u64) -> Self {
        Self {
            eps,
            pilot: 1000,
            max_level: 16,
            levels: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcPlan {
    pub max_level: u32,
    /// `N_k` per level.
    pub samples: Vec<u64>,
    /// Fine-grid steps `2^k` per level.
    pub steps: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    pub level: u32,
    pub samples: u64,
    pub mean_correction: f64,
    pub variance: f64,
    /// Total Euler steps spent on this level.
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct MlmcResult {
    /// `half_width` is one standard error `√(Σ V_k/N_k)`.
    pub estimate: EstimatorResult,
    pub levels: Vec<LevelStats>,
    pub plan: MlmcPlan,
}

/// Coarse increments as sums of consecutive pairs of fine increments.
pub fn coarse_increments(fine: &[f64], d: usize) -> Vec<f64> {
    let n = fine.len() / d;
    assert!(n % 2 == 0 && fine.len() % d == 0, "fine grid must have an even number of steps");
    let mut out = vec![0.0; fine.len() / 2];
    for m in 0..n / 2 {
        for i in 0..d {
            out[m * d + i] = fine[2 * m * d + i] + fine[(2 * m + 1) * d + i];
        }
    }
    out
}

fn level_cost(k: u32) -> f64 {
    let fine = (1u64 << k) as f64;
    if k == 0 {
        fine
    } else {
        1.5 * fine
    }
}

/// Fine increments of sample `index` at `level` (`2^level` steps).
pub fn level_increments(spec: &SdeSpec, level: u32, seed: u64, index: u64) -> Vec<f64> {
    let steps = 1usize << level;
    let d = spec.d;
    let dt = (spec.t_end - spec.t0) / steps as f64;
    let s = derive_seed(seed, level as u64);
    let mut out = vec![0.0; steps * d];
    for n in 0..steps {
        let mut rng = CounterRng::new(s, purpose::MLMC, index, n as u64);
        for x in &mut out[n * d..(n + 1) * d] {
            *x = dt.sqrt() * rng.normal();
        }
    }
    out
}

/// `(P_k, P_{k−1})` for one sample, both driven by the same Brownian path;
/// `P_{−1} = 0`.
pub fn coupled_level_sample(
    spec: &SdeSpec,
    payoff: &(dyn Fn(&[f64]) -> f64 + Sync),
    level: u32,
    seed: u64,
    index: u64,
) -> Result<(f64, f64)> {
    let d = spec.d;
    let steps = 1usize << level;
    let fine = level_increments(spec, level, seed, index);
    let terminal = |incs: &[f64], n: usize| -> Result<f64> {
        let grid = TimeGrid::uniform(spec.t0, spec.t_end, n)?;
        let mut st = vec![0.0; (n + 1) * d];
        euler_path(spec, &grid, incs, &mut st)
            .map_err(|step| Error::numeric(format!("non-finite state at level {level}, sample {index}, step {step}")))?;
        Ok(payoff(&st[n * d..]))
    };
    let pf = terminal(&fine, steps)?;
    let pc = if level == 0 {
        0.0
    } else {
        terminal(&coarse_increments(&fine, d), steps / 2)?
    };
    Ok((pf, pc))
}

fn level_corrections(
    spec: &SdeSpec,
    payoff: &(dyn Fn(&[f64]) -> f64 + Sync),
    level: u32,
    seed: u64,
    n: u64,
) -> Result<Vec<f64>> {
    (0..n)
        .into_par_iter()
        .map(|i| coupled_level_sample(spec, payoff, level, seed, i).map(|(f, c)| f - c))
        .collect()
}

/// Multilevel estimate of `E[payoff(X_T)]` with `K = ⌈log₂(2/ε)⌉` levels and
/// `N_k ∝ √(V_k/C_k)` chosen so that `Σ V_k/N_k ≤ ε²/2`.
pub fn mlmc_estimate(
    spec: &SdeSpec,
    payoff: &(dyn Fn(&[f64]) -> f64 + Sync),
    cfg: &MlmcConfig,
) -> Result<MlmcResult> {
    if !(cfg.eps > 0.0) || cfg.pilot < 2 {
        return Err(Error::invalid("need ε > 0 and at least two pilot samples"));
    }
    let k_max = cfg.levels.unwrap_or_else(|| (2.0 / cfg.eps).log2().ceil().max(0.0) as u32);
    if k_max > cfg.max_level {
        return Err(Error::config(format!(
            "MLMC needs {k_max} levels but the budget allows {}",
            cfg.max_level
        )));
    }
    let mut pilot_var = Vec::new();
    for k in 0..=k_max {
        let ys = level_corrections(spec, payoff, k, cfg.seed, cfg.pilot)?;
        pilot_var.push(mean_var(&ys).1);
    }
    let sum_vc: f64 = (0..=k_max)
        .map(|k| (pilot_var[k as usize] * level_cost(k)).sqrt())
        .sum();
    let samples: Vec<u64> = (0..=k_max)
        .map(|k| {
            let v = pilot_var[k as usize];
            let n = 2.0 / (cfg.eps * cfg.eps) * (v / level_cost(k)).sqrt() * sum_vc;
            (n.ceil() as u64).max(cfg.pilot)
        })
        .collect();
    let mut levels = Vec::new();
    let mut value = 0.0;
    let mut var_of_mean = 0.0;
    let mut total_cost = 0.0;
    for k in 0..=k_max {
        let n = samples[k as usize];
        let ys = level_corrections(spec, payoff, k, cfg.seed, n)?;
        let (m, v) = mean_var(&ys);
        value += m;
        var_of_mean += v / n as f64;
        let cost = n as f64 * level_cost(k);
        total_cost += cost;
        levels.push(LevelStats {
            level: k,
            samples: n,
            mean_correction: m,
            variance: v,
            cost,
        });
    }
    Ok(MlmcResult {
        estimate: EstimatorResult {
            value,
            half_width: var_of_mean.sqrt(),
            cost: total_cost as u64,
        },
        levels,
        plan: MlmcPlan {
            max_level: k_max,
            samples,
            steps: (0..=k_max).map(|k| 1u64 << k).collect(),
        },
    })
}
