//! Loss estimation by amplitude estimation on a micro-scale instance: the
//! Brownian increments of every step are loaded as one discretized product
//! distribution, the deep BSDE rollout and terminal mismatch act as a classical
//! oracle on basis labels, and every state preparation is charged to the ledger
//! unitary by unitary.

use dbq_core::autodiff::FeedForwardNet;
use dbq_core::ledger::{QueryLedger, Unitary};
use dbq_core::mc::EstimatorResult;
use dbq_core::sde::{discretize_gaussian, euler_maruyama, DiscretizedDistribution};
use dbq_core::{Error, Result};
use dbq_qsim::{qamc_mean_at, OracleCosts, QamcTarget};

use crate::model::BsdeModel;
use crate::problem::PdeProblem;
use crate::rollout::residuals;

pub const MICRO_MAX_STEPS: usize = 2;
pub const MICRO_MAX_BITS: usize = 3;

/// Unitary applications inside one state preparation: one of each
/// initial-value unitary and the loss, `d·N` Gaussian loaders, `N` each of
/// `U_μ, U_σ, U_f`, `N − 1` network calls and `d²·N` arithmetic blocks.
pub fn pipeline_oracle_costs(d: usize, n_steps: usize) -> OracleCosts {
    let (d, n) = (d as u64, n_steps as u64);
    OracleCosts(vec![
        (Unitary::X0, 1),
        (Unitary::T0, 1),
        (Unitary::U0, 1),
        (Unitary::Grad0, 1),
        (Unitary::Loss, 1),
        (Unitary::Gauss, d * n),
        (Unitary::Mu, n),
        (Unitary::Sigma, n),
        (Unitary::F, n),
        (Unitary::NN, n.saturating_sub(1)),
        (Unitary::Arith, d * d * n),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroPipeline {
    /// Joint law of the step labels; `points[L] = L`.
    pub joint: DiscretizedDistribution,
    /// Squared terminal mismatch for every joint label.
    pub payoffs: Vec<f64>,
}

impl MicroPipeline {
    /// Enumerates every increment combination on a `2^{n_bits}`-point grid per step.
    pub fn build(model: &BsdeModel<FeedForwardNet>, problem: &PdeProblem, n_bits: usize) -> Result<Self> {
        let (d, n) = (model.d(), model.n_steps());
        if d != 1 || n == 0 || n > MICRO_MAX_STEPS || n_bits == 0 || n_bits > MICRO_MAX_BITS {
            return Err(Error::invalid(format!(
                "micro pipeline needs d = 1, 1 ≤ N ≤ {MICRO_MAX_STEPS}, 1 ≤ n_bits ≤ {MICRO_MAX_BITS}; got d = {d}, N = {n}, n_bits = {n_bits}"
            )));
        }
        let per_step: Vec<DiscretizedDistribution> = (0..n)
            .map(|k| discretize_gaussian(n_bits, model.grid.dt(k)))
            .collect::<Result<_>>()?;
        let labels = 1usize << (n * n_bits);
        let mask = (1usize << n_bits) - 1;
        let mut increments = Vec::with_capacity(labels * n);
        let mut probs = Vec::with_capacity(labels);
        for l in 0..labels {
            let mut p = 1.0;
            for (k, dist) in per_step.iter().enumerate() {
                let digit = (l >> (k * n_bits)) & mask;
                increments.push(dist.points[digit]);
                p *= dist.probs[digit];
            }
            probs.push(p);
        }
        let batch = euler_maruyama(&problem.sde, &model.grid, increments, labels)?;
        let payoffs = residuals(model, problem, &batch)?.iter().map(|r| r * r).collect();
        let joint = DiscretizedDistribution::new((0..labels).map(|l| l as f64).collect(), probs)?;
        Ok(Self { joint, payoffs })
    }

    /// Loss of the model under the discretized increments.
    pub fn exact_loss(&self) -> f64 {
        self.joint.expectation(|l| self.payoffs[l as usize])
    }

    /// Upper end of the oracle's value range.
    pub fn payoff_max(&self) -> f64 {
        self.payoffs.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    /// Amplitude-estimated loss at `k = 2^{phase_bits}`, charging every preparation.
    pub fn estimate(
        &self,
        d: usize,
        n_steps: usize,
        phase_bits: u32,
        delta: f64,
        seed: u64,
        ledger: &QueryLedger,
    ) -> Result<EstimatorResult> {
        let payoffs = &self.payoffs;
        let v = move |l: f64| payoffs[l as usize];
        let hi = self.payoff_max();
        let target = QamcTarget {
            dist: &self.joint,
            v: &v,
            lo: 0.0,
            hi: if hi > 0.0 { hi } else { 1.0 },
        };
        let costs = pipeline_oracle_costs(d, n_steps);
        qamc_mean_at(&target, phase_bits, delta, seed, Some((ledger, &costs)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use crate::problem::make_hjb;
    use dbq_core::ledger::{theoretical_budget, BudgetMode};

    #[test]
    fn ledger_matches_budget_shape() {
        let p = make_hjb(1, 1.0).unwrap();
        for n in 1..=2 {
            let mut m = BsdeModel::classical(&p, n, &Architecture::default_for(1), 7).unwrap();
            m.u0 = 0.4;
            let pipe = MicroPipeline::build(&m, &p, 2).unwrap();
            let ledger = QueryLedger::new();
            let r = pipe.estimate(1, n, 4, 0.2, 3, &ledger).unwrap();
            let reps = r.cost;
            assert!(reps > 0);
            assert_eq!(ledger.get(Unitary::NN), (n as u64 - 1) * reps);
            assert_eq!(ledger.get(Unitary::Gauss), n as u64 * reps);
            assert_eq!(ledger.get(Unitary::X0), reps);
            let budget = theoretical_budget(BudgetMode::Qamc, n as f64, 1.0, 0.1, 1.0, None).unwrap();
            let ratio = ledger.get(Unitary::Gauss) as f64 / ledger.get(Unitary::X0) as f64;
            assert_eq!(ratio, budget.get(Unitary::Gauss) / budget.get(Unitary::X0));
        }
    }

    #[test]
    fn product_law_sums_to_one() {
        let p = make_hjb(1, 1.0).unwrap();
        let m = BsdeModel::classical(&p, 2, &Architecture::default_for(1), 1).unwrap();
        let pipe = MicroPipeline::build(&m, &p, 3).unwrap();
        assert_eq!(pipe.payoffs.len(), 64);
        assert!((pipe.joint.probs.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn estimate_lands_within_bound() {
        let p = make_hjb(1, 1.0).unwrap();
        let mut m = BsdeModel::classical(&p, 2, &Architecture::default_for(1), 5).unwrap();
        m.u0 = 0.3;
        let pipe = MicroPipeline::build(&m, &p, 2).unwrap();
        let r = pipe.estimate(1, 2, 6, 0.05, 11, &QueryLedger::new()).unwrap();
        assert!((r.value - pipe.exact_loss()).abs() <= r.half_width, "{r:?} vs {}", pipe.exact_loss());
    }

    #[test]
    fn oversized_instances_rejected() {
        let p = make_hjb(1, 1.0).unwrap();
        let m = BsdeModel::classical(&p, 3, &Architecture::default_for(1), 1).unwrap();
        assert!(MicroPipeline::build(&m, &p, 2).is_err());
        let m = BsdeModel::classical(&p, 2, &Architecture::default_for(1), 1).unwrap();
        assert!(MicroPipeline::build(&m, &p, 4).is_err());
        let p2 = make_hjb(2, 1.0).unwrap();
        let m2 = BsdeModel::classical(&p2, 2, &Architecture::default_for(2), 1).unwrap();
        assert!(MicroPipeline::build(&m2, &p2, 2).is_err());
    }
}
