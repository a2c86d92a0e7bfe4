//! Query counters per named unitary and closed-form complexity formulas.
//!
//! All asymptotic formulas are evaluated with leading constant 1 and
//! logarithmic factors dropped: they fix shapes (exponents, ratios), not
//! absolute counts.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::rng::{purpose, CounterRng};
use crate::stats::linear_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Unitary {
    X0,
    T0,
    U0,
    Grad0,
    Mu,
    Sigma,
    F,
    NN,
    Gauss,
    Loss,
    Arith,
}

impl Unitary {
    pub const ALL: [Unitary; 11] = [
        Unitary::X0,
        Unitary::T0,
        Unitary::U0,
        Unitary::Grad0,
        Unitary::Mu,
        Unitary::Sigma,
        Unitary::F,
        Unitary::NN,
        Unitary::Gauss,
        Unitary::Loss,
        Unitary::Arith,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Unitary::X0 => "U_X0",
            Unitary::T0 => "U_t0",
            Unitary::U0 => "U_u0",
            Unitary::Grad0 => "U_grad0",
            Unitary::Mu => "U_mu",
            Unitary::Sigma => "U_sigma",
            Unitary::F => "U_f",
            Unitary::NN => "U_NN",
            Unitary::Gauss => "U_Gauss",
            Unitary::Loss => "U_loss",
            Unitary::Arith => "arith",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Monotone per-unitary counters, safe to bump from several threads.
#[derive(Debug, Default)]
pub struct QueryLedger {
    counts: [AtomicU64; 11],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LedgerSnapshot {
    pub counts: [u64; 11],
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, u: Unitary, n: u64) {
        self.counts[u.index()].fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self, u: Unitary) -> u64 {
        self.counts[u.index()].load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let mut s = LedgerSnapshot::default();
        for (c, a) in s.counts.iter_mut().zip(&self.counts) {
            *c = a.load(Ordering::Relaxed);
        }
        s
    }
}

impl LedgerSnapshot {
    pub fn get(&self, u: Unitary) -> u64 {
        self.counts[u.index()]
    }

    /// Counts accrued since `earlier`.
    pub fn since(&self, earlier: &LedgerSnapshot) -> LedgerSnapshot {
        let mut s = LedgerSnapshot::default();
        for i in 0..11 {
            s.counts[i] = self.counts[i].saturating_sub(earlier.counts[i]);
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("unitary,count\n");
        for u in Unitary::ALL {
            let _ = writeln!(out, "{},{}", u.name(), self.get(u));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Classical,
    Quantum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMethod {
    Backprop,
    ForwardGradient,
    Numerical,
}

/// One row of the gradient-estimation query table.
#[derive(Debug, Clone, Copy)]
pub struct ComplexityQuery {
    pub method: GradientMethod,
    pub x_mode: Mode,
    /// Sampling mode of the direction `v`; only meaningful for the forward gradient.
    pub v_mode: Option<Mode>,
    pub d: f64,
    pub g_max: f64,
    pub eps: f64,
}

/// Query count to the network for estimating `∇f_NN` to `l∞` error `ε`, with
/// `n_θ` replaced by `d²`.
pub fn gradient_method_complexity(q: &ComplexityQuery) -> Result<f64> {
    use GradientMethod::*;
    use Mode::*;
    if !(q.eps > 0.0 && q.g_max >= 0.0 && q.d >= 1.0) {
        return Err(Error::invalid("need ε > 0, g_max ≥ 0, d ≥ 1"));
    }
    let (d, g, e) = (q.d, q.g_max, q.eps);
    match (q.x_mode, q.method, q.v_mode) {
        (Classical, Backprop, None) => Ok(g / (e * e)),
        (Classical, ForwardGradient, Some(Classical)) => Ok(d.powi(4) * g / (e * e)),
        (Classical, Numerical, None) => Ok(d * d * g / (e * e)),
        (Quantum, Backprop, None) => Ok(d * d * g.sqrt() / e),
        (Quantum, ForwardGradient, Some(Classical)) => Ok(d.powi(5) * g.powf(1.5) / e.powi(3)),
        (Quantum, ForwardGradient, Some(Quantum)) => Ok(d.powf(2.5) * g.sqrt() / e),
        (Quantum, Numerical, None) => Ok(d.powf(2.5) * g.sqrt() / e),
        other => Err(Error::invalid(format!("no query-table row for {other:?}"))),
    }
}

/// Which dimension enters the square root of the fully quantum forward-gradient bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceDimension {
    /// `n_θ √(d·g)/ε`, as stated.
    Input,
    /// `n_θ √(n_θ·g)/ε`, matching a variance bound over the `n_θ`-dimensional estimate.
    Parameters,
}

pub fn fwd_grad_quantum_complexity(n_theta: f64, d: f64, g_max: f64, eps: f64, dim: VarianceDimension) -> f64 {
    let inner = match dim {
        VarianceDimension::Input => d,
        VarianceDimension::Parameters => n_theta,
    };
    n_theta * (inner * g_max).sqrt() / eps
}

/// `n_θ^{2.5} g^{1.5}/ε³` for quantum inputs with classically sampled directions.
pub fn fwd_grad_mixed_complexity(n_theta: f64, g_max: f64, eps: f64) -> f64 {
    n_theta.powf(2.5) * g_max.powf(1.5) / eps.powi(3)
}

/// `√(g·n_θ)·‖v‖₂/ε` queries for one directional derivative with fixed classical `v`.
pub fn directional_derivative_complexity(n_theta: f64, g_max: f64, v_norm: f64, eps: f64) -> f64 {
    (g_max * n_theta).sqrt() * v_norm / eps
}

/// `g·n_θ²/ε²·ln(n_θ/δ)` classical samples of `v`.
pub fn classical_fwd_grad_samples(n_theta: f64, g_max: f64, eps: f64, delta: f64) -> f64 {
    g_max * n_theta * n_theta / (eps * eps) * (n_theta / delta).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetMode {
    Classical,
    Qamc,
}

/// Predicted count per unitary for one loss (or solution) estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetCounts {
    pub n_steps: f64,
    pub counts: Vec<(Unitary, f64)>,
}

impl BudgetCounts {
    pub fn get(&self, u: Unitary) -> f64 {
        self.counts.iter().find(|(v, _)| *v == u).map(|(_, c)| *c).unwrap_or(0.0)
    }
}

/// Quantum: `λ/ε` per initial-value unitary, `N·λ/ε` for `U_μ, U_σ, U_f, U_NN`,
/// `d·N·λ/ε` for `U_Gauss`, `d²·N·λ/ε` arithmetic; classical replaces `λ/ε` by
/// `λ²/ε²`. With `solution_order = Some(r)` the step count becomes `N = ε^{−1/r}`.
pub fn theoretical_budget(
    mode: BudgetMode,
    n_steps: f64,
    d: f64,
    eps: f64,
    lambda: f64,
    solution_order: Option<f64>,
) -> Result<BudgetCounts> {
    if !(eps > 0.0 && lambda >= 0.0 && d >= 1.0) {
        return Err(Error::invalid("need ε > 0, λ ≥ 0, d ≥ 1"));
    }
    let n = match solution_order {
        Some(r) if r > 0.0 => eps.powf(-1.0 / r),
        Some(_) => return Err(Error::invalid("strong order must be positive")),
        None => n_steps,
    };
    let base = match mode {
        BudgetMode::Qamc => lambda / eps,
        BudgetMode::Classical => lambda * lambda / (eps * eps),
    };
    let mut counts = Vec::new();
    for u in [Unitary::X0, Unitary::T0, Unitary::U0, Unitary::Grad0, Unitary::Loss] {
        counts.push((u, base));
    }
    for u in [Unitary::Mu, Unitary::Sigma, Unitary::F, Unitary::NN] {
        counts.push((u, n * base));
    }
    counts.push((Unitary::Gauss, d * n * base));
    counts.push((Unitary::Arith, d * d * n * base));
    Ok(BudgetCounts { n_steps: n, counts })
}

/// `K_fp·(1 + K₂·Δt^{2r} + C·(1 + ‖x0‖²))`.
pub fn payoff_variance_bound(k_fp: f64, k2: f64, dt: f64, r: f64, c: f64, x0: &[f64]) -> f64 {
    let x2: f64 = x0.iter().map(|v| v * v).sum();
    k_fp * (1.0 + k2 * dt.powf(2.0 * r) + c * (1.0 + x2))
}

/// `(L + |f(0)|²)(1 + E‖X‖²)/ε` queries to estimate a network's mean output.
pub fn loss_estimation_budget(lip: f64, f0: f64, ex2: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::invalid("ε must be positive"));
    }
    Ok((lip + f0 * f0) * (1.0 + ex2) / eps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% percentile bootstrap interval of the slope.
    pub ci: (f64, f64),
}

const BOOTSTRAP_ROUNDS: usize = 2000;

/// Least-squares slope of `ln error` against `ln queries`.
pub fn scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::invalid("scaling fit needs at least four points"));
    }
    if points.iter().any(|&(q, e)| !(q > 0.0 && e > 0.0)) {
        return Err(Error::invalid("scaling fit needs positive queries and errors"));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept) = linear_fit(&lx, &ly);
    let mut rng = CounterRng::new(0, purpose::BOOTSTRAP, points.len() as u64, 0);
    let n = points.len();
    let mut slopes = Vec::with_capacity(BOOTSTRAP_ROUNDS);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    while slopes.len() < BOOTSTRAP_ROUNDS {
        for i in 0..n {
            let j = rng.below(n);
            bx[i] = lx[j];
            by[i] = ly[j];
        }
        if bx.iter().all(|&v| v == bx[0]) {
            continue;
        }
        slopes.push(linear_fit(&bx, &by).0);
    }
    slopes.sort_by(f64::total_cmp);
    let lo = slopes[(0.025 * BOOTSTRAP_ROUNDS as f64) as usize];
    let hi = slopes[(0.975 * BOOTSTRAP_ROUNDS as f64) as usize - 1];
    Ok(ScalingFit {
        slope,
        intercept,
        ci: (lo, hi),
    })
}
