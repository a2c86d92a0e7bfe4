use super::chebyshev_samples;
use crate::error::{Error, Result};

/// `⌈x⌉` that ignores rounding noise just above an integer.
pub(crate) fn ceil_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `M·L·|b−a|^{M+1}/(2n)`: left/right Riemann error over `M` nested integrals.
pub fn riemann_error_bound(lip: f64, a: f64, b: f64, m: u32, n: u64) -> Result<f64> {
    if !(b > a) || n == 0 || m == 0 {
        return Err(Error::invalid("need b > a, n ≥ 1, M ≥ 1"));
    }
    Ok(m as f64 * lip * (b - a).abs().powi(m as i32 + 1) / (2.0 * n as f64))
}

/// `Σ_{k<n} Δx·f(a + kΔx)` with `Δx = (b−a)/n`.
pub fn riemann_left_sum(f: impl Fn(f64) -> f64, a: f64, b: f64, n: u64) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|k| h * f(a + k as f64 * h)).sum()
}

/// `3·N·d·L·|6Δt|^{Nd+1}/(2ε)`: grid points per Gaussian increment keeping the
/// increment-discretization error below `ε/3`.
pub fn n_gauss_bound(n_steps: u64, d: usize, lip: f64, dt: f64, eps: f64) -> f64 {
    let nd = n_steps as f64 * d as f64;
    3.0 * nd * lip * (6.0 * dt).abs().powf(nd + 1.0) / (2.0 * eps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBudget {
    /// Time steps keeping the discretization term below `ε/3`.
    pub n_steps: u64,
    pub n_gauss_points: f64,
    pub n_gauss_qubits: u32,
    /// Chebyshev samples for the estimation term at tolerance `ε/3`.
    pub classical_samples: u64,
    /// Oracle queries `λ/(ε/3)` (constant 1, logs dropped).
    pub quantum_queries: u64,
}

/// Splits `ε` into thirds over the time-discretization, increment-discretization
/// and estimation terms.
pub fn error_budget(
    eps: f64,
    r: f64,
    d: usize,
    lip: f64,
    dt: f64,
    lambda: f64,
    delta: f64,
) -> Result<ErrorBudget> {
    if !(eps > 0.0 && eps < 1.0) || !(r > 0.0) {
        return Err(Error::invalid("need ε ∈ (0,1) and r > 0"));
    }
    let n_steps = ceil_tol(eps.powf(-1.0 / r)) as u64;
    let points = n_gauss_bound(n_steps, d, lip, dt, eps);
    let qubits = if points <= 2.0 {
        1
    } else {
        ceil_tol(points.log2()) as u32
    };
    let third = eps / 3.0;
    Ok(ErrorBudget {
        n_steps,
        n_gauss_points: points,
        n_gauss_qubits: qubits,
        classical_samples: chebyshev_samples(lambda * lambda, third, delta)?,
        quantum_queries: ceil_tol(lambda / third).max(1.0) as u64,
    })
}

fn check_eps_r(eps: f64, r: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) || !(r > 0.0) {
        return Err(Error::invalid("need ε ∈ (0,1) and r > 0"));
    }
    Ok(())
}

const CASE_TOL: f64 = 1e-12;

/// Classical MLMC sample count: `ε⁻²`, `ε⁻²(ln 1/ε)²` or `ε^{−1/r}` for `r` above,
/// at or below ½.
pub fn mlmc_sample_complexity(eps: f64, r: f64) -> Result<f64> {
    check_eps_r(eps, r)?;
    let l = (1.0 / eps).ln();
    Ok(if (r - 0.5).abs() <= CASE_TOL {
        eps.powi(-2) * l * l
    } else if r > 0.5 {
        eps.powi(-2)
    } else {
        eps.powf(-1.0 / r)
    })
}

/// Quantum-accelerated MLMC query count with the polylog factors kept; the case
/// boundary is `r = 1`.
pub fn qamlmc_sample_complexity(eps: f64, r: f64) -> Result<f64> {
    check_eps_r(eps, r)?;
    let l = (1.0 / eps).ln();
    let ll = l.ln().powi(2);
    Ok(if (r - 1.0).abs() <= CASE_TOL {
        l.powf(3.5) * ll / eps
    } else if r > 1.0 {
        l.powf(1.5) * ll / eps
    } else {
        eps.powf(-1.0 / r) * l.powf(1.5) * ll
    })
}
