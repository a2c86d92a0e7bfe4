//! Reference values for the HJB instance.
//!
//! In time-to-maturity `τ = T − t` the equation reads `u_τ = 2Δu + ‖∇u‖²`,
//! `u(τ=0) = g`. The substitution `w = e^{u/2}` turns it into the heat equation
//! `w_τ = 2Δw`, so `u(t0, x) = 2 ln E[√((1 + ‖x + 2W_T‖²)/2)]`.

use rayon::prelude::*;

use dbq_core::mc::EstimatorResult;
use dbq_core::rng::{purpose, CounterRng};
use dbq_core::{Error, Result};

/// Truncated domain `[−L, L]` of the grid solver.
pub const HALF_WIDTH: f64 = 10.0;
/// Successive refinements must agree to this.
pub const REFINE_TOL: f64 = 1e-4;
const MAX_REFINEMENTS: usize = 7;
const PICARD_TOL: f64 = 1e-13;
const PICARD_MAX: usize = 200;

pub fn hjb_terminal(x: f64) -> f64 {
    ((1.0 + x * x) / 2.0).ln()
}

/// Crank–Nicolson for `u_τ = a·u_xx + b·u_x²` on `[−L, L]` with `u(0, ·) = g` and
/// Dirichlet data `g(±L)`; the quadratic term is treated semi-implicitly by Picard
/// iteration. Returns `u(τ_end, x0)` by linear interpolation.
pub fn crank_nicolson_1d(
    a: f64,
    b: f64,
    g: &dyn Fn(f64) -> f64,
    tau_end: f64,
    x0: f64,
    half_width: f64,
    nx: usize,
    nt: usize,
) -> Result<f64> {
    if !(x0.abs() < half_width) {
        return Err(Error::invalid("evaluation point lies outside the grid"));
    }
    if nx < 4 || nt == 0 {
        return Err(Error::invalid("grid needs at least 4 intervals and 1 time step"));
    }
    if tau_end == 0.0 {
        return Ok(g(x0));
    }
    let dx = 2.0 * half_width / nx as f64;
    let dt = tau_end / nt as f64;
    let xs: Vec<f64> = (0..=nx).map(|i| -half_width + i as f64 * dx).collect();
    let mut u: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let (left, right) = (u[0], u[nx]);
    let m = nx - 1;
    let r = a * dt / (dx * dx);
    let sq_grad = |v: &[f64], i: usize| {
        let d = (v[i + 1] - v[i - 1]) / (2.0 * dx);
        d * d
    };
    let mut rhs = vec![0.0; m];
    let mut next = u.clone();
    let mut c_prime = vec![0.0; m];
    let mut d_prime = vec![0.0; m];
    for step in 0..nt {
        // Explicit half: (I + ½r D2) uⁿ + ½Δτ·b·(uⁿ_x)², plus both boundary halves.
        for i in 1..nx {
            rhs[i - 1] = u[i] + 0.5 * r * (u[i - 1] - 2.0 * u[i] + u[i + 1]) + 0.5 * dt * b * sq_grad(&u, i);
        }
        rhs[0] += 0.5 * r * left;
        rhs[m - 1] += 0.5 * r * right;
        next.copy_from_slice(&u);
        let mut converged = false;
        for _ in 0..PICARD_MAX {
            // Tridiagonal: −½r on the off-diagonals, 1 + r on the diagonal.
            let (off, diag) = (-0.5 * r, 1.0 + r);
            for k in 0..m {
                let i = k + 1;
                let rk = rhs[k] + 0.5 * dt * b * sq_grad(&next, i);
                let denom = diag - if k > 0 { off * c_prime[k - 1] } else { 0.0 };
                c_prime[k] = off / denom;
                d_prime[k] = (rk - if k > 0 { off * d_prime[k - 1] } else { 0.0 }) / denom;
            }
            let mut change: f64 = 0.0;
            let mut sol = vec![0.0; m];
            for k in (0..m).rev() {
                sol[k] = d_prime[k] - if k + 1 < m { c_prime[k] * sol[k + 1] } else { 0.0 };
            }
            for k in 0..m {
                change = change.max((sol[k] - next[k + 1]).abs());
                next[k + 1] = sol[k];
            }
            if !change.is_finite() {
                return Err(Error::numeric(format!("grid solve blew up at time step {step}")));
            }
            if change <= PICARD_TOL * (1.0 + next[1..nx].iter().fold(0.0f64, |s, v| s.max(v.abs()))) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::numeric(format!("Picard iteration stalled at time step {step}")));
        }
        next[0] = left;
        next[nx] = right;
        std::mem::swap(&mut u, &mut next);
    }
    let pos = (x0 + half_width) / dx;
    let i = (pos.floor() as usize).min(nx - 1);
    let w = pos - i as f64;
    Ok((1.0 - w) * u[i] + w * u[i + 1])
}

/// Doubles both grid resolutions until successive answers agree to [`REFINE_TOL`].
pub fn refine_until_converged(a: f64, b: f64, g: &dyn Fn(f64) -> f64, tau_end: f64, x0: f64) -> Result<f64> {
    let (mut nx, mut nt) = (400, 50);
    let mut prev = crank_nicolson_1d(a, b, g, tau_end, x0, HALF_WIDTH, nx, nt)?;
    for _ in 0..MAX_REFINEMENTS {
        nx *= 2;
        nt *= 2;
        let cur = crank_nicolson_1d(a, b, g, tau_end, x0, HALF_WIDTH, nx, nt)?;
        if (cur - prev).abs() < REFINE_TOL {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::numeric(format!(
        "grid refinement did not reach {REFINE_TOL:e} after {MAX_REFINEMENTS} doublings"
    )))
}

/// `u(t0, x0)` of the one-dimensional HJB instance with horizon `T − t0 = tau_end`.
pub fn hjb_reference(tau_end: f64, x0: f64) -> Result<f64> {
    refine_until_converged(2.0, 1.0, &hjb_terminal, tau_end, x0)
}

/// Monte Carlo of `2 ln E[√((1 + ‖x0 + 2W_T‖²)/2)]` in any dimension; the half-width
/// is three delta-method standard errors.
pub fn hjb_cole_hopf_mc(x0: &[f64], tau_end: f64, samples: u64, seed: u64) -> Result<EstimatorResult> {
    if samples < 2 || x0.is_empty() {
        return Err(Error::invalid("need a non-empty start point and at least two samples"));
    }
    let scale = 2.0 * tau_end.sqrt();
    let d = x0.len();
    let block = 4096u64;
    let blocks: Vec<(f64, f64)> = (0..samples.div_ceil(block))
        .into_par_iter()
        .map(|b| {
            let mut z = vec![0.0; d];
            let (mut s, mut s2) = (0.0, 0.0);
            for i in b * block..((b + 1) * block).min(samples) {
                CounterRng::new(seed, purpose::MONTE_CARLO, i, 0).fill_normal(&mut z);
                let r2: f64 = x0.iter().zip(&z).map(|(x, zi)| (x + scale * zi).powi(2)).sum();
                let w = ((1.0 + r2) / 2.0).sqrt();
                s += w;
                s2 += w * w;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = blocks.iter().fold((0.0, 0.0), |acc, b| (acc.0 + b.0, acc.1 + b.1));
    let n = samples as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    let se = (var / n).sqrt();
    Ok(EstimatorResult {
        value: 2.0 * mean.ln(),
        half_width: 3.0 * 2.0 * se / mean,
        cost: samples,
    })
}
