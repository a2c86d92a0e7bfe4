//! Gradients of the batch loss with respect to `[u0, z0, nets]`.
//!
//! Backprop runs the adjoint `λ_n = λ_{n+1}(1 − f_u Δt_n)` from `λ_N = 2(û_N − g)/M`
//! with `∂L/∂Ẑ_n = λ_{n+1}(ΔW_n − f_z Δt_n)`. The forward gradient carries the
//! tangent of `û` along a random direction `v` and returns `(∇L·v)v`. Central
//! differences replay each path from the step that a parameter touches.

use rayon::prelude::*;

use dbq_core::autodiff::ParamVector;
use dbq_core::rng::{purpose, CounterRng};
use dbq_core::sde::PathBatch;
use dbq_core::{Error, Result};

use crate::model::{BsdeModel, StepNet};
use crate::problem::PdeProblem;
use crate::rollout::{check_batch, dot, non_finite, ordered_mean, per_path, trace_path, PathTrace, CHUNK};

#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Backprop,
    /// Average of `v_samples` forward gradients; `truncate` clamps each entry of `v` to `±3`.
    ForwardGradient { v_samples: usize, truncate: bool },
    /// Central differences with step `h`.
    Numerical { h: f64 },
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Backprop => "backprop",
            Estimator::ForwardGradient { .. } => "forward_gradient",
            Estimator::Numerical { .. } => "numerical",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Estimator::Backprop => Ok(()),
            Estimator::ForwardGradient { v_samples, .. } if v_samples == 0 => {
                Err(Error::config("forward gradient needs at least one v sample"))
            }
            Estimator::ForwardGradient { .. } => Ok(()),
            Estimator::Numerical { h } if !(h > 0.0 && h.is_finite()) => {
                Err(Error::config(format!("finite-difference step must be positive, got {h}")))
            }
            Estimator::Numerical { .. } => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    /// Batch loss at the current parameters.
    pub loss: f64,
    pub grad: ParamVector,
    pub warnings: Vec<String>,
}

/// `seed` and `iteration` key the random directions of the forward gradient.
pub fn estimate_gradient<N: StepNet>(
    model: &BsdeModel<N>,
    problem: &PdeProblem,
    batch: &PathBatch,
    estimator: &Estimator,
    seed: u64,
    iteration: u64,
) -> Result<GradientEstimate> {
    estimator.validate()?;
    match *estimator {
        Estimator::Backprop => {
            let (loss, grad) = backprop_gradient(model, problem, batch)?;
            Ok(GradientEstimate {
                loss,
                grad: ParamVector::new(grad),
                warnings: Vec::new(),
            })
        }
        Estimator::ForwardGradient { v_samples, truncate } => {
            let (loss, grad) = forward_gradient(model, problem, batch, v_samples, truncate, seed, iteration)?;
            Ok(GradientEstimate {
                loss,
                grad: ParamVector::new(grad),
                warnings: Vec::new(),
            })
        }
        Estimator::Numerical { h } => numerical_gradient(model, problem, batch, h),
    }
}

/// Sums per-path contributions chunk by chunk, always in path order.
fn ordered_accumulate(
    batch: usize,
    n_params: usize,
    path: impl Fn(usize, &mut [f64]) -> Result<f64> + Sync + Send,
) -> Result<(f64, Vec<f64>)> {
    let starts: Vec<usize> = (0..batch).step_by(CHUNK).collect();
    let chunks: Vec<Result<(f64, Vec<f64>)>> = starts
        .par_iter()
        .map(|&s| {
            let mut g = vec![0.0; n_params];
            let mut l = 0.0;
            for p in s..(s + CHUNK).min(batch) {
                l += path(p, &mut g)?;
            }
            Ok((l, g))
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    for c in chunks {
        let (l, g) = c?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss, grad))
}

/// Exact gradient of [`crate::rollout::loss_batch`] by reverse accumulation.
pub fn backprop_gradient<N: StepNet>(
    model: &BsdeModel<N>,
    problem: &PdeProblem,
    batch: &PathBatch,
) -> Result<(f64, Vec<f64>)> {
    check_batch(model, problem, batch)?;
    let n_steps = model.n_steps();
    let d = model.d();
    let scale = 1.0 / batch.batch as f64;
    let offsets: Vec<usize> = (0..model.nets.len()).map(|i| model.net_offset(i)).collect();
    let (loss, grad) = ordered_accumulate(batch.batch, model.n_params(), |p, grad| {
        let mut us = Vec::with_capacity(n_steps);
        let mut zs = Vec::with_capacity(n_steps);
        let mut caches = Vec::with_capacity(n_steps);
        let mut u = model.u0;
        for n in 0..n_steps {
            let x = batch.state(p, n);
            let (zn, cache) = if n == 0 {
                (model.z0.clone(), None)
            } else {
                let (o, c) = model.nets[n - 1].eval_cached(x)?;
                (o, Some(c))
            };
            us.push(u);
            u = u - (problem.f)(model.grid.times[n], x, u, &zn) * model.grid.dt(n) + dot(&zn, batch.increment(p, n));
            if !u.is_finite() {
                return Err(non_finite(p, n + 1));
            }
            zs.push(zn);
            caches.push(cache);
        }
        let r = u - (problem.g)(batch.state(p, n_steps));
        let mut lam = 2.0 * r * scale;
        let mut fz = vec![0.0; d];
        let mut dz = vec![0.0; d];
        for n in (0..n_steps).rev() {
            let t = model.grid.times[n];
            let dt = model.grid.dt(n);
            let x = batch.state(p, n);
            let fu = (problem.f_partials)(t, x, us[n], &zs[n], &mut fz);
            let dw = batch.increment(p, n);
            for i in 0..d {
                dz[i] = lam * (dw[i] - fz[i] * dt);
            }
            if n == 0 {
                for i in 0..d {
                    grad[1 + i] += dz[i];
                }
            } else {
                let net = &model.nets[n - 1];
                let off = offsets[n - 1];
                let cache = caches[n].as_ref().expect("cache recorded for every network step");
                net.backprop(cache, &dz, &mut grad[off..off + net.n_params()])?;
            }
            lam *= 1.0 - fu * dt;
        }
        grad[0] += lam;
        Ok(r * r)
    })?;
    Ok((loss * scale, grad))
}

/// Direction `v` with iid standard normal entries drawn from `(seed, directions, iteration, sample)`.
pub fn direction(n_params: usize, seed: u64, iteration: u64, sample: u64, truncate: bool) -> Vec<f64> {
    let mut v = vec![0.0; n_params];
    CounterRng::new(seed, purpose::DIRECTIONS, iteration, sample).fill_normal(&mut v);
    if truncate {
        for x in &mut v {
            *x = x.clamp(-3.0, 3.0);
        }
    }
    v
}

/// Returns `(L, ∇L·v)` from one forward-mode sweep over the batch.
pub fn directional_derivative<N: StepNet>(
    model: &BsdeModel<N>,
    problem: &PdeProblem,
    batch: &PathBatch,
    v: &[f64],
) -> Result<(f64, f64)> {
    check_batch(model, problem, batch)?;
    if v.len() != model.n_params() {
        return Err(Error::invalid(format!(
            "direction has length {}, model stores {}",
            v.len(),
            model.n_params()
        )));
    }
    let n_steps = model.n_steps();
    let d = model.d();
    let offsets: Vec<usize> = (0..model.nets.len()).map(|i| model.net_offset(i)).collect();
    let mut fz = vec![0.0; d];
    let mut sq = Vec::with_capacity(batch.batch);
    let mut deriv = 0.0;
    for p in 0..batch.batch {
        let mut u = model.u0;
        let mut du = v[0];
        for n in 0..n_steps {
            let x = batch.state(p, n);
            let t = model.grid.times[n];
            let dt = model.grid.dt(n);
            let (zn, dzn) = if n == 0 {
                (model.z0.clone(), v[1..1 + d].to_vec())
            } else {
                let net = &model.nets[n - 1];
                let off = offsets[n - 1];
                let dual = net.tangent(x, &v[off..off + net.n_params()])?;
                (dual.primal, dual.tangent)
            };
            let fu = (problem.f_partials)(t, x, u, &zn, &mut fz);
            let dw = batch.increment(p, n);
            du = du - (fu * du + dot(&fz, &dzn)) * dt + dot(&dzn, dw);
            u = u - (problem.f)(t, x, u, &zn) * dt + dot(&zn, dw);
            if !u.is_finite() {
                return Err(non_finite(p, n + 1));
            }
        }
        let r = u - (problem.g)(batch.state(p, n_steps));
        sq.push(r * r);
        deriv += 2.0 * r * du;
    }
    Ok((ordered_mean(sq.into_iter()), deriv / batch.batch as f64))
}

/// `(1/S)·Σ_s (∇L·v_s)v_s`; directions are evaluated in parallel and summed in order.
pub fn forward_gradient<N: StepNet>(
    model: &BsdeModel<N>,
    problem: &PdeProblem,
    batch: &PathBatch,
    v_samples: usize,
    truncate: bool,
    seed: u64,
    iteration: u64,
) -> Result<(f64, Vec<f64>)> {
    if v_samples == 0 {
        return Err(Error::config("forward gradient needs at least one v sample"));
    }
    let n = model.n_params();
    let results: Vec<Result<(f64, f64)>> = (0..v_samples as u64)
        .into_par_iter()
        .map(|s| directional_derivative(model, problem, batch, &direction(n, seed, iteration, s, truncate)))
        .collect();
    let mut grad = vec![0.0; n];
    let mut loss = 0.0;
    for (s, r) in results.into_iter().enumerate() {
        let (l, dd) = r?;
        if s == 0 {
            loss = l;
        }
        let v = direction(n, seed, iteration, s as u64, truncate);
        for (g, vi) in grad.iter_mut().zip(&v) {
            *g += dd * vi;
        }
    }
    let inv = 1.0 / v_samples as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((loss, grad))
}

/// `û_N` of path `p` replayed from step `start` with `û_start = u_start`; cached `Ẑ`
/// are reused except at step `start` when `z_start` is given.
fn replay(
    model_grid: &dbq_core::sde::TimeGrid,
    problem: &PdeProblem,
    batch: &PathBatch,
    trace: &PathTrace,
    p: usize,
    start: usize,
    u_start: f64,
    z_start: Option<&[f64]>,
) -> f64 {
    let d = batch.d;
    let mut u = u_start;
    for m in start..batch.steps {
        let z = match z_start {
            Some(z) if m == start => z,
            _ => &trace.z[m * d..(m + 1) * d],
        };
        let x = batch.state(p, m);
        u = u - (problem.f)(model_grid.times[m], x, u, z) * model_grid.dt(m) + dot(z, batch.increment(p, m));
    }
    u
}

/// Central differences `(L(θ+h e_j) − L(θ−h e_j)) / ((θ_j+h) − (θ_j−h))`.
/// Entries whose effective step rounds to zero are set to 0 and reported as warnings.
pub fn numerical_gradient<N: StepNet>(
    model: &BsdeModel<N>,
    problem: &PdeProblem,
    batch: &PathBatch,
    h: f64,
) -> Result<GradientEstimate> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::config(format!("finite-difference step must be positive, got {h}")));
    }
    check_batch(model, problem, batch)?;
    let n_steps = model.n_steps();
    let d = model.d();
    let m = batch.batch;
    let traces = per_path(m, |p| trace_path(model, problem, batch, p))?;
    let targets: Vec<f64> = (0..m).map(|p| (problem.g)(batch.state(p, n_steps))).collect();
    let base = ordered_mean(
        traces
            .iter()
            .zip(&targets)
            .map(|(t, g)| (t.u[n_steps] - g) * (t.u[n_steps] - g)),
    );
    let grid = &model.grid;
    let sq_sum = |uns: &mut dyn Iterator<Item = (usize, f64)>| -> f64 {
        uns.map(|(p, un)| (un - targets[p]) * (un - targets[p])).sum()
    };

    let mut warnings = Vec::new();
    let mut check = |name: String, plus: f64, minus: f64| -> Option<f64> {
        let denom = plus - minus;
        if denom == 0.0 {
            warnings.push(format!("{name}: step {h} vanishes at this magnitude, entry set to 0"));
            None
        } else {
            Some(denom)
        }
    };

    let mut head = vec![0.0; 1 + d];
    if let Some(den) = check("u0".into(), model.u0 + h, model.u0 - h) {
        let lp = sq_sum(&mut (0..m).map(|p| (p, replay(grid, problem, batch, &traces[p], p, 0, model.u0 + h, None))));
        let lm = sq_sum(&mut (0..m).map(|p| (p, replay(grid, problem, batch, &traces[p], p, 0, model.u0 - h, None))));
        head[0] = (lp - lm) / (m as f64 * den);
    }
    for i in 0..d {
        let (mut zp, mut zm) = (model.z0.clone(), model.z0.clone());
        zp[i] += h;
        zm[i] -= h;
        if let Some(den) = check(format!("z0[{i}]"), zp[i], zm[i]) {
            let lp = sq_sum(&mut (0..m).map(|p| (p, replay(grid, problem, batch, &traces[p], p, 0, model.u0, Some(&zp)))));
            let lm = sq_sum(&mut (0..m).map(|p| (p, replay(grid, problem, batch, &traces[p], p, 0, model.u0, Some(&zm)))));
            head[1 + i] = (lp - lm) / (m as f64 * den);
        }
    }

    type NetResult = Result<(Vec<f64>, Vec<usize>)>;
    let per_net: Vec<NetResult> = (0..model.nets.len())
        .into_par_iter()
        .map(|i| {
            let step = i + 1;
            let mut net = model.nets[i].clone();
            let k_count = net.n_params();
            let mut g = vec![0.0; k_count];
            let mut vanished = Vec::new();
            let loss_with = |net: &N| -> Result<f64> {
                let mut s = 0.0;
                for p in 0..m {
                    let z = net.eval(batch.state(p, step))?;
                    let un = replay(grid, problem, batch, &traces[p], p, step, traces[p].u[step], Some(&z));
                    s += (un - targets[p]) * (un - targets[p]);
                }
                Ok(s)
            };
            for k in 0..k_count {
                let orig = *net.param_mut(k);
                let (plus, minus) = (orig + h, orig - h);
                if plus - minus == 0.0 {
                    vanished.push(k);
                    continue;
                }
                *net.param_mut(k) = plus;
                let lp = loss_with(&net)?;
                *net.param_mut(k) = minus;
                let lm = loss_with(&net)?;
                *net.param_mut(k) = orig;
                g[k] = (lp - lm) / (m as f64 * (plus - minus));
            }
            Ok((g, vanished))
        })
        .collect();

    let mut grad = head;
    for (i, r) in per_net.into_iter().enumerate() {
        let (g, vanished) = r?;
        for k in vanished {
            warnings.push(format!("net {}[{k}]: step {h} vanishes at this magnitude, entry set to 0", i + 1));
        }
        grad.extend(g);
    }
    if let Some(j) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric(format!("finite-difference gradient entry {j} is not finite")));
    }
    Ok(GradientEstimate {
        loss: base,
        grad: ParamVector::new(grad),
        warnings,
    })
}

/// Elementwise clamp to `[−c, c]`; signs are preserved.
pub fn clip_gradient(grad: &mut [f64], c: f64) {
    for g in grad {
        *g = g.clamp(-c, c);
    }
}
