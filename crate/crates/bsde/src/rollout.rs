//! `û_{n+1} = û_n − f(t_n, X̂_n, û_n, Ẑ_n)Δt_n + Ẑ_n·ΔW_n` and the terminal mismatch loss.

use rayon::prelude::*;

use dbq_core::sde::PathBatch;
use dbq_core::{Error, Result};

use crate::model::{BsdeModel, StepNet};
use crate::problem::PdeProblem;

/// Paths per reduction chunk; sums run in path order inside and across chunks.
pub(crate) const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `û_{t_N}` per path.
    pub u_terminal: Vec<f64>,
    /// `X̂_{t_N}`, `d` entries per path.
    pub x_terminal: Vec<f64>,
}

/// `û_n` for `n = 0..=N` and `Ẑ_n` for `n = 0..N` of one path.
#[derive(Debug, Clone)]
pub(crate) struct PathTrace {
    pub u: Vec<f64>,
    pub z: Vec<f64>,
}

pub(crate) fn check_batch<N: StepNet>(model: &BsdeModel<N>, problem: &PdeProblem, batch: &PathBatch) -> Result<()> {
    if batch.batch == 0 {
        return Err(Error::invalid("batch must contain at least one path"));
    }
    if batch.steps != model.n_steps() || batch.d != model.d() || problem.d() != model.d() {
        return Err(Error::invalid(format!(
            "batch has {} steps in dimension {}, model expects {} steps in dimension {}",
            batch.steps,
            batch.d,
            model.n_steps(),
            model.d()
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn non_finite(path: usize, step: usize) -> Error {
    Error::numeric(format!("non-finite û on path {path} at step {step}"))
}

pub(crate) fn trace_path<N: StepNet>(
    model: &BsdeModel<N>,
    problem: &PdeProblem,
    batch: &PathBatch,
    p: usize,
) -> Result<PathTrace> {
    let n_steps = model.n_steps();
    let d = model.d();
    let mut u = Vec::with_capacity(n_steps + 1);
    let mut z = Vec::with_capacity(n_steps * d);
    let mut cur = model.u0;
    u.push(cur);
    for n in 0..n_steps {
        let x = batch.state(p, n);
        let zn = if n == 0 { model.z0.clone() } else { model.nets[n - 1].eval(x)? };
        cur = cur - (problem.f)(model.grid.times[n], x, cur, &zn) * model.grid.dt(n) + dot(&zn, batch.increment(p, n));
        if !cur.is_finite() {
            return Err(non_finite(p, n + 1));
        }
        u.push(cur);
        z.extend(zn);
    }
    Ok(PathTrace { u, z })
}

/// Runs `f` on every path in parallel and returns results in path order; the
/// first failing path (by index) wins.
pub(crate) fn per_path<T: Send>(batch: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let out: Vec<Result<T>> = (0..batch).into_par_iter().map(f).collect();
    out.into_iter().collect()
}

pub fn rollout<N: StepNet>(model: &BsdeModel<N>, problem: &PdeProblem, batch: &PathBatch) -> Result<Rollout> {
    check_batch(model, problem, batch)?;
    let traces = per_path(batch.batch, |p| trace_path(model, problem, batch, p))?;
    let n = model.n_steps();
    Ok(Rollout {
        u_terminal: traces.iter().map(|t| t.u[n]).collect(),
        x_terminal: (0..batch.batch).flat_map(|p| batch.state(p, n).to_vec()).collect(),
    })
}

/// `g(X̂_{t_N}) − û_{t_N}` per path.
pub fn residuals<N: StepNet>(model: &BsdeModel<N>, problem: &PdeProblem, batch: &PathBatch) -> Result<Vec<f64>> {
    let r = rollout(model, problem, batch)?;
    let d = model.d();
    Ok(r.u_terminal
        .iter()
        .enumerate()
        .map(|(p, u)| (problem.g)(&r.x_terminal[p * d..(p + 1) * d]) - u)
        .collect())
}

/// Mean with the summation order shared by every estimator: paths summed within
/// chunks of [`CHUNK`], chunk sums added in order, then scaled by `1/len`.
pub(crate) fn ordered_mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    let mut total = 0.0;
    let mut chunk = 0.0;
    for (i, x) in xs.enumerate() {
        chunk += x;
        if (i + 1) % CHUNK == 0 || i + 1 == n {
            total += chunk;
            chunk = 0.0;
        }
    }
    total * (1.0 / n as f64)
}

/// Mean of `|g(X̂_{t_N}) − û_{t_N}|²` over the batch.
pub fn loss_batch<N: StepNet>(model: &BsdeModel<N>, problem: &PdeProblem, batch: &PathBatch) -> Result<f64> {
    let r = residuals(model, problem, batch)?;
    Ok(ordered_mean(r.iter().map(|e| e * e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use crate::problem::{make_hjb, make_linear};
    use dbq_core::autodiff::{Activation, FeedForwardNet};
    use dbq_core::sde::simulate;

    fn constant_net(d: usize, c: &[f64]) -> FeedForwardNet {
        let mut net = FeedForwardNet::zeros(&[d, d], &[Activation::Identity]).unwrap();
        net.layers_mut()[0].biases.copy_from_slice(c);
        net
    }

    #[test]
    fn zero_nets_propagate_u0() {
        let c = vec![0.0; 2];
        let p = make_linear(c.clone(), vec![0.3, -0.1], 1.0).unwrap();
        let nets = (0..4).map(|_| constant_net(2, &c)).collect();
        let mut m = BsdeModel::from_nets(&p, 5, nets).unwrap();
        m.u0 = 0.75;
        let b = simulate(&p.sde, &m.grid, 10, 1, 0).unwrap();
        let r = rollout(&m, &p, &b).unwrap();
        assert!(r.u_terminal.iter().all(|&u| u == 0.75));
    }

    #[test]
    fn linear_case_has_zero_loss() {
        let c = vec![0.5, -1.25, 2.0];
        let x0 = vec![1.0, 0.5, -0.25];
        let p = make_linear(c.clone(), x0.clone(), 1.0).unwrap();
        let nets = (0..7).map(|_| constant_net(3, &c)).collect();
        let mut m = BsdeModel::from_nets(&p, 8, nets).unwrap();
        m.z0 = c.clone();
        m.u0 = dot(&c, &x0);
        let b = simulate(&p.sde, &m.grid, 32, 5, 0).unwrap();
        assert!(loss_batch(&m, &p, &b).unwrap() < 1e-28);
    }

    #[test]
    fn forced_offset_gives_unit_loss() {
        let c = vec![1.0];
        let p = make_linear(c.clone(), vec![0.0], 1.0).unwrap();
        let nets = (0..3).map(|_| constant_net(1, &c)).collect();
        let mut m = BsdeModel::from_nets(&p, 4, nets).unwrap();
        m.z0 = c;
        m.u0 = -1.0;
        let b = simulate(&p.sde, &m.grid, 16, 2, 0).unwrap();
        assert!((loss_batch(&m, &p, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recomputation_is_bit_identical() {
        let p = make_hjb(1, 1.0).unwrap();
        let m = BsdeModel::classical(&p, 20, &Architecture::default_for(1), 4).unwrap();
        let b = simulate(&p.sde, &m.grid, 64, 9, 3).unwrap();
        assert_eq!(rollout(&m, &p, &b).unwrap(), rollout(&m, &p, &b).unwrap());
    }

    #[test]
    fn mismatched_batch_rejected() {
        let p = make_hjb(2, 1.0).unwrap();
        let m = BsdeModel::classical(&p, 4, &Architecture::default_for(2), 4).unwrap();
        let other = BsdeModel::classical(&p, 5, &Architecture::default_for(2), 4).unwrap();
        let b = simulate(&p.sde, &other.grid, 4, 1, 0).unwrap();
        assert!(matches!(loss_batch(&m, &p, &b), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn overflow_reports_step() {
        let p = make_hjb(1, 1.0).unwrap();
        let mut m = BsdeModel::classical(&p, 3, &Architecture::default_for(1), 4).unwrap();
        m.z0 = vec![1e200];
        let b = simulate(&p.sde, &m.grid, 2, 1, 0).unwrap();
        match rollout(&m, &p, &b) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("step 1"), "{msg}"),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }
}
