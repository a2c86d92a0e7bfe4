//! Brownian increments, Euler–Maruyama paths and Gaussian discretization.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, purpose, CounterRng};
use crate::stats::{linear_fit, normal_pdf};

/// `(t, x, out)`: writes `μ(t, x)` into `out` (length d).
pub type DriftFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// `(t, x, out)`: writes `σ(t, x)` row-major into `out` (length d²).
pub type DiffusionFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub struct SdeSpec {
    pub d: usize,
    pub x0: Vec<f64>,
    pub t0: f64,
    pub t_end: f64,
    pub drift: DriftFn,
    pub diffusion: DiffusionFn,
}

impl std::fmt::Debug for SdeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeSpec")
            .field("d", &self.d)
            .field("x0", &self.x0)
            .field("t0", &self.t0)
            .field("t_end", &self.t_end)
            .finish_non_exhaustive()
    }
}

impl SdeSpec {
    pub fn new(x0: Vec<f64>, t0: f64, t_end: f64, drift: DriftFn, diffusion: DiffusionFn) -> Result<Self> {
        if x0.is_empty() {
            return Err(Error::invalid("state dimension must be at least 1"));
        }
        if !(t_end > t0) {
            return Err(Error::invalid(format!("need T > t0, got t0={t0}, T={t_end}")));
        }
        Ok(Self {
            d: x0.len(),
            x0,
            t0,
            t_end,
            drift,
            diffusion,
        })
    }

    /// `dX = aX dt + bX dW` componentwise (diagonal noise).
    pub fn gbm(x0: Vec<f64>, t_end: f64, a: f64, b: f64) -> Result<Self> {
        let d = x0.len();
        Self::new(
            x0,
            0.0,
            t_end,
            Arc::new(move |_, x, out| {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = a * xi;
                }
            }),
            Arc::new(move |_, x, out| {
                out.fill(0.0);
                for i in 0..d {
                    out[i * d + i] = b * x[i];
                }
            }),
        )
    }

    /// Constant drift and constant scalar diffusion `σ = s·I`.
    pub fn constant(x0: Vec<f64>, t_end: f64, mu: f64, s: f64) -> Result<Self> {
        let d = x0.len();
        Self::new(
            x0,
            0.0,
            t_end,
            Arc::new(move |_, _, out| out.fill(mu)),
            Arc::new(move |_, _, out| {
                out.fill(0.0);
                for i in 0..d {
                    out[i * d + i] = s;
                }
            }),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub times: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(t0: f64, t_end: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("a time grid needs at least one step"));
        }
        if !(t_end >= t0) {
            return Err(Error::invalid("grid end precedes start"));
        }
        let h = (t_end - t0) / n as f64;
        let mut times: Vec<f64> = (0..=n).map(|i| t0 + i as f64 * h).collect();
        times[n] = t_end;
        Ok(Self { times })
    }

    /// Non-decreasing time points; zero-length steps are allowed.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("a time grid needs at least two points"));
        }
        if times.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::invalid("grid times must be non-decreasing"));
        }
        Ok(Self { times })
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dt(&self, n: usize) -> f64 {
        self.times[n + 1] - self.times[n]
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

/// Increments `[batch × N × d]` and states `[batch × (N+1) × d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub batch: usize,
    pub steps: usize,
    pub d: usize,
    pub increments: Vec<f64>,
    pub states: Vec<f64>,
}

impl PathBatch {
    pub fn increment(&self, path: usize, n: usize) -> &[f64] {
        let o = (path * self.steps + n) * self.d;
        &self.increments[o..o + self.d]
    }

    pub fn state(&self, path: usize, n: usize) -> &[f64] {
        let o = (path * (self.steps + 1) + n) * self.d;
        &self.states[o..o + self.d]
    }

    pub fn path_increments(&self, path: usize) -> &[f64] {
        let len = self.steps * self.d;
        &self.increments[path * len..(path + 1) * len]
    }

    pub fn path_states(&self, path: usize) -> &[f64] {
        let len = (self.steps + 1) * self.d;
        &self.states[path * len..(path + 1) * len]
    }
}

/// Brownian increments `ΔW ~ N(0, Δt_n)`; entry `(p, n, ·)` comes from the stream keyed
/// `(seed ⊕ stream, increments, p, n)`, so any split of the batch reproduces it.
pub fn sample_increments(grid: &TimeGrid, d: usize, batch: usize, seed: u64, stream: u64) -> Result<Vec<f64>> {
    if batch == 0 {
        return Err(Error::invalid("batch must be at least 1"));
    }
    let n = grid.steps();
    let s = derive_seed(seed, stream);
    let mut out = vec![0.0; batch * n * d];
    out.par_chunks_mut(n * d).enumerate().for_each(|(p, chunk)| {
        for step in 0..n {
            let sd = grid.dt(step).sqrt();
            let mut rng = CounterRng::new(s, purpose::INCREMENTS, p as u64, step as u64);
            for x in &mut chunk[step * d..(step + 1) * d] {
                *x = sd * rng.normal();
            }
        }
    });
    Ok(out)
}

/// Euler–Maruyama on one path; `states` has length `(N+1)·d`.
pub fn euler_path(spec: &SdeSpec, grid: &TimeGrid, incs: &[f64], states: &mut [f64]) -> std::result::Result<(), usize> {
    let d = spec.d;
    states[..d].copy_from_slice(&spec.x0);
    let mut mu = vec![0.0; d];
    let mut sig = vec![0.0; d * d];
    for n in 0..grid.steps() {
        let t = grid.times[n];
        let dt = grid.dt(n);
        let (head, tail) = states.split_at_mut((n + 1) * d);
        let x = &head[n * d..];
        let next = &mut tail[..d];
        (spec.drift)(t, x, &mut mu);
        (spec.diffusion)(t, x, &mut sig);
        let dw = &incs[n * d..(n + 1) * d];
        for i in 0..d {
            let row = &sig[i * d..(i + 1) * d];
            let noise: f64 = row.iter().zip(dw).map(|(a, b)| a * b).sum();
            next[i] = x[i] + mu[i] * dt + noise;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(n + 1);
        }
    }
    Ok(())
}

/// `X̂_{n+1} = X̂_n + μ(t_n, X̂_n)Δt_n + σ(t_n, X̂_n)ΔW_n` for every path.
pub fn euler_maruyama(spec: &SdeSpec, grid: &TimeGrid, increments: Vec<f64>, batch: usize) -> Result<PathBatch> {
    let n = grid.steps();
    let d = spec.d;
    if increments.len() != batch * n * d {
        return Err(Error::invalid(format!(
            "increments have length {}, expected {batch}×{n}×{d}",
            increments.len()
        )));
    }
    let mut states = vec![0.0; batch * (n + 1) * d];
    let failure = states
        .par_chunks_mut((n + 1) * d)
        .enumerate()
        .map(|(p, st)| {
            euler_path(spec, grid, &increments[p * n * d..(p + 1) * n * d], st)
                .err()
                .map(|step| (p, step))
        })
        .find_first(|r| r.is_some())
        .flatten();
    if let Some((p, step)) = failure {
        return Err(Error::numeric(format!("non-finite state on path {p} at step {step}")));
    }
    Ok(PathBatch {
        batch,
        steps: n,
        d,
        increments,
        states,
    })
}

/// Convenience: sample increments and run Euler–Maruyama.
pub fn simulate(spec: &SdeSpec, grid: &TimeGrid, batch: usize, seed: u64, stream: u64) -> Result<PathBatch> {
    let incs = sample_increments(grid, spec.d, batch, seed, stream)?;
    euler_maruyama(spec, grid, incs, batch)
}

#[derive(Debug, Clone)]
pub struct StrongOrderFit {
    pub dt: Vec<f64>,
    pub errors: Vec<f64>,
    pub r_hat: f64,
}

/// Fits the slope of `log E[sup_n ‖X̂_n − X(t_n)‖₂]` against `log Δt`.
///
/// `exact(t, W_t)` is the pathwise solution as a function of the Brownian value;
/// every grid in `steps` must divide the finest one so all grids share one path.
pub fn empirical_strong_order(
    spec: &SdeSpec,
    exact: &(dyn Fn(f64, &[f64]) -> Vec<f64> + Sync),
    steps: &[usize],
    batch: usize,
    seed: u64,
) -> Result<StrongOrderFit> {
    if steps.len() < 3 {
        return Err(Error::invalid("strong-order fit needs at least three grids"));
    }
    let fine = *steps.iter().max().unwrap();
    if steps.iter().any(|&s| s == 0 || fine % s != 0) {
        return Err(Error::invalid("every grid must divide the finest grid"));
    }
    let d = spec.d;
    let fine_grid = TimeGrid::uniform(spec.t0, spec.t_end, fine)?;
    let incs = sample_increments(&fine_grid, d, batch, seed, 0)?;
    let mut dts = Vec::new();
    let mut errs = Vec::new();
    for &s in steps {
        let grid = TimeGrid::uniform(spec.t0, spec.t_end, s)?;
        let ratio = fine / s;
        let total: f64 = (0..batch)
            .into_par_iter()
            .map(|p| {
                let f = &incs[p * fine * d..(p + 1) * fine * d];
                let mut coarse = vec![0.0; s * d];
                for (n, c) in coarse.chunks_mut(d).enumerate() {
                    for k in 0..ratio {
                        for (ci, fi) in c.iter_mut().zip(&f[(n * ratio + k) * d..(n * ratio + k + 1) * d]) {
                            *ci += fi;
                        }
                    }
                }
                let mut st = vec![0.0; (s + 1) * d];
                if euler_path(spec, &grid, &coarse, &mut st).is_err() {
                    return f64::INFINITY;
                }
                let mut w = vec![0.0; d];
                let mut worst: f64 = 0.0;
                for n in 0..=s {
                    if n > 0 {
                        for (wi, ci) in w.iter_mut().zip(&coarse[(n - 1) * d..n * d]) {
                            *wi += ci;
                        }
                    }
                    let x = exact(grid.times[n], &w);
                    let e: f64 = x
                        .iter()
                        .zip(&st[n * d..(n + 1) * d])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    worst = worst.max(e);
                }
                worst
            })
            .collect::<Vec<_>>()
            .iter()
            .sum();
        let mean = total / batch as f64;
        if !mean.is_finite() {
            return Err(Error::numeric(format!("non-finite strong error at {s} steps")));
        }
        dts.push((spec.t_end - spec.t0) / s as f64);
        errs.push(mean);
    }
    let lx: Vec<f64> = dts.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|v| v.ln()).collect();
    let (r_hat, _) = linear_fit(&lx, &ly);
    Ok(StrongOrderFit {
        dt: dts,
        errors: errs,
        r_hat,
    })
}

/// A probability table on a uniform grid of `2^n_bits` points.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedDistribution {
    pub points: Vec<f64>,
    pub probs: Vec<f64>,
    pub n_bits: usize,
    /// Probability mass of the continuous law outside the grid range.
    pub tail_mass: f64,
}

impl DiscretizedDistribution {
    pub fn new(points: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let n = points.len();
        if n == 0 || !n.is_power_of_two() || probs.len() != n {
            return Err(Error::invalid("distribution needs a power-of-two number of points"));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid("probabilities must be non-negative"));
        }
        Ok(Self {
            points,
            probs,
            n_bits: n.trailing_zeros() as usize,
            tail_mass: 0.0,
        })
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().zip(&self.probs).map(|(x, p)| x * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.points.iter().zip(&self.probs).map(|(x, p)| p * (x - m) * (x - m)).sum()
    }

    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().zip(&self.probs).map(|(&x, p)| p * f(x)).sum()
    }
}

/// Two-sided standard normal mass beyond ±3.
pub const THREE_SIGMA_TAIL: f64 = 0.002_699_796_063_260_2;

/// `N(0, Δt)` restricted to `[−3√Δt, 3√Δt]` on `2^n_bits` equally spaced nodes
/// (endpoints included), weights from the density at each node, renormalized.
pub fn discretize_gaussian(n_bits: usize, dt: f64) -> Result<DiscretizedDistribution> {
    if n_bits == 0 || n_bits > 30 {
        return Err(Error::invalid("n_bits must be in 1..=30"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("variance must be positive"));
    }
    let m = 1usize << n_bits;
    let s = dt.sqrt();
    let h = 6.0 / (m - 1) as f64;
    let points: Vec<f64> = (0..m).map(|i| s * (-3.0 + i as f64 * h)).collect();
    let mut probs: Vec<f64> = (0..m).map(|i| normal_pdf(-3.0 + i as f64 * h) * h).collect();
    let z: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= z;
    }
    // Symmetrize so the grid mean is zero to rounding.
    for i in 0..m / 2 {
        let avg = 0.5 * (probs[i] + probs[m - 1 - i]);
        probs[i] = avg;
        probs[m - 1 - i] = avg;
    }
    Ok(DiscretizedDistribution {
        points,
        probs,
        n_bits,
        tail_mass: THREE_SIGMA_TAIL,
    })
}

const DUMP_MAGIC: &[u8; 8] = b"DBQPATH1";

/// Binary dump: magic, then little-endian u64 header `(batch, N, d, seed)`,
/// then increments and states as little-endian f64.
pub fn write_path_dump<W: Write>(paths: &PathBatch, seed: u64, mut w: W) -> Result<()> {
    w.write_all(DUMP_MAGIC)?;
    for v in [paths.batch as u64, paths.steps as u64, paths.d as u64, seed] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in paths.increments.iter().chain(&paths.states) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_path_dump<R: Read>(mut r: R) -> Result<(PathBatch, u64)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::invalid("not a path dump"));
    }
    let mut word = [0u8; 8];
    let mut header = [0u64; 4];
    for h in &mut header {
        r.read_exact(&mut word)?;
        *h = u64::from_le_bytes(word);
    }
    let [batch, steps, d, seed] = header.map(|v| v as usize);
    let mut read_vec = |len: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut word)?;
            out.push(f64::from_le_bytes(word));
        }
        Ok(out)
    };
    let increments = read_vec(batch * steps * d)?;
    let states = read_vec(batch * (steps + 1) * d)?;
    Ok((
        PathBatch {
            batch,
            steps,
            d,
            increments,
            states,
        },
        seed as u64,
    ))
}

pub fn save_path_dump(paths: &PathBatch, seed: u64, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_path_dump(paths, seed, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_path_dump(path: impl AsRef<Path>) -> Result<(PathBatch, u64)> {
    read_path_dump(std::io::BufReader::new(std::fs::File::open(path)?))
}
