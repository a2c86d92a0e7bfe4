//! Forward- and reverse-mode differentiation of dense feedforward networks.
//!
//! Gradients are always laid out like [`ParamVector`]: layer by layer, the
//! row-major weight matrix followed by the bias vector.

mod checkpoint;
mod dual;
mod net;
mod tape;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use dual::DualVector;
pub use net::{Activation, FeedForwardNet, ForwardCache, Layer, ParamVector};
pub use tape::{tape_gradient, Node, OpKind, Tape, Var};

pub(crate) use net::dot;

use crate::error::{Error, Result};

/// A scalar cost of the network output.
pub trait OutputLoss: Sync {
    fn value(&self, y: &[f64]) -> f64;
    /// Writes `∂C/∂y` into `out`.
    fn gradient(&self, y: &[f64], out: &mut [f64]);
}

/// `C = Σ y_i`; the identity cost for a scalar output.
#[derive(Debug, Clone, Copy, Default)]
pub struct SumOutput;

impl OutputLoss for SumOutput {
    fn value(&self, y: &[f64]) -> f64 {
        y.iter().sum()
    }
    fn gradient(&self, _y: &[f64], out: &mut [f64]) {
        out.fill(1.0);
    }
}

/// `C = c · y` for fixed upstream sensitivities `c`.
#[derive(Debug, Clone)]
pub struct LinearOutput(pub Vec<f64>);

impl OutputLoss for LinearOutput {
    fn value(&self, y: &[f64]) -> f64 {
        dot(&self.0, y)
    }
    fn gradient(&self, _y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// `C = Σ (y_i − t_i)²`.
#[derive(Debug, Clone)]
pub struct SquaredError(pub Vec<f64>);

impl OutputLoss for SquaredError {
    fn value(&self, y: &[f64]) -> f64 {
        y.iter().zip(&self.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }
    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(y).zip(&self.0) {
            *o = 2.0 * (a - b);
        }
    }
}

pub fn forward_eval(net: &FeedForwardNet, x: &[f64]) -> Result<Vec<f64>> {
    net.forward(x)
}

/// `∇_θ C` by the layer-wise δ recursion.
pub fn reverse_gradient(net: &FeedForwardNet, x: &[f64], loss: &dyn OutputLoss) -> Result<ParamVector> {
    let cache = net.forward_cached(x)?;
    let mut up = vec![0.0; net.output_dim()];
    loss.gradient(cache.output(), &mut up);
    let mut g = vec![0.0; net.n_params()];
    net.backward(&cache, &up, &mut g);
    Ok(ParamVector::new(g))
}

/// Returns `(C, ∇_θ C · v)` from a single forward pass with dual numbers.
pub fn forward_directional(
    net: &FeedForwardNet,
    x: &[f64],
    v: &ParamVector,
    loss: &dyn OutputLoss,
) -> Result<(f64, f64)> {
    let dx = vec![0.0; x.len()];
    let out = net.jvp(x, &dx, v.as_slice())?;
    let mut up = vec![0.0; out.len()];
    loss.gradient(&out.primal, &mut up);
    Ok((loss.value(&out.primal), dot(&up, &out.tangent)))
}

/// `Σ_{l=1}^{L-1} n_l (n_{l+1} + 1)`: one bias counted per source neuron.
pub fn param_count(layer_sizes: &[usize]) -> Result<usize> {
    if layer_sizes.len() < 2 {
        return Err(Error::invalid("param_count needs at least two layer sizes"));
    }
    Ok(layer_sizes.windows(2).map(|w| w[0] * (w[1] + 1)).sum())
}

/// `Σ n_{l+1} (n_l + 1)`: one bias per destination neuron, as stored.
pub fn stored_param_count(layer_sizes: &[usize]) -> Result<usize> {
    if layer_sizes.len() < 2 {
        return Err(Error::invalid("param_count needs at least two layer sizes"));
    }
    Ok(layer_sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum())
}

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITERS: usize = 10_000;

/// Largest singular value of a row-major `rows × cols` matrix by power iteration on `WᵀW`.
pub fn spectral_norm(w: &[f64], rows: usize, cols: usize) -> Result<f64> {
    if w.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let mut v: Vec<f64> = (0..cols).map(|j| 1.0 + 0.1 * ((j * 7 + 3) % 11) as f64).collect();
    normalize(&mut v);
    let mut u = vec![0.0; rows];
    let mut prev = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = dot(&w[i * cols..(i + 1) * cols], &v);
        }
        let mut next = vec![0.0; cols];
        for (i, &ui) in u.iter().enumerate() {
            for (n, &wij) in next.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
                *n += wij * ui;
            }
        }
        let lambda = normalize(&mut next);
        if lambda == 0.0 {
            // Start vector fell in the null space; restart along a basis vector.
            v = vec![0.0; cols];
            let j = (0..cols)
                .max_by(|&a, &b| col_norm(w, rows, cols, a).total_cmp(&col_norm(w, rows, cols, b)))
                .unwrap();
            v[j] = 1.0;
            continue;
        }
        v = next;
        let sigma = lambda.sqrt();
        if (sigma - prev).abs() <= POWER_TOL * sigma {
            return Ok(sigma);
        }
        prev = sigma;
    }
    Err(Error::numeric(format!(
        "power iteration did not converge in {POWER_MAX_ITERS} steps"
    )))
}

fn col_norm(w: &[f64], rows: usize, cols: usize, j: usize) -> f64 {
    (0..rows).map(|i| w[i * cols + j].powi(2)).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Product over layers of `σ_max(W_l) · Lip(f_l)`, in the unsquared convention.
/// The squared-distance convention uses the square of this value.
pub fn lipschitz_bound(net: &FeedForwardNet) -> Result<f64> {
    let mut bound = 1.0;
    for l in net.layers() {
        bound *= spectral_norm(&l.weights, l.rows, l.cols)? * l.activation.lipschitz();
    }
    Ok(bound)
}

/// `θ ← θ − η · grad`.
pub fn apply_sgd(net: &FeedForwardNet, grad: &ParamVector, eta: f64) -> Result<FeedForwardNet> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be finite and non-negative, got {eta}")));
    }
    if grad.len() != net.n_params() {
        return Err(Error::invalid("gradient length differs from parameter count"));
    }
    let mut p = net.params();
    sgd_step(&mut p.values, grad.as_slice(), eta);
    let mut out = net.clone();
    out.set_params(&p.values)?;
    Ok(out)
}

/// In-place `θ ← θ − η · grad` on flat slices.
pub fn sgd_step(theta: &mut [f64], grad: &[f64], eta: f64) {
    for (t, g) in theta.iter_mut().zip(grad) {
        *t -= eta * g;
    }
}
