//! Stacked per-step networks: `u0`, `z0` and one network for each of the steps `1..N−1`.
//!
//! Flat parameter layout: `[u0, z0 (d entries), net_1, …, net_{N−1}]`.

use std::fs;
use std::io::Write;
use std::path::Path;

use dbq_core::autodiff::{load_checkpoint, save_checkpoint, Activation, DualVector, FeedForwardNet, ForwardCache};
use dbq_core::rng::{purpose, CounterRng};
use dbq_core::sde::TimeGrid;
use dbq_core::{Error, Result};

use crate::problem::PdeProblem;

/// A differentiable map `ℝ^d → ℝ^d` usable as the `σᵀ∇u` network of one step.
pub trait StepNet: Clone + Send + Sync {
    type Cache: Send;

    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn n_params(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, p: &[f64]) -> Result<()>;
    fn param_mut(&mut self, k: usize) -> &mut f64;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn eval_cached(&self, x: &[f64]) -> Result<(Vec<f64>, Self::Cache)>;
    /// Adds `∂C/∂θ` into `grad` given `upstream = ∂C/∂out`; returns `∂C/∂x`.
    fn backprop(&self, cache: &Self::Cache, upstream: &[f64], grad: &mut [f64]) -> Result<Vec<f64>>;
    /// Output and its tangent along the parameter direction `dtheta` (input held fixed).
    fn tangent(&self, x: &[f64], dtheta: &[f64]) -> Result<DualVector>;
}

impl StepNet for FeedForwardNet {
    type Cache = ForwardCache;

    fn input_dim(&self) -> usize {
        FeedForwardNet::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        FeedForwardNet::output_dim(self)
    }

    fn n_params(&self) -> usize {
        FeedForwardNet::n_params(self)
    }

    fn params(&self) -> Vec<f64> {
        FeedForwardNet::params(self).values
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        FeedForwardNet::set_params(self, p)
    }

    fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for l in self.layers_mut() {
            let nw = l.weights.len();
            if k < nw {
                return &mut l.weights[k];
            }
            k -= nw;
            if k < l.biases.len() {
                return &mut l.biases[k];
            }
            k -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x)
    }

    fn eval_cached(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let c = self.forward_cached(x)?;
        Ok((c.output().to_vec(), c))
    }

    fn backprop(&self, cache: &ForwardCache, upstream: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() || grad.len() != self.n_params() {
            return Err(Error::invalid("upstream or gradient buffer has the wrong length"));
        }
        Ok(self.backward(cache, upstream, grad))
    }

    fn tangent(&self, x: &[f64], dtheta: &[f64]) -> Result<DualVector> {
        self.jvp(x, &vec![0.0; x.len()], dtheta)
    }
}

/// Hidden widths `10/15/20` at `d = 5/10/20` give 225/565/1260 parameters per network.
pub fn default_width(d: usize) -> usize {
    match d {
        5 => 10,
        10 => 15,
        20 => 20,
        _ => d + 10,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl Architecture {
    /// `[d, w, w, d]`, relu hidden, identity output.
    pub fn default_for(d: usize) -> Self {
        let w = default_width(d);
        Self {
            hidden: vec![w, w],
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        }
    }

    pub fn layer_sizes(&self, d: usize) -> Vec<usize> {
        let mut s = vec![d];
        s.extend(&self.hidden);
        s.push(d);
        s
    }

    pub fn activations(&self) -> Vec<Activation> {
        let mut a = vec![self.hidden_activation; self.hidden.len()];
        a.push(self.output_activation);
        a
    }

    pub fn params_per_net(&self, d: usize) -> usize {
        self.layer_sizes(d).windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsdeModel<N: StepNet = FeedForwardNet> {
    pub u0: f64,
    /// `σᵀ∇u` at `t0`.
    pub z0: Vec<f64>,
    /// `nets[i]` serves step `i + 1`.
    pub nets: Vec<N>,
    pub grid: TimeGrid,
}

impl<N: StepNet> BsdeModel<N> {
    /// `u0 = 0`, `z0 = 0` and the given per-step networks.
    pub fn from_nets(problem: &PdeProblem, n_steps: usize, nets: Vec<N>) -> Result<Self> {
        let d = problem.d();
        if n_steps == 0 {
            return Err(Error::invalid("need at least one time step"));
        }
        if nets.len() != n_steps - 1 {
            return Err(Error::invalid(format!(
                "{} steps need {} networks, got {}",
                n_steps,
                n_steps - 1,
                nets.len()
            )));
        }
        if nets.iter().any(|n| n.input_dim() != d || n.output_dim() != d) {
            return Err(Error::invalid(format!("every network must map ℝ^{d} to ℝ^{d}")));
        }
        if nets.windows(2).any(|w| w[0].n_params() != w[1].n_params()) {
            return Err(Error::invalid("all step networks must share one architecture"));
        }
        Ok(Self {
            u0: 0.0,
            z0: vec![0.0; d],
            nets,
            grid: TimeGrid::uniform(problem.t0(), problem.t_end(), n_steps)?,
        })
    }

    pub fn d(&self) -> usize {
        self.z0.len()
    }

    pub fn n_steps(&self) -> usize {
        self.grid.steps()
    }

    /// `1 + d + Σ` per-network counts.
    pub fn n_params(&self) -> usize {
        1 + self.d() + self.nets.iter().map(StepNet::n_params).sum::<usize>()
    }

    /// Offset of `nets[i]` in the flat layout.
    pub fn net_offset(&self, i: usize) -> usize {
        1 + self.d() + self.nets[..i].iter().map(StepNet::n_params).sum::<usize>()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.push(self.u0);
        p.extend_from_slice(&self.z0);
        for n in &self.nets {
            p.extend(n.params());
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "parameter vector has length {}, model stores {}",
                p.len(),
                self.n_params()
            )));
        }
        let d = self.d();
        self.u0 = p[0];
        self.z0.copy_from_slice(&p[1..1 + d]);
        let mut off = 1 + d;
        for n in &mut self.nets {
            let k = n.n_params();
            n.set_params(&p[off..off + k])?;
            off += k;
        }
        Ok(())
    }
}

impl BsdeModel<FeedForwardNet> {
    /// Glorot networks; `nets[i]` draws from the stream `(seed, init, i)`.
    pub fn classical(problem: &PdeProblem, n_steps: usize, arch: &Architecture, seed: u64) -> Result<Self> {
        let d = problem.d();
        let sizes = arch.layer_sizes(d);
        let acts = arch.activations();
        let nets = (0..n_steps.saturating_sub(1))
            .map(|i| {
                let mut rng = CounterRng::new(seed, purpose::INIT, i as u64, 0);
                FeedForwardNet::glorot(&sizes, &acts, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_nets(problem, n_steps, nets)
    }

    /// Writes `model.txt` plus one network checkpoint per step into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut buf = Vec::new();
        writeln!(buf, "dbq-bsde 1")?;
        let times: Vec<String> = self.grid.times.iter().map(|t| format!("{t:?}")).collect();
        writeln!(buf, "times {}", times.join(" "))?;
        writeln!(buf, "u0 {:?}", self.u0)?;
        let z0: Vec<String> = self.z0.iter().map(|z| format!("{z:?}")).collect();
        writeln!(buf, "z0 {}", z0.join(" "))?;
        writeln!(buf, "nets {}", self.nets.len())?;
        fs::write(dir.join("model.txt"), buf)?;
        for (i, n) in self.nets.iter().enumerate() {
            save_checkpoint(n, dir.join(format!("net_{i:04}.ckpt")))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join("model.txt"))?;
        let mut lines = text.lines();
        if lines.next() != Some("dbq-bsde 1") {
            return Err(Error::invalid("unsupported model header"));
        }
        let mut field = |key: &str| -> Result<Vec<f64>> {
            let line = lines
                .next()
                .ok_or_else(|| Error::invalid(format!("model file truncated before `{key}`")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::invalid(format!("expected `{key}` line, found `{line}`")));
            }
            parts
                .map(|s| s.parse::<f64>().map_err(|e| Error::invalid(format!("bad `{key}` value `{s}`: {e}"))))
                .collect()
        };
        let times = field("times")?;
        let u0 = field("u0")?;
        let z0 = field("z0")?;
        let count = field("nets")?;
        if u0.len() != 1 || count.len() != 1 || count[0] < 0.0 || count[0].fract() != 0.0 {
            return Err(Error::invalid("malformed model file"));
        }
        let grid = TimeGrid::from_times(times)?;
        let nets = (0..count[0] as usize)
            .map(|i| load_checkpoint(dir.join(format!("net_{i:04}.ckpt"))))
            .collect::<Result<Vec<_>>>()?;
        if nets.len() + 1 != grid.steps() {
            return Err(Error::invalid("network count does not match the time grid"));
        }
        if nets.iter().any(|n| n.input_dim() != z0.len() || n.output_dim() != z0.len()) {
            return Err(Error::invalid("network dimensions do not match z0"));
        }
        Ok(Self {
            u0: u0[0],
            z0,
            nets,
            grid,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::make_hjb;

    #[test]
    fn default_widths_hit_fixture_totals() {
        for (d, total) in [(5, 225), (10, 565), (20, 1260)] {
            assert_eq!(Architecture::default_for(d).params_per_net(d), total);
        }
        assert_eq!(Architecture::default_for(3).hidden, vec![13, 13]);
    }

    #[test]
    fn parameter_count_and_round_trip() {
        let p = make_hjb(3, 1.0).unwrap();
        let arch = Architecture::default_for(3);
        let mut m = BsdeModel::classical(&p, 5, &arch, 7).unwrap();
        assert_eq!(m.n_params(), 1 + 3 + 4 * arch.params_per_net(3));
        assert_eq!(m.u0, 0.0);
        assert_eq!(m.z0, vec![0.0; 3]);
        let mut theta = m.params();
        theta[0] = 1.5;
        theta[2] = -0.25;
        let last = theta.len() - 1;
        theta[last] = 3.0;
        m.set_params(&theta).unwrap();
        assert_eq!(m.params(), theta);
        assert_eq!(m.u0, 1.5);
        assert_eq!(m.z0[1], -0.25);
        assert_eq!(m.net_offset(4 - 1) + arch.params_per_net(3), m.n_params());
        assert!(m.set_params(&theta[1..]).is_err());
    }

    #[test]
    fn param_mut_follows_flat_layout() {
        let mut rng = CounterRng::new(1, purpose::TEST, 0, 0);
        let mut net = FeedForwardNet::glorot(&[2, 3, 2], &[Activation::Tanh, Activation::Identity], &mut rng).unwrap();
        let p = StepNet::params(&net);
        for k in 0..p.len() {
            assert_eq!(*net.param_mut(k), p[k]);
        }
        *net.param_mut(10) = 42.0;
        assert_eq!(StepNet::params(&net)[10], 42.0);
    }

    #[test]
    fn save_load_is_byte_stable() {
        let p = make_hjb(2, 1.0).unwrap();
        let mut m = BsdeModel::classical(&p, 4, &Architecture::default_for(2), 3).unwrap();
        m.u0 = 0.1 + 0.2;
        m.z0 = vec![1.0 / 3.0, -2.5e-17];
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        m.save(a.path()).unwrap();
        let back = BsdeModel::load(a.path()).unwrap();
        assert_eq!(back, m);
        back.save(b.path()).unwrap();
        for f in ["model.txt", "net_0000.ckpt", "net_0002.ckpt"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
    }
}
