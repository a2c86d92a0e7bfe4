//! Hybrid quantum-classical step networks: classical pre-layers produce embedding
//! angles, a hardware-efficient ansatz turns them into `⟨Z_i⟩`, and classical
//! post-layers map those to the output.
//!
//! Flat parameter layout: `[pre, θ, post]`.

use dbq_core::autodiff::{Activation, DualVector, FeedForwardNet, ForwardCache, ParamVector};
use dbq_core::rng::{purpose, CounterRng};
use dbq_core::{Error, Result};
use dbq_qsim::hea::HeaCircuit;

use crate::model::{BsdeModel, StepNet};
use crate::problem::PdeProblem;

/// Largest PQC-only model simulated.
pub const PQC_ONLY_MAX_D: usize = 6;
/// Default evolution time of the entangled initial state.
pub const DEFAULT_ENTANGLING_TIME: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct HybridNet {
    pub pre: Option<FeedForwardNet>,
    pub circuit: HeaCircuit,
    /// `θ[k·n + i]` rotates qubit `i` in repetition `k`.
    pub theta: Vec<f64>,
    pub post: Option<FeedForwardNet>,
    /// Replace the circuit by the identity map.
    pub bypass: bool,
}

/// Shift-rule Jacobian columns, indexed by parameter then output.
type Jacobians = (Vec<Vec<f64>>, Vec<Vec<f64>>);

#[derive(Debug, Clone)]
pub struct HybridCache {
    pre: Option<ForwardCache>,
    jac: Option<Jacobians>,
    post: Option<ForwardCache>,
}

impl HybridNet {
    pub fn new(
        pre: Option<FeedForwardNet>,
        circuit: HeaCircuit,
        theta: Vec<f64>,
        post: Option<FeedForwardNet>,
        bypass: bool,
    ) -> Result<Self> {
        let n = circuit.n_qubits();
        if theta.len() != circuit.n_params() {
            return Err(Error::invalid(format!(
                "circuit has {} variational angles, got {}",
                circuit.n_params(),
                theta.len()
            )));
        }
        if pre.as_ref().is_some_and(|p| p.output_dim() != n) {
            return Err(Error::invalid(format!("pre-layers must emit {n} embedding angles")));
        }
        if post.as_ref().is_some_and(|p| p.input_dim() != n) {
            return Err(Error::invalid(format!("post-layers must accept {n} expectation values")));
        }
        Ok(Self {
            pre,
            circuit,
            theta,
            post,
            bypass,
        })
    }

    fn pre_params(&self) -> usize {
        self.pre.as_ref().map_or(0, FeedForwardNet::n_params)
    }

    fn post_params(&self) -> usize {
        self.post.as_ref().map_or(0, FeedForwardNet::n_params)
    }

    pub fn n_variational(&self) -> usize {
        self.theta.len()
    }

    pub fn n_classical(&self) -> usize {
        self.pre_params() + self.post_params()
    }

    /// The network with the circuit removed; equal to a bypassed hybrid.
    pub fn classical_equivalent(&self) -> Result<FeedForwardNet> {
        let parts: Vec<&FeedForwardNet> = self.pre.iter().chain(self.post.iter()).collect();
        if parts.is_empty() {
            return Err(Error::invalid("a circuit without classical layers has no classical equivalent"));
        }
        let mut sizes = parts[0].layer_sizes().to_vec();
        let mut acts = Vec::new();
        let mut params = Vec::new();
        for (i, p) in parts.iter().enumerate() {
            if i > 0 {
                sizes.extend_from_slice(&p.layer_sizes()[1..]);
            }
            acts.extend(p.activations());
            params.extend(p.params().values);
        }
        FeedForwardNet::from_params(&sizes, &acts, &ParamVector::new(params))
    }

    fn circuit_out(&self, z: &[f64]) -> Result<Vec<f64>> {
        if self.bypass {
            Ok(z.to_vec())
        } else {
            self.circuit.expectations(z, &self.theta)
        }
    }
}

impl StepNet for HybridNet {
    type Cache = HybridCache;

    fn input_dim(&self) -> usize {
        self.pre.as_ref().map_or(self.circuit.n_qubits(), FeedForwardNet::input_dim)
    }

    fn output_dim(&self) -> usize {
        self.post.as_ref().map_or(self.circuit.n_qubits(), FeedForwardNet::output_dim)
    }

    fn n_params(&self) -> usize {
        self.n_classical() + self.n_variational()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(StepNet::n_params(self));
        if let Some(pre) = &self.pre {
            p.extend(pre.params().values);
        }
        p.extend_from_slice(&self.theta);
        if let Some(post) = &self.post {
            p.extend(post.params().values);
        }
        p
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != StepNet::n_params(self) {
            return Err(Error::invalid(format!(
                "parameter vector has length {}, hybrid network stores {}",
                p.len(),
                StepNet::n_params(self)
            )));
        }
        let a = self.pre_params();
        let b = a + self.theta.len();
        if let Some(pre) = &mut self.pre {
            pre.set_params(&p[..a])?;
        }
        self.theta.copy_from_slice(&p[a..b]);
        if let Some(post) = &mut self.post {
            post.set_params(&p[b..])?;
        }
        Ok(())
    }

    fn param_mut(&mut self, k: usize) -> &mut f64 {
        let a = self.pre_params();
        let b = a + self.theta.len();
        if k < a {
            self.pre.as_mut().expect("index inside pre-layers").param_mut(k)
        } else if k < b {
            &mut self.theta[k - a]
        } else {
            self.post.as_mut().expect("index inside post-layers").param_mut(k - b)
        }
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = match &self.pre {
            Some(pre) => pre.forward(x)?,
            None => {
                if x.len() != self.circuit.n_qubits() {
                    return Err(Error::invalid("input width differs from the qubit count"));
                }
                x.to_vec()
            }
        };
        let e = self.circuit_out(&z)?;
        match &self.post {
            Some(post) => post.forward(&e),
            None => Ok(e),
        }
    }

    fn eval_cached(&self, x: &[f64]) -> Result<(Vec<f64>, HybridCache)> {
        let (z, pre) = match &self.pre {
            Some(p) => {
                let c = p.forward_cached(x)?;
                (c.output().to_vec(), Some(c))
            }
            None => {
                if x.len() != self.circuit.n_qubits() {
                    return Err(Error::invalid("input width differs from the qubit count"));
                }
                (x.to_vec(), None)
            }
        };
        let e = self.circuit_out(&z)?;
        let jac = if self.bypass {
            None
        } else {
            Some(self.circuit.jacobians(&z, &self.theta)?)
        };
        let (out, post) = match &self.post {
            Some(p) => {
                let c = p.forward_cached(&e)?;
                (c.output().to_vec(), Some(c))
            }
            None => (e, None),
        };
        Ok((out, HybridCache { pre, jac, post }))
    }

    fn backprop(&self, cache: &HybridCache, upstream: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() || grad.len() != StepNet::n_params(self) {
            return Err(Error::invalid("upstream or gradient buffer has the wrong length"));
        }
        let a = self.pre_params();
        let b = a + self.theta.len();
        let (g_pre, rest) = grad.split_at_mut(a);
        let (g_theta, g_post) = rest.split_at_mut(b - a);
        let de = match (&self.post, &cache.post) {
            (Some(p), Some(c)) => p.backward(c, upstream, g_post),
            _ => upstream.to_vec(),
        };
        let dz = match &cache.jac {
            None => de,
            Some((jt, jz)) => {
                for (g, col) in g_theta.iter_mut().zip(jt) {
                    *g += col.iter().zip(&de).map(|(c, d)| c * d).sum::<f64>();
                }
                jz.iter().map(|col| col.iter().zip(&de).map(|(c, d)| c * d).sum()).collect()
            }
        };
        Ok(match (&self.pre, &cache.pre) {
            (Some(p), Some(c)) => p.backward(c, &dz, g_pre),
            _ => dz,
        })
    }

    fn tangent(&self, x: &[f64], dtheta: &[f64]) -> Result<DualVector> {
        if dtheta.len() != StepNet::n_params(self) {
            return Err(Error::invalid("direction length differs from the parameter count"));
        }
        let a = self.pre_params();
        let b = a + self.theta.len();
        let (z, dz) = match &self.pre {
            Some(p) => {
                let d = p.jvp(x, &vec![0.0; x.len()], &dtheta[..a])?;
                (d.primal, d.tangent)
            }
            None => {
                if x.len() != self.circuit.n_qubits() {
                    return Err(Error::invalid("input width differs from the qubit count"));
                }
                (x.to_vec(), vec![0.0; x.len()])
            }
        };
        let (e, de) = if self.bypass {
            (z, dz)
        } else {
            let e = self.circuit.expectations(&z, &self.theta)?;
            let (jt, jz) = self.circuit.jacobians(&z, &self.theta)?;
            let mut de = vec![0.0; e.len()];
            for (col, s) in jt.iter().zip(&dtheta[a..b]).chain(jz.iter().zip(&dz)) {
                for (o, c) in de.iter_mut().zip(col) {
                    *o += c * s;
                }
            }
            (e, de)
        };
        match &self.post {
            Some(p) => p.jvp(&e, &de, &dtheta[b..]),
            None => DualVector::new(e, de),
        }
    }
}

pub fn hybrid_forward(net: &HybridNet, x: &[f64]) -> Result<Vec<f64>> {
    net.eval(x)
}

/// Gradient of `upstream · net(x)` over `[pre, θ, post]`.
pub fn hybrid_gradient(net: &HybridNet, x: &[f64], upstream: &[f64]) -> Result<ParamVector> {
    let (_, cache) = net.eval_cached(x)?;
    let mut g = vec![0.0; StepNet::n_params(net)];
    net.backprop(&cache, upstream, &mut g)?;
    Ok(ParamVector::new(g))
}

/// Shape of a hybrid network; empty `pre`/`post` mean no classical layers on that side.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridLayout {
    /// `[input, …, qubits]`.
    pub pre: Vec<usize>,
    pub qubits: usize,
    pub reps: usize,
    /// `[qubits, …, output]`.
    pub post: Vec<usize>,
    pub t: f64,
}

fn dense_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Relu between hidden layers, identity on the last layer.
fn stack_activations(sizes: &[usize]) -> Vec<Activation> {
    let mut a = vec![Activation::Relu; sizes.len() - 2];
    a.push(Activation::Identity);
    a
}

impl HybridLayout {
    pub fn classical_params(&self) -> usize {
        dense_count(&self.pre) + dense_count(&self.post)
    }

    pub fn variational_params(&self) -> usize {
        self.qubits * self.reps
    }

    pub fn total_params(&self) -> usize {
        self.classical_params() + self.variational_params()
    }

    /// Glorot pre- then post-layers from one stream, `θ = 0`.
    pub fn build(&self, bypass: bool, rng: &mut CounterRng) -> Result<HybridNet> {
        let side = |sizes: &[usize], rng: &mut CounterRng| -> Result<Option<FeedForwardNet>> {
            match sizes.len() {
                0 => Ok(None),
                1 => Err(Error::invalid("a classical stage needs at least two layer sizes")),
                _ => FeedForwardNet::glorot(sizes, &stack_activations(sizes), rng).map(Some),
            }
        };
        let pre = side(&self.pre, rng)?;
        let post = side(&self.post, rng)?;
        let circuit = HeaCircuit::new(self.qubits, self.reps, self.t)?;
        HybridNet::new(pre, circuit, vec![0.0; self.variational_params()], post, bypass)
    }
}

/// `d` qubits, `d + 1` repetitions, no classical layers.
pub fn pqc_only_layout(d: usize) -> Result<HybridLayout> {
    if d == 0 || d > PQC_ONLY_MAX_D {
        return Err(Error::Capacity {
            requested: d,
            limit: PQC_ONLY_MAX_D,
        });
    }
    Ok(HybridLayout {
        pre: Vec::new(),
        qubits: d,
        reps: d + 1,
        post: Vec::new(),
        t: DEFAULT_ENTANGLING_TIME,
    })
}

pub fn pqc_only_model(d: usize) -> Result<HybridNet> {
    pqc_only_layout(d)?.build(false, &mut CounterRng::new(0, purpose::INIT, 0, 0))
}

/// One paired comparison with matched parameter totals.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub d: usize,
    pub lr: f64,
    pub batch: usize,
    /// Layer sizes of the classical per-step network.
    pub classical: Vec<usize>,
    pub quantum: HybridLayout,
}

impl ExperimentConfig {
    pub fn classical_params(&self) -> usize {
        dense_count(&self.classical)
    }
}

/// Hybrid-vs-classical at `d = 5, 10, 20` (8 qubits, two repetitions) and
/// PQC-only-vs-classical at `d = 4, 5, 6`.
pub fn experiment_configs() -> Vec<ExperimentConfig> {
    let hybrid = |d: usize, a: usize, c: usize| ExperimentConfig {
        name: format!("hybrid-d{d}"),
        d,
        lr: 0.05,
        batch: 20,
        classical: crate::model::Architecture::default_for(d).layer_sizes(d),
        quantum: HybridLayout {
            pre: vec![d, a, 8],
            qubits: 8,
            reps: 2,
            post: vec![8, c, c, d],
            t: DEFAULT_ENTANGLING_TIME,
        },
    };
    let pqc = |d: usize| ExperimentConfig {
        name: format!("pqc-d{d}"),
        d,
        lr: 0.05,
        batch: 20,
        classical: vec![d, d],
        quantum: pqc_only_layout(d).expect("fixture sizes are within capacity"),
    };
    vec![
        hybrid(5, 5, 6),
        hybrid(10, 10, 11),
        hybrid(20, 5, 21),
        pqc(4),
        pqc(5),
        pqc(6),
    ]
}

/// Small-dimension pairing for quick training checks: 114 parameters on both sides.
pub fn parity_fixture_d2() -> ExperimentConfig {
    ExperimentConfig {
        name: "hybrid-d2".into(),
        d: 2,
        lr: 0.05,
        batch: 20,
        classical: vec![2, 8, 8, 2],
        quantum: HybridLayout {
            pre: vec![2, 5, 4],
            qubits: 4,
            reps: 2,
            post: vec![4, 5, 5, 2],
            t: DEFAULT_ENTANGLING_TIME,
        },
    }
}

/// Step networks from `layout`, `nets[i]` drawing from the stream `(seed, init, i)` like
/// [`BsdeModel::classical`].
pub fn hybrid_model(
    problem: &PdeProblem,
    n_steps: usize,
    layout: &HybridLayout,
    bypass: bool,
    seed: u64,
) -> Result<BsdeModel<HybridNet>> {
    let nets = (0..n_steps.saturating_sub(1))
        .map(|i| layout.build(bypass, &mut CounterRng::new(seed, purpose::INIT, i as u64, 0)))
        .collect::<Result<Vec<_>>>()?;
    BsdeModel::from_nets(problem, n_steps, nets)
}

/// Classical model whose step networks are the circuit-free equivalents of `layout`.
pub fn matched_classical_model(
    problem: &PdeProblem,
    n_steps: usize,
    layout: &HybridLayout,
    seed: u64,
) -> Result<BsdeModel<FeedForwardNet>> {
    let hybrid = hybrid_model(problem, n_steps, layout, true, seed)?;
    let nets = hybrid
        .nets
        .iter()
        .map(HybridNet::classical_equivalent)
        .collect::<Result<Vec<_>>>()?;
    BsdeModel::from_nets(problem, n_steps, nets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dbq_qsim::hea::HeaSpec;
    use dbq_qsim::hea_expectations;

    fn small_layout() -> HybridLayout {
        HybridLayout {
            pre: vec![2, 3, 3],
            qubits: 3,
            reps: 2,
            post: vec![3, 4, 2],
            t: 1.0,
        }
    }

    #[test]
    fn fixture_totals() {
        let cfgs = experiment_configs();
        let totals: Vec<(usize, usize)> = cfgs
            .iter()
            .map(|c| (c.classical_params(), c.quantum.total_params()))
            .collect();
        assert_eq!(totals, vec![(225, 225), (565, 565), (1260, 1260), (20, 20), (30, 30), (42, 42)]);
        let small = parity_fixture_d2();
        assert_eq!(small.classical_params(), small.quantum.total_params());
        for c in &cfgs[..3] {
            assert_eq!(c.quantum.variational_params(), 16);
        }
    }

    #[test]
    fn pqc_only_capacity() {
        for (d, n) in [(4, 20), (5, 30), (6, 42)] {
            let net = pqc_only_model(d).unwrap();
            assert_eq!(StepNet::n_params(&net), n);
            assert_eq!(net.n_classical(), 0);
        }
        assert!(matches!(pqc_only_model(7), Err(Error::Capacity { .. })));
    }

    #[test]
    fn zero_angles_give_all_ones_through_post() {
        let circuit = HeaCircuit::new(2, 1, 0.0).unwrap();
        let mut post = FeedForwardNet::zeros(&[2, 2], &[Activation::Identity]).unwrap();
        post.set_params(&[1.0, 2.0, 3.0, 4.0, 0.5, -0.5]).unwrap();
        let net = HybridNet::new(None, circuit, vec![0.0; 2], Some(post), false).unwrap();
        assert_eq!(hybrid_forward(&net, &[0.0, 0.0]).unwrap(), vec![3.5, 6.5]);
    }

    #[test]
    fn bypass_equals_classical_composition() {
        let net = small_layout().build(true, &mut CounterRng::new(3, purpose::TEST, 0, 0)).unwrap();
        let classical = net.classical_equivalent().unwrap();
        for x in [[0.3, -0.2], [1.5, 0.7]] {
            assert_eq!(hybrid_forward(&net, &x).unwrap(), classical.forward(&x).unwrap());
        }
    }

    #[test]
    fn stage_composition() {
        let mut net = small_layout().build(false, &mut CounterRng::new(4, purpose::TEST, 0, 0)).unwrap();
        net.theta = vec![0.1, -0.4, 0.9, 0.3, 1.2, -0.8];
        let x = [0.4, -1.1];
        let z = net.pre.as_ref().unwrap().forward(&x).unwrap();
        let mut spec = HeaSpec::new(3, 2, 1.0);
        spec.z = z;
        spec.theta = net.theta.clone();
        let e = hea_expectations(&spec).unwrap();
        let want = net.post.as_ref().unwrap().forward(&e).unwrap();
        for (a, b) in hybrid_forward(&net, &x).unwrap().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_angle_gradient_is_minus_sine() {
        let net = HybridNet::new(None, HeaCircuit::new(1, 1, 0.0).unwrap(), vec![0.0], None, false).unwrap();
        for z in [0.0, 0.5, 2.0] {
            let g = hybrid_gradient(&net, &[z], &[1.0]).unwrap();
            assert!((g.values[0] + z.sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let net = small_layout().build(false, &mut CounterRng::new(5, purpose::TEST, 0, 0)).unwrap();
        let g = hybrid_gradient(&net, &[0.2, 0.9], &[0.0, 0.0]).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tangent_agrees_with_gradient() {
        let mut rng = CounterRng::new(6, purpose::TEST, 0, 0);
        let mut net = small_layout().build(false, &mut rng).unwrap();
        net.theta.iter_mut().for_each(|t| *t = rng.normal());
        let x = [0.5, -0.3];
        let w = [0.7, -1.3];
        let g = hybrid_gradient(&net, &x, &w).unwrap();
        let mut v = vec![0.0; StepNet::n_params(&net)];
        rng.fill_normal(&mut v);
        let t = net.tangent(&x, &v).unwrap();
        let lhs: f64 = t.tangent.iter().zip(&w).map(|(a, b)| a * b).sum();
        let rhs: f64 = g.values.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
        assert_eq!(t.primal, hybrid_forward(&net, &x).unwrap());
    }
}
