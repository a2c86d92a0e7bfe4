use crate::error::{Error, Result};
use crate::rng::CounterRng;

use super::dual::DualVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Identity,
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
    ];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative at `z`; relu uses the subgradient 0 at exactly 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = self.apply(z);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }

    /// Global Lipschitz constant in the unsquared convention.
    pub fn lipschitz(self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
            _ => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown activation `{s}`")))
    }
}

/// Flat parameter vector, layer-major with each layer's weights (row-major)
/// before its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One dense layer `a_out = f(W a_in + b)` with `W` stored row-major, `rows × cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn n_params(&self) -> usize {
        self.rows * self.cols + self.rows
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.cols + j]
    }

    fn pre_activation(&self, a: &[f64], z: &mut [f64]) {
        for (i, zi) in z.iter_mut().enumerate() {
            let row = &self.weights[i * self.cols..(i + 1) * self.cols];
            *zi = dot(row, a) + self.biases[i];
        }
    }
}

/// Activations recorded by a forward pass, consumed by [`FeedForwardNet::backward`].
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// `a_0 = x, a_1, …, a_L`.
    pub activations: Vec<Vec<f64>>,
    /// `z_1, …, z_L`.
    pub pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardNet {
    layer_sizes: Vec<usize>,
    layers: Vec<Layer>,
}

impl FeedForwardNet {
    /// Zero-initialized network; `activations` has one entry per weight layer.
    pub fn zeros(layer_sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid("a network needs at least two layer sizes"));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        if activations.len() != layer_sizes.len() - 1 {
            return Err(Error::invalid(format!(
                "{} activations given for {} weight layers",
                activations.len(),
                layer_sizes.len() - 1
            )));
        }
        let layers = layer_sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| Layer {
                rows: w[1],
                cols: w[0],
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
                activation,
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
        })
    }

    pub fn from_params(
        layer_sizes: &[usize],
        activations: &[Activation],
        params: &ParamVector,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, activations)?;
        net.set_params(params.as_slice())?;
        Ok(net)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(layer_sizes: &[usize], activations: &[Activation], rng: &mut CounterRng) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, activations)?;
        for layer in &mut net.layers {
            let a = (6.0 / (layer.rows + layer.cols) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.uniform_range(-a, a);
            }
        }
        Ok(net)
    }

    /// All parameters iid normal with standard deviation `scale`.
    pub fn random_normal(
        layer_sizes: &[usize],
        activations: &[Activation],
        scale: f64,
        rng: &mut CounterRng,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, activations)?;
        let mut p = vec![0.0; net.n_params()];
        for x in &mut p {
            *x = scale * rng.normal();
        }
        net.set_params(&p)?;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of stored scalars (one bias per destination neuron).
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    pub fn params(&self) -> ParamVector {
        let mut v = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.biases);
        }
        ParamVector::new(v)
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "parameter vector has length {}, network stores {}",
                p.len(),
                self.n_params()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for l in &self.layers {
            let mut z = vec![0.0; l.rows];
            l.pre_activation(&a, &mut z);
            for v in &mut z {
                *v = l.activation.apply(*v);
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut cache = ForwardCache {
            activations: Vec::with_capacity(self.layers.len() + 1),
            pre: Vec::with_capacity(self.layers.len()),
        };
        cache.activations.push(x.to_vec());
        for l in &self.layers {
            let mut z = vec![0.0; l.rows];
            l.pre_activation(cache.activations.last().unwrap(), &mut z);
            let a = z.iter().map(|&v| l.activation.apply(v)).collect();
            cache.pre.push(z);
            cache.activations.push(a);
        }
        Ok(cache)
    }

    /// Reverse sweep of the δ recursion. Adds `∂C/∂θ` into `grad` (length `n_params`)
    /// given `upstream = ∂C/∂a_L`, and returns `∂C/∂x`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.n_params());
        debug_assert_eq!(upstream.len(), self.output_dim());
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.n_params();
        }
        let mut delta_a = upstream.to_vec();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[li];
            let a_in = &cache.activations[li];
            let delta: Vec<f64> = delta_a
                .iter()
                .zip(z)
                .map(|(d, &zi)| d * l.activation.derivative(zi))
                .collect();
            let base = offsets[li];
            for i in 0..l.rows {
                let di = delta[i];
                if di != 0.0 {
                    let row = &mut grad[base + i * l.cols..base + (i + 1) * l.cols];
                    for (g, &aj) in row.iter_mut().zip(a_in) {
                        *g += di * aj;
                    }
                }
                grad[base + l.rows * l.cols + i] += di;
            }
            let mut next = vec![0.0; l.cols];
            for (i, &di) in delta.iter().enumerate() {
                if di != 0.0 {
                    let row = &l.weights[i * l.cols..(i + 1) * l.cols];
                    for (n, &w) in next.iter_mut().zip(row) {
                        *n += di * w;
                    }
                }
            }
            delta_a = next;
        }
        delta_a
    }

    /// Forward-mode pass carrying tangents for a parameter direction `dtheta`
    /// and an input direction `dx`.
    pub fn jvp(&self, x: &[f64], dx: &[f64], dtheta: &[f64]) -> Result<DualVector> {
        self.check_input(x)?;
        if dx.len() != x.len() {
            return Err(Error::invalid("input tangent length differs from input"));
        }
        if dtheta.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "direction has length {}, network stores {}",
                dtheta.len(),
                self.n_params()
            )));
        }
        let mut cur = DualVector::new(x.to_vec(), dx.to_vec())?;
        let mut off = 0;
        for l in &self.layers {
            let dw = &dtheta[off..off + l.rows * l.cols];
            let db = &dtheta[off + l.rows * l.cols..off + l.n_params()];
            off += l.n_params();
            let mut primal = vec![0.0; l.rows];
            let mut tangent = vec![0.0; l.rows];
            for i in 0..l.rows {
                let row = &l.weights[i * l.cols..(i + 1) * l.cols];
                let drow = &dw[i * l.cols..(i + 1) * l.cols];
                let z = dot(row, &cur.primal) + l.biases[i];
                let dz = dot(drow, &cur.primal) + dot(row, &cur.tangent) + db[i];
                primal[i] = l.activation.apply(z);
                tangent[i] = l.activation.derivative(z) * dz;
            }
            cur = DualVector { primal, tangent };
        }
        Ok(cur)
    }
}
