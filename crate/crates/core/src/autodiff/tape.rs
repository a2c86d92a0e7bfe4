//! Scalar Wengert list. Nodes are appended in evaluation order, so the node
//! index is a topological order and one reverse sweep yields every adjoint.

use super::net::{Activation, FeedForwardNet, ParamVector};
use super::OutputLoss;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Input,
    Add,
    Mul,
    Scale,
    Offset,
    Activate(Activation),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub usize);

#[derive(Debug, Clone)]
pub struct Node {
    pub op: OpKind,
    pub inputs: [usize; 2],
    pub partials: [f64; 2],
    pub arity: u8,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn value(&self, v: Var) -> f64 {
        self.nodes[v.0].value
    }

    fn push(&mut self, op: OpKind, inputs: [usize; 2], partials: [f64; 2], arity: u8, value: f64) -> Var {
        self.nodes.push(Node {
            op,
            inputs,
            partials,
            arity,
            value,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: f64) -> Var {
        self.push(OpKind::Input, [0, 0], [0.0, 0.0], 0, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(OpKind::Add, [a.0, b.0], [1.0, 1.0], 2, v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.push(OpKind::Mul, [a.0, b.0], [y, x], 2, x * y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = c * self.value(a);
        self.push(OpKind::Scale, [a.0, 0], [c, 0.0], 1, v)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(OpKind::Offset, [a.0, 0], [1.0, 0.0], 1, v)
    }

    pub fn activate(&mut self, a: Var, f: Activation) -> Var {
        let z = self.value(a);
        self.push(OpKind::Activate(f), [a.0, 0], [f.derivative(z), 0.0], 1, f.apply(z))
    }

    /// Adjoints of all nodes for the scalar `Σ seeds_i · outputs_i`.
    pub fn reverse(&self, outputs: &[Var], seeds: &[f64]) -> Vec<f64> {
        let mut adj = vec![0.0; self.nodes.len()];
        for (o, s) in outputs.iter().zip(seeds) {
            adj[o.0] += s;
        }
        for i in (0..self.nodes.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = &self.nodes[i];
            for k in 0..n.arity as usize {
                adj[n.inputs[k]] += a * n.partials[k];
            }
        }
        adj
    }
}

/// Gradient of `loss(net(x))` by recording the whole network on a scalar tape.
pub fn tape_gradient(net: &FeedForwardNet, x: &[f64], loss: &dyn OutputLoss) -> Result<ParamVector> {
    net.forward(x)?;
    let mut tape = Tape::new();
    let mut param_vars = Vec::with_capacity(net.n_params());
    let mut a: Vec<Var> = x.iter().map(|&v| tape.input(v)).collect();
    for l in net.layers() {
        let w: Vec<Var> = l.weights.iter().map(|&v| tape.input(v)).collect();
        let b: Vec<Var> = l.biases.iter().map(|&v| tape.input(v)).collect();
        param_vars.extend_from_slice(&w);
        param_vars.extend_from_slice(&b);
        let mut next = Vec::with_capacity(l.rows);
        for i in 0..l.rows {
            let mut acc = b[i];
            for j in 0..l.cols {
                let p = tape.mul(w[i * l.cols + j], a[j]);
                acc = tape.add(acc, p);
            }
            next.push(tape.activate(acc, l.activation));
        }
        a = next;
    }
    let y: Vec<f64> = a.iter().map(|&v| tape.value(v)).collect();
    let mut seeds = vec![0.0; y.len()];
    loss.gradient(&y, &mut seeds);
    let adj = tape.reverse(&a, &seeds);
    Ok(ParamVector::new(param_vars.iter().map(|v| adj[v.0]).collect()))
}
