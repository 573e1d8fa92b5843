//! Scalar reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every primitive as a node holding its value and the
//! local partial derivative with respect to each input. Nodes are appended
//! in evaluation order, so the node list is always topologically sorted and
//! the backward sweep is a single reverse pass.
//!
//! N-ary primitives (`affine`, `sum`, `mean_squared_error`) keep the node
//! count of a dense layer proportional to its fan-in rather than to the
//! number of intermediate additions.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed)
}

/// Primitive kinds recorded on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Input,
    Const,
    Add,
    Sub,
    Mul,
    /// Multiplication by a constant.
    Scale,
    Relu,
    Square,
    Sum,
    /// `bias + Σ weight_i · input_i`
    Affine,
    /// `Σ (pred_i − target_i)² / n` with constant targets.
    MeanSquaredError,
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: f64,
    deps: std::ops::Range<u32>,
}

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: u32,
}

impl Var {
    pub fn index(self) -> usize {
        self.index as usize
    }
}

/// Recording of a forward evaluation.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    // (input node, local partial) pairs; each node owns a contiguous range.
    deps: Vec<(u32, f64)>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::with_capacity(0, 0)
    }

    pub fn with_capacity(nodes: usize, deps: usize) -> Self {
        Self {
            id: fresh_id(),
            nodes: Vec::with_capacity(nodes),
            deps: Vec::with_capacity(deps),
        }
    }

    /// Drops every node but keeps the allocations. Handles from before the
    /// reset are rejected afterwards.
    pub fn clear(&mut self) {
        self.id = fresh_id();
        self.nodes.clear();
        self.deps.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> f64 {
        self.nodes[var.index()].value
    }

    pub fn op(&self, var: Var) -> Op {
        self.nodes[var.index()].op
    }

    fn push<I>(&mut self, op: Op, value: f64, deps: I) -> Var
    where
        I: IntoIterator<Item = (Var, f64)>,
    {
        let start = self.deps.len() as u32;
        for (v, partial) in deps {
            debug_assert_eq!(v.tape, self.id, "variable from another tape");
            self.deps.push((v.index, partial));
        }
        let end = self.deps.len() as u32;
        let index = u32::try_from(self.nodes.len()).expect("tape exceeds u32 nodes");
        self.nodes.push(Node {
            op,
            value,
            deps: start..end,
        });
        Var { tape: self.id, index }
    }

    /// Leaf whose gradient is wanted.
    pub fn input(&mut self, value: f64) -> Var {
        self.push(Op::Input, value, [])
    }

    pub fn inputs(&mut self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&v| self.input(v)).collect()
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.push(Op::Const, value, [])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(Op::Add, v, [(a, 1.0), (b, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(Op::Sub, v, [(a, 1.0), (b, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        self.push(Op::Mul, va * vb, [(a, vb), (b, va)])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(Op::Scale, v, [(a, c)])
    }

    /// ReLU with subgradient 0 at the origin.
    pub fn relu(&mut self, a: Var) -> Var {
        let va = self.value(a);
        if va > 0.0 {
            self.push(Op::Relu, va, [(a, 1.0)])
        } else {
            self.push(Op::Relu, 0.0, [(a, 0.0)])
        }
    }

    pub fn square(&mut self, a: Var) -> Var {
        let va = self.value(a);
        self.push(Op::Square, va * va, [(a, 2.0 * va)])
    }

    pub fn sum(&mut self, terms: &[Var]) -> Var {
        let v = terms.iter().fold(0.0, |acc, &t| acc + self.value(t));
        let deps: Vec<(Var, f64)> = terms.iter().map(|&t| (t, 1.0)).collect();
        self.push(Op::Sum, v, deps)
    }

    /// `bias + Σ weights[i] · inputs[i]`, accumulated left to right starting
    /// from the bias.
    pub fn affine(&mut self, bias: Var, weights: &[Var], inputs: &[Var]) -> Var {
        assert_eq!(weights.len(), inputs.len(), "affine arity mismatch");
        let mut acc = self.value(bias);
        for (&w, &x) in weights.iter().zip(inputs) {
            acc += self.value(w) * self.value(x);
        }
        let start = self.deps.len() as u32;
        self.deps.push((bias.index, 1.0));
        for (&w, &x) in weights.iter().zip(inputs) {
            let (vw, vx) = (self.value(w), self.value(x));
            self.deps.push((w.index, vx));
            self.deps.push((x.index, vw));
        }
        let end = self.deps.len() as u32;
        let index = self.nodes.len() as u32;
        self.nodes.push(Node {
            op: Op::Affine,
            value: acc,
            deps: start..end,
        });
        Var {
            tape: self.id,
            index,
        }
    }

    /// Mean of squared residuals against constant targets.
    pub fn mean_squared_error(&mut self, predictions: &[Var], targets: &[f64]) -> Result<Var> {
        if predictions.len() != targets.len() {
            return Err(Error::Usage(format!(
                "mse: {} predictions vs {} targets",
                predictions.len(),
                targets.len()
            )));
        }
        if predictions.is_empty() {
            return Err(Error::Usage("mse of an empty batch".into()));
        }
        let n = predictions.len() as f64;
        let residuals: Vec<f64> = predictions
            .iter()
            .zip(targets)
            .map(|(&p, &t)| self.value(p) - t)
            .collect();
        let loss = residuals.iter().fold(0.0, |acc, r| acc + r * r) / n;
        let deps: Vec<(Var, f64)> = predictions
            .iter()
            .zip(&residuals)
            .map(|(&p, &r)| (p, 2.0 * r / n))
            .collect();
        Ok(self.push(Op::MeanSquaredError, loss, deps))
    }

    /// Reverse sweep from `loss`. The tape itself is left untouched.
    pub fn backward(&self, loss: Var) -> Result<Adjoints> {
        if loss.tape != self.id || loss.index() >= self.nodes.len() {
            return Err(Error::Usage("loss node is not on this tape".into()));
        }
        let mut adjoint = vec![0.0; loss.index() + 1];
        adjoint[loss.index()] = 1.0;
        for i in (0..=loss.index()).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            let node = &self.nodes[i];
            for &(j, partial) in &self.deps[node.deps.start as usize..node.deps.end as usize] {
                adjoint[j as usize] += partial * a;
            }
        }
        adjoint.resize(self.nodes.len(), 0.0);
        Ok(Adjoints {
            tape: self.id,
            values: adjoint,
        })
    }
}

/// Result of a backward sweep: d(loss)/d(node) for every node on the tape.
#[derive(Debug, Clone)]
pub struct Adjoints {
    tape: u64,
    values: Vec<f64>,
}

impl Adjoints {
    pub fn get(&self, var: Var) -> f64 {
        assert_eq!(var.tape, self.tape, "variable from another tape");
        self.values[var.index()]
    }

    /// Gradient restricted to `vars`, in the given order.
    pub fn wrt(&self, vars: &[Var]) -> Vec<f64> {
        vars.iter().map(|&v| self.get(v)).collect()
    }
}

/// Tape-free mean squared error.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Usage(format!(
            "mse: {} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Usage("mse of an empty batch".into()));
    }
    let sum = predictions
        .iter()
        .zip(targets)
        .fold(0.0, |acc, (p, t)| acc + (p - t) * (p - t));
    Ok(sum / predictions.len() as f64)
}
