//! Scalar reverse-mode automatic differentiation.
//!
//! A [`Tape`] records an append-only list of scalar nodes. Operand ids
//! always precede the node that uses them, so the node list is already in
//! topological order: the forward pass replays it front to back and the
//! backward pass walks it once in reverse.
//!
//! Numerical code elsewhere in the crate is written once against the
//! [`Arith`] trait. [`Plain`] evaluates it on bare `f64`s, [`Tape`] records
//! it for differentiation. Both perform the same floating-point operations
//! in the same order, so a value computed through the tape is bit-identical
//! to the plain evaluation.

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation recorded by a node. Operands are node ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Input(usize),
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Exp(usize),
    Ln(usize),
    Pow(usize, f64),
    Max2(usize, usize),
    Min2(usize, usize),
    Relu(usize),
    Logistic(usize),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: f64,
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Scalar arithmetic over some value representation.
///
/// `max2`/`min2` return the first operand on ties; this is also the operand
/// that receives the gradient.
pub trait Arith {
    type V: Copy;

    fn constant(&mut self, c: f64) -> Self::V;
    fn value(&self, v: Self::V) -> f64;

    fn add(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn div(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn neg(&mut self, a: Self::V) -> Self::V;
    fn exp(&mut self, a: Self::V) -> Self::V;
    fn ln(&mut self, a: Self::V) -> Self::V;
    fn powf(&mut self, a: Self::V, r: f64) -> Self::V;
    fn max2(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn min2(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn relu(&mut self, a: Self::V) -> Self::V;
    fn logistic(&mut self, a: Self::V) -> Self::V;

    fn scale(&mut self, a: Self::V, c: f64) -> Self::V {
        let k = self.constant(c);
        self.mul(a, k)
    }

    fn add_const(&mut self, a: Self::V, c: f64) -> Self::V {
        let k = self.constant(c);
        self.add(a, k)
    }

    /// Sum of a non-empty slice, left to right.
    fn sum(&mut self, items: &[Self::V]) -> Self::V {
        let mut acc = items[0];
        for &x in &items[1..] {
            acc = self.add(acc, x);
        }
        acc
    }
}

/// Direct `f64` evaluation of [`Arith`] code.
#[derive(Debug, Default, Clone, Copy)]
pub struct Plain;

impl Arith for Plain {
    type V = f64;

    fn constant(&mut self, c: f64) -> f64 {
        c
    }
    fn value(&self, v: f64) -> f64 {
        v
    }
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn div(&mut self, a: f64, b: f64) -> f64 {
        a / b
    }
    fn neg(&mut self, a: f64) -> f64 {
        -a
    }
    fn exp(&mut self, a: f64) -> f64 {
        a.exp()
    }
    fn ln(&mut self, a: f64) -> f64 {
        a.ln()
    }
    fn powf(&mut self, a: f64, r: f64) -> f64 {
        a.powf(r)
    }
    fn max2(&mut self, a: f64, b: f64) -> f64 {
        if a >= b {
            a
        } else {
            b
        }
    }
    fn min2(&mut self, a: f64, b: f64) -> f64 {
        if a <= b {
            a
        } else {
            b
        }
    }
    fn relu(&mut self, a: f64) -> f64 {
        if a > 0.0 {
            a
        } else {
            0.0
        }
    }
    fn logistic(&mut self, a: f64) -> f64 {
        logistic(a)
    }
}

/// Append-only record of a scalar computation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    inputs: Vec<usize>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(nodes),
            inputs: Vec::new(),
        }
    }

    /// Registers a new input slot holding `value`.
    pub fn input(&mut self, value: f64) -> Var {
        let slot = self.inputs.len();
        let id = self.push(Op::Input(slot), value);
        self.inputs.push(id.0);
        id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    /// Current values of the input slots.
    pub fn input_values(&self) -> Vec<f64> {
        self.inputs.iter().map(|&i| self.nodes[i].value).collect()
    }

    fn push(&mut self, op: Op, value: f64) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, id: usize) -> f64 {
        self.nodes[id].value
    }

    fn compute(&self, op: Op) -> f64 {
        let mut p = Plain;
        match op {
            Op::Input(_) | Op::Constant => unreachable!("leaf nodes carry their own value"),
            Op::Add(a, b) => p.add(self.val(a), self.val(b)),
            Op::Sub(a, b) => p.sub(self.val(a), self.val(b)),
            Op::Mul(a, b) => p.mul(self.val(a), self.val(b)),
            Op::Div(a, b) => p.div(self.val(a), self.val(b)),
            Op::Neg(a) => p.neg(self.val(a)),
            Op::Exp(a) => p.exp(self.val(a)),
            Op::Ln(a) => p.ln(self.val(a)),
            Op::Pow(a, r) => p.powf(self.val(a), r),
            Op::Max2(a, b) => p.max2(self.val(a), self.val(b)),
            Op::Min2(a, b) => p.min2(self.val(a), self.val(b)),
            Op::Relu(a) => p.relu(self.val(a)),
            Op::Logistic(a) => p.logistic(self.val(a)),
        }
    }

    fn record(&mut self, op: Op) -> Var {
        let value = self.compute(op);
        self.push(op, value)
    }

    /// Replays the recorded graph on new input values.
    pub fn forward(&mut self, inputs: &[f64]) -> Result<()> {
        if inputs.len() != self.inputs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.inputs.len(),
                got: inputs.len(),
            });
        }
        for id in 0..self.nodes.len() {
            let value = match self.nodes[id].op {
                Op::Input(slot) => inputs[slot],
                Op::Constant => continue,
                op => self.compute(op),
            };
            self.nodes[id].value = value;
        }
        Ok(())
    }

    /// Adjoints of every node with respect to `root`.
    pub fn backward(&self, root: Var) -> Vec<f64> {
        let mut adj = vec![0.0; root.0 + 1];
        adj[root.0] = 1.0;
        for id in (0..=root.0).rev() {
            let g = adj[id];
            if g == 0.0 {
                continue;
            }
            match self.nodes[id].op {
                Op::Input(_) | Op::Constant => {}
                Op::Add(a, b) => {
                    adj[a] += g;
                    adj[b] += g;
                }
                Op::Sub(a, b) => {
                    adj[a] += g;
                    adj[b] -= g;
                }
                Op::Mul(a, b) => {
                    adj[a] += g * self.val(b);
                    adj[b] += g * self.val(a);
                }
                Op::Div(a, b) => {
                    let bv = self.val(b);
                    adj[a] += g / bv;
                    adj[b] -= g * self.val(a) / (bv * bv);
                }
                Op::Neg(a) => adj[a] -= g,
                Op::Exp(a) => adj[a] += g * self.nodes[id].value,
                Op::Ln(a) => adj[a] += g / self.val(a),
                Op::Pow(a, r) => {
                    let x = self.val(a);
                    let d = if r == 1.0 {
                        1.0
                    } else if x == 0.0 {
                        if r > 1.0 {
                            0.0
                        } else {
                            f64::INFINITY
                        }
                    } else {
                        r * x.powf(r - 1.0)
                    };
                    adj[a] += g * d;
                }
                Op::Max2(a, b) => {
                    if self.val(a) >= self.val(b) {
                        adj[a] += g;
                    } else {
                        adj[b] += g;
                    }
                }
                Op::Min2(a, b) => {
                    if self.val(a) <= self.val(b) {
                        adj[a] += g;
                    } else {
                        adj[b] += g;
                    }
                }
                Op::Relu(a) => {
                    if self.val(a) > 0.0 {
                        adj[a] += g;
                    }
                }
                Op::Logistic(a) => {
                    let s = self.nodes[id].value;
                    adj[a] += g * s * (1.0 - s);
                }
            }
        }
        adj
    }

    /// Partial derivatives of `root` with respect to each input slot, at the
    /// current input values.
    pub fn gradient(&self, root: Var) -> Vec<f64> {
        let adj = self.backward(root);
        self.inputs
            .iter()
            .map(|&i| if i <= root.0 { adj[i] } else { 0.0 })
            .collect()
    }

    /// Which side of each kink (relu, max2, min2) the current values sit on.
    fn kink_signature(&self, root: Var) -> Vec<bool> {
        self.nodes[..=root.0]
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(self.val(a) > 0.0),
                Op::Max2(a, b) => Some(self.val(a) >= self.val(b)),
                Op::Min2(a, b) => Some(self.val(a) <= self.val(b)),
                _ => None,
            })
            .collect()
    }
}

impl Arith for Tape {
    type V = Var;

    fn constant(&mut self, c: f64) -> Var {
        self.push(Op::Constant, c)
    }
    fn value(&self, v: Var) -> f64 {
        self.nodes[v.0].value
    }
    fn add(&mut self, a: Var, b: Var) -> Var {
        self.record(Op::Add(a.0, b.0))
    }
    fn sub(&mut self, a: Var, b: Var) -> Var {
        self.record(Op::Sub(a.0, b.0))
    }
    fn mul(&mut self, a: Var, b: Var) -> Var {
        self.record(Op::Mul(a.0, b.0))
    }
    fn div(&mut self, a: Var, b: Var) -> Var {
        self.record(Op::Div(a.0, b.0))
    }
    fn neg(&mut self, a: Var) -> Var {
        self.record(Op::Neg(a.0))
    }
    fn exp(&mut self, a: Var) -> Var {
        self.record(Op::Exp(a.0))
    }
    fn ln(&mut self, a: Var) -> Var {
        self.record(Op::Ln(a.0))
    }
    fn powf(&mut self, a: Var, r: f64) -> Var {
        self.record(Op::Pow(a.0, r))
    }
    fn max2(&mut self, a: Var, b: Var) -> Var {
        self.record(Op::Max2(a.0, b.0))
    }
    fn min2(&mut self, a: Var, b: Var) -> Var {
        self.record(Op::Min2(a.0, b.0))
    }
    fn relu(&mut self, a: Var) -> Var {
        self.record(Op::Relu(a.0))
    }
    fn logistic(&mut self, a: Var) -> Var {
        self.record(Op::Logistic(a.0))
    }
}

/// Replays `tape` on `inputs` and returns the value of `root`.
pub fn forward_eval(tape: &mut Tape, root: Var, inputs: &[f64]) -> Result<f64> {
    tape.forward(inputs)?;
    Ok(tape.value(root))
}

/// Replays `tape` on `inputs` and returns d root / d input for every slot.
pub fn gradient(tape: &mut Tape, root: Var, inputs: &[f64]) -> Result<Vec<f64>> {
    tape.forward(inputs)?;
    Ok(tape.gradient(root))
}

/// Compares analytic partials with central finite differences.
///
/// An input is skipped when moving it by `±h` flips the branch of any relu,
/// max2 or min2 node. The tape is left evaluated at `inputs`.
pub fn grad_check(tape: &mut Tape, root: Var, inputs: &[f64], h: f64, tol: f64) -> bool {
    assert!(h > 0.0, "finite-difference step must be positive");
    if tape.forward(inputs).is_err() {
        return false;
    }
    let analytic = tape.gradient(root);
    let base_sig = tape.kink_signature(root);
    let mut x = inputs.to_vec();
    let mut ok = true;
    for i in 0..inputs.len() {
        x[i] = inputs[i] + h;
        tape.forward(&x).expect("length checked above");
        let f_plus = tape.value(root);
        let sig_plus = tape.kink_signature(root);
        x[i] = inputs[i] - h;
        tape.forward(&x).expect("length checked above");
        let f_minus = tape.value(root);
        let sig_minus = tape.kink_signature(root);
        x[i] = inputs[i];
        if sig_plus != base_sig || sig_minus != base_sig {
            continue;
        }
        let fd = (f_plus - f_minus) / (2.0 * h);
        let scale = analytic[i].abs().max(fd.abs()).max(1e-3);
        if !((fd - analytic[i]).abs() <= tol * scale) {
            ok = false;
            break;
        }
    }
    tape.forward(inputs).expect("length checked above");
    ok
}
