//! Tape-based reverse-mode differentiation.
//!
//! Every operation on a [`Var`] evaluates eagerly and, while the tape is
//! recording, appends a node holding its value and parent indices. Backward
//! rules are themselves written as `Var` operations, so running [`grad`] with
//! `create_graph` records the gradient computation on the same tape and the
//! result can be differentiated again.
//!
//! A tape that is not recording hands out untracked values: this is the
//! inference path, with no node growth.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use super::tensor::{self, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul,
    MatMulNt,
    MatMulTn,
    Add,
    Sub,
    Mul,
    Affine { scale: f64, shift: f64 },
    Relu,
    Tanh,
    Exp,
    Sqrt,
    SafeRecip,
    ConcatCols { split: usize },
    SliceCols { start: usize, end: usize },
    PadCols { start: usize, total: usize },
    SumAll,
    Fill { shape: Vec<usize> },
    SumAxis0,
    SumAxis1,
    BroadcastRows { m: usize },
    BroadcastCols { n: usize },
    LogSumExp,
    Reshape { shape: Vec<usize> },
}

struct Node {
    op: Op,
    parents: Vec<usize>,
    value: Rc<Tensor>,
}

struct TapeInner {
    nodes: RefCell<Vec<Node>>,
    recording: Cell<bool>,
}

/// Append-only record of operations. Parents always precede children.
#[derive(Clone)]
pub struct Tape {
    inner: Rc<TapeInner>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(TapeInner {
                nodes: RefCell::new(Vec::new()),
                recording: Cell::new(true),
            }),
        }
    }

    /// A tape that never records; for evaluation passes.
    pub fn untracked() -> Self {
        let t = Tape::new();
        t.inner.recording.set(false);
        t
    }

    pub fn is_recording(&self) -> bool {
        self.inner.recording.get()
    }

    pub fn len(&self) -> usize {
        self.inner.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input (parameter or data) recorded as a leaf node.
    pub fn leaf(&self, value: Tensor) -> Var {
        let value = Rc::new(value);
        let id = self.push(Op::Leaf, vec![], value.clone());
        Var {
            tape: self.clone(),
            id,
            value,
        }
    }

    /// A value that is never differentiated through. Not recorded until an
    /// operation on a recording tape uses it.
    pub fn constant(&self, value: Tensor) -> Var {
        Var {
            tape: self.clone(),
            id: None,
            value: Rc::new(value),
        }
    }

    pub fn scalar(&self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    fn push(&self, op: Op, parents: Vec<usize>, value: Rc<Tensor>) -> Option<usize> {
        if !self.is_recording() {
            return None;
        }
        let mut nodes = self.inner.nodes.borrow_mut();
        nodes.push(Node { op, parents, value });
        Some(nodes.len() - 1)
    }

    fn same(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    fn var_at(&self, id: usize) -> Var {
        let value = self.inner.nodes.borrow()[id].value.clone();
        Var {
            tape: self.clone(),
            id: Some(id),
            value,
        }
    }

    /// Re-evaluate every recorded node from its parents' stored values and
    /// return the recomputed values. Leaves are returned as stored.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let nodes = self.inner.nodes.borrow();
        let mut out: Vec<Tensor> = Vec::with_capacity(nodes.len());
        for node in nodes.iter() {
            let args: Vec<&Tensor> = node.parents.iter().map(|&p| &out[p]).collect();
            let v = match node.op {
                Op::Leaf => (*node.value).clone(),
                ref op => eval(op, &args)?,
            };
            out.push(v);
        }
        Ok(out)
    }
}

/// A tensor together with its position on a tape.
#[derive(Clone)]
pub struct Var {
    tape: Tape,
    id: Option<usize>,
    value: Rc<Tensor>,
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.value.shape())
            .finish()
    }
}

fn eval(op: &Op, args: &[&Tensor]) -> Result<Tensor> {
    let out = match op {
        Op::Leaf => unreachable!("leaves are not evaluated"),
        Op::MatMul => tensor::matmul(args[0], args[1])?,
        Op::MatMulNt => tensor::matmul_nt(args[0], args[1])?,
        Op::MatMulTn => tensor::matmul_tn(args[0], args[1])?,
        Op::Add => args[0].zip_map(args[1], "add", |a, b| a + b)?,
        Op::Sub => args[0].zip_map(args[1], "sub", |a, b| a - b)?,
        Op::Mul => args[0].zip_map(args[1], "mul", |a, b| a * b)?,
        Op::Affine { scale, shift } => args[0].map(|v| v * scale + shift),
        Op::Relu => args[0].map(|v| if v > 0.0 { v } else { 0.0 }),
        Op::Tanh => args[0].map(f64::tanh),
        Op::Exp => args[0].map(f64::exp),
        Op::Sqrt => args[0].map(f64::sqrt),
        Op::SafeRecip => args[0].map(|v| if v == 0.0 { 0.0 } else { 1.0 / v }),
        Op::ConcatCols { .. } => tensor::concat_cols(args[0], args[1])?,
        Op::SliceCols { start, end } => tensor::slice_cols(args[0], *start, *end)?,
        Op::PadCols { start, total } => tensor::pad_cols(args[0], *start, *total)?,
        Op::SumAll => Tensor::scalar(args[0].sum()),
        Op::Fill { shape } => {
            if args[0].len() != 1 {
                return Err(Error::dim("fill", "source must hold one value"));
            }
            Tensor::full(shape, args[0].item())
        }
        Op::SumAxis0 => tensor::sum_axis0(args[0])?,
        Op::SumAxis1 => tensor::sum_axis1(args[0])?,
        Op::BroadcastRows { m } => tensor::broadcast_rows(args[0], *m)?,
        Op::BroadcastCols { n } => tensor::broadcast_cols(args[0], *n)?,
        Op::LogSumExp => tensor::logsumexp_rows(args[0])?,
        Op::Reshape { shape } => args[0].reshape(shape)?,
    };
    Ok(out)
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul | Op::MatMulNt | Op::MatMulTn => "matmul",
        Op::Add => "add",
        Op::Sub => "sub",
        Op::Mul => "mul",
        Op::Affine { .. } => "affine",
        Op::Relu => "relu",
        Op::Tanh => "tanh",
        Op::Exp => "exp",
        Op::Sqrt => "sqrt",
        Op::SafeRecip => "recip",
        Op::ConcatCols { .. } => "concat",
        Op::SliceCols { .. } => "slice_cols",
        Op::PadCols { .. } => "pad_cols",
        Op::SumAll => "sum",
        Op::Fill { .. } => "fill",
        Op::SumAxis0 | Op::SumAxis1 => "sum_axis",
        Op::BroadcastRows { .. } | Op::BroadcastCols { .. } => "broadcast",
        Op::LogSumExp => "logsumexp",
        Op::Reshape { .. } => "reshape",
    }
}

impl Var {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn item(&self) -> f64 {
        self.value.item()
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn is_tracked(&self) -> bool {
        self.id.is_some()
    }

    /// Detached copy of the value.
    pub fn detach(&self) -> Var {
        self.tape.constant((*self.value).clone())
    }

    fn ensure_id(&self) -> usize {
        match self.id {
            Some(id) => id,
            None => self
                .tape
                .push(Op::Leaf, vec![], self.value.clone())
                .expect("ensure_id called on a recording tape"),
        }
    }

    fn apply(&self, op: Op, others: &[&Var]) -> Result<Var> {
        for o in others {
            if !self.tape.same(&o.tape) {
                return Err(Error::Provenance);
            }
        }
        let value = {
            let mut args: Vec<&Tensor> = vec![&self.value];
            args.extend(others.iter().map(|o| &*o.value));
            eval(&op, &args)?
        };
        if !value.is_finite() {
            return Err(Error::Numeric(op_name(&op).to_string()));
        }
        let value = Rc::new(value);
        let id = if self.tape.is_recording() {
            let mut parents = vec![self.ensure_id()];
            parents.extend(others.iter().map(|o| o.ensure_id()));
            self.tape.push(op, parents, value.clone())
        } else {
            None
        };
        Ok(Var {
            tape: self.tape.clone(),
            id,
            value,
        })
    }

    pub fn matmul(&self, rhs: &Var) -> Result<Var> {
        self.apply(Op::MatMul, &[rhs])
    }

    /// `self · rhsᵀ`
    pub fn matmul_nt(&self, rhs: &Var) -> Result<Var> {
        self.apply(Op::MatMulNt, &[rhs])
    }

    /// `selfᵀ · rhs`
    pub fn matmul_tn(&self, rhs: &Var) -> Result<Var> {
        self.apply(Op::MatMulTn, &[rhs])
    }

    pub fn add(&self, rhs: &Var) -> Result<Var> {
        self.apply(Op::Add, &[rhs])
    }

    pub fn sub(&self, rhs: &Var) -> Result<Var> {
        self.apply(Op::Sub, &[rhs])
    }

    pub fn mul(&self, rhs: &Var) -> Result<Var> {
        self.apply(Op::Mul, &[rhs])
    }

    /// `scale · self + shift`, elementwise.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<Var> {
        self.apply(Op::Affine { scale, shift }, &[])
    }

    pub fn scale(&self, s: f64) -> Result<Var> {
        self.affine(s, 0.0)
    }

    pub fn neg(&self) -> Result<Var> {
        self.affine(-1.0, 0.0)
    }

    pub fn relu(&self) -> Result<Var> {
        self.apply(Op::Relu, &[])
    }

    pub fn tanh(&self) -> Result<Var> {
        self.apply(Op::Tanh, &[])
    }

    pub fn exp(&self) -> Result<Var> {
        self.apply(Op::Exp, &[])
    }

    pub fn sqrt(&self) -> Result<Var> {
        self.apply(Op::Sqrt, &[])
    }

    /// `1/x`, with 0 mapped to 0.
    pub fn safe_recip(&self) -> Result<Var> {
        self.apply(Op::SafeRecip, &[])
    }

    pub fn square(&self) -> Result<Var> {
        self.mul(self)
    }

    pub fn concat_cols(&self, rhs: &Var) -> Result<Var> {
        let split = self.value.cols();
        self.apply(Op::ConcatCols { split }, &[rhs])
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var> {
        self.apply(Op::SliceCols { start, end }, &[])
    }

    pub fn pad_cols(&self, start: usize, total: usize) -> Result<Var> {
        self.apply(Op::PadCols { start, total }, &[])
    }

    pub fn sum(&self) -> Result<Var> {
        self.apply(Op::SumAll, &[])
    }

    pub fn mean(&self) -> Result<Var> {
        let n = self.value.len();
        if n == 0 {
            return Err(Error::dim("mean", "empty tensor"));
        }
        self.sum()?.scale(1.0 / n as f64)
    }

    /// Broadcast a single-valued tensor to `shape`.
    pub fn fill(&self, shape: &[usize]) -> Result<Var> {
        self.apply(
            Op::Fill {
                shape: shape.to_vec(),
            },
            &[],
        )
    }

    /// Column sums, `[m, n] -> [n]`.
    pub fn sum_axis0(&self) -> Result<Var> {
        self.apply(Op::SumAxis0, &[])
    }

    /// Row sums, `[m, n] -> [m]`.
    pub fn sum_axis1(&self) -> Result<Var> {
        self.apply(Op::SumAxis1, &[])
    }

    /// `[n] -> [m, n]`
    pub fn broadcast_rows(&self, m: usize) -> Result<Var> {
        self.apply(Op::BroadcastRows { m }, &[])
    }

    /// `[m] -> [m, n]`
    pub fn broadcast_cols(&self, n: usize) -> Result<Var> {
        self.apply(Op::BroadcastCols { n }, &[])
    }

    /// Row-wise squared L2 norm, `[m, n] -> [m]`.
    pub fn sq_norm_rows(&self) -> Result<Var> {
        self.square()?.sum_axis1()
    }

    /// Row-wise log-sum-exp, `[m, n] -> [m]`.
    pub fn logsumexp_rows(&self) -> Result<Var> {
        self.apply(Op::LogSumExp, &[])
    }

    /// Row-wise log-softmax.
    pub fn log_softmax_rows(&self) -> Result<Var> {
        let n = self.value.cols();
        self.sub(&self.logsumexp_rows()?.broadcast_cols(n)?)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var> {
        self.apply(
            Op::Reshape {
                shape: shape.to_vec(),
            },
            &[],
        )
    }

    /// Add a bias vector to every row.
    pub fn add_row(&self, bias: &Var) -> Result<Var> {
        let m = self.value.rows();
        self.add(&bias.broadcast_rows(m)?)
    }
}

/// Chain rule for one node: contributions to each parent gradient, in
/// parent order, expressed as tape operations.
/// Contributions of `g` to each parent; `None` where `need` is false.
fn backward_rule(
    op: &Op,
    parents: &[Var],
    need: &[bool],
    out: &Var,
    g: &Var,
) -> Result<Vec<Option<Var>>> {
    let tape = &out.tape;
    let pick = |i: usize, f: &dyn Fn() -> Result<Var>| -> Result<Option<Var>> {
        if need[i] {
            f().map(Some)
        } else {
            Ok(None)
        }
    };
    let two = |a: &dyn Fn() -> Result<Var>, b: &dyn Fn() -> Result<Var>| -> Result<Vec<Option<Var>>> {
        Ok(vec![pick(0, a)?, pick(1, b)?])
    };
    let one = |v: Result<Var>| -> Result<Vec<Option<Var>>> { Ok(vec![Some(v?)]) };
    match op {
        Op::Leaf => Ok(vec![]),
        Op::MatMul => two(&|| g.matmul_nt(&parents[1]), &|| parents[0].matmul_tn(g)),
        Op::MatMulNt => two(&|| g.matmul(&parents[1]), &|| g.matmul_tn(&parents[0])),
        Op::MatMulTn => two(&|| parents[1].matmul_nt(g), &|| parents[0].matmul(g)),
        Op::Add => two(&|| Ok(g.clone()), &|| Ok(g.clone())),
        Op::Sub => two(&|| Ok(g.clone()), &|| g.neg()),
        Op::Mul => two(&|| g.mul(&parents[1]), &|| g.mul(&parents[0])),
        Op::Affine { scale, .. } => one(g.scale(*scale)),
        Op::Relu => {
            let mask = parents[0].value.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
            one(g.mul(&tape.constant(mask)))
        }
        Op::Tanh => one(g.mul(&out.square()?.affine(-1.0, 1.0)?)),
        Op::Exp => one(g.mul(out)),
        Op::Sqrt => one(g.mul(&out.safe_recip()?.scale(0.5)?)),
        Op::SafeRecip => one(g.mul(&out.square()?.neg()?)),
        Op::ConcatCols { split } => {
            let total = out.value.cols();
            two(&|| g.slice_cols(0, *split), &|| g.slice_cols(*split, total))
        }
        Op::SliceCols { start, .. } => one(g.pad_cols(*start, parents[0].value.cols())),
        Op::PadCols { start, .. } => {
            let n = out.value.cols().min(parents[0].value.cols());
            one(g.slice_cols(*start, start + n))
        }
        Op::SumAll => one(g.fill(parents[0].shape())),
        Op::Fill { .. } => one(g.sum()?.reshape(parents[0].shape())),
        Op::SumAxis0 => one(g.broadcast_rows(parents[0].value.rows())),
        Op::SumAxis1 => one(g.broadcast_cols(parents[0].value.cols())),
        Op::BroadcastRows { .. } => one(g.sum_axis0()),
        Op::BroadcastCols { .. } => one(g.sum_axis1()),
        Op::LogSumExp => {
            let n = parents[0].value.cols();
            let softmax = parents[0].sub(&out.broadcast_cols(n)?)?.exp()?;
            one(g.broadcast_cols(n)?.mul(&softmax))
        }
        Op::Reshape { .. } => one(g.reshape(parents[0].shape())),
    }
}

/// Gradients of the rank-0 `output` with respect to each of `wrt`.
///
/// With `create_graph` the gradient computation is recorded, so the returned
/// vars can be differentiated again. Otherwise they are detached values.
/// Tensors in `wrt` that `output` does not depend on get zero gradients.
pub fn grad(output: &Var, wrt: &[&Var], create_graph: bool) -> Result<Vec<Var>> {
    if output.value.rank() != 0 {
        return Err(Error::Contract(format!(
            "backward needs a rank-0 output, got shape {:?}",
            output.shape()
        )));
    }
    let tape = output.tape.clone();
    let mut targets = Vec::with_capacity(wrt.len());
    for w in wrt {
        if !tape.same(&w.tape) {
            return Err(Error::Provenance);
        }
        targets.push(w.id.ok_or(Error::Provenance)?);
    }
    let Some(out_id) = output.id else {
        // Untracked output: nothing on the tape feeds it.
        return Ok(wrt
            .iter()
            .map(|w| tape.constant(Tensor::zeros(w.shape())))
            .collect());
    };

    let (ops, parents): (Vec<Op>, Vec<Vec<usize>>) = {
        let nodes = tape.inner.nodes.borrow();
        nodes[..=out_id]
            .iter()
            .map(|n| (n.op.clone(), n.parents.clone()))
            .unzip()
    };

    // needs[i]: some wrt target is reachable from node i through parents.
    let mut needs = vec![false; out_id + 1];
    for &t in &targets {
        if t <= out_id {
            needs[t] = true;
        }
    }
    for i in 0..=out_id {
        if !needs[i] && parents[i].iter().any(|&p| needs[p]) {
            needs[i] = true;
        }
    }

    let was_recording = tape.is_recording();
    tape.inner.recording.set(create_graph);
    let result = (|| -> Result<Vec<Option<Var>>> {
        let mut grads: Vec<Option<Var>> = vec![None; out_id + 1];
        let mut found: Vec<Option<Var>> = vec![None; out_id + 1];
        grads[out_id] = Some(tape.scalar(1.0));
        for i in (0..=out_id).rev() {
            if !needs[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if targets.contains(&i) {
                found[i] = Some(g.clone());
            }
            if parents[i].iter().all(|&p| !needs[p]) {
                continue;
            }
            let pvars: Vec<Var> = parents[i].iter().map(|&p| tape.var_at(p)).collect();
            let out = tape.var_at(i);
            let need: Vec<bool> = parents[i].iter().map(|&p| needs[p]).collect();
            let contribs = backward_rule(&ops[i], &pvars, &need, &out, &g)?;
            for (&p, c) in parents[i].iter().zip(contribs) {
                let Some(c) = c else { continue };
                grads[p] = Some(match grads[p].take() {
                    Some(acc) => acc.add(&c)?,
                    None => c,
                });
            }
        }
        Ok(found)
    })();
    tape.inner.recording.set(was_recording);
    let found = result?;

    Ok(targets
        .iter()
        .zip(wrt)
        .map(|(&t, w)| {
            let g = found.get(t).cloned().flatten();
            match g {
                Some(g) if create_graph => g,
                Some(g) => g.detach(),
                None => tape.constant(Tensor::zeros(w.shape())),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Tensor {
        Tensor::scalar(v)
    }

    #[test]
    fn square_derivative() {
        let tape = Tape::new();
        let x = tape.leaf(s(3.0));
        let y = x.square().unwrap();
        let g = grad(&y, &[&x], false).unwrap();
        assert_eq!(g[0].item(), 6.0);
    }

    #[test]
    fn linear_derivative() {
        let tape = Tape::new();
        for w in [-2.5, 0.0, 7.0] {
            let x = tape.leaf(s(1.3));
            let y = x.mul(&tape.scalar(w)).unwrap();
            assert_eq!(grad(&y, &[&x], false).unwrap()[0].item(), w);
        }
    }

    #[test]
    fn second_derivative_of_cube() {
        let tape = Tape::new();
        let x = tape.leaf(s(2.0));
        let y = x.square().unwrap().mul(&x).unwrap();
        let dy = grad(&y, &[&x], true).unwrap();
        assert_eq!(dy[0].item(), 12.0);
        let d2y = grad(&dy[0], &[&x], false).unwrap();
        // Central differences of 3x² give 12 as well.
        let h = 1e-4;
        let fd = (3.0 * (2.0 + h) * (2.0 + h) - 3.0 * (2.0 - h) * (2.0 - h)) / (2.0 * h);
        assert!((d2y[0].item() - fd).abs() < 1e-6);
        assert!((d2y[0].item() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(grad(&x, &[&x], false), Err(Error::Contract(_))));
    }

    #[test]
    fn foreign_tape_is_rejected() {
        let a = Tape::new();
        let b = Tape::new();
        let x = a.leaf(s(1.0));
        let y = b.leaf(s(1.0));
        let z = x.square().unwrap();
        assert!(matches!(grad(&z, &[&y], false), Err(Error::Provenance)));
        assert!(matches!(x.add(&y), Err(Error::Provenance)));
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let tape = Tape::new();
        let x = tape.leaf(s(1000.0));
        assert!(matches!(x.exp(), Err(Error::Numeric(_))));
    }

    #[test]
    fn relu_values() {
        let tape = Tape::untracked();
        let x = tape.constant(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        assert_eq!(x.relu().unwrap().value().data(), &[0.0, 0.0, 2.0]);
        assert!(tape.is_empty());
    }

    #[test]
    fn identity_matmul() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(3, 2, vec![1., -2., 3., 4., 0.5, 6.]).unwrap());
        let i = tape.constant(Tensor::identity(3));
        assert_eq!(i.matmul(&x).unwrap().value(), x.value());
    }

    #[test]
    fn logsumexp_gradient_is_softmax() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap());
        let y = x.logsumexp_rows().unwrap().sum().unwrap();
        let g = grad(&y, &[&x], false).unwrap();
        let e = std::f64::consts::E;
        assert!((g[0].value().data()[0] - e / (e + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn gradient_wrt_unrelated_leaf_is_zero() {
        let tape = Tape::new();
        let x = tape.leaf(s(2.0));
        let z = tape.leaf(Tensor::vector(vec![1.0, 1.0]));
        let y = x.square().unwrap();
        let g = grad(&y, &[&z], false).unwrap();
        assert_eq!(g[0].value().data(), &[0.0, 0.0]);
    }

    #[test]
    fn replay_reproduces_values() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(2, 2, vec![0.3, -1.2, 2.0, 0.1]).unwrap());
        let w = tape.leaf(Tensor::matrix(2, 3, vec![1., 2., -1., 0.5, 0.2, 0.3]).unwrap());
        let h = x.matmul(&w).unwrap().tanh().unwrap();
        let y = h.logsumexp_rows().unwrap().sum().unwrap();
        grad(&y, &[&w], true).unwrap();
        let replayed = tape.replay().unwrap();
        let nodes = tape.inner.nodes.borrow();
        for (n, r) in nodes.iter().zip(&replayed) {
            assert_eq!(n.value.data(), r.data());
        }
    }
}
