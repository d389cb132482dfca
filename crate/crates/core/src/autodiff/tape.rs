use std::cell::{Ref, RefCell};
use std::fmt;

use super::gemm::{gemm, View};
use super::Tensor;
use crate::{Error, Result};

#[derive(Debug)]
enum Op {
    /// Differentiable input (a parameter or a watched tensor).
    Leaf,
    /// Non-differentiable value: data, frozen parameters, detached copies,
    /// and any op whose inputs are all constants.
    Constant,
    MatMul {
        a: usize,
        b: usize,
        /// `a · bᵀ` instead of `a · b`.
        trans_b: bool,
    },
    Add {
        a: usize,
        b: usize,
        /// `b` is a `[n]` bias added to every row of `a`.
        row_broadcast: bool,
    },
    Sub {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Scale {
        a: usize,
        factor: f64,
    },
    Concat {
        parts: Vec<usize>,
        outer: usize,
        inner: usize,
        dims: Vec<usize>,
    },
    Slice {
        a: usize,
        outer: usize,
        inner: usize,
        src_dim: usize,
        start: usize,
        end: usize,
    },
    Relu {
        a: usize,
    },
    Tanh {
        a: usize,
    },
    Sigmoid {
        a: usize,
    },
    /// Gradient flows only to the flat source positions in `src`; used by
    /// both reduce-max and gather.
    Pick {
        a: usize,
        src: Vec<usize>,
    },
    Sum {
        a: usize,
    },
    Mean {
        a: usize,
    },
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation for one backward pass.
///
/// A tape is cheap to create and meant to be thrown away after
/// [`Tape::backward`]. Nodes are appended in evaluation order, so every
/// node's parents precede it.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    inference: bool,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes = self.tape.nodes.borrow();
        let node = &nodes[self.id];
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &node.shape)
            .field("requires_grad", &node.requires_grad)
            .finish()
    }
}

/// Gradients produced by one backward pass, kept for differentiable leaves.
pub struct Grads {
    grads: Vec<Option<Vec<f64>>>,
    visited: usize,
}

impl Grads {
    /// Gradient of the loss with respect to `var`; `None` when the loss does
    /// not depend on it (or it is not a differentiable leaf).
    pub fn get(&self, var: Var<'_>) -> Option<&[f64]> {
        self.grads.get(var.id).and_then(|g| g.as_deref())
    }

    /// Number of tape nodes whose backward rule ran.
    pub fn nodes_visited(&self) -> usize {
        self.visited
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// `(outer, dim, inner)` decomposition around `axis`.
fn split_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::shape(
            op,
            format!("axis {} out of range for shape {:?}", axis, shape),
        ));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != axis)
        .map(|(_, &d)| d)
        .collect();
    if out.is_empty() {
        out.push(1);
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape on which [`Tape::var`] registers every tensor as a constant,
    /// so nothing is differentiable and no backward state is kept.
    pub fn inference() -> Self {
        Tape {
            nodes: RefCell::default(),
            inference: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var<'_> {
        debug_assert_eq!(numel(&shape), value.len());
        let op = if requires_grad { op } else { Op::Constant };
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Registers a tensor: a differentiable leaf when it requires grad,
    /// a constant otherwise.
    pub fn var(&self, t: &Tensor) -> Var<'_> {
        let differentiable = t.requires_grad() && !self.inference;
        let op = if differentiable { Op::Leaf } else { Op::Constant };
        self.push(t.shape().to_vec(), t.values().to_vec(), op, differentiable)
    }

    /// Registers a differentiable leaf regardless of the tensor's flag.
    pub fn leaf(&self, values: Vec<f64>, shape: &[usize]) -> Result<Var<'_>> {
        check_len("leaf", shape, values.len())?;
        Ok(self.push(shape.to_vec(), values, Op::Leaf, true))
    }

    pub fn constant(&self, values: Vec<f64>, shape: &[usize]) -> Result<Var<'_>> {
        check_len("constant", shape, values.len())?;
        Ok(self.push(shape.to_vec(), values, Op::Constant, false))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let base = first.shape();
        let (outer, _, inner) = split_axis("concat", &base, axis)?;
        let mut dims = Vec::with_capacity(parts.len());
        for p in parts {
            let s = p.shape();
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape(
                    "concat",
                    format!("{:?} vs {:?} along axis {}", base, s, axis),
                ));
            }
            dims.push(s[axis]);
        }
        let total: usize = dims.iter().sum();
        let mut value = vec![0.0; outer * total * inner];
        let requires_grad;
        {
            let nodes = self.nodes.borrow();
            requires_grad = parts.iter().any(|p| nodes[p.id].requires_grad);
            let mut offset = 0;
            for (p, &d) in parts.iter().zip(&dims) {
                let src = &nodes[p.id].value;
                let block = d * inner;
                for o in 0..outer {
                    let dst = o * total * inner + offset * inner;
                    value[dst..dst + block].copy_from_slice(&src[o * block..(o + 1) * block]);
                }
                offset += d;
            }
        }
        let mut shape = base.clone();
        shape[axis] = total;
        Ok(self.push(
            shape,
            value,
            Op::Concat {
                parts: parts.iter().map(|p| p.id).collect(),
                outer,
                inner,
                dims,
            },
            requires_grad,
        ))
    }

    /// Reverse pass from a scalar loss.
    ///
    /// Visits every node at most once, from the loss back to the first node.
    /// Nodes that do not depend on any differentiable leaf are skipped.
    pub fn backward(&self, loss: Var<'_>) -> Result<Grads> {
        let nodes = self.nodes.borrow();
        let n = nodes.len();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", root.shape),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut visited = 0;
        if !root.requires_grad {
            return Ok(Grads { grads, visited });
        }
        grads[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf | Op::Constant) {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            visited += 1;
            propagate(&nodes, node, &g, &mut grads);
        }
        Ok(Grads { grads, visited })
    }
}

fn check_len(op: &'static str, shape: &[usize], len: usize) -> Result<()> {
    if numel(shape) != len {
        return Err(Error::shape(
            op,
            format!("shape {:?} holds {} values, got {}", shape, numel(shape), len),
        ));
    }
    Ok(())
}

/// Gradient buffer of `id`, created on first use. `None` for nodes that do
/// not require grad.
fn slot<'g>(
    nodes: &[Node],
    grads: &'g mut [Option<Vec<f64>>],
    id: usize,
) -> Option<&'g mut Vec<f64>> {
    if !nodes[id].requires_grad {
        return None;
    }
    Some(grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()]))
}

fn propagate(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    match node.op {
        Op::Leaf | Op::Constant => {}
        Op::MatMul { a, b, trans_b } => {
            let (m, k) = (nodes[a].shape[0], nodes[a].shape[1]);
            let n = node.shape[1];
            let av = View::row_major(m, k);
            let bv = if trans_b {
                View::row_major(n, k).t()
            } else {
                View::row_major(k, n)
            };
            let gv = View::row_major(m, n);
            if let Some(ga) = slot(nodes, grads, a) {
                // dA = dC · Bᵀ
                gemm(g, gv, &nodes[b].value, bv.t(), ga, 1.0);
            }
            if let Some(gb) = slot(nodes, grads, b) {
                if trans_b {
                    // B is stored n×k: dB = dCᵀ · A
                    gemm(g, gv.t(), &nodes[a].value, av, gb, 1.0);
                } else {
                    // dB = Aᵀ · dC
                    gemm(&nodes[a].value, av.t(), g, gv, gb, 1.0);
                }
            }
        }
        Op::Add {
            a,
            b,
            row_broadcast,
        } => {
            if let Some(ga) = slot(nodes, grads, a) {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
            }
            if let Some(gb) = slot(nodes, grads, b) {
                if row_broadcast {
                    let cols = gb.len();
                    for row in g.chunks_exact(cols) {
                        gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                } else {
                    gb.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
            }
        }
        Op::Sub { a, b } => {
            if let Some(ga) = slot(nodes, grads, a) {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
            }
            if let Some(gb) = slot(nodes, grads, b) {
                gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y);
            }
        }
        Op::Mul { a, b } => {
            if let Some(ga) = slot(nodes, grads, a) {
                for ((x, y), bv) in ga.iter_mut().zip(g).zip(&nodes[b].value) {
                    *x += y * bv;
                }
            }
            if let Some(gb) = slot(nodes, grads, b) {
                for ((x, y), av) in gb.iter_mut().zip(g).zip(&nodes[a].value) {
                    *x += y * av;
                }
            }
        }
        Op::Scale { a, factor } => {
            if let Some(ga) = slot(nodes, grads, a) {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += factor * y);
            }
        }
        Op::Concat {
            ref parts,
            outer,
            inner,
            ref dims,
        } => {
            let total: usize = dims.iter().sum();
            let mut offset = 0;
            for (&p, &d) in parts.iter().zip(dims) {
                if let Some(gp) = slot(nodes, grads, p) {
                    let block = d * inner;
                    for o in 0..outer {
                        let src = o * total * inner + offset * inner;
                        gp[o * block..(o + 1) * block]
                            .iter_mut()
                            .zip(&g[src..src + block])
                            .for_each(|(x, y)| *x += y);
                    }
                }
                offset += d;
            }
        }
        Op::Slice {
            a,
            outer,
            inner,
            src_dim,
            start,
            end,
        } => {
            if let Some(ga) = slot(nodes, grads, a) {
                let block = (end - start) * inner;
                for o in 0..outer {
                    let dst = o * src_dim * inner + start * inner;
                    ga[dst..dst + block]
                        .iter_mut()
                        .zip(&g[o * block..(o + 1) * block])
                        .for_each(|(x, y)| *x += y);
                }
            }
        }
        Op::Relu { a } => {
            if let Some(ga) = slot(nodes, grads, a) {
                for ((x, y), out) in ga.iter_mut().zip(g).zip(&node.value) {
                    if *out > 0.0 {
                        *x += y;
                    }
                }
            }
        }
        Op::Tanh { a } => {
            if let Some(ga) = slot(nodes, grads, a) {
                for ((x, y), out) in ga.iter_mut().zip(g).zip(&node.value) {
                    *x += y * (1.0 - out * out);
                }
            }
        }
        Op::Sigmoid { a } => {
            if let Some(ga) = slot(nodes, grads, a) {
                for ((x, y), out) in ga.iter_mut().zip(g).zip(&node.value) {
                    *x += y * out * (1.0 - out);
                }
            }
        }
        Op::Pick { a, ref src } => {
            if let Some(ga) = slot(nodes, grads, a) {
                for (&s, y) in src.iter().zip(g) {
                    ga[s] += y;
                }
            }
        }
        Op::Sum { a } => {
            if let Some(ga) = slot(nodes, grads, a) {
                ga.iter_mut().for_each(|x| *x += g[0]);
            }
        }
        Op::Mean { a } => {
            if let Some(ga) = slot(nodes, grads, a) {
                let n = ga.len().max(1) as f64;
                ga.iter_mut().for_each(|x| *x += g[0] / n);
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].shape.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    pub fn value(&self) -> Ref<'t, [f64]> {
        Ref::map(self.tape.nodes.borrow(), |n| n[self.id].value.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.value().to_vec()
    }

    pub fn to_tensor(&self) -> Tensor {
        let nodes = self.tape.nodes.borrow();
        let node = &nodes[self.id];
        Tensor::new(node.value.clone(), &node.shape, false).expect("node shape is consistent")
    }

    /// First element; meant for scalar losses.
    pub fn item(&self) -> f64 {
        self.value()[0]
    }

    fn same_tape(&self, other: &Var<'_>, op: &'static str) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::shape(op, "operands live on different tapes"))
        }
    }

    fn unary(&self, f: impl Fn(f64) -> f64, op: impl FnOnce(usize) -> Op) -> Var<'t> {
        let (shape, value, rg) = {
            let nodes = self.tape.nodes.borrow();
            let n = &nodes[self.id];
            (
                n.shape.clone(),
                n.value.iter().map(|&x| f(x)).collect(),
                n.requires_grad,
            )
        };
        self.tape.push(shape, value, op(self.id), rg)
    }

    fn elementwise(
        &self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>> {
        self.same_tape(&other, name)?;
        let (shape, value, rg) = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id], &nodes[other.id]);
            if a.shape != b.shape {
                return Err(Error::shape(
                    name,
                    format!("{:?} vs {:?}", a.shape, b.shape),
                ));
            }
            let v = a.value.iter().zip(&b.value).map(|(&x, &y)| f(x, y)).collect();
            (a.shape.clone(), v, a.requires_grad || b.requires_grad)
        };
        Ok(self.tape.push(shape, value, op, rg))
    }

    fn matmul_impl(&self, other: Var<'t>, trans_b: bool) -> Result<Var<'t>> {
        let name = if trans_b { "matmul_nt" } else { "matmul" };
        self.same_tape(&other, name)?;
        let (shape, value, rg) = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id], &nodes[other.id]);
            if a.shape.len() != 2 || b.shape.len() != 2 {
                return Err(Error::shape(
                    name,
                    format!("expects matrices, got {:?} and {:?}", a.shape, b.shape),
                ));
            }
            let (m, k) = (a.shape[0], a.shape[1]);
            let (bk, n, bv) = if trans_b {
                (b.shape[1], b.shape[0], View::row_major(b.shape[0], b.shape[1]).t())
            } else {
                (b.shape[0], b.shape[1], View::row_major(b.shape[0], b.shape[1]))
            };
            if k != bk {
                return Err(Error::shape(
                    name,
                    format!("inner dimensions differ: {:?} and {:?}", a.shape, b.shape),
                ));
            }
            let mut out = vec![0.0; m * n];
            gemm(&a.value, View::row_major(m, k), &b.value, bv, &mut out, 0.0);
            (vec![m, n], out, a.requires_grad || b.requires_grad)
        };
        Ok(self.tape.push(
            shape,
            value,
            Op::MatMul {
                a: self.id,
                b: other.id,
                trans_b,
            },
            rg,
        ))
    }

    /// `[m, k] · [k, n] → [m, n]`.
    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.matmul_impl(other, false)
    }

    /// `[m, k] · [n, k]ᵀ → [m, n]`; applies an `[out, in]` weight matrix to
    /// row vectors without materialising its transpose.
    pub fn matmul_nt(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.matmul_impl(other, true)
    }

    /// Elementwise sum; `other` may also be a `[n]` vector added to every
    /// row of an `[m, n]` matrix.
    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other, "add")?;
        let bias = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id], &nodes[other.id]);
            a.shape.len() == 2 && b.shape.len() == 1 && a.shape[1] == b.shape[0]
        };
        if !bias {
            return self.elementwise(
                other,
                "add",
                |x, y| x + y,
                Op::Add {
                    a: self.id,
                    b: other.id,
                    row_broadcast: false,
                },
            );
        }
        let (shape, value, rg) = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id], &nodes[other.id]);
            let cols = b.value.len();
            let mut v = a.value.clone();
            for row in v.chunks_exact_mut(cols) {
                row.iter_mut().zip(&b.value).for_each(|(x, y)| *x += y);
            }
            (a.shape.clone(), v, a.requires_grad || b.requires_grad)
        };
        Ok(self.tape.push(
            shape,
            value,
            Op::Add {
                a: self.id,
                b: other.id,
                row_broadcast: true,
            },
            rg,
        ))
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(
            other,
            "sub",
            |x, y| x - y,
            Op::Sub {
                a: self.id,
                b: other.id,
            },
        )
    }

    pub fn mul_elem(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(
            other,
            "mul_elem",
            |x, y| x * y,
            Op::Mul {
                a: self.id,
                b: other.id,
            },
        )
    }

    pub fn scale(&self, factor: f64) -> Var<'t> {
        self.unary(|x| x * factor, |a| Op::Scale { a, factor })
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(|x| if x > 0.0 { x } else { 0.0 }, |a| Op::Relu { a })
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(f64::tanh, |a| Op::Tanh { a })
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(sigmoid, |a| Op::Sigmoid { a })
    }

    /// `x · wᵀ + b` for an `[out, in]` weight and `[out]` bias.
    pub fn linear(&self, weight: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
        self.matmul_nt(weight)?.add(bias)
    }

    /// Rows (axis 0) or columns (axis 1) `start..end`.
    pub fn slice(&self, start: usize, end: usize, axis: usize) -> Result<Var<'t>> {
        let (shape, value, rg, outer, inner, src_dim) = {
            let nodes = self.tape.nodes.borrow();
            let n = &nodes[self.id];
            let (outer, dim, inner) = split_axis("slice", &n.shape, axis)?;
            if start > end || end > dim {
                return Err(Error::shape(
                    "slice",
                    format!("range {}..{} invalid for axis {} of {:?}", start, end, axis, n.shape),
                ));
            }
            let block = (end - start) * inner;
            let mut v = Vec::with_capacity(outer * block);
            for o in 0..outer {
                let src = o * dim * inner + start * inner;
                v.extend_from_slice(&n.value[src..src + block]);
            }
            let mut shape = n.shape.clone();
            shape[axis] = end - start;
            (shape, v, n.requires_grad, outer, inner, dim)
        };
        Ok(self.tape.push(
            shape,
            value,
            Op::Slice {
                a: self.id,
                outer,
                inner,
                src_dim,
                start,
                end,
            },
            rg,
        ))
    }

    /// Maximum along `axis` with the arg-max positions. Ties go to the
    /// lowest index, and only that entry receives gradient.
    pub fn max_with_index(&self, axis: usize) -> Result<(Var<'t>, Vec<usize>)> {
        let (shape, value, rg, idx, src) = {
            let nodes = self.tape.nodes.borrow();
            let n = &nodes[self.id];
            let (outer, dim, inner) = split_axis("reduce_max_with_index", &n.shape, axis)?;
            if dim == 0 {
                return Err(Error::shape(
                    "reduce_max_with_index",
                    format!("empty axis {} in {:?}", axis, n.shape),
                ));
            }
            let mut value = Vec::with_capacity(outer * inner);
            let mut idx = Vec::with_capacity(outer * inner);
            let mut src = Vec::with_capacity(outer * inner);
            for o in 0..outer {
                for i in 0..inner {
                    let at = |d: usize| o * dim * inner + d * inner + i;
                    let mut best = 0;
                    for d in 1..dim {
                        if n.value[at(d)] > n.value[at(best)] {
                            best = d;
                        }
                    }
                    value.push(n.value[at(best)]);
                    idx.push(best);
                    src.push(at(best));
                }
            }
            (reduced_shape(&n.shape, axis), value, n.requires_grad, idx, src)
        };
        let out = self.tape.push(shape, value, Op::Pick { a: self.id, src }, rg);
        Ok((out, idx))
    }

    /// Picks one entry along `axis` for every position of the other axes:
    /// for a `[m, n]` matrix and `axis == 1`, `out[r] = t[r, indices[r]]`.
    pub fn gather(&self, indices: &[usize], axis: usize) -> Result<Var<'t>> {
        let (shape, value, rg, src) = {
            let nodes = self.tape.nodes.borrow();
            let n = &nodes[self.id];
            let (outer, dim, inner) = split_axis("gather", &n.shape, axis)?;
            if indices.len() != outer * inner {
                return Err(Error::shape(
                    "gather",
                    format!(
                        "{} indices for {:?} along axis {} (need {})",
                        indices.len(),
                        n.shape,
                        axis,
                        outer * inner
                    ),
                ));
            }
            let mut src = Vec::with_capacity(indices.len());
            for o in 0..outer {
                for i in 0..inner {
                    let d = indices[o * inner + i];
                    if d >= dim {
                        return Err(Error::shape(
                            "gather",
                            format!("index {} out of range for axis of size {}", d, dim),
                        ));
                    }
                    src.push(o * dim * inner + d * inner + i);
                }
            }
            let value = src.iter().map(|&s| n.value[s]).collect();
            (reduced_shape(&n.shape, axis), value, n.requires_grad, src)
        };
        Ok(self.tape.push(shape, value, Op::Pick { a: self.id, src }, rg))
    }

    pub fn sum(&self) -> Var<'t> {
        let (value, rg) = {
            let nodes = self.tape.nodes.borrow();
            let n = &nodes[self.id];
            (n.value.iter().sum::<f64>(), n.requires_grad)
        };
        self.tape.push(vec![1], vec![value], Op::Sum { a: self.id }, rg)
    }

    pub fn mean(&self) -> Var<'t> {
        let (value, rg) = {
            let nodes = self.tape.nodes.borrow();
            let n = &nodes[self.id];
            let len = n.value.len().max(1) as f64;
            (n.value.iter().sum::<f64>() / len, n.requires_grad)
        };
        self.tape.push(vec![1], vec![value], Op::Mean { a: self.id }, rg)
    }

    /// Value-identical copy with no path back to this node.
    pub fn detach(&self) -> Var<'t> {
        let (shape, value) = {
            let nodes = self.tape.nodes.borrow();
            let n = &nodes[self.id];
            (n.shape.clone(), n.value.clone())
        };
        self.tape.push(shape, value, Op::Constant, false)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
