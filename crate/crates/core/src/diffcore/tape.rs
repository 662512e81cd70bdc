//! Wengert-list reverse mode over [`Matrix`] values.
//!
//! Every operation appends a node holding its output value and enough
//! information to push a gradient back to its inputs. [`Tape::backward`]
//! walks the list from the loss node down to the first node, which is the
//! exact reverse of execution order, and deposits parameter gradients into a
//! [`ParamStore`].

use rand::Rng;

use super::matrix::{gemm_acc, gemm_raw};
use super::{Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tgraph::EdgeSet;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<'g> {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    /// `x + row_scale[r] * bias` for every row `r`; scale 1 when absent.
    AddBias {
        x: Var,
        bias: Var,
        row_scale: Option<Vec<f64>>,
    },
    ScaleRows {
        x: Var,
        scale: Vec<f64>,
    },
    NeighborSum {
        x: Var,
        edges: &'g EdgeSet,
    },
    ConcatPairs {
        x: Var,
        edges: &'g EdgeSet,
    },
    PairProject {
        x: Var,
        w: Var,
        edges: &'g EdgeSet,
    },
    EdgeScatterSum {
        x: Var,
        edges: &'g EdgeSet,
    },
    Relu(Var),
    Sigmoid(Var),
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    Sum(Var),
    WeightedSum {
        x: Var,
        weights: Matrix,
    },
    BceWithLogits {
        logits: Var,
        targets: Vec<f64>,
    },
    SigmoidMse {
        logits: Var,
        targets: Vec<f64>,
    },
}

struct Node<'g> {
    value: Matrix,
    op: Op<'g>,
    requires_grad: bool,
}

/// Records differentiable operations. Edge sets are borrowed for the life of
/// the tape so message-passing nodes do not copy them.
#[derive(Default)]
pub struct Tape<'g> {
    nodes: Vec<Node<'g>>,
}

fn dim_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Dimension {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'g> Tape<'g> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Bytes held by recorded values; the working set of a forward pass.
    pub fn allocated_bytes(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.value.len() * std::mem::size_of::<f64>())
            .sum()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op<'g>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Places a parameter on the tape. Call once per parameter per forward
    /// pass; every use of the returned [`Var`] feeds the same gradient slot.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).value.clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let out = va.matmul(vb).map_err(|_| dim_err("matmul", va, vb))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(dim_err("add", va, vb));
        }
        let mut out = va.clone();
        out.add_scaled(vb, 1.0);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// Adds a `1 x m` bias to every row, optionally scaled per row.
    pub fn add_bias(&mut self, x: Var, bias: Var, row_scale: Option<Vec<f64>>) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        if vb.rows() != 1 || vb.cols() != vx.cols() {
            return Err(dim_err("add_bias", vx, vb));
        }
        if let Some(s) = &row_scale {
            if s.len() != vx.rows() {
                return Err(Error::Dimension {
                    op: "add_bias",
                    left: vx.shape(),
                    right: (s.len(), 1),
                });
            }
        }
        let mut out = vx.clone();
        let b = vb.row(0);
        for r in 0..out.rows() {
            let s = row_scale.as_ref().map_or(1.0, |s| s[r]);
            for (o, bv) in out.row_mut(r).iter_mut().zip(b) {
                *o += s * bv;
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(out, Op::AddBias { x, bias, row_scale }, rg))
    }

    pub fn scale_rows(&mut self, x: Var, scale: Vec<f64>) -> Result<Var> {
        let vx = self.value(x);
        if scale.len() != vx.rows() {
            return Err(Error::Dimension {
                op: "scale_rows",
                left: vx.shape(),
                right: (scale.len(), 1),
            });
        }
        let mut out = vx.clone();
        for (r, s) in scale.iter().enumerate() {
            out.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::ScaleRows { x, scale }, rg))
    }

    /// Row `v` of the output is the sum of feature rows `w` over edges `(v, w)`.
    pub fn neighbor_sum(&mut self, x: Var, edges: &'g EdgeSet) -> Result<Var> {
        let vx = self.value(x);
        edges.check_nodes("neighbor_sum", vx.rows())?;
        let mut out = Matrix::zeros(vx.rows(), vx.cols());
        for &(v, w) in edges.pairs() {
            let src = vx.row(w);
            for (o, s) in out.row_mut(v).iter_mut().zip(src) {
                *o += s;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::NeighborSum { x, edges }, rg))
    }

    /// One row per edge `(v, w)`: `[x_v | x_w]`.
    pub fn concat_pairs(&mut self, x: Var, edges: &'g EdgeSet) -> Result<Var> {
        let vx = self.value(x);
        edges.check_nodes("concat_pairs", vx.rows())?;
        let d = vx.cols();
        let mut out = Matrix::zeros(edges.len(), 2 * d);
        for (k, &(v, w)) in edges.pairs().iter().enumerate() {
            let row = out.row_mut(k);
            row[..d].copy_from_slice(vx.row(v));
            row[d..].copy_from_slice(vx.row(w));
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::ConcatPairs { x, edges }, rg))
    }

    /// Equivalent to `matmul(concat_pairs(x, edges), w)` without building the
    /// `|E| x 2d` pair matrix: the top half of `w` acts on `x_v`, the bottom
    /// half on `x_w`, and both projections are computed once per node.
    pub fn pair_project(&mut self, x: Var, w: Var, edges: &'g EdgeSet) -> Result<Var> {
        let (vx, vw) = (self.value(x), self.value(w));
        edges.check_nodes("pair_project", vx.rows())?;
        let (n, d) = vx.shape();
        if vw.rows() != 2 * d {
            return Err(Error::Dimension {
                op: "pair_project",
                left: (edges.len(), 2 * d),
                right: vw.shape(),
            });
        }
        let h = vw.cols();
        let mut src_proj = vec![0.0; n * h];
        let mut dst_proj = vec![0.0; n * h];
        let (top, bottom) = vw.as_slice().split_at(d * h);
        gemm_raw(n, d, h, vx.as_slice(), d, false, top, h, false, &mut src_proj);
        gemm_raw(n, d, h, vx.as_slice(), d, false, bottom, h, false, &mut dst_proj);
        let mut out = Matrix::zeros(edges.len(), h);
        for (k, &(v, u)) in edges.pairs().iter().enumerate() {
            let a = &src_proj[v * h..(v + 1) * h];
            let b = &dst_proj[u * h..(u + 1) * h];
            for ((o, a), b) in out.row_mut(k).iter_mut().zip(a).zip(b) {
                *o = a + b;
            }
        }
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(out, Op::PairProject { x, w, edges }, rg))
    }

    /// Row `v` of the output sums the edge rows of every edge leaving `v`.
    pub fn edge_scatter_sum(&mut self, x: Var, edges: &'g EdgeSet, n: usize) -> Result<Var> {
        let vx = self.value(x);
        if vx.rows() != edges.len() {
            return Err(Error::Dimension {
                op: "edge_scatter_sum",
                left: vx.shape(),
                right: (edges.len(), vx.cols()),
            });
        }
        edges.check_nodes("edge_scatter_sum", n)?;
        let mut out = Matrix::zeros(n, vx.cols());
        for (k, &(v, _)) in edges.pairs().iter().enumerate() {
            for (o, s) in out.row_mut(v).iter_mut().zip(vx.row(k)) {
                *o += s;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::EdgeScatterSum { x, edges }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let rg = self.rg(x);
        self.push(out, Op::Sigmoid(x), rg)
    }

    /// Inverted dropout. Identity (the same `Var`) when not training or when
    /// `rate` is zero.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Contract(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let vx = self.value(x);
        let mask: Vec<f64> = (0..vx.len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mut out = vx.clone();
        for (o, m) in out.as_mut_slice().iter_mut().zip(&mask) {
            *o *= m;
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::Dropout { x, mask }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Matrix::filled(1, 1, s), Op::Sum(x), rg)
    }

    /// `sum(x .* weights)` with constant weights.
    pub fn weighted_sum(&mut self, x: Var, weights: Matrix) -> Result<Var> {
        let vx = self.value(x);
        if vx.shape() != weights.shape() {
            return Err(dim_err("weighted_sum", vx, &weights));
        }
        let s = vx.as_slice().iter().zip(weights.as_slice()).map(|(a, b)| a * b).sum();
        let rg = self.rg(x);
        Ok(self.push(Matrix::filled(1, 1, s), Op::WeightedSum { x, weights }, rg))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against 0/1 targets,
    /// computed in the overflow-free log-sum-exp form.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let z = self.column_values("bce_with_logits", logits, targets.len())?;
        let n = targets.len() as f64;
        let loss = z
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        let rg = self.rg(logits);
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Mean squared error between `sigmoid(logits)` and targets.
    pub fn sigmoid_mse(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let z = self.column_values("sigmoid_mse", logits, targets.len())?;
        let n = targets.len() as f64;
        let loss = z
            .iter()
            .zip(targets)
            .map(|(&z, &t)| (sigmoid(z) - t).powi(2))
            .sum::<f64>()
            / n;
        let rg = self.rg(logits);
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::SigmoidMse {
                logits,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    fn column_values(&self, op: &'static str, v: Var, n: usize) -> Result<&[f64]> {
        let m = self.value(v);
        if m.cols() != 1 || m.rows() != n || n == 0 {
            return Err(Error::Dimension {
                op,
                left: m.shape(),
                right: (n, 1),
            });
        }
        Ok(m.as_slice())
    }

    /// Back-propagates from a `1 x 1` loss, adding `d loss / d param` into the
    /// gradient of every parameter that reached it. Gradients accumulate;
    /// zero them between steps.
    pub fn backward(self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let Tape { nodes } = self;
        let shape = nodes[loss.0].value.shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got a {}x{} value",
                shape.0, shape.1
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let needs = |v: Var| nodes[v.0].requires_grad;
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => store.get_mut(*id).grad.add_scaled(&g, 1.0),
                Op::MatMul(a, b) => {
                    if needs(*a) {
                        let slot = slot(&mut grads, *a, val(*a));
                        gemm_acc(&g, false, val(*b), true, slot);
                    }
                    if needs(*b) {
                        let slot = slot(&mut grads, *b, val(*b));
                        gemm_acc(val(*a), true, &g, false, slot);
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if needs(v) {
                            slot(&mut grads, v, val(v)).add_scaled(&g, 1.0);
                        }
                    }
                }
                Op::AddBias { x, bias, row_scale } => {
                    if needs(*x) {
                        slot(&mut grads, *x, val(*x)).add_scaled(&g, 1.0);
                    }
                    if needs(*bias) {
                        let gb = slot(&mut grads, *bias, val(*bias));
                        for r in 0..g.rows() {
                            let s = row_scale.as_ref().map_or(1.0, |s| s[r]);
                            for (o, gv) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                                *o += s * gv;
                            }
                        }
                    }
                }
                Op::ScaleRows { x, scale } => {
                    if needs(*x) {
                        let gx = slot(&mut grads, *x, val(*x));
                        for (r, s) in scale.iter().enumerate() {
                            for (o, gv) in gx.row_mut(r).iter_mut().zip(g.row(r)) {
                                *o += s * gv;
                            }
                        }
                    }
                }
                Op::NeighborSum { x, edges } => {
                    if needs(*x) {
                        let gx = slot(&mut grads, *x, val(*x));
                        for &(v, w) in edges.pairs() {
                            for (o, gv) in gx.row_mut(w).iter_mut().zip(g.row(v)) {
                                *o += gv;
                            }
                        }
                    }
                }
                Op::ConcatPairs { x, edges } => {
                    if needs(*x) {
                        let gx = slot(&mut grads, *x, val(*x));
                        let d = gx.cols();
                        for (k, &(v, w)) in edges.pairs().iter().enumerate() {
                            let gk = g.row(k);
                            for (o, gv) in gx.row_mut(v).iter_mut().zip(&gk[..d]) {
                                *o += gv;
                            }
                            for (o, gv) in gx.row_mut(w).iter_mut().zip(&gk[d..]) {
                                *o += gv;
                            }
                        }
                    }
                }
                Op::PairProject { x, w, edges } => {
                    let vx = val(*x);
                    let vw = val(*w);
                    let (n, d) = vx.shape();
                    let h = g.cols();
                    // Collapse edge gradients onto their source and target nodes.
                    let mut g_src = vec![0.0; n * h];
                    let mut g_dst = vec![0.0; n * h];
                    for (k, &(v, u)) in edges.pairs().iter().enumerate() {
                        for (j, gv) in g.row(k).iter().enumerate() {
                            g_src[v * h + j] += gv;
                            g_dst[u * h + j] += gv;
                        }
                    }
                    if needs(*w) {
                        let gw = slot(&mut grads, *w, vw).as_mut_slice();
                        let (top, bottom) = gw.split_at_mut(d * h);
                        gemm_raw(d, n, h, vx.as_slice(), d, true, &g_src, h, false, top);
                        gemm_raw(d, n, h, vx.as_slice(), d, true, &g_dst, h, false, bottom);
                    }
                    if needs(*x) {
                        let (top, bottom) = vw.as_slice().split_at(d * h);
                        let gx = slot(&mut grads, *x, vx).as_mut_slice();
                        gemm_raw(n, h, d, &g_src, h, false, top, h, true, gx);
                        gemm_raw(n, h, d, &g_dst, h, false, bottom, h, true, gx);
                    }
                }
                Op::EdgeScatterSum { x, edges } => {
                    if needs(*x) {
                        let gx = slot(&mut grads, *x, val(*x));
                        for (k, &(v, _)) in edges.pairs().iter().enumerate() {
                            for (o, gv) in gx.row_mut(k).iter_mut().zip(g.row(v)) {
                                *o += gv;
                            }
                        }
                    }
                }
                Op::Relu(x) => {
                    if needs(*x) {
                        let gx = slot(&mut grads, *x, val(*x));
                        for ((o, gv), xv) in gx.as_mut_slice().iter_mut().zip(g.as_slice()).zip(val(*x).as_slice()) {
                            if *xv > 0.0 {
                                *o += gv;
                            }
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    if needs(*x) {
                        let gx = slot(&mut grads, *x, val(*x));
                        for ((o, gv), s) in gx.as_mut_slice().iter_mut().zip(g.as_slice()).zip(node.value.as_slice()) {
                            *o += gv * s * (1.0 - s);
                        }
                    }
                }
                Op::Dropout { x, mask } => {
                    if needs(*x) {
                        let gx = slot(&mut grads, *x, val(*x));
                        for ((o, gv), m) in gx.as_mut_slice().iter_mut().zip(g.as_slice()).zip(mask) {
                            *o += gv * m;
                        }
                    }
                }
                Op::Sum(x) => {
                    if needs(*x) {
                        let g0 = g.get(0, 0);
                        slot(&mut grads, *x, val(*x)).as_mut_slice().iter_mut().for_each(|o| *o += g0);
                    }
                }
                Op::WeightedSum { x, weights } => {
                    if needs(*x) {
                        slot(&mut grads, *x, val(*x)).add_scaled(weights, g.get(0, 0));
                    }
                }
                Op::BceWithLogits { logits, targets } => {
                    if needs(*logits) {
                        let scale = g.get(0, 0) / targets.len() as f64;
                        let z = val(*logits);
                        let gz = slot(&mut grads, *logits, z);
                        for ((o, zv), y) in gz.as_mut_slice().iter_mut().zip(z.as_slice()).zip(targets) {
                            *o += scale * (sigmoid(*zv) - y);
                        }
                    }
                }
                Op::SigmoidMse { logits, targets } => {
                    if needs(*logits) {
                        let scale = g.get(0, 0) / targets.len() as f64;
                        let z = val(*logits);
                        let gz = slot(&mut grads, *logits, z);
                        for ((o, zv), t) in gz.as_mut_slice().iter_mut().zip(z.as_slice()).zip(targets) {
                            let s = sigmoid(*zv);
                            *o += scale * 2.0 * (s - t) * s * (1.0 - s);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn slot<'a>(grads: &'a mut [Option<Matrix>], v: Var, like: &Matrix) -> &'a mut Matrix {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(like.rows(), like.cols()))
}
