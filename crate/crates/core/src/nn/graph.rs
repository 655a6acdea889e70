use super::ops::{self, ConvDims, NORM_EPSILON};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    Conv1d { x: usize, w: usize, b: usize, dims: ConvDims },
    Linear { x: usize, w: usize, b: usize },
    Relu { x: usize },
    NormalizeRows { x: usize, norms: Vec<f64> },
    Reshape { x: usize },
    MatMul { a: usize, b: usize },
    Triplet { x: usize, margin: f64 },
    Sum { x: usize },
    SumSquares { x: usize },
    WeightedSum { x: usize, weights: Vec<f64> },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Tape of forward computations. Every operator records its output; the
/// reverse pass walks the tape backwards from a scalar loss.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every recorded value.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` when the value does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Like [`Gradients::get`] but zero-filled for unreachable values.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> Result<&Tensor> {
        self.nodes
            .get(v.0)
            .map(|n| &n.value)
            .ok_or_else(|| Error::Graph(format!("value {} is not recorded on this graph", v.0)))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Which side of every non-smooth point this forward pass took: the
    /// sign of each ReLU input, whether each triplet hinge is active, and
    /// whether each normalized row fell under the epsilon floor. Two passes
    /// with equal patterns lie on the same smooth piece of the function.
    pub fn branch_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { x } => out.extend(self.nodes[*x].value.data().iter().map(|&v| v > 0.0)),
                Op::NormalizeRows { norms, .. } => out.extend(norms.iter().map(|&n| n < NORM_EPSILON)),
                Op::Triplet { x, margin } => {
                    let t = &self.nodes[*x].value;
                    let dim = t.shape()[1];
                    out.extend(ops::triplet_hinges(t.data(), dim, *margin).into_iter().map(|h| h > 0.0));
                }
                _ => {}
            }
        }
        out
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Input that never needs a gradient (skips work in the reverse pass).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    /// Batched 1D cross-correlation: `x` `[B, C, L]`, `w` `[O, C, K]`, `b` `[O]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xs, ws, bs) = (self.node(x)?, self.node(w)?, self.node(b)?);
        if xs.shape().len() != 3 {
            return Err(Error::shape("graph conv1d expects a [B, C, L] input"));
        }
        let dims = ConvDims::new(xs.shape(), ws.shape(), bs.shape(), stride, padding)?;
        let mut out = vec![0.0; dims.batch * dims.out_channels * dims.out_len];
        ops::conv1d_kernel(&dims, xs.data(), ws.data(), bs.data(), &mut out);
        let t = Tensor::new(vec![dims.batch, dims.out_channels, dims.out_len], out)?;
        Ok(self.push(t, Op::Conv1d { x: x.0, w: w.0, b: b.0, dims }))
    }

    /// `x` `[B, in]`, `w` `[out, in]`, `b` `[out]` → `[B, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.node(x)?, self.node(w)?, self.node(b)?);
        let (&[batch, inp], &[out, win], &[bout]) = (xs.shape(), ws.shape(), bs.shape()) else {
            return Err(Error::shape("linear expects x [B, in], w [out, in], b [out]"));
        };
        if win != inp || bout != out {
            return Err(Error::shape(format!(
                "linear shapes disagree: x {:?}, w {:?}, b {:?}",
                xs.shape(),
                ws.shape(),
                bs.shape()
            )));
        }
        let mut y = vec![0.0; batch * out];
        ops::linear_kernel(xs.data(), batch, inp, ws.data(), bs.data(), out, &mut y);
        let t = Tensor::new(vec![batch, out], y)?;
        Ok(self.push(t, Op::Linear { x: x.0, w: w.0, b: b.0 }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let mut t = self.node(x)?.clone();
        ops::relu_in_place(t.data_mut());
        Ok(self.push(t, Op::Relu { x: x.0 }))
    }

    /// Unit L2 norm per row of a 2D tensor (zero rows below the epsilon).
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let mut t = self.node(x)?.clone();
        let &[_, cols] = t.shape() else {
            return Err(Error::shape("normalize_rows expects a 2D tensor"));
        };
        let norms = if cols == 0 { Vec::new() } else { ops::l2_normalize_rows(t.data_mut(), cols) };
        Ok(self.push(t, Op::NormalizeRows { x: x.0, norms }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.node(x)?.clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape { x: x.0 }))
    }

    /// `a` `[m, k]` × `b` `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.node(a)?, self.node(b)?);
        let (&[m, k], &[k2, n]) = (at.shape(), bt.shape()) else {
            return Err(Error::shape("matmul expects two 2D tensors"));
        };
        if k != k2 {
            return Err(Error::shape(format!("matmul inner dims differ: {:?} x {:?}", at.shape(), bt.shape())));
        }
        let mut c = vec![0.0; m * n];
        ops::matmul_kernel(at.data(), bt.data(), m, k, n, &mut c);
        let t = Tensor::new(vec![m, n], c)?;
        Ok(self.push(t, Op::MatMul { a: a.0, b: b.0 }))
    }

    /// Triplet loss over the rows of `x`: row 0 anchor, row 1 positive,
    /// remaining rows negatives.
    pub fn triplet(&mut self, x: Var, margin: f64) -> Result<Var> {
        let t = self.node(x)?;
        let &[rows, dim] = t.shape() else {
            return Err(Error::shape("triplet expects a [2 + negatives, dim] tensor"));
        };
        if rows < 3 {
            return Err(Error::shape("triplet needs an anchor, a positive and at least one negative"));
        }
        if !(margin >= 0.0) {
            return Err(Error::Config(format!("margin must be >= 0, got {margin}")));
        }
        let loss = ops::triplet_rows(t.data(), dim, margin);
        Ok(self.push(Tensor::scalar(loss), Op::Triplet { x: x.0, margin }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.node(x)?.data().iter().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum { x: x.0 }))
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let s = self.node(x)?.data().iter().map(|v| v * v).sum();
        Ok(self.push(Tensor::scalar(s), Op::SumSquares { x: x.0 }))
    }

    /// `Σ x ⊙ weights` with constant weights.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<f64>) -> Result<Var> {
        let t = self.node(x)?;
        if weights.len() != t.len() {
            return Err(Error::shape(format!("{} weights for {} values", weights.len(), t.len())));
        }
        let s = t.data().iter().zip(&weights).map(|(a, b)| a * b).sum();
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { x: x.0, weights }))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| Error::Graph("backward called before any forward computation reached the loss".into()))?;
        if node.value.len() != 1 {
            return Err(Error::Graph(format!("loss must be a scalar, got shape {:?}", node.value.shape())));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Constant => {}
                Op::Conv1d { x, w, b, dims } => {
                    let (xv, wv) = (&self.nodes[*x].value, &self.nodes[*w].value);
                    let mut dw = vec![0.0; wv.len()];
                    let mut db = vec![0.0; dims.out_channels];
                    if matches!(self.nodes[*x].op, Op::Constant) {
                        ops::conv1d_backward(dims, xv.data(), wv.data(), &g, None, &mut dw, &mut db);
                    } else {
                        let mut dx = vec![0.0; xv.len()];
                        ops::conv1d_backward(dims, xv.data(), wv.data(), &g, Some(&mut dx), &mut dw, &mut db);
                        accumulate(&mut grads, *x, dx);
                    }
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db);
                }
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (&self.nodes[*x].value, &self.nodes[*w].value);
                    let (batch, inp) = (xv.shape()[0], xv.shape()[1]);
                    let out = wv.shape()[0];
                    let mut dx = vec![0.0; xv.len()];
                    let mut dw = vec![0.0; wv.len()];
                    let mut db = vec![0.0; out];
                    for bi in 0..batch {
                        let xr = &xv.data()[bi * inp..(bi + 1) * inp];
                        let dxr = &mut dx[bi * inp..(bi + 1) * inp];
                        for o in 0..out {
                            let go = g[bi * out + o];
                            if go == 0.0 {
                                continue;
                            }
                            db[o] += go;
                            let wr = &wv.data()[o * inp..(o + 1) * inp];
                            let dwr = &mut dw[o * inp..(o + 1) * inp];
                            for i in 0..inp {
                                dxr[i] += go * wr[i];
                                dwr[i] += go * xr[i];
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db);
                }
                Op::Relu { x } => {
                    let xv = self.nodes[*x].value.data();
                    let dx = g.iter().zip(xv).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::NormalizeRows { x, norms } => {
                    let y = node.value.data();
                    let cols = node.value.shape()[1];
                    let mut dx = vec![0.0; y.len()];
                    for (r, &norm) in norms.iter().enumerate() {
                        if norm < NORM_EPSILON {
                            continue;
                        }
                        let yr = &y[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            dx[r * cols + c] = (gr[c] - yr[c] * dot) / norm;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Reshape { x } => accumulate(&mut grads, *x, g.clone()),
                Op::MatMul { a, b } => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    let mut da = vec![0.0; m * k];
                    let mut dbm = vec![0.0; k * n];
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let br = &bv.data()[p * n..(p + 1) * n];
                            da[i * k + p] = gr.iter().zip(br).map(|(x, y)| x * y).sum();
                            let aval = av.data()[i * k + p];
                            if aval != 0.0 {
                                let dr = &mut dbm[p * n..(p + 1) * n];
                                for (d, gv) in dr.iter_mut().zip(gr) {
                                    *d += aval * gv;
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, dbm);
                }
                Op::Triplet { x, margin } => {
                    let xv = &self.nodes[*x].value;
                    let mut dx = vec![0.0; xv.len()];
                    ops::triplet_rows_backward(xv.data(), xv.shape()[1], *margin, g[0], &mut dx);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Sum { x } => {
                    let n = self.nodes[*x].value.len();
                    accumulate(&mut grads, *x, vec![g[0]; n]);
                }
                Op::SumSquares { x } => {
                    let dx = self.nodes[*x].value.data().iter().map(|v| 2.0 * v * g[0]).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::WeightedSum { x, weights } => {
                    accumulate(&mut grads, *x, weights.iter().map(|w| w * g[0]).collect());
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], idx: usize, delta: Vec<f64>) {
    match &mut grads[idx] {
        Some(existing) => existing.iter_mut().zip(&delta).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(delta),
    }
}
