//! Raw kernels shared by the autodiff graph and the inference path, so both
//! produce bit-identical values.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Vectors with an L2 norm below this normalize to zero.
pub const NORM_EPSILON: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvDims {
    pub batch: usize,
    pub in_channels: usize,
    pub len: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_len: usize,
}

pub fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || len + 2 * padding < kernel {
        return None;
    }
    Some((len + 2 * padding - kernel) / stride + 1)
}

impl ConvDims {
    pub fn new(input: &[usize], weight: &[usize], bias: &[usize], stride: usize, padding: usize) -> Result<Self> {
        let (batch, in_channels, len) = match *input {
            [c, l] => (1, c, l),
            [b, c, l] => (b, c, l),
            _ => return Err(Error::shape(format!("conv1d input must be [C, L] or [B, C, L], got {input:?}"))),
        };
        let [out_channels, wc, kernel] = *weight else {
            return Err(Error::shape(format!("conv1d weight must be [O, C, K], got {weight:?}")));
        };
        if wc != in_channels {
            return Err(Error::shape(format!("conv1d weight expects {wc} input channels, input has {in_channels}")));
        }
        if bias != [out_channels] {
            return Err(Error::shape(format!("conv1d bias must be [{out_channels}], got {bias:?}")));
        }
        let out_len = conv_out_len(len, kernel, stride, padding).filter(|&l| l >= 1).ok_or_else(|| {
            Error::shape(format!(
                "conv1d output length is not positive (len {len}, kernel {kernel}, stride {stride}, padding {padding})"
            ))
        })?;
        Ok(Self { batch, in_channels, len, out_channels, kernel, stride, padding, out_len })
    }

    /// Output positions `t` whose tap `k` lands inside the input.
    #[inline]
    fn valid_range(&self, k: usize) -> (usize, usize) {
        let lo = if self.padding > k { (self.padding - k).div_ceil(self.stride) } else { 0 };
        let hi = if self.len + self.padding > k {
            ((self.len + self.padding - k).div_ceil(self.stride)).min(self.out_len)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

pub fn conv1d_kernel(d: &ConvDims, x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let (cin, cout, k, len, lout) = (d.in_channels, d.out_channels, d.kernel, d.len, d.out_len);
    for bi in 0..d.batch {
        let xb = &x[bi * cin * len..(bi + 1) * cin * len];
        for o in 0..cout {
            let row = &mut out[(bi * cout + o) * lout..(bi * cout + o + 1) * lout];
            row.fill(b[o]);
            for c in 0..cin {
                let xc = &xb[c * len..(c + 1) * len];
                for kk in 0..k {
                    let wv = w[(o * cin + c) * k + kk];
                    let (lo, hi) = d.valid_range(kk);
                    for t in lo..hi {
                        row[t] += wv * xc[t * d.stride + kk - d.padding];
                    }
                }
            }
        }
    }
}

pub fn conv1d_backward(
    d: &ConvDims,
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    dx: Option<&mut [f64]>,
    dw: &mut [f64],
    db: &mut [f64],
) {
    let (cin, cout, k, len, lout) = (d.in_channels, d.out_channels, d.kernel, d.len, d.out_len);
    let mut dx = dx;
    for bi in 0..d.batch {
        for o in 0..cout {
            let g = &dy[(bi * cout + o) * lout..(bi * cout + o + 1) * lout];
            db[o] += g.iter().sum::<f64>();
            for c in 0..cin {
                let xoff = (bi * cin + c) * len;
                for kk in 0..k {
                    let widx = (o * cin + c) * k + kk;
                    let (lo, hi) = d.valid_range(kk);
                    let mut acc = 0.0;
                    for t in lo..hi {
                        acc += g[t] * x[xoff + t * d.stride + kk - d.padding];
                    }
                    dw[widx] += acc;
                    if let Some(dx) = dx.as_deref_mut() {
                        let wv = w[widx];
                        for t in lo..hi {
                            dx[xoff + t * d.stride + kk - d.padding] += wv * g[t];
                        }
                    }
                }
            }
        }
    }
}

/// `y[b, o] = bias[o] + Σ_i w[o, i] · x[b, i]`.
pub fn linear_kernel(x: &[f64], batch: usize, inp: usize, w: &[f64], b: &[f64], out_dim: usize, y: &mut [f64]) {
    for bi in 0..batch {
        let xr = &x[bi * inp..(bi + 1) * inp];
        for o in 0..out_dim {
            let wr = &w[o * inp..(o + 1) * inp];
            let mut acc = b[o];
            for (wv, xv) in wr.iter().zip(xr) {
                acc += wv * xv;
            }
            y[bi * out_dim + o] = acc;
        }
    }
}

/// `c[m, n] = Σ_p a[m, p] · b[p, n]`.
pub fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    c.fill(0.0);
    for i in 0..m {
        let cr = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let br = &b[p * n..(p + 1) * n];
            for (cv, bv) in cr.iter_mut().zip(br) {
                *cv += av * bv;
            }
        }
    }
}

pub fn relu_in_place(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Normalizes each row of width `cols` to unit L2 norm in place; rows
/// below [`NORM_EPSILON`] become zero. Returns the original norms.
pub fn l2_normalize_rows(x: &mut [f64], cols: usize) -> Vec<f64> {
    x.chunks_exact_mut(cols)
        .map(|row| {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < NORM_EPSILON {
                row.fill(0.0);
            } else {
                row.iter_mut().for_each(|v| *v /= norm);
            }
            norm
        })
        .collect()
}

pub fn l2_normalize(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    if !out.is_empty() {
        l2_normalize_rows(&mut out, x.len());
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `‖a−p‖² − ‖a−n‖² + margin` for every negative row.
pub fn triplet_hinges(rows: &[f64], dim: usize, margin: f64) -> Vec<f64> {
    let anchor = &rows[..dim];
    let pos = sq_dist(anchor, &rows[dim..2 * dim]);
    rows[2 * dim..].chunks_exact(dim).map(|n| pos - sq_dist(anchor, n) + margin).collect()
}

/// Mean over negatives of `max(0, ‖a−p‖² − ‖a−n‖² + margin)`.
pub fn triplet_rows(rows: &[f64], dim: usize, margin: f64) -> f64 {
    let hinges = triplet_hinges(rows, dim, margin);
    hinges.iter().map(|h| h.max(0.0)).sum::<f64>() / hinges.len() as f64
}

pub fn triplet_rows_backward(rows: &[f64], dim: usize, margin: f64, upstream: f64, grad: &mut [f64]) {
    let anchor = &rows[..dim];
    let positive = &rows[dim..2 * dim];
    let pos = sq_dist(anchor, positive);
    let k = rows.len() / dim - 2;
    let scale = upstream / k as f64;
    for j in 0..k {
        let neg = &rows[(2 + j) * dim..(3 + j) * dim];
        if pos - sq_dist(anchor, neg) + margin <= 0.0 {
            continue;
        }
        for i in 0..dim {
            let (a, p, n) = (anchor[i], positive[i], neg[i]);
            grad[i] += scale * (2.0 * (a - p) - 2.0 * (a - n));
            grad[dim + i] += scale * (-2.0 * (a - p));
            grad[(2 + j) * dim + i] += scale * (2.0 * (a - n));
        }
    }
}

/// Single-sample 1D convolution (`input` is `[C, L]` or `[B, C, L]`).
pub fn conv1d_forward(input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let d = ConvDims::new(input.shape(), weight.shape(), bias.shape(), stride, padding)?;
    let mut out = vec![0.0; d.batch * d.out_channels * d.out_len];
    conv1d_kernel(&d, input.data(), weight.data(), bias.data(), &mut out);
    let shape = if input.shape().len() == 2 {
        vec![d.out_channels, d.out_len]
    } else {
        vec![d.batch, d.out_channels, d.out_len]
    };
    Tensor::new(shape, out)
}

pub fn triplet_loss(anchor: &[f64], positive: &[f64], negatives: &[Vec<f64>], margin: f64) -> Result<f64> {
    let dim = anchor.len();
    if positive.len() != dim || negatives.iter().any(|n| n.len() != dim) {
        return Err(Error::shape("triplet vectors differ in dimension"));
    }
    if negatives.is_empty() {
        return Err(Error::shape("triplet needs at least one negative"));
    }
    if !(margin >= 0.0) {
        return Err(Error::Config(format!("margin must be >= 0, got {margin}")));
    }
    let mut rows = Vec::with_capacity(dim * (2 + negatives.len()));
    rows.extend_from_slice(anchor);
    rows.extend_from_slice(positive);
    for n in negatives {
        rows.extend_from_slice(n);
    }
    Ok(triplet_rows(&rows, dim, margin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data).unwrap()
    }

    /// Direct nested-loop reference with explicit zero padding.
    fn naive_conv(
        x: &[f64],
        c: usize,
        l: usize,
        w: &[f64],
        o: usize,
        k: usize,
        b: &[f64],
        s: usize,
        p: usize,
    ) -> Vec<f64> {
        let lout = (l + 2 * p - k) / s + 1;
        let mut padded = vec![vec![0.0; l + 2 * p]; c];
        for ci in 0..c {
            for i in 0..l {
                padded[ci][i + p] = x[ci * l + i];
            }
        }
        let mut out = vec![0.0; o * lout];
        for oi in 0..o {
            for ti in 0..lout {
                let mut acc = b[oi];
                for ci in 0..c {
                    for ki in 0..k {
                        acc += w[(oi * c + ci) * k + ki] * padded[ci][ti * s + ki];
                    }
                }
                out[oi * lout + ti] = acc;
            }
        }
        out
    }

    #[test]
    fn identity_kernel() {
        let x = t(vec![1, 4], vec![1.0, -2.0, 3.5, 0.25]);
        let y = conv1d_forward(&x, &t(vec![1, 1, 1], vec![1.0]), &t(vec![1], vec![0.0]), 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_with_padding() {
        let x = t(vec![1, 3], vec![1.0, 2.0, 3.0]);
        let y = conv1d_forward(&x, &t(vec![1, 1, 3], vec![1.0; 3]), &t(vec![1], vec![0.0]), 1, 1).unwrap();
        assert_eq!(y.data(), &[3.0, 6.0, 5.0]);
    }

    #[test]
    fn matches_naive_loops() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for &(c, l, o, k, s, p) in &[(1, 9, 2, 3, 1, 1), (3, 11, 4, 5, 2, 2), (2, 7, 3, 2, 3, 0), (2, 5, 1, 5, 2, 3)] {
            let x: Vec<f64> = (0..c * l).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..o * c * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..o).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y =
                conv1d_forward(&t(vec![c, l], x.clone()), &t(vec![o, c, k], w.clone()), &t(vec![o], b.clone()), s, p)
                    .unwrap();
            let reference = naive_conv(&x, c, l, &w, o, k, &b, s, p);
            for (a, r) in y.data().iter().zip(&reference) {
                assert!((a - r).abs() <= 1e-6, "{a} vs {r}");
            }
        }
    }

    #[test]
    fn conv_shape_errors() {
        let x = t(vec![1, 2], vec![1.0, 2.0]);
        let err = conv1d_forward(&x, &t(vec![1, 1, 5], vec![1.0; 5]), &t(vec![1], vec![0.0]), 1, 0).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        let err = conv1d_forward(&x, &t(vec![1, 2, 1], vec![1.0; 2]), &t(vec![1], vec![0.0]), 1, 0).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn encoder_lengths() {
        let mut len = 500;
        let mut lens = vec![];
        for stride in [1, 2, 1, 2, 1, 2] {
            len = conv_out_len(len, 5, stride, 2).unwrap();
            lens.push(len);
        }
        assert_eq!(lens, vec![500, 250, 250, 125, 125, 63]);
    }

    #[test]
    fn triplet_values() {
        let a = vec![0.0, 0.0];
        assert_eq!(triplet_loss(&a, &a, &[vec![1.0, 0.0], vec![0.0, 2.0]], 0.1).unwrap(), 0.0);
        let loss = triplet_loss(&a, &[1.0, 0.0], std::slice::from_ref(&a), 0.1).unwrap();
        assert!((loss - 1.1).abs() < 1e-15);
        assert!(triplet_loss(&a, &[1.0], std::slice::from_ref(&a), 0.1).is_err());
    }

    #[test]
    fn normalization_epsilon_rule() {
        let v = l2_normalize(&[3.0, 4.0]);
        assert_eq!(v, vec![0.6, 0.8]);
        assert_eq!(l2_normalize(&[1e-13, 0.0]), vec![0.0, 0.0]);
    }
}
