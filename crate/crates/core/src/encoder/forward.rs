//! Encoder forward passes. Inference and the training graph call the same
//! kernels in the same order, so both give bit-identical embeddings.

use rayon::prelude::*;

use super::params::{EncoderParams, HEAD};
use crate::error::{Error, Result};
use crate::nn::ops::{self, ConvDims};
use crate::nn::{Graph, Tensor, Var};

/// Histograms per inference chunk; bounds the size of intermediate buffers.
const CHUNK: usize = 64;

impl EncoderParams {
    fn conv_dims(&self, batch: usize) -> Result<Vec<ConvDims>> {
        let mut dims = Vec::with_capacity(self.config().conv.len());
        let mut cin = 1;
        let mut len = self.config().bins;
        for (i, c) in self.config().conv.iter().enumerate() {
            let d = ConvDims::new(
                &[batch, cin, len],
                self.tensors()[2 * i].shape(),
                self.tensors()[2 * i + 1].shape(),
                c.stride,
                c.kernel / 2,
            )?;
            cin = d.out_channels;
            len = d.out_len;
            dims.push(d);
        }
        Ok(dims)
    }

    /// Embeds `count` histograms stored back to back in `rows`, returning
    /// `count × h` values with each `h`-block L2-normalized.
    pub fn encode_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let b = self.config().bins;
        if !rows.len().is_multiple_of(b) {
            return Err(Error::shape(format!("{} values is not a whole number of {b}-bin histograms", rows.len())));
        }
        let h = self.config().embed_dim;
        let parts: Vec<Result<Vec<f64>>> = rows.par_chunks(CHUNK * b).map(|chunk| self.encode_chunk(chunk)).collect();
        let mut out = Vec::with_capacity(rows.len() / b * h);
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    fn encode_chunk(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let batch = rows.len() / self.config().bins;
        let t = self.tensors();
        let mut x = rows.to_vec();
        for (i, d) in self.conv_dims(batch)?.iter().enumerate() {
            let mut y = vec![0.0; d.batch * d.out_channels * d.out_len];
            ops::conv1d_kernel(d, &x, t[2 * i].data(), t[2 * i + 1].data(), &mut y);
            ops::relu_in_place(&mut y);
            x = y;
        }
        let lin = 2 * self.config().conv.len();
        for j in 0..3 {
            let (w, bias) = (&t[lin + 2 * j], &t[lin + 2 * j + 1]);
            let (out_dim, inp) = (w.shape()[0], w.shape()[1]);
            let mut y = vec![0.0; batch * out_dim];
            ops::linear_kernel(&x, batch, inp, w.data(), bias.data(), out_dim, &mut y);
            if j < 2 {
                ops::relu_in_place(&mut y);
            }
            x = y;
        }
        ops::l2_normalize_rows(&mut x, self.config().embed_dim);
        Ok(x)
    }

    /// Records the encoder on `g`. `vars` are the parameter leaves in tensor
    /// order; `input` is `[B, 1, b]`. Returns normalized `[B, h]` embeddings.
    pub fn forward_graph(&self, g: &mut Graph, vars: &[Var], input: Var) -> Result<Var> {
        let cfg = self.config();
        let mut x = input;
        for (i, c) in cfg.conv.iter().enumerate() {
            x = g.conv1d(x, vars[2 * i], vars[2 * i + 1], c.stride, c.kernel / 2)?;
            x = g.relu(x)?;
        }
        let shape = g.value(x).shape().to_vec();
        x = g.reshape(x, vec![shape[0], shape[1] * shape[2]])?;
        let lin = 2 * cfg.conv.len();
        for j in 0..3 {
            x = g.linear(x, vars[lin + 2 * j], vars[lin + 2 * j + 1])?;
            if j < 2 {
                x = g.relu(x)?;
            }
        }
        g.normalize_rows(x)
    }

    /// Full training graph for a group of sequences: E on every neuron,
    /// per-neuron normalization, concatenation, `W`, and a final L2
    /// normalization. `histograms` is `[S · N, b]` flattened; returns `[S, d]`.
    pub fn head_graph(&self, g: &mut Graph, vars: &[Var], histograms: Vec<f64>, sequences: usize) -> Result<Var> {
        let b = self.config().bins;
        let n = self.neuron_count();
        if histograms.len() != sequences * n * b {
            return Err(Error::shape(format!(
                "expected {} histogram values, got {}",
                sequences * n * b,
                histograms.len()
            )));
        }
        let input = g.constant(Tensor::new(vec![sequences * n, 1, b], histograms)?);
        let e = self.forward_graph(g, vars, input)?;
        let e = g.reshape(e, vec![sequences, n * self.config().embed_dim])?;
        let y = g.matmul(e, vars[HEAD])?;
        g.normalize_rows(y)
    }
}
