use crate::error::{Error, Result};
use crate::nn::ops::conv_out_len;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    /// Odd kernel width; padding is `kernel / 2`.
    pub kernel: usize,
    pub stride: usize,
}

/// Shape of the encoder: six conv layers (ReLU after each), flatten, then
/// three linear layers with ReLU between them and none after the last.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Histogram length `b`.
    pub bins: usize,
    /// Per-neuron embedding length `h`.
    pub embed_dim: usize,
    pub conv: Vec<ConvSpec>,
    /// Widths of the two hidden linear layers.
    pub hidden: Vec<usize>,
    /// Output length `d` of the linear head `W`.
    pub out_dim: usize,
}

pub const CONV_LAYERS: usize = 6;
pub const LINEAR_LAYERS: usize = 3;

fn stack(channels: [usize; 6], kernel: usize) -> Vec<ConvSpec> {
    channels
        .iter()
        .enumerate()
        .map(|(i, &out_channels)| ConvSpec { out_channels, kernel, stride: if i % 2 == 1 { 2 } else { 1 } })
        .collect()
}

impl EncoderConfig {
    /// Channels 1→8→8→16→16→32→32, kernel 5, stride 2 on every second
    /// layer, then linear 256 → 64 → h. With `bins = 500` the conv stack
    /// ends at 32 × 63 = 2016 features.
    pub fn standard(bins: usize) -> Self {
        Self { bins, embed_dim: 4, conv: stack([8, 8, 16, 16, 32, 32], 5), hidden: vec![256, 64], out_dim: 128 }
    }

    /// Same layout with narrower layers, for desk-scale experiments.
    pub fn compact(bins: usize) -> Self {
        Self { bins, embed_dim: 4, conv: stack([4, 4, 8, 8, 8, 8], 5), hidden: vec![32, 16], out_dim: 128 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv.len() != CONV_LAYERS {
            return Err(Error::Config(format!("encoder needs {CONV_LAYERS} conv layers, got {}", self.conv.len())));
        }
        if self.hidden.len() != LINEAR_LAYERS - 1 {
            return Err(Error::Config(format!(
                "encoder needs {} hidden linear widths, got {}",
                LINEAR_LAYERS - 1,
                self.hidden.len()
            )));
        }
        if self.embed_dim == 0 || self.out_dim == 0 || self.bins < 2 {
            return Err(Error::Config("embed_dim, out_dim must be >= 1 and bins >= 2".into()));
        }
        if self.conv.iter().any(|c| c.out_channels == 0 || c.stride == 0 || c.kernel % 2 == 0) {
            return Err(Error::Config("conv layers need channels >= 1, stride >= 1 and an odd kernel".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be >= 1".into()));
        }
        self.conv_lengths().map(|_| ())
    }

    /// Output length after each conv layer.
    pub fn conv_lengths(&self) -> Result<Vec<usize>> {
        let mut len = self.bins;
        let mut out = Vec::with_capacity(self.conv.len());
        for (i, c) in self.conv.iter().enumerate() {
            len = conv_out_len(len, c.kernel, c.stride, c.kernel / 2)
                .filter(|&l| l >= 1)
                .ok_or_else(|| Error::Config(format!("conv layer {} output length is not positive", i + 1)))?;
            out.push(len);
        }
        Ok(out)
    }

    /// Length of the flattened conv output feeding the first linear layer.
    pub fn flat_len(&self) -> Result<usize> {
        let lens = self.conv_lengths()?;
        Ok(lens.last().copied().unwrap_or(self.bins) * self.conv.last().map_or(1, |c| c.out_channels))
    }

    /// `(in, out)` of the three linear layers.
    pub fn linear_dims(&self) -> Result<Vec<(usize, usize)>> {
        let mut dims = Vec::with_capacity(LINEAR_LAYERS);
        let mut inp = self.flat_len()?;
        for &w in self.hidden.iter().chain(std::iter::once(&self.embed_dim)) {
            dims.push((inp, w));
            inp = w;
        }
        Ok(dims)
    }

    /// Parameters of the shared encoder E (excluding `W`).
    pub fn encoder_param_count(&self) -> Result<usize> {
        let mut cin = 1;
        let mut n = 0;
        for c in &self.conv {
            n += c.out_channels * cin * c.kernel + c.out_channels;
            cin = c.out_channels;
        }
        Ok(n + self.linear_dims()?.iter().map(|(i, o)| i * o + o).sum::<usize>())
    }

    pub(crate) fn describe_conv(&self) -> String {
        self.conv.iter().map(|c| format!("{}x{}s{}", c.out_channels, c.kernel, c.stride)).collect::<Vec<_>>().join(",")
    }

    pub(crate) fn parse_conv(s: &str) -> Result<Vec<ConvSpec>> {
        s.split(',')
            .map(|item| {
                let bad = || Error::Config(format!("bad conv layer {item:?}"));
                let (ch, rest) = item.split_once('x').ok_or_else(bad)?;
                let (k, st) = rest.split_once('s').ok_or_else(bad)?;
                Ok(ConvSpec {
                    out_channels: ch.parse().map_err(|_| bad())?,
                    kernel: k.parse().map_err(|_| bad())?,
                    stride: st.parse().map_err(|_| bad())?,
                })
            })
            .collect()
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::standard(500)
    }
}
