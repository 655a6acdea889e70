use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{EncoderConfig, CONV_LAYERS};
use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, save_checkpoint, AdamWState, Checkpoint, Tensor};
use crate::vdna::{HistogramSpec, LayerInfo, SpecId};

/// Weights of the encoder E and the linear head W, bound to one histogram
/// spec. Tensor order: `conv{1..6}.{weight,bias}`, `fc{1..3}.{weight,bias}`,
/// `head.w`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    config: EncoderConfig,
    spec_id: SpecId,
    layers: Vec<LayerInfo>,
    tensors: Vec<Tensor>,
}

pub(crate) const HEAD: usize = 2 * CONV_LAYERS + 6;

impl EncoderParams {
    /// He-style uniform initialization (`±√(6 / fan_in)`), zero biases.
    pub fn init(config: EncoderConfig, spec: &HistogramSpec, seed: u64) -> Result<Self> {
        config.validate()?;
        if spec.bins() != config.bins {
            return Err(Error::shape(format!("encoder expects {} bins, spec has {}", config.bins, spec.bins())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |shape: Vec<usize>, fan_in: usize| {
            let a = (6.0 / fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            Tensor::new(shape, (0..n).map(|_| rng.random_range(-a..a)).collect()).expect("shape matches")
        };
        let mut tensors = Vec::with_capacity(HEAD + 1);
        let mut cin = 1;
        for c in &config.conv {
            tensors.push(uniform(vec![c.out_channels, cin, c.kernel], cin * c.kernel));
            tensors.push(Tensor::zeros(vec![c.out_channels]));
            cin = c.out_channels;
        }
        for (inp, out) in config.linear_dims()? {
            tensors.push(uniform(vec![out, inp], inp));
            tensors.push(Tensor::zeros(vec![out]));
        }
        let nh = spec.neuron_count() * config.embed_dim;
        tensors.push(uniform(vec![nh, config.out_dim], nh));
        Ok(Self { config, spec_id: spec.id(), layers: spec.layers().to_vec(), tensors })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn spec_id(&self) -> SpecId {
        self.spec_id
    }

    pub fn layers(&self) -> &[LayerInfo] {
        &self.layers
    }

    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(|l| l.neurons).sum()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// The `(N·h) × d` head.
    pub fn head(&self) -> &Tensor {
        &self.tensors[HEAD]
    }

    /// Shared encoder tensors only (everything but the head).
    pub fn encoder_tensors(&self) -> &[Tensor] {
        &self.tensors[..HEAD]
    }

    pub fn tensor_names() -> Vec<String> {
        let mut names = Vec::with_capacity(HEAD + 1);
        for i in 1..=CONV_LAYERS {
            names.push(format!("conv{i}.weight"));
            names.push(format!("conv{i}.bias"));
        }
        for i in 1..=3 {
            names.push(format!("fc{i}.weight"));
            names.push(format!("fc{i}.bias"));
        }
        names.push("head.w".into());
        names
    }

    pub fn to_checkpoint(&self, extra_meta: &[(String, String)], optimizer: Option<AdamWState>) -> Checkpoint {
        let c = &self.config;
        let layers = self.layers.iter().map(|l| format!("{}:{}", l.index, l.neurons)).collect::<Vec<_>>().join(",");
        let mut meta = vec![
            ("format".to_string(), "vdnapr-encoder".to_string()),
            ("spec_id".to_string(), self.spec_id.to_string()),
            ("bins".to_string(), c.bins.to_string()),
            ("embed_dim".to_string(), c.embed_dim.to_string()),
            ("out_dim".to_string(), c.out_dim.to_string()),
            ("conv".to_string(), c.describe_conv()),
            ("hidden".to_string(), c.hidden.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")),
            ("layers".to_string(), layers),
        ];
        meta.extend(extra_meta.iter().cloned());
        let tensors = Self::tensor_names().into_iter().zip(self.tensors.iter().cloned()).collect();
        Checkpoint { meta, tensors, optimizer }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let get = |k: &str| ckpt.meta(k).ok_or_else(|| Error::Config(format!("checkpoint is missing `{k}`")));
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Config(format!("checkpoint field `{k}` is not a number")))
        };
        if get("format")? != "vdnapr-encoder" {
            return Err(Error::Config("checkpoint does not hold encoder parameters".into()));
        }
        let hidden = get("hidden")?
            .split(',')
            .map(|s| s.parse().map_err(|_| Error::Config("bad hidden widths".into())))
            .collect::<Result<Vec<usize>>>()?;
        let config = EncoderConfig {
            bins: num("bins")?,
            embed_dim: num("embed_dim")?,
            conv: EncoderConfig::parse_conv(get("conv")?)?,
            hidden,
            out_dim: num("out_dim")?,
        };
        config.validate()?;
        let layers = get("layers")?
            .split(',')
            .map(|s| {
                let (i, n) = s.split_once(':').ok_or_else(|| Error::Config(format!("bad layer {s:?}")))?;
                Ok(LayerInfo::new(
                    i.parse().map_err(|_| Error::Config(format!("bad layer {s:?}")))?,
                    n.parse().map_err(|_| Error::Config(format!("bad layer {s:?}")))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let spec_id: SpecId = get("spec_id")?.parse()?;
        let names = Self::tensor_names();
        let tensors = names
            .iter()
            .map(|n| ckpt.tensor(n).cloned().ok_or_else(|| Error::Config(format!("checkpoint is missing tensor {n}"))))
            .collect::<Result<Vec<_>>>()?;
        let params = Self { config, spec_id, layers, tensors };
        params.check_shapes()?;
        Ok(params)
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let mut expected = Vec::new();
        let mut cin = 1;
        for conv in &c.conv {
            expected.push(vec![conv.out_channels, cin, conv.kernel]);
            expected.push(vec![conv.out_channels]);
            cin = conv.out_channels;
        }
        for (i, o) in c.linear_dims()? {
            expected.push(vec![o, i]);
            expected.push(vec![o]);
        }
        expected.push(vec![self.neuron_count() * c.embed_dim, c.out_dim]);
        for ((t, e), name) in self.tensors.iter().zip(&expected).zip(Self::tensor_names()) {
            if t.shape() != e.as_slice() {
                return Err(Error::shape(format!("tensor {name} has shape {:?}, expected {e:?}", t.shape())));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, extra_meta: &[(String, String)]) -> Result<()> {
        save_checkpoint(path, &self.to_checkpoint(extra_meta, None))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&load_checkpoint(path)?)
    }
}
