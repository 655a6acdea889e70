use crate::error::{Error, Result};
use crate::vdna::{ImageActivations, LayerInfo};

/// Default cap on samples per neuron per frame when ingesting real dumps.
pub const DEFAULT_SAMPLE_CAP: usize = 256;

/// Declared shape of one layer in an activation stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub index: u32,
    pub neurons: usize,
    /// Values per neuron per frame (spatial positions or tokens).
    pub samples: usize,
}

impl LayerShape {
    pub fn info(&self) -> LayerInfo {
        LayerInfo::new(self.index, self.neurons)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerActivations {
    pub neurons: usize,
    pub samples: usize,
    /// Neuron-major: `values[n * samples + s]`.
    pub values: Vec<f32>,
}

/// Activations of every neuron of every tracked layer for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationFrame {
    pub frame_id: String,
    pub layers: Vec<LayerActivations>,
}

impl ActivationFrame {
    pub fn new(frame_id: impl Into<String>, layers: Vec<LayerActivations>) -> Result<Self> {
        let frame_id = frame_id.into();
        for (i, l) in layers.iter().enumerate() {
            if l.values.len() != l.neurons * l.samples {
                return Err(Error::shape(format!(
                    "frame {frame_id}: layer {i} holds {} values for {}x{}",
                    l.values.len(),
                    l.neurons,
                    l.samples
                )));
            }
        }
        Ok(Self { frame_id, layers })
    }

    pub fn check_shape(&self, shapes: &[LayerShape]) -> Result<()> {
        if self.layers.len() != shapes.len()
            || self.layers.iter().zip(shapes).any(|(l, s)| l.neurons != s.neurons || l.samples != s.samples)
        {
            return Err(Error::shape(format!("frame {} does not match the declared topology", self.frame_id)));
        }
        Ok(())
    }

    /// Keeps at most `cap` samples per neuron, picking a deterministic,
    /// evenly strided subset.
    pub fn subsample(&self, cap: usize) -> ActivationFrame {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                if l.samples <= cap || cap == 0 {
                    return l.clone();
                }
                let picks: Vec<usize> = (0..cap).map(|k| k * l.samples / cap).collect();
                let mut values = Vec::with_capacity(l.neurons * cap);
                for n in 0..l.neurons {
                    let row = &l.values[n * l.samples..(n + 1) * l.samples];
                    values.extend(picks.iter().map(|&p| row[p]));
                }
                LayerActivations { neurons: l.neurons, samples: cap, values }
            })
            .collect();
        ActivationFrame { frame_id: self.frame_id.clone(), layers }
    }
}

impl ImageActivations for ActivationFrame {
    fn neuron_count(&self) -> usize {
        self.layers.iter().map(|l| l.neurons).sum()
    }

    fn neuron_values(&self, neuron: usize) -> &[f32] {
        let mut local = neuron;
        for l in &self.layers {
            if local < l.neurons {
                return &l.values[local * l.samples..(local + 1) * l.samples];
            }
            local -= l.neurons;
        }
        panic!("neuron {neuron} out of range");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neuron_addressing_and_subsampling() {
        let frame = ActivationFrame::new(
            "f",
            vec![
                LayerActivations { neurons: 2, samples: 4, values: (0..8).map(|v| v as f32).collect() },
                LayerActivations { neurons: 1, samples: 4, values: vec![10.0, 11.0, 12.0, 13.0] },
            ],
        )
        .unwrap();
        assert_eq!(frame.neuron_count(), 3);
        assert_eq!(frame.neuron_values(1), &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(frame.neuron_values(2), &[10.0, 11.0, 12.0, 13.0]);
        let sub = frame.subsample(2);
        assert_eq!(sub.neuron_values(1), &[4.0, 6.0]);
        assert_eq!(sub.neuron_values(2), &[10.0, 12.0]);
        assert_eq!(frame.subsample(8), frame);
    }

    #[test]
    fn rejects_bad_layer_size() {
        let l = LayerActivations { neurons: 2, samples: 2, values: vec![0.0; 3] };
        assert!(ActivationFrame::new("x", vec![l]).is_err());
    }
}
