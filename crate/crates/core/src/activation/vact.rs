use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::frame::{ActivationFrame, LayerActivations, LayerShape};
use crate::binio::{put_f32_slice, put_short_str, put_u32, put_u64, LeReader};
use crate::error::{Error, Result};

pub const VACT_MAGIC: &[u8; 4] = b"VACT";
pub const VACT_VERSION: u32 = 1;

/// Streams frames from a `VACT` file. Memory use does not grow with the
/// number of frames.
pub struct ActivationReader<R> {
    inner: LeReader<R>,
    shapes: Vec<LayerShape>,
    frame_count: u64,
    read: u64,
    failed: bool,
}

impl<R: Read> ActivationReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut inner = LeReader::new(reader);
        inner.magic(VACT_MAGIC)?;
        inner.version(VACT_VERSION)?;
        let layer_count = inner.u32()?;
        let mut shapes = Vec::with_capacity(layer_count as usize);
        for i in 0..layer_count {
            let neurons = inner.u32()? as usize;
            let samples = inner.u32()? as usize;
            shapes.push(LayerShape { index: i + 1, neurons, samples });
        }
        let frame_count = inner.u64()?;
        Ok(Self { inner, shapes, frame_count, read: 0, failed: false })
    }

    /// Layer shapes from the header; layers are indexed from 1 in file order.
    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn frame_count(&self) -> u64 {
        self.frame_count
    }

    fn read_frame(&mut self) -> Result<ActivationFrame> {
        let frame_id = self.inner.short_str()?;
        let mut layers = Vec::with_capacity(self.shapes.len());
        for (li, s) in self.shapes.iter().enumerate() {
            let at = self.inner.offset();
            let values = self.inner.f32_vec(s.neurons * s.samples)?;
            if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
                let neuron = self.shapes[..li].iter().map(|s| s.neurons).sum::<usize>() + pos / s.samples.max(1);
                log::warn!("non-finite activation in frame {frame_id} near byte {}", at + 4 * pos as u64);
                return Err(Error::InvalidActivation { neuron, image: self.read as usize });
            }
            layers.push(LayerActivations { neurons: s.neurons, samples: s.samples, values });
        }
        ActivationFrame::new(frame_id, layers)
    }
}

impl ActivationReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> Iterator for ActivationReader<R> {
    type Item = Result<ActivationFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.read >= self.frame_count {
            return None;
        }
        let frame = self.read_frame();
        match frame {
            Ok(f) => {
                self.read += 1;
                Some(Ok(f))
            }
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

pub fn read_activation_file(path: impl AsRef<Path>) -> Result<ActivationReader<BufReader<File>>> {
    ActivationReader::open(path)
}

/// Writes a `VACT` stream. The frame count goes in the header, so it has
/// to be known up front; [`ActivationWriter::finish`] checks it was met.
pub struct ActivationWriter<W: Write> {
    inner: W,
    shapes: Vec<LayerShape>,
    frame_count: u64,
    written: u64,
}

impl<W: Write> ActivationWriter<W> {
    pub fn new(mut inner: W, shapes: &[LayerShape], frame_count: u64) -> Result<Self> {
        inner.write_all(VACT_MAGIC)?;
        put_u32(&mut inner, VACT_VERSION)?;
        put_u32(&mut inner, shapes.len() as u32)?;
        for s in shapes {
            put_u32(&mut inner, s.neurons as u32)?;
            put_u32(&mut inner, s.samples as u32)?;
        }
        put_u64(&mut inner, frame_count)?;
        Ok(Self { inner, shapes: shapes.to_vec(), frame_count, written: 0 })
    }

    pub fn write_frame(&mut self, frame: &ActivationFrame) -> Result<()> {
        if self.written >= self.frame_count {
            return Err(Error::shape(format!("header declared {} frames", self.frame_count)));
        }
        frame.check_shape(&self.shapes)?;
        put_short_str(&mut self.inner, &frame.frame_id)?;
        for l in &frame.layers {
            put_f32_slice(&mut self.inner, &l.values)?;
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.written != self.frame_count {
            return Err(Error::shape(format!(
                "wrote {} frames but header declared {}",
                self.written, self.frame_count
            )));
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_activation_file<'a>(
    path: impl AsRef<Path>,
    shapes: &[LayerShape],
    frames: impl ExactSizeIterator<Item = &'a ActivationFrame>,
) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut w = ActivationWriter::new(file, shapes, frames.len() as u64)?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.finish()?;
    Ok(())
}
