use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::histogram::Vdna;
use super::spec::SpecId;
use crate::binio::{put_u32, put_u64, LeReader};
use crate::error::{Error, Result};

pub const VDNA_MAGIC: &[u8; 4] = b"VDNA";
pub const VDNA_VERSION: u32 = 1;

/// `VDNA` | version u32 | spec_id [16] | N u32 | b u32 | L u64 | N×b u64 counts.
pub fn write_vdna<W: Write>(w: &mut W, vdna: &Vdna) -> Result<()> {
    w.write_all(VDNA_MAGIC)?;
    put_u32(w, VDNA_VERSION)?;
    w.write_all(&vdna.spec_id().0)?;
    put_u32(w, vdna.neuron_count() as u32)?;
    put_u32(w, vdna.bins() as u32)?;
    put_u64(w, vdna.image_count())?;
    let mut buf = Vec::with_capacity(vdna.counts().len() * 8);
    for c in vdna.counts() {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_vdna<R: Read>(r: R) -> Result<Vdna> {
    let mut r = LeReader::new(r);
    r.magic(VDNA_MAGIC)?;
    r.version(VDNA_VERSION)?;
    let mut id = [0u8; 16];
    r.read_exact(&mut id)?;
    let neurons = r.u32()? as usize;
    let bins = r.u32()? as usize;
    let images = r.u64()?;
    let at = r.offset();
    let counts = r.u64_vec(neurons * bins)?;
    Vdna::from_parts(SpecId(id), neurons, bins, counts, images).map_err(|e| Error::format(at, e.to_string()))
}

pub fn save_vdna(path: impl AsRef<Path>, vdna: &Vdna) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vdna(&mut w, vdna)?;
    w.flush()?;
    Ok(())
}

pub fn load_vdna(path: impl AsRef<Path>) -> Result<Vdna> {
    read_vdna(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vdna::{HistogramSpec, LayerInfo};

    #[test]
    fn round_trip_and_layout() {
        let spec = HistogramSpec::with_uniform_range(LayerInfo::uniform(1, 2), 3, 0.0, 1.0).unwrap();
        let mut v = Vdna::empty(&spec);
        v.accumulate(&vec![vec![0.1f32, 0.9], vec![0.5]], &spec).unwrap();
        let mut buf = Vec::new();
        write_vdna(&mut buf, &v).unwrap();
        assert_eq!(&buf[..4], b"VDNA");
        assert_eq!(buf.len(), 4 + 4 + 16 + 4 + 4 + 8 + 6 * 8);
        assert_eq!(&buf[8..24], &spec.id().0);
        assert_eq!(read_vdna(&buf[..]).unwrap(), v);
    }

    #[test]
    fn truncation_names_offset() {
        let spec = HistogramSpec::with_uniform_range(LayerInfo::uniform(1, 2), 3, 0.0, 1.0).unwrap();
        let mut buf = Vec::new();
        write_vdna(&mut buf, &Vdna::empty(&spec)).unwrap();
        buf.truncate(50);
        match read_vdna(&buf[..]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 50),
            other => panic!("unexpected {other:?}"),
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_vdna(&bad[..]), Err(Error::Format { offset: 0, .. })));
    }
}
