use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::activation::{Pose, SequenceRecord};
use crate::binio::{put_f32_slice, put_f64, put_long_str, put_short_str, put_u16, put_u32, put_u64, LeReader};
use crate::encoder::{Descriptor, DescriptorKind, NeuronSelection};
use crate::error::{Error, Result};

pub const VPDB_MAGIC: &[u8; 4] = b"VPDB";
pub const VPDB_VERSION: u32 = 1;

/// Descriptors stored as f32 rows, each paired with its sequence record.
/// Rows keep insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorDb {
    dim: usize,
    kind: DescriptorKind,
    selection: NeuronSelection,
    rows: Vec<f32>,
    records: Vec<SequenceRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    /// Insertion index in the database.
    pub index: usize,
    pub distance: f64,
}

impl DescriptorDb {
    pub fn new(dim: usize, kind: DescriptorKind, selection: NeuronSelection) -> Self {
        Self { dim, kind, selection, rows: Vec::new(), records: Vec::new() }
    }

    /// Builds a database from descriptors and their records. An empty input
    /// gives an empty neuron-concat database of dimension 0.
    pub fn build(descriptors: &[Descriptor], records: Vec<SequenceRecord>) -> Result<Self> {
        if descriptors.len() != records.len() {
            return Err(Error::shape(format!("{} descriptors for {} records", descriptors.len(), records.len())));
        }
        let Some(first) = descriptors.first() else {
            return Ok(Self::new(0, DescriptorKind::NeuronConcat, NeuronSelection::All));
        };
        let mut db = Self::new(first.len(), first.kind, first.selection.clone());
        for (d, r) in descriptors.iter().zip(records) {
            if d.kind != db.kind || d.selection != db.selection {
                return Err(Error::shape(format!(
                    "mixed descriptor kinds: {} ({}) vs {} ({})",
                    db.kind, db.selection, d.kind, d.selection
                )));
            }
            db.push(&d.values, r)?;
        }
        Ok(db)
    }

    pub fn push(&mut self, values: &[f64], record: SequenceRecord) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::shape(format!(
                "descriptor of length {} for a database of dim {}",
                values.len(),
                self.dim
            )));
        }
        self.rows.extend(values.iter().map(|&v| v as f32));
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> DescriptorKind {
        self.kind
    }

    pub fn selection(&self) -> &NeuronSelection {
        &self.selection
    }

    pub fn matrix(&self) -> &[f32] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn record(&self, i: usize) -> &SequenceRecord {
        &self.records[i]
    }

    pub fn records(&self) -> &[SequenceRecord] {
        &self.records
    }

    /// Exact `n` nearest rows to `query` by L2 distance, ties broken by the
    /// lower insertion index.
    pub fn knn(&self, query: &[f32], n: usize) -> Result<Vec<Neighbor>> {
        knn(self, query, n)
    }
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) fn l2(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Exact k-nearest-neighbour search. Distances accumulate in f64 over the
/// f32 rows. Returns `min(n, M)` neighbours sorted by `(distance, index)`.
pub fn knn(db: &DescriptorDb, query: &[f32], n: usize) -> Result<Vec<Neighbor>> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    if query.len() != db.dim {
        return Err(Error::shape(format!("query has length {}, database dim is {}", query.len(), db.dim)));
    }
    if n == 0 {
        return Err(Error::Config("N must be >= 1".into()));
    }
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(n + 1);
    for i in 0..db.len() {
        let c = Candidate(l2(db.row(i), query), i);
        if heap.len() < n {
            heap.push(c);
        } else if heap.peek().is_some_and(|worst| c < *worst) {
            heap.pop();
            heap.push(c);
        }
    }
    Ok(heap.into_sorted_vec().into_iter().map(|Candidate(distance, index)| Neighbor { index, distance }).collect())
}

/// `VPDB` | version u32 | dim u32 | M u64 | kind u8 | M×dim f32 | records |
/// selection (u32-prefixed text). Each record: frame count u16, frame ids,
/// traversal id, x f64, y f64, frame index u64; strings are u16-prefixed.
pub fn write_db<W: Write>(w: &mut W, db: &DescriptorDb) -> Result<()> {
    w.write_all(VPDB_MAGIC)?;
    put_u32(w, VPDB_VERSION)?;
    put_u32(w, db.dim as u32)?;
    put_u64(w, db.len() as u64)?;
    w.write_all(&[db.kind.code()])?;
    put_f32_slice(w, &db.rows)?;
    for r in &db.records {
        let count = u16::try_from(r.frame_ids.len()).map_err(|_| Error::shape("sequence longer than 65535 frames"))?;
        put_u16(w, count)?;
        for id in &r.frame_ids {
            put_short_str(w, id)?;
        }
        put_short_str(w, &r.traversal_id)?;
        put_f64(w, r.pose.x)?;
        put_f64(w, r.pose.y)?;
        put_u64(w, r.frame_index as u64)?;
    }
    put_long_str(w, &db.selection.to_string())?;
    Ok(())
}

pub fn read_db<R: Read>(r: R) -> Result<DescriptorDb> {
    let mut r = LeReader::new(r);
    r.magic(VPDB_MAGIC)?;
    r.version(VPDB_VERSION)?;
    let dim = r.u32()? as usize;
    let m = r.u64()? as usize;
    let at = r.offset();
    let kind = DescriptorKind::from_code(r.u8()?).ok_or_else(|| Error::format(at, "unknown descriptor kind"))?;
    let rows = r.f32_vec(dim * m)?;
    let mut records = Vec::with_capacity(m.min(1 << 20));
    for _ in 0..m {
        let count = r.u16()? as usize;
        let frame_ids = (0..count).map(|_| r.short_str()).collect::<Result<Vec<_>>>()?;
        let traversal_id = r.short_str()?;
        let pose = Pose::new(r.f64()?, r.f64()?);
        let frame_index = r.u64()? as usize;
        records.push(SequenceRecord { frame_ids, traversal_id, pose, frame_index });
    }
    let at = r.offset();
    let selection = r.long_str()?.parse().map_err(|e: Error| Error::format(at, e.to_string()))?;
    Ok(DescriptorDb { dim, kind, selection, rows, records })
}

pub fn save_db(path: impl AsRef<Path>, db: &DescriptorDb) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_db(&mut w, db)?;
    w.flush()?;
    Ok(())
}

pub fn load_db(path: impl AsRef<Path>) -> Result<DescriptorDb> {
    read_db(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn record(i: usize, x: f64) -> SequenceRecord {
        SequenceRecord {
            frame_ids: vec![format!("f{i}")],
            traversal_id: "t0".into(),
            pose: Pose::new(x, 0.0),
            frame_index: i,
        }
    }

    fn db_from(rows: &[Vec<f64>]) -> DescriptorDb {
        let dim = rows.first().map_or(0, Vec::len);
        let mut db = DescriptorDb::new(dim, DescriptorKind::NeuronConcat, NeuronSelection::All);
        for (i, r) in rows.iter().enumerate() {
            db.push(r, record(i, i as f64)).unwrap();
        }
        db
    }

    #[test]
    fn empty_build_and_empty_search() {
        let db = DescriptorDb::build(&[], vec![]).unwrap();
        assert!(db.is_empty());
        assert!(matches!(knn(&db, &[], 1), Err(Error::EmptyDatabase)));
    }

    #[test]
    fn mixed_kinds_rejected() {
        let a =
            Descriptor { values: vec![1.0, 0.0], kind: DescriptorKind::NeuronConcat, selection: NeuronSelection::All };
        let b = Descriptor { kind: DescriptorKind::WOutput, ..a.clone() };
        let err = DescriptorDb::build(&[a.clone(), b], vec![record(0, 0.0), record(1, 1.0)]);
        assert!(matches!(err, Err(Error::Shape(_))));
        let c = Descriptor { values: vec![1.0], ..a.clone() };
        assert!(DescriptorDb::build(&[a, c], vec![record(0, 0.0), record(1, 1.0)]).is_err());
    }

    #[test]
    fn self_query_and_duplicates() {
        let db = db_from(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let hits = db.knn(db.row(1), 1).unwrap();
        assert_eq!(hits, vec![Neighbor { index: 1, distance: 0.0 }]);
        let hits = db.knn(&[0.0, 1.0], 5).unwrap();
        assert_eq!(hits.iter().map(|h| h.index).collect::<Vec<_>>(), vec![0, 2, 1]);
    }

    #[test]
    fn file_round_trip() {
        let mut db = db_from(&[vec![0.25, -1.5], vec![3.0, 1e-7]]);
        db.selection = NeuronSelection::LayerRange { first: 2, last: 3 };
        let mut buf = Vec::new();
        write_db(&mut buf, &db).unwrap();
        assert_eq!(&buf[..4], b"VPDB");
        let back = read_db(&buf[..]).unwrap();
        assert_eq!(back, db);
        assert!(matches!(read_db(&buf[..buf.len() - 3]), Err(Error::Format { .. })));
    }

    proptest! {
        #[test]
        fn knn_matches_full_sort(rows in prop::collection::vec(prop::collection::vec(-2i8..3, 4), 1..40),
                                 q in prop::collection::vec(-2i8..3, 4), n in 1usize..50) {
            let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
            let db = db_from(&rows);
            let q: Vec<f32> = q.iter().map(|&v| v as f32).collect();
            let mut all: Vec<(f64, usize)> = (0..db.len()).map(|i| (l2(db.row(i), &q), i)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let got: Vec<usize> = knn(&db, &q, n).unwrap().iter().map(|h| h.index).collect();
            let want: Vec<usize> = all.iter().take(n).map(|p| p.1).collect();
            prop_assert_eq!(got, want);
        }
    }
}
