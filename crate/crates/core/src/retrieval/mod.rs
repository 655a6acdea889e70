//! Descriptor databases, exact L2 nearest-neighbour search and Recall@N.

mod db;
mod eval;
mod sweep;

pub use db::{knn, load_db, read_db, save_db, write_db, DescriptorDb, Neighbor, VPDB_MAGIC, VPDB_VERSION};
pub use eval::{recall_at_n, EvalReport, QueryOutcome};
pub use sweep::{emd_recall, layer_sweep, SweepEntry};
