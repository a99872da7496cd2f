//! Sparse product quantization for approximate nearest neighbour search.
//!
//! Vectors are split into subspaces and each subvector is approximated by a
//! sparse combination of unit-norm atoms found with orthogonal matching
//! pursuit. Queries are scored by table lookups, exhaustively or through an
//! inverted file. A hard-assignment product quantizer is included as a
//! baseline.

pub mod codebook;
pub mod dataset;
pub mod error;
pub mod eval;
mod format;
pub mod index;
pub mod ivf;
pub mod kernels;
pub mod pq;
pub mod scan;
pub mod sparse;
pub mod util;

pub use codebook::{Codebook, ProductCodebook, Trainer};
pub use dataset::{exact_knn, gen_gaussian, read_vecs, write_vecs, GroundTruth, VecsFormat, VectorSet};
pub use error::{Error, Result};
pub use eval::{mean_average_precision, recall_at_r, RunResult};
pub use format::peek_magic;
pub use index::{SpqCode, SpqIndex};
pub use ivf::{IvfIndex, IvfParams, ResidualKind, Rerank};
pub use kernels::{ScoredId, TopK};
pub use pq::{PqCode, PqCodebook, PqIndex};
pub use scan::SearchStats;
pub use sparse::{Omp, SparseCode};
