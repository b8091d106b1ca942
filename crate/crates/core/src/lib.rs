//! Bootstrap algebraic multigrid with compatible weighted matching.
//!
//! The hierarchy is built from a sequence of smooth vectors: each bootstrap
//! stage coarsens by pairwise matching against the current smooth vector,
//! and a multi-vector variant merges several of those vectors into one
//! block prolongator through local SVDs of aggregate blocks.

pub mod bench;
pub mod bootstrap;
pub mod cycles;
pub mod dense;
pub mod error;
pub mod krylov;
pub mod matching;
pub mod mmio;
pub mod multivector;
pub mod pairwise;
pub mod problems;
pub mod sparse;
pub mod vector;

pub use bootstrap::{bootstrap_run, BootstrapParams, CompositeAmg};
pub use cycles::{apply_cycle, CycleSpec, MultilevelHierarchy};
pub use error::{AmgError, Result};
pub use krylov::{pcg, PcgOptions, SolveReport};
pub use multivector::{build_multivector_hierarchy, MultiVectorHierarchy, MultiVectorParams};
pub use pairwise::{build_pairwise_hierarchy, CoarseningParams, PairwiseHierarchy};
pub use sparse::CsrMatrix;
