//! Structure learning for linear polytree structural equation models.
//!
//! A polytree is a connected DAG whose skeleton is a tree. For linear SEMs on
//! polytrees, the skeleton is recoverable from pairwise sample correlations by
//! a maximum-weight spanning tree (Chow-Liu), and the equivalence class
//! (CPDAG) follows by thresholding correlations of non-adjacent co-neighbor
//! pairs to find v-structures and propagating orientations with Meek's first
//! rule. This crate implements that pipeline end to end:
//!
//! - [`graph`]: DAGs, skeletons, CPDAGs, v-structures, equivalence classes
//! - [`sem`]: linear SEM models, standardization, exact covariance, sampling
//! - [`gen`]: random polytree SEM generation and hardness ensembles
//! - [`learn`]: sample correlations, Chow-Liu tree, v-structure detection
//! - [`precision`]: inverse correlation matrices (exact and estimated)
//! - [`metrics`]: FDR / Jaccard comparison of CPDAGs
//! - [`harness`]: reproducible Monte-Carlo sweeps with CSV output
//!
//! The `polytree` binary exposes the same functionality as CLI subcommands.

pub mod gen;
pub mod graph;
pub mod harness;
pub mod learn;
pub mod metrics;
pub mod precision;
pub mod rng;
pub mod sem;
pub mod stats;
mod union_find;

pub use graph::{Cpdag, Dag, GraphError, Skeleton, VStructure};
pub use learn::{DataMatrix, LearnConfig, LearnError, LearnedCpdag};
pub use metrics::{EdgeClassification, MetricsError};
pub use precision::{PrecisionError, PrecisionMatrix};
pub use sem::{CorrelationMatrix, LinearSem, NoiseFamily, RhoBounds, SemError};
