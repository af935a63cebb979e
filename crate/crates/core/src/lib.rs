//! Multiple-tests similarity (Sim-M) with Chernoff-sized candidate pools,
//! B-Attention graph structure learning layers, exact kNN graphs, G-cut
//! clustering and the evaluation metrics used to compare them.

pub mod attention;
pub mod clustering;
pub mod error;
pub mod features;
pub mod io;
pub mod knn;
pub mod metrics;
pub mod multitest;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use features::{l2_normalize, sim_s, FeatureMatrix, LabelVector, SimilarityKind};
pub use knn::{avg_enr, build_knn_graph, enr, KnnGraph, Neighbor};
