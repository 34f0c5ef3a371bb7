//! Per-node structural scores and the splitting factors derived from them.

mod bfs;
mod clustering;
mod pagerank;
mod sigma;

pub use bfs::{bfs_distances, UNREACHABLE};
pub use clustering::{local_clustering, triangle_counts};
pub use pagerank::{pagerank, personalized_pagerank, PageRank, PageRankConfig, Personalization};
pub use sigma::{
    ascending_order, read_sigma_csv, sigma_scores, ShiftType, SigmaProvenance, SigmaScores,
};
