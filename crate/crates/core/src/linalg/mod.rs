//! Dense numerical kernels shared by the rest of the toolkit.

mod cluster;
mod matrix;
mod svd;

pub use cluster::{farthest_cluster_selection, kmeans, KMeansResult};
pub use matrix::{dot, l2_normalize_rows, sq_dist, Matrix, NORM_EPS};
pub use svd::{svd, SvdResult, MAX_SWEEPS};
