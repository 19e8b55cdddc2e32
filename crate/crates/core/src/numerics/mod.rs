//! Deterministic numerical kernels shared by the rest of the crate.

mod assignment;
mod distance;
mod eigen;
mod matrix;
pub mod rng;
mod stats;
mod svd;

pub use assignment::{hungarian, Assignment};
pub use distance::{knn_distance, wasserstein1, KnnReference};
pub use eigen::symmetric_eigen;
pub use matrix::Matrix;
pub use rng::SeededRng;
pub use stats::{argmax, auc_trapezoid, pearson};
pub(crate) use stats::mean_variance;
pub use svd::{svd, Svd};
