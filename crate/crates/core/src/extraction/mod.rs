//! Dictionary learning `A ≈ U Vᵀ` under the K-Means, PCA and NMF constraints,
//! and projection of new samples onto a fitted dictionary.

mod kmeans;
mod nmf;
mod pca;

use serde::{Deserialize, Serialize};

pub use kmeans::{extract_kmeans, KMEANS_RESTARTS, MAX_LLOYD_ITERATIONS};
pub use nmf::{extract_nmf, NmfOptions, NNLS_MAX_SWEEPS};
pub use pca::extract_pca;

use crate::error::{Error, Result};
use crate::model::{ActivationMatrix, ConceptDictionary, ExtractionMethod, Loadings};
use crate::scalar::Scalar;

/// A fitted factorisation together with solver diagnostics.
#[derive(Clone, Debug)]
pub struct Extraction<T> {
    pub loadings: Loadings<T>,
    pub dictionary: ConceptDictionary<T>,
    /// Lloyd or HALS iterations performed; 0 for PCA.
    pub iterations: usize,
    /// Objective after initialisation and after every iteration (K-Means
    /// inertia, NMF squared residual); empty for PCA.
    pub objective_trace: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExtractionConfig {
    pub method: ExtractionMethod,
    pub k: usize,
    pub seed: u64,
    #[serde(default)]
    pub center: bool,
    #[serde(default)]
    pub nmf: NmfOptions,
}

impl ExtractionConfig {
    pub fn new(method: ExtractionMethod, k: usize, seed: u64) -> Self {
        Self {
            method,
            k,
            seed,
            center: false,
            nmf: NmfOptions::default(),
        }
    }
}

pub fn extract<T: Scalar>(a: &ActivationMatrix<T>, config: &ExtractionConfig) -> Result<Extraction<T>> {
    match config.method {
        ExtractionMethod::KMeans => extract_kmeans(a, config.k, config.seed),
        ExtractionMethod::Pca => extract_pca(a, config.k, config.center),
        ExtractionMethod::Nmf => extract_nmf(a, config.k, config.seed, config.nmf),
    }
}

/// Expresses new activations in an existing dictionary: nearest-centroid
/// indicators for K-Means, `A V` for PCA, row-wise nonnegative least squares
/// for NMF.
pub fn transform<T: Scalar>(a: &ActivationMatrix<T>, dictionary: &ConceptDictionary<T>) -> Result<Loadings<T>> {
    if a.dim() != dictionary.dim() {
        return Err(Error::shape(format!(
            "activations have dimension {}, dictionary {}",
            a.dim(),
            dictionary.dim()
        )));
    }
    let values = match dictionary.method() {
        ExtractionMethod::KMeans => kmeans::assign_to_dictionary(a.values(), dictionary),
        ExtractionMethod::Pca => a.values().matmul(dictionary.vectors())?,
        ExtractionMethod::Nmf => nmf::nnls_rows(a.values(), dictionary.vectors())?,
    };
    Ok(Loadings::tagged(values, a))
}
