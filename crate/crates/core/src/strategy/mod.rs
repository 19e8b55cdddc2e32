//! Per-class strategy analysis from local importances: which concept drives
//! each decision, how often each concept does, and how accurate the model is
//! when it relies on it.

mod embed;
mod svg;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use embed::{embed_2d, EmbedConfig, DEFAULT_NEIGHBORS};
pub use svg::{cluster_graph_svg, curves_svg};

use crate::error::{Error, Result};
use crate::head::Head;
use crate::model::{reconstruct, ConceptDictionary, Loadings};
use crate::numerics::{argmax, Matrix};
use crate::scalar::Scalar;

/// Row-wise argmax of the importances, lowest index on ties.
pub fn dominant_concept<T: Scalar>(phi: &Matrix<T>) -> Result<Vec<usize>> {
    if phi.cols() == 0 {
        return Err(Error::invalid("importance matrix has no concepts"));
    }
    if let Some(i) = phi.as_slice().iter().position(|v| v.is_nan()) {
        return Err(Error::NonFinite {
            row: i / phi.cols(),
            col: i % phi.cols(),
        });
    }
    Ok((0..phi.rows()).into_par_iter().map(|i| argmax(phi.row(i))).collect())
}

fn check_indices(dominant: &[usize], k: usize) -> Result<()> {
    if dominant.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    if let Some(&bad) = dominant.iter().find(|&&d| d >= k) {
        return Err(Error::invalid(format!("dominant concept {bad} out of range for k = {k}")));
    }
    Ok(())
}

/// Share of samples for which each concept is the dominant one.
pub fn prevalence(dominant: &[usize], k: usize) -> Result<Vec<f64>> {
    check_indices(dominant, k)?;
    let mut counts = vec![0usize; k];
    for &d in dominant {
        counts[d] += 1;
    }
    let n = dominant.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Accuracy over the samples each concept dominates; `None` for concepts
/// that dominate no sample.
pub fn reliability(dominant: &[usize], predictions: &[usize], labels: &[usize], k: usize) -> Result<Vec<Option<f64>>> {
    check_indices(dominant, k)?;
    if predictions.len() != dominant.len() || labels.len() != dominant.len() {
        return Err(Error::shape(format!(
            "{} dominant concepts, {} predictions, {} labels",
            dominant.len(),
            predictions.len(),
            labels.len()
        )));
    }
    let mut hits = vec![0usize; k];
    let mut totals = vec![0usize; k];
    for ((&d, &p), &l) in dominant.iter().zip(predictions).zip(labels) {
        totals[d] += 1;
        hits[d] += usize::from(p == l);
    }
    Ok(hits
        .into_iter()
        .zip(totals)
        .map(|(h, t)| (t > 0).then(|| h as f64 / t as f64))
        .collect())
}

/// Predicted class of each reconstruction `u Vᵀ`: argmax over the head's
/// full logit row.
pub fn predict_classes<T: Scalar>(loadings: &Loadings<T>, dictionary: &ConceptDictionary<T>, head: &Head<T>) -> Result<Vec<usize>> {
    let activations = reconstruct(loadings, dictionary)?;
    let logits = head.logits(activations.values())?;
    Ok(logits.row_iter().map(argmax).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct StrategyReport {
    pub prevalence: Vec<f64>,
    /// `None` for concepts that dominate no sample.
    pub reliability: Vec<Option<f64>>,
    pub dominant: Vec<usize>,
    pub correct: Vec<bool>,
}

impl StrategyReport {
    pub fn k(&self) -> usize {
        self.prevalence.len()
    }
}

pub fn strategy_report<T: Scalar>(phi: &Matrix<T>, predictions: &[usize], labels: &[usize]) -> Result<StrategyReport> {
    let k = phi.cols();
    let dominant = dominant_concept(phi)?;
    let reliability = reliability(&dominant, predictions, labels, k)?;
    Ok(StrategyReport {
        prevalence: prevalence(&dominant, k)?,
        reliability,
        correct: predictions.iter().zip(labels).map(|(p, l)| p == l).collect(),
        dominant,
    })
}

/// Samples laid out in the plane and colored by their dominant concept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ClusterGraph {
    pub embedding: String,
    pub coords: Vec<[f64; 2]>,
    pub colors: Vec<usize>,
    /// Label of concept `i` at index `i`.
    pub legend: Vec<String>,
    pub misclassified: Vec<bool>,
}

pub fn default_labels(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("concept-{i}")).collect()
}

pub fn build_cluster_graph<T: Scalar>(
    phi: &Matrix<T>,
    strategy: &StrategyReport,
    embed: &EmbedConfig,
    labels: Option<Vec<String>>,
) -> Result<ClusterGraph> {
    let (n, k) = phi.shape();
    if strategy.dominant.len() != n || strategy.k() != k {
        return Err(Error::shape(format!(
            "strategy covers {} samples and {} concepts, importances are {n}×{k}",
            strategy.dominant.len(),
            strategy.k()
        )));
    }
    let legend = labels.unwrap_or_else(|| default_labels(k));
    if legend.len() != k {
        return Err(Error::shape(format!("{} concept labels for {k} concepts", legend.len())));
    }
    let coords = embed_2d(&phi.cast::<f64>(), embed)?;
    Ok(ClusterGraph {
        embedding: embed.name().to_string(),
        coords: coords.row_iter().map(|r| [r[0], r[1]]).collect(),
        colors: strategy.dominant.clone(),
        legend,
        misclassified: strategy.correct.iter().map(|c| !c).collect(),
    })
}
