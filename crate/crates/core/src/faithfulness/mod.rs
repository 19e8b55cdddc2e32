//! Faithfulness of concept importances: deletion and insertion curves,
//! μFidelity, and exhaustive checks that greedy orderings are optimal.
//!
//! Removing a concept sets its coefficient to exactly zero. Curves and
//! correlations are computed on the target logit, never on probabilities.

mod optimal;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use optimal::{
    brute_force_optimal, check_order_optimality, verify_last_layer_optimality, Counterexample, OptimalOrder,
    OptimalityCheck, VerificationReport, MAX_BRUTE_FORCE_K, MAX_VERIFY_K,
};

use crate::attribution::ConceptFunction;
use crate::error::{Error, Result};
use crate::head::Head;
use crate::model::{ConceptDictionary, Loadings};
use crate::numerics::{auc_trapezoid, pearson, rng::streams, Matrix, SeededRng};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FidelityMetric {
    /// Lower area is better.
    Deletion,
    /// Higher area is better.
    Insertion,
}

impl FidelityMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Deletion => "deletion",
            Self::Insertion => "insertion",
        }
    }
}

impl fmt::Display for FidelityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FidelityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deletion" => Ok(Self::Deletion),
            "insertion" => Ok(Self::Insertion),
            _ => Err(Error::invalid(format!("unknown fidelity metric '{s}'"))),
        }
    }
}

/// Target logit after `grid[j]` concepts have been removed or inserted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FidelityCurve<T> {
    pub metric: FidelityMetric,
    /// Attribution method that produced the ordering, when known.
    pub method: Option<String>,
    pub grid: Vec<usize>,
    pub scores: Vec<T>,
    pub auc: T,
}

impl<T: Scalar> FidelityCurve<T> {
    pub fn k(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn with_method(mut self, method: impl Into<String>) -> Self {
        self.method = Some(method.into());
        self
    }
}

/// Concept indices by decreasing importance, lower index first on ties.
pub fn importance_order<T: Scalar>(phi: &[T]) -> Result<Vec<usize>> {
    if let Some(i) = phi.iter().position(|v| v.is_nan()) {
        return Err(Error::invalid(format!("importance {i} is NaN")));
    }
    let mut order: Vec<usize> = (0..phi.len()).collect();
    order.sort_by(|&a, &b| phi[b].partial_cmp(&phi[a]).expect("no NaN"));
    Ok(order)
}

/// Coefficient rows visited by a curve: row `j` keeps `u` on the concepts a
/// deletion has not reached yet, or on those an insertion has restored.
fn curve_points<T: Scalar>(u: &[T], order: &[usize], metric: FidelityMetric) -> Vec<Vec<T>> {
    let k = u.len();
    let mut current = match metric {
        FidelityMetric::Deletion => u.to_vec(),
        FidelityMetric::Insertion => vec![T::zero(); k],
    };
    let mut rows = Vec::with_capacity(k + 1);
    rows.push(current.clone());
    for &i in order {
        current[i] = match metric {
            FidelityMetric::Deletion => T::zero(),
            FidelityMetric::Insertion => u[i],
        };
        rows.push(current.clone());
    }
    rows
}

fn check_order(order: &[usize], k: usize) -> Result<()> {
    let mut seen = vec![false; k];
    if order.len() != k || order.iter().any(|&i| i >= k || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::invalid(format!("order {order:?} is not a permutation of 0..{k}")));
    }
    Ok(())
}

pub(crate) fn curve_with_function<T: Scalar>(
    f: &ConceptFunction<'_, T>,
    u: &[T],
    order: &[usize],
    metric: FidelityMetric,
) -> Result<FidelityCurve<T>> {
    check_order(order, f.k())?;
    let scores = f.eval_rows(&curve_points(u, order, metric))?;
    Ok(FidelityCurve {
        metric,
        method: None,
        grid: (0..=order.len()).collect(),
        auc: auc_trapezoid(&scores)?,
        scores,
    })
}

pub(crate) fn concept_function<'a, T: Scalar>(
    u: &[T],
    dictionary: &'a ConceptDictionary<T>,
    head: &'a Head<T>,
) -> Result<ConceptFunction<'a, T>> {
    let f = ConceptFunction::new(dictionary, head)?;
    if u.len() != f.k() {
        return Err(Error::shape(format!("u has {} entries, dictionary {} concepts", u.len(), f.k())));
    }
    Ok(f)
}

/// Curve for an explicit removal or insertion order.
pub fn curve_for_order<T: Scalar>(
    u: &[T],
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    order: &[usize],
    metric: FidelityMetric,
) -> Result<FidelityCurve<T>> {
    curve_with_function(&concept_function(u, dictionary, head)?, u, order, metric)
}

/// Curve following `phi`, most important concept first.
pub fn fidelity_curve<T: Scalar>(
    u: &[T],
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    phi: &[T],
    metric: FidelityMetric,
) -> Result<FidelityCurve<T>> {
    let f = concept_function(u, dictionary, head)?;
    if phi.len() != f.k() {
        return Err(Error::shape(format!("importance has {} entries, dictionary {} concepts", phi.len(), f.k())));
    }
    curve_with_function(&f, u, &importance_order(phi)?, metric)
}

pub fn c_deletion<T: Scalar>(
    u: &[T],
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    phi: &[T],
) -> Result<FidelityCurve<T>> {
    fidelity_curve(u, dictionary, head, phi, FidelityMetric::Deletion)
}

pub fn c_insertion<T: Scalar>(
    u: &[T],
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    phi: &[T],
) -> Result<FidelityCurve<T>> {
    fidelity_curve(u, dictionary, head, phi, FidelityMetric::Insertion)
}

pub const DEFAULT_MU_SUBSETS: usize = 200;
pub const MIN_MU_SUBSETS: usize = 10;

/// `⌈k / 2⌉`.
pub fn default_subset_size(k: usize) -> usize {
    k.div_ceil(2)
}

/// μFidelity settings; `subset_size` defaults to `⌈k / 2⌉`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct MuFidelityConfig {
    pub subset_size: Option<usize>,
    pub subsets: usize,
    pub seed: u64,
}

impl Default for MuFidelityConfig {
    fn default() -> Self {
        Self {
            subset_size: None,
            subsets: DEFAULT_MU_SUBSETS,
            seed: 0,
        }
    }
}

impl MuFidelityConfig {
    pub fn subset_size_for(&self, k: usize) -> usize {
        self.subset_size.unwrap_or_else(|| default_subset_size(k))
    }
}

pub(crate) fn mu_fidelity_with_function<T: Scalar>(
    f: &ConceptFunction<'_, T>,
    u: &[T],
    phi: &[T],
    subset_size: usize,
    subsets: usize,
    rng: &mut SeededRng,
) -> Result<T> {
    let k = f.k();
    if phi.len() != k {
        return Err(Error::shape(format!("importance has {} entries, dictionary {k} concepts", phi.len())));
    }
    if phi.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("importance contains NaN"));
    }
    if subset_size == 0 || subset_size >= k {
        return Err(Error::invalid(format!("subset size must be in 1..{k}, got {subset_size}")));
    }
    if subsets < MIN_MU_SUBSETS {
        return Err(Error::invalid(format!("need at least {MIN_MU_SUBSETS} subsets, got {subsets}")));
    }
    let mut rows = Vec::with_capacity(subsets + 1);
    rows.push(u.to_vec());
    let mut attributed = Vec::with_capacity(subsets);
    for _ in 0..subsets {
        let removed = rng.sample_indices(k, subset_size);
        let mut row = u.to_vec();
        let mut total = T::zero();
        for &i in &removed {
            row[i] = T::zero();
            total += phi[i];
        }
        rows.push(row);
        attributed.push(total);
    }
    let y = f.eval_rows(&rows)?;
    let drops: Vec<T> = y[1..].iter().map(|&v| y[0] - v).collect();
    pearson(&attributed, &drops)
}

/// Pearson correlation, over random subsets `S` with `|S| = subset_size`,
/// between `Σ_{i∈S} φᵢ` and the logit drop when `S` is zeroed. Subsets are
/// drawn from the μFidelity stream of `seed`.
pub fn c_mu_fidelity<T: Scalar>(
    u: &[T],
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    phi: &[T],
    subset_size: usize,
    subsets: usize,
    seed: u64,
) -> Result<T> {
    let f = concept_function(u, dictionary, head)?;
    let mut rng = SeededRng::new(seed, streams::MU_FIDELITY);
    mu_fidelity_with_function(&f, u, phi, subset_size, subsets, &mut rng)
}

/// Stream for sample `i` of a μFidelity batch; sample 0 shares the stream of
/// [`c_mu_fidelity`].
pub(crate) fn mu_fidelity_stream(i: usize) -> u64 {
    streams::MU_FIDELITY + ((i as u64) << 8)
}

/// Mean curve and per-sample areas for one metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CurveSummary {
    pub metric: FidelityMetric,
    pub grid: Vec<usize>,
    pub mean_scores: Vec<f64>,
    pub mean_auc: f64,
    pub auc: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MuFidelitySummary {
    pub subset_size: usize,
    pub subsets: usize,
    pub seed: u64,
    /// Mean over the samples where the correlation is defined.
    pub mean: Option<f64>,
    /// `None` where either side of the correlation is constant.
    pub per_sample: Vec<Option<f64>>,
}

/// Faithfulness of one importance matrix over a set of samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FaithfulnessReport {
    pub method: String,
    pub samples: usize,
    pub k: usize,
    pub deletion: Option<CurveSummary>,
    pub insertion: Option<CurveSummary>,
    pub mu_fidelity: Option<MuFidelitySummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaithfulnessMetric {
    Deletion,
    Insertion,
    #[serde(rename = "mufidelity")]
    MuFidelity,
}

impl FromStr for FaithfulnessMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deletion" => Ok(Self::Deletion),
            "insertion" => Ok(Self::Insertion),
            "mufidelity" => Ok(Self::MuFidelity),
            _ => Err(Error::invalid(format!("unknown faithfulness metric '{s}'"))),
        }
    }
}

fn summarize<T: Scalar>(curves: &[FidelityCurve<T>], metric: FidelityMetric, k: usize) -> CurveSummary {
    let n = curves.len() as f64;
    let mut mean_scores = vec![0.0; k + 1];
    for c in curves {
        for (m, s) in mean_scores.iter_mut().zip(&c.scores) {
            *m += s.to_f64_lossless() / n;
        }
    }
    let auc: Vec<f64> = curves.iter().map(|c| c.auc.to_f64_lossless()).collect();
    CurveSummary {
        metric,
        grid: (0..=k).collect(),
        mean_scores,
        mean_auc: auc.iter().sum::<f64>() / n,
        auc,
    }
}

/// Evaluates `metrics` for every row of `loadings` against the matching row
/// of `phi`. Samples run in parallel; μFidelity for sample `i` uses its own
/// stream, so the result does not depend on scheduling.
pub fn evaluate_faithfulness<T: Scalar>(
    loadings: &Loadings<T>,
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    phi: &Matrix<T>,
    method: &str,
    metrics: &[FaithfulnessMetric],
    mu: &MuFidelityConfig,
) -> Result<FaithfulnessReport> {
    let (n, k) = loadings.values().shape();
    if phi.shape() != (n, k) {
        return Err(Error::shape(format!(
            "importance matrix is {}×{}, loadings {n}×{k}",
            phi.rows(),
            phi.cols()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("no samples to evaluate"));
    }
    let f = ConceptFunction::new(dictionary, head)?;
    if f.k() != k {
        return Err(Error::shape(format!("loadings have {k} concepts, dictionary {}", f.k())));
    }
    let curves = |metric: FidelityMetric| -> Result<CurveSummary> {
        let all = (0..n)
            .into_par_iter()
            .map(|i| {
                let order = importance_order(phi.row(i))?;
                curve_with_function(&f, loadings.row(i), &order, metric)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(summarize(&all, metric, k))
    };
    let mut report = FaithfulnessReport {
        method: method.to_string(),
        samples: n,
        k,
        deletion: None,
        insertion: None,
        mu_fidelity: None,
    };
    for metric in metrics {
        match metric {
            FaithfulnessMetric::Deletion if report.deletion.is_none() => {
                report.deletion = Some(curves(FidelityMetric::Deletion)?);
            }
            FaithfulnessMetric::Insertion if report.insertion.is_none() => {
                report.insertion = Some(curves(FidelityMetric::Insertion)?);
            }
            FaithfulnessMetric::MuFidelity if report.mu_fidelity.is_none() => {
                let m = mu.subset_size_for(k);
                let per_sample = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = SeededRng::new(mu.seed, mu_fidelity_stream(i));
                        match mu_fidelity_with_function(&f, loadings.row(i), phi.row(i), m, mu.subsets, &mut rng) {
                            Ok(r) => Ok(Some(r.to_f64_lossless())),
                            Err(Error::CorrelationUndefined(_)) => Ok(None),
                            Err(e) => Err(e),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                let defined: Vec<f64> = per_sample.iter().flatten().copied().collect();
                report.mu_fidelity = Some(MuFidelitySummary {
                    subset_size: m,
                    subsets: mu.subsets,
                    seed: mu.seed,
                    mean: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
                    per_sample,
                });
            }
            _ => {}
        }
    }
    Ok(report)
}
