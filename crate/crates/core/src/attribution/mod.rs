//! Concept attribution: per-sample importance of each concept for the head's
//! target logit, `φ(u)` for `u ↦ g(u Vᵀ)`.
//!
//! Gradients are exact for single affine heads and central differences
//! otherwise. Stochastic estimators draw from a [`SeededRng`] whose stream is
//! the sample index, so batch results do not depend on scheduling.

mod closed_form;
mod gradient;
pub(crate) use gradient::ConceptFunction;
mod methods;
mod sensitivity;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use closed_form::closed_form;
pub use gradient::{finite_difference_gradient, FINITE_DIFFERENCE_STEP};
pub use methods::{gradient_input, integrated_gradients, occlusion, saliency, smoothgrad, vargrad};
pub use sensitivity::{hsic, hsic_from_samples, rise, sobol};

use crate::error::{Error, Result};
use crate::head::Head;
use crate::model::{ConceptDictionary, Loadings};
use crate::numerics::{Matrix, SeededRng};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CatMethod {
    Saliency,
    GradientInput,
    IntegratedGradients,
    #[serde(rename = "smoothgrad")]
    SmoothGrad,
    #[serde(rename = "vargrad")]
    VarGrad,
    Occlusion,
    Sobol,
    Hsic,
    Rise,
}

impl CatMethod {
    pub const ALL: [CatMethod; 9] = [
        Self::Saliency,
        Self::GradientInput,
        Self::IntegratedGradients,
        Self::SmoothGrad,
        Self::VarGrad,
        Self::Occlusion,
        Self::Sobol,
        Self::Hsic,
        Self::Rise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Saliency => "saliency",
            Self::GradientInput => "gradient-input",
            Self::IntegratedGradients => "integrated-gradients",
            Self::SmoothGrad => "smoothgrad",
            Self::VarGrad => "vargrad",
            Self::Occlusion => "occlusion",
            Self::Sobol => "sobol",
            Self::Hsic => "hsic",
            Self::Rise => "rise",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Self::SmoothGrad | Self::VarGrad | Self::Sobol | Self::Hsic | Self::Rise)
    }
}

impl fmt::Display for CatMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CatMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown attribution method '{s}'")))
    }
}

pub const DEFAULT_STEPS: usize = 30;
pub const DEFAULT_NOISE: f64 = 0.1;
pub const DEFAULT_DESIGNS: usize = 32;
pub const DEFAULT_HSIC_SAMPLES: usize = 512;
pub const DEFAULT_RISE_SAMPLES: usize = 1000;

/// Estimator settings. Unset fields fall back to the method defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct CatConfig {
    pub method: CatMethod,
    /// Path points for integrated gradients, noise draws for SmoothGrad and
    /// VarGrad.
    pub steps: usize,
    pub noise: f64,
    pub designs: usize,
    /// Masks for HSIC (default 512) and RISE (default 1000).
    pub mask_samples: Option<usize>,
    /// Reference point for integrated gradients and occlusion; zero if unset.
    pub baseline: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for CatConfig {
    fn default() -> Self {
        Self::new(CatMethod::Saliency)
    }
}

impl CatConfig {
    pub fn new(method: CatMethod) -> Self {
        Self {
            method,
            steps: DEFAULT_STEPS,
            noise: DEFAULT_NOISE,
            designs: DEFAULT_DESIGNS,
            mask_samples: None,
            baseline: None,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn mask_samples_or_default(&self) -> usize {
        self.mask_samples.unwrap_or(match self.method {
            CatMethod::Rise => DEFAULT_RISE_SAMPLES,
            _ => DEFAULT_HSIC_SAMPLES,
        })
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::invalid(format!("noise must be finite and >= 0, got {}", self.noise)));
        }
        if self.designs < 2 {
            return Err(Error::invalid(format!("designs must be at least 2, got {}", self.designs)));
        }
        if matches!(self.mask_samples, Some(n) if n < 2) {
            return Err(Error::invalid("mask-samples must be at least 2"));
        }
        if let Some(b) = &self.baseline {
            if b.len() != k {
                return Err(Error::shape(format!("baseline has {} entries, dictionary {k} concepts", b.len())));
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("baseline contains non-finite values"));
            }
        }
        Ok(())
    }

    fn baseline_vec<T: Scalar>(&self, k: usize) -> Vec<T> {
        match &self.baseline {
            Some(b) => b.iter().map(|&x| T::lit(x)).collect(),
            None => vec![T::zero(); k],
        }
    }
}

/// Importance scores for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Attribution<T> {
    pub scores: Vec<T>,
    /// Monte-Carlo standard error per score, for estimators that average.
    pub standard_errors: Option<Vec<T>>,
    /// Set when the estimator had no signal to work with (constant output).
    pub degenerate: bool,
}

impl<T: Scalar> Attribution<T> {
    pub(crate) fn exact(scores: Vec<T>) -> Self {
        Self {
            scores,
            standard_errors: None,
            degenerate: false,
        }
    }

    pub(crate) fn estimated(scores: Vec<T>, errors: Vec<T>) -> Self {
        Self {
            scores,
            standard_errors: Some(errors),
            degenerate: false,
        }
    }
}

/// Runs the configured estimator for one coefficient row, drawing randomness
/// from `rng`.
pub fn attribute_with_rng<T: Scalar>(
    u: &[T],
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    config: &CatConfig,
    rng: &mut SeededRng,
) -> Result<Attribution<T>> {
    let k = dictionary.k();
    config.validate(k)?;
    let noise = T::lit(config.noise);
    match config.method {
        CatMethod::Saliency => saliency(u, dictionary, head),
        CatMethod::GradientInput => gradient_input(u, dictionary, head),
        CatMethod::IntegratedGradients => {
            integrated_gradients(u, dictionary, head, config.steps, &config.baseline_vec(k))
        }
        CatMethod::SmoothGrad => smoothgrad(u, dictionary, head, config.steps, noise, rng),
        CatMethod::VarGrad => vargrad(u, dictionary, head, config.steps, noise, rng),
        CatMethod::Occlusion => occlusion(u, dictionary, head, &config.baseline_vec(k)),
        CatMethod::Sobol => sobol(u, dictionary, head, config.designs, rng),
        CatMethod::Hsic => hsic(u, dictionary, head, config.mask_samples_or_default(), rng),
        CatMethod::Rise => rise(u, dictionary, head, config.mask_samples_or_default(), rng),
    }
}

/// Attribution of a single row, using stream 0 of `config.seed`.
pub fn attribute<T: Scalar>(
    u: &[T],
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    config: &CatConfig,
) -> Result<Attribution<T>> {
    attribute_with_rng(u, dictionary, head, config, &mut SeededRng::new(config.seed, 0))
}

/// `n × k` local importances with the estimator that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceMatrix<T> {
    values: Matrix<T>,
    config: CatConfig,
    degenerate: Vec<bool>,
}

impl<T: Scalar> ImportanceMatrix<T> {
    pub fn new(values: Matrix<T>, config: CatConfig) -> Self {
        let n = values.rows();
        Self {
            values,
            config,
            degenerate: vec![false; n],
        }
    }

    pub fn samples(&self) -> usize {
        self.values.rows()
    }

    pub fn k(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.values.row(i)
    }

    pub fn method(&self) -> CatMethod {
        self.config.method
    }

    pub fn config(&self) -> &CatConfig {
        &self.config
    }

    /// Rows whose estimator reported a degenerate (constant-output) case.
    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }
}

/// Attributes every row of `loadings`; row `i` uses stream `i` of
/// `config.seed`, so the result is independent of thread scheduling.
pub fn attribute_batch<T: Scalar>(
    loadings: &Loadings<T>,
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    config: &CatConfig,
) -> Result<ImportanceMatrix<T>> {
    if loadings.k() != dictionary.k() {
        return Err(Error::shape(format!(
            "loadings have {} concepts, dictionary {}",
            loadings.k(),
            dictionary.k()
        )));
    }
    config.validate(dictionary.k())?;
    let rows = (0..loadings.samples())
        .into_par_iter()
        .map(|i| {
            let mut rng = SeededRng::new(config.seed, i as u64);
            attribute_with_rng(loadings.row(i), dictionary, head, config, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let k = dictionary.k();
    let degenerate = rows.iter().map(|r| r.degenerate).collect();
    let flat = rows.into_iter().flat_map(|r| r.scores).collect();
    Ok(ImportanceMatrix {
        values: Matrix::from_vec(loadings.samples(), k, flat)?,
        config: config.clone(),
        degenerate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    Mean,
    /// Each row contributes only at its argmax concept.
    PrevalenceWeighted,
}

/// Global per-concept scores from local importances.
pub fn aggregate_importance<T: Scalar>(phi: &Matrix<T>, mode: Aggregation) -> Result<Vec<T>> {
    let (n, k) = phi.shape();
    if n == 0 {
        return Err(Error::invalid("cannot aggregate an empty importance matrix"));
    }
    let mut total = vec![T::zero(); k];
    for row in phi.row_iter() {
        match mode {
            Aggregation::Mean => {
                for (t, &v) in total.iter_mut().zip(row) {
                    *t += v;
                }
            }
            Aggregation::PrevalenceWeighted => {
                let j = crate::numerics::argmax(row);
                total[j] += row[j];
            }
        }
    }
    let n = T::of_usize(n);
    Ok(total.into_iter().map(|t| t / n).collect())
}
