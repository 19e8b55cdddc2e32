//! Core domain types: activations, concept dictionaries and loadings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::{dot, Scalar};

/// Dictionary-learning family a dictionary was fitted with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExtractionMethod {
    #[serde(rename = "kmeans")]
    KMeans,
    #[serde(rename = "pca")]
    Pca,
    #[serde(rename = "nmf")]
    Nmf,
}

impl ExtractionMethod {
    pub const ALL: [ExtractionMethod; 3] = [Self::KMeans, Self::Pca, Self::Nmf];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::KMeans => "kmeans",
            Self::Pca => "pca",
            Self::Nmf => "nmf",
        }
    }
}

impl fmt::Display for ExtractionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExtractionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(Self::KMeans),
            "pca" => Ok(Self::Pca),
            "nmf" => Ok(Self::Nmf),
            other => Err(Error::invalid(format!("unknown extraction method '{other}'"))),
        }
    }
}

/// `n × p` activations of one class at one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMatrix<T> {
    values: Matrix<T>,
    layer: String,
    class: String,
}

impl<T: Scalar> ActivationMatrix<T> {
    pub fn new(values: Matrix<T>) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::shape(format!(
                "activations need at least one sample and one feature, got {:?}",
                values.shape()
            )));
        }
        Ok(Self {
            values,
            layer: String::new(),
            class: String::new(),
        })
    }

    pub fn with_tags(mut self, layer: impl Into<String>, class: impl Into<String>) -> Self {
        self.layer = layer.into();
        self.class = class.into();
        self
    }

    pub fn samples(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn into_values(self) -> Matrix<T> {
        self.values
    }

    pub fn layer(&self) -> &str {
        &self.layer
    }

    pub fn class(&self) -> &str {
        &self.class
    }

    pub(crate) fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(idx),
            layer: self.layer.clone(),
            class: self.class.clone(),
        }
    }
}

/// `p × k` matrix whose columns are concept activation vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptDictionary<T> {
    vectors: Matrix<T>,
    method: ExtractionMethod,
    degenerate: Vec<bool>,
}

impl<T: Scalar> ConceptDictionary<T> {
    /// Validates the method-specific invariants: no all-zero concept, nonnegative
    /// entries for NMF, orthonormal columns for PCA.
    pub fn new(vectors: Matrix<T>, method: ExtractionMethod) -> Result<Self> {
        let k = vectors.cols();
        Self::with_degenerate(vectors, method, vec![false; k])
    }

    pub(crate) fn with_degenerate(vectors: Matrix<T>, method: ExtractionMethod, degenerate: Vec<bool>) -> Result<Self> {
        let (p, k) = vectors.shape();
        if p == 0 || k == 0 {
            return Err(Error::shape(format!("dictionary must be non-empty, got {p}x{k}")));
        }
        if degenerate.len() != k {
            return Err(Error::shape(format!("{} degenerate flags for {k} concepts", degenerate.len())));
        }
        for j in 0..k {
            // a zero column is only admitted when flagged
            if !degenerate[j] && (0..p).all(|i| vectors[(i, j)] == T::zero()) {
                return Err(Error::invalid(format!("concept {j} is an all-zero vector")));
            }
        }
        match method {
            ExtractionMethod::Nmf => {
                if let Some((row, col, value)) = vectors.first_negative() {
                    return Err(Error::NegativeEntry {
                        row,
                        col,
                        value: value.to_f64_lossless(),
                    });
                }
            }
            ExtractionMethod::Pca => {
                let tol = T::lit(1e-6).max(T::epsilon() * T::lit(1e3));
                let g = vectors.gram();
                for a in 0..k {
                    for b in 0..k {
                        let target = if a == b { T::one() } else { T::zero() };
                        if (g[(a, b)] - target).abs() > tol {
                            return Err(Error::invalid(format!(
                                "pca concepts {a} and {b} are not orthonormal (gram entry {})",
                                g[(a, b)]
                            )));
                        }
                    }
                }
            }
            ExtractionMethod::KMeans => {}
        }
        Ok(Self {
            vectors,
            method,
            degenerate,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.rows()
    }

    pub fn k(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vectors(&self) -> &Matrix<T> {
        &self.vectors
    }

    pub fn method(&self) -> ExtractionMethod {
        self.method
    }

    /// Concepts that carry no signal (rank-deficient PCA directions, unused
    /// NMF atoms).
    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    pub fn concept(&self, j: usize) -> Vec<T> {
        self.vectors.col(j)
    }

    /// `u Vᵀ` for a single coefficient row.
    pub fn combine(&self, u: &[T]) -> Result<Vec<T>> {
        if u.len() != self.k() {
            return Err(Error::shape(format!(
                "coefficient vector has {} entries, dictionary {} concepts",
                u.len(),
                self.k()
            )));
        }
        self.vectors.mul_vec(u)
    }

    /// `Vᵀ w`, the per-concept projection of an activation-space direction.
    pub fn project(&self, w: &[T]) -> Result<Vec<T>> {
        if w.len() != self.dim() {
            return Err(Error::shape(format!(
                "direction has {} entries, dictionary dimension {}",
                w.len(),
                self.dim()
            )));
        }
        Ok((0..self.k()).map(|j| dot(&self.concept(j), w)).collect())
    }
}

/// `n × k` per-sample concept coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Loadings<T> {
    values: Matrix<T>,
    layer: String,
    class: String,
}

impl<T: Scalar> Loadings<T> {
    pub fn new(values: Matrix<T>) -> Self {
        Self {
            values,
            layer: String::new(),
            class: String::new(),
        }
    }

    pub(crate) fn tagged(values: Matrix<T>, source: &ActivationMatrix<T>) -> Self {
        Self {
            values,
            layer: source.layer.clone(),
            class: source.class.clone(),
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

    pub fn into_values(self) -> Matrix<T> {
        self.values
    }

    pub fn layer(&self) -> &str {
        &self.layer
    }

    pub fn class(&self) -> &str {
        &self.class
    }

    /// Checks the structural constraint implied by `method`.
    pub fn validate_for(&self, method: ExtractionMethod) -> Result<()> {
        match method {
            ExtractionMethod::Nmf => {
                if let Some((row, col, value)) = self.values.first_negative() {
                    return Err(Error::NegativeEntry {
                        row,
                        col,
                        value: value.to_f64_lossless(),
                    });
                }
            }
            ExtractionMethod::KMeans => {
                for (i, r) in self.values.row_iter().enumerate() {
                    if r.iter().filter(|&&x| x != T::zero()).count() != 1 {
                        return Err(Error::invalid(format!(
                            "kmeans loading row {i} does not have exactly one nonzero"
                        )));
                    }
                }
            }
            ExtractionMethod::Pca => {}
        }
        Ok(())
    }
}

/// `U Vᵀ`, carrying over the loadings' layer and class tags.
pub fn reconstruct<T: Scalar>(u: &Loadings<T>, v: &ConceptDictionary<T>) -> Result<ActivationMatrix<T>> {
    if u.k() != v.k() {
        return Err(Error::shape(format!(
            "loadings have {} concepts, dictionary {}",
            u.k(),
            v.k()
        )));
    }
    let values = u.values.matmul_t(v.vectors())?;
    Ok(ActivationMatrix {
        values,
        layer: u.layer.clone(),
        class: u.class.clone(),
    })
}
