use crate::error::{Error, Result};
use crate::head::Head;
use crate::model::ConceptDictionary;
use crate::numerics::Matrix;
use crate::scalar::Scalar;

/// Relative step of the central differences: `h = STEP · max(1, |uᵢ|)`.
pub const FINITE_DIFFERENCE_STEP: f64 = 1e-3;

/// `u ↦ g(u Vᵀ)` for the head's target class.
#[derive(Clone, Copy)]
pub(crate) struct ConceptFunction<'a, T> {
    pub dictionary: &'a ConceptDictionary<T>,
    pub head: &'a Head<T>,
}

impl<'a, T: Scalar> ConceptFunction<'a, T> {
    pub fn new(dictionary: &'a ConceptDictionary<T>, head: &'a Head<T>) -> Result<Self> {
        if dictionary.dim() != head.input_dim() {
            return Err(Error::shape(format!(
                "dictionary dimension {} does not match head input {}",
                dictionary.dim(),
                head.input_dim()
            )));
        }
        Ok(Self { dictionary, head })
    }

    pub fn k(&self) -> usize {
        self.dictionary.k()
    }

    /// Target logit at each row of `points` (`m × k`).
    pub fn eval(&self, points: &Matrix<T>) -> Result<Vec<T>> {
        if points.rows() == 0 {
            return Ok(Vec::new());
        }
        let activations = points.matmul_t(self.dictionary.vectors())?;
        self.head.target_logits(&activations)
    }

    pub fn eval_rows(&self, rows: &[Vec<T>]) -> Result<Vec<T>> {
        let k = self.k();
        let flat = rows.iter().flat_map(|r| r.iter().copied()).collect();
        self.eval(&Matrix::from_vec_unchecked(rows.len(), k, flat))
    }

    /// `Vᵀ w` when the head is a single affine map.
    pub fn exact_gradient(&self) -> Option<Vec<T>> {
        let (w, _) = self.head.affine_target()?;
        self.dictionary.project(&w).ok()
    }

    /// Gradients at every point: exact for affine heads, central differences
    /// otherwise (all perturbed points go to the head in one batch).
    pub fn gradients(&self, points: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        if let Some(g) = self.exact_gradient() {
            return Ok(vec![g; points.len()]);
        }
        self.finite_differences(points)
    }

    pub fn finite_differences(&self, points: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        let k = self.k();
        let mut probes = Vec::with_capacity(points.len() * 2 * k);
        let mut steps = Vec::with_capacity(points.len() * k);
        for u in points {
            for i in 0..k {
                let h = T::lit(FINITE_DIFFERENCE_STEP) * u[i].abs().max(T::one());
                let mut plus = u.clone();
                plus[i] += h;
                let mut minus = u.clone();
                minus[i] -= h;
                // effective step after rounding of u ± h
                steps.push(plus[i] - minus[i]);
                probes.push(plus);
                probes.push(minus);
            }
        }
        let values = self.eval_rows(&probes)?;
        Ok((0..points.len())
            .map(|p| {
                (0..k)
                    .map(|i| {
                        let at = 2 * (p * k + i);
                        (values[at] - values[at + 1]) / steps[p * k + i]
                    })
                    .collect()
            })
            .collect())
    }
}

/// Central-difference gradient of `u ↦ g(u Vᵀ)`, whatever the head kind.
pub fn finite_difference_gradient<T: Scalar>(u: &[T], dictionary: &ConceptDictionary<T>, head: &Head<T>) -> Result<Vec<T>> {
    let f = ConceptFunction::new(dictionary, head)?;
    if u.len() != f.k() {
        return Err(Error::shape(format!("u has {} entries, dictionary {} concepts", u.len(), f.k())));
    }
    Ok(f.finite_differences(&[u.to_vec()])?.remove(0))
}
