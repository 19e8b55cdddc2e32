use crate::attribution::methods::check_len;
use crate::attribution::CatMethod;
use crate::error::{Error, Result};
use crate::model::ConceptDictionary;
use crate::scalar::Scalar;

/// Exact value of an estimator on the affine head `g(a) = a·w + b`, where `w`
/// is the target-class weight column.
///
/// With `c = u ⊙ Vᵀw`: saliency and SmoothGrad give `Vᵀw`; gradient-input and
/// occlusion give `c`; integrated gradients `½ c` (zero baseline); VarGrad
/// zero; RISE `b + ½ (Σ c + cᵢ)`. Sobol and HSIC have no closed form here.
pub fn closed_form<T: Scalar>(
    method: CatMethod,
    u: &[T],
    dictionary: &ConceptDictionary<T>,
    weights: &[T],
    bias: T,
) -> Result<Vec<T>> {
    check_len("u", u, dictionary.k())?;
    let grad = dictionary.project(weights)?;
    let contributions: Vec<T> = u.iter().zip(&grad).map(|(&a, &g)| a * g).collect();
    let half = T::lit(0.5);
    Ok(match method {
        CatMethod::Saliency | CatMethod::SmoothGrad => grad,
        CatMethod::GradientInput | CatMethod::Occlusion => contributions,
        CatMethod::IntegratedGradients => contributions.iter().map(|&c| half * c).collect(),
        CatMethod::VarGrad => vec![T::zero(); u.len()],
        CatMethod::Rise => {
            let total: T = contributions.iter().copied().sum();
            contributions.iter().map(|&c| bias + half * (total + c)).collect()
        }
        CatMethod::Sobol | CatMethod::Hsic => {
            return Err(Error::invalid(format!("{method} has no closed form on affine heads")))
        }
    })
}
