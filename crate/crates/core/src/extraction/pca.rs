use crate::error::{Error, Result};
use crate::extraction::Extraction;
use crate::model::{ActivationMatrix, ConceptDictionary, ExtractionMethod, Loadings};
use crate::numerics::{svd, Matrix};
use crate::scalar::Scalar;

/// Truncated PCA dictionary: the top-`k` right singular vectors of `A`
/// (of the column-centred `A` when `center` is set) with loadings `U = A V`.
///
/// Each concept's sign is fixed so that its entries sum to a nonnegative
/// value (first nonzero entry positive when the sum vanishes). Directions
/// whose singular value is numerically zero are flagged degenerate.
pub fn extract_pca<T: Scalar>(a: &ActivationMatrix<T>, k: usize, center: bool) -> Result<Extraction<T>> {
    let (n, p) = a.values().shape();
    if k == 0 || k > n.min(p) {
        return Err(Error::invalid(format!(
            "pca needs 1 <= k <= min(n, p) = {}, got k = {k}",
            n.min(p)
        )));
    }
    let x = a.values();
    let basis_source = if center {
        let means: Vec<T> = (0..p)
            .map(|j| x.col(j).into_iter().sum::<T>() / T::of_usize(n))
            .collect();
        Matrix::from_fn(n, p, |i, j| x[(i, j)] - means[j])
    } else {
        x.clone()
    };
    let decomposition = svd(&basis_source, k)?;
    let mut v = decomposition.right;
    for j in 0..k {
        let col = v.col(j);
        let sum: T = col.iter().copied().sum();
        let tiny = T::epsilon() * T::of_usize(p);
        let flip = if sum.abs() > tiny {
            sum < T::zero()
        } else {
            col.iter().find(|x| **x != T::zero()).is_some_and(|&x| x < T::zero())
        };
        if flip {
            let negated: Vec<T> = col.iter().map(|&x| -x).collect();
            v.set_col(j, &negated);
        }
    }
    let top = decomposition.singular.first().copied().unwrap_or_else(T::zero);
    let cutoff = top * T::epsilon() * T::of_usize(n.max(p)) * T::lit(10.0);
    let degenerate = decomposition.singular.iter().map(|&s| top == T::zero() || s <= cutoff).collect();
    let u = x.matmul(&v)?;
    Ok(Extraction {
        loadings: Loadings::tagged(u, a),
        dictionary: ConceptDictionary::with_degenerate(v, ExtractionMethod::Pca, degenerate)?,
        iterations: 0,
        objective_trace: Vec::new(),
    })
}
