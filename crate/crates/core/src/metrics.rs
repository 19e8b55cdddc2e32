//! Quality metrics for a fitted concept dictionary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{extract, ExtractionConfig};
use crate::model::{reconstruct, ActivationMatrix, ConceptDictionary, Loadings};
use crate::numerics::rng::streams;
use crate::numerics::{hungarian, wasserstein1, KnnReference, Matrix, SeededRng};
use crate::scalar::{dot, norm, Scalar};

/// Entries at or below this magnitude count as zero loadings.
pub const ZERO_THRESHOLD: f64 = 1e-12;
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_KNN: usize = 10;
/// Largest sample count for which FID solves the assignment on all rows.
pub const FID_EXACT_LIMIT: usize = 512;

/// `‖A − U Vᵀ‖_F / ‖A‖_F`.
pub fn relative_l2<T: Scalar>(a: &ActivationMatrix<T>, u: &Loadings<T>, v: &ConceptDictionary<T>) -> Result<T> {
    let denom = a.values().frobenius_norm();
    if denom == T::zero() {
        return Err(Error::invalid("relative l2 is undefined for an all-zero activation matrix"));
    }
    let back = reconstruct(u, v)?;
    Ok(a.values().sub(back.values())?.frobenius_norm() / denom)
}

/// Mean fraction of (near-)zero loadings per row: `1 − mean(‖u‖₀ / k)`.
pub fn sparsity<T: Scalar>(u: &Loadings<T>) -> T {
    let (n, k) = u.values().shape();
    if n == 0 || k == 0 {
        return T::zero();
    }
    let threshold = T::lit(ZERO_THRESHOLD);
    let zeros = u.values().as_slice().iter().filter(|x| x.abs() <= threshold).count();
    T::of_usize(zeros) / T::of_usize(n * k)
}

/// `1 − cos` between two concepts; zero vectors are orthogonal to everything.
fn cosine_cost<T: Scalar>(x: &[T], y: &[T]) -> T {
    let (nx, ny) = (norm(x), norm(y));
    if nx == T::zero() || ny == T::zero() {
        return T::one();
    }
    let cost = T::one() - dot(x, y) / (nx * ny);
    // identical directions differ from cos = 1 only by rounding
    if cost.abs() <= T::epsilon() * T::lit(8.0) {
        T::zero()
    } else {
        cost.max(T::zero())
    }
}

/// Mean matched `1 − cos` between two dictionaries after optimal concept
/// matching.
pub fn dictionary_distance<T: Scalar>(a: &ConceptDictionary<T>, b: &ConceptDictionary<T>) -> Result<T> {
    if a.k() != b.k() || a.dim() != b.dim() {
        return Err(Error::shape("dictionaries differ in shape"));
    }
    let k = a.k();
    let ca: Vec<Vec<T>> = (0..k).map(|j| a.concept(j)).collect();
    let cb: Vec<Vec<T>> = (0..k).map(|j| b.concept(j)).collect();
    let cost = Matrix::from_fn(k, k, |i, j| cosine_cost(&ca[i], &cb[j]));
    Ok(hungarian(&cost)?.total / T::of_usize(k))
}

/// Row ranges of `folds` contiguous, near-equal folds (earlier folds take the
/// remainder).
pub fn fold_ranges(n: usize, folds: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / folds;
    let extra = n % folds;
    let mut start = 0;
    (0..folds)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Fits one dictionary per contiguous fold and returns the mean matched
/// `1 − cos` over every unordered fold pair (0 = perfectly stable).
pub fn stability<T: Scalar>(a: &ActivationMatrix<T>, config: &ExtractionConfig, folds: usize) -> Result<T> {
    if folds < 2 {
        return Err(Error::invalid(format!("stability needs at least 2 folds, got {folds}")));
    }
    let ranges = fold_ranges(a.samples(), folds);
    if let Some((f, r)) = ranges.iter().enumerate().find(|(_, r)| r.len() < config.k) {
        return Err(Error::invalid(format!(
            "fold {f} has {} rows, fewer than k = {}",
            r.len(),
            config.k
        )));
    }
    let dictionaries = ranges
        .par_iter()
        .map(|r| {
            let idx: Vec<usize> = r.clone().collect();
            extract(&a.select_rows(&idx), config).map(|e| e.dictionary)
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..folds).flat_map(|i| ((i + 1)..folds).map(move |j| (i, j))).collect();
    let distances = pairs
        .par_iter()
        .map(|&(i, j)| dictionary_distance(&dictionaries[i], &dictionaries[j]))
        .collect::<Result<Vec<T>>>()?;
    Ok(distances.iter().copied().sum::<T>() / T::of_usize(distances.len()))
}

/// Empirical 1-Wasserstein distance between the rows of `A` and of `U Vᵀ`.
///
/// Above [`FID_EXACT_LIMIT`] rows, the same seeded subset of row indices is
/// taken from both sides.
pub fn fid<T: Scalar>(a: &ActivationMatrix<T>, u: &Loadings<T>, v: &ConceptDictionary<T>, seed: u64) -> Result<T> {
    let back = reconstruct(u, v)?;
    if back.samples() != a.samples() {
        return Err(Error::shape(format!(
            "{} activation rows but {} loading rows",
            a.samples(),
            back.samples()
        )));
    }
    let n = a.samples();
    let (x, y) = if n > FID_EXACT_LIMIT {
        let mut idx = SeededRng::new(seed, streams::SUBSAMPLE).sample_indices(n, FID_EXACT_LIMIT);
        idx.sort_unstable();
        (a.values().select_rows(&idx), back.values().select_rows(&idx))
    } else {
        (a.values().clone(), back.into_values())
    };
    wasserstein1(&x, &y, seed)
}

/// Mean Deep-KNN distance from each reconstructed row to the reference set.
pub fn ood_score<T: Scalar>(reference: &ActivationMatrix<T>, reconstructed: &Matrix<T>, knn: usize) -> Result<T> {
    if reconstructed.rows() == 0 {
        return Err(Error::invalid("ood score needs at least one reconstructed row"));
    }
    if reconstructed.cols() != reference.dim() {
        return Err(Error::shape(format!(
            "reconstruction has dimension {}, reference {}",
            reconstructed.cols(),
            reference.dim()
        )));
    }
    let index = KnnReference::new(reference.values())?;
    let distances = reconstructed
        .row_iter()
        .collect::<Vec<_>>()
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            index.kth_distance(r, knn).map_err(|e| match e {
                Error::ZeroNorm(_) => Error::ZeroNorm(i),
                other => other,
            })
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(distances.iter().copied().sum::<T>() / T::of_usize(distances.len()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MetricsConfig {
    #[serde(flatten)]
    pub extraction: ExtractionConfig,
    pub folds: usize,
    pub knn: usize,
}

impl MetricsConfig {
    pub fn new(extraction: ExtractionConfig) -> Self {
        Self {
            extraction,
            folds: DEFAULT_FOLDS,
            knn: DEFAULT_KNN,
        }
    }
}

/// The five extraction metrics for one fitted configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExtractionReport {
    pub relative_l2: f64,
    pub sparsity: f64,
    pub stability: f64,
    pub fid: f64,
    pub ood: f64,
    #[serde(flatten)]
    pub config: MetricsConfig,
}

/// Fits `config` on all of `A` and scores it; stability refits on folds.
pub fn evaluate_extraction<T: Scalar>(a: &ActivationMatrix<T>, config: &MetricsConfig) -> Result<ExtractionReport> {
    let fit = extract(a, &config.extraction)?;
    let back = reconstruct(&fit.loadings, &fit.dictionary)?;
    Ok(ExtractionReport {
        relative_l2: relative_l2(a, &fit.loadings, &fit.dictionary)?.to_f64_lossless(),
        sparsity: sparsity(&fit.loadings).to_f64_lossless(),
        stability: stability(a, &config.extraction, config.folds)?.to_f64_lossless(),
        fid: fid(a, &fit.loadings, &fit.dictionary, config.extraction.seed)?.to_f64_lossless(),
        ood: ood_score(a, back.values(), config.knn)?.to_f64_lossless(),
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ExtractionMethod;

    fn act(m: Matrix<f64>) -> ActivationMatrix<f64> {
        ActivationMatrix::new(m).unwrap()
    }

    fn random(n: usize, p: usize, seed: u64) -> Matrix<f64> {
        let mut rng = SeededRng::new(seed, 0);
        Matrix::from_fn(n, p, |_, _| rng.uniform::<f64>() + 0.05)
    }

    #[test]
    fn relative_l2_endpoints() {
        let a = act(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
        let v = ConceptDictionary::new(Matrix::identity(2), ExtractionMethod::KMeans).unwrap();
        let exact = Loadings::new(a.values().clone());
        assert_eq!(relative_l2(&a, &exact, &v).unwrap(), 0.0);
        let zero = Loadings::new(Matrix::zeros(2, 2));
        assert_eq!(relative_l2(&a, &zero, &v).unwrap(), 1.0);
        assert!(relative_l2(&act(Matrix::zeros(2, 2)), &zero, &v).is_err());
    }

    #[test]
    fn sparsity_examples() {
        let u = Loadings::new(Matrix::from_rows(&[[0.5, 0.0, 0.0, 0.2]]).unwrap());
        assert_eq!(sparsity(&u), 0.5);
        let one_hot = Loadings::new(Matrix::from_fn(40, 20, |i, j| if i % 20 == j { 1.0 } else { 0.0 }));
        assert_eq!(sparsity(&one_hot), 0.95);
        let near_zero = Loadings::new(Matrix::from_rows(&[[1e-13, 1.0]]).unwrap());
        assert_eq!(sparsity(&near_zero), 0.5);
    }

    #[test]
    fn folds_are_contiguous_and_cover() {
        let r = fold_ranges(11, 3);
        assert_eq!(r, vec![0..4, 4..8, 8..11]);
    }

    #[test]
    fn duplicated_folds_are_perfectly_stable() {
        let base = random(30, 6, 1);
        let doubled = Matrix::from_fn(60, 6, |i, j| base[(i % 30, j)]);
        for method in ExtractionMethod::ALL {
            let s = stability(&act(doubled.clone()), &ExtractionConfig::new(method, 3, 2), 2).unwrap();
            assert_eq!(s, 0.0, "{method}");
        }
    }

    #[test]
    fn stability_rejects_small_folds() {
        let a = act(random(10, 4, 0));
        assert!(stability(&a, &ExtractionConfig::new(ExtractionMethod::Pca, 3, 0), 5).is_err());
        assert!(stability(&a, &ExtractionConfig::new(ExtractionMethod::Pca, 1, 0), 1).is_err());
    }

    #[test]
    fn dictionary_distance_permutation_invariant_and_hand_value() {
        let d1 = ConceptDictionary::new(Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap(), ExtractionMethod::KMeans).unwrap();
        let swapped = ConceptDictionary::new(Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap(), ExtractionMethod::KMeans).unwrap();
        assert_eq!(dictionary_distance(&d1, &swapped).unwrap(), 0.0);
        // concepts at 60° and 90° to e1/e2: cos matrix [[0.5, 0], [0.866.., 0]]
        let s = 3f64.sqrt() / 2.0;
        let d2 = ConceptDictionary::new(Matrix::from_rows(&[[0.5, 0.0], [s, 1.0]]).unwrap(), ExtractionMethod::KMeans).unwrap();
        // matchings: (e1→c1, e2→c2) = (0.5 + 0) ; (e1→c2, e2→c1) = (1 + (1 − s))
        let expected = ((1.0 - 0.5) + (1.0 - 1.0f64)).min((1.0 - 0.0) + (1.0 - s)) / 2.0;
        assert!((dictionary_distance(&d1, &d2).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn fid_zero_on_perfect_and_shift_norm() {
        let a = act(random(8, 3, 5));
        let v = ConceptDictionary::new(Matrix::identity(3), ExtractionMethod::KMeans).unwrap();
        assert_eq!(fid(&a, &Loadings::new(a.values().clone()), &v, 0).unwrap(), 0.0);
        let c = [0.3, -0.4, 1.2];
        let shifted = Matrix::from_fn(8, 3, |i, j| a.values()[(i, j)] + c[j]);
        let expected = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((fid(&a, &Loadings::new(shifted), &v, 0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn fid_subsamples_large_inputs_consistently() {
        let a = act(random(600, 2, 6));
        let v = ConceptDictionary::new(Matrix::identity(2), ExtractionMethod::KMeans).unwrap();
        assert_eq!(fid(&a, &Loadings::new(a.values().clone()), &v, 3).unwrap(), 0.0);
    }

    #[test]
    fn ood_examples() {
        let a = act(random(10, 4, 7));
        assert_eq!(ood_score(&a, a.values(), 1).unwrap(), 0.0);
        let reference = act(Matrix::from_rows(&[[1.0, 0.0], [2.0, 0.0]]).unwrap());
        let far = Matrix::from_rows(&[[0.0, 5.0]]).unwrap();
        assert!((ood_score(&reference, &far, 1).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn kmeans_report_sparsity_and_roundtrip() {
        let a = act(random(100, 6, 8));
        let report = evaluate_extraction(&a, &MetricsConfig::new(ExtractionConfig::new(ExtractionMethod::KMeans, 4, 1))).unwrap();
        assert_eq!(report.sparsity, 0.75);
        let text = crate::io::json::to_canonical_json(&report).unwrap();
        let back: ExtractionReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
        let flat: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["relative-l2", "sparsity", "stability", "fid", "ood", "method", "k", "seed", "folds", "knn"] {
            assert!(flat.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn exact_rank_pca_report() {
        let mut rng = SeededRng::new(3, 0);
        // rank 1: every fold spans the same line, and the sign convention
        // fixes the orientation; at higher rank the in-subspace basis depends
        // on each fold's spectrum
        let left = Matrix::from_fn(40, 1, |_, _| rng.uniform::<f64>() + 0.1);
        let right = Matrix::from_fn(1, 5, |_, _| rng.uniform::<f64>() + 0.1);
        let a = act(left.matmul(&right).unwrap());
        let mut config = MetricsConfig::new(ExtractionConfig::new(ExtractionMethod::Pca, 1, 0));
        config.folds = 4;
        let report = evaluate_extraction(&a, &config).unwrap();
        assert!(report.relative_l2 < 1e-12);
        assert!(report.stability < 1e-12);
        assert!(report.sparsity == 0.0);
    }
}
