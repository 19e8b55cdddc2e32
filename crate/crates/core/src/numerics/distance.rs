use crate::error::{Error, Result};
use crate::numerics::assignment::min_cost_assignment;
use crate::numerics::{Matrix, SeededRng};
use crate::scalar::{norm, Scalar};

fn unit<T: Scalar>(v: &[T], row: usize) -> Result<Vec<T>> {
    let n = norm(v);
    if n == T::zero() {
        return Err(Error::ZeroNorm(row));
    }
    Ok(v.iter().map(|&x| x / n).collect())
}

fn euclidean<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

/// Reference rows normalized once for repeated k-th neighbour queries.
#[derive(Clone, Debug)]
pub struct KnnReference<T> {
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> KnnReference<T> {
    pub fn new(reference: &Matrix<T>) -> Result<Self> {
        let rows = reference.row_iter().enumerate().map(|(i, r)| unit(r, i)).collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Euclidean distance from the normalized query to its `k`-th nearest
    /// normalized reference row (`k` is 1-based).
    pub fn kth_distance(&self, query: &[T], k: usize) -> Result<T> {
        if k == 0 || k > self.rows.len() {
            return Err(Error::invalid(format!(
                "k = {k} must lie in 1..={} reference rows",
                self.rows.len()
            )));
        }
        if let Some(r) = self.rows.first() {
            if r.len() != query.len() {
                return Err(Error::shape(format!(
                    "query has dimension {}, reference {}",
                    query.len(),
                    r.len()
                )));
            }
        }
        let q = unit(query, 0)?;
        let mut d: Vec<T> = self.rows.iter().map(|r| euclidean(&q, r)).collect();
        let (_, kth, _) = d.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).expect("finite"));
        Ok(*kth)
    }
}

/// Deep-KNN distance: the `k`-th smallest distance between the unit-normalized
/// query and unit-normalized reference rows.
pub fn knn_distance<T: Scalar>(query: &[T], reference: &Matrix<T>, k: usize) -> Result<T> {
    if reference.cols() != query.len() {
        return Err(Error::shape(format!(
            "query has dimension {}, reference {}",
            query.len(),
            reference.cols()
        )));
    }
    KnnReference::new(reference)?.kth_distance(query, k)
}

/// Exact 1-Wasserstein distance between the uniform empirical measures on the
/// rows of `p` and `q`, with Euclidean ground cost.
///
/// When the sample counts differ, the larger set is uniformly subsampled (using
/// `seed`) down to the smaller one.
pub fn wasserstein1<T: Scalar>(p: &Matrix<T>, q: &Matrix<T>, seed: u64) -> Result<T> {
    if p.cols() != q.cols() {
        return Err(Error::shape(format!(
            "wasserstein1: dimensions {} and {} differ",
            p.cols(),
            q.cols()
        )));
    }
    let n = p.rows().min(q.rows());
    if n == 0 {
        return Err(Error::invalid("wasserstein1 needs non-empty samples"));
    }
    let mut rng = SeededRng::new(seed, crate::numerics::rng::streams::SUBSAMPLE);
    let subsample = |m: &Matrix<T>, rng: &mut SeededRng| {
        if m.rows() == n {
            m.clone()
        } else {
            let mut idx = rng.sample_indices(m.rows(), n);
            idx.sort_unstable();
            m.select_rows(&idx)
        }
    };
    let p = subsample(p, &mut rng);
    let q = subsample(q, &mut rng);
    let cost = Matrix::from_fn(n, n, |i, j| euclidean(p.row(i), q.row(j)));
    let a = min_cost_assignment(&cost)?;
    Ok(a.total / T::of_usize(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knn_self_is_zero() {
        let r = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.0, 1.0]]).unwrap();
        assert_eq!(knn_distance(&[3.0, -1.0], &r, 1).unwrap(), 0.0);
    }

    #[test]
    fn knn_orthogonal() {
        let r = Matrix::from_rows(&[[0.0, 5.0]]).unwrap();
        let d = knn_distance(&[2.0, 0.0], &r, 1).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn knn_matches_sorted_oracle() {
        let mut rng = SeededRng::new(11, 0);
        let r = Matrix::from_fn(20, 4, |_, _| rng.normal::<f64>());
        let q: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let qn: f64 = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut all: Vec<f64> = r
            .row_iter()
            .map(|row| {
                let rn: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                row.iter().zip(&q).map(|(a, b)| (a / rn - b / qn).powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for k in 1..=20 {
            assert!((knn_distance(&q, &r, k).unwrap() - all[k - 1]).abs() < 1e-14);
        }
    }

    #[test]
    fn knn_errors() {
        let r = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(matches!(knn_distance(&[0.0, 0.0], &r, 1), Err(Error::ZeroNorm(_))));
        assert!(knn_distance(&[1.0, 0.0], &r, 2).is_err());
        let z = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        assert!(matches!(knn_distance(&[1.0, 0.0], &z, 1), Err(Error::ZeroNorm(0))));
    }

    #[test]
    fn w1_identical_and_single_points() {
        let p = Matrix::from_rows(&[[0.0, 1.0], [2.0, 2.0]]).unwrap();
        assert_eq!(wasserstein1(&p, &p, 0).unwrap(), 0.0);
        let a = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[[3.0, 4.0]]).unwrap();
        assert_eq!(wasserstein1(&a, &b, 0).unwrap(), 5.0);
    }

    #[test]
    fn w1_matches_enumeration() {
        let perms: Vec<[usize; 4]> = {
            let mut v = Vec::new();
            for a in 0..4 {
                for b in 0..4 {
                    for c in 0..4 {
                        for d in 0..4 {
                            let p = [a, b, c, d];
                            let mut s = p;
                            s.sort_unstable();
                            if s == [0, 1, 2, 3] {
                                v.push(p);
                            }
                        }
                    }
                }
            }
            v
        };
        assert_eq!(perms.len(), 24);
        for seed in 0..10 {
            let mut rng = SeededRng::new(seed, 1);
            let p = Matrix::from_fn(4, 3, |_, _| rng.normal::<f64>());
            let q = Matrix::from_fn(4, 3, |_, _| rng.normal::<f64>());
            let best = perms
                .iter()
                .map(|perm| {
                    perm.iter()
                        .enumerate()
                        .map(|(i, &j)| euclidean(p.row(i), q.row(j)))
                        .sum::<f64>()
                        / 4.0
                })
                .fold(f64::INFINITY, f64::min);
            assert!((wasserstein1(&p, &q, 0).unwrap() - best).abs() < 1e-12);
        }
    }

    #[test]
    fn w1_dimension_mismatch() {
        let a = Matrix::<f64>::zeros(2, 2);
        let b = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(wasserstein1(&a, &b, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn w1_unequal_counts_subsamples() {
        let a = Matrix::from_rows(&[[0.0], [0.0], [0.0]]).unwrap();
        let b = Matrix::from_rows(&[[1.0]]).unwrap();
        assert_eq!(wasserstein1(&a, &b, 5).unwrap(), 1.0);
    }
}
