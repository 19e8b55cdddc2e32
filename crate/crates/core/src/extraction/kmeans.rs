use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::extraction::Extraction;
use crate::model::{ActivationMatrix, ConceptDictionary, ExtractionMethod, Loadings};
use crate::numerics::rng::streams;
use crate::numerics::{Matrix, SeededRng};
use crate::scalar::Scalar;

pub const MAX_LLOYD_ITERATIONS: usize = 300;
pub const KMEANS_RESTARTS: usize = 10;

fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid (lowest index on ties) and its squared distance.
pub(crate) fn nearest<T: Scalar>(row: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(row, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_seeding<T: Scalar>(a: &Matrix<T>, k: usize, rng: &mut SeededRng) -> Vec<Vec<T>> {
    let n = a.rows();
    let mut centroids = vec![a.row(rng.index(n)).to_vec()];
    let mut d2: Vec<T> = (0..n).map(|i| squared_distance(a.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: T = d2.iter().copied().sum();
        let pick = if total > T::zero() {
            let target = rng.uniform::<T>() * total;
            let mut acc = T::zero();
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > T::zero() && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` just short of `target`
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > T::zero()).expect("positive mass"))
        } else {
            rng.index(n)
        };
        let c = a.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(a.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign<T: Scalar>(a: &Matrix<T>, centroids: &[Vec<T>]) -> (Vec<usize>, Vec<T>, T) {
    let mut labels = Vec::with_capacity(a.rows());
    let mut dist = Vec::with_capacity(a.rows());
    for r in a.row_iter() {
        let (j, d) = nearest(r, centroids);
        labels.push(j);
        dist.push(d);
    }
    let inertia = dist.iter().copied().sum();
    (labels, dist, inertia)
}

struct LloydRun<T> {
    labels: Vec<usize>,
    centroids: Vec<Vec<T>>,
    iterations: usize,
    trace: Vec<T>,
}

impl<T: Scalar> LloydRun<T> {
    fn inertia(&self) -> T {
        *self.trace.last().expect("at least one assignment")
    }
}

/// k-means++ seeding followed by Lloyd iterations until the assignment is
/// stable or [`MAX_LLOYD_ITERATIONS`] is reached. An emptied cluster is moved
/// onto the point currently farthest from its centroid.
fn lloyd<T: Scalar>(x: &Matrix<T>, k: usize, rng: &mut SeededRng) -> LloydRun<T> {
    let (n, p) = x.shape();
    let mut centroids = plus_plus_seeding(x, k, rng);
    let mut trace = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    let mut iterations = 0;
    loop {
        let (labels, dist, inertia) = assign(x, &centroids);
        trace.push(inertia);
        if previous.as_ref() == Some(&labels) || iterations == MAX_LLOYD_ITERATIONS {
            return LloydRun {
                labels,
                centroids,
                iterations,
                trace,
            };
        }
        iterations += 1;

        let mut sums = vec![vec![T::zero(); p]; k];
        let mut counts = vec![0usize; k];
        for (i, &j) in labels.iter().enumerate() {
            counts[j] += 1;
            for (s, &v) in sums[j].iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] > 0 {
                let c = T::of_usize(counts[j]);
                centroids[j] = sums[j].iter().map(|&s| s / c).collect();
                continue;
            }
            // farthest point, lowest index on ties, never reused in one pass
            let far = (0..n)
                .filter(|&i| !taken[i])
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dist[b] >= dist[i] => Some(b),
                    _ => Some(i),
                })
                .expect("k <= n leaves an unused point");
            taken[far] = true;
            centroids[j] = x.row(far).to_vec();
        }
        previous = Some(labels);
    }
}

/// K-Means dictionary: centroids as concepts, one-hot loadings.
///
/// Runs [`KMEANS_RESTARTS`] independently seeded Lloyd fits and keeps the
/// one with the lowest final inertia (earliest restart on ties). Restart `r`
/// draws from its own stream, so the result does not depend on scheduling.
pub fn extract_kmeans<T: Scalar>(a: &ActivationMatrix<T>, k: usize, seed: u64) -> Result<Extraction<T>> {
    let (n, p) = a.values().shape();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("kmeans needs 1 <= k <= n = {n}, got k = {k}")));
    }
    let x = a.values();
    let runs: Vec<LloydRun<T>> = (0..KMEANS_RESTARTS)
        .into_par_iter()
        .map(|r| lloyd(x, k, &mut SeededRng::new(seed, streams::KMEANS_INIT + ((r as u64) << 8))))
        .collect();
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.inertia() < best.inertia() { run } else { best })
        .expect("at least one restart");
    let LloydRun {
        labels,
        centroids,
        iterations,
        trace,
    } = best;

    let mut counts = vec![0usize; k];
    let u = Matrix::from_fn(n, k, |i, j| if labels[i] == j { T::one() } else { T::zero() });
    for &j in &labels {
        counts[j] += 1;
    }
    let degenerate: Vec<bool> = (0..k)
        .map(|j| counts[j] == 0 || centroids[j].iter().all(|&v| v == T::zero()))
        .collect();
    let v = Matrix::from_fn(p, k, |i, j| centroids[j][i]);
    Ok(Extraction {
        loadings: Loadings::tagged(u, a),
        dictionary: ConceptDictionary::with_degenerate(v, ExtractionMethod::KMeans, degenerate)?,
        iterations,
        objective_trace: trace,
    })
}

/// One-hot assignment of each row to its nearest concept.
pub(crate) fn assign_to_dictionary<T: Scalar>(a: &Matrix<T>, v: &ConceptDictionary<T>) -> Matrix<T> {
    let centroids: Vec<Vec<T>> = (0..v.k()).map(|j| v.concept(j)).collect();
    let (labels, _, _) = assign(a, &centroids);
    Matrix::from_fn(a.rows(), v.k(), |i, j| if labels[i] == j { T::one() } else { T::zero() })
}
