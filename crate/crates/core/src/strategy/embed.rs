//! Two-dimensional layouts of local importance vectors.
//!
//! Identical rows always land on identical coordinates: both layouts work on
//! the distinct rows and copy the result back to duplicates.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{rng::streams, svd, symmetric_eigen, Matrix, SeededRng};

pub const DEFAULT_NEIGHBORS: usize = 15;
const SUBSPACE_BLOCK: usize = 6;
const SUBSPACE_MAX_ITERATIONS: usize = 20_000;
const SUBSPACE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum EmbedConfig {
    /// Top two principal coordinates of the column-centered importances.
    #[default]
    Pca2,
    /// Two smallest nontrivial eigenvectors of the normalized kNN-graph
    /// Laplacian under cosine distance, each weighted by `1 − λ`.
    SpectralKnn {
        #[serde(default = "default_neighbors")]
        neighbors: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Caller-supplied coordinates, one `[x, y]` per sample.
    External { coords: Vec<[f64; 2]> },
}

fn default_neighbors() -> usize {
    DEFAULT_NEIGHBORS
}

impl EmbedConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Pca2 => "pca2",
            Self::SpectralKnn { .. } => "spectral-knn",
            Self::External { .. } => "external",
        }
    }
}

/// Distinct rows in first-appearance order, and the distinct index of each row.
fn deduplicate(phi: &Matrix<f64>) -> (Matrix<f64>, Vec<usize>) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut distinct = Vec::new();
    let mut owner = Vec::with_capacity(phi.rows());
    for (i, row) in phi.row_iter().enumerate() {
        // +0.0 and -0.0 compare equal, so they share a key
        let key: Vec<u64> = row.iter().map(|&v| (v + 0.0).to_bits()).collect();
        let next = index.len();
        let slot = *index.entry(key).or_insert(next);
        if slot == next {
            distinct.push(i);
        }
        owner.push(slot);
    }
    (phi.select_rows(&distinct), owner)
}

fn expand(coords: &Matrix<f64>, owner: &[usize]) -> Matrix<f64> {
    coords.select_rows(owner)
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn pca2(phi: &Matrix<f64>) -> Result<Matrix<f64>> {
    let (n, k) = phi.shape();
    let means: Vec<f64> = (0..k).map(|j| phi.col(j).iter().sum::<f64>() / n as f64).collect();
    let centered = Matrix::from_fn(n, k, |i, j| phi[(i, j)] - means[j]);
    let mut coords = Matrix::zeros(n, 2);
    if centered.max_abs() == 0.0 {
        return Ok(coords);
    }
    let rank = 2.min(k).min(n);
    let decomposition = svd(&centered, rank)?;
    for axis in 0..rank {
        if decomposition.singular[axis] == 0.0 {
            continue;
        }
        let mut scores = centered.mul_vec(&decomposition.right.col(axis))?;
        fix_sign(&mut scores);
        for (i, s) in scores.into_iter().enumerate() {
            coords[(i, axis)] = s;
        }
    }
    Ok(coords)
}

pub(crate) fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            (1.0 - dot / (na * nb)).max(0.0)
        }
    }
}

/// Symmetrized kNN adjacency lists with unit weights.
pub(crate) fn knn_graph(points: &Matrix<f64>, neighbors: usize) -> Vec<Vec<usize>> {
    let n = points.rows();
    let distance = Matrix::from_fn(n, n, |a, b| cosine_distance(points.row(a), points.row(b)));
    let mut adjacency = vec![Vec::new(); n];
    for a in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&b| b != a).collect();
        others.sort_by(|&x, &y| distance[(a, x)].total_cmp(&distance[(a, y)]).then(x.cmp(&y)));
        for &b in others.iter().take(neighbors) {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
    }
    let components = components(&adjacency);
    let count = components.iter().max().map_or(0, |&c| c + 1);
    if count > 1 {
        log::warn!("kNN graph has {count} components; joining them through nearest pairs");
        connect(&mut adjacency, &distance);
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }
    adjacency
}

fn components(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        label[start] = next;
        while let Some(a) = stack.pop() {
            for &b in &adjacency[a] {
                if label[b] == usize::MAX {
                    label[b] = next;
                    stack.push(b);
                }
            }
        }
        next += 1;
    }
    label
}

/// Repeatedly links the component of node 0 to its nearest outside node.
fn connect(adjacency: &mut [Vec<usize>], distance: &Matrix<f64>) {
    loop {
        let label = components(adjacency);
        let n = adjacency.len();
        let mut best: Option<(f64, usize, usize)> = None;
        for a in (0..n).filter(|&a| label[a] == label[0]) {
            for b in (0..n).filter(|&b| label[b] != label[0]) {
                if best.is_none_or(|(d, _, _)| distance[(a, b)] < d) {
                    best = Some((distance[(a, b)], a, b));
                }
            }
        }
        let Some((_, a, b)) = best else { break };
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
}

/// Orthonormalizes the columns of `block` against `fixed` and each other
/// (modified Gram-Schmidt, applied twice). Columns that collapse are replaced
/// from `rng`.
fn orthonormalize(block: &mut [Vec<f64>], fixed: &[f64], rng: &mut SeededRng) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for j in 0..block.len() {
        for _attempt in 0..4 {
            for _pass in 0..2 {
                let c = dot(&block[j], fixed);
                block[j].iter_mut().zip(fixed).for_each(|(x, f)| *x -= c * f);
                for i in 0..j {
                    let (done, rest) = block.split_at_mut(j);
                    let c = dot(&rest[0], &done[i]);
                    rest[0].iter_mut().zip(&done[i]).for_each(|(x, q)| *x -= c * q);
                }
            }
            let norm = dot(&block[j], &block[j]).sqrt();
            if norm > 1e-12 {
                block[j].iter_mut().for_each(|x| *x /= norm);
                break;
            }
            block[j] = (0..fixed.len()).map(|_| rng.normal::<f64>()).collect();
        }
    }
}

/// Two leading nontrivial eigenvectors of `(I + D^{-1/2} W D^{-1/2}) / 2`,
/// i.e. the two smallest nontrivial ones of the normalized Laplacian, by
/// subspace iteration with Rayleigh-Ritz. The trivial vector `D^{1/2} 1` is
/// projected out explicitly.
pub(crate) fn spectral_vectors(adjacency: &[Vec<usize>], seed: u64) -> Result<([f64; 2], [Vec<f64>; 2])> {
    let n = adjacency.len();
    let inv_sqrt: Vec<f64> = adjacency.iter().map(|a| 1.0 / (a.len() as f64).sqrt()).collect();
    let total: f64 = adjacency.iter().map(|a| a.len() as f64).sum();
    let trivial: Vec<f64> = adjacency.iter().map(|a| (a.len() as f64 / total).sqrt()).collect();
    let apply = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|a| {
                let s: f64 = adjacency[a].iter().map(|&b| inv_sqrt[b] * x[b]).sum();
                0.5 * (x[a] + inv_sqrt[a] * s)
            })
            .collect()
    };
    let width = SUBSPACE_BLOCK.min(n - 1);
    let mut rng = SeededRng::new(seed, streams::EMBED);
    let mut block: Vec<Vec<f64>> = (0..width).map(|_| (0..n).map(|_| rng.normal::<f64>()).collect()).collect();
    orthonormalize(&mut block, &trivial, &mut rng);

    let mut ritz: Vec<Vec<f64>> = Vec::new();
    let mut ritz_values = [0.0; 2];
    for iteration in 1..=SUBSPACE_MAX_ITERATIONS {
        let images: Vec<Vec<f64>> = block.iter().map(|x| apply(x)).collect();
        if iteration % 10 != 0 && iteration != SUBSPACE_MAX_ITERATIONS {
            block = images;
            orthonormalize(&mut block, &trivial, &mut rng);
            continue;
        }
        // Rayleigh-Ritz on the current block
        let small = Matrix::from_fn(width, width, |i, j| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            block[a].iter().zip(&images[b]).map(|(x, y)| x * y).sum::<f64>()
        });
        let (values, vectors) = symmetric_eigen(&small)?;
        let combine = |source: &[Vec<f64>], col: usize| -> Vec<f64> {
            (0..n).map(|r| (0..width).map(|c| vectors[(c, col)] * source[c][r]).sum()).collect()
        };
        ritz = (0..2.min(width)).map(|c| combine(&block, c)).collect();
        for (slot, &v) in ritz_values.iter_mut().zip(&values) {
            *slot = v;
        }
        let residual = (0..ritz.len())
            .map(|c| {
                let image = combine(&images, c);
                image.iter().zip(&ritz[c]).map(|(y, x)| (y - values[c] * x).powi(2)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max);
        if residual < SUBSPACE_TOLERANCE {
            break;
        }
        if iteration == SUBSPACE_MAX_ITERATIONS {
            log::warn!("spectral layout stopped at residual {residual:.3e} after {iteration} iterations");
            break;
        }
        block = (0..width).map(|c| combine(&images, c)).collect();
        orthonormalize(&mut block, &trivial, &mut rng);
    }
    let mut out = [vec![0.0; n], vec![0.0; n]];
    for (slot, v) in out.iter_mut().zip(ritz) {
        *slot = v;
        fix_sign(slot);
    }
    Ok((ritz_values, out))
}

fn spectral_knn(phi: &Matrix<f64>, neighbors: usize, seed: u64) -> Result<Matrix<f64>> {
    let n = phi.rows();
    if n < 3 {
        return Err(Error::invalid(format!("spectral layout needs at least 3 distinct rows, got {n}")));
    }
    if neighbors == 0 {
        return Err(Error::invalid("neighbor count must be positive"));
    }
    let adjacency = knn_graph(phi, neighbors.min(n - 1));
    let ([tx, ty], [x, y]) = spectral_vectors(&adjacency, seed)?;
    // weight by 1 − λ of the Laplacian, as in a one-step diffusion map
    let (wx, wy) = (2.0 * tx - 1.0, 2.0 * ty - 1.0);
    Ok(Matrix::from_fn(n, 2, |i, j| if j == 0 { wx * x[i] } else { wy * y[i] }))
}

/// `n × 2` coordinates for the rows of `phi`.
pub fn embed_2d(phi: &Matrix<f64>, config: &EmbedConfig) -> Result<Matrix<f64>> {
    let n = phi.rows();
    if n < 3 {
        return Err(Error::invalid(format!("a 2-D layout needs at least 3 samples, got {n}")));
    }
    if let Some(i) = phi.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: i / phi.cols(),
            col: i % phi.cols(),
        });
    }
    match config {
        EmbedConfig::External { coords } => {
            if coords.len() != n {
                return Err(Error::shape(format!("{} external coordinates for {n} samples", coords.len())));
            }
            if let Some(row) = coords.iter().position(|c| !c[0].is_finite() || !c[1].is_finite()) {
                return Err(Error::NonFinite { row, col: 0 });
            }
            Ok(Matrix::from_fn(n, 2, |i, j| coords[i][j]))
        }
        EmbedConfig::Pca2 => {
            let (distinct, owner) = deduplicate(phi);
            Ok(expand(&pca2(&distinct)?, &owner))
        }
        EmbedConfig::SpectralKnn { neighbors, seed } => {
            let (distinct, owner) = deduplicate(phi);
            Ok(expand(&spectral_knn(&distinct, *neighbors, *seed)?, &owner))
        }
    }
}
