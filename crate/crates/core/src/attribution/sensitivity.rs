//! Mask-based estimators: total-order Sobol indices, HSIC dependence and RISE.

use crate::attribution::gradient::ConceptFunction;
use crate::attribution::methods::check_len;
use crate::attribution::Attribution;
use crate::error::{Error, Result};
use crate::head::Head;
use crate::model::ConceptDictionary;
use crate::numerics::{Matrix, SeededRng};
use crate::scalar::Scalar;

fn prepare<'a, T: Scalar>(u: &[T], dictionary: &'a ConceptDictionary<T>, head: &'a Head<T>) -> Result<ConceptFunction<'a, T>> {
    let f = ConceptFunction::new(dictionary, head)?;
    check_len("u", u, f.k())?;
    Ok(f)
}

fn eval_masks<T: Scalar>(f: &ConceptFunction<'_, T>, u: &[T], masks: &[Vec<T>]) -> Result<Vec<T>> {
    let rows: Vec<Vec<T>> = masks
        .iter()
        .map(|m| u.iter().zip(m).map(|(&a, &b)| a * b).collect())
        .collect();
    f.eval_rows(&rows)
}

/// Total-order Sobol indices of `M ↦ g((u ⊙ M) Vᵀ)` with `M ~ U[0,1]^k`,
/// estimated with Jansen's pick-freeze formula over `designs` base samples
/// (`designs · (k + 2)` head evaluations).
///
/// When the output does not vary across the designs the indices are zero and
/// the result is flagged degenerate.
pub fn sobol<T: Scalar>(
    u: &[T],
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    designs: usize,
    rng: &mut SeededRng,
) -> Result<Attribution<T>> {
    let f = prepare(u, dictionary, head)?;
    if designs < 2 {
        return Err(Error::invalid(format!("sobol needs at least 2 designs, got {designs}")));
    }
    let k = f.k();
    let a: Vec<Vec<T>> = (0..designs).map(|_| (0..k).map(|_| rng.uniform()).collect()).collect();
    let b: Vec<Vec<T>> = (0..designs).map(|_| (0..k).map(|_| rng.uniform()).collect()).collect();
    let mut masks = Vec::with_capacity(designs * (k + 2));
    masks.extend(a.iter().cloned());
    masks.extend(b.iter().cloned());
    for i in 0..k {
        for (ra, rb) in a.iter().zip(&b) {
            let mut mixed = ra.clone();
            mixed[i] = rb[i];
            masks.push(mixed);
        }
    }
    let y = eval_masks(&f, u, &masks)?;
    let (ya, yb) = (&y[..designs], &y[designs..2 * designs]);

    let both = ya.iter().chain(yb);
    let n2 = T::of_usize(2 * designs);
    let mean = both.clone().copied().sum::<T>() / n2;
    let variance = both.map(|&v| (v - mean) * (v - mean)).sum::<T>() / n2;
    let scale = ya.iter().chain(yb).fold(T::zero(), |acc, v| acc.max(v.abs()));
    // spread at rounding level counts as constant
    if variance <= (T::epsilon() * scale) * (T::epsilon() * scale) {
        return Ok(Attribution {
            scores: vec![T::zero(); k],
            standard_errors: Some(vec![T::zero(); k]),
            degenerate: true,
        });
    }
    let mut scores = Vec::with_capacity(k);
    let mut errors = Vec::with_capacity(k);
    for i in 0..k {
        let yi = &y[(2 + i) * designs..(3 + i) * designs];
        let terms = ya.iter().zip(yi).map(|(&p, &q)| (p - q) * (p - q) / T::lit(2.0));
        let (m, v, _) = crate::numerics::mean_variance(terms);
        scores.push(m / variance);
        errors.push((v / T::of_usize(designs)).sqrt() / variance);
    }
    Ok(Attribution::estimated(scores, errors))
}

/// Median of the pairwise output distances; falls back to the mean positive
/// distance when more than half the pairs coincide. `None` when every output
/// is identical.
fn rbf_bandwidth(y: &[f64]) -> Option<f64> {
    let mut d = Vec::with_capacity(y.len() * y.len().saturating_sub(1) / 2);
    for a in 0..y.len() {
        for b in (a + 1)..y.len() {
            d.push((y[a] - y[b]).abs());
        }
    }
    let positive: Vec<f64> = d.iter().copied().filter(|&x| x > 0.0).collect();
    if positive.is_empty() {
        return None;
    }
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 1 { d[mid] } else { 0.5 * (d[mid - 1] + d[mid]) };
    if median > 0.0 {
        Some(median)
    } else {
        Some(positive.iter().sum::<f64>() / positive.len() as f64)
    }
}

/// `H L H` with `H = I − 11ᵀ/N`, for a symmetric `L`.
fn double_center(l: &Matrix<f64>) -> Matrix<f64> {
    let n = l.rows();
    let row_means: Vec<f64> = l.row_iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    Matrix::from_fn(n, n, |a, b| l[(a, b)] - row_means[a] - row_means[b] + grand)
}

/// Biased HSIC estimate `Tr(K H L H) / (N − 1)²` between each binary mask
/// coordinate and the output, for `masks` (`N × k`, entries 0/1) and outputs `y`.
///
/// `K` is the Dirac kernel on the coordinate, `L` the Gaussian kernel
/// `exp(−d² / (2σ²))` with `σ` the median pairwise output distance.
pub fn hsic_from_samples(masks: &[Vec<bool>], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let k = masks.first().map_or(0, Vec::len);
    let Some(sigma) = rbf_bandwidth(y) else {
        return vec![0.0; k];
    };
    let l = Matrix::from_fn(n, n, |a, b| {
        let d = y[a] - y[b];
        (-(d * d) / (2.0 * sigma * sigma)).exp()
    });
    let centered = double_center(&l);
    let norm = ((n - 1) * (n - 1)) as f64;
    (0..k)
        .map(|i| {
            let mut trace = 0.0;
            for a in 0..n {
                for b in 0..n {
                    if masks[a][i] == masks[b][i] {
                        trace += centered[(a, b)];
                    }
                }
            }
            trace / norm
        })
        .collect()
}

/// HSIC between each concept's presence `Mᵢ ~ Bernoulli(½)` and the output
/// `g((u ⊙ M) Vᵀ)` over `samples` random masks.
pub fn hsic<T: Scalar>(
    u: &[T],
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<Attribution<T>> {
    let f = prepare(u, dictionary, head)?;
    if samples < 2 {
        return Err(Error::invalid(format!("hsic needs at least 2 mask samples, got {samples}")));
    }
    let k = f.k();
    let masks: Vec<Vec<bool>> = (0..samples).map(|_| (0..k).map(|_| rng.bernoulli(0.5)).collect()).collect();
    let numeric: Vec<Vec<T>> = masks
        .iter()
        .map(|m| m.iter().map(|&b| if b { T::one() } else { T::zero() }).collect())
        .collect();
    let y: Vec<f64> = eval_masks(&f, u, &numeric)?.into_iter().map(T::to_f64_lossless).collect();
    let scores = hsic_from_samples(&masks, &y).into_iter().map(T::lit).collect();
    Ok(Attribution::exact(scores))
}

/// `E[g((u ⊙ m) Vᵀ) | mᵢ = 1]` for `m ~ Bernoulli(½)^k`, estimated over
/// `samples` masks, with the standard error of each conditional mean.
pub fn rise<T: Scalar>(
    u: &[T],
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<Attribution<T>> {
    let f = prepare(u, dictionary, head)?;
    if samples == 0 {
        return Err(Error::invalid("rise needs at least one mask sample"));
    }
    let k = f.k();
    let masks: Vec<Vec<T>> = (0..samples)
        .map(|_| (0..k).map(|_| if rng.bernoulli(0.5) { T::one() } else { T::zero() }).collect())
        .collect();
    let y = eval_masks(&f, u, &masks)?;
    let mut scores = Vec::with_capacity(k);
    let mut errors = Vec::with_capacity(k);
    for i in 0..k {
        let kept = masks.iter().zip(&y).filter(|(m, _)| m[i] == T::one()).map(|(_, &v)| v);
        let (mean, var, count) = crate::numerics::mean_variance(kept);
        if count == 0 {
            return Err(Error::invalid(format!(
                "rise drew no mask keeping concept {i}; increase the mask sample count"
            )));
        }
        scores.push(mean);
        errors.push((var / T::of_usize(count)).sqrt());
    }
    Ok(Attribution::estimated(scores, errors))
}
