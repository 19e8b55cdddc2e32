use crate::attribution::gradient::ConceptFunction;
use crate::attribution::Attribution;
use crate::error::{Error, Result};
use crate::head::Head;
use crate::model::ConceptDictionary;
use crate::numerics::SeededRng;
use crate::scalar::Scalar;

pub(crate) fn check_len<T>(what: &str, v: &[T], k: usize) -> Result<()> {
    if v.len() != k {
        return Err(Error::shape(format!("{what} has {} entries, dictionary {k} concepts", v.len())));
    }
    Ok(())
}

fn prepare<'a, T: Scalar>(u: &[T], dictionary: &'a ConceptDictionary<T>, head: &'a Head<T>) -> Result<ConceptFunction<'a, T>> {
    let f = ConceptFunction::new(dictionary, head)?;
    check_len("u", u, f.k())?;
    Ok(f)
}

/// Coordinate-wise mean and standard error of the mean.
fn mean_and_error<T: Scalar>(samples: &[Vec<T>]) -> (Vec<T>, Vec<T>, Vec<T>) {
    let k = samples.first().map_or(0, Vec::len);
    let m = T::of_usize(samples.len());
    let mut mean = vec![T::zero(); k];
    let mut var = vec![T::zero(); k];
    for i in 0..k {
        let (mu, v, _) = crate::numerics::mean_variance(samples.iter().map(|s| s[i]));
        mean[i] = mu;
        var[i] = v;
    }
    let se = var.iter().map(|&v| (v / m).sqrt()).collect();
    (mean, var, se)
}

/// `∇_u g(u Vᵀ)`.
pub fn saliency<T: Scalar>(u: &[T], dictionary: &ConceptDictionary<T>, head: &Head<T>) -> Result<Attribution<T>> {
    let f = prepare(u, dictionary, head)?;
    Ok(Attribution::exact(f.gradients(&[u.to_vec()])?.remove(0)))
}

/// `u ⊙ ∇_u g(u Vᵀ)`.
pub fn gradient_input<T: Scalar>(u: &[T], dictionary: &ConceptDictionary<T>, head: &Head<T>) -> Result<Attribution<T>> {
    let f = prepare(u, dictionary, head)?;
    let g = f.gradients(&[u.to_vec()])?.remove(0);
    Ok(Attribution::exact(u.iter().zip(&g).map(|(&a, &b)| a * b).collect()))
}

/// Path points `αⱼ` and trapezoid weights on `[0, 1]`; a single step uses the
/// midpoint.
fn trapezoid_nodes<T: Scalar>(steps: usize) -> Vec<(T, T)> {
    if steps == 1 {
        return vec![(T::lit(0.5), T::one())];
    }
    let h = T::one() / T::of_usize(steps - 1);
    (0..steps)
        .map(|j| {
            let w = if j == 0 || j == steps - 1 { h / T::lit(2.0) } else { h };
            (T::of_usize(j) * h, w)
        })
        .collect()
}

/// `(u − u₀) ⊙ ∫₀¹ α ∇g(u₀ + α (u − u₀)) dα`, trapezoid rule over `steps`
/// points. On an affine head this is `½ (u − u₀) ⊙ Vᵀw` for every `steps`.
pub fn integrated_gradients<T: Scalar>(
    u: &[T],
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    steps: usize,
    baseline: &[T],
) -> Result<Attribution<T>> {
    let f = prepare(u, dictionary, head)?;
    check_len("baseline", baseline, f.k())?;
    if steps == 0 {
        return Err(Error::invalid("integrated gradients needs at least one step"));
    }
    let delta: Vec<T> = u.iter().zip(baseline).map(|(&a, &b)| a - b).collect();
    let nodes = trapezoid_nodes::<T>(steps);
    let points: Vec<Vec<T>> = nodes
        .iter()
        .map(|&(alpha, _)| baseline.iter().zip(&delta).map(|(&b, &d)| b + alpha * d).collect())
        .collect();
    let grads = f.gradients(&points)?;
    let mut acc = vec![T::zero(); f.k()];
    for ((alpha, w), g) in nodes.iter().zip(&grads) {
        for (a, &gi) in acc.iter_mut().zip(g) {
            *a += *w * *alpha * gi;
        }
    }
    Ok(Attribution::exact(delta.iter().zip(&acc).map(|(&d, &a)| d * a).collect()))
}

fn noisy_gradients<T: Scalar>(
    f: &ConceptFunction<'_, T>,
    u: &[T],
    samples: usize,
    noise: T,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<T>>> {
    if samples == 0 {
        return Err(Error::invalid("noisy gradient estimators need at least one sample"));
    }
    let points: Vec<Vec<T>> = (0..samples)
        .map(|_| u.iter().map(|&x| x + noise * rng.normal::<T>()).collect())
        .collect();
    f.gradients(&points)
}

/// Mean gradient over `samples` Gaussian perturbations of `u` with standard
/// deviation `noise`.
pub fn smoothgrad<T: Scalar>(
    u: &[T],
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    samples: usize,
    noise: T,
    rng: &mut SeededRng,
) -> Result<Attribution<T>> {
    let f = prepare(u, dictionary, head)?;
    let grads = noisy_gradients(&f, u, samples, noise, rng)?;
    let (mean, _, se) = mean_and_error(&grads);
    Ok(Attribution::estimated(mean, se))
}

/// Coordinate-wise unbiased sample variance of the perturbed gradients.
pub fn vargrad<T: Scalar>(
    u: &[T],
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    samples: usize,
    noise: T,
    rng: &mut SeededRng,
) -> Result<Attribution<T>> {
    let f = prepare(u, dictionary, head)?;
    let grads = noisy_gradients(&f, u, samples, noise, rng)?;
    let (_, var, _) = mean_and_error(&grads);
    Ok(Attribution::exact(var))
}

/// `g(u) − g(u with uᵢ replaced by the baseline)` for each concept.
pub fn occlusion<T: Scalar>(
    u: &[T],
    dictionary: &ConceptDictionary<T>,
    head: &Head<T>,
    baseline: &[T],
) -> Result<Attribution<T>> {
    let f = prepare(u, dictionary, head)?;
    check_len("baseline", baseline, f.k())?;
    let mut rows = vec![u.to_vec()];
    for i in 0..f.k() {
        let mut r = u.to_vec();
        r[i] = baseline[i];
        rows.push(r);
    }
    let y = f.eval_rows(&rows)?;
    Ok(Attribution::exact(y[1..].iter().map(|&yi| y[0] - yi).collect()))
}
