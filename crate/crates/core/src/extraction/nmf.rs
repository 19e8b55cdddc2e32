use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::Extraction;
use crate::model::{ActivationMatrix, ConceptDictionary, ExtractionMethod, Loadings};
use crate::numerics::rng::streams;
use crate::numerics::{Matrix, SeededRng};
use crate::scalar::{dot, norm, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct NmfOptions {
    pub max_iter: usize,
    /// Stop once the relative decrease of the objective falls below this.
    pub tol: f64,
}

impl Default for NmfOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-5,
        }
    }
}

pub const NNLS_MAX_SWEEPS: usize = 10_000;

fn squared_residual<T: Scalar>(a: &Matrix<T>, u: &Matrix<T>, v: &Matrix<T>) -> T {
    let mut total = T::zero();
    for i in 0..a.rows() {
        let ui = u.row(i);
        for j in 0..a.cols() {
            let r = a[(i, j)] - dot(ui, v.row(j));
            total += r * r;
        }
    }
    total
}

/// One HALS sweep over the columns of `x`, minimising `‖target − x yᵀ‖²`
/// column by column with `y` fixed. `cross = target · y`, `gram = yᵀ y`.
fn hals_update<T: Scalar>(x: &mut Matrix<T>, cross: &Matrix<T>, gram: &Matrix<T>) {
    let (rows, k) = x.shape();
    for j in 0..k {
        let d = gram[(j, j)];
        if d <= T::zero() {
            continue;
        }
        for i in 0..rows {
            let xi = x.row(i);
            let mut fitted = T::zero();
            for l in 0..k {
                fitted += xi[l] * gram[(l, j)];
            }
            let next = x[(i, j)] + (cross[(i, j)] - fitted) / d;
            x[(i, j)] = next.max(T::zero());
        }
    }
}

/// Nonnegative dictionary by hierarchical alternating least squares.
///
/// Both factors start from seeded uniform draws scaled by `sqrt(mean(A)/k)`.
/// The returned concepts have unit norm; a concept whose column collapsed to
/// zero is replaced by the uniform unit vector with zero loadings and flagged
/// degenerate, which leaves the reconstruction unchanged.
pub fn extract_nmf<T: Scalar>(
    a: &ActivationMatrix<T>,
    k: usize,
    seed: u64,
    options: NmfOptions,
) -> Result<Extraction<T>> {
    let x = a.values();
    let (n, p) = x.shape();
    if k == 0 || k > n.min(p) {
        return Err(Error::invalid(format!(
            "nmf needs 1 <= k <= min(n, p) = {}, got k = {k}",
            n.min(p)
        )));
    }
    if let Some((row, col, value)) = x.first_negative() {
        return Err(Error::NegativeEntry {
            row,
            col,
            value: value.to_f64_lossless(),
        });
    }
    let mean = x.as_slice().iter().copied().sum::<T>() / T::of_usize(n * p);
    let scale = (mean / T::of_usize(k)).sqrt();
    let mut rng = SeededRng::new(seed, streams::NMF_INIT);
    let mut u = Matrix::from_fn(n, k, |_, _| rng.uniform::<T>() * scale);
    let mut v = Matrix::from_fn(p, k, |_, _| rng.uniform::<T>() * scale);

    let tol = T::lit(options.tol);
    let mut trace = vec![squared_residual(x, &u, &v)];
    let mut iterations = 0;
    while iterations < options.max_iter {
        iterations += 1;
        let av = x.matmul(&v)?;
        hals_update(&mut u, &av, &v.gram());
        let atu = x.transpose().matmul(&u)?;
        hals_update(&mut v, &atu, &u.gram());

        let previous = *trace.last().expect("seeded");
        let current = squared_residual(x, &u, &v);
        trace.push(current);
        if current == T::zero() || (previous - current) <= tol * previous {
            break;
        }
    }

    let mut degenerate = vec![false; k];
    for j in 0..k {
        let vn = norm(&v.col(j));
        if vn == T::zero() {
            let fill = vec![T::one() / T::of_usize(p).sqrt(); p];
            v.set_col(j, &fill);
            u.set_col(j, &vec![T::zero(); n]);
            degenerate[j] = true;
            continue;
        }
        let scaled_v: Vec<T> = v.col(j).iter().map(|&x| x / vn).collect();
        let scaled_u: Vec<T> = u.col(j).iter().map(|&x| x * vn).collect();
        degenerate[j] = scaled_u.iter().all(|&x| x == T::zero());
        v.set_col(j, &scaled_v);
        u.set_col(j, &scaled_u);
    }
    Ok(Extraction {
        loadings: Loadings::tagged(u, a),
        dictionary: ConceptDictionary::with_degenerate(v, ExtractionMethod::Nmf, degenerate)?,
        iterations,
        objective_trace: trace,
    })
}

/// `argmin_{u ≥ 0} ‖a − V u‖²` by cyclic coordinate descent, for each row `a`.
pub(crate) fn nnls_rows<T: Scalar>(a: &Matrix<T>, v: &Matrix<T>) -> Result<Matrix<T>> {
    let k = v.cols();
    let gram = v.gram();
    let cross = a.matmul(v)?;
    let mut out = Matrix::zeros(a.rows(), k);
    for i in 0..a.rows() {
        let c = cross.row(i);
        let mut u = vec![T::zero(); k];
        for _ in 0..NNLS_MAX_SWEEPS {
            let mut largest_step = T::zero();
            let mut largest_value = T::zero();
            for j in 0..k {
                let d = gram[(j, j)];
                if d <= T::zero() {
                    continue;
                }
                let grad: T = (0..k).map(|l| gram[(j, l)] * u[l]).sum::<T>() - c[j];
                let next = (u[j] - grad / d).max(T::zero());
                largest_step = largest_step.max((next - u[j]).abs() * d.sqrt());
                u[j] = next;
                largest_value = largest_value.max(u[j].abs() * d.sqrt());
            }
            if largest_step <= T::epsilon() * T::lit(4.0) * (T::one() + largest_value) {
                break;
            }
        }
        out.row_mut(i).copy_from_slice(&u);
    }
    Ok(out)
}
