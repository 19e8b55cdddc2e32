//! Truncated singular value decomposition by one-sided (Hestenes) Jacobi
//! rotations.
//!
//! Jacobi is slower than bidiagonalisation for large matrices, but it is fully
//! deterministic, needs no random sketching, and computes small singular values
//! to high relative accuracy, which the reconstruction checks rely on.

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::{dot, norm, Scalar};

/// Top-`k` singular triplets: `M ≈ left · diag(singular) · rightᵀ`.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    /// `rows × k`, orthonormal columns.
    pub left: Matrix<T>,
    /// Non-increasing, non-negative.
    pub singular: Vec<T>,
    /// `cols × k`, orthonormal columns.
    pub right: Matrix<T>,
}

impl<T: Scalar> Svd<T> {
    /// `left · diag(singular) · rightᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let k = self.singular.len();
        let scaled = Matrix::from_fn(self.left.rows(), k, |i, j| self.left[(i, j)] * self.singular[j]);
        scaled.matmul_t(&self.right).expect("svd factors are conformable")
    }
}

/// Computes the top-`k` singular triplets of `m`.
pub fn svd<T: Scalar>(m: &Matrix<T>, k: usize) -> Result<Svd<T>> {
    let (rows, cols) = m.shape();
    let min_dim = rows.min(cols);
    if k > min_dim {
        return Err(Error::invalid(format!(
            "svd rank {k} exceeds min(rows, cols) = {min_dim}"
        )));
    }
    if rows < cols {
        let t = svd(&m.transpose(), k)?;
        return Ok(Svd {
            left: t.right,
            singular: t.singular,
            right: t.left,
        });
    }
    if cols == 0 {
        return Ok(Svd {
            left: Matrix::zeros(rows, 0),
            singular: Vec::new(),
            right: Matrix::zeros(0, 0),
        });
    }

    // column-major working copies
    let mut a: Vec<Vec<T>> = (0..cols).map(|j| m.col(j)).collect();
    let mut v: Vec<Vec<T>> = (0..cols)
        .map(|j| {
            let mut e = vec![T::zero(); cols];
            e[j] = T::one();
            e
        })
        .collect();

    let tol = T::epsilon() * T::of_usize(rows).sqrt();
    let max_sweeps = 10 * min_dim.max(1);
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                if alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                let gamma = dot(&a[p], &a[q]);
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let two = T::lit(2.0);
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            algorithm: "jacobi svd",
            iterations: max_sweeps,
        });
    }

    let sigma: Vec<T> = a.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    // stable: equal singular values keep column order
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).expect("finite"));

    let sigma_max = sigma[order[0]];
    let cutoff = sigma_max * T::epsilon() * T::of_usize(rows.max(cols));

    let mut left_cols: Vec<Option<Vec<T>>> = Vec::with_capacity(k);
    let mut singular = Vec::with_capacity(k);
    let mut right = Matrix::zeros(cols, k);
    for (slot, &j) in order.iter().take(k).enumerate() {
        singular.push(sigma[j]);
        right.set_col(slot, &v[j]);
        if sigma[j] > cutoff && sigma[j] > T::zero() {
            left_cols.push(Some(a[j].iter().map(|&x| x / sigma[j]).collect()));
        } else {
            left_cols.push(None);
        }
    }
    let left_cols = complete_orthonormal(rows, left_cols);
    let mut left = Matrix::zeros(rows, k);
    for (j, c) in left_cols.iter().enumerate() {
        left.set_col(j, c);
    }
    Ok(Svd {
        left,
        singular,
        right,
    })
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills `None` slots with unit vectors orthogonal to every other column,
/// drawn from the canonical basis by Gram–Schmidt.
fn complete_orthonormal<T: Scalar>(dim: usize, cols: Vec<Option<Vec<T>>>) -> Vec<Vec<T>> {
    let mut basis: Vec<Vec<T>> = cols.iter().flatten().cloned().collect();
    let mut out = Vec::with_capacity(cols.len());
    let mut candidate = 0;
    for c in cols {
        match c {
            Some(c) => out.push(c),
            None => loop {
                assert!(candidate < dim, "orthonormal completion exhausted");
                let mut e = vec![T::zero(); dim];
                e[candidate] = T::one();
                candidate += 1;
                // two passes of modified Gram–Schmidt
                for _ in 0..2 {
                    for b in &basis {
                        let proj = dot(&e, b);
                        for (x, &y) in e.iter_mut().zip(b) {
                            *x -= proj * y;
                        }
                    }
                }
                let n = norm(&e);
                if n > T::lit(0.1) {
                    e.iter_mut().for_each(|x| *x /= n);
                    basis.push(e.clone());
                    out.push(e);
                    break;
                }
            },
        }
    }
    out
}
