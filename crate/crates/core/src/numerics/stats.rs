use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sample Pearson correlation.
///
/// Fails with [`Error::CorrelationUndefined`] when either side is constant.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("pearson: lengths {} and {} differ", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::invalid("pearson needs at least two observations"));
    }
    let n = T::of_usize(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == T::zero() {
        return Err(Error::CorrelationUndefined("x"));
    }
    if syy == T::zero() {
        return Err(Error::CorrelationUndefined("y"));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// Trapezoidal area of `values` sampled on the uniform grid `0, 1/k, …, 1`.
pub fn auc_trapezoid<T: Scalar>(values: &[T]) -> Result<T> {
    if values.len() < 2 {
        return Err(Error::invalid("area under curve needs at least two points"));
    }
    let k = T::of_usize(values.len() - 1);
    let half = T::lit(0.5);
    let area: T = values.windows(2).map(|w| (w[0] + w[1]) * half).sum();
    Ok(area / k)
}

/// Mean and unbiased variance via Welford's update.
pub(crate) fn mean_variance<T: Scalar>(values: impl IntoIterator<Item = T>) -> (T, T, usize) {
    let (mut mean, mut m2, mut n) = (T::zero(), T::zero(), 0usize);
    for x in values {
        n += 1;
        let d = x - mean;
        mean += d / T::of_usize(n);
        m2 += d * (x - mean);
    }
    let var = if n > 1 { m2 / T::of_usize(n - 1) } else { T::zero() };
    (mean, var, n)
}

/// Index of the largest entry, lowest index on ties. `values` must be
/// non-empty.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        assert!((pearson::<f64>(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson::<f64>(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // sxy = 4, sxx = syy = 5
        assert!((pearson::<f64>(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn pearson_zero_variance_is_an_error() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::CorrelationUndefined("x"))
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0], &[5.0, 5.0]),
            Err(Error::CorrelationUndefined("y"))
        ));
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_trapezoid(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc_trapezoid(&[1.0, 0.0]).unwrap(), 0.5);
        // (11+3)/2/3 + (3+0)/2/3 + 0 = 17/6
        assert!((auc_trapezoid::<f64>(&[11.0, 3.0, 0.0, 0.0]).unwrap() - 17.0 / 6.0).abs() < 1e-15);
        assert!(auc_trapezoid(&[1.0]).is_err());
    }

    #[test]
    fn welford() {
        let (m, v, n) = mean_variance([1.0f64, 2.0, 3.0, 4.0]);
        assert_eq!((m, n), (2.5, 4));
        assert!((v - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.1, 0.9]), 1);
        assert_eq!(argmax(&[2.0, 2.0, 2.0]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
