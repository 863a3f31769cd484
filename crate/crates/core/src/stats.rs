//! Empirical quantiles.
//!
//! One convention everywhere: linear interpolation between order statistics
//! at position `h = (n - 1) * p`. Observed window quantiles, the rolling
//! baseline and the test oracles all go through [`quantile_sorted`].

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Quantile of an ascending slice. `p` must lie in `[0, 1]`.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], p: T) -> Result<T> {
    if sorted.is_empty() {
        return Err(Error::validation("quantile of an empty sample"));
    }
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::validation(format!(
            "quantile level {p} outside [0, 1]"
        )));
    }
    let h = T::from_usize(sorted.len() - 1).unwrap() * p;
    let lo = h.floor();
    let i = lo.to_usize().unwrap();
    if i + 1 >= sorted.len() {
        return Ok(sorted[sorted.len() - 1]);
    }
    let frac = h - lo;
    Ok(sorted[i] + frac * (sorted[i + 1] - sorted[i]))
}

/// Sorts a copy of `values` and returns the (0.25, 0.5, 0.75) quantiles.
pub fn quartiles<T: Scalar>(values: &[T]) -> Result<(T, T, T)> {
    if values.is_empty() {
        return Err(Error::validation("quartiles of an empty sample"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::validation("NaN in sample"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((
        quantile_sorted(&sorted, T::lit(0.25))?,
        quantile_sorted(&sorted, T::lit(0.5))?,
        quantile_sorted(&sorted, T::lit(0.75))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_evaluated_examples() {
        assert_eq!(quartiles(&[55.0]).unwrap(), (55.0, 55.0, 55.0));
        // h = 3p: 0.75 -> 40 + 0.75*10, 1.5 -> 50 + 0.5*10, 2.25 -> 60 + 0.25*10
        assert_eq!(
            quartiles(&[40.0, 50.0, 60.0, 70.0]).unwrap(),
            (47.5, 55.0, 62.5)
        );
        assert_eq!(quartiles(&[50.0, 50.0, 50.0]).unwrap(), (50.0, 50.0, 50.0));
        assert_eq!(quantile_sorted(&[1.0, 2.0], 1.0).unwrap(), 2.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0], 0.0).unwrap(), 1.0);
    }

    #[test]
    fn empty_and_bad_level() {
        assert!(quartiles::<f64>(&[]).is_err());
        assert!(quantile_sorted(&[1.0], 1.5).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant_and_monotone(
            mut v in proptest::collection::vec(0.0f64..100.0, 1..40),
            seed in any::<u64>(),
        ) {
            let q = quartiles(&v).unwrap();
            // deterministic shuffle
            let n = v.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(quartiles(&v).unwrap(), q);
            prop_assert!(q.0 <= q.1 && q.1 <= q.2);
        }
    }
}
