//! Bracketing root finders.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Shrinks `[a, b]` until `pred(a) != pred(b)` holds on a bracket of width ≤ `xtol`.
///
/// Returns the final bracket `(lo, hi)` with `pred(lo) == pred(a)`.
pub fn bisect_pred<T: Real, P: FnMut(T) -> bool>(
    mut pred: P,
    a: T,
    b: T,
    xtol: T,
) -> Result<(T, T)> {
    let pa = pred(a);
    if pa == pred(b) {
        return Err(Error::NotBracketed(format!(
            "predicate equal at both ends of [{}, {}]",
            a.as_f64(),
            b.as_f64()
        )));
    }
    let (mut lo, mut hi) = (a, b);
    for _ in 0..2000 {
        if (hi - lo).abs() <= xtol {
            break;
        }
        let m = lo + (hi - lo) * T::lit(0.5);
        if m == lo || m == hi {
            break;
        }
        if pred(m) == pa {
            lo = m;
        } else {
            hi = m;
        }
    }
    Ok((lo, hi))
}

/// Root of a continuous `f` with a sign change on `[a, b]`, to absolute width `xtol`.
pub fn bisect<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, xtol: T) -> Result<T> {
    let fa = f(a);
    if fa == T::zero() {
        return Ok(a);
    }
    let fb = f(b);
    if fb == T::zero() {
        return Ok(b);
    }
    if (fa > T::zero()) == (fb > T::zero()) {
        return Err(Error::NotBracketed(format!(
            "f has the same sign at {} and {}",
            a.as_f64(),
            b.as_f64()
        )));
    }
    let neg_at_a = fa < T::zero();
    let (lo, hi) = bisect_pred(|x| (f(x) < T::zero()) == neg_at_a, a, b, xtol)?;
    Ok(lo + (hi - lo) * T::lit(0.5))
}

/// Log-spaced points on `[a, b]`, `a, b > 0`, endpoints included.
pub fn logspace<T: Real>(a: T, b: T, n: usize) -> Vec<T> {
    assert!(n >= 2 && a > T::zero() && b > a);
    let (la, lb) = (a.ln(), b.ln());
    let step = (lb - la) / T::from_count(n - 1);
    (0..n)
        .map(|i| match i {
            0 => a,
            _ if i == n - 1 => b,
            _ => (la + step * T::from_count(i)).exp(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_two() {
        let r: f64 = bisect(|x: f64| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn no_bracket() {
        assert!(bisect(|x: f64| x * x + 1.0, -1.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn predicate_bracket_is_tight() {
        let (lo, hi) = bisect_pred(|x: f64| x < 0.3, 0.0, 1.0, 1e-12).unwrap();
        assert!(lo < 0.3 && hi >= 0.3 && hi - lo <= 1e-12);
    }

    #[test]
    fn logspace_endpoints() {
        let g = logspace(1e-4f64, 1e4, 9);
        assert_eq!(g[0], 1e-4);
        assert_eq!(g[8], 1e4);
        assert!((g[4] - 1.0).abs() < 1e-14);
    }
}
