//! Odd nonlinearities `f`, their primitive `F`, and the zeros `b`, `β`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::quad::quad;
use crate::numeric::roots::{bisect, bisect_pred, logspace};
use crate::scalar::Real;

/// Scalar function shared across threads.
pub type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// User-supplied `f`, `f'` and `F`.
#[derive(Clone)]
pub struct CustomFunctions<T> {
    pub name: String,
    pub f: ScalarFn<T>,
    pub df: ScalarFn<T>,
    pub big_f: ScalarFn<T>,
}

impl<T> fmt::Debug for CustomFunctions<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFunctions").field("name", &self.name).finish_non_exhaustive()
    }
}

/// Nonlinearity families.
#[derive(Debug, Clone)]
pub enum Family<T> {
    /// `f(u) = |u|^{p−1}u − u`, `p > 1`.
    PowerMinusLinear { p: T },
    Custom(CustomFunctions<T>),
}

impl<T: Real> Family<T> {
    pub fn custom(
        name: &str,
        f: impl Fn(T) -> T + Send + Sync + 'static,
        df: impl Fn(T) -> T + Send + Sync + 'static,
        big_f: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        Family::Custom(CustomFunctions {
            name: name.to_string(),
            f: Arc::new(f),
            df: Arc::new(df),
            big_f: Arc::new(big_f),
        })
    }

    pub fn f(&self, s: T) -> T {
        match self {
            Family::PowerMinusLinear { p } => s.abs().powf(*p - T::one()) * s - s,
            Family::Custom(c) => (c.f)(s),
        }
    }

    pub fn df(&self, s: T) -> T {
        match self {
            Family::PowerMinusLinear { p } => *p * s.abs().powf(*p - T::one()) - T::one(),
            Family::Custom(c) => (c.df)(s),
        }
    }

    pub fn big_f(&self, s: T) -> T {
        match self {
            Family::PowerMinusLinear { p } => {
                s.abs().powf(*p + T::one()) / (*p + T::one()) - s * s / T::lit(2.0)
            }
            Family::Custom(c) => (c.big_f)(s),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Family::PowerMinusLinear { p } => format!("power_minus_linear(p={})", p),
            Family::Custom(c) => format!("custom({})", c.name),
        }
    }
}

/// Scan used to bracket `b` and `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRange {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for ScanRange {
    fn default() -> Self {
        ScanRange { lo: 1e-6, hi: 1e3, points: 4000 }
    }
}

/// Locates `b` (largest zero of `f` below the positive region) and `β` (zero of `F` above `b`).
pub fn find_b_beta<T: Real>(family: &Family<T>, c: T, scan: ScanRange) -> Result<(T, T)> {
    let hi = T::lit(scan.hi).min(c * (T::one() - T::lit(1e-12)));
    let lo = T::lit(scan.lo).min(hi * T::lit(1e-3));
    let grid = logspace(lo, hi, scan.points.max(16));
    let vals: Vec<T> = grid.iter().map(|&s| family.f(s)).collect();
    if !(*vals.last().expect("nonempty") > T::zero()) {
        return Err(Error::NotBracketed("f is not positive at the end of the scan range".into()));
    }
    let last_nonpos = match vals.iter().rposition(|&v| !(v > T::zero())) {
        Some(i) => i,
        None => {
            return Err(Error::NotBracketed(
                "f is positive on the whole scan range; no initial nonpositive interval".into(),
            ))
        }
    };
    let xtol = |x: T| T::lit(1e-12) * T::one().max(x.abs());
    let (blo, bhi) = (grid[last_nonpos], grid[last_nonpos + 1]);
    let (b_lo, b_hi) = bisect_pred(|s| family.f(s) > T::zero(), blo, bhi, xtol(bhi))?;
    let b = (b_lo + b_hi) * T::lit(0.5);
    let start = last_nonpos + 1;
    let fb = family.big_f(b);
    if !(fb < T::zero()) {
        return Err(Error::NotBracketed("F(b) is not negative".into()));
    }
    let mut prev = b;
    for &s in &grid[start..] {
        if family.big_f(s) > T::zero() {
            let beta = bisect(|x| family.big_f(x), prev, s, xtol(s))?;
            return Ok((b, beta));
        }
        prev = s;
    }
    Err(Error::NotBracketed("beta not bracketed: F stays negative on the scan range".into()))
}

/// A nonlinearity with its characteristic zeros resolved.
#[derive(Debug, Clone)]
pub struct Nonlinearity<T> {
    pub family: Family<T>,
    pub b: T,
    pub beta: T,
    /// Domain bound; `f` is defined on `(−c, c)`.
    pub c: T,
}

impl<T: Real> Nonlinearity<T> {
    pub fn new(family: Family<T>, c: Option<T>, scan: ScanRange) -> Result<Self> {
        if let Family::PowerMinusLinear { p } = &family {
            if !(*p > T::one()) {
                return Err(Error::InvalidParameter("power_minus_linear requires p > 1".into()));
            }
        }
        let c = c.unwrap_or_else(T::infinity);
        if !(c > T::zero()) {
            return Err(Error::InvalidParameter("domain bound c must be positive".into()));
        }
        let (b, beta) = find_b_beta(&family, c, scan)?;
        let nl = Nonlinearity { family, b, beta, c };
        if let Family::Custom(_) = nl.family {
            nl.check_primitive()?;
        }
        Ok(nl)
    }

    /// `u^p − u` with default scan.
    pub fn power_minus_linear(p: T) -> Result<Self> {
        Self::new(Family::PowerMinusLinear { p }, None, ScanRange::default())
    }

    /// Spot-checks `F(s) = ∫₀^s f` by quadrature.
    fn check_primitive(&self) -> Result<()> {
        for k in 1..=8 {
            let s = self.beta * T::lit(0.3 * k as f64);
            if s >= self.c {
                break;
            }
            let num = quad(|t| self.f(t), T::zero(), s)?;
            let ana = self.big_f(s);
            if (num - ana).abs() > T::lit(1e-8) * T::one().max(ana.abs()) {
                return Err(Error::InvalidParameter(format!(
                    "F({}) = {} disagrees with the quadrature of f ({})",
                    s.as_f64(),
                    ana.as_f64(),
                    num.as_f64()
                )));
            }
        }
        Ok(())
    }

    pub fn f(&self, s: T) -> T {
        self.family.f(s)
    }
    pub fn df(&self, s: T) -> T {
        self.family.df(s)
    }
    pub fn big_f(&self, s: T) -> T {
        self.family.big_f(s)
    }

    /// `F/f`; the caller must stay away from zeros of `f`.
    pub fn f_ratio(&self, s: T) -> T {
        self.big_f(s) / self.f(s)
    }

    /// `(F/f)' = 1 − F f' / f²`.
    pub fn f_ratio_prime(&self, s: T) -> T {
        let f = self.f(s);
        T::one() - self.big_f(s) * self.df(s) / (f * f)
    }

    /// Limits as `s → ∞` of `(F/f)'` and `s f'/f`, when known in closed form.
    pub fn tail_limits(&self) -> Option<(T, T)> {
        match &self.family {
            Family::PowerMinusLinear { p } => Some((T::one() / (*p + T::one()), *p)),
            Family::Custom(_) => None,
        }
    }

    /// Whether `s` lies in the open domain `(−c, c)`.
    pub fn in_domain(&self, s: T) -> bool {
        s.abs() < self.c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cubic_zeros() {
        let nl = Nonlinearity::power_minus_linear(3.0f64).unwrap();
        assert!((nl.b - 1.0).abs() < 1e-12);
        assert!((nl.beta - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn quintic_zeros() {
        let nl = Nonlinearity::power_minus_linear(5.0f64).unwrap();
        assert!((nl.b - 1.0).abs() < 1e-12);
        assert!((nl.beta - 1.316_074_013_0).abs() < 1e-10);
        assert!((nl.beta - 3f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn short_scan_cannot_bracket_beta() {
        let fam = Family::PowerMinusLinear { p: 3.0f64 };
        let err = find_b_beta(&fam, f64::INFINITY, ScanRange { lo: 1e-6, hi: 1.01, points: 500 });
        match err {
            Err(Error::NotBracketed(m)) => assert!(m.contains("beta not bracketed")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn positive_everywhere_is_rejected() {
        let fam = Family::custom("linear", |s: f64| s, |_| 1.0, |s| s * s / 2.0);
        assert!(find_b_beta(&fam, f64::INFINITY, ScanRange::default()).is_err());
    }

    #[test]
    fn custom_primitive_mismatch_is_rejected() {
        let fam = Family::custom("bad", |s: f64| s * s * s - s, |s| 3.0 * s * s - 1.0, |s| s.powi(4) / 4.0);
        assert!(Nonlinearity::new(fam, None, ScanRange::default()).is_err());
    }

    #[test]
    fn cubic_ratio_derivative_closed_form() {
        let nl = Nonlinearity::power_minus_linear(3.0f64).unwrap();
        for &s in &[1.5, 2.0, 5.0, 40.0] {
            let x: f64 = s * s;
            let want = (x * x - x + 2.0) / (4.0 * (x - 1.0) * (x - 1.0));
            assert_relative_eq!(nl.f_ratio_prime(s), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn sublinear_custom_family() {
        // f = s^{1/2} − s^{1/3} for s ≥ 0, odd extension
        let fam = Family::custom(
            "sqrt_minus_cbrt",
            |s: f64| s.signum() * (s.abs().sqrt() - s.abs().cbrt()),
            |s: f64| 0.5 / s.abs().sqrt() - 1.0 / (3.0 * s.abs().powf(2.0 / 3.0)),
            |s: f64| 2.0 / 3.0 * s.abs().powf(1.5) - 0.75 * s.abs().powf(4.0 / 3.0),
        );
        let nl = Nonlinearity::new(fam, None, ScanRange::default()).unwrap();
        assert!((nl.b - 1.0).abs() < 1e-12);
        assert!((nl.beta - (9.0f64 / 8.0).powi(6)).abs() < 1e-10);
    }
}
