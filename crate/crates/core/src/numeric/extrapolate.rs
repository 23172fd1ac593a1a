//! Richardson extrapolation of limits at infinity.
//!
//! Samples are taken at nodes whose extrapolation variable `t` halves from one
//! node to the next, so the classical ratio-2 tableau applies. Two node
//! families are provided: `r_j = r_0·2^j` (`t = 1/r`, for algebraic decay) and
//! `ln r_j = L_0·2^j` (`t = 1/ln r`, for logarithmic decay).

use crate::error::Result;
use crate::scalar::Real;

/// Node family for [`richardson_limit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nodes {
    /// `r_j = r0·2^j`.
    Geometric { r0: f64 },
    /// `r_j = exp(l0·2^j)`.
    LogGeometric { l0: f64 },
}

impl Nodes {
    pub fn radius<T: Real>(&self, j: usize) -> T {
        let two = T::lit(2.0);
        match *self {
            Nodes::Geometric { r0 } => T::lit(r0) * two.powi(j as i32),
            Nodes::LogGeometric { l0 } => (T::lit(l0) * two.powi(j as i32)).exp(),
        }
    }
}

/// Outcome of a limit estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitEstimate<T> {
    pub value: T,
    pub converged: bool,
    /// Largest change among the last three accepted estimates.
    pub spread: T,
    /// Number of nodes evaluated.
    pub nodes: usize,
}

/// Maximum tableau column used; higher columns amplify rounding more than they gain.
const MAX_COLUMN: usize = 5;

/// Extrapolates `lim g(r)` along `nodes`, stopping when three successive
/// estimates agree to `tol·max(1, |value|)`.
pub fn richardson_limit<T: Real, G: FnMut(T) -> Result<T>>(
    mut g: G,
    nodes: Nodes,
    max_nodes: usize,
    tol: f64,
) -> LimitEstimate<T> {
    let tol = T::lit(tol);
    let mut prev_row: Vec<T> = Vec::new();
    let mut estimates: Vec<T> = Vec::new();
    let mut n = 0;
    for j in 0..max_nodes {
        let r: T = nodes.radius(j);
        if !r.is_finite() {
            break;
        }
        let v = match g(r) {
            Ok(v) if v.is_finite() => v,
            _ => break,
        };
        n += 1;
        let mut row = vec![v];
        let mut pow = T::one();
        for k in 1..=j.min(MAX_COLUMN) {
            pow = pow * T::lit(2.0);
            let above = prev_row[k - 1];
            let cur = row[k - 1];
            row.push(cur + (cur - above) / (pow - T::one()));
        }
        estimates.push(*row.last().expect("row nonempty"));
        prev_row = row;
        if estimates.len() >= 3 {
            let m = estimates.len();
            let (a, b, c) = (estimates[m - 3], estimates[m - 2], estimates[m - 1]);
            let spread = (a - b).abs().max((b - c).abs());
            if spread <= tol * T::one().max(c.abs()) {
                return LimitEstimate { value: c, converged: true, spread, nodes: n };
            }
        }
    }
    let m = estimates.len();
    let (value, spread) = match m {
        0 => (T::nan(), T::infinity()),
        1 | 2 => (estimates[m - 1], T::infinity()),
        _ => {
            let (a, b, c) = (estimates[m - 3], estimates[m - 2], estimates[m - 1]);
            (c, (a - b).abs().max((b - c).abs()))
        }
    };
    LimitEstimate { value, converged: false, spread, nodes: n }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algebraic_decay() {
        let est = richardson_limit(
            |r: f64| Ok(0.25 + 1.0 / r - 3.0 / (r * r)),
            Nodes::Geometric { r0: 1.0 },
            60,
            1e-7,
        );
        assert!(est.converged);
        assert!((est.value - 0.25).abs() < 1e-10, "{est:?}");
    }

    #[test]
    fn logarithmic_decay() {
        let est = richardson_limit(
            |r: f64| {
                let t = 1.0 / r.ln();
                Ok(2.0 / 3.0 + 0.4 * t - 0.4 * t * t)
            },
            Nodes::LogGeometric { l0: 2.5 },
            9,
            1e-7,
        );
        assert!(est.converged);
        assert!((est.value - 2.0 / 3.0).abs() < 1e-12, "{est:?}");
    }

    #[test]
    fn nonconvergent_reports_so() {
        let est = richardson_limit(|r: f64| Ok(r.ln().sin()), Nodes::Geometric { r0: 1.0 }, 30, 1e-7);
        assert!(!est.converged);
    }
}
