//! Limit constants of a weight: `H∞`, `ℓ∞`, `Ḡ` and the `(C, a)` pair of (q₇).

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::checks::{mono_margin, weak_status, Direction, Status};
use crate::model::weight::Weight;
use crate::numeric::extrapolate::{richardson_limit, LimitEstimate};
use crate::numeric::roots::logspace;
use crate::scalar::Real;

/// Log-spaced sampling plan for weight hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
    /// Relative slack for first-difference tests.
    pub slack: f64,
}

impl Default for RadialGrid {
    fn default() -> Self {
        RadialGrid { r_min: 1e-4, r_max: 1e4, points: 4000, slack: 1e-10 }
    }
}

impl RadialGrid {
    /// Grid radii, clipped to the weight's domain.
    pub fn radii<T: Real>(&self, w: &Weight<T>) -> Vec<T> {
        let (lo, hi) = w.domain();
        let a = T::lit(self.r_min).max(lo);
        let b = T::lit(self.r_max).min(hi);
        logspace(a, b, self.points.max(3))
    }
}

/// Convergence tolerance for extrapolated limits.
pub const LIMIT_TOL: f64 = 1e-7;

/// Where `Ḡ` came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupSource {
    /// Attained inside the grid, refined by golden-section search.
    Interior { r: f64 },
    /// Attained at the smallest grid radius.
    LeftEnd { r: f64 },
    /// Approached as `r → ∞`; value from the extrapolated limit.
    Limit,
}

/// Limit constants; `None` means the estimate did not converge.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightConstants<T> {
    pub h_inf: Option<T>,
    pub ell_inf: Option<T>,
    pub g_bar: Option<T>,
    pub c_q7: Option<T>,
    pub a_q7: Option<T>,
    /// `|H∞ − ℓ∞/(1+2ℓ∞)|` when both limits converged.
    pub identity_residual: Option<T>,
    pub h_inf_estimate: LimitEstimate<T>,
    pub ell_inf_estimate: LimitEstimate<T>,
    pub g_bar_source: Option<SupSource>,
}

/// Smallest `C ∈ [Ḡ, 1]` (and its `a`) for which `h^{1−a}(C − G)` is nondecreasing on the grid.
pub fn search_q7<T: Real>(g: &[T], h: &[T], g_bar: T, slack: f64) -> Option<(T, T)> {
    if g_bar > T::one() {
        return None;
    }
    for j in 0..=10 {
        let c = g_bar + (T::one() - g_bar) * T::lit(j as f64 / 10.0);
        for ai in 1..=9 {
            let a = T::lit(ai as f64 / 10.0);
            let vals: Vec<T> =
                g.iter().zip(h).map(|(&gi, &hi)| hi.powf(T::one() - a) * (c - gi)).collect();
            let (m, _) = mono_margin(&vals, Direction::Increasing);
            if weak_status(m, slack) == Status::Satisfied {
                return Some((c, a));
            }
        }
    }
    None
}

/// Estimates the limit constants of `w` on the sampling plan `grid`.
pub fn weight_constants<T: Real>(w: &Weight<T>, grid: &RadialGrid) -> Result<WeightConstants<T>> {
    let (nodes, max_nodes) = w.limit_nodes();
    let h_est = richardson_limit(|r| w.big_h(r), nodes, max_nodes, LIMIT_TOL);
    let l_est = richardson_limit(|r| w.h_prime(r), nodes, max_nodes, LIMIT_TOL);
    let h_inf = h_est.converged.then_some(h_est.value);
    let ell_inf = l_est.converged.then_some(l_est.value);
    let identity_residual = match (h_inf, ell_inf) {
        (Some(hh), Some(l)) => Some((hh - l / (T::one() + T::lit(2.0) * l)).abs()),
        _ => None,
    };

    let radii = grid.radii(w);
    let mut g = Vec::with_capacity(radii.len());
    let mut h = Vec::with_capacity(radii.len());
    for &r in &radii {
        let v = w.eval(r)?;
        g.push(v.g);
        h.push(v.h);
    }
    let (g_bar, g_bar_source) = sup_g(w, &radii, &g, nodes, max_nodes, grid.slack)?;
    let (c_q7, a_q7) = match g_bar.and_then(|gb| search_q7(&g, &h, gb, grid.slack)) {
        Some((c, a)) => (Some(c), Some(a)),
        None => (None, None),
    };
    Ok(WeightConstants {
        h_inf,
        ell_inf,
        g_bar,
        c_q7,
        a_q7,
        identity_residual,
        h_inf_estimate: h_est,
        ell_inf_estimate: l_est,
        g_bar_source,
    })
}

fn sup_g<T: Real>(
    w: &Weight<T>,
    radii: &[T],
    g: &[T],
    nodes: crate::numeric::extrapolate::Nodes,
    max_nodes: usize,
    slack: f64,
) -> Result<(Option<T>, Option<SupSource>)> {
    let n = g.len();
    let (imax, gmax) = g
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let tol = T::lit(slack) * T::one().max(gmax.abs());
    if g[n - 1] >= gmax - tol {
        let est = richardson_limit(|r| w.g(r), nodes, max_nodes, LIMIT_TOL);
        return Ok(if est.converged {
            (Some(gmax.max(est.value)), Some(SupSource::Limit))
        } else {
            (None, None)
        });
    }
    if imax == 0 {
        return Ok((Some(gmax), Some(SupSource::LeftEnd { r: radii[0].as_f64() })));
    }
    // Golden-section refinement on the two neighbouring cells.
    let (mut a, mut b) = (radii[imax - 1], radii[imax + 1]);
    let phi = T::lit(0.618_033_988_749_894_9);
    let mut best = gmax;
    let mut best_r = radii[imax];
    for _ in 0..80 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        let (g1, g2) = (w.g(x1)?, w.g(x2)?);
        if g1 > best {
            best = g1;
            best_r = x1;
        }
        if g2 > best {
            best = g2;
            best_r = x2;
        }
        if g1 > g2 {
            b = x2;
        } else {
            a = x1;
        }
        if b - a <= T::lit(1e-12) * b {
            break;
        }
    }
    Ok((Some(best), Some(SupSource::Interior { r: best_r.as_f64() })))
}
