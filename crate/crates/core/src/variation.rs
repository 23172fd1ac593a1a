//! The variation `φ = ∂u/∂α`, solving `φ'' + (q'/q)φ' + f'(u)φ = 0` with
//! `φ(0) = 1`, `φ'(0) = 0`, and numeric checks of the sign properties of `φ`.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::checks::{mono_margin, strict_status, Direction, Status};
use crate::model::Model;
use crate::numeric::ode::{dopri5, Control, DenseStep, OdeOptions, System};
use crate::numeric::roots::bisect_pred;
use crate::scalar::{sign, Real};
use crate::shoot::{series_start, ShootOptions};

/// `|u|` below which `f'(u)` is evaluated at `±U_WINDOW` instead.
pub const U_WINDOW: f64 = 1e-12;

struct Joint<'a, T> {
    model: &'a Model<T>,
    window_hits: Cell<usize>,
}

impl<T: Real> Joint<'_, T> {
    fn df(&self, u: T) -> T {
        let w = T::lit(U_WINDOW);
        if u.abs() < w {
            self.window_hits.set(self.window_hits.get() + 1);
            let s = if u < T::zero() { -w } else { w };
            return self.model.nl.df(s);
        }
        self.model.nl.df(u)
    }
}

impl<T: Real> System<T, 4> for Joint<'_, T> {
    fn rhs(&self, r: T, y: &[T; 4]) -> [T; 4] {
        let l = self.model.weight.log_derivative(r);
        [y[1], -l * y[1] - self.model.nl.f(y[0]), y[3], -l * y[3] - self.df(y[0]) * y[2]]
    }
}

/// `u`, `u'`, `φ`, `φ'` integrated together.
#[derive(Debug, Clone)]
pub struct VariationTrajectory<T> {
    pub alpha: T,
    pub r_start: T,
    pub r_end: T,
    pub steps: Vec<DenseStep<T, 4>>,
    /// Zeros of `φ`, increasing.
    pub zeros: Vec<T>,
    /// Zeros of `u'` (the extrema `T_j`), increasing.
    pub extrema: Vec<T>,
    /// Zeros of `u`, increasing.
    pub u_zeros: Vec<T>,
    /// Right-hand-side evaluations that fell in the `|u| < U_WINDOW` window.
    pub window_hits: usize,
    start: [T; 4],
}

impl<T: Real> VariationTrajectory<T> {
    /// `[u, u', φ, φ']` at `r`; the series is used below `r_start`.
    pub fn eval(&self, r: T) -> Result<[T; 4]> {
        if r < T::zero() || r > self.r_end {
            return Err(Error::OutOfRange { r: r.as_f64(), lo: 0.0, hi: self.r_end.as_f64() });
        }
        if r <= self.r_start {
            let x = if self.r_start > T::zero() { r / self.r_start } else { T::zero() };
            let [u0, up0, p0, pp0] = self.start;
            // u = α − c r², φ = 1 − d r²
            return Ok([
                self.alpha - (self.alpha - u0) * x * x,
                up0 * x,
                T::one() - (T::one() - p0) * x * x,
                pp0 * x,
            ]);
        }
        let i = self.steps.partition_point(|s| s.r1() < r).min(self.steps.len() - 1);
        Ok(self.steps[i].eval(r))
    }

    pub fn phi(&self, r: T) -> Result<T> {
        Ok(self.eval(r)?[2])
    }

    pub fn phi_prime(&self, r: T) -> Result<T> {
        Ok(self.eval(r)?[3])
    }

    /// Accepted step ends `(r, φ, φ')`.
    pub fn nodes(&self) -> Vec<(T, T, T)> {
        std::iter::once((self.r_start, self.start[2], self.start[3]))
            .chain(self.steps.iter().map(|s| (s.r1(), s.y1[2], s.y1[3])))
            .collect()
    }

    /// First radius after the start where `u` crosses `level` going down, if any.
    pub fn first_descent_through(&self, level: T) -> Option<T> {
        let mut prev = (self.r_start, self.start[0]);
        for s in &self.steps {
            if prev.1 > level && s.y1[0] <= level {
                let (a, b) = bisect_pred(|r| s.eval(r)[0] <= level, prev.0.max(s.r0), s.r1(), xtol(s.r1())).ok()?;
                return Some((a + b) * T::lit(0.5));
            }
            prev = (s.r1(), s.y1[0]);
        }
        None
    }
}

fn xtol<T: Real>(r: T) -> T {
    T::lit(1e-10) * T::one().max(r.abs())
}

/// Integrates `u` and `φ` from the series start to `opts.r_max` (default horizon if unset).
pub fn integrate_variation<T: Real>(model: &Model<T>, alpha: T, opts: &ShootOptions) -> Result<VariationTrajectory<T>> {
    if !(alpha > T::zero()) || !model.nl.in_domain(alpha) {
        return Err(Error::InvalidParameter(format!("initial value {} outside (0, c)", alpha.as_f64())));
    }
    let tol = T::lit(opts.tol);
    let r_max = opts.r_max.map_or_else(|| model.default_horizon(alpha), T::lit);
    let fa = model.nl.f(alpha);
    let scale = if fa == T::zero() { T::one() } else { (alpha / fa).abs().sqrt().min(T::one()) };
    let mut r_start = T::lit(1e-6) * scale;
    let mut found = None;
    for _ in 0..8 {
        if let Ok(v) = series_start(model, alpha, r_start, tol) {
            found = Some(v);
            break;
        }
        r_start = r_start * T::lit(0.1);
    }
    let (u0, up0) = found.ok_or(Error::StartTooLarge { err: f64::NAN })?;
    let dfa = model.nl.df(alpha);
    let start = [
        u0,
        up0,
        T::one() - dfa * model.weight.q_ratio_integral(r_start)?,
        -dfa * model.weight.q_ratio(r_start)?,
    ];
    let sys = Joint { model, window_hits: Cell::new(0) };
    let ode = OdeOptions {
        rtol: tol,
        atol: tol * T::one().max(alpha),
        h_init: (T::lit(1e-3) * r_max).min(T::lit(1e-2)),
        max_steps: opts.max_steps,
    };
    let mut steps: Vec<DenseStep<T, 4>> = Vec::new();
    let (mut zeros, mut extrema, mut u_zeros) = (Vec::new(), Vec::new(), Vec::new());
    let mut prev = start;
    let r_end = if r_max > r_start {
        dopri5(&sys, r_start, start, r_max, ode, |step| {
            if !model.nl.in_domain(step.y1[0]) {
                return Err(Error::DomainEscape { r: step.r1().as_f64() });
            }
            for (comp, out) in [(0usize, &mut u_zeros), (1, &mut extrema), (2, &mut zeros)] {
                let (s0, s1) = (sign(prev[comp]), sign(step.y1[comp]));
                if s0 != 0 && s1 != 0 && s0 != s1 {
                    if let Ok((a, b)) = bisect_pred(|r| sign(step.eval(r)[comp]) == s1, step.r0, step.r1(), xtol(step.r1())) {
                        out.push((a + b) * T::lit(0.5));
                    }
                }
            }
            prev = step.y1;
            steps.push(*step);
            Ok(Control::Continue)
        })?
    } else {
        r_start
    };
    Ok(VariationTrajectory {
        alpha,
        r_start,
        r_end,
        steps,
        zeros,
        extrema,
        u_zeros,
        window_hits: sys.window_hits.get(),
        start,
    })
}

pub fn first_zero_of_phi<T: Real>(vt: &VariationTrajectory<T>) -> Option<T> {
    vt.zeros.first().copied()
}

/// One numeric check with its margin (positive means the inequality holds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiCheck {
    pub name: String,
    pub status: Option<Status>,
    pub margin: Option<f64>,
    pub skipped: Option<String>,
}

impl PhiCheck {
    fn done(name: &str, margin: f64, slack: f64) -> Self {
        PhiCheck { name: name.into(), status: Some(strict_status(margin, slack)), margin: Some(margin), skipped: None }
    }

    fn skip(name: &str, reason: String) -> Self {
        PhiCheck { name: name.into(), status: None, margin: None, skipped: Some(reason) }
    }

    pub fn passed(&self) -> bool {
        self.status == Some(Status::Satisfied)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiReport {
    pub alpha: f64,
    pub r1: Option<f64>,
    /// `r(b, α)` and `r(β, α)` on the first descent.
    pub r_b: Option<f64>,
    pub r_beta: Option<f64>,
    /// `r(β, α) − r₁`; the case split of the sign checks depends on its sign.
    pub r_beta_minus_r1: Option<f64>,
    /// Set when `|r₁ − r(β, α)|` is below the resolution, so both cases are reported.
    pub ambiguous: bool,
    pub checks: Vec<PhiCheck>,
    /// Each window between consecutive zeros of `u'` (starting at `r = 0`) holds a zero of `φ`.
    pub interlacing: bool,
    pub window_hits: usize,
}

/// Points strictly inside `(a, b]`, denser near `a`.
fn interior<T: Real>(a: T, b: T, n: usize) -> Vec<T> {
    (1..=n)
        .map(|i| {
            let x = T::from_count(i) / T::from_count(n);
            a + (b - a) * x * x
        })
        .collect()
}

/// Checks on `(r₁, r(b, α))`: (a) `h u'/u` strictly decreasing, (b) `φ < 0`,
/// (c) `(φ + hφ')(r(b, α)) < 0`, (d) `φ'(r(b, α)) < 0`, the last only when `f6_holds`.
pub fn check_phi_propositions<T: Real>(model: &Model<T>, vt: &VariationTrajectory<T>, f6_holds: bool) -> Result<PhiReport> {
    const SAMPLES: usize = 400;
    let slack = 1e-12;
    let r1 = first_zero_of_phi(vt);
    let r_b = vt.first_descent_through(model.nl.b);
    let r_beta = vt.first_descent_through(model.nl.beta);
    let gap = match (r1, r_beta) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    };
    let ambiguous = match (gap, r_beta) {
        (Some(g), Some(rb)) => g.abs() <= T::lit(1e-6) * rb,
        _ => false,
    };
    let mut checks = Vec::new();
    match (r1, r_b) {
        (Some(r1), Some(rb)) if r1 < rb => {
            let rs = interior(r1, rb, SAMPLES);
            let mut vals = Vec::with_capacity(rs.len());
            for &r in &rs[..rs.len() - 1] {
                let y = vt.eval(r)?;
                vals.push(model.weight.h(r)? * y[1] / y[0]);
            }
            let (m, _) = mono_margin(&vals, Direction::Decreasing);
            checks.push(PhiCheck::done("a_hu'/u_decreasing", m, slack));
        }
        _ => checks.push(PhiCheck::skip("a_hu'/u_decreasing", "no zero of phi before r(b, alpha)".into())),
    }
    let names = ["b_phi_negative", "c_phi_plus_h_phiprime_negative", "d_phiprime_negative"];
    let in_case = matches!((gap, r_b), (Some(g), Some(_)) if g >= T::zero()) || (ambiguous && r_b.is_some());
    if in_case {
        let (r1, rb) = (r1.expect("gap implies r1"), r_b.expect("checked"));
        let mut max_phi = T::neg_infinity();
        for &r in &interior(r1, rb, SAMPLES) {
            max_phi = max_phi.max(vt.phi(r)?);
        }
        checks.push(PhiCheck::done(names[0], -max_phi.as_f64(), slack));
        let y = vt.eval(rb)?;
        let h = model.weight.h(rb)?;
        checks.push(PhiCheck::done(names[1], -(y[2] + h * y[3]).as_f64(), slack));
        if f6_holds {
            checks.push(PhiCheck::done(names[2], -y[3].as_f64(), slack));
        } else {
            checks.push(PhiCheck::skip(names[2], "(f6) does not hold".into()));
        }
    } else {
        let reason = match (r1, r_beta) {
            (None, _) => "phi has no zero on the computed span".to_string(),
            (_, None) => "u does not reach beta".to_string(),
            (Some(a), Some(b)) => format!("first zero r1 = {} lies beyond r(beta, alpha) = {}", a.as_f64(), b.as_f64()),
        };
        for n in names {
            checks.push(PhiCheck::skip(n, reason.clone()));
        }
    }
    Ok(PhiReport {
        alpha: vt.alpha.as_f64(),
        r1: r1.map(Real::as_f64),
        r_b: r_b.map(Real::as_f64),
        r_beta: r_beta.map(Real::as_f64),
        r_beta_minus_r1: gap.map(Real::as_f64),
        ambiguous,
        checks,
        interlacing: interlacing(vt),
        window_hits: vt.window_hits,
    })
}

/// Every window `(T_{j−1}, T_j)` between consecutive zeros of `u'` (with `T_0 = 0`) contains a zero of `φ`.
pub fn interlacing<T: Real>(vt: &VariationTrajectory<T>) -> bool {
    let mut lo = T::zero();
    for &hi in &vt.extrema {
        if !vt.zeros.iter().any(|&z| z > lo && z < hi) {
            return false;
        }
        lo = hi;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Nonlinearity, Weight, WeightSpec};
    use crate::shoot::integrate;

    fn cubic(theta: f64) -> Model<f64> {
        Model::new(Weight::new(WeightSpec::Power { theta }).unwrap(), Nonlinearity::power_minus_linear(3.0).unwrap())
    }

    #[test]
    fn starts_at_one() {
        let m = cubic(2.0);
        let vt = integrate_variation(&m, 3.0, &ShootOptions { r_max: Some(5.0), ..Default::default() }).unwrap();
        assert_eq!(vt.phi(0.0).unwrap(), 1.0);
        assert_eq!(vt.phi_prime(0.0).unwrap(), 0.0);
        assert!((vt.phi(vt.r_start).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constant_solution_variation() {
        // u ≡ b = 1 and f'(1) = 2, so φ'' + (2/r)φ' + 2φ = 0.
        let m = cubic(2.0);
        let vt = integrate_variation(&m, 1.0, &ShootOptions { r_max: Some(10.0), ..Default::default() }).unwrap();
        let z = first_zero_of_phi(&vt).unwrap();
        // For θ = 2, φ = sin(√2 r)/(√2 r), first zero π/√2.
        assert!((z - std::f64::consts::PI / 2f64.sqrt()).abs() < 1e-8, "{z}");
    }

    #[test]
    fn u_matches_plain_shooting() {
        let m = cubic(2.0);
        let o = ShootOptions { r_max: Some(8.0), ..Default::default() };
        let vt = integrate_variation(&m, 4.0, &o).unwrap();
        let t = integrate(&m, 4.0, &o).unwrap();
        for r in [0.5, 2.0, 5.0, 7.9] {
            assert!((vt.eval(r).unwrap()[0] - t.u(r).unwrap()).abs() < 1e-8);
        }
    }
}
