//! Functionals of `s = u(r)` along monotone branches of a trajectory:
//! `I`, `P`/`P̄`, `S₁₂`/`S̄₁₂`, `W̃`, `W̄`, `Ŵ`, `V`, `T`/`T̄`, with analytic
//! `s`-derivatives, sampled traces and monotonicity monitors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::numeric::quad::{integrate, QuadTol};
use crate::scalar::Real;
use crate::shoot::Trajectory;

/// Half-width of the refused window around `0` and `±b`, relative to `β`.
pub const WINDOW: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchDirection {
    Down,
    Up,
}

/// Inverse `s ↦ r` of `u` on the segment `[T_{i−1}, T_i]` (with `T_0 = 0`).
#[derive(Debug, Clone)]
pub struct BranchInverse<'a, T> {
    pub traj: &'a Trajectory<T>,
    pub index: usize,
    pub direction: BranchDirection,
    pub r_lo: T,
    pub r_hi: T,
    /// Range of `u` on the segment, `s_lo < s_hi`.
    pub s_lo: T,
    pub s_hi: T,
    /// `(r, u)` at the accepted step ends inside the segment, increasing in `r`.
    nodes: Vec<(T, T)>,
}

/// Builds the inverse on branch `index ≥ 1`.
pub fn branch_inverse<T: Real>(traj: &Trajectory<T>, index: usize, direction: BranchDirection) -> Result<BranchInverse<'_, T>> {
    let end = traj.zero_extension_from.unwrap_or_else(|| traj.r_end());
    let mut bounds = vec![T::zero()];
    bounds.extend(traj.events.iter().filter(|e| e.kind == crate::shoot::EventKind::UprimeZero).map(|e| e.r));
    bounds.push(end);
    if index == 0 || index + 1 > bounds.len() {
        return Err(Error::Precondition(format!("branch {index} does not exist ({} branches)", bounds.len() - 1)));
    }
    let (r_lo, r_hi) = (bounds[index - 1], bounds[index]);
    if !(r_hi > r_lo) {
        return Err(Error::Precondition(format!("branch {index} is empty")));
    }
    let mid = traj.uprime((r_lo + r_hi) * T::lit(0.5))?;
    let actual = if mid < T::zero() { BranchDirection::Down } else { BranchDirection::Up };
    if actual != direction {
        return Err(Error::Precondition(format!("branch {index} runs {actual:?}, not {direction:?}")));
    }
    let mut nodes = vec![(r_lo, traj.u(r_lo)?)];
    nodes.extend(
        traj.steps
            .iter()
            .map(|s| (s.r1(), s.y1[0]))
            .filter(|&(r, _)| r > r_lo && r < r_hi),
    );
    nodes.push((r_hi, traj.u(r_hi)?));
    let (u_a, u_b) = (nodes[0].1, nodes[nodes.len() - 1].1);
    Ok(BranchInverse {
        traj,
        index,
        direction,
        r_lo,
        r_hi,
        s_lo: u_a.min(u_b),
        s_hi: u_a.max(u_b),
        nodes,
    })
}

impl<T: Real> BranchInverse<'_, T> {
    pub fn contains(&self, s: T) -> bool {
        s >= self.s_lo && s <= self.s_hi
    }

    /// `r(s)` on this branch.
    pub fn r_of(&self, s: T) -> Result<T> {
        if !self.contains(s) {
            return Err(Error::OutsideBranch { s: s.as_f64(), lo: self.s_lo.as_f64(), hi: self.s_hi.as_f64() });
        }
        let down = self.direction == BranchDirection::Down;
        // "past" means u has moved beyond s along increasing r
        let past = |u: T| if down { u < s } else { u > s };
        let i = self.nodes.partition_point(|&(_, u)| !past(u));
        if i == 0 {
            return Ok(self.nodes[0].0);
        }
        if i == self.nodes.len() || self.nodes[i - 1].1 == s {
            return Ok(self.nodes[i - 1].0);
        }
        let (mut a, mut b) = (self.nodes[i - 1].0, self.nodes[i].0);
        for _ in 0..200 {
            let m = a + (b - a) * T::lit(0.5);
            if !(m > a && m < b) {
                break;
            }
            if past(self.traj.u(m)?) {
                b = m;
            } else {
                a = m;
            }
        }
        let (ua, ub) = (self.traj.u(a)?, self.traj.u(b)?);
        Ok(if (ua - s).abs() <= (ub - s).abs() { a } else { b })
    }
}

/// Weight and trajectory data at `r(s)`.
#[derive(Debug, Clone, Copy)]
struct Point<T> {
    r: T,
    up: T,
    q: T,
    qp: T,
    big_q: T,
    h: T,
    h_prime: T,
    h_int: T,
    big_h: T,
    g: T,
}

fn point<T: Real>(model: &Model<T>, inv: &BranchInverse<'_, T>, s: T) -> Result<Point<T>> {
    let r = inv.r_of(s)?;
    let up = inv.traj.uprime(r)?;
    if r == T::zero() {
        let z = T::zero();
        return Ok(Point { r, up, q: z, qp: z, big_q: z, h: z, h_prime: z, h_int: z, big_h: z, g: z });
    }
    let w = model.weight.eval(r)?;
    Ok(Point {
        r,
        up,
        q: w.q,
        qp: w.q_prime,
        big_q: w.big_q,
        h: w.h,
        h_prime: w.h_prime,
        h_int: w.h_integral,
        big_h: w.big_h,
        g: w.g,
    })
}

fn check_window<T: Real>(model: &Model<T>, s: T) -> Result<()> {
    let w = T::lit(WINDOW) * model.nl.beta;
    for c in [T::zero(), model.nl.b, -model.nl.b] {
        if (s - c).abs() <= w {
            return Err(Error::SingularWindow { s: s.as_f64(), center: c.as_f64() });
        }
    }
    Ok(())
}

/// `−∫_{from}^{s} F/f`, refused when the path meets a zero of `f` other than `0`.
pub fn ratio_primitive<T: Real>(model: &Model<T>, from: T, s: T) -> Result<T> {
    let (a, b) = (from.min(s), from.max(s));
    let w = T::lit(WINDOW) * model.nl.beta;
    for c in [model.nl.b, -model.nl.b] {
        if c >= a - w && c <= b + w {
            return Err(Error::SingularWindow { s: s.as_f64(), center: c.as_f64() });
        }
    }
    let ratio = |t: T| if t == T::zero() { T::zero() } else { model.nl.f_ratio(t) };
    let tol = QuadTol { rel: 1e-13, abs: 1e-15, max_intervals: 2000 };
    Ok(-integrate(ratio, from, s, tol)?)
}

/// The functionals. `P`, `S12`, `T` live on down-branches, the barred
/// versions on up-branches; the rest on either.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Functional {
    I,
    P,
    Pbar,
    S12,
    S12bar,
    Wtilde,
    Wbar,
    What,
    V,
    T,
    Tbar,
}

impl Functional {
    pub const ALL: [Functional; 11] = [
        Functional::I,
        Functional::P,
        Functional::Pbar,
        Functional::S12,
        Functional::S12bar,
        Functional::Wtilde,
        Functional::Wbar,
        Functional::What,
        Functional::V,
        Functional::T,
        Functional::Tbar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Functional::I => "I",
            Functional::P => "P",
            Functional::Pbar => "Pbar",
            Functional::S12 => "S12",
            Functional::S12bar => "S12bar",
            Functional::Wtilde => "Wtilde",
            Functional::Wbar => "Wbar",
            Functional::What => "What",
            Functional::V => "V",
            Functional::T => "T",
            Functional::Tbar => "Tbar",
        }
    }

    pub fn parse(name: &str) -> Option<Functional> {
        Functional::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(name))
    }

    /// Required branch direction, if any.
    pub fn direction(self) -> Option<BranchDirection> {
        match self {
            Functional::P | Functional::S12 | Functional::T => Some(BranchDirection::Down),
            Functional::Pbar | Functional::S12bar | Functional::Tbar => Some(BranchDirection::Up),
            _ => None,
        }
    }

    pub fn needs_pair(self) -> bool {
        matches!(self, Functional::S12 | Functional::S12bar)
    }
}

/// Value and analytic `s`-derivative; the derivative is `None` where `u' = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Valued<T> {
    pub value: T,
    pub derivative: Option<T>,
}

fn nonzero<T: Real>(x: T) -> Option<T> {
    (x != T::zero()).then_some(x)
}

fn radicand<T: Real>(model: &Model<T>, p: &Point<T>, s: T) -> Result<T> {
    let i = p.up * p.up + T::lit(2.0) * model.nl.big_f(s);
    if i < T::zero() {
        return Err(Error::NegativeRadicand { s: s.as_f64(), radicand: i.as_f64() });
    }
    Ok(i)
}

/// Evaluates `which` at `s`. `other` is the second trajectory's branch for `S12`/`S12bar`.
pub fn eval_functional<T: Real>(
    model: &Model<T>,
    which: Functional,
    inv: &BranchInverse<'_, T>,
    other: Option<&BranchInverse<'_, T>>,
    s: T,
) -> Result<Valued<T>> {
    if let Some(d) = which.direction() {
        if inv.direction != d || other.is_some_and(|o| o.direction != d) {
            return Err(Error::Precondition(format!("{} requires {:?} branches", which.name(), d)));
        }
    }
    let two = T::lit(2.0);
    let nl = &model.nl;
    let p = point(model, inv, s)?;
    let inv_up = nonzero(p.up).map(|u| T::one() / u);
    Ok(match which {
        Functional::I => {
            let i = p.up * p.up + two * nl.big_f(s);
            // dI/ds = −2(q'/q)u'
            let d = if p.r == T::zero() { None } else { Some(-two * p.qp / p.q * p.up) };
            Valued { value: i, derivative: d }
        }
        Functional::P | Functional::Pbar => {
            check_window(model, s)?;
            let value = -p.big_q * (p.up * p.up + two * nl.big_f(s)) - two * p.q * p.up * nl.f_ratio(s);
            let d = p.q * p.up * (T::one() - two * p.big_h - two * nl.f_ratio_prime(s));
            Valued { value, derivative: Some(d) }
        }
        Functional::S12 | Functional::S12bar => {
            let o = other.ok_or_else(|| Error::Precondition(format!("{} needs a second trajectory", which.name())))?;
            let p2 = point(model, o, s)?;
            if p2.up == T::zero() || p2.q == T::zero() {
                return Err(Error::Undefined(format!("u2' = 0 at s = {}", s.as_f64())));
            }
            let value = p.q * p.up.abs() / (p2.q * p2.up.abs());
            let d = inv_up.map(|a| value * nl.f(s) * (T::one() / (p2.up * p2.up) - a * a));
            Valued { value, derivative: d }
        }
        Functional::Wtilde => {
            let i = radicand(model, &p, s)?;
            let value = p.q * i.sqrt();
            let d = match (inv_up, nonzero(value)) {
                (Some(a), Some(w)) => Some(two * p.q * p.qp * nl.big_f(s) * a / w),
                _ => None,
            };
            Valued { value, derivative: d }
        }
        Functional::Wbar => {
            let i = radicand(model, &p, s)?;
            let ratio = if p.r == T::zero() { T::zero() } else { p.big_q / p.q };
            let value = ratio * i.sqrt();
            // d(W̄²)/ds = 2(Q/q)H I/u' − 2(Q/q)²(q'/q)u'
            let d = match (inv_up, nonzero(value)) {
                (Some(a), Some(w)) => {
                    let w2 = two * ratio * p.big_h * i * a - two * ratio * ratio * (p.qp / p.q) * p.up;
                    Some(w2 / (two * w))
                }
                _ => None,
            };
            Valued { value, derivative: d }
        }
        Functional::What => {
            let i = radicand(model, &p, s)?;
            let value = (p.h_int * i).sqrt();
            let d = match (inv_up, nonzero(value)) {
                (Some(a), Some(w)) => Some((p.h * i - two * p.h_int * (p.qp / p.q) * p.up * p.up) * a / (two * w)),
                _ => None,
            };
            Valued { value, derivative: d }
        }
        Functional::V => {
            let i = radicand(model, &p, s)?;
            let value = p.h * i.sqrt();
            let d = match (inv_up, nonzero(i)) {
                (Some(a), Some(i)) => Some((two * p.h_prime * nl.big_f(s) - p.up * p.up) * a / i.sqrt()),
                _ => None,
            };
            Valued { value, derivative: d }
        }
        Functional::T | Functional::Tbar => {
            check_window(model, s)?;
            let from = if which == Functional::T { nl.beta } else { -nl.beta };
            let tail = ratio_primitive(model, from, s)?;
            let i = p.up * p.up + two * nl.big_f(s);
            let value = -nl.f_ratio(s) * p.h * p.up - T::lit(0.5) * p.h_int * i + tail;
            let d = (p.g - nl.f_ratio_prime(s)) * p.h * p.up;
            Valued { value, derivative: Some(d) }
        }
    })
}

/// `inf{s on the down-branch : u'² + 2F(s) > 0}`.
pub fn energy_threshold<T: Real>(model: &Model<T>, inv: &BranchInverse<'_, T>) -> Result<T> {
    if inv.direction != BranchDirection::Down {
        return Err(Error::Precondition("energy threshold is defined on down-branches".into()));
    }
    let energy = |s: T| -> Result<T> {
        let r = inv.r_of(s)?;
        let up = inv.traj.uprime(r)?;
        Ok(up * up + T::lit(2.0) * model.nl.big_f(s))
    };
    if energy(inv.s_lo)? > T::zero() {
        return Ok(inv.s_lo);
    }
    let (mut a, mut b) = (inv.s_lo, inv.s_hi);
    for _ in 0..200 {
        let m = a + (b - a) * T::lit(0.5);
        if !(m > a && m < b) {
            break;
        }
        if energy(m)? > T::zero() {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(b)
}

/// One sample of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub s: f64,
    pub value: f64,
    pub derivative_analytic: Option<f64>,
    pub derivative_fd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalTrace {
    pub functional: Functional,
    pub branch: usize,
    pub direction: BranchDirection,
    pub s_lo: f64,
    pub s_hi: f64,
    pub samples: Vec<TraceSample>,
    /// Samples refused (singular window, negative radicand, undefined ratio).
    pub excluded: usize,
}

impl FunctionalTrace {
    /// Largest relative gap between analytic and finite-difference derivatives
    /// over samples with `|analytic| > floor` at least `end_margin·(s_hi − s_lo)`
    /// away from both ends, with the `s` where it occurs.
    pub fn max_derivative_mismatch(&self, floor: f64, end_margin: f64) -> Option<(f64, f64)> {
        let gap = end_margin * (self.s_hi - self.s_lo);
        self.samples
            .iter()
            .filter(|x| x.s - self.s_lo >= gap && self.s_hi - x.s >= gap)
            .filter_map(|x| {
                let (a, d) = (x.derivative_analytic?, x.derivative_fd?);
                (a.abs() > floor).then(|| ((a - d).abs() / a.abs(), x.s))
            })
            .max_by(|a, b| a.0.total_cmp(&b.0))
    }
}

/// `n` points on `[lo, hi]`, log-spaced in the distance to the nearer end
/// (from `1e−6` to half the width), where `r(s)` varies fastest.
pub fn sample_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) || n == 0 {
        return Vec::new();
    }
    let w = hi - lo;
    let left = n / 2;
    let offsets = |m: usize| -> Vec<f64> {
        let (a, b) = (1e-6f64.ln(), 0.5f64.ln());
        (0..m).map(|i| (a + (b - a) * i as f64 / (m.max(2) - 1) as f64).exp() * w).collect()
    };
    let mut out: Vec<f64> = offsets(left).into_iter().map(|d| lo + d).collect();
    out.extend(offsets(n - left).into_iter().rev().map(|d| hi - d));
    out.dedup();
    out
}

/// Central difference with one Richardson step, staying inside `[lo, hi]`.
fn fd_derivative<T: Real>(
    model: &Model<T>,
    value: &dyn Fn(T) -> Result<T>,
    s: T,
    (lo, hi): (T, T),
    ratio_poles: bool,
) -> Option<T> {
    let b = model.nl.b;
    // In the tail u' is proportional to s, so every functional varies on the scale |s| there.
    let mut room = (s - lo).min(hi - s).min(s.abs());
    if ratio_poles {
        room = room.min((s - b).abs()).min((s + b).abs());
    }
    // Steps well above the integrator's step average out the error in the
    // derivative of the dense-output polynomial.
    let delta = (T::lit(1e-2) * model.nl.beta.max(s.abs())).min(T::lit(0.02) * room);
    if !(delta > T::zero()) {
        return None;
    }
    let d = |h: T| -> Option<T> { Some((value(s + h).ok()? - value(s - h).ok()?) / (h + h)) };
    let (d1, d2) = (d(delta)?, d(delta * T::lit(0.5))?);
    Some((T::lit(4.0) * d2 - d1) / T::lit(3.0))
}

/// Samples `which` on `n` points of the branch, optionally restricted to `range`.
/// The analytic derivative is compared with a finite difference at every sample.
pub fn trace<T: Real>(
    model: &Model<T>,
    which: Functional,
    inv: &BranchInverse<'_, T>,
    other: Option<&BranchInverse<'_, T>>,
    n: usize,
    range: Option<(T, T)>,
) -> Result<FunctionalTrace> {
    let (mut lo, mut hi) = (inv.s_lo, inv.s_hi);
    if let Some(o) = other {
        lo = lo.max(o.s_lo);
        hi = hi.min(o.s_hi);
    }
    if let Some((a, b)) = range {
        lo = lo.max(a);
        hi = hi.min(b);
    }
    let points = sample_points(lo.as_f64(), hi.as_f64(), n);
    let poles = matches!(which, Functional::P | Functional::Pbar | Functional::T | Functional::Tbar);
    let value = |s: T| -> Result<T> { Ok(eval_functional(model, which, inv, other, s)?.value) };
    let mut samples = Vec::with_capacity(points.len());
    let mut excluded = 0;
    for s in points {
        let st = T::lit(s);
        match eval_functional(model, which, inv, other, st) {
            Ok(v) => {
                let fd = v.derivative.and_then(|_| fd_derivative(model, &value, st, (lo, hi), poles));
                samples.push(TraceSample {
                    s,
                    value: v.value.as_f64(),
                    derivative_analytic: v.derivative.map(Real::as_f64),
                    derivative_fd: fd.map(Real::as_f64),
                });
            }
            Err(Error::SingularWindow { .. } | Error::NegativeRadicand { .. } | Error::Undefined(_)) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(FunctionalTrace {
        functional: which,
        branch: inv.index,
        direction: inv.direction,
        s_lo: lo.as_f64(),
        s_hi: hi.as_f64(),
        samples,
        excluded,
    })
}

/// Sign check of a sampled derivative over the range where a monotonicity claim applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub functional: Functional,
    pub branch: usize,
    pub claim: String,
    pub applied: bool,
    pub reason: Option<String>,
    /// Whether the hypotheses behind the claim were certified.
    pub hypotheses_certified: bool,
    pub samples: usize,
    pub tolerance: f64,
    /// Smallest `sign·derivative` seen, where `sign` is the claimed direction.
    pub min_signed_derivative: Option<f64>,
    pub worst_s: Option<f64>,
    pub violations: Vec<f64>,
    pub holds: bool,
}

/// Monitors `dP/ds ≥ 0`, `dP̄/ds ≤ 0` for `|s| ≥ β`, and `dT/ds ≥ 0` for `s ≥ β`,
/// `dT̄/ds ≤ 0` for `s ≤ −β`. Tolerance is `1e−8·max(1, max|derivative|)`.
pub fn monotonicity_monitor<T: Real>(model: &Model<T>, trace: &FunctionalTrace, hypotheses_certified: bool) -> MonitorReport {
    let beta = model.nl.beta.as_f64();
    let (claim, sign, in_range): (&str, f64, Box<dyn Fn(f64) -> bool>) = match trace.functional {
        Functional::P => ("dP/ds >= 0 for |s| >= beta", 1.0, Box::new(move |s: f64| s.abs() >= beta)),
        Functional::Pbar => ("dPbar/ds <= 0 for |s| >= beta", -1.0, Box::new(move |s: f64| s.abs() >= beta)),
        Functional::T => ("dT/ds >= 0 for s >= beta", 1.0, Box::new(move |s: f64| s >= beta)),
        Functional::Tbar => ("dTbar/ds <= 0 for s <= -beta", -1.0, Box::new(move |s: f64| s <= -beta)),
        _ => {
            return MonitorReport {
                functional: trace.functional,
                branch: trace.branch,
                claim: String::new(),
                applied: false,
                reason: Some("no monotonicity claim for this functional".into()),
                hypotheses_certified,
                samples: 0,
                tolerance: 0.0,
                min_signed_derivative: None,
                worst_s: None,
                violations: Vec::new(),
                holds: true,
            }
        }
    };
    let pts: Vec<(f64, f64)> = trace
        .samples
        .iter()
        .filter(|x| in_range(x.s))
        .filter_map(|x| x.derivative_analytic.map(|d| (x.s, d)))
        .collect();
    let scale = pts.iter().fold(1.0f64, |m, &(_, d)| m.max(d.abs()));
    let tolerance = 1e-8 * scale;
    let worst = pts.iter().map(|&(s, d)| (s, sign * d)).min_by(|a, b| a.1.total_cmp(&b.1));
    let violations: Vec<f64> = pts.iter().filter(|&&(_, d)| sign * d < -tolerance).map(|&(s, _)| s).collect();
    MonitorReport {
        functional: trace.functional,
        branch: trace.branch,
        claim: claim.into(),
        applied: !pts.is_empty(),
        reason: pts.is_empty().then(|| "no samples in the claimed s-range".to_string()),
        hypotheses_certified,
        samples: pts.len(),
        tolerance,
        min_signed_derivative: worst.map(|w| w.1),
        worst_s: worst.map(|w| w.0),
        holds: violations.is_empty(),
        violations,
    }
}

/// `Ŵ₂ − Ŵ₁` on `n` points of `[s_bottom, s_top]` along two down-branches.
pub fn what_gap<T: Real>(
    model: &Model<T>,
    inv1: &BranchInverse<'_, T>,
    inv2: &BranchInverse<'_, T>,
    s_bottom: T,
    s_top: T,
    n: usize,
) -> Result<Vec<(T, T)>> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let s = s_bottom + (s_top - s_bottom) * T::from_count(i) / T::from_count(n - 1);
            let w1 = eval_functional(model, Functional::What, inv1, None, s)?.value;
            let w2 = eval_functional(model, Functional::What, inv2, None, s)?.value;
            Ok((s, w2 - w1))
        })
        .collect()
}
