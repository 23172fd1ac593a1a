//! Shooting from the origin for `u'' + (q'/q)u' + f(u) = 0`, `u(0) = α`, `u'(0) = 0`.
//!
//! The singular point `r = 0` is bridged by a frozen-`f` series, after which a
//! Dormand–Prince pair with dense output carries the solution. Sign changes of
//! `u` and `u'` are located on the interpolant. A double zero ends the
//! integration and the solution is continued by zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::numeric::ode::{dopri5, Control, DenseStep, OdeOptions, System};
use crate::numeric::roots::{bisect_pred, logspace};
use crate::scalar::{sign, Real};

/// Integration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootOptions {
    /// Relative tolerance; the absolute tolerance is `tol·max(1, α)`.
    pub tol: f64,
    /// Horizon; `None` selects [`Model::default_horizon`].
    pub r_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions { tol: 1e-10, r_max: None, max_steps: 2_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    UZero,
    UprimeZero,
    DoubleZero,
    AsymptoticTail,
}

/// A located event. `value_slope` is `u'` at a zero of `u` and `u` at a zero of `u'`.
/// `k` is the index of the zero `Z_k`, or of the extremum `T_k` that follows `Z_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord<T> {
    pub kind: EventKind,
    pub r: T,
    pub value_slope: T,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Horizon,
    DoubleZero,
    Requested,
}

/// A computed solution with continuous evaluation.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub alpha: T,
    pub tol: T,
    pub r_start: T,
    pub r_max: T,
    pub steps: Vec<DenseStep<T, 2>>,
    pub events: Vec<EventRecord<T>>,
    /// Past this radius `u ≡ 0`.
    pub zero_extension_from: Option<T>,
    /// `(r, I(r))` at the start and at every step end.
    pub energy_samples: Vec<(T, T)>,
    /// Double-zero threshold `1e−9·max(1, α)`.
    pub eps_dz: T,
    pub stop: StopReason,
    start: [T; 2],
    /// `u ≈ α − c2·r²` below `r_start`.
    series_c2: T,
}

impl<T: Real> Trajectory<T> {
    /// Last radius covered by the integration.
    pub fn r_end(&self) -> T {
        self.steps.last().map_or(self.r_start, |s| s.r1())
    }

    /// `(u, u')` at `r`. Beyond a double zero the state is zero.
    pub fn eval(&self, r: T) -> Result<[T; 2]> {
        if r <= T::zero() {
            return Ok([self.alpha, T::zero()]);
        }
        if r < self.r_start {
            return Ok([self.alpha - self.series_c2 * r * r, -T::lit(2.0) * self.series_c2 * r]);
        }
        if let Some(z) = self.zero_extension_from {
            if r >= z {
                return Ok([T::zero(), T::zero()]);
            }
        }
        let end = self.r_end();
        if r > end {
            return Err(Error::OutOfRange { r: r.as_f64(), lo: 0.0, hi: end.as_f64() });
        }
        if self.steps.is_empty() {
            return Ok(self.start);
        }
        let i = self.steps.partition_point(|s| s.r0 <= r).saturating_sub(1);
        Ok(self.steps[i].eval(r))
    }

    pub fn u(&self, r: T) -> Result<T> {
        Ok(self.eval(r)?[0])
    }

    pub fn uprime(&self, r: T) -> Result<T> {
        Ok(self.eval(r)?[1])
    }

    /// `(r, u, u')` at the start and every step end.
    pub fn nodes(&self) -> Vec<(T, T, T)> {
        let mut out = vec![(self.r_start, self.start[0], self.start[1])];
        out.extend(self.steps.iter().map(|s| (s.r1(), s.y1[0], s.y1[1])));
        out
    }

    /// Largest increase of `I` between consecutive nodes.
    pub fn max_energy_increase(&self) -> T {
        self.energy_samples
            .windows(2)
            .map(|w| w[1].1 - w[0].1)
            .fold(T::neg_infinity(), T::max)
    }

    pub fn u_zeros(&self) -> impl Iterator<Item = &EventRecord<T>> {
        self.events.iter().filter(|e| e.kind == EventKind::UZero)
    }
}

struct Radial<'a, T> {
    model: &'a Model<T>,
}

impl<T: Real> System<T, 2> for Radial<'_, T> {
    fn rhs(&self, r: T, y: &[T; 2]) -> [T; 2] {
        [y[1], -self.model.weight.log_derivative(r) * y[1] - self.model.nl.f(y[0])]
    }
}

/// `(u, u')` at `r_start` from the frozen-`f` series
/// `u = α − f(α)∫₀^r Q/q`, `u' = −f(α)Q/q`.
///
/// Fails when `|f(u(r_start)) − f(α)|` exceeds `tol·|f(α)|`.
pub fn series_start<T: Real>(model: &Model<T>, alpha: T, r_start: T, tol: T) -> Result<(T, T)> {
    let fa = model.nl.f(alpha);
    let u = alpha - fa * model.weight.q_ratio_integral(r_start)?;
    let up = -fa * model.weight.q_ratio(r_start)?;
    let err = (model.nl.f(u) - fa).abs();
    if err > tol * fa.abs() {
        return Err(Error::StartTooLarge { err: (err / fa.abs()).as_f64() });
    }
    Ok((u, up))
}

/// Start radius `1e−6·scale` with `scale = min(1, √|α/f(α)|)`, shrunk until the series is accurate.
fn choose_start<T: Real>(model: &Model<T>, alpha: T, tol: T) -> Result<(T, T, T)> {
    let fa = model.nl.f(alpha);
    let scale = if fa == T::zero() { T::one() } else { (alpha / fa).abs().sqrt().min(T::one()) };
    let mut r = T::lit(1e-6) * scale;
    let mut last = None;
    for _ in 0..8 {
        match series_start(model, alpha, r, tol) {
            Ok((u, up)) => return Ok((r, u, up)),
            Err(e) => last = Some(e),
        }
        r = r * T::lit(0.1);
    }
    Err(last.expect("at least one attempt"))
}

/// Interior sample fractions used to catch pairs of sign changes inside one step.
const SAMPLES: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

/// Tracks the last nonzero sign of one component.
#[derive(Clone, Copy)]
struct SignTrack<T> {
    sign: i8,
    r: T,
}

fn locate<T: Real>(step: &DenseStep<T, 2>, comp: usize, lo: T, hi: T, new_sign: i8) -> T {
    let xtol = T::lit(1e-12) * T::one().max(hi.abs());
    match bisect_pred(|r| sign(step.eval(r)[comp]) == new_sign, lo, hi, xtol) {
        Ok((a, b)) => (a + b) * T::lit(0.5),
        Err(_) => hi,
    }
}

/// Integrates to the horizon or a double zero. See [`integrate_until`].
pub fn integrate<T: Real>(model: &Model<T>, alpha: T, opts: &ShootOptions) -> Result<Trajectory<T>> {
    integrate_until(model, alpha, opts, |_: &[EventRecord<T>]| false)
}

/// Integrates until the horizon, a double zero, or until `stop` returns true
/// after new events were appended.
pub fn integrate_until<T, F>(
    model: &Model<T>,
    alpha: T,
    opts: &ShootOptions,
    mut stop: F,
) -> Result<Trajectory<T>>
where
    T: Real,
    F: FnMut(&[EventRecord<T>]) -> bool,
{
    if !(alpha > T::zero()) || !model.nl.in_domain(alpha) {
        return Err(Error::InvalidParameter(format!(
            "initial value {} outside (0, c)",
            alpha.as_f64()
        )));
    }
    let tol = T::lit(opts.tol);
    let r_max = opts.r_max.map_or_else(|| model.default_horizon(alpha), T::lit);
    let (r_start, u0, up0) = choose_start(model, alpha, tol)?;
    let scale = T::one().max(alpha.abs());
    let eps_dz = T::lit(1e-9) * scale;
    let i0 = model.energy(alpha, T::zero());
    let allowed = T::lit(10.0) * tol * T::one().max(i0.abs());

    let mut traj = Trajectory {
        alpha,
        tol,
        r_start,
        r_max,
        steps: Vec::new(),
        events: Vec::new(),
        zero_extension_from: None,
        energy_samples: vec![(r_start, model.energy(u0, up0))],
        eps_dz,
        stop: StopReason::Horizon,
        start: [u0, up0],
        series_c2: (alpha - u0) / (r_start * r_start),
    };
    if !(r_max > r_start) {
        return Ok(traj);
    }
    let mut tracks = [SignTrack { sign: sign(u0), r: r_start }, SignTrack { sign: sign(up0), r: r_start }];
    let mut n_zeros = 0usize;
    let ode = OdeOptions {
        rtol: tol,
        atol: tol * scale,
        h_init: (T::lit(1e-3) * r_max).min(T::lit(1e-2)),
        max_steps: opts.max_steps,
    };
    let sys = Radial { model };
    let mut steps = Vec::new();
    let mut events = Vec::new();
    let mut energy = Vec::new();
    let mut reason = StopReason::Horizon;
    let mut zero_ext = None;
    let mut i_prev = traj.energy_samples[0].1;
    dopri5(&sys, r_start, [u0, up0], r_max, ode, |step| {
        let r1 = step.r1();
        let [u1, up1] = step.y1;
        if !model.nl.in_domain(u1) {
            return Err(Error::DomainEscape { r: r1.as_f64() });
        }
        let i1 = model.energy(u1, up1);
        if i1 - i_prev > allowed {
            return Err(Error::EnergyIncrease {
                r: r1.as_f64(),
                increase: (i1 - i_prev).as_f64(),
                allowed: allowed.as_f64(),
            });
        }
        i_prev = i1;
        steps.push(*step);
        energy.push((r1, i1));

        let mut found: Vec<(T, usize)> = Vec::new();
        for &f in &SAMPLES {
            let r = if f == 1.0 { r1 } else { step.r0 + T::lit(f) * step.h };
            let y = if f == 1.0 { step.y1 } else { step.eval(r) };
            for c in 0..2 {
                let s = sign(y[c]);
                if s == 0 {
                    continue;
                }
                let tr = &mut tracks[c];
                if tr.sign != 0 && s != tr.sign {
                    found.push((locate(step, c, tr.r.max(step.r0), r, s), c));
                }
                tr.sign = s;
                tr.r = r;
            }
        }
        found.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite radii"));
        let new_events = !found.is_empty();
        for (r, c) in found {
            let y = step.eval(r);
            if c == 0 {
                n_zeros += 1;
                events.push(EventRecord { kind: EventKind::UZero, r, value_slope: y[1], k: n_zeros });
            } else {
                events.push(EventRecord { kind: EventKind::UprimeZero, r, value_slope: y[0], k: n_zeros });
            }
        }
        if u1.abs() <= eps_dz && up1.abs() <= eps_dz && i1 <= eps_dz * eps_dz {
            events.push(EventRecord { kind: EventKind::DoubleZero, r: r1, value_slope: up1, k: n_zeros });
            zero_ext = Some(r1);
            reason = StopReason::DoubleZero;
            return Ok(Control::Stop);
        }
        if new_events && stop(&events) {
            reason = StopReason::Requested;
            return Ok(Control::Stop);
        }
        Ok(Control::Continue)
    })?;
    traj.steps = steps;
    traj.events = events;
    traj.energy_samples.extend(energy);
    traj.zero_extension_from = zero_ext;
    traj.stop = reason;
    Ok(traj)
}

/// Verdict of [`asymptotic_tail_test`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailVerdict<T> {
    /// `u → ℓ`, a zero of `f`, with `|u − ℓ| + |u'|` decaying over the last decade.
    Converges { ell: T },
    Undecided,
}

/// Decides whether `u` settles at a zero of `f` on `[r_tail, r_end]`.
///
/// The residual `|u − ℓ| + |u'|` is reduced to a running envelope over ten
/// windows covering the last decade of `r`; convergence requires the envelope
/// to be nonincreasing and to end below `1e−6·max(1, α)`.
pub fn asymptotic_tail_test<T: Real>(model: &Model<T>, traj: &Trajectory<T>, r_tail: T) -> TailVerdict<T> {
    if traj.zero_extension_from.is_some() {
        return TailVerdict::Converges { ell: T::zero() };
    }
    let r_end = traj.r_end();
    let lo = r_tail.max(r_end * T::lit(0.1)).max(traj.r_start);
    if !(r_end > lo) {
        return TailVerdict::Undecided;
    }
    let rs = logspace(lo, r_end, 200);
    let ys: Vec<[T; 2]> = match rs.iter().map(|&r| traj.eval(r)).collect::<Result<Vec<_>>>() {
        Ok(v) => v,
        Err(_) => return TailVerdict::Undecided,
    };
    let mut cands = vec![T::zero(), model.nl.b, -model.nl.b];
    // Newton from the final value, for zeros of custom f beyond ±b.
    let mut x = ys[ys.len() - 1][0];
    for _ in 0..30 {
        let d = model.nl.df(x);
        if d == T::zero() || !d.is_finite() {
            break;
        }
        x = x - model.nl.f(x) / d;
    }
    if x.is_finite() && model.nl.f(x).abs() <= T::lit(1e-12) * T::one().max(x.abs()) {
        cands.push(x);
    }
    let tol = T::lit(1e-6) * T::one().max(traj.alpha.abs());
    let mut best: Option<(T, T)> = None;
    for &ell in &cands {
        let e: Vec<T> = ys.iter().map(|y| (y[0] - ell).abs() + y[1].abs()).collect();
        let env: Vec<T> = e.chunks(20).map(|c| c.iter().copied().fold(T::zero(), T::max)).collect();
        let decaying = env.windows(2).all(|w| w[1] <= w[0] * T::lit(1.0 + 1e-12));
        let last = env[env.len() - 1];
        if decaying && last <= tol && best.is_none_or(|(_, b)| last < b) {
            best = Some((ell, last));
        }
    }
    match best {
        Some((ell, _)) => TailVerdict::Converges { ell },
        None => TailVerdict::Undecided,
    }
}

/// Zeros `Z_k` and extrema `T_k` read off a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Markers<T> {
    /// `(Z_k, u'(Z_k))` for `k = 1, 2, …`.
    pub zeros: Vec<(T, T)>,
    /// `(T_k, u(T_k))`: the first extremum after `Z_k`.
    pub extrema: Vec<(T, T)>,
    /// Level `k` whose tail after `Z_{k−1}` is monotone and convergent.
    pub ftilde_level: Option<usize>,
    /// The last segment is monotone but its tail could not be decided.
    pub undecided: bool,
}

/// Extracts `Z_k`, `T_k` for `k ≤ k_max`.
pub fn extract_markers<T: Real>(model: &Model<T>, traj: &Trajectory<T>, k_max: usize) -> Markers<T> {
    let mut zeros = Vec::new();
    let mut extrema = Vec::new();
    for e in &traj.events {
        match e.kind {
            EventKind::UZero if e.k <= k_max => zeros.push((e.r, e.value_slope)),
            EventKind::UprimeZero if e.k >= 1 && e.k <= k_max && extrema.len() < e.k => {
                extrema.push((e.r, e.value_slope))
            }
            _ => {}
        }
    }
    let mut ftilde_level = None;
    let mut undecided = false;
    let nz = zeros.len();
    if nz >= 1 && nz < k_max + 1 && extrema.len() < nz && traj.zero_extension_from.is_none() {
        // No extremum after the last zero: monotone tail on (Z_nz, r_end].
        let z = zeros[nz - 1].0;
        match asymptotic_tail_test(model, traj, z) {
            TailVerdict::Converges { ell } if ell != T::zero() => ftilde_level = Some(nz + 1),
            TailVerdict::Converges { .. } => {}
            TailVerdict::Undecided => undecided = true,
        }
    }
    Markers { zeros, extrema, ftilde_level, undecided }
}
