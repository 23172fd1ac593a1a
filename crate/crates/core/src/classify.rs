//! Classification of initial values into `N_k`, `G_k`, `P_k`, bound-state
//! brackets by bisection, uniqueness sweeps, and separation checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::numeric::roots::bisect_pred;
use crate::scalar::{sign, Real};
use crate::shoot::{asymptotic_tail_test, integrate_until, EventKind, EventRecord, ShootOptions, TailVerdict, Trajectory};

/// Membership at one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Membership {
    N,
    #[serde(rename = "G_within_tol")]
    GWithinTol,
    P,
    /// Monotone tail after `Z_{k−1}`; a subset of `P_k`.
    Ftilde,
    #[serde(rename = "undecided")]
    Undecided,
}

impl Membership {
    /// Short code such as `N1`, `G2`, `P1`, `Ftilde3`, `U1`.
    pub fn code(self, k: usize) -> String {
        let tag = match self {
            Membership::N => "N",
            Membership::GWithinTol => "G",
            Membership::P => "P",
            Membership::Ftilde => "Ftilde",
            Membership::Undecided => "U",
        };
        format!("{tag}{k}")
    }
}

/// Side used by bisection: which open set the value lies in or next to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lean {
    N,
    P,
}

/// What settled a level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// A zero of `u`.
    Crossing,
    /// A zero of `u'` before the next zero of `u`.
    TurningPoint,
    DoubleZero,
    /// Asymptotic tail test.
    Tail,
    /// `F(α) < 0`: the energy never allows a zero.
    EnergyShortcut,
    Horizon,
}

/// Outcome at level `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelRecord<T> {
    pub k: usize,
    /// `Z_k` and `u'(Z_k)` when `u` vanishes at this level.
    pub z: Option<(T, T)>,
    /// `T_k`: the extremum after `Z_k`, with `u(T_k)`.
    pub t: Option<(T, T)>,
    pub membership: Membership,
    pub lean: Option<Lean>,
    pub decided_by: Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult<T> {
    pub alpha: T,
    pub levels: Vec<LevelRecord<T>>,
    /// Horizon of the integration that produced the result.
    pub r_max: T,
}

impl<T: Real> ClassificationResult<T> {
    pub fn terminal_k(&self) -> usize {
        self.levels.len()
    }

    pub fn terminal(&self) -> &LevelRecord<T> {
        self.levels.last().expect("at least one level")
    }

    pub fn level(&self, k: usize) -> Option<&LevelRecord<T>> {
        self.levels.get(k.checked_sub(1)?)
    }

    pub fn is_undecided(&self) -> bool {
        self.terminal().membership == Membership::Undecided
    }

    /// Codes of all levels, e.g. `["N1", "P2"]`.
    pub fn codes(&self) -> Vec<String> {
        self.levels.iter().map(|l| l.membership.code(l.k)).collect()
    }
}

#[derive(PartialEq, Eq, Clone, Copy)]
enum Phase {
    /// Moving towards zero; `Z_k` is next.
    Descending,
    /// Moving away from zero after `Z_{k−1}`; `T_{k−1}` is next.
    Away,
}

/// Replays the events; returns the levels and whether the walk reached a terminal level.
fn walk<T: Real>(events: &[EventRecord<T>], k_max: usize, eps: T) -> (Vec<LevelRecord<T>>, bool, Phase) {
    let mut levels: Vec<LevelRecord<T>> = Vec::new();
    let mut phase = Phase::Descending;
    let mut k = 1;
    let rec = |k, z, m, lean, d| LevelRecord { k, z, t: None, membership: m, lean: Some(lean), decided_by: d };
    for e in events {
        match (phase, e.kind) {
            (Phase::Descending, EventKind::UZero) => {
                let z = Some((e.r, e.value_slope));
                if e.value_slope * e.value_slope <= eps {
                    levels.push(rec(k, z, Membership::GWithinTol, Lean::N, Decision::Crossing));
                    return (levels, true, phase);
                }
                levels.push(rec(k, z, Membership::N, Lean::N, Decision::Crossing));
                if k == k_max {
                    return (levels, true, phase);
                }
                k += 1;
                phase = Phase::Away;
            }
            (Phase::Descending, EventKind::UprimeZero) => {
                let m = if e.value_slope * e.value_slope <= eps { Membership::GWithinTol } else { Membership::P };
                levels.push(rec(k, None, m, Lean::P, Decision::TurningPoint));
                return (levels, true, phase);
            }
            (Phase::Descending, EventKind::DoubleZero) => {
                levels.push(rec(k, None, Membership::GWithinTol, Lean::P, Decision::DoubleZero));
                return (levels, true, phase);
            }
            (Phase::Away, EventKind::UprimeZero) => {
                if let Some(last) = levels.last_mut() {
                    last.t = Some((e.r, e.value_slope));
                }
                phase = Phase::Descending;
            }
            _ => {}
        }
    }
    (levels, false, phase)
}

fn classify_once<T: Real>(model: &Model<T>, alpha: T, k_max: usize, opts: &ShootOptions) -> Result<(ClassificationResult<T>, Trajectory<T>)> {
    let eps = T::lit(1e-9) * T::one().max(alpha.abs());
    let traj = integrate_until(model, alpha, opts, |ev| walk(ev, k_max, eps).1)?;
    let (mut levels, done, phase) = walk(&traj.events, k_max, eps);
    if !done {
        let k = levels.len() + 1;
        let r_tail = traj.events.last().map_or(traj.r_start, |e| e.r);
        let verdict = asymptotic_tail_test(model, &traj, r_tail);
        let (m, lean) = match (phase, verdict) {
            (Phase::Descending, TailVerdict::Converges { ell }) if ell == T::zero() => {
                (Membership::GWithinTol, Some(Lean::P))
            }
            (Phase::Descending, TailVerdict::Converges { .. }) => (Membership::P, Some(Lean::P)),
            (Phase::Away, TailVerdict::Converges { ell }) if ell != T::zero() => (Membership::Ftilde, Some(Lean::P)),
            _ => (Membership::Undecided, None),
        };
        let decided_by = if m == Membership::Undecided { Decision::Horizon } else { Decision::Tail };
        levels.push(LevelRecord { k, z: None, t: None, membership: m, lean, decided_by });
    }
    Ok((ClassificationResult { alpha, levels, r_max: traj.r_max }, traj))
}

/// Classifies `alpha` up to level `k_max`. An undecided horizon is doubled once;
/// if still undecided the result says so.
pub fn classify<T: Real>(model: &Model<T>, alpha: T, k_max: usize, opts: &ShootOptions) -> Result<ClassificationResult<T>> {
    Ok(classify_with_trajectory(model, alpha, k_max, opts)?.0)
}

/// As [`classify`], also returning the trajectory (`None` for the energy shortcut).
pub fn classify_with_trajectory<T: Real>(
    model: &Model<T>,
    alpha: T,
    k_max: usize,
    opts: &ShootOptions,
) -> Result<(ClassificationResult<T>, Option<Trajectory<T>>)> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be at least 1".into()));
    }
    if !(alpha > T::zero()) || !model.nl.in_domain(alpha) {
        return Err(Error::InvalidParameter(format!("initial value {} outside (0, c)", alpha.as_f64())));
    }
    if model.nl.big_f(alpha) < T::zero() {
        let level = LevelRecord {
            k: 1,
            z: None,
            t: None,
            membership: Membership::P,
            lean: Some(Lean::P),
            decided_by: Decision::EnergyShortcut,
        };
        let r_max = opts.r_max.map_or_else(|| model.default_horizon(alpha), T::lit);
        return Ok((ClassificationResult { alpha, levels: vec![level], r_max }, None));
    }
    let (res, traj) = classify_once(model, alpha, k_max, opts)?;
    if !res.is_undecided() {
        return Ok((res, Some(traj)));
    }
    let doubled = ShootOptions { r_max: Some(traj.r_max.as_f64() * 2.0), ..*opts };
    let (res, traj) = classify_once(model, alpha, k_max, &doubled)?;
    Ok((res, Some(traj)))
}

/// A bracket `[lo, hi]` whose endpoints lean to different sides at level `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundStateBracket {
    pub k: usize,
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
    pub alpha_star: f64,
    pub lo_side: Lean,
    pub hi_side: Lean,
    /// `u'(Z_k)` at the `N`-side endpoint.
    pub slope_at_zk: Option<f64>,
}

impl BoundStateBracket {
    /// Endpoint on the `N` side.
    pub fn n_side(&self) -> f64 {
        if self.hi_side == Lean::N {
            self.hi
        } else {
            self.lo
        }
    }

    /// Endpoint on the `P` side.
    pub fn p_side(&self) -> f64 {
        if self.hi_side == Lean::N {
            self.lo
        } else {
            self.hi
        }
    }
}

fn lean_at<T: Real>(model: &Model<T>, alpha: T, k: usize, opts: &ShootOptions) -> Result<(Lean, Option<T>)> {
    let c = classify(model, alpha, k, opts)?;
    let rec = c.level(k).ok_or_else(|| {
        Error::Precondition(format!(
            "alpha = {} leaves N_{} before level {} ({})",
            alpha.as_f64(),
            c.terminal_k(),
            k,
            c.codes().join(",")
        ))
    })?;
    match rec.lean {
        Some(l) => Ok((l, rec.z.map(|z| z.1))),
        None => Err(Error::Undecided { alpha: alpha.as_f64(), r_max: c.r_max.as_f64() * 2.0 }),
    }
}

/// Bisects `[alpha_lo, alpha_hi]` at level `k` until the width is at most `tol`.
pub fn find_kth_bound_state<T: Real>(
    model: &Model<T>,
    k: usize,
    alpha_lo: T,
    alpha_hi: T,
    tol: T,
    opts: &ShootOptions,
) -> Result<BoundStateBracket> {
    if !(alpha_lo < alpha_hi) || !(tol > T::zero()) {
        return Err(Error::InvalidParameter("need alpha_lo < alpha_hi and tol > 0".into()));
    }
    let (lo_side, _) = lean_at(model, alpha_lo, k, opts)?;
    let (hi_side, mut hi_slope) = lean_at(model, alpha_hi, k, opts)?;
    if lo_side == hi_side {
        return Err(Error::NoBracket(format!(
            "both endpoints lean {:?} at level {k} ({} and {})",
            lo_side,
            alpha_lo.as_f64(),
            alpha_hi.as_f64()
        )));
    }
    let (mut lo, mut hi) = (alpha_lo, alpha_hi);
    let mut lo_slope = None;
    while hi - lo > tol {
        let mid = lo + (hi - lo) * T::lit(0.5);
        if !(mid > lo && mid < hi) {
            break;
        }
        let (side, slope) = lean_at(model, mid, k, opts)?;
        if side == lo_side {
            lo = mid;
            lo_slope = slope;
        } else {
            hi = mid;
            hi_slope = slope;
        }
    }
    let slope = if hi_side == Lean::N { hi_slope } else { lo_slope };
    Ok(BoundStateBracket {
        k,
        lo: lo.as_f64(),
        hi: hi.as_f64(),
        width: (hi - lo).as_f64(),
        alpha_star: ((lo + hi) * T::lit(0.5)).as_f64(),
        lo_side,
        hi_side,
        slope_at_zk: slope.map(Real::as_f64),
    })
}

/// One classified sample of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSample {
    pub alpha: f64,
    pub terminal_k: usize,
    pub membership_code: String,
    /// `Z_k` at the terminal level, or at the last crossing.
    pub z_k: Option<f64>,
    /// `u'(Z_k)` for the same zero.
    pub slope: Option<f64>,
    /// Lean at every level reached.
    pub leans: Vec<Option<Lean>>,
}

/// A change of lean at level `k` between two neighbouring samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub k: usize,
    pub lo: f64,
    pub hi: f64,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub samples: Vec<SweepSample>,
    pub transitions: Vec<Transition>,
    pub brackets: Vec<BoundStateBracket>,
    pub undecided: usize,
}

impl SweepResult {
    pub fn brackets_at(&self, k: usize) -> Vec<&BoundStateBracket> {
        self.brackets.iter().filter(|b| b.k == k).collect()
    }
}

fn sample_of<T: Real>(c: &ClassificationResult<T>) -> SweepSample {
    let term = c.terminal();
    let z = c.levels.iter().rev().find_map(|l| l.z);
    SweepSample {
        alpha: c.alpha.as_f64(),
        terminal_k: c.terminal_k(),
        membership_code: term.membership.code(term.k),
        z_k: z.map(|z| z.0.as_f64()),
        slope: z.map(|z| z.1.as_f64()),
        leans: c.levels.iter().map(|l| l.lean).collect(),
    }
}

/// Depth at which two samples first differ, if they do.
fn first_difference(a: &SweepSample, b: &SweepSample) -> Option<usize> {
    let n = a.leans.len().min(b.leans.len());
    (0..n).find(|&i| a.leans[i] != b.leans[i]).map(|i| i + 1).or_else(|| {
        (a.leans.len() != b.leans.len()).then_some(n + 1)
    })
}

/// Two samples are a single transition when they agree up to one level and
/// at that level one leans `N` and the other `P`.
fn single_transition(a: &SweepSample, b: &SweepSample) -> Option<usize> {
    let k = first_difference(a, b)?;
    let (la, lb) = (a.leans.get(k - 1).copied().flatten(), b.leans.get(k - 1).copied().flatten());
    match (la, lb) {
        (Some(x), Some(y)) if x != y && a.leans.len().abs_diff(b.leans.len()) <= 1 => Some(k),
        _ => None,
    }
}

/// Classifies `alpha_lo + i·step ∈ (alpha_lo, alpha_hi]` in parallel, refines
/// neighbouring samples whose memberships differ by more than one transition,
/// and bisects every `P`/`N` change at levels `1..=k` to a bracket of width `bracket_tol`.
pub fn uniqueness_sweep<T: Real>(
    model: &Model<T>,
    k: usize,
    alpha_lo: T,
    alpha_hi: T,
    step: T,
    bracket_tol: T,
    opts: &ShootOptions,
) -> Result<SweepResult> {
    if !(step > T::zero()) || !(alpha_hi > alpha_lo) {
        return Err(Error::InvalidParameter("sweep needs step > 0 and a nonempty range".into()));
    }
    let n = ((alpha_hi - alpha_lo) / step).floor().to_usize().unwrap_or(0);
    let mut alphas: Vec<T> = (1..=n).map(|i| alpha_lo + step * T::from_count(i)).collect();
    if alphas.last().is_none_or(|&a| a < alpha_hi - step * T::lit(1e-9)) {
        alphas.push(alpha_hi);
    }
    let classify_all = |a: &[T]| -> Result<Vec<SweepSample>> {
        a.par_iter().map(|&x| classify(model, x, k, opts).map(|c| sample_of(&c))).collect()
    };
    let mut samples = classify_all(&alphas)?;
    // Adaptive refinement where neighbours are not separated by a single transition.
    let min_gap = step.as_f64() / 64.0;
    loop {
        let mut extra: Vec<T> = Vec::new();
        for w in samples.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if first_difference(a, b).is_some()
                && single_transition(a, b).is_none()
                && b.alpha - a.alpha > min_gap
                && !a.membership_code.starts_with('U')
                && !b.membership_code.starts_with('U')
            {
                extra.push(T::lit(0.5 * (a.alpha + b.alpha)));
            }
        }
        if extra.is_empty() {
            break;
        }
        samples.extend(classify_all(&extra)?);
        samples.sort_by(|a, b| a.alpha.partial_cmp(&b.alpha).expect("finite"));
    }
    let undecided = samples.iter().filter(|s| s.membership_code.starts_with('U')).count();
    let mut transitions = Vec::new();
    let mut jobs = Vec::new();
    for w in samples.windows(2) {
        if let Some(level) = single_transition(&w[0], &w[1]) {
            transitions.push(Transition {
                k: level,
                lo: w[0].alpha,
                hi: w[1].alpha,
                from: w[0].membership_code.clone(),
                to: w[1].membership_code.clone(),
            });
            jobs.push((level, w[0].alpha, w[1].alpha));
        }
    }
    let brackets = jobs
        .par_iter()
        .map(|&(level, a, b)| find_kth_bound_state(model, level, T::lit(a), T::lit(b), bracket_tol, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { samples, transitions, brackets, undecided })
}

/// Checks on one pair `α₁ < α₂` near a bracket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub alpha1: f64,
    pub alpha2: f64,
    pub z1: Option<f64>,
    pub z2: Option<f64>,
    pub slope1: Option<f64>,
    pub slope2: Option<f64>,
    /// `Z_k(α₁) > Z_k(α₂)`.
    pub zeros_ordered: Option<bool>,
    /// `|u₁'(Z_k(α₁))| < |u₂'(Z_k(α₂))|`.
    pub slopes_ordered: Option<bool>,
    /// Set when a member of the pair is not on the `N`/`G` side at level `k`.
    pub outside_scope: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub k: usize,
    pub delta: f64,
    pub bracket: BoundStateBracket,
    pub pairs: Vec<PairCheck>,
    /// Nearest value beyond the bracket on the `P` side that leaves the double-zero
    /// tolerance band (searched in decades of the bracket width, at most `delta` away),
    /// and its membership code.
    pub p_side_alpha: f64,
    pub p_side_code: String,
    pub p_side_ok: bool,
    pub all_hold: bool,
}

/// Pairs `α₁ < α₂` on the `N` side within `delta` of the bracket, from fractional offsets in `(0, 1)`.
pub fn separation_pairs(bracket: &BoundStateBracket, delta: f64, offsets: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let base = bracket.n_side();
    let dir = if bracket.hi_side == Lean::N { 1.0 } else { -1.0 };
    offsets
        .iter()
        .map(|&(a, b)| {
            let (x, y) = (base + dir * delta * a, base + dir * delta * b);
            (x.min(y), x.max(y))
        })
        .collect()
}

/// Verifies the ordering of `Z_k` and `|u'(Z_k)|` on the given pairs, and that
/// the nearest resolvable value beyond the bracket on the `P` side lies in `P_k`.
pub fn verify_separation<T: Real>(
    model: &Model<T>,
    bracket: &BoundStateBracket,
    delta: f64,
    pairs: &[(f64, f64)],
    opts: &ShootOptions,
) -> Result<SeparationReport> {
    let k = bracket.k;
    let mut checks = Vec::with_capacity(pairs.len());
    for &(a1, a2) in pairs {
        if !(a1 < a2) {
            return Err(Error::Precondition(format!("degenerate pair ({a1}, {a2}): need alpha1 < alpha2")));
        }
        let c1 = classify(model, T::lit(a1), k, opts)?;
        let c2 = classify(model, T::lit(a2), k, opts)?;
        let zk = |c: &ClassificationResult<T>| {
            c.level(k).filter(|l| matches!(l.membership, Membership::N | Membership::GWithinTol)).and_then(|l| l.z)
        };
        let (z1, z2) = (zk(&c1), zk(&c2));
        let outside = match (z1, z2) {
            (Some(_), Some(_)) => None,
            _ => Some(format!(
                "outside proposition scope: memberships {} / {}",
                c1.codes().join(","),
                c2.codes().join(",")
            )),
        };
        let (zeros_ordered, slopes_ordered) = match (z1, z2) {
            (Some(a), Some(b)) => (Some(a.0 > b.0), Some(a.1.abs() < b.1.abs())),
            _ => (None, None),
        };
        checks.push(PairCheck {
            alpha1: a1,
            alpha2: a2,
            z1: z1.map(|z| z.0.as_f64()),
            z2: z2.map(|z| z.0.as_f64()),
            slope1: z1.map(|z| z.1.as_f64()),
            slope2: z2.map(|z| z.1.as_f64()),
            zeros_ordered,
            slopes_ordered,
            outside_scope: outside,
        });
    }
    // Step away from the bracket in decades of its width until the value leaves
    // the double-zero tolerance band, never farther than `delta`.
    let dir = if bracket.hi_side == Lean::N { -1.0 } else { 1.0 };
    let mut dist = bracket.width.max(f64::EPSILON * bracket.p_side().abs());
    let (p_alpha, pc) = loop {
        let d = dist.min(delta);
        let a = bracket.p_side() + dir * d;
        let pc = classify(model, T::lit(a), k, opts)?;
        let in_band = pc.level(k).map(|l| l.membership) == Some(Membership::GWithinTol);
        if !in_band || d >= delta {
            break (a, pc);
        }
        dist *= 10.0;
    };
    let p_code = pc.terminal().membership.code(pc.terminal_k());
    let p_ok = pc.level(k).map(|l| l.membership) == Some(Membership::P)
        || pc.level(k).map(|l| l.membership) == Some(Membership::Ftilde);
    let all_hold = p_ok
        && checks
            .iter()
            .all(|c| c.zeros_ordered == Some(true) && c.slopes_ordered == Some(true));
    Ok(SeparationReport {
        k,
        delta,
        bracket: *bracket,
        pairs: checks,
        p_side_alpha: p_alpha,
        p_side_code: p_code,
        p_side_ok: p_ok,
        all_hold,
    })
}

/// Intersections of two trajectories on `[lo, hi]`: sign changes of `u₁ − u₂`
/// on `samples` points, refined by bisection. Returns `(r_I, U_I)` in order.
pub fn intersection_scan<T: Real>(t1: &Trajectory<T>, t2: &Trajectory<T>, lo: T, hi: T, samples: usize) -> Result<Vec<(T, T)>> {
    let hi = hi.min(t1.r_end()).min(t2.r_end());
    if !(hi > lo) {
        return Ok(Vec::new());
    }
    let d = |r: T| -> Result<T> { Ok(t1.u(r)? - t2.u(r)?) };
    let n = samples.max(2);
    let mut out = Vec::new();
    let mut prev = (lo, sign(d(lo)?));
    for i in 1..=n {
        let r = lo + (hi - lo) * T::from_count(i) / T::from_count(n);
        let s = sign(d(r)?);
        if s == 0 {
            continue;
        }
        if prev.1 != 0 && s != prev.1 {
            let xtol = T::lit(1e-12) * T::one().max(r);
            let (a, b) = bisect_pred(|x| d(x).map(|v| sign(v) == s).unwrap_or(false), prev.0, r, xtol)?;
            let rr = (a + b) * T::lit(0.5);
            out.push((rr, t1.u(rr)?));
        }
        prev = (r, s);
    }
    Ok(out)
}
