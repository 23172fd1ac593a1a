//! Numerical audit of the weight hypotheses (q₁)–(q₇) and nonlinearity hypotheses (f₁)–(f₇).
//!
//! Every condition is sampled on a grid and reduced to a margin whose sign
//! decides the status; see [`crate::model::checks`] for the rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::checks::{mono_margin, strict_status, weak_status, Direction, Status};
use crate::model::constants::{weight_constants, RadialGrid, SupSource, WeightConstants};
use crate::model::nonlinearity::Nonlinearity;
use crate::model::weight::Weight;
use crate::numeric::quad::{integrate, QuadTol};
use crate::numeric::roots::logspace;
use crate::scalar::Real;

/// Version of the JSON report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Sampling plan for the whole audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckerOptions {
    pub grid: RadialGrid,
    /// `s_max = s_max_factor·β` (clipped to the domain).
    pub s_max_factor: f64,
    pub f_points: usize,
}

impl Default for CheckerOptions {
    fn default() -> Self {
        CheckerOptions { grid: RadialGrid::default(), s_max_factor: 100.0, f_points: 2000 }
    }
}

/// One sub-condition of a hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub name: String,
    pub status: Status,
    pub margin: Option<f64>,
    pub witness: Option<f64>,
}

/// Verdict on one hypothesis. Its status is the worst of its parts and its
/// margin the margin of that part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub status: Status,
    pub margin: Option<f64>,
    pub witness_r_or_s: Option<f64>,
    /// For monotonicity hypotheses: whether every sampled difference was strictly signed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strict: Option<bool>,
    pub parts: Vec<Part>,
}

impl HypothesisResult {
    fn from_parts(parts: Vec<Part>, strict: Option<bool>) -> Self {
        let worst = parts
            .iter()
            .max_by(|a, b| {
                a.status.cmp(&b.status).then_with(|| {
                    // Among equals prefer the smallest margin.
                    let (ma, mb) = (a.margin.unwrap_or(f64::INFINITY), b.margin.unwrap_or(f64::INFINITY));
                    mb.partial_cmp(&ma).unwrap_or(std::cmp::Ordering::Equal)
                })
            })
            .cloned();
        let (status, margin, witness) = match worst {
            Some(p) => (p.status, p.margin, p.witness),
            None => (Status::Inconclusive, None, None),
        };
        HypothesisResult { status, margin, witness_r_or_s: witness, strict, parts }
    }
}

/// Limit constants as reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsSummary {
    #[serde(rename = "H_inf")]
    pub h_inf: Option<f64>,
    pub ell_inf: Option<f64>,
    #[serde(rename = "G_bar")]
    pub g_bar: Option<f64>,
    #[serde(rename = "C_q7")]
    pub c_q7: Option<f64>,
    pub a_q7: Option<f64>,
    pub identity_residual: Option<f64>,
    pub g_bar_source: Option<SupSource>,
}

impl<T: Real> From<&WeightConstants<T>> for ConstantsSummary {
    fn from(k: &WeightConstants<T>) -> Self {
        let f = |x: Option<T>| x.map(Real::as_f64);
        ConstantsSummary {
            h_inf: f(k.h_inf),
            ell_inf: f(k.ell_inf),
            g_bar: f(k.g_bar),
            c_q7: f(k.c_q7),
            a_q7: f(k.a_q7),
            identity_residual: f(k.identity_residual),
            g_bar_source: k.g_bar_source,
        }
    }
}

/// Applicability of one uniqueness theorem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub theorem: String,
    pub certified: bool,
    /// What the theorem makes unique.
    pub scope: String,
    pub requires: Vec<String>,
    /// Required hypotheses that are not satisfied.
    pub missing: Vec<String>,
    /// The constant `C` of (q₇)/(f₇), for the k-th bound state theorem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

/// Full audit of one weight/nonlinearity pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub schema_version: u32,
    pub weight: String,
    pub nonlinearity: String,
    pub constants: ConstantsSummary,
    pub hypotheses: BTreeMap<String, HypothesisResult>,
    pub theorem_certificates: Vec<Certificate>,
}

impl HypothesisReport {
    pub fn status(&self, key: &str) -> Option<Status> {
        self.hypotheses.get(key).map(|h| h.status)
    }

    pub fn certified(&self) -> Vec<&str> {
        self.theorem_certificates
            .iter()
            .filter(|c| c.certified)
            .map(|c| c.theorem.as_str())
            .collect()
    }

    pub fn certificate(&self, theorem: &str) -> Option<&Certificate> {
        self.theorem_certificates.iter().find(|c| c.theorem == theorem)
    }
}

fn part(name: &str, status: Status, margin: Option<f64>, witness: Option<f64>) -> Part {
    Part { name: name.to_string(), status, margin, witness }
}

fn strict_part(name: &str, margin: f64, witness: Option<f64>, slack: f64) -> Part {
    part(name, strict_status(margin, slack), Some(margin), witness)
}

fn weak_part(name: &str, margin: f64, witness: Option<f64>, slack: f64) -> Part {
    part(name, weak_status(margin, slack), Some(margin), witness)
}

fn unknown(name: &str) -> Part {
    part(name, Status::Inconclusive, None, None)
}

/// Monotonicity part plus the strictness flag.
fn mono_part<T: Real>(name: &str, vals: &[T], at: &[T], dir: Direction, slack: f64) -> (Part, bool) {
    let (m, i) = mono_margin(vals, dir);
    let w = at.get(i).map(|x| x.as_f64());
    (weak_part(name, m, w, slack), m > slack)
}

/// Index and value of the minimum.
fn argmin<T: Real>(vals: &[T]) -> (usize, T) {
    vals.iter()
        .enumerate()
        .fold((0, T::infinity()), |acc, (i, &v)| if v < acc.1 || v.is_nan() { (i, v) } else { acc })
}

/// Checks (q₁)–(q₇) for `w` using precomputed limit constants.
pub fn check_q_hypotheses<T: Real>(
    w: &Weight<T>,
    k: &WeightConstants<T>,
    grid: &RadialGrid,
) -> Result<BTreeMap<String, HypothesisResult>> {
    let slack = grid.slack;
    let r = grid.radii(w);
    let n = r.len();
    let mut vals = Vec::with_capacity(n);
    for &ri in &r {
        vals.push(w.eval(ri)?);
    }
    let col = |f: &dyn Fn(usize) -> T| (0..n).map(f).collect::<Vec<T>>();
    let log_slope = col(&|i| r[i] * vals[i].q_prime / vals[i].q);
    let mut out = BTreeMap::new();

    // (q₁): q > 0 and q' > 0.
    let (i, m) = argmin(&log_slope);
    out.insert(
        "q1".into(),
        HypothesisResult::from_parts(vec![strict_part("q_prime_positive", m.as_f64(), Some(r[i].as_f64()), slack)], None),
    );

    // (q₂): q'/q strictly decreasing.
    let qq = col(&|i| vals[i].q_prime / vals[i].q);
    let (p, strict) = mono_part("log_derivative_decreasing", &qq, &r, Direction::Decreasing, slack);
    let p = Part { status: strict_status(p.margin.unwrap_or(f64::NAN), slack), ..p };
    out.insert("q2".into(), HypothesisResult::from_parts(vec![p], Some(strict)));

    // (q₃)
    let hh = col(&|i| vals[i].big_h);
    let (p1, s1) = mono_part("H_nonincreasing", &hh, &r, Direction::Decreasing, slack);
    let p2 = strict_part("H0_below_half", 0.5 - hh[0].as_f64(), Some(r[0].as_f64()), slack);
    let mut parts = vec![p1, p2];
    let mut strict = s1;
    match k.h_inf {
        Some(h_inf) => {
            parts.push(strict_part("H_inf_positive", h_inf.as_f64(), None, slack));
            // Samples where H − H∞ is below the extrapolation accuracy carry no sign
            // information and are skipped; if none remain the product is zero.
            let floor = T::lit(1e-12).max(k.h_inf_estimate.spread * T::lit(10.0));
            let keep: Vec<usize> = (0..n).filter(|&i| (hh[i] - h_inf).abs() > floor).collect();
            let v: Vec<T> = keep.iter().map(|&i| vals[i].q * (hh[i] - h_inf)).collect();
            let at: Vec<T> = keep.iter().map(|&i| r[i]).collect();
            let (p, s) = if v.len() < 2 {
                (weak_part("q_times_H_minus_H_inf_nondecreasing", 0.0, None, slack), false)
            } else {
                mono_part("q_times_H_minus_H_inf_nondecreasing", &v, &at, Direction::Increasing, slack)
            };
            strict &= s;
            parts.push(p);
        }
        None => {
            parts.push(unknown("H_inf_positive"));
            parts.push(unknown("q_times_H_minus_H_inf_nondecreasing"));
        }
    }
    out.insert("q3".into(), HypothesisResult::from_parts(parts, Some(strict)));

    // (q₄)
    let hp = col(&|i| vals[i].h_prime);
    let mut parts = vec![
        strict_part(
            "inverse_q_integrable_at_infinity",
            (log_slope[n - 1] - T::one()).as_f64(),
            Some(r[n - 1].as_f64()),
            slack,
        ),
        weak_part(
            "inverse_q_not_integrable_at_zero",
            (log_slope[0] - T::one()).as_f64(),
            Some(r[0].as_f64()),
            slack,
        ),
    ];
    let (i, m) = argmin(&hp);
    parts.push(strict_part("h_prime_positive", m.as_f64(), Some(r[i].as_f64()), slack));
    let (p, strict) = mono_part("h_prime_nonincreasing", &hp, &r, Direction::Decreasing, slack);
    parts.push(p);
    parts.push(match k.ell_inf {
        Some(l) => strict_part("ell_inf_positive", l.as_f64(), None, slack),
        None => unknown("ell_inf_positive"),
    });
    out.insert("q4".into(), HypothesisResult::from_parts(parts, Some(strict)));

    // (q₅): q q' strictly increasing.
    let v = col(&|i| vals[i].q * vals[i].q_prime);
    let (p, strict) = mono_part("q_times_q_prime_increasing", &v, &r, Direction::Increasing, slack);
    let p = Part { status: strict_status(p.margin.unwrap_or(f64::NAN), slack), ..p };
    out.insert("q5".into(), HypothesisResult::from_parts(vec![p], Some(strict)));

    // (q₆)
    let g = col(&|i| vals[i].g);
    let (i, m) = argmin(&g);
    let mut parts = vec![weak_part("G_nonnegative", m.as_f64(), Some(r[i].as_f64()), slack)];
    parts.push(match k.g_bar {
        Some(gb) => part("G_bar_finite", Status::Satisfied, Some(gb.as_f64()), None),
        None => unknown("G_bar_finite"),
    });
    let gt = col(&|i| vals[i].g_tilde);
    let (p, strict) = mono_part("Gtilde_nondecreasing", &gt, &r, Direction::Increasing, slack);
    parts.push(p);
    out.insert("q6".into(), HypothesisResult::from_parts(parts, Some(strict)));

    // (q₇): margin is 1 − C for the pair found, or 1 − Ḡ when Ḡ > 1.
    let p = match (k.g_bar, k.c_q7) {
        (None, _) => unknown("C_a_pair"),
        (Some(gb), _) if gb > T::one() => {
            part("C_a_pair", Status::Violated, Some((T::one() - gb).as_f64()), None)
        }
        (Some(_), Some(c)) => part("C_a_pair", Status::Satisfied, Some((T::one() - c).as_f64()), None),
        (Some(_), None) => unknown("C_a_pair"),
    };
    out.insert("q7".into(), HypothesisResult::from_parts(vec![p], None));
    Ok(out)
}

/// Checks (f₁)–(f₇); (f₃), (f₆), (f₇) use the weight constants.
pub fn check_f_hypotheses<T: Real>(
    nl: &Nonlinearity<T>,
    k: &WeightConstants<T>,
    opts: &CheckerOptions,
) -> Result<BTreeMap<String, HypothesisResult>> {
    let slack = opts.grid.slack;
    let (b, beta) = (nl.b, nl.beta);
    let s_max = (T::lit(opts.s_max_factor) * beta).min(nl.c * (T::one() - T::lit(1e-9)));
    let n = opts.f_points.max(16);
    let above_beta = logspace(beta * T::lit(1.0 + 1e-6), s_max, n);
    let above_b = logspace(b * T::lit(1.0 + 1e-6), s_max, n);
    let below_b = logspace(b * T::lit(1e-6), b * T::lit(1.0 - 1e-9), n);
    let tails = nl.tail_limits();
    let mut out = BTreeMap::new();

    // (f₁)
    let mut odd_defect = T::zero();
    for &s in below_b.iter().chain(&above_b) {
        let (fp, fm) = (nl.f(s), nl.f(-s));
        odd_defect = odd_defect.max((fp + fm).abs() / fp.abs().max(T::min_positive_value()));
    }
    let odd_defect = odd_defect.as_f64();
    let mut parts = vec![part(
        "odd",
        if odd_defect <= 1e-12 { Status::Satisfied } else { Status::Violated },
        Some(-odd_defect),
        None,
    )];
    let order = b.min(beta - b).min(nl.c - beta) / beta;
    parts.push(strict_part("zeros_ordered", order.as_f64(), None, slack));
    let fa: Vec<T> = above_b.iter().map(|&s| nl.f(s)).collect();
    let (i, m) = argmin(&fa);
    parts.push(strict_part("positive_above_b", m.as_f64(), Some(above_b[i].as_f64()), 0.0));
    let fb: Vec<T> = below_b.iter().map(|&s| nl.f(s)).collect();
    let neg: Vec<T> = fb.iter().map(|&v| -v).collect();
    let (i, m) = argmin(&neg);
    parts.push(weak_part("nonpositive_below_b", m.as_f64(), Some(below_b[i].as_f64()), 0.0));
    let amp = fb.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    parts.push(strict_part("not_identically_zero_below_b", amp.as_f64(), None, 0.0));
    out.insert("f1".into(), HypothesisResult::from_parts(parts, None));

    // (f₂)
    let all: Vec<T> = below_b.iter().chain(&above_b).copied().collect();
    let bad = all.iter().find(|&&s| !nl.df(s).is_finite());
    let mut parts = vec![match bad {
        Some(&s) => part("df_finite", Status::Violated, None, Some(s.as_f64())),
        None => part("df_finite", Status::Satisfied, None, None),
    }];
    let one = T::one().min(nl.c * T::lit(0.5));
    let tol = QuadTol { rel: 1e-8, abs: 1e-14, max_intervals: 2000 };
    parts.push(match integrate(|s| nl.df(s).abs(), T::zero(), one, tol) {
        Ok(v) if v.is_finite() => part("df_integrable_near_zero", Status::Satisfied, Some(v.as_f64()), None),
        _ => unknown("df_integrable_near_zero"),
    });
    // Central differences of f against the supplied f'.
    let mut worst = (0.0f64, None);
    for &s in all.iter().step_by((n / 20).max(1)) {
        let e = T::lit(1e-5) * s;
        let fd = (nl.f(s + e) - nl.f(s - e)) / (e + e);
        let d = nl.df(s);
        let rel = ((fd - d).abs() / T::one().max(d.abs())).as_f64();
        if rel > worst.0 {
            worst = (rel, Some(s.as_f64()));
        }
    }
    parts.push(part(
        "df_matches_f",
        if worst.0 <= 1e-5 { Status::Satisfied } else { Status::Violated },
        Some(-worst.0),
        worst.1,
    ));
    out.insert("f2".into(), HypothesisResult::from_parts(parts, None));

    // Minimum of (F/f)' above β, including the analytic tail limit.
    let ratio_prime: Vec<T> = above_beta.iter().map(|&s| nl.f_ratio_prime(s)).collect();
    let (i, mut rp_min) = argmin(&ratio_prime);
    let mut rp_at = Some(above_beta[i].as_f64());
    if let Some((lim, _)) = tails {
        if lim < rp_min {
            rp_min = lim;
            rp_at = None;
        }
    }

    // (f₃)
    let p = match k.h_inf {
        Some(h_inf) => {
            let thr = T::lit(0.5) * (T::one() - T::lit(2.0) * h_inf);
            strict_part("ratio_prime_above_threshold", (rp_min - thr).as_f64(), rp_at, slack)
        }
        None => unknown("ratio_prime_above_threshold"),
    };
    out.insert("f3".into(), HypothesisResult::from_parts(vec![p], None));

    // (f₄)
    let sr: Vec<T> = above_b.iter().map(|&s| s * nl.df(s) / nl.f(s)).collect();
    let (p, strict) = mono_part("s_df_over_f_decreasing", &sr, &above_b, Direction::Decreasing, slack);
    let mut parts = vec![p];
    if let Some((_, p_lim)) = tails {
        let last = sr[sr.len() - 1];
        parts.push(weak_part("tail_above_limit", ((last - p_lim) / p_lim).as_f64(), None, slack));
    }
    out.insert("f4".into(), HypothesisResult::from_parts(parts, Some(strict)));

    // (f₅): f − f'(s−b) ≥ 0, normalized by |f| + |f'(s−b)|.
    let v: Vec<T> = above_b
        .iter()
        .map(|&s| {
            let (f, g) = (nl.f(s), nl.df(s) * (s - b));
            (f - g) / (f.abs() + g.abs())
        })
        .collect();
    let (i, m) = argmin(&v);
    let mut parts = vec![weak_part("f_above_tangent_from_b", m.as_f64(), Some(above_b[i].as_f64()), slack)];
    if let Some((_, p_lim)) = tails {
        let lim = (T::one() - p_lim) / (T::one() + p_lim);
        parts.push(weak_part("tail_limit", lim.as_f64(), None, slack));
    }
    out.insert("f5".into(), HypothesisResult::from_parts(parts, None));

    // (f₆)
    let p = match k.ell_inf {
        Some(l) => {
            let lhs = beta * nl.df(beta) / nl.f(beta);
            let m = T::one() + T::lit(2.0) * l - lhs;
            strict_part("beta_slope_below_bound", m.as_f64(), Some(beta.as_f64()), slack)
        }
        None => unknown("beta_slope_below_bound"),
    };
    out.insert("f6".into(), HypothesisResult::from_parts(vec![p], None));

    // (f₇)
    let p = match k.c_q7 {
        Some(c) => strict_part("ratio_prime_above_C", (rp_min - c).as_f64(), rp_at, slack),
        None => unknown("ratio_prime_above_C"),
    };
    out.insert("f7".into(), HypothesisResult::from_parts(vec![p], None));
    Ok(out)
}

/// Theorem hypothesis lists and the scope of each uniqueness claim.
pub const THEOREMS: [(&str, &str, &[&str]); 5] = [
    ("theorem_1", "ground_state", &["f1", "f2", "q1", "q2", "q3", "f3"]),
    ("theorem_2", "ground_state", &["f1", "f2", "q1", "q2", "q4", "f4"]),
    (
        "theorem_3_i",
        "ground_state_and_one_sign_change",
        &["f1", "f2", "q1", "q2", "q3", "q4", "q5", "f3", "f5"],
    ),
    (
        "theorem_3_ii",
        "ground_state_and_one_sign_change",
        &["f1", "f2", "q1", "q2", "q3", "q4", "q5", "f4", "f6"],
    ),
    ("theorem_4", "k_sign_changes_every_k", &["f1", "f2", "q1", "q2", "q4", "q6", "q7", "f7"]),
];

/// Issues a certificate for each theorem whose hypotheses are all satisfied.
pub fn certify_theorems(
    hypotheses: &BTreeMap<String, HypothesisResult>,
    constants: &ConstantsSummary,
) -> Vec<Certificate> {
    THEOREMS
        .iter()
        .map(|&(name, scope, req)| {
            let missing: Vec<String> = req
                .iter()
                .filter(|h| hypotheses.get(**h).map(|r| r.status) != Some(Status::Satisfied))
                .map(|h| h.to_string())
                .collect();
            let certified = missing.is_empty();
            Certificate {
                theorem: name.to_string(),
                certified,
                scope: scope.to_string(),
                requires: req.iter().map(|h| h.to_string()).collect(),
                missing,
                c: if name == "theorem_4" && certified { constants.c_q7 } else { None },
            }
        })
        .collect()
}

/// Runs the full audit for a weight/nonlinearity pair.
pub fn audit<T: Real>(w: &Weight<T>, nl: &Nonlinearity<T>, opts: &CheckerOptions) -> Result<HypothesisReport> {
    let k = weight_constants(w, &opts.grid)?;
    let mut hypotheses = check_q_hypotheses(w, &k, &opts.grid)?;
    hypotheses.extend(check_f_hypotheses(nl, &k, opts)?);
    let constants = ConstantsSummary::from(&k);
    let theorem_certificates = certify_theorems(&hypotheses, &constants);
    Ok(HypothesisReport {
        schema_version: REPORT_SCHEMA_VERSION,
        weight: w.label(),
        nonlinearity: nl.family.label(),
        constants,
        hypotheses,
        theorem_certificates,
    })
}
