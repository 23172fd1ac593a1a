//! The seven commands. Each computes everything first and writes files last.

use std::fmt::Write as _;
use std::path::Path;

use boundstate::classify::{
    classify, find_kth_bound_state, separation_pairs, uniqueness_sweep, verify_separation, BoundStateBracket, Decision,
    Lean, Membership, SweepSample, Transition,
};
use boundstate::functionals::{branch_inverse, monotonicity_monitor, trace, BranchDirection, Functional, MonitorReport, TraceSample};
use boundstate::model::{audit, check_f_hypotheses, weight_constants, Model, Status};
use boundstate::shoot::{integrate, EventKind, StopReason};
use boundstate::variation::{check_phi_propositions, integrate_variation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RunConfig};
use crate::output::{WriteError, Writer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Check,
    Solve,
    Classify,
    Find,
    Sweep,
    Trace,
    Separation,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Solve => "solve",
            Command::Classify => "classify",
            Command::Find => "find",
            Command::Sweep => "sweep",
            Command::Trace => "trace",
            Command::Separation => "separation",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Write(WriteError),
    Numeric(boundstate::Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<WriteError> for CliError {
    fn from(e: WriteError) -> Self {
        CliError::Write(e)
    }
}

impl From<boundstate::Error> for CliError {
    fn from(e: boundstate::Error) -> Self {
        CliError::Numeric(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Write(e) => write!(f, "io error: {e}"),
            CliError::Numeric(e) => write!(f, "{}: {e}", e.code()),
        }
    }
}

/// What a successful run reports back.
#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: String,
    /// An undecided classification, or an unmet prerequisite for `check`.
    pub undecided: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub r: f64,
    pub u: f64,
    pub uprime: f64,
    #[serde(rename = "I")]
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventOut {
    pub kind: EventKind,
    pub r: f64,
    pub value_slope: f64,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationRow {
    pub r: f64,
    pub phi: f64,
    pub phiprime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelOut {
    pub k: usize,
    pub code: String,
    pub membership: Membership,
    pub lean: Option<Lean>,
    pub decided_by: Decision,
    #[serde(rename = "Z_k")]
    pub z_k: Option<f64>,
    pub slope: Option<f64>,
    #[serde(rename = "T_k")]
    pub t_k: Option<f64>,
    pub u_at_t_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationOut {
    pub alpha: f64,
    pub k_max: usize,
    pub r_max: f64,
    pub terminal: String,
    pub undecided: bool,
    pub levels: Vec<LevelOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub terminal_k: usize,
    pub membership_code: String,
    #[serde(rename = "Z_k")]
    pub z_k: Option<f64>,
    pub slope: Option<f64>,
}

impl From<&SweepSample> for SweepRow {
    fn from(s: &SweepSample) -> Self {
        SweepRow {
            alpha: s.alpha,
            terminal_k: s.terminal_k,
            membership_code: s.membership_code.clone(),
            z_k: s.z_k,
            slope: s.slope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub k: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub step: f64,
    pub samples: usize,
    pub undecided: usize,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub alpha: f64,
    pub alpha2: Option<f64>,
    pub functional: Functional,
    pub branch: usize,
    pub direction: BranchDirection,
    pub s_lo: f64,
    pub s_hi: f64,
    pub excluded: usize,
    /// Largest relative analytic/finite-difference gap away from the branch ends, and where.
    pub max_derivative_mismatch: Option<(f64, f64)>,
    pub monitor: MonitorReport,
}

pub const TRAJECTORY_COLUMNS: [&str; 4] = ["r", "u", "uprime", "I"];
pub const VARIATION_COLUMNS: [&str; 3] = ["r", "phi", "phiprime"];
pub const SWEEP_COLUMNS: [&str; 5] = ["alpha", "terminal_k", "membership_code", "Z_k", "slope"];
pub const TRACE_COLUMNS: [&str; 4] = ["s", "value", "derivative_analytic", "derivative_fd"];

/// Samples farther than this fraction of the branch width from either end enter the mismatch figure.
const END_MARGIN: f64 = 1e-4;

pub fn run(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let mut w = Writer::new(out, &cfg.hash(), cmd.name())?;
    match cmd {
        Command::Check => check(cfg, &model, &mut w),
        Command::Solve => solve(cfg, &model, &mut w),
        Command::Classify => run_classify(cfg, &model, &mut w),
        Command::Find => find(cfg, &model, &mut w),
        Command::Sweep => sweep(cfg, &model, &mut w),
        Command::Trace => run_trace(cfg, &model, &mut w),
        Command::Separation => separation(cfg, &model, &mut w),
    }
}

fn need<T>(v: Option<T>, key: &str) -> Result<T, ConfigError> {
    v.ok_or_else(|| ConfigError::new(key, "required by this command"))
}

fn range(cfg: &RunConfig, model: &Model<f64>) -> Result<(f64, f64), ConfigError> {
    let lo = cfg.run.alpha_min.resolve(model);
    let hi = need(cfg.run.alpha_max, "run.alpha_max")?.resolve(model);
    if !(lo < hi) {
        return Err(ConfigError::new("run.alpha_max", format!("empty range [{lo}, {hi}]")));
    }
    Ok((lo, hi))
}

fn check(cfg: &RunConfig, model: &Model<f64>, w: &mut Writer) -> Result<Outcome, CliError> {
    let rep = audit(&model.weight, &model.nl, &cfg.checker)?;
    let mut s = format!("{} with {}\n", rep.weight, rep.nonlinearity);
    for (name, h) in &rep.hypotheses {
        let margin = h.margin.map_or("-".to_string(), |m| format!("{:.6e}", m + 0.0));
        let _ = writeln!(s, "  {name:<4} {:<13} margin {margin}", format!("{:?}", h.status).to_lowercase());
    }
    let certified = rep.certified();
    for c in &rep.theorem_certificates {
        let extra = c.c.map_or(String::new(), |c| format!(" (C = {c})"));
        let state = if c.certified { "certified".to_string() } else { format!("missing {}", c.missing.join(",")) };
        let _ = writeln!(s, "  {:<12} {state}{extra}", c.theorem);
    }
    let _ = write!(s, "certificates: {}", if certified.is_empty() { "none".to_string() } else { certified.join(", ") });
    let undecided = certified.is_empty();
    w.json("report.json", &rep)?;
    Ok(Outcome { summary: s, undecided })
}

fn solve(cfg: &RunConfig, model: &Model<f64>, w: &mut Writer) -> Result<Outcome, CliError> {
    let alpha = need(cfg.run.alpha, "run.alpha")?;
    let traj = integrate(model, alpha, &cfg.shoot)?;
    let mut rows = vec![TrajectoryRow { r: 0.0, u: alpha, uprime: 0.0, energy: model.energy(alpha, 0.0) }];
    rows.extend(
        traj.nodes()
            .into_iter()
            .map(|(r, u, up)| TrajectoryRow { r, u, uprime: up, energy: model.energy(u, up) }),
    );
    let events: Vec<EventOut> =
        traj.events.iter().map(|e| EventOut { kind: e.kind, r: e.r, value_slope: e.value_slope, k: e.k }).collect();
    let zeros = traj.u_zeros().count();
    let stop = match traj.stop {
        StopReason::DoubleZero => "double zero",
        StopReason::Horizon => "horizon",
        StopReason::Requested => "requested",
    };
    let mut summary = format!(
        "alpha = {alpha}: {} nodes, {zeros} zeros of u, stopped at r = {} ({stop}), max energy increase {:.3e}",
        rows.len(),
        traj.r_end(),
        traj.max_energy_increase()
    );

    let variation = if cfg.run.variation {
        let vt = integrate_variation(model, alpha, &cfg.shoot)?;
        let k = weight_constants(&model.weight, &cfg.checker.grid)?;
        let f = check_f_hypotheses(&model.nl, &k, &cfg.checker)?;
        let f6 = f.get("f6").map(|h| h.status) == Some(Status::Satisfied);
        let report = check_phi_propositions(model, &vt, f6)?;
        let vrows: Vec<VariationRow> =
            vt.nodes().into_iter().map(|(r, phi, phiprime)| VariationRow { r, phi, phiprime }).collect();
        let _ = write!(summary, "\nfirst zero of phi: {:?}", report.r1);
        Some((vrows, report))
    } else {
        None
    };

    w.csv("trajectory.csv", &rows, &TRAJECTORY_COLUMNS)?;
    w.json("events.json", &events)?;
    if let Some((vrows, report)) = variation {
        w.csv("variation.csv", &vrows, &VARIATION_COLUMNS)?;
        w.json("phi_report.json", &report)?;
    }
    Ok(Outcome { summary, undecided: false })
}

fn run_classify(cfg: &RunConfig, model: &Model<f64>, w: &mut Writer) -> Result<Outcome, CliError> {
    let alpha = need(cfg.run.alpha, "run.alpha")?;
    let c = classify(model, alpha, cfg.run.k, &cfg.shoot)?;
    let levels = c
        .levels
        .iter()
        .map(|l| LevelOut {
            k: l.k,
            code: l.membership.code(l.k),
            membership: l.membership,
            lean: l.lean,
            decided_by: l.decided_by,
            z_k: l.z.map(|z| z.0),
            slope: l.z.map(|z| z.1),
            t_k: l.t.map(|t| t.0),
            u_at_t_k: l.t.map(|t| t.1),
        })
        .collect();
    let out = ClassificationOut {
        alpha,
        k_max: cfg.run.k,
        r_max: c.r_max,
        terminal: c.terminal().membership.code(c.terminal_k()),
        undecided: c.is_undecided(),
        levels,
    };
    let summary = format!("alpha = {alpha}: {}", c.codes().join(" "));
    w.json("classification.json", &out)?;
    Ok(Outcome { summary, undecided: out.undecided })
}

fn bracket_line(b: &BoundStateBracket) -> String {
    format!("k = {}: alpha* = {:.12} in [{:.12}, {:.12}] (width {:.1e})", b.k, b.alpha_star, b.lo, b.hi, b.width)
}

fn find(cfg: &RunConfig, model: &Model<f64>, w: &mut Writer) -> Result<Outcome, CliError> {
    let (lo, hi) = range(cfg, model)?;
    let b = find_kth_bound_state(model, cfg.run.k, lo, hi, cfg.run.bracket_tol, &cfg.shoot)?;
    w.json("bracket.json", &b)?;
    Ok(Outcome { summary: bracket_line(&b), undecided: false })
}

fn sweep(cfg: &RunConfig, model: &Model<f64>, w: &mut Writer) -> Result<Outcome, CliError> {
    let (lo, hi) = range(cfg, model)?;
    let res = uniqueness_sweep(model, cfg.run.k, lo, hi, cfg.run.step, cfg.run.bracket_tol, &cfg.shoot)?;
    let rows: Vec<SweepRow> = res.samples.iter().map(SweepRow::from).collect();
    let summary_data = SweepSummary {
        k: cfg.run.k,
        alpha_min: lo,
        alpha_max: hi,
        step: cfg.run.step,
        samples: rows.len(),
        undecided: res.undecided,
        transitions: res.transitions.clone(),
    };
    let mut summary = format!(
        "{} samples on [{lo}, {hi}], {} transitions, {} brackets, {} undecided",
        rows.len(),
        res.transitions.len(),
        res.brackets.len(),
        res.undecided
    );
    for b in &res.brackets {
        let _ = write!(summary, "\n  {}", bracket_line(b));
    }
    w.csv("sweep.csv", &rows, &SWEEP_COLUMNS)?;
    w.json("brackets.json", &res.brackets)?;
    w.json("transitions.json", &summary_data)?;
    Ok(Outcome { summary, undecided: res.undecided > 0 })
}

fn run_trace(cfg: &RunConfig, model: &Model<f64>, w: &mut Writer) -> Result<Outcome, CliError> {
    let name = need(cfg.run.functional.as_deref(), "run.functional")?;
    let which = Functional::parse(name).ok_or_else(|| {
        let names: Vec<&str> = Functional::ALL.iter().map(|f| f.name()).collect();
        ConfigError::new("run.functional", format!("unknown functional `{name}` (expected one of {})", names.join(", ")))
    })?;
    let direction = match (which.direction(), cfg.run.direction.as_deref()) {
        (Some(d), None) => d,
        (Some(d), Some(given)) => {
            let g = if given == "up" { BranchDirection::Up } else { BranchDirection::Down };
            if g != d {
                return Err(ConfigError::new("run.direction", format!("{} is defined on {d:?} branches", which.name())).into());
            }
            d
        }
        (None, Some("up")) => BranchDirection::Up,
        (None, _) => BranchDirection::Down,
    };
    let alpha = need(cfg.run.alpha, "run.alpha")?;
    let alpha2 = if which.needs_pair() { Some(need(cfg.run.alpha2, "run.alpha2")?) } else { None };
    let t1 = integrate(model, alpha, &cfg.shoot)?;
    let t2 = alpha2.map(|a| integrate(model, a, &cfg.shoot)).transpose()?;
    let inv1 = branch_inverse(&t1, cfg.run.branch, direction)?;
    let inv2 = t2.as_ref().map(|t| branch_inverse(t, cfg.run.branch, direction)).transpose()?;
    let range = match (cfg.run.s_min, cfg.run.s_max) {
        (None, None) => None,
        (a, b) => Some((a.unwrap_or(inv1.s_lo), b.unwrap_or(inv1.s_hi))),
    };
    let tr = trace(model, which, &inv1, inv2.as_ref(), cfg.run.samples, range)?;

    let certified = match which {
        Functional::P | Functional::Pbar | Functional::T | Functional::Tbar => {
            let rep = audit(&model.weight, &model.nl, &cfg.checker)?;
            let key = if matches!(which, Functional::T | Functional::Tbar) { Some("theorem_4") } else { None };
            match key {
                Some(t) => rep.certificate(t).is_some_and(|c| c.certified),
                None => !rep.certified().is_empty(),
            }
        }
        _ => false,
    };
    let monitor = monotonicity_monitor(model, &tr, certified);
    let report = TraceReport {
        alpha,
        alpha2,
        functional: which,
        branch: cfg.run.branch,
        direction,
        s_lo: tr.s_lo,
        s_hi: tr.s_hi,
        excluded: tr.excluded,
        max_derivative_mismatch: tr.max_derivative_mismatch(1e-12, END_MARGIN),
        monitor,
    };
    let mut summary = format!(
        "{} on branch {} ({direction:?}) over [{:.6}, {:.6}]: {} samples, {} excluded",
        which.name(),
        cfg.run.branch,
        tr.s_lo,
        tr.s_hi,
        tr.samples.len(),
        tr.excluded
    );
    if let Some((m, s)) = report.max_derivative_mismatch {
        let _ = write!(summary, "\n  derivative mismatch {m:.2e} at s = {s:.6}");
    }
    if report.monitor.applied {
        let _ = write!(
            summary,
            "\n  monitor `{}`: {} (hypotheses certified: {})",
            report.monitor.claim,
            if report.monitor.holds { "holds" } else { "violated" },
            report.monitor.hypotheses_certified
        );
    }
    let rows: &[TraceSample] = &tr.samples;
    w.csv(&format!("trace_{}.csv", which.name()), rows, &TRACE_COLUMNS)?;
    w.json("monitor.json", &report)?;
    Ok(Outcome { summary, undecided: false })
}

/// Fractional offsets in `(0, 1)` for the separation pairs, drawn from the run seed.
pub fn pair_offsets(seed: u64, n: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let a: f64 = rng.gen_range(0.05..0.95);
            let b: f64 = rng.gen_range(0.05..0.95);
            if (a - b).abs() < 0.01 {
                (a.min(b), a.min(b) + 0.02)
            } else {
                (a, b)
            }
        })
        .collect()
}

fn separation(cfg: &RunConfig, model: &Model<f64>, w: &mut Writer) -> Result<Outcome, CliError> {
    let (lo, hi) = range(cfg, model)?;
    let b = find_kth_bound_state(model, cfg.run.k, lo, hi, cfg.run.bracket_tol, &cfg.shoot)?;
    let pairs = separation_pairs(&b, cfg.run.delta, &pair_offsets(cfg.seed, cfg.run.pairs));
    let rep = verify_separation(model, &b, cfg.run.delta, &pairs, &cfg.shoot)?;
    let ok = rep.pairs.iter().filter(|p| p.zeros_ordered == Some(true) && p.slopes_ordered == Some(true)).count();
    let summary = format!(
        "{}\n  {ok}/{} pairs ordered; alpha = {} beyond the bracket classifies {}; all hold: {}",
        bracket_line(&b),
        rep.pairs.len(),
        rep.p_side_alpha,
        rep.p_side_code,
        rep.all_hold
    );
    w.json("separation.json", &rep)?;
    Ok(Outcome { summary, undecided: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_seeded_and_distinct() {
        let a = pair_offsets(7, 5);
        assert_eq!(a, pair_offsets(7, 5));
        assert_ne!(a, pair_offsets(8, 5));
        for (x, y) in a {
            assert!(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0 && (x - y).abs() >= 0.01);
        }
    }
}
