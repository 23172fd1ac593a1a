//! Run configuration: one TOML file, read key by key so that every error names its path.
//!
//! ```toml
//! [weight]
//! family = "power"          # power | power_sum | piecewise_log | tabulated
//! theta = 2.0
//! # c = 1.0                 # power_sum
//! # r0 = 7.389, mu = 2.5    # piecewise_log; either may be omitted
//! # table = "q.csv"         # tabulated: CSV with columns r,q,q_prime
//!
//! [nonlinearity]
//! family = "power_minus_linear"
//! p = 3.0
//!
//! [checker]                 # optional overrides of the hypothesis audit grid
//! [shoot]                   # tol, r_max, max_steps
//! [run]                     # command parameters, see RunOptions
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use boundstate::model::{CheckerOptions, Model, Nonlinearity, Weight, WeightSpec};
use boundstate::shoot::ShootOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

/// A configuration problem located at a dotted key path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { key: key.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = Result<T, ConfigError>;

/// Bound of an α range: a number, or one of the zeros `b`, `β` of the nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaBound {
    Value(f64),
    B,
    Beta,
}

impl AlphaBound {
    pub fn resolve(self, model: &Model<f64>) -> f64 {
        match self {
            AlphaBound::Value(v) => v,
            AlphaBound::B => model.nl.b,
            AlphaBound::Beta => model.nl.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityConfig {
    pub family: String,
    pub p: f64,
}

/// Command parameters. Which keys a command needs is checked when it runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub alpha: Option<f64>,
    /// Second initial value for paired functionals (`S12`, `S12bar`).
    pub alpha2: Option<f64>,
    /// Bound-state level for find, sweep and separation; classification depth otherwise.
    pub k: usize,
    pub alpha_min: AlphaBound,
    pub alpha_max: Option<AlphaBound>,
    pub step: f64,
    pub bracket_tol: f64,
    pub delta: f64,
    pub pairs: usize,
    pub functional: Option<String>,
    pub branch: usize,
    pub direction: Option<String>,
    pub samples: usize,
    pub s_min: Option<f64>,
    pub s_max: Option<f64>,
    pub variation: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            alpha: None,
            alpha2: None,
            k: 1,
            alpha_min: AlphaBound::B,
            alpha_max: None,
            step: 0.01,
            bracket_tol: 1e-10,
            delta: 1e-3,
            pairs: 5,
            functional: None,
            branch: 1,
            direction: None,
            samples: 256,
            s_min: None,
            s_max: None,
            variation: false,
        }
    }
}

/// The effective configuration of one run. Its canonical JSON is what gets hashed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub weight: WeightSpec<f64>,
    pub nonlinearity: NonlinearityConfig,
    pub checker: CheckerOptions,
    pub shoot: ShootOptions,
    pub run: RunOptions,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> CResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses `text`; relative table paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> CResult<Self> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::new("", e.message().to_string()))?;
        let mut top = Section::new("", &root);
        let weight = parse_weight(&mut top.table("weight")?.ok_or_else(|| missing("weight"))?, base)?;
        let nonlinearity = parse_nonlinearity(&mut top.table("nonlinearity")?.ok_or_else(|| missing("nonlinearity"))?)?;
        let checker = match top.table("checker")? {
            Some(mut s) => parse_checker(&mut s)?,
            None => CheckerOptions::default(),
        };
        let shoot = match top.table("shoot")? {
            Some(mut s) => parse_shoot(&mut s)?,
            None => ShootOptions::default(),
        };
        let run = match top.table("run")? {
            Some(mut s) => parse_run(&mut s)?,
            None => RunOptions::default(),
        };
        let seed = top.int("seed")?.map_or(Ok(0), |v| u64::try_from(v).map_err(|_| invalid("seed", "must be nonnegative")))?;
        top.finish()?;
        Ok(RunConfig { weight, nonlinearity, checker, shoot, run, seed })
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json))
    }

    pub fn model(&self) -> CResult<Model<f64>> {
        let w = Weight::new(self.weight.clone()).map_err(|e| ConfigError::new("weight", e.to_string()))?;
        let nl = match self.nonlinearity.family.as_str() {
            "power_minus_linear" => Nonlinearity::power_minus_linear(self.nonlinearity.p)
                .map_err(|e| ConfigError::new("nonlinearity", e.to_string()))?,
            other => return Err(invalid("nonlinearity.family", &format!("unknown family `{other}`"))),
        };
        Ok(Model::new(w, nl))
    }
}

fn missing(key: &str) -> ConfigError {
    ConfigError::new(key, "missing required key")
}

fn invalid(key: &str, msg: &str) -> ConfigError {
    ConfigError::new(key, msg)
}

/// A table being consumed; unread keys are reported by [`Section::finish`].
struct Section<'a> {
    prefix: String,
    table: &'a Table,
    seen: BTreeSet<String>,
}

impl<'a> Section<'a> {
    fn new(prefix: &str, table: &'a Table) -> Self {
        Section { prefix: prefix.to_string(), table, seen: BTreeSet::new() }
    }

    fn path(&self, key: &str) -> String {
        if self.prefix.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.prefix)
        }
    }

    fn get(&mut self, key: &str) -> Option<&'a Value> {
        self.seen.insert(key.to_string());
        self.table.get(key)
    }

    fn table(&mut self, key: &str) -> CResult<Option<Section<'a>>> {
        let path = self.path(key);
        match self.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Section::new(&path, t))),
            Some(_) => Err(invalid(&path, "expected a table")),
        }
    }

    fn float(&mut self, key: &str) -> CResult<Option<f64>> {
        let path = self.path(key);
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(invalid(&path, "expected a number")),
        }
    }

    fn positive(&mut self, key: &str) -> CResult<Option<f64>> {
        let path = self.path(key);
        match self.float(key)? {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(invalid(&path, "must be positive and finite")),
            v => Ok(v),
        }
    }

    fn required(&mut self, key: &str) -> CResult<f64> {
        let path = self.path(key);
        self.float(key)?.ok_or_else(|| missing(&path))
    }

    fn int(&mut self, key: &str) -> CResult<Option<i64>> {
        let path = self.path(key);
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(*i)),
            Some(_) => Err(invalid(&path, "expected an integer")),
        }
    }

    fn count(&mut self, key: &str, min: usize) -> CResult<Option<usize>> {
        let path = self.path(key);
        match self.int(key)? {
            None => Ok(None),
            Some(i) if i >= min as i64 => Ok(Some(i as usize)),
            Some(_) => Err(invalid(&path, &format!("must be an integer >= {min}"))),
        }
    }

    fn string(&mut self, key: &str) -> CResult<Option<&'a str>> {
        let path = self.path(key);
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(_) => Err(invalid(&path, "expected a string")),
        }
    }

    fn boolean(&mut self, key: &str) -> CResult<Option<bool>> {
        let path = self.path(key);
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(invalid(&path, "expected true or false")),
        }
    }

    fn bound(&mut self, key: &str) -> CResult<Option<AlphaBound>> {
        let path = self.path(key);
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(AlphaBound::Value(*x))),
            Some(Value::Integer(i)) => Ok(Some(AlphaBound::Value(*i as f64))),
            Some(Value::String(s)) if s == "b" => Ok(Some(AlphaBound::B)),
            Some(Value::String(s)) if s == "beta" => Ok(Some(AlphaBound::Beta)),
            Some(_) => Err(invalid(&path, "expected a number, \"b\" or \"beta\"")),
        }
    }

    fn finish(&self) -> CResult<()> {
        match self.table.keys().find(|k| !self.seen.contains(*k)) {
            Some(k) => Err(invalid(&self.path(k), "unknown key")),
            None => Ok(()),
        }
    }
}

fn parse_weight(s: &mut Section<'_>, base: &Path) -> CResult<WeightSpec<f64>> {
    let family = s.string("family")?.ok_or_else(|| missing("weight.family"))?;
    let spec = match family {
        "power" => WeightSpec::Power { theta: s.required("theta")? },
        "power_sum" => WeightSpec::PowerSum { theta: s.required("theta")?, c: s.required("c")? },
        "piecewise_log" => {
            let theta = s.required("theta")?;
            match (s.float("r0")?, s.float("mu")?) {
                (Some(r0), Some(mu)) => WeightSpec::PiecewiseLog { theta, mu, r0 },
                (Some(r0), None) => WeightSpec::piecewise_log(theta, r0),
                (None, Some(mu)) => {
                    if !(mu > theta) {
                        return Err(invalid("weight.mu", "must exceed weight.theta"));
                    }
                    WeightSpec::PiecewiseLog { theta, mu, r0: (1.0 / (mu - theta)).exp() }
                }
                (None, None) => WeightSpec::piecewise_log_default(theta),
            }
        }
        "tabulated" => {
            let rel = s.string("table")?.ok_or_else(|| missing("weight.table"))?;
            read_table(&base.join(rel))?
        }
        other => return Err(invalid("weight.family", &format!("unknown family `{other}`"))),
    };
    s.finish()?;
    Ok(spec)
}

#[derive(Deserialize)]
struct TableRow {
    r: f64,
    q: f64,
    q_prime: f64,
}

fn read_table(path: &PathBuf) -> CResult<WeightSpec<f64>> {
    let err = |m: String| ConfigError::new("weight.table", m);
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(format!("{}: {e}", path.display())))?;
    let (mut r, mut q, mut q_prime) = (Vec::new(), Vec::new(), Vec::new());
    for row in rd.deserialize() {
        let row: TableRow = row.map_err(|e| err(format!("{}: {e}", path.display())))?;
        r.push(row.r);
        q.push(row.q);
        q_prime.push(row.q_prime);
    }
    Ok(WeightSpec::Tabulated { r, q, q_prime })
}

fn parse_nonlinearity(s: &mut Section<'_>) -> CResult<NonlinearityConfig> {
    let family = s.string("family")?.ok_or_else(|| missing("nonlinearity.family"))?;
    if family != "power_minus_linear" {
        return Err(invalid("nonlinearity.family", &format!("unknown family `{family}`")));
    }
    let p = s.required("p")?;
    s.finish()?;
    Ok(NonlinearityConfig { family: family.to_string(), p })
}

fn parse_checker(s: &mut Section<'_>) -> CResult<CheckerOptions> {
    let mut o = CheckerOptions::default();
    if let Some(x) = s.positive("r_min")? {
        o.grid.r_min = x;
    }
    if let Some(x) = s.positive("r_max")? {
        o.grid.r_max = x;
    }
    if o.grid.r_min >= o.grid.r_max {
        return Err(invalid("checker.r_max", "must exceed checker.r_min"));
    }
    if let Some(n) = s.count("points", 3)? {
        o.grid.points = n;
    }
    if let Some(x) = s.positive("slack")? {
        o.grid.slack = x;
    }
    if let Some(x) = s.positive("s_max_factor")? {
        o.s_max_factor = x;
    }
    if let Some(n) = s.count("f_points", 16)? {
        o.f_points = n;
    }
    s.finish()?;
    Ok(o)
}

fn parse_shoot(s: &mut Section<'_>) -> CResult<ShootOptions> {
    let mut o = ShootOptions::default();
    if let Some(x) = s.positive("tol")? {
        o.tol = x;
    }
    o.r_max = s.positive("r_max")?;
    if let Some(n) = s.count("max_steps", 1)? {
        o.max_steps = n;
    }
    s.finish()?;
    Ok(o)
}

fn parse_run(s: &mut Section<'_>) -> CResult<RunOptions> {
    let d = RunOptions::default();
    let o = RunOptions {
        alpha: s.positive("alpha")?,
        alpha2: s.positive("alpha2")?,
        k: s.count("k", 1)?.unwrap_or(d.k),
        alpha_min: s.bound("alpha_min")?.unwrap_or(d.alpha_min),
        alpha_max: s.bound("alpha_max")?,
        step: s.positive("step")?.unwrap_or(d.step),
        bracket_tol: s.positive("bracket_tol")?.unwrap_or(d.bracket_tol),
        delta: s.positive("delta")?.unwrap_or(d.delta),
        pairs: s.count("pairs", 1)?.unwrap_or(d.pairs),
        functional: s.string("functional")?.map(str::to_string),
        branch: s.count("branch", 1)?.unwrap_or(d.branch),
        direction: s.string("direction")?.map(str::to_string),
        samples: s.count("samples", 2)?.unwrap_or(d.samples),
        s_min: s.float("s_min")?,
        s_max: s.float("s_max")?,
        variation: s.boolean("variation")?.unwrap_or(d.variation),
    };
    if let (Some(a), Some(b)) = (o.s_min, o.s_max) {
        if !(a < b) {
            return Err(invalid("run.s_max", "must exceed run.s_min"));
        }
    }
    if let Some(dir) = &o.direction {
        if dir != "down" && dir != "up" {
            return Err(invalid("run.direction", "expected \"down\" or \"up\""));
        }
    }
    s.finish()?;
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CResult<RunConfig> {
        RunConfig::parse(text, Path::new("."))
    }

    const CUBIC: &str = "[weight]\nfamily = \"power\"\ntheta = 2\n[nonlinearity]\nfamily = \"power_minus_linear\"\np = 3\n";

    #[test]
    fn minimal_config() {
        let c = parse(CUBIC).unwrap();
        assert_eq!(c.weight, WeightSpec::Power { theta: 2.0 });
        assert_eq!(c.run, RunOptions::default());
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn missing_theta_names_key() {
        let e = parse("[weight]\nfamily = \"power\"\n[nonlinearity]\nfamily = \"power_minus_linear\"\np = 3\n").unwrap_err();
        assert_eq!(e.key, "weight.theta");
    }

    #[test]
    fn unknown_key_names_path() {
        let e = parse(&format!("{CUBIC}[run]\nalpah = 3.0\n")).unwrap_err();
        assert_eq!(e.key, "run.alpah");
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        let e = parse(&format!("{CUBIC}[shoot]\ntol = 0.0\n")).unwrap_err();
        assert_eq!(e.key, "shoot.tol");
        let e = parse(&format!("{CUBIC}[run]\nk = 0\n")).unwrap_err();
        assert_eq!(e.key, "run.k");
    }

    #[test]
    fn symbolic_bounds() {
        let c = parse(&format!("{CUBIC}[run]\nalpha_min = \"b\"\nalpha_max = \"beta\"\n")).unwrap();
        let m = c.model().unwrap();
        assert!((c.run.alpha_min.resolve(&m) - 1.0).abs() < 1e-9);
        assert!((c.run.alpha_max.unwrap().resolve(&m) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn piecewise_log_from_mu() {
        let c = parse("[weight]\nfamily = \"piecewise_log\"\ntheta = 2\nmu = 2.5\n[nonlinearity]\nfamily = \"power_minus_linear\"\np = 3\n")
            .unwrap();
        let WeightSpec::PiecewiseLog { r0, .. } = c.weight else { panic!() };
        assert!((r0 - 2f64.exp()).abs() < 1e-12);
        assert!(c.model().is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let a = parse(CUBIC).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
