use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use boundstate::classify::{BoundStateBracket, SeparationReport};
use boundstate::model::HypothesisReport;
use boundstate::variation::PhiReport;
use boundstate_cli::commands::{ClassificationOut, EventOut, SweepSummary, TraceReport};
use boundstate_cli::output::{read_json, split_csv, Envelope, VERSION};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tempfile::TempDir;

const CUBIC_THETA2: &str = r#"
[weight]
family = "power"
theta = 2.0

[nonlinearity]
family = "power_minus_linear"
p = 3.0
"#;

/// Frozen ground-state initial value for the cubic nonlinearity with `q = r²`,
/// from the fixed-step oracle in the core acceptance suite.
const ALPHA_STAR: f64 = 4.33738768;

fn write_config(dir: &Path, run: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, format!("{CUBIC_THETA2}\n{run}")).unwrap();
    p
}

fn boundstate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boundstate")).args(args).output().unwrap()
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    boundstate(&args)
}

fn ok(o: &Output) {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

/// Parses the envelope into `T` and checks that re-serializing reproduces the file's data.
fn round_trip<T: DeserializeOwned + Serialize>(path: &Path) -> Envelope<T> {
    let env: Envelope<T> = read_json(path).unwrap();
    let raw: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(serde_json::to_value(&env.data).unwrap(), raw["data"], "{}", path.display());
    env
}

fn csv_rows(path: &Path) -> (String, Vec<csv::StringRecord>, csv::StringRecord) {
    let text = fs::read_to_string(path).unwrap();
    let (header, body) = split_csv(&text);
    let mut rd = csv::Reader::from_reader(body.as_bytes());
    let cols = rd.headers().unwrap().clone();
    (header.to_string(), rd.records().map(Result::unwrap).collect(), cols)
}

#[test]
fn missing_theta_is_a_config_error_naming_the_key() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[weight]\nfamily = \"power\"\n[nonlinearity]\nfamily = \"power_minus_linear\"\np = 3\n").unwrap();
    let o = run("check", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("weight.theta"));
}

#[test]
fn unknown_key_and_missing_file_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[run]\nalhpa = 4.0\n");
    let o = run("classify", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.alhpa"));
    let o = run("classify", &dir.path().join("absent.toml"), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn command_specific_key_is_required() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = run("solve", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.alpha"));
}

#[test]
fn check_reports_certificates() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = run("check", &cfg, &out, &["--strict"]);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("certificates: theorem_1, theorem_2"));
    let env = round_trip::<HypothesisReport>(&out.join("report.json"));
    assert_eq!(env.data.certified(), vec!["theorem_1", "theorem_2"]);
    assert_eq!(env.tool, "boundstate");
    assert_eq!(env.version, VERSION);
}

#[test]
fn find_ground_state() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[run]\nk = 1\nalpha_min = \"b\"\nalpha_max = 20\nbracket_tol = 1e-10\n");
    let out = dir.path().join("out");
    ok(&run("find", &cfg, &out, &[]));
    let b = round_trip::<BoundStateBracket>(&out.join("bracket.json")).data;
    assert_eq!(b.k, 1);
    assert!(b.width <= 1e-10);
    assert!((b.alpha_star - ALPHA_STAR).abs() < 1e-6, "{}", b.alpha_star);
}

#[test]
fn find_without_sign_change_is_a_numeric_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[run]\nalpha_min = 5.0\nalpha_max = 20\n");
    let o = run("find", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("no_bracket"));
}

#[test]
fn undecided_exits_4_only_under_strict() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[shoot]\nr_max = 0.3\n[run]\nalpha = 4.3\n");
    let out = dir.path().join("out");
    ok(&run("classify", &cfg, &out, &[]));
    let c = round_trip::<ClassificationOut>(&out.join("classification.json")).data;
    assert!(c.undecided);
    assert_eq!(c.terminal, "U1");
    assert_eq!(run("classify", &cfg, &out, &["--strict"]).status.code(), Some(4));
}

#[test]
fn sweep_between_b_and_beta_has_no_brackets() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[run]\nalpha_min = \"b\"\nalpha_max = \"beta\"\nstep = 0.01\n");
    let out = dir.path().join("out");
    ok(&run("sweep", &cfg, &out, &[]));
    let brackets = round_trip::<Vec<BoundStateBracket>>(&out.join("brackets.json")).data;
    assert!(brackets.is_empty());
    let (_, rows, cols) = csv_rows(&out.join("sweep.csv"));
    assert_eq!(cols, vec!["alpha", "terminal_k", "membership_code", "Z_k", "slope"]);
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| &r[2] == "P1"));
    let s = round_trip::<SweepSummary>(&out.join("transitions.json")).data;
    assert!(s.transitions.is_empty() && s.undecided == 0);
}

#[test]
fn identical_config_gives_identical_bodies() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "[run]\nalpha = 4.3\nalpha_min = 4.0\nalpha_max = 5.0\nstep = 0.05\nfunctional = \"T\"\n",
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for cmd in ["sweep", "solve", "trace", "separation"] {
        ok(&run(cmd, &cfg, &a, &["--threads", "1", "--seed", "3"]));
        ok(&run(cmd, &cfg, &b, &["--threads", "3", "--seed", "3"]));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 8);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn every_file_carries_version_and_hash() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[run]\nalpha = 4.3373\nvariation = true\n");
    let out = dir.path().join("out");
    ok(&run("solve", &cfg, &out, &[]));
    let events = round_trip::<Vec<EventOut>>(&out.join("events.json"));
    let hash = events.config_hash.clone();
    assert_eq!(hash.len(), 64);
    round_trip::<PhiReport>(&out.join("phi_report.json"));
    for (name, cols) in [("trajectory.csv", vec!["r", "u", "uprime", "I"]), ("variation.csv", vec!["r", "phi", "phiprime"])] {
        let (header, rows, got) = csv_rows(&out.join(name));
        assert_eq!(header, format!("# boundstate {VERSION} config_hash={hash}"));
        assert_eq!(got, cols);
        assert!(rows.len() > 10);
    }
    // The tolerance override is part of the effective config.
    ok(&run("solve", &cfg, &out, &["--tol", "1e-9"]));
    let other = round_trip::<Vec<EventOut>>(&out.join("events.json"));
    assert_ne!(other.config_hash, hash);
}

#[test]
fn trace_p_matches_finite_differences() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &format!("[run]\nalpha = {ALPHA_STAR}\nfunctional = \"P\"\nsamples = 200\n"));
    let out = dir.path().join("out");
    ok(&run("trace", &cfg, &out, &["--tol", "1e-13"]));
    let rep = round_trip::<TraceReport>(&out.join("monitor.json")).data;
    let (_, rows, cols) = csv_rows(&out.join("trace_P.csv"));
    assert_eq!(cols, vec!["s", "value", "derivative_analytic", "derivative_fd"]);
    // Samples within 1e-4 of the branch width from either end are left out, as in the core suite.
    let gap = 1e-4 * (rep.s_hi - rep.s_lo);
    let mut checked = 0;
    for r in &rows {
        let s: f64 = r[0].parse().unwrap();
        if s - rep.s_lo < gap || rep.s_hi - s < gap || r[2].is_empty() || r[3].is_empty() {
            continue;
        }
        let (a, d): (f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap());
        assert!((a - d).abs() <= 1e-5 * a.abs().max(1e-12), "s = {s}: {a} vs {d}");
        checked += 1;
    }
    assert!(checked > 100, "{checked}");
    assert!(rep.monitor.applied && rep.monitor.holds);
}

#[test]
fn separation_near_ground_state() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[run]\nalpha_max = 20\ndelta = 1e-3\npairs = 5\n");
    let out = dir.path().join("out");
    ok(&run("separation", &cfg, &out, &["--seed", "11"]));
    let rep = round_trip::<SeparationReport>(&out.join("separation.json")).data;
    assert_eq!(rep.pairs.len(), 5);
    assert!(rep.all_hold, "{rep:?}");
    assert_eq!(rep.p_side_code, "P1");
}

#[test]
fn unknown_functional_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[run]\nalpha = 4.3\nfunctional = \"Q\"\n");
    let o = run("trace", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.functional"));
}

#[test]
fn tabulated_weight_reads_table_next_to_config() {
    let dir = TempDir::new().unwrap();
    let mut table = String::from("r,q,q_prime\n");
    for i in 1..=2000 {
        let r = i as f64 * 0.025;
        table.push_str(&format!("{r},{},{}\n", r * r, 2.0 * r));
    }
    fs::write(dir.path().join("q.csv"), table).unwrap();
    let cfg = dir.path().join("tab.toml");
    let out = dir.path().join("out");
    // Samples of r²: the classification brackets the same ground state.
    for (alpha, code) in [(4.3373, "P1"), (4.3375, "N1")] {
        fs::write(
            &cfg,
            format!("[weight]\nfamily = \"tabulated\"\ntable = \"q.csv\"\n[nonlinearity]\nfamily = \"power_minus_linear\"\np = 3\n[run]\nalpha = {alpha}\n"),
        )
        .unwrap();
        ok(&run("classify", &cfg, &out, &[]));
        let c = round_trip::<ClassificationOut>(&out.join("classification.json")).data;
        assert_eq!(c.terminal, code);
    }
}
