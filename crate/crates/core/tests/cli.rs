use std::path::{Path, PathBuf};

use fluidnet::bundled;
use fluidnet::cli::run_cli;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("fluidnet").chain(args.iter().copied());
    let code = run_cli(argv, &mut out, &mut err);
    Run { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn bundled_file(dir: &Path, name: &str) -> String {
    write(dir, &format!("{name}.net"), bundled::source(name).unwrap()).display().to_string()
}

#[test]
fn validate_accepts_bundled_nets() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["cycle2", "prio3", "callcenter"] {
        let r = run(&["validate", &bundled_file(dir.path(), name)]);
        assert_eq!(r.code, 0, "{name}: {}", r.err);
        assert!(r.out.contains("valid"));
    }
}

#[test]
fn validate_rejects_impure_net() {
    let dir = tempfile::tempdir().unwrap();
    let text = "net broken\nplace p tau 1 m0 1\ntransition q\narc p -> q\narc q -> p\n";
    let path = write(dir.path(), "broken.net", text);
    let r = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("not pure"), "{}", r.err);
    assert!(r.out.is_empty());
}

#[test]
fn syntax_errors_are_positioned() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "bad.net", "net bad\nplace p tau\n");
    let r = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("bad.net:2:"), "{}", r.err);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&[]).code, 2);
    assert_eq!(run(&["simulate"]).code, 2);
    let dir = tempfile::tempdir().unwrap();
    let net = bundled_file(dir.path(), "cycle2");
    assert_eq!(run(&["simulate", &net, "--horizon", "-1"]).code, 2);
    assert_eq!(run(&["simulate", &net, "--mode", "sideways", "--horizon", "1"]).code, 2);
}

#[test]
fn stationary_from_marking_on_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&["stationary", &bundled_file(dir.path(), "cycle2"), "--from-marking"]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("f = (2/3, 2/3)"), "{}", r.out);
}

#[test]
fn stationary_json_checks_clean() {
    let dir = tempfile::tempdir().unwrap();
    let net = bundled_file(dir.path(), "prio3");
    let r = run(&["stationary", &net, "--json"]);
    assert_eq!(r.code, 0);
    let sol = write(dir.path(), "sol.json", &r.out);
    let c = run(&["check", &net, "--solution", sol.to_str().unwrap()]);
    assert_eq!(c.code, 0, "{}", c.err);
    assert!(c.out.contains("stationary"));
}

#[test]
fn check_reports_violated_condition() {
    let dir = tempfile::tempdir().unwrap();
    let net = bundled_file(dir.path(), "cycle2");
    let r = run(&["stationary", &net, "--from-marking", "--json"]);
    assert_eq!(r.code, 0);
    let tampered = r.out.replacen("\"q1\": \"2/3\"", "\"q1\": \"5/3\"", 1);
    assert_ne!(tampered, r.out);
    let sol = write(dir.path(), "sol.json", &tampered);
    let c = run(&["check", &net, "--solution", sol.to_str().unwrap()]);
    assert_eq!(c.code, 1);
    assert!(c.err.contains("m/τ = C⁺f"), "{}", c.err);
}

#[test]
fn continuous_simulation_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let net = bundled_file(dir.path(), "cycle2");
    let csv = dir.path().join("traj.csv");
    let r = run(&["simulate", &net, "--horizon", "50", "--out", csv.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("q1 0.666666"), "{}", r.out);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,id,kind,value\n0,p1,m,2\n"), "{}", &text[..60]);
}

#[test]
fn discrete_simulation_reports_exact_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let net = bundled_file(dir.path(), "cycle2");
    let csv = dir.path().join("counters.csv");
    let r = run(&["simulate", &net, "--mode", "discrete", "--horizon", "60", "--out", csv.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("q1 ") && r.out.contains("exact 2/3"), "{}", r.out);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,id,kind,value,t_exact,value_exact\n"));
}

#[test]
fn flows_from_state_file() {
    let dir = tempfile::tempdir().unwrap();
    let net = bundled_file(dir.path(), "prio3");
    let state = write(dir.path(), "state.toml", "[m]\np = 3\nrp = 1\nrm = \"4\"\n");
    let r = run(&["flows", &net, "--state", state.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("qp 1 bottleneck rp"), "{}", r.out);
    assert!(r.out.contains("qm 2 bottleneck p"), "{}", r.out);
}

#[test]
fn invariants_of_prio3() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&["invariants", &bundled_file(dir.path(), "prio3")]);
    assert_eq!(r.code, 0);
    assert_eq!(r.out.lines().count(), 3);
    assert!(r.out.contains("rp:1 bp:1"));
}

#[test]
fn sweep_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let net = bundled_file(dir.path(), "cycle2");
    let spec = write(
        dir.path(),
        "sweep.toml",
        "parameter = \"place.p1.m0\"\nvalues = [\"1\", \"2\", \"7/2\"]\noutputs = [\"q1\"]\nhorizon = 100\n",
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let r = run(&["sweep", &net, "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(r.code, 0, "{}", r.err);
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let text = String::from_utf8(text).unwrap();
    assert!(text.contains("3.5,q1,1.16666666667,"), "{text}");
    assert!(text.contains(",7/2,7/6,"), "{text}");
}

#[test]
fn single_value_sweep_matches_from_marking() {
    let dir = tempfile::tempdir().unwrap();
    let net = bundled_file(dir.path(), "cycle2");
    let spec = write(dir.path(), "one.toml", "parameter = \"place.p1.m0\"\nvalues = [2]\noutputs = [\"q1\", \"q2\"]\n");
    let r = run(&["sweep", &net, "--spec", spec.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.out.lines().filter(|l| l.contains(",2/3,")).count(), 2, "{}", r.out);
}

#[test]
fn bad_sweep_spec_is_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let net = bundled_file(dir.path(), "cycle2");
    let spec = write(dir.path(), "bad.toml", "parameter = \"place.nope.m0\"\nvalues = [1]\noutputs = []\n");
    let r = run(&["sweep", &net, "--spec", spec.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("place.nope.m0"));
}
