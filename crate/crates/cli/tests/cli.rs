use std::fs;
use std::process::{Command, Output};

fn kquorum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kquorum")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const PARAMS: &str = "n = 1000\nf = 100\nm = 40\nk1 = 1\nk2 = 24\nmu = 0.5\n";

#[test]
fn run_writes_a_trace_that_check_accepts() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let o = kquorum(&["run", "honest-k1", "--out", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS         R8"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("feasibility override"));

    let c = kquorum(&["check", trace.to_str().unwrap(), "--json"]);
    assert_eq!(c.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&c.stdout).unwrap();
    assert_eq!(report["requirements"].as_array().unwrap().len(), 8);
}

#[test]
fn run_accepts_a_scenario_file_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    let src = String::from_utf8(kquorum(&["scenarios", "over-k1-abort"]).stdout).unwrap();
    fs::write(&path, src).unwrap();
    let o = kquorum(&["run", path.to_str().unwrap(), "--seed", "17"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("seed 17"));
}

#[test]
fn step_cap_gives_inconclusive_exit() {
    let o = kquorum(&["run", "honest-k1", "--step-cap", "100"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("INCONCLUSIVE"));
}

#[test]
fn bad_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "name = \"x\"\nclients = []\nbogus = 1\n").unwrap();
    let o = kquorum(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    assert_eq!(kquorum(&["run", "no-such-scenario"]).status.code(), Some(1));
    let garbage = dir.path().join("g.jsonl");
    fs::write(&garbage, "{not json}\n").unwrap();
    assert_eq!(kquorum(&["check", garbage.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn bounds_prints_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.toml");
    fs::write(&path, PARAMS).unwrap();
    let o = kquorum(&["bounds", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("k2'                     32"), "{s}");
    assert!(s.contains("feasible                true"));

    fs::write(&path, format!("[params]\n{PARAMS}")).unwrap();
    let j = kquorum(&["bounds", path.to_str().unwrap(), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&j.stdout).unwrap();
    assert_eq!(v["bounds"]["k2_prime"], 32);
}

#[test]
fn montecarlo_formats() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.toml");
    fs::write(&path, PARAMS).unwrap();
    let out = dir.path().join("mc.csv");
    let o = kquorum(&["montecarlo", path.to_str().unwrap(), "--trials", "500", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().skip(1).all(|l| l.ends_with("PASS")), "{csv}");

    let j = kquorum(&["montecarlo", path.to_str().unwrap(), "--trials", "500", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&j.stdout).unwrap();
    assert_eq!(v[0]["trials"], 500);
    let again = kquorum(&["montecarlo", path.to_str().unwrap(), "--trials", "500", "--format", "json"]);
    assert_eq!(j.stdout, again.stdout);
}
