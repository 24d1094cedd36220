mod support;

use std::fs;
use std::path::Path;

use support::workloads::fixture_dir;

fn fixture(name: &str) -> String {
    fixture_dir().join(name).display().to_string()
}

fn omfs(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = omfs::cli::run_with(std::iter::once("omfs").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

#[test]
fn simulate_writes_the_trace_and_prints_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "s1.csv");
    let (code, stdout, stderr) = omfs(&["simulate", "--workload", &fixture("s1.wl"), "--config", &fixture("s1.json"), "--out", &out]);
    assert_eq!(code, 0, "{stderr}");
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with(omfs::sim::TRACE_CSV_HEADER));
    assert_eq!(csv.lines().filter(|l| l.contains(",checkpoint,")).count(), 2);
    assert!(stdout.contains("trace_digest "), "{stdout}");

    let (_, again, _) = omfs(&["simulate", "--workload", &fixture("s1.wl"), "--config", &fixture("s1.json"), "--out", &out]);
    assert_eq!(stdout, again);
}

#[test]
fn invalid_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "t.csv");
    let (code, _, stderr) = omfs(&["simulate", "--workload", &fixture("s1.wl"), "--config", &fixture("bad_sum.json"), "--out", &out]);
    assert_eq!(code, 1);
    assert!(stderr.contains("sum 110 exceeds 100"), "{stderr}");
    assert!(!Path::new(&out).exists());
}

#[test]
fn usage_errors_exit_with_one() {
    let (code, _, stderr) = omfs(&["simulate", "--workload", "x", "--config", "y", "--out", "z", "--scheduler", "bogus"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("bogus"), "{stderr}");
    assert_eq!(omfs(&["simulate", "--config", "y", "--out", "z"]).0, 1);
    assert_eq!(omfs(&["--help"]).0, 0);
}

#[test]
fn generate_is_reproducible_and_seed_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (path(dir.path(), "a.wl"), path(dir.path(), "b.wl"), path(dir.path(), "c.wl"));
    let (code, stdout, _) = omfs(&["generate", "--params", &fixture("mixed.json"), "--out", &a]);
    assert_eq!(code, 0);
    assert!(stdout.starts_with("jobs 200\n"), "{stdout}");
    omfs(&["generate", "--params", &fixture("mixed.json"), "--out", &b]);
    omfs(&["generate", "--params", &fixture("mixed.json"), "--out", &c, "--seed", "99"]);
    let read = |p: &str| fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    omfs::parse_workload(&String::from_utf8(read(&a)).unwrap()).unwrap();
}

#[test]
fn validate_prints_the_entitlement_table() {
    let (code, stdout, _) = omfs(&["validate", "--config", &fixture("config.json")]);
    assert_eq!(code, 0);
    assert_eq!(stdout, "ok\ncpu_total 16\nuser percent entitled_cpus\nA 50 8\nB 25 4\nC 25 4\n");
    let (code, stdout, _) = omfs(&["validate", "--workload", &fixture("pooling.wl"), "--config", &fixture("config.json")]);
    assert_eq!(code, 0);
    assert!(stdout.starts_with("jobs 6\nok\n"), "{stdout}");
}

#[test]
fn compare_tabulates_every_scheduler() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "cmp.csv");
    let (code, stdout, stderr) = omfs(&["compare", "--workload", &fixture("pooling.wl"), "--config", &fixture("config.json"), "--out", &out]);
    assert_eq!(code, 0, "{stderr}");
    let csv = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("omfs,0.750000,2000,") && rows[1].ends_with("pooling gain +0.25"), "{csv}");
    assert!(rows.iter().any(|r| r.starts_with("capped,0.500000,3000,")), "{csv}");
    assert!(stdout.starts_with("workload_hash "));
}

#[test]
fn swf_and_params_sources_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "t.csv");
    let cfg = dir.path().join("swf.json");
    fs::write(&cfg, r#"{"cpu_total": 8, "users": {"u1": 50, "u2": 50}}"#).unwrap();
    let (code, _, stderr) = omfs(&["simulate", "--swf", &fixture("tiny.swf"), "--config", cfg.to_str().unwrap(), "--scheduler", "fcfs", "--out", &out]);
    assert_eq!(code, 0, "{stderr}");
    let cfg = dir.path().join("params.json");
    fs::write(&cfg, r#"{"cpu_total": 32, "users": {}}"#).unwrap();
    let (code, _, stderr) = omfs(&["simulate", "--params", &fixture("bursty.json"), "--config", cfg.to_str().unwrap(), "--seed", "4", "--out", &out]);
    assert_eq!(code, 0, "{stderr}");
}
