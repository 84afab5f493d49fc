use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kslab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kslab")).args(args).current_dir(dir).env_remove("KSLAB_OUT_DIR").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = kslab(&["verify", "--seeds", "2"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn offline_optima_from_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.txt"), "4\n1 2 3\n1 2\n1\n").unwrap();
    fs::write(dir.path().join("r.txt"), "0\n3\n1\n2\n3\n").unwrap();
    let o = kslab(&["opt", "kserver", "--metric", "m.txt", "--k", "2", "--requests", "r.txt"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("cost 4.000000000\n"), "{}", stdout(&o));
    let o = kslab(&["opt", "paging", "--n", "4", "--k", "2", "--requests", "r.txt"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o), "cost 2.000000000\nbelady misses 2\n");
}

#[test]
fn run_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "algorithm = \"paging\"\nseeds = [2, 0]\nverify = \"fast\"\n[requests]\ncount = 40\n[paging]\nn = 8\nk = 3\n[output]\ndir = \"res\"\nname = \"p\"\n";
    fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let o = kslab(&["run", "--config", "c.toml"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = fs::read(dir.path().join("res/p.csv")).unwrap();
    let summary = fs::read(dir.path().join("res/p.txt")).unwrap();
    assert!(dir.path().join("res/p_timing.csv").exists());
    let o = Command::new(env!("CARGO_BIN_EXE_kslab"))
        .args(["run", "--config", "c.toml"])
        .current_dir(dir.path())
        .env("KSLAB_OUT_DIR", "again")
        .env("KSLAB_WORKERS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(first, fs::read(dir.path().join("again/p.csv")).unwrap());
    assert_eq!(summary, fs::read(dir.path().join("again/p.txt")).unwrap());
}

#[test]
fn paging_run_with_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = kslab(
        &["paging", "--n", "6", "--k", "2", "--requests", "random:3:25", "--verify", "--csv-out", "p.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert_eq!(csv.lines().count(), 26);
}

#[test]
fn bad_input_exits_with_an_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "algorithm = \"paging\"\nseeds = []\n").unwrap();
    let o = kslab(&["run", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = kslab(&["paging", "--requests", "no-such-generator"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
