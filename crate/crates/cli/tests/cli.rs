use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qsep_cli::{load_state, run, save_state, Config};

fn qsep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsep")).args(args).output().expect("spawn qsep")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn summary_value(rec: &qsep_cli::RunRecord, key: &str) -> f64 {
    rec.summary.iter().find(|(k, _)| k == key).unwrap().1.parse().unwrap()
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "entropy.toml", "seed = 11\n[random]\ndims = [2, 2, 2]\ncount = 6\n");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = qsep(&["entropy", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", "2"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(out.join("entropy.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(!outputs[0].is_empty());
}

#[test]
fn different_seed_changes_the_samples() {
    let text = |seed: u64| {
        let cfg = Config::parse(&format!("seed = {seed}\n[random]\ndims = [2, 2]\ncount = 2\n"), Some("toml")).unwrap();
        let rec = run("entropy", &cfg, Path::new(".")).unwrap();
        rec.tables[0].to_csv().map(|b| String::from_utf8(b).unwrap()).unwrap()
    };
    assert_ne!(text(1), text(2));
}

#[test]
fn verify_without_samples_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "v.json", r#"{"samples": []}"#);
    let o = qsep(&["verify", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn zeta_log_square_limit() {
    let cfg = Config::parse("hamiltonians = [\"hamlogp:a=4,p=2\"]\n", Some("toml")).unwrap();
    let rec = run("zeta", &cfg, Path::new(".")).unwrap();
    let table = rec.tables[0].to_csv().map(|b| String::from_utf8(b).unwrap()).unwrap();
    let limit: f64 = table
        .lines()
        .find(|l| l.contains("limit"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((limit - (1.0f64 / 16.0).exp()).abs() < 0.01, "{limit}");
}

#[test]
fn er_on_bell_is_ln2() {
    let cfg = Config::parse(r#"{"state": "bell"}"#, Some("json")).unwrap();
    let rec = run("er", &cfg, Path::new(".")).unwrap();
    let v = summary_value(&rec, "value");
    assert!((v - std::f64::consts::LN_2).abs() < 1e-3, "{v}");
    assert!(rec.passed());
}

#[test]
fn gibbs_qubit_quarter_energy() {
    let cfg = Config::parse("hamiltonian = \"hamexplicit:[0,1]\"\nenergies = [0.25]\n", Some("toml")).unwrap();
    let rec = run("gibbs", &cfg, Path::new(".")).unwrap();
    let csv = rec.tables[0].to_csv().map(|b| String::from_utf8(b).unwrap()).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let beta: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((beta - 3f64.ln()).abs() < 1e-8, "{beta}");
}

#[test]
fn state_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let w = qsep_core::fixtures::werner();
    save_state(&w, &dir.path().join("w.json")).unwrap();
    let back = load_state("w.json", dir.path()).unwrap();
    assert_eq!(back.sig().dims(), w.sig().dims());
    assert!((back.mat() - w.mat()).norm() < 1e-15);
}

#[test]
fn rejects_non_hermitian_state_file() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.json", r#"{"dims": [2], "re": [[0.5, 0.3], [0.0, 0.5]], "im": [[0, 0], [0, 0]]}"#);
    assert!(load_state("bad.json", dir.path()).is_err());
}

#[test]
fn rejects_dims_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.json", r#"{"dims": [2, 3], "re": [[1, 0], [0, 0]], "im": [[0, 0], [0, 0]]}"#);
    assert!(load_state("bad.json", dir.path()).is_err());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = write(dir.path(), "er.toml", "seed = 1\n");
    let o = qsep(&["er", "--config", &missing]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("'state'"));

    let unknown = write(dir.path(), "x.toml", "bogus = 3\n");
    assert_eq!(qsep(&["entropy", "--config", &unknown]).status.code(), Some(2));

    let wrong = write(dir.path(), "w.toml", "command = \"gibbs\"\n");
    assert_eq!(qsep(&["entropy", "--config", &wrong]).status.code(), Some(2));
}

#[test]
fn out_directory_holds_csv_and_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "f.toml", "state = \"bell\"\nk_max = 1\n");
    let out = dir.path().join("out");
    let o = qsep(&["er-reg", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("er-reg.csv").exists());
    let rec: serde_json::Value = serde_json::from_slice(&fs::read(out.join("er-reg.json")).unwrap()).unwrap();
    assert_eq!(rec["command"], "er-reg");
}

#[test]
fn list_fixtures_names_every_fixture() {
    let o = qsep(&["--list-fixtures"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for (name, _) in qsep_core::fixtures::NAMES {
        assert!(text.contains(name), "{name}");
    }
}
