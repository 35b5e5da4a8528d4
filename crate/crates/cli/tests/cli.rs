use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fuzzreg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fuzzreg")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn setup(dir: &Path) {
    assert_eq!(code(&fuzzreg(dir, &["gen", "half-graph", "--n", "8", "--out", "hg8.csv"])), 0);
    assert_eq!(code(&fuzzreg(dir, &["gen", "uniform", "--n", "8", "--out", "u8.json"])), 0);
}

#[test]
fn gen_half_graph_writes_strict_upper_triangle() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let text = std::fs::read_to_string(dir.path().join("hg8.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 9);
    assert_eq!(lines[0], "x/y,0,1,2,3,4,5,6,7");
    for (i, line) in lines[1..].iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], i.to_string());
        for (j, c) in cells[1..].iter().enumerate() {
            assert_eq!(*c, if i < j { "1" } else { "0" }, "entry ({i},{j})");
        }
    }
}

#[test]
fn distal_reg_passes_and_reverifies_in_a_fresh_process() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let out = fuzzreg(
        dir.path(),
        &[
            "distal-reg", "--phi", "hg8.csv", "--mu", "u8.json", "--mu", "u8.json", "--eps", "0", "--delta", "0.5",
            "--gamma", "0.25", "--seed", "1", "--out", "cert.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cert: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cert.json")).unwrap()).unwrap();
    assert_eq!(cert["pass"], true);
    assert!(cert["payload"]["result"]["non_homogeneous_mass"].as_f64().unwrap() <= 0.25);

    let out = fuzzreg(dir.path(), &["verify-cert", "--in", "cert.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn tampered_certificate_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let args = [
        "distal-reg", "--phi", "hg8.csv", "--eps", "0", "--delta", "0.5", "--gamma", "0.25", "--seed", "1", "--out",
        "cert.json",
    ];
    assert_eq!(code(&fuzzreg(dir.path(), &args)), 0);
    let path = dir.path().join("cert.json");
    let mut cert: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    cert["payload"]["result"]["non_homogeneous_mass"] = Value::from(0.001);
    std::fs::write(&path, serde_json::to_string_pretty(&cert).unwrap()).unwrap();

    let out = fuzzreg(dir.path(), &["verify-cert", "--in", "cert.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("does not verify"));
}

#[test]
fn violations_exit_two_and_still_write_the_certificate() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    // Averages of two rows lie in {0, 1/2, 1}; column 1 has mean 1/8.
    let out = fuzzreg(
        dir.path(),
        &["approx", "--phi", "hg8.csv", "--eps", "0.05", "--n", "2", "--attempts", "5", "--seed", "4", "--out", "c.json"],
    );
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(dir.path().join("c.json").exists());
}

#[test]
fn input_errors_exit_one_naming_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let out = fuzzreg(dir.path(), &["seh", "--phi", "hg8.csv", "--delta", "0.5"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--eps"), "{}", stderr(&out));

    let out = fuzzreg(dir.path(), &["seh", "--phi", "hg8.csv", "--bogus", "1"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--bogus"));

    let out = fuzzreg(dir.path(), &["seh", "--phi", "missing.csv", "--eps", "0", "--delta", "0.5"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--phi"));

    let out = fuzzreg(dir.path(), &["tail-check", "--phi", "hg8.csv", "--eps", "0.5", "--n", "16"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--seed"));
}

#[test]
fn csv_format_emits_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let out = fuzzreg(
        dir.path(),
        &["net", "--phi", "hg8.csv", "--lower", "0", "--upper", "1", "--sweep", "0.5,0.25,0.125", "--format", "csv"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "eps,net_size,eps^-1 ln eps^-1");
    assert_eq!(lines.len(), 4);

    let out = fuzzreg(dir.path(), &["seh", "--phi", "hg8.csv", "--eps", "0", "--delta", "0.25", "--format", "csv"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn gen_then_load_then_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["identity", "half-graph", "threshold"] {
        let out = fuzzreg(dir.path(), &["gen", kind, "--n", "6"]);
        let text = String::from_utf8(out.stdout).unwrap();
        let phi = fuzzreg::io::predicate_from_csv(&text).unwrap();
        assert_eq!(fuzzreg::io::predicate_to_csv(&phi).unwrap(), text, "{kind}");
    }
    let out = fuzzreg(dir.path(), &["gen", "square-wave", "--n", "4"]);
    let family = fuzzreg::io::family_from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(family.len(), 1);
}
