use std::io::Write;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_csa-forge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child =
        bin().args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn estimate_adder_json() {
    let o = run(&["estimate", "--block", "adder", "--n", "3", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["formula"]["S"], 2410);
}

#[test]
fn synth_then_verify_from_stdin() {
    let s = run(&["synth", "adder", "--n", "2", "--mod", "3"]);
    assert!(s.status.success());
    let v = run_stdin(&["verify", "-", "--n", "2"], &s.stdout);
    assert_eq!(v.status.code(), Some(0), "{}", stdout(&v));
}

#[test]
fn synth_round_trip_keeps_counts() {
    let dir = std::env::temp_dir().join(format!("csa-forge-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("adder.json");
    let p = path.to_str().unwrap();
    assert!(run(&["synth", "adder", "--n", "2", "--mod", "3", "-o", p]).status.success());
    let loaded = csa_forge::Circuit::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let built = csa_forge::arith::build_modular_adder(2, 3).unwrap().circuit;
    assert_eq!(loaded.count_resources(), built.count_resources());

    let o = run(&["simulate", p, "--a", "0", "--b", "0", "--c", "0", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["ports"]["u"], 0);
    assert_eq!(v["ports"]["v"], 0);

    let o = run(&["simulate", p, "--a", "5", "--b", "7", "--c", "3", "--seed", "4", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let (u, w) = (v["ports"]["u"].as_u64().unwrap(), v["ports"]["v"].as_u64().unwrap());
    assert_eq!((u + w) % 3, 15 % 3);

    for fmt in ["dot", "svg", "csv"] {
        let o = run(&["export", fmt, p]);
        assert!(o.status.success(), "{fmt}");
        assert!(!o.stdout.is_empty());
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn semantic_simulation() {
    let o = run(&[
        "simulate",
        "--semantic",
        "modexp",
        "--n",
        "3",
        "--mod",
        "7",
        "--base",
        "3",
        "--t",
        "3",
        "--inputs",
        "5",
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["decoded"], 5);
    let o = run(&["simulate", "--semantic", "mult", "--n", "2", "--mod", "3", "--inputs", "2,2", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["decoded"], 1);
}

#[test]
fn constructed_estimate_csv() {
    let o = run(&["estimate", "--block", "mm", "--n", "2", "--constructed", "--csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("block,n,metric,formula,constructed,pass"));
    assert_eq!(lines.filter(|l| l.ends_with(",true")).count(), 6);
}

#[test]
fn distinct_exit_codes() {
    assert_eq!(run(&["estimate", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["estimate", "--block", "nope", "--n", "2"]).status.code(), Some(2));
    assert_eq!(run_stdin(&["verify", "-"], br#"{"version":"2.0"}"#).status.code(), Some(3));
    assert_eq!(run_stdin(&["verify", "-"], b"not json").status.code(), Some(3));
    assert_eq!(run(&["synth", "adder", "--n", "2", "--mod", "4"]).status.code(), Some(4));
    assert_eq!(run(&["verify", "/nonexistent/file.json"]).status.code(), Some(6));
    // partial-product lattice exceeds its printed width bound
    assert_eq!(run(&["estimate", "--block", "ppc", "--n", "2", "--constructed"]).status.code(), Some(1));
}

#[test]
fn verify_flags_a_bad_circuit() {
    let mut b = csa_forge::CircuitBuilder::new();
    let m = b.module("m");
    let (p, q) = (b.at(m, 0, 0), b.at(m, 3, 0));
    b.cnot(p, q);
    let json = b.finish().to_json();
    let o = run_stdin(&["verify", "-", "--json"], json.as_bytes());
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["violations"][0]["rule"], "adjacency");
}
