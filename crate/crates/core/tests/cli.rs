use std::path::Path;
use std::process::{Command, Output};

use durable_monopoly::paths::EquilibriumPath;

fn dmono(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmono")).args(args).output().expect("spawn dmono")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn check_exit_codes() {
    assert_eq!(code(&dmono(&["check", "--preset", "cm"])), 0);
    assert_eq!(code(&dmono(&["check", "--preset", "rm", "--require", "A3"])), 1);
    assert_eq!(code(&dmono(&["check", "--preset", "rm", "--require", "A1,A2"])), 0);
    assert_eq!(code(&dmono(&["check", "--preset", "nope"])), 2);
    assert_eq!(code(&dmono(&["check"])), 2);
}

#[test]
fn malformed_model_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "x_lo = [\n").unwrap();
    let out = dmono(&["check", "--model", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse"));

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "x_lo = 1.0\nx_hi = 2.0\nbogus = 3\n[value]\nfamily = \"quadratic\"\na = 1.0\nb = 1.0\n")
        .unwrap();
    assert_eq!(code(&dmono(&["check", "--model", unknown.to_str().unwrap()])), 2);
}

#[test]
fn check_csv_lists_every_assumption() {
    let out = dmono(&["check", "--preset", "cm", "--format", "csv"]);
    let text = stdout(&out);
    let ids: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids, ["A1", "A2", "A3", "A4"]);
}

#[test]
fn folk_json_round_trips_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("path.json");
    let f = file.to_str().unwrap();
    let out = dmono(&["folk", "--preset", "cm", "--delta", "0.999995", "--n", "200", "--out", f]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    let path: EquilibriumPath = serde_json::from_value(doc["path"].clone()).unwrap();
    assert_eq!(path.len(), 200);
    assert_eq!(doc["report"]["overall"], true);

    assert_eq!(code(&dmono(&["verify", "--preset", "cm", "--path", f])), 0);

    let mut bad = path.clone();
    bad.steps[2].offer.p += 0.01;
    let bad_file = dir.path().join("bad.json");
    std::fs::write(&bad_file, serde_json::to_string(&bad).unwrap()).unwrap();
    assert_eq!(code(&dmono(&["verify", "--preset", "cm", "--path", bad_file.to_str().unwrap()])), 1);
}

#[test]
fn folk_refuses_unverified_path_unless_unchecked() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.csv");
    let f = file.to_str().unwrap();
    let args = ["folk", "--preset", "cm", "--delta", "0.5", "--n", "20", "--format", "csv", "--out", f];
    assert_eq!(code(&dmono(&args)), 1);
    assert!(!Path::new(f).exists());

    let mut with = args.to_vec();
    with.push("--unchecked");
    assert_eq!(code(&dmono(&with)), 0);
    let text = std::fs::read_to_string(f).unwrap();
    assert!(text.starts_with("t,x,p,cutoff_hi,cutoff_lo,mass"));
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn discrete_no_disposal_has_three_rows() {
    let out = dmono(&["discrete", "--preset", "three-type", "--no-disposal", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[2].starts_with("2,0.1,"));
}

#[test]
fn discrete_disposal_needs_a_mode() {
    assert_eq!(code(&dmono(&["discrete", "--preset", "three-type-disposal"])), 2);
    assert_eq!(code(&dmono(&["discrete", "--preset", "three-type-disposal", "--mode", "coasian"])), 0);
    assert_eq!(code(&dmono(&["discrete", "--preset", "three-type-cost"])), 0);
}

#[test]
fn sweep_emits_one_row_per_point() {
    let out = dmono(&["sweep", "--preset", "rm", "--var", "delta", "--from", "0.9", "--to", "0.999", "--points", "10"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let margins: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(margins.len(), 10);
    assert!(margins.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn static_and_coase_commands() {
    let out = dmono(&["static", "--preset", "cm"]);
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((doc["payoff"].as_f64().unwrap() - 25.0 / 12.0).abs() < 1e-5);

    let out = dmono(&["coase", "--preset", "cm"]);
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["path"]["kind"], "COASIAN");
}
