use std::path::Path;
use std::process::{Command, Output};

use aucal::audit::{conditional_bias_report, AuditOptions, Conditioning};
use aucal::synth::{generate, SynthConfig};

fn aucal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aucal"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = aucal(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn audit_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "5", "synth", "--n", "3000", "--out", "d.csv"]);
    ok(d, &["audit", "--data", "d.csv", "--condition", "AU6,AU12", "--label", "happy", "--levels", "M,F", "--out", "a.json", "--csv", "a.csv"]);

    let ds = generate(&SynthConfig::happy(3000, 1.0, 5)).unwrap();
    let report = conditional_bias_report(
        &ds,
        &Conditioning::Joint(vec!["AU6".into(), "AU12".into()]),
        "gender",
        "happy",
        &AuditOptions::default(),
    )
    .unwrap();
    assert_eq!(std::fs::read_to_string(d.join("a.csv")).unwrap(), report.to_csv());

    let a = json(&d.join("a.json"));
    assert_eq!(a["header"]["command"], "audit");
    assert_eq!(a["header"]["input_digest"].as_str().unwrap().len(), 64);
    assert_eq!(a["report"]["cells"].as_array().unwrap().len(), 4);
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "9", "synth", "--n", "2000", "--out", "d.csv"]);
    ok(d, &["calibrate", "--data", "d.csv", "--truth-cols", "AU6,AU12", "--out", "cal.json", "--thresholds", "th.json"]);
    ok(d, &["audit", "--data", "d.csv", "--condition", "AU6,AU12", "--label", "happy", "--thresholds", "th.json", "--marginal", "--out", "a.json", "--curves", "c.csv"]);
    let flipped = ok(d, &["--seed", "2", "relabel", "--data", "d.csv", "--condition", "AU6,AU12", "--label", "happy", "--out", "r.csv", "--fliplog", "f.json"]);
    assert!(flipped.contains("labels flipped"));
    assert_eq!(json(&d.join("f.json"))["header"]["seed"], 2);

    ok(d, &["audit", "--data", "r.csv", "--condition", "AU6,AU12", "--label", "happy", "--out", "after.json"]);
    for cell in json(&d.join("after.json"))["report"]["cells"].as_array().unwrap() {
        if let Some(p) = cell["p_value"].as_f64() {
            assert!(p > 0.05);
        }
    }

    ok(d, &["train", "--data", "r.csv", "--label", "happy", "--epochs", "2", "--lr", "0.01", "--reduction", "mean", "--out", "m.json"]);
    ok(d, &["eval", "--model", "m.json", "--test", "d.csv", "--positive-group", "F", "--label", "happy", "--out", "e.json"]);
    let e = json(&d.join("e.json"));
    let acc = e["report"]["accuracy"].as_f64().unwrap();
    assert!((0.5..=1.0).contains(&acc));
}

#[test]
fn synth_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "4", "synth", "--n", "500", "--out", "a.csv"]);
    ok(d, &["--seed", "4", "synth", "--n", "500", "--out", "b.csv"]);
    ok(d, &["--seed", "5", "synth", "--n", "500", "--out", "c.csv"]);
    let read = |f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(aucal(d, &["--help"]).status.code(), Some(0));
    assert_eq!(aucal(d, &["audit", "--bogus"]).status.code(), Some(1));
    assert_eq!(aucal(d, &["frobnicate"]).status.code(), Some(1));

    let missing = aucal(d, &["audit", "--data", "nope.csv", "--condition", "AU6", "--label", "happy", "--out", "x.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(!missing.stderr.is_empty());

    std::fs::write(d.join("bad.csv"), "id,AU6,label,gender\na,1.5,1,M\nb,oops,0,F\n").unwrap();
    let bad = aucal(d, &["audit", "--data", "bad.csv", "--condition", "AU6", "--label", "happy", "--out", "x.json"]);
    assert_eq!(bad.status.code(), Some(1));

    let threads = Command::new(env!("CARGO_BIN_EXE_aucal"))
        .current_dir(d)
        .env("AUCAL_THREADS", "0")
        .args(["synth", "--n", "10", "--out", "z.csv"])
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(1));
}

#[test]
fn compare_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut cfg = aucal::pipeline::CompareConfig::happy(2000, 3);
    for run in &mut cfg.runs {
        run.train.epochs = 2;
    }
    cfg.reference.epochs = 2;
    std::fs::write(d.join("runs.json"), serde_json::to_string(&cfg).unwrap()).unwrap();
    let stdout = ok(d, &["--seed", "11", "compare", "--configs", "runs.json", "--seeds", "2", "--out", "t.csv", "--json", "t.json"]);
    let table = std::fs::read_to_string(d.join("t.csv")).unwrap();
    assert_eq!(stdout, table);

    let lib = aucal::pipeline::compare(&cfg, &aucal::pipeline::seed_list(11, 2)).unwrap();
    assert_eq!(table, lib.to_csv());
    assert_eq!(json(&d.join("t.json"))["report"]["runs"].as_array().unwrap().len(), 6);
}
