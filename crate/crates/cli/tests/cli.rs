use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codedpir")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("codedpir-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    d
}

#[test]
fn params_prints_example_one() {
    let o = run(&["params", "2", "3", "2"]);
    assert!(o.status.success());
    let s = stdout(&o);
    for needle in [r#""L":6"#, r#""D":10"#, r#""omega":12"#, r#""capacity":[3,5]"#] {
        assert!(s.contains(needle), "{s}");
    }
}

#[test]
fn trivial_regimes_are_rejected() {
    for args in [["params", "1", "3", "2"], ["params", "2", "3", "3"]] {
        let o = run(&args);
        assert!(!o.status.success());
        assert!(String::from_utf8_lossy(&o.stderr).contains("unsupported regime"));
    }
    assert!(!run(&["params", "two"]).status.success());
}

#[test]
fn verify_examples_reports_three_matches() {
    let o = run(&["verify-examples"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(s.lines().filter(|l| l.starts_with("MATCH")).count(), 3, "{s}");
}

#[test]
fn setup_and_retrieve_are_deterministic() {
    let dirs = [scratch("a"), scratch("b")];
    let mut transcripts = Vec::new();
    for d in &dirs {
        let ds = d.to_str().unwrap();
        assert!(run(&["setup", "3", "5", "3", "--seed", "4", "--dir", ds]).status.success());
        let out = d.join("t.json");
        let o = run(&[
            "retrieve",
            "--theta",
            "3",
            "--seed",
            "8",
            "--database",
            d.join("database.json").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stdout(&o));
        transcripts.push((fs::read(d.join("database.json")).unwrap(), fs::read(out).unwrap()));
    }
    assert_eq!(transcripts[0], transcripts[1]);
    let seq = dirs[0].join("seq.json");
    let o = run(&[
        "--sequential",
        "retrieve",
        "--theta",
        "3",
        "--seed",
        "8",
        "--database",
        dirs[0].join("database.json").to_str().unwrap(),
        "--out",
        seq.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read(seq).unwrap(), transcripts[0].1);
    for d in dirs {
        let _ = fs::remove_dir_all(d);
    }
}

#[test]
fn audit_reports_json() {
    let o = run(&["audit", "2", "3", "2"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["privacy"]["mode"], "exhaustive");
    assert_eq!(v["privacy"]["pass"], true);
    assert!(v["ranks"].as_object().unwrap().values().all(|b| b == true));
}

#[test]
fn serve_rejects_a_foreign_share() {
    let d = scratch("serve");
    assert!(run(&["setup", "2", "3", "2", "--dir", d.to_str().unwrap()]).status.success());
    let o = run(&["serve", "--share", d.join("share-1.json").to_str().unwrap(), "--id", "2"]);
    assert!(!o.status.success());
    let _ = fs::remove_dir_all(d);
}
