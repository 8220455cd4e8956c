use std::path::Path;
use std::process::{Command, Output};

use cmfd_core::forge::{gen_corpus, Scenario};
use cmfd_core::BinaryMask;

fn cmfd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmfd")).args(args).output().expect("spawn cmfd")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn detect_verdicts_and_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    gen_corpus(d.path(), 1, 1, Scenario::Plain, 7).unwrap();
    let mask = d.path().join("out_mask.png");
    let overlay = d.path().join("overlay.png");

    let forged = cmfd(&[
        "detect",
        path(&d.path().join("t_0000.png")),
        "--mask",
        path(&mask),
        "--overlay",
        path(&overlay),
    ]);
    assert_eq!(forged.status.code(), Some(3));
    let line: serde_json::Value = serde_json::from_slice(&forged.stdout).unwrap();
    assert_eq!(line["tampered"], true);
    assert!(!BinaryMask::load_png(&mask).unwrap().is_empty());
    assert!(overlay.exists());

    let clean = cmfd(&["detect", path(&d.path().join("a_0000.png"))]);
    assert_eq!(clean.status.code(), Some(0));
    let line: serde_json::Value = serde_json::from_slice(&clean.stdout).unwrap();
    assert_eq!(line["tampered"], false);
}

#[test]
fn detect_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let missing = cmfd(&["detect", path(&d.path().join("nope.png"))]);
    assert_eq!(missing.status.code(), Some(1));

    let empty = d.path().join("empty.png");
    std::fs::write(&empty, b"").unwrap();
    let out = cmfd(&["detect", path(&empty)]);
    assert_eq!(out.status.code(), Some(1));

    let bad_key = cmfd(&["detect", path(&empty), "--set", "no_such_key=1"]);
    assert_eq!(bad_key.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_key.stderr).contains("no_such_key"));
}

#[test]
fn config_file_and_overrides_are_validated() {
    let d = tempfile::tempdir().unwrap();
    gen_corpus(d.path(), 0, 1, Scenario::Flat, 1).unwrap();
    let cfg = d.path().join("cfg.txt");
    std::fs::write(&cfg, "min_corr = 5\n").unwrap();
    let img = d.path().join("a_0000.png");
    let out = cmfd(&["detect", path(&img), "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("min_corr"));

    std::fs::write(&cfg, "min_corr = 0.95\n").unwrap();
    let ok = cmfd(&["detect", path(&img), "--config", path(&cfg)]);
    assert_eq!(ok.status.code(), Some(0));
    // Overrides are applied on top of the file and validated too.
    let over = cmfd(&["detect", path(&img), "--config", path(&cfg), "--set", "min_corr=2"]);
    assert_eq!(over.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&over.stderr).contains("min_corr"));
}

#[test]
fn forge_rejects_unknown_scenario() {
    let d = tempfile::tempdir().unwrap();
    let out = cmfd(&["forge", path(d.path()), "--scenario", "glossy"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["flat", "rough", "rotated", "scaled", "mixed"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn forge_then_eval_writes_reports() {
    let d = tempfile::tempdir().unwrap();
    let corpus = d.path().join("corpus");
    let out = cmfd(&["forge", path(&corpus), "--scenario", "flat", "--tampered", "1", "--authentic", "1", "--seed", "3"]);
    assert!(out.status.success());
    assert!(corpus.join("manifest.csv").exists());

    let base = d.path().join("report");
    let out = cmfd(&["eval", path(&corpus), "--report", path(&base), "--arm", "block"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("Precision") && table.contains("block"));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(base.with_extension("json")).unwrap()).unwrap();
    assert_eq!(json["images"], 2);
    assert!(base.with_extension("csv").exists());

    let bad_arm = cmfd(&["eval", path(&corpus), "--report", path(&base), "--arm", "both"]);
    assert_eq!(bad_arm.status.code(), Some(1));
    let empty = tempfile::tempdir().unwrap();
    let none = cmfd(&["eval", path(empty.path()), "--report", path(&base)]);
    assert_eq!(none.status.code(), Some(1));
}

#[test]
fn help_lists_every_config_key() {
    for sub in ["detect", "eval", "forge"] {
        let out = cmfd(&[sub, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8_lossy(&out.stdout);
        for key in cmfd_core::config::KEYS {
            assert!(text.contains(key.name), "{sub} --help lacks {}", key.name);
        }
    }
}
