use std::path::Path;
use std::process::{Command, Output};

fn crackscope(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crackscope"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn crackscope")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = crackscope(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn exit_code(dir: &Path, args: &[&str]) -> i32 {
    crackscope(dir, args).status.code().expect("exit code")
}

#[test]
fn tile_classification_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "tiles", "--set", "synth.count_per_class=40", "--set", "synth.tile_size=32", "--window", "32", "--seed", "3", "--out", "tiles"]);
    ok(d, &["split", "tiles/tiles.manifest", "--seed", "1", "--out", "parts"]);
    for part in ["train", "val", "test"] {
        assert!(d.join(format!("parts/{part}.manifest")).exists());
    }
    ok(d, &["train-sfnn", "--train", "parts/train.manifest", "--val", "parts/val.manifest", "--set", "train.epochs=2", "--seed", "5", "--out", "model.csm"]);
    assert!(d.join("model.csm").exists());
    ok(d, &["predict", "parts/test.manifest", "--classifier", "sfnn-bnw", "--model", "model.csm", "--out", "pred.tsv"]);
    let metrics = ok(d, &["eval", "parts/test.manifest", "pred.tsv", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    assert!(v.get("accuracy").is_some(), "{metrics}");
    let roc = ok(d, &["roc", "parts/test.manifest", "pred.tsv"]);
    assert!(roc.to_lowercase().contains("auc"), "{roc}");

    ok(d, &["predict", "parts/test.manifest", "--classifier", "adt", "--out", "adt.tsv"]);
    let again = crackscope(d, &["predict", "parts/test.manifest", "--classifier", "adt"]);
    assert_eq!(std::fs::read_to_string(d.join("adt.tsv")).unwrap(), String::from_utf8(again.stdout).unwrap());
}

#[test]
fn sequence_stats_and_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "sequence", "--seed", "7", "--out", "seq"]);
    ok(d, &["stats", "seq", "--out", "series.csv"]);
    ok(d, &["stats", "seq", "--out", "series2.csv"]);
    let series = std::fs::read(d.join("series.csv")).unwrap();
    assert_eq!(series, std::fs::read(d.join("series2.csv")).unwrap());
    assert!(d.join("series.patterns.json").exists());
    let text = String::from_utf8(series).unwrap();
    assert!(text.starts_with("frameIndex,strain,"));
    assert_eq!(text.lines().count(), 13);

    let fit: serde_json::Value = serde_json::from_str(&ok(d, &["fit", "series.csv"])).unwrap();
    let cd_max = fit["trilinear"]["cd_max"].as_f64().unwrap();
    assert!((cd_max - 3.0 / 0.0454).abs() < 1.0, "cd_max {cd_max}");

    let with_acw = ok(d, &["fit", "series.csv", "--set", "fit.acw_window_lo=0.02", "--set", "fit.acw_window_hi=0.03"]);
    assert!(with_acw.contains("acw"), "{with_acw}");
}

#[test]
fn theory_prints_key_value_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["theory", "--set", "theory.snubbing_coefficient=0"]);
    assert!(out.lines().any(|l| l == "g=0.5"), "{out}");
    for key in ["lambda=", "x_mm=", "xprime_mm=", "cdmax_per_m="] {
        assert!(out.contains(key), "{out}");
    }
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(exit_code(d, &["--help"]), 0);
    assert_eq!(exit_code(d, &["frobnicate"]), 1);
    assert_eq!(exit_code(d, &["--set", "bogus=1", "theory"]), 1);
    std::fs::write(d.join("bad.cfg"), "seed=1\nseed=2\n").unwrap();
    assert_eq!(exit_code(d, &["--config", "bad.cfg", "theory"]), 1);
    assert_eq!(exit_code(d, &["stats", "missing"]), 2);
    assert_eq!(exit_code(d, &["theory", "--set", "theory.bond_mpa=0.01"]), 3);
}
