use std::path::Path;
use std::process::{Command, Output};

fn wildfire(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wildfire"))
        .args(args)
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn defaults_print_as_config() {
    let out = wildfire(&["config", "--defaults"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let s = text(&out.stdout);
    assert!(s.contains("[model]") && s.contains("[tuning]"), "{s}");
}

#[test]
fn synth_then_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = wildfire(&["synth", "--out", d]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let config = dir.path().join("config.toml");
    assert!(config.exists());

    let out = wildfire(&[
        "--config",
        config.to_str().unwrap(),
        "--k1",
        "150",
        "--workers",
        "1",
        "run",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let results = dir.path().join("results");
    for f in [
        "predictions_cnt.csv",
        "predictions_ba.csv",
        "scores.csv",
        "manifest.toml",
    ] {
        assert!(results.join(f).exists(), "missing {f}");
    }
    let first = std::fs::read(results.join("predictions_ba.csv")).unwrap();

    let again = dir.path().join("again");
    let out = wildfire(&[
        "--config",
        config.to_str().unwrap(),
        "--k1",
        "150",
        "--workers",
        "2",
        "run",
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(
        std::fs::read(again.join("predictions_ba.csv")).unwrap(),
        first
    );
}

#[test]
fn bad_input_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "lon,lat\n1,2\n").unwrap();
    let out = wildfire(&["ingest", "--input", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!text(&out.stderr).is_empty());
    assert!(!Path::new(&dir.path().join("results")).exists());
}
