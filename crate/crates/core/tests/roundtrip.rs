use wildfire_core::config::RunConfig;
use wildfire_core::data::{ingest, Variable};
use wildfire_core::pipeline::{run_all, write_synthetic};
use wildfire_core::synth::read_truth;
use wildfire_core::Error;

fn small_config(seed: u64) -> RunConfig {
    let mut c = RunConfig::default();
    c.run.seed = seed;
    c.tuning.radii = vec![100.0, 150.0, 200.0];
    c.tuning.quantiles = vec![0.5, 0.8];
    c
}

#[test]
fn written_data_ingests_back_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = write_synthetic(&small_config(3), dir.path()).unwrap();
    let back = ingest(
        cfg.paths.input.as_deref().unwrap(),
        &cfg.schema(),
        cfg.geo,
        (cfg.thresholds.cnt.clone(), cfg.thresholds.ba.clone()),
    )
    .unwrap();
    assert_eq!(back.observations(), data.dataset.observations());
    for var in Variable::BOTH {
        assert_eq!(back.missing(var), data.dataset.missing(var));
    }
    let truth = read_truth(std::fs::File::open(cfg.paths.truth.unwrap()).unwrap()).unwrap();
    assert_eq!(truth, data.truth.hidden);
}

#[test]
fn run_writes_every_artefact() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = write_synthetic(&small_config(4), dir.path()).unwrap();
    let summary = run_all(&cfg).unwrap();
    let names: Vec<String> = summary
        .files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for want in [
        "rules.csv",
        "tune_cnt.csv",
        "tune_ba.csv",
        "predictions_cnt.csv",
        "predictions_ba.csv",
        "diagnostics_cnt.csv",
        "diagnostics_ba.csv",
        "scores.csv",
        "benchmark_scores.csv",
        "manifest.toml",
    ] {
        assert!(names.iter().any(|n| n == want), "missing {want}");
    }
    let manifest = std::fs::read_to_string(cfg.paths.output_dir.join("manifest.toml")).unwrap();
    assert!(manifest.contains("config_hash"));
    assert!(manifest.contains("predictions_cnt.csv"));
    let sel = summary.selection.unwrap();
    assert!(cfg.tuning.radii.contains(&sel.k1_cnt));
    assert!(summary.score.unwrap().total() < summary.benchmark.unwrap().total());
}

#[test]
fn malformed_input_names_the_stage() {
    let mut cfg = small_config(1);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "lon,lat\n1,2\n").unwrap();
    cfg.paths.input = Some(bad);
    cfg.paths.output_dir = dir.path().join("out");
    let err = run_all(&cfg).unwrap_err();
    assert!(matches!(err, Error::Stage { .. }), "{err:?}");
    assert!(err.to_string().contains("ingest"), "{err}");
}
