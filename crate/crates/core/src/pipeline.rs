//! Prediction at missing indices and the end-to-end run.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::ba_model::{fit_mixture, MixtureFallback, MixtureKind, MixtureOptions};
use crate::config::RunConfig;
use crate::count_model::{fit_zinb, CountFitOptions, CountModelKind, FallbackReason};
use crate::data::{ingest, Dataset, PredictionRow, PredictionTable, Variable};
use crate::error::{Error, Result};
use crate::geo::bap_thresholds;
use crate::neighborhoods::{neighborhood, NeighborhoodSpec};
use crate::rules::{self, ForcedKind, ForcedPrediction};
use crate::scoring::{benchmark_table, ScoreConfig, ScoreReport};
use crate::synth::read_truth;
use crate::tuning::{select_parameters, write_grid_csv, Selection};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOptions {
    pub count: CountFitOptions,
    pub mixture: MixtureOptions,
    /// Non-exceedance level used when none is supplied.
    pub k2_default: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            count: CountFitOptions::default(),
            mixture: MixtureOptions::default(),
            k2_default: 0.5,
        }
    }
}

/// Summary of the fit behind one predicted row.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub index: usize,
    pub sample_size: usize,
    pub model: &'static str,
    pub fallback: Option<&'static str>,
    pub converged: bool,
    /// Named fitted parameters, in a fixed order per variable.
    pub params: Vec<(&'static str, f64)>,
}

const CNT_PARAMS: [&str; 4] = ["pi", "mu", "r", "loglik"];
const BA_PARAMS: [&str; 6] = ["z", "u", "lambda", "sigma", "xi", "exceedances"];

fn count_fallback(r: FallbackReason) -> &'static str {
    match r {
        FallbackReason::AllZero => "all_zero",
        FallbackReason::TooFew => "too_few",
        FallbackReason::NotConverged => "not_converged",
    }
}

fn mixture_fallback(r: MixtureFallback) -> &'static str {
    match r {
        MixtureFallback::ZeroMassTooHigh => "zero_mass_too_high",
        MixtureFallback::TooFewExceedances => "too_few_exceedances",
        MixtureFallback::GpdFailed => "gpd_failed",
        MixtureFallback::EmptySample => "empty_sample",
    }
}

/// Fit the variable's model to `sample` and evaluate its CDF at the
/// thresholds of observation `target`.
///
/// For burnt area the sample holds proportions; each raw threshold is divided
/// by the target's capacity, and thresholds at or above it get probability 1.
pub fn predict_row(
    dataset: &Dataset,
    var: Variable,
    target: usize,
    sample: &[f64],
    k2: f64,
    opts: &ModelOptions,
) -> (Vec<f64>, Diagnostic) {
    match var {
        Variable::Cnt => {
            let m = fit_zinb(sample, &opts.count);
            let row = m.cdf_row(dataset.cnt_thresholds());
            let params = match &m.kind {
                CountModelKind::Zinb(p) => {
                    vec![p.pi, p.mu, p.r, m.log_likelihood.unwrap_or(f64::NAN)]
                }
                CountModelKind::Empirical(_) => vec![f64::NAN; 4],
            };
            let diag = Diagnostic {
                index: target,
                sample_size: sample.len(),
                model: if m.params().is_some() {
                    "zinb"
                } else {
                    "empirical"
                },
                fallback: m.fallback.map(count_fallback),
                converged: m.converged,
                params: CNT_PARAMS.iter().copied().zip(params).collect(),
            };
            (row, diag)
        }
        Variable::Ba => {
            let m = fit_mixture(sample, k2, &opts.mixture);
            let thr = bap_thresholds(
                dataset.ba_thresholds(),
                dataset.true_area(target),
                dataset.geo().unit_scale,
            );
            let row = thr
                .iter()
                .map(|t| if t.forced_one { 1.0 } else { m.cdf(t.value) })
                .collect();
            let (sigma, xi) = m.gpd.map_or((f64::NAN, f64::NAN), |g| (g.sigma, g.xi));
            let params = vec![m.z, m.u, m.lambda, sigma, xi, m.exceedances as f64];
            let diag = Diagnostic {
                index: target,
                sample_size: sample.len(),
                model: match m.kind {
                    MixtureKind::Mixture => "mixture",
                    MixtureKind::Empirical => "empirical",
                },
                fallback: m.fallback.map(mixture_fallback),
                converged: m.converged,
                params: BA_PARAMS.iter().copied().zip(params).collect(),
            };
            (row, diag)
        }
    }
}

/// Neighbourhoods and tail level used for prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictParams {
    pub cnt: NeighborhoodSpec,
    pub ba: NeighborhoodSpec,
    pub k2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub cnt: PredictionTable,
    pub ba: PredictionTable,
    pub cnt_diagnostics: Vec<Diagnostic>,
    pub ba_diagnostics: Vec<Diagnostic>,
}

impl Predictions {
    pub fn table(&self, var: Variable) -> &PredictionTable {
        match var {
            Variable::Cnt => &self.cnt,
            Variable::Ba => &self.ba,
        }
    }
}

fn predict_variable(
    dataset: &Dataset,
    var: Variable,
    spec: &NeighborhoodSpec,
    k2: f64,
    forced: &[ForcedPrediction],
    opts: &ModelOptions,
) -> (PredictionTable, Vec<Diagnostic>) {
    let mut by_index: HashMap<usize, Vec<&ForcedPrediction>> = HashMap::new();
    for f in forced.iter().filter(|f| f.variable == var) {
        by_index.entry(f.index).or_default().push(f);
    }
    let thresholds = dataset.thresholds(var).to_vec();
    let results: Vec<(PredictionRow, Diagnostic)> = dataset
        .missing(var)
        .par_iter()
        .map(|&i| {
            let rules = by_index.get(&i).map(Vec::as_slice).unwrap_or(&[]);
            let (mut probs, diag) = if rules.iter().any(|f| f.kind == ForcedKind::AllOne) {
                let diag = Diagnostic {
                    index: i,
                    sample_size: 0,
                    model: "forced",
                    fallback: None,
                    converged: true,
                    params: Vec::new(),
                };
                (vec![1.0; thresholds.len()], diag)
            } else {
                let sample = neighborhood(dataset, i, spec).sample(dataset, var, None);
                predict_row(dataset, var, i, &sample, k2, opts)
            };
            for f in rules {
                f.apply(&mut probs, &thresholds);
            }
            (PredictionRow { index: i, probs }, diag)
        })
        .collect();
    let mut table = PredictionTable::new(var, thresholds);
    let mut diags = Vec::with_capacity(results.len());
    for (row, d) in results {
        table.rows.push(row);
        diags.push(d);
    }
    (table, diags)
}

/// Predictive CDF rows for every missing count and burnt area, with the
/// `forced` deductions applied on top.
pub fn predict(
    dataset: &Dataset,
    params: &PredictParams,
    forced: &[ForcedPrediction],
    opts: &ModelOptions,
) -> Predictions {
    let (cnt, cnt_diagnostics) =
        predict_variable(dataset, Variable::Cnt, &params.cnt, params.k2, forced, opts);
    let (ba, ba_diagnostics) =
        predict_variable(dataset, Variable::Ba, &params.ba, params.k2, forced, opts);
    Predictions {
        cnt,
        ba,
        cnt_diagnostics,
        ba_diagnostics,
    }
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        v.to_string()
    }
}

pub fn write_diagnostics<W: Write>(var: Variable, diags: &[Diagnostic], out: W) -> Result<()> {
    let names: &[&str] = match var {
        Variable::Cnt => &CNT_PARAMS,
        Variable::Ba => &BA_PARAMS,
    };
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["index", "n", "model", "fallback", "converged"];
    header.extend_from_slice(names);
    w.write_record(&header)?;
    for d in diags {
        let mut rec = vec![
            d.index.to_string(),
            d.sample_size.to_string(),
            d.model.to_string(),
            d.fallback.unwrap_or("").to_string(),
            d.converged.to_string(),
        ];
        for name in names {
            let v = d
                .params
                .iter()
                .find(|(n, _)| n == name)
                .map_or(f64::NAN, |p| p.1);
            rec.push(fmt_opt(v));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<diagnostics>", e))?;
    Ok(())
}

pub fn write_rules<W: Write>(forced: &[ForcedPrediction], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "variable", "kind", "source"])?;
    for f in forced {
        w.write_record([
            f.index.to_string(),
            f.variable.name().into(),
            f.kind_name().into(),
            f.source.name().into(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<rules>", e))?;
    Ok(())
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Outcome of [`run_all`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub water_cut: f64,
    pub params: PredictParams,
    pub selection: Option<Selection>,
    pub score: Option<ScoreReport>,
    pub benchmark: Option<ScoreReport>,
    pub files: Vec<PathBuf>,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
    ) -> Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Hash of every configuration value that affects output.
pub fn config_hash(config: &RunConfig) -> String {
    let mut c = config.clone();
    c.run.workers = None;
    sha256_hex(c.to_toml().as_bytes())
}

/// Model options taken from the `model` section.
pub fn model_options(config: &RunConfig) -> ModelOptions {
    ModelOptions {
        count: CountFitOptions {
            min_fit: config.model.min_fit,
            ..Default::default()
        },
        mixture: MixtureOptions {
            gpd: crate::ba_model::GpdFitOptions {
                min_exceed: config.model.min_exceed,
                ..Default::default()
            },
        },
        k2_default: config.model.k2_ba,
    }
}

/// In-memory result of rules, tuning and prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    pub water_cut: f64,
    pub forced: Vec<ForcedPrediction>,
    pub selection: Option<Selection>,
    pub params: PredictParams,
    pub predictions: Predictions,
}

/// rules → tune → predict on a loaded dataset. Nothing is written.
pub fn run_method(
    dataset: &Dataset,
    config: &RunConfig,
    score_config: &ScoreConfig,
) -> Result<MethodOutput> {
    let water_cut = config.rules.water_cut.unwrap_or_else(|| {
        rules::calibrate_water_cut(
            dataset,
            config.rules.water_target,
            &rules::default_water_grid(),
        )
    });
    let forced = rules::collect(dataset, config.rules.switches(), water_cut);
    let opts = model_options(config);
    let (selection, params) = if config.tuning.enabled {
        let s = select_parameters(
            dataset,
            &config.tuning.grid(),
            &config.model.spec(config.model.k1_cnt),
            score_config.weights(Variable::Cnt),
            score_config.weights(Variable::Ba),
            &opts,
        )
        .map_err(|e| e.in_stage("tune"))?;
        let p = PredictParams {
            cnt: config.model.spec(s.k1_cnt),
            ba: config.model.spec(s.k1_ba),
            k2: s.k2_ba,
        };
        (Some(s), p)
    } else {
        let p = PredictParams {
            cnt: config.model.spec(config.model.k1_cnt),
            ba: config.model.spec(config.model.k1_ba),
            k2: config.model.k2_ba,
        };
        (None, p)
    };
    let predictions = predict(dataset, &params, &forced, &opts);
    for var in Variable::BOTH {
        predictions
            .table(var)
            .validate()
            .map_err(|e| e.in_stage("predict"))?;
    }
    Ok(MethodOutput {
        water_cut,
        forced,
        selection,
        params,
        predictions,
    })
}

/// ingest → rules → tune → predict → score, writing every artefact to the
/// output directory.
pub fn run_all(config: &RunConfig) -> Result<RunSummary> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    with_workers(config.run.workers, || run_stages(config))?
}

fn run_stages(config: &RunConfig) -> Result<RunSummary> {
    let input = config
        .paths
        .input
        .as_deref()
        .ok_or_else(|| Error::Config("paths.input is required".into()).in_stage("ingest"))?;
    let dataset = ingest(
        input,
        &config.schema(),
        config.geo,
        (config.thresholds.cnt.clone(), config.thresholds.ba.clone()),
    )
    .map_err(|e| e.in_stage("ingest"))?;
    info!("ingested {} observations", dataset.len());
    let score_config = config.score_config().map_err(|e| e.in_stage("score"))?;
    let truths = match &config.paths.truth {
        Some(p) => Some(
            read_truth(File::open(p).map_err(|e| Error::io(p, e).in_stage("score"))?)
                .map_err(|e| e.in_stage("score"))?,
        ),
        None => None,
    };
    let dir = config.paths.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e).in_stage("output"))?;
    let mut out = Outputs {
        dir,
        files: Vec::new(),
    };

    let m = run_method(&dataset, config, &score_config)?;
    out.write("rules.csv", |w| write_rules(&m.forced, w))
        .map_err(|e| e.in_stage("rules"))?;
    if let Some(sel) = &m.selection {
        out.write("tune_cnt.csv", |w| write_grid_csv(&sel.cnt_rows, w))
            .map_err(|e| e.in_stage("tune"))?;
        out.write("tune_ba.csv", |w| write_grid_csv(&sel.ba_rows, w))
            .map_err(|e| e.in_stage("tune"))?;
    }
    let preds = &m.predictions;
    out.write("predictions_cnt.csv", |w| preds.cnt.write_csv(w))
        .map_err(|e| e.in_stage("predict"))?;
    out.write("predictions_ba.csv", |w| preds.ba.write_csv(w))
        .map_err(|e| e.in_stage("predict"))?;
    out.write("diagnostics_cnt.csv", |w| {
        write_diagnostics(Variable::Cnt, &preds.cnt_diagnostics, w)
    })
    .map_err(|e| e.in_stage("predict"))?;
    out.write("diagnostics_ba.csv", |w| {
        write_diagnostics(Variable::Ba, &preds.ba_diagnostics, w)
    })
    .map_err(|e| e.in_stage("predict"))?;

    let (score, benchmark) = match &truths {
        Some(t) => {
            let s = score_tables(&[&preds.cnt, &preds.ba], t, &score_config)
                .map_err(|e| e.in_stage("score"))?;
            let bc = benchmark_table(&dataset, Variable::Cnt);
            let bb = benchmark_table(&dataset, Variable::Ba);
            let b = score_tables(&[&bc, &bb], t, &score_config).map_err(|e| e.in_stage("score"))?;
            out.write("scores.csv", |w| s.write_csv(w))
                .map_err(|e| e.in_stage("score"))?;
            out.write("benchmark_scores.csv", |w| b.write_csv(w))
                .map_err(|e| e.in_stage("score"))?;
            (Some(s), Some(b))
        }
        None => (None, None),
    };

    let manifest = manifest_text(config, m.water_cut, &m.params, &out.files)?;
    out.write("manifest.toml", |w| {
        w.write_all(manifest.as_bytes())
            .map_err(|e| Error::io("manifest.toml", e))
    })
    .map_err(|e| e.in_stage("manifest"))?;
    Ok(RunSummary {
        water_cut: m.water_cut,
        params: m.params,
        selection: m.selection,
        score,
        benchmark,
        files: out.files,
    })
}

fn score_tables(
    tables: &[&PredictionTable],
    truths: &BTreeMap<Variable, HashMap<usize, f64>>,
    config: &ScoreConfig,
) -> Result<ScoreReport> {
    for t in tables {
        let empty = HashMap::new();
        let tr = truths.get(&t.variable).unwrap_or(&empty);
        if let Some(row) = t.rows.iter().find(|r| !tr.contains_key(&r.index)) {
            return Err(Error::MissingTruth(row.index));
        }
    }
    ScoreReport::from_tables(tables, truths, config)
}

fn spec_line(s: &NeighborhoodSpec) -> String {
    match *s {
        NeighborhoodSpec::Spatial { radius_km } => format!("{{ variant = \"spatial\", radius_km = {radius_km} }}"),
        NeighborhoodSpec::Temporal {
            radius_km,
            year_half_width,
        } => format!("{{ variant = \"temporal\", radius_km = {radius_km}, year_half_width = {year_half_width} }}"),
        NeighborhoodSpec::Cluster { radius_km, covariate } => {
            format!("{{ variant = \"cluster\", radius_km = {radius_km}, covariate = {covariate} }}")
        }
    }
}

fn manifest_text(
    config: &RunConfig,
    water_cut: f64,
    params: &PredictParams,
    files: &[PathBuf],
) -> Result<String> {
    let mut s = String::new();
    s.push_str(&format!("config_hash = \"{}\"\n", config_hash(config)));
    s.push_str(&format!("seed = {}\n", config.run.seed));
    s.push_str(&format!("version = \"{}\"\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("water_cut = {water_cut}\n"));
    s.push_str(&format!("cnt_neighborhood = {}\n", spec_line(&params.cnt)));
    s.push_str(&format!("ba_neighborhood = {}\n", spec_line(&params.ba)));
    s.push_str(&format!("k2_ba = {}\n", params.k2));
    s.push_str("\n[files]\n");
    for f in files {
        let bytes = std::fs::read(f).map_err(|e| Error::io(f, e))?;
        let name = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        s.push_str(&format!("\"{name}\" = \"{}\"\n", sha256_hex(&bytes)));
    }
    s.push_str("\n[config]\n");
    let mut c = config.clone();
    c.run.workers = None;
    for line in c.to_toml().lines() {
        s.push_str(&nest_config_line(line));
        s.push('\n');
    }
    Ok(s)
}

/// Re-roots a top-level TOML table header under `config.`.
fn nest_config_line(line: &str) -> String {
    match line.strip_prefix('[') {
        Some(rest) if !line.starts_with("[[") => format!("[config.{rest}"),
        _ => line.to_string(),
    }
}

/// Scores of the `spatial` variant and of the temporal variant for every
/// year half-width, as rows `k1` by columns.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantTable {
    pub radii: Vec<f64>,
    pub columns: Vec<String>,
    /// `scores[r][c]`.
    pub scores: Vec<Vec<f64>>,
}

impl VariantTable {
    pub fn column_min(&self, c: usize) -> f64 {
        self.scores
            .iter()
            .map(|r| r[c])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k1".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (r, row) in self.radii.iter().zip(&self.scores) {
            let mut rec = vec![r.to_string()];
            rec.extend(row.iter().map(|s| s.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<variants>", e))?;
        Ok(())
    }
}

/// Cross-validation scores of the spatial variant against temporal variants
/// with year half-widths `1..=max_half_width`.
pub fn variant_table(
    dataset: &Dataset,
    var: Variable,
    radii: &[f64],
    k2: f64,
    max_half_width: u32,
    weights: &[f64],
    opts: &ModelOptions,
) -> VariantTable {
    let plan = crate::tuning::build_cv_plan(dataset, var);
    let mut specs = vec![(
        "spatial".to_string(),
        NeighborhoodSpec::Spatial { radius_km: 0.0 },
    )];
    for ky in 1..=max_half_width {
        specs.push((
            format!("ky={ky}"),
            NeighborhoodSpec::Temporal {
                radius_km: 0.0,
                year_half_width: ky,
            },
        ));
    }
    let mut scores = vec![Vec::with_capacity(specs.len()); radii.len()];
    for (_, spec) in &specs {
        let rows =
            crate::tuning::grid_scores(dataset, var, spec, radii, &[k2], &plan, weights, opts);
        for (r, row) in rows.iter().enumerate() {
            scores[r].push(row.score);
        }
    }
    VariantTable {
        radii: radii.to_vec(),
        columns: specs.into_iter().map(|s| s.0).collect(),
        scores,
    }
}

/// Writes `path` and creates its parent directory.
pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

/// Writes a synthetic dataset generated from `config.synth` to `dir` as
/// `data.csv`, `truth.csv` and a `config.toml` that runs on them.
pub fn write_synthetic(
    config: &RunConfig,
    dir: &Path,
) -> Result<(RunConfig, crate::synth::SyntheticData)> {
    let data = crate::synth::synth(&config.synth, config.run.seed)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = create_file(&dir.join("data.csv"))?;
    crate::data::write_dataset(&data.dataset, &mut w)?;
    w.flush().map_err(|e| Error::io(dir.join("data.csv"), e))?;
    let mut w = create_file(&dir.join("truth.csv"))?;
    data.truth.write_hidden(&mut w)?;
    w.flush().map_err(|e| Error::io(dir.join("truth.csv"), e))?;
    let mut run = config.clone();
    run.paths.input = Some(dir.join("data.csv"));
    run.paths.truth = Some(dir.join("truth.csv"));
    run.paths.output_dir = dir.join("results");
    run.geo = config.synth.geo();
    run.season = config.synth.season();
    std::fs::write(dir.join("config.toml"), run.to_toml())
        .map_err(|e| Error::io(dir.join("config.toml"), e))?;
    Ok((run, data))
}
