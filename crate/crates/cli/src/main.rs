use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wildfire_core::config::{RunConfig, Variant};
use wildfire_core::data::{ingest, write_dataset, Dataset, PredictionTable, Variable};
use wildfire_core::dependence::{explore, write_reports, ExploreOptions};
use wildfire_core::pipeline::{
    create_file, predict, run_all, variant_table, with_workers, write_diagnostics, write_rules,
    write_synthetic, ModelOptions, PredictParams,
};
use wildfire_core::scoring::ScoreReport;
use wildfire_core::synth::read_truth;
use wildfire_core::tuning::{select_parameters, write_grid_csv};
use wildfire_core::{rules, Error};

#[derive(Parser)]
#[command(
    name = "wildfire",
    version,
    about = "Predictive distributions for missing wildfire counts and burnt areas"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration; see `wildfire config --defaults`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Disable every deduction rule.
    #[arg(long, global = true)]
    no_rules: bool,
    /// spatial, temporal or cluster.
    #[arg(long, global = true)]
    variant: Option<Variant>,
    /// Neighbourhood radius in km for both variables; skips radius tuning in `run`.
    #[arg(long, global = true)]
    k1: Option<f64>,
    /// Tail non-exceedance level for burnt area; skips tuning in `run`.
    #[arg(long, global = true)]
    k2: Option<f64>,
    /// Year half-width of the temporal variant.
    #[arg(long, global = true)]
    ky: Option<u32>,
    /// TOML file with `cnt` and `ba` score weight arrays.
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate an input file and print a summary.
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Re-write the parsed data in the default column layout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic data with known generating distributions.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Dependence between counts and burnt area per quadrant.
    Explore {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.9,0.95,0.99")]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate the neighbourhood radius and tail level.
    Tune {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write spatial-vs-temporal tables for year half-widths 1..=N.
        #[arg(long)]
        variant_table: Option<u32>,
    },
    /// Predict missing values with the configured or supplied parameters.
    Predict {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a prediction file against hidden values.
    Score {
        #[arg(long)]
        predictions: PathBuf,
        /// CNT or BA.
        #[arg(long)]
        variable: String,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ingest, rules, tune, predict and score.
    Run {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the configuration.
    Config {
        /// Print the built-in defaults instead of the loaded file.
        #[arg(long)]
        defaults: bool,
    },
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut c = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        c.run.seed = s;
    }
    if let Some(w) = g.workers {
        c.run.workers = Some(w);
    }
    if g.no_rules {
        c.rules.disable();
    }
    if let Some(v) = g.variant {
        c.model.variant = v;
    }
    if let Some(k1) = g.k1 {
        c.model.k1_cnt = k1;
        c.model.k1_ba = k1;
        c.tuning.enabled = false;
    }
    if let Some(k2) = g.k2 {
        c.model.k2_ba = k2;
        c.tuning.enabled = false;
    }
    if let Some(ky) = g.ky {
        c.model.year_half_width = ky;
    }
    if let Some(w) = &g.weights {
        c.paths.weights = Some(w.clone());
    }
    Ok(c)
}

fn load_dataset(c: &RunConfig, input: Option<PathBuf>) -> Result<Dataset> {
    let path = input
        .or_else(|| c.paths.input.clone())
        .context("no input file: pass --input or set paths.input")?;
    let d = ingest(
        &path,
        &c.schema(),
        c.geo,
        (c.thresholds.cnt.clone(), c.thresholds.ba.clone()),
    )
    .with_context(|| format!("reading {}", path.display()))?;
    Ok(d)
}

fn model_options(c: &RunConfig) -> ModelOptions {
    let mut o = ModelOptions {
        k2_default: c.model.k2_ba,
        ..Default::default()
    };
    o.count.min_fit = c.model.min_fit;
    o.mixture.gpd.min_exceed = c.model.min_exceed;
    o
}

fn write_to(
    path: &Path,
    f: impl FnOnce(&mut dyn Write) -> wildfire_core::Result<()>,
) -> Result<()> {
    let mut w = create_file(path)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn parse_variable(s: &str) -> Result<Variable> {
    match s.to_ascii_uppercase().as_str() {
        "CNT" => Ok(Variable::Cnt),
        "BA" => Ok(Variable::Ba),
        _ => bail!("variable must be CNT or BA, got {s:?}"),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let c = load_config(&cli.global)?;
    let workers = c.run.workers;
    match cli.command {
        Command::Config { defaults } => {
            let text = if defaults {
                RunConfig::default().to_toml()
            } else {
                c.to_toml()
            };
            print!("{text}");
        }
        Command::Ingest { input, out } => {
            let d = load_dataset(&c, input)?;
            println!("observations: {}", d.len());
            for var in Variable::BOTH {
                println!("missing {}: {}", var, d.missing(var).len());
            }
            if let Some((a, b)) = d.year_range() {
                println!("years: {a}-{b}");
            }
            if let Some(out) = out {
                write_to(&out, |w| write_dataset(&d, w))?;
            }
        }
        Command::Synth { out } => {
            let (_, data) = write_synthetic(&c, &out)?;
            println!(
                "wrote {} observations to {}",
                data.dataset.len(),
                out.display()
            );
        }
        Command::Explore {
            input,
            levels,
            replicates,
            out,
        } => {
            let d = load_dataset(&c, input)?;
            let opts = ExploreOptions {
                replicates,
                seed: c.run.seed,
                ..Default::default()
            };
            let reports = with_workers(workers, || explore(&d, &levels, &opts))?;
            match out {
                Some(p) => write_to(&p, |w| write_reports(&reports, w))?,
                None => write_reports(&reports, std::io::stdout())?,
            }
            for var in Variable::BOTH {
                match wildfire_core::dependence::annual_trend(&d, var) {
                    Ok(t) => eprintln!(
                        "{var} annual-mean trend: slope {:.4e}, t {:.3}, p {:.4}{}",
                        t.slope,
                        t.t_statistic,
                        t.p_value,
                        if t.significant {
                            " (significant at 5%)"
                        } else {
                            ""
                        }
                    ),
                    Err(e) => eprintln!("{var} annual-mean trend: {e}"),
                }
            }
        }
        Command::Tune {
            input,
            out,
            variant_table: ky_max,
        } => {
            let d = load_dataset(&c, input)?;
            let out = out.unwrap_or_else(|| c.paths.output_dir.clone());
            let sc = c.score_config()?;
            let opts = model_options(&c);
            let s = with_workers(workers, || {
                select_parameters(
                    &d,
                    &c.tuning.grid(),
                    &c.model.spec(c.model.k1_cnt),
                    sc.weights(Variable::Cnt),
                    sc.weights(Variable::Ba),
                    &opts,
                )
            })??;
            write_to(&out.join("tune_cnt.csv"), |w| {
                write_grid_csv(&s.cnt_rows, w)
            })?;
            write_to(&out.join("tune_ba.csv"), |w| write_grid_csv(&s.ba_rows, w))?;
            println!(
                "k1_cnt = {}\nk1_ba = {}\nk2_ba = {}",
                s.k1_cnt, s.k1_ba, s.k2_ba
            );
            if let Some(n) = ky_max {
                for var in Variable::BOTH {
                    let t = with_workers(workers, || {
                        variant_table(&d, var, &c.tuning.radii, s.k2_ba, n, sc.weights(var), &opts)
                    })?;
                    let name = format!("variants_{}.csv", var.name().to_ascii_lowercase());
                    write_to(&out.join(name), |w| t.write_csv(w))?;
                }
            }
        }
        Command::Predict { input, out } => {
            let d = load_dataset(&c, input)?;
            let out = out.unwrap_or_else(|| c.paths.output_dir.clone());
            let cut = c.rules.water_cut.unwrap_or_else(|| {
                rules::calibrate_water_cut(&d, c.rules.water_target, &rules::default_water_grid())
            });
            let forced = rules::collect(&d, c.rules.switches(), cut);
            let params = PredictParams {
                cnt: c.model.spec(c.model.k1_cnt),
                ba: c.model.spec(c.model.k1_ba),
                k2: c.model.k2_ba,
            };
            let opts = model_options(&c);
            let p = with_workers(workers, || predict(&d, &params, &forced, &opts))?;
            write_to(&out.join("predictions_cnt.csv"), |w| p.cnt.write_csv(w))?;
            write_to(&out.join("predictions_ba.csv"), |w| p.ba.write_csv(w))?;
            write_to(&out.join("diagnostics_cnt.csv"), |w| {
                write_diagnostics(Variable::Cnt, &p.cnt_diagnostics, w)
            })?;
            write_to(&out.join("diagnostics_ba.csv"), |w| {
                write_diagnostics(Variable::Ba, &p.ba_diagnostics, w)
            })?;
            write_to(&out.join("rules.csv"), |w| write_rules(&forced, w))?;
        }
        Command::Score {
            predictions,
            variable,
            truth,
            out,
        } => {
            let var = parse_variable(&variable)?;
            let table = PredictionTable::read_csv(var, File::open(&predictions)?)
                .with_context(|| format!("reading {}", predictions.display()))?;
            let truth_path = truth
                .or_else(|| c.paths.truth.clone())
                .context("no truth file")?;
            let truths: BTreeMap<Variable, HashMap<usize, f64>> =
                read_truth(File::open(&truth_path)?)?;
            let tr = truths.get(&var).cloned().unwrap_or_default();
            if let Some(r) = table.rows.iter().find(|r| !tr.contains_key(&r.index)) {
                return Err(Error::MissingTruth(r.index).into());
            }
            let report = ScoreReport::from_tables(&[&table], &truths, &c.score_config()?)?;
            match out {
                Some(p) => write_to(&p, |w| report.write_csv(w))?,
                None => report.write_csv(std::io::stdout())?,
            }
        }
        Command::Run { input, truth, out } => {
            let mut c = c;
            if input.is_some() {
                c.paths.input = input;
            }
            if truth.is_some() {
                c.paths.truth = truth;
            }
            if let Some(o) = out {
                c.paths.output_dir = o;
            }
            let s = run_all(&c)?;
            println!("{}", s.params.cnt.variant_name());
            println!("k1_cnt = {}", s.params.cnt.radius_km());
            println!("k1_ba = {}", s.params.ba.radius_km());
            println!("k2_ba = {}", s.params.k2);
            if let (Some(m), Some(b)) = (&s.score, &s.benchmark) {
                println!("score = {}\nbenchmark = {}", m.total(), b.total());
            }
        }
    }
    Ok(())
}
