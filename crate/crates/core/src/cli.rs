//! Command-line front end: `generate`, `train`, `predict`, `evaluate` and
//! `gradcheck`.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 I/O or data
//! error, 4 numerical divergence, 5 verification failure.
//!
//! Environment: `ENERGYMIX_CONFIG`, `ENERGYMIX_SEED`, `ENERGYMIX_OUT`,
//! `ENERGYMIX_LEVEL` and `ENERGYMIX_JOBS` stand in for the matching flags;
//! `ENERGYMIX_<SECTION>_<KEY>` overrides a config key (see [`crate::config`]).

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{write_manifest, Config};
use crate::datasets::{load_csv, load_feature_csv, save_csv, TargetColumn, ToyExample};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::model::TrainedModel;
use crate::training::{evaluate_split, fit_replicate, run_replicates};
use crate::verify::{run_gradcheck, GradcheckOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;
pub const EXIT_VERIFICATION: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "energymix", version, about = "Gaussian mixture regression with a hybrid NLL / energy-score loss")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "ENERGYMIX_CONFIG")]
    pub config: Option<PathBuf>,
    /// Base seed (overrides `experiment.seed`).
    #[arg(long, global = true, env = "ENERGYMIX_SEED")]
    pub seed: Option<u64>,
    /// Output directory (overrides `experiment.out`).
    #[arg(long, global = true, env = "ENERGYMIX_OUT")]
    pub out: Option<PathBuf>,
    /// Prediction-interval level (overrides `experiment.level`).
    #[arg(long, global = true, env = "ENERGYMIX_LEVEL")]
    pub level: Option<f64>,
    /// Worker threads for grid cells and replicates.
    #[arg(long, global = true, env = "ENERGYMIX_JOBS")]
    pub jobs: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write train/val/test CSVs for a toy example.
    Generate {
        #[arg(long)]
        example: Option<ToyExample>,
        /// Training rows; validation gets 0.2 n and test 300.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train (with grid search and replicates when configured).
    Train,
    /// Per-point mixture parameters, moments and intervals.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Metrics of a model on a labelled CSV.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Finite-difference, Monte Carlo, asymptotic and properness checks.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 200_000)]
        mc_draws: usize,
        #[arg(long, default_value_t = 100_000)]
        properness_draws: usize,
        #[arg(long, hide = true, default_value = "none")]
        fault: String,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::InvalidParams(_) => EXIT_CONFIG,
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::Parse { .. } | Error::Schema(_) | Error::Shape(_) => {
            EXIT_IO
        }
        Error::Divergence { .. } | Error::NonFinite(_) => EXIT_DIVERGENCE,
        Error::Verification(_) => EXIT_VERIFICATION,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Resolved configuration: defaults, file, environment, flags.
pub fn resolve_config(cli: &Cli) -> Result<Config> {
    let mut cfg = Config::resolve(cli.config.as_deref(), std::env::vars())?;
    if let Some(s) = cli.seed {
        cfg.experiment.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.experiment.out = o.clone();
    }
    if let Some(l) = cli.level {
        cfg.experiment.level = l;
    }
    if let Some(j) = cli.jobs {
        cfg.experiment.jobs = j;
    }
    if let Some(Command::Generate { example, n }) = &cli.command {
        if let Some(e) = example {
            cfg.data.example = *e;
        }
        if let Some(n) = n {
            cfg.data.n = *n;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml_string());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(Error::Config("no command given (try --help)".into()));
    };
    let out = cfg.experiment.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_manifest(&cfg, &out)?;
    match command {
        Command::Generate { .. } => cmd_generate(&cfg, &out),
        Command::Train => cmd_train(&cfg, &out),
        Command::Predict { model, data } => cmd_predict(&cfg, model, data, &out),
        Command::Evaluate { model, data } => cmd_evaluate(&cfg, model, data, &out),
        Command::Gradcheck {
            cases,
            mc_draws,
            properness_draws,
            fault,
        } => {
            let opts = GradcheckOptions {
                seed: cfg.experiment.seed,
                cases: *cases,
                mc_draws: *mc_draws,
                properness_draws: *properness_draws,
                fault: fault.parse()?,
            };
            cmd_gradcheck(&opts, &out)
        }
    }
}

fn cmd_generate(cfg: &Config, out: &Path) -> Result<()> {
    let data = cfg.data.example.generate(cfg.data.n, cfg.experiment.seed)?;
    let split = data.split()?.clone();
    for (name, rows) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        let mut part = data.subset(rows);
        part.target_name = "y".into();
        save_csv(&part, &out.join(format!("{name}.csv")))?;
        println!("{name}: {} rows", rows.len());
    }
    Ok(())
}

fn cmd_train(cfg: &Config, out: &Path) -> Result<()> {
    let input_dim = cfg.data_source().materialize(0)?.dim();
    let experiment = cfg.experiment(input_dim);
    let jobs = cfg.experiment.jobs;
    if cfg.experiment.replicates > 1 {
        let summary = run_replicates(&experiment, cfg.experiment.replicates, jobs)?;
        summary.write_csv(&out.join("summary.csv"))?;
        let mut w = csv::Writer::from_path(out.join("replicates.csv"))?;
        w.write_record(["replicate", "seed", "eta", "learning_rate", "k", "criterion", "metric", "value", "error"])?;
        for o in &summary.outcomes {
            match &o.result {
                Ok(run) => {
                    for (k, v) in run.test.summary_fields() {
                        let c = &run.chosen;
                        w.write_record([
                            o.replicate.to_string(),
                            o.seed.to_string(),
                            c.eta.to_string(),
                            c.learning_rate.to_string(),
                            c.k.to_string(),
                            c.criterion.to_string(),
                            k.to_string(),
                            v.to_string(),
                            String::new(),
                        ])?;
                    }
                }
                Err(msg) => {
                    let blank = String::new;
                    w.write_record([
                        o.replicate.to_string(),
                        o.seed.to_string(),
                        blank(),
                        blank(),
                        blank(),
                        blank(),
                        blank(),
                        blank(),
                        msg.clone(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(out, e))?;
        for m in &summary.metrics {
            println!("{}: {:.4} +- {:.4} (n={})", m.metric, m.mean, m.std, m.count);
        }
        if summary.failures > 0 {
            println!("{} of {} replicates failed", summary.failures, summary.outcomes.len());
        }
        return Ok(());
    }

    let (data, grid) = match fit_replicate(&experiment, 0, jobs) {
        Ok(r) => r,
        Err(e @ Error::Divergence { .. }) => {
            let path = out.join("divergence.txt");
            std::fs::write(&path, format!("{e}\n")).map_err(|io| Error::io(&path, io))?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    let report = &grid.best_report;
    report.model.save(&out.join("model.json"))?;
    report.write_loss_curves(&out.join("loss_curve.csv"))?;
    grid.write_table(&out.join("grid.csv"))?;
    let chosen = &grid.table[grid.best_index];
    let mut w = csv::Writer::from_path(out.join("train_summary.csv"))?;
    w.write_record([
        "objective",
        "eta",
        "learning_rate",
        "k",
        "criterion",
        "best_epoch",
        "epochs_run",
        "stopped_early",
        "best_val_loss",
    ])?;
    w.write_record([
        serde_json::to_value(report.model.objective)?.as_str().unwrap_or_default().to_string(),
        chosen.eta.to_string(),
        chosen.learning_rate.to_string(),
        chosen.k.to_string(),
        chosen.criterion.to_string(),
        report.best_epoch.to_string(),
        report.val_loss_curve.len().to_string(),
        report.stopped_early.to_string(),
        chosen.best_val_loss.to_string(),
    ])?;
    w.flush().map_err(|e| Error::io(out, e))?;
    println!(
        "chosen eta={} lr={} k={} (criterion {:.4}, best epoch {})",
        chosen.eta, chosen.learning_rate, chosen.k, chosen.criterion, report.best_epoch
    );
    let test_rows = &data.split()?.test;
    if !test_rows.is_empty() {
        let test = evaluate_split(&report.model, &data, test_rows, cfg.experiment.level)?;
        test.write_summary_csv(&out.join("test_summary.csv"))?;
        for (k, v) in test.summary_fields() {
            println!("test {k}: {v:.4}");
        }
    }
    Ok(())
}

fn load_model_features(cfg: &Config, model: &Path, data: &Path) -> Result<(TrainedModel, Vec<String>, Vec<Vec<f64>>)> {
    let model = TrainedModel::load(model)?;
    let (names, xs) = load_feature_csv(data, cfg.data.has_header, &[cfg.data.target.as_str()])?;
    if let Some(x) = xs.first() {
        if x.len() != model.input_dim() {
            return Err(Error::Schema(format!(
                "data has {} features, model expects {}",
                x.len(),
                model.input_dim()
            )));
        }
    }
    Ok((model, names, xs))
}

fn cmd_predict(cfg: &Config, model: &Path, data: &Path, out: &Path) -> Result<()> {
    let (model, names, xs) = load_model_features(cfg, model, data)?;
    let level = cfg.experiment.level;
    let k = model.k();
    let path = out.join("predictions.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header: Vec<String> = if names.is_empty() {
        (1..=model.input_dim()).map(|j| format!("x{j}")).collect()
    } else {
        names
    };
    for prefix in ["pi", "mu", "sigma"] {
        header.extend((1..=k).map(|j| format!("{prefix}{j}")));
    }
    header.extend(["mean", "std", "lo", "hi"].map(String::from));
    w.write_record(&header)?;
    for x in &xs {
        let p = model.predict(x)?;
        let s = p.moments();
        let (lo, hi) = p.central_interval(level)?;
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        for part in [p.weights(), p.means(), p.stds()] {
            rec.extend(part.iter().map(|v| v.to_string()));
        }
        rec.extend([s.mean, s.std, lo, hi].map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    println!("{} predictions written to {}", xs.len(), path.display());
    Ok(())
}

fn cmd_evaluate(cfg: &Config, model: &Path, data: &Path, out: &Path) -> Result<()> {
    let model = TrainedModel::load(model)?;
    let target: TargetColumn = cfg.data.target.parse().unwrap();
    let d = load_csv(data, &target, cfg.data.has_header)?;
    if d.dim() != model.input_dim() {
        return Err(Error::Schema(format!(
            "data has {} features, model expects {}",
            d.dim(),
            model.input_dim()
        )));
    }
    let params = model.predict_batch(&d.features)?;
    let report = evaluate(&d.features, &params, &d.targets, d.ground_truth.as_ref(), cfg.experiment.level)?;
    report.write_summary_csv(&out.join("summary.csv"))?;
    let names = if d.feature_names.is_empty() {
        (1..=d.dim()).map(|j| format!("x{j}")).collect()
    } else {
        d.feature_names.clone()
    };
    report.write_points_csv(&out.join("points.csv"), &names)?;
    for (k, v) in report.summary_fields() {
        println!("{k}: {v:.4}");
    }
    Ok(())
}

fn cmd_gradcheck(opts: &GradcheckOptions, out: &Path) -> Result<()> {
    let report = run_gradcheck(opts)?;
    report.write_csv(&out.join("gradcheck.csv"))?;
    for r in &report.rows {
        println!(
            "{} {}/{}: max error {:.3e} (tolerance {:.1e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.suite,
            r.check,
            r.max_error,
            r.tolerance,
        );
    }
    let failing: Vec<String> = report
        .failures()
        .map(|r| format!("{}/{} worst case: {}", r.suite, r.check, r.worst_case))
        .collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(Error::Verification(failing.join("; ")))
    }
}
