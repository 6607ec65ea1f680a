//! Mini-batch training with validation early stopping, hyperparameter grids
//! and replicated experiments.

use serde::{Deserialize, Serialize};

use crate::datasets::{split_and_standardize, LabeledDataset, Standardization, ToyExample, TargetColumn};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, rmse_against_truth, EvalReport};
use crate::model::TrainedModel;
use crate::network::{
    adam_step, backward_into, forward, init_weights, NetworkSpec, NetworkWeights, OptimizerState,
    WeightGradient,
};
use crate::rng::{derive_seed, seeded_rng};
use crate::scoring::{hybrid_score, hybrid_value_and_grad, pairwise_sum, ScoreConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub eta: f64,
    pub epochs_max: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.5,
            epochs_max: 2000,
            batch_size: 32,
            learning_rate: 0.005,
            patience: 50,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ScoreConfig::new(self.eta)?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs_max == 0 {
            return Err(Error::Config("epochs_max must be >= 1".into()));
        }
        if self.patience > self.epochs_max {
            return Err(Error::Config("patience cannot exceed epochs_max".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Network restored to the epoch with the lowest validation loss.
    pub model: TrainedModel,
    pub train_loss_curve: Vec<f64>,
    pub val_loss_curve: Vec<f64>,
    /// Zero-based index into the loss curves.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn write_loss_curves(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_loss", "val_loss"])?;
        for (i, (t, v)) in self.train_loss_curve.iter().zip(&self.val_loss_curve).enumerate() {
            w.write_record([i.to_string(), t.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Mean hybrid loss of `weights` over standardized rows.
pub fn dataset_loss(weights: &NetworkWeights, xs: &[Vec<f64>], ys: &[f64], cfg: ScoreConfig) -> Result<f64> {
    let scores = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| forward(weights, x).map(|(p, _)| hybrid_score(&p, y, cfg)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&scores) / scores.len() as f64)
}

/// Mean hybrid loss over a batch and its gradient with respect to every weight.
pub fn batch_loss_and_grad(
    weights: &NetworkWeights,
    xs: &[&[f64]],
    ys: &[f64],
    cfg: ScoreConfig,
    grad: &mut WeightGradient,
) -> Result<f64> {
    let scale = 1.0 / xs.len() as f64;
    grad.layers.iter_mut().for_each(|l| {
        l.weights.iter_mut().for_each(|v| *v = 0.0);
        l.biases.iter_mut().for_each(|v| *v = 0.0);
    });
    let mut losses = Vec::with_capacity(xs.len());
    for (x, &y) in xs.iter().zip(ys) {
        let (params, trace) = forward(weights, x)?;
        let (loss, g) = hybrid_value_and_grad(&params, y, cfg);
        if !loss.is_finite() || !g.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss {loss} at y = {y} with weights {:?}, means {:?}, stds {:?}",
                params.weights(),
                params.means(),
                params.stds()
            )));
        }
        losses.push(loss);
        backward_into(weights, &trace, &g, scale, grad)?;
    }
    Ok(pairwise_sum(&losses) * scale)
}

/// Trains a freshly initialized network on the train split, early-stopping on
/// the validation hybrid loss and restoring the best epoch's weights.
pub fn train(spec: &NetworkSpec, data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    spec.validate()?;
    let split = data.split()?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Domain("training needs non-empty train and validation splits".into()));
    }
    if data.dim() != spec.input_dim {
        return Err(Error::Shape(format!(
            "data has {} features, network expects {}",
            data.dim(),
            spec.input_dim
        )));
    }
    let standardization = match &data.standardization {
        Some(s) => s.clone(),
        None => {
            let rows: Vec<&[f64]> = split.train.iter().map(|&i| data.features[i].as_slice()).collect();
            let ys: Vec<f64> = split.train.iter().map(|&i| data.targets[i]).collect();
            Standardization::fit(&rows, &ys)?
        }
    };
    let prep = |rows: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            rows.iter().map(|&i| standardization.features(&data.features[i])).collect(),
            rows.iter().map(|&i| standardization.target(data.targets[i])).collect(),
        )
    };
    let (train_x, train_y) = prep(&split.train);
    let (val_x, val_y) = prep(&split.val);

    let score_cfg = ScoreConfig::new(cfg.eta)?;
    let mut weights = init_weights(spec)?;
    let mut opt = OptimizerState::new(&weights);
    let mut grad = WeightGradient::zeros_like(&weights);

    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut train_curve = Vec::new();
    let mut val_curve = Vec::new();
    let mut best = (f64::INFINITY, 0usize, weights.clone());
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs_max {
        if cfg.shuffle {
            use rand::seq::SliceRandom;
            order.sort_unstable();
            order.shuffle(&mut seeded_rng(derive_seed(cfg.seed, epoch as u64)));
        }
        let mut epoch_losses = Vec::with_capacity(order.len().div_ceil(cfg.batch_size));
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| train_x[i].as_slice()).collect();
            let ys: Vec<f64> = chunk.iter().map(|&i| train_y[i]).collect();
            let loss = batch_loss_and_grad(&weights, &xs, &ys, score_cfg, &mut grad)
                .map_err(|e| divergence(epoch, b, e))?;
            adam_step(&mut weights, &grad, &mut opt, cfg.learning_rate)
                .map_err(|e| divergence(epoch, b, e))?;
            epoch_losses.push(loss * chunk.len() as f64);
        }
        train_curve.push(pairwise_sum(&epoch_losses) / order.len() as f64);

        let val = dataset_loss(&weights, &val_x, &val_y, score_cfg)?;
        if !val.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                detail: format!("validation loss {val}"),
            });
        }
        val_curve.push(val);
        if val < best.0 {
            best = (val, epoch, weights.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience && cfg.patience > 0 {
                stopped_early = true;
                break;
            }
        }
    }

    let (_, best_epoch, best_weights) = best;
    Ok(TrainReport {
        model: TrainedModel::new(best_weights, standardization, cfg.eta),
        train_loss_curve: train_curve,
        val_loss_curve: val_curve,
        best_epoch,
        stopped_early,
    })
}

fn divergence(epoch: usize, batch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(detail) => Error::Divergence { epoch, batch, detail },
        other => other,
    }
}

/// Hyperparameter values crossed by [`grid_search`]. Empty lists fall back to
/// the base configuration's value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub eta: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub k: Vec<usize>,
}

impl Grid {
    fn cells(&self, spec: &NetworkSpec, cfg: &TrainConfig) -> Vec<(f64, f64, usize)> {
        let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        let ks = if self.k.is_empty() { vec![spec.k_components] } else { self.k.clone() };
        let mut out = Vec::new();
        for &k in &ks {
            for &eta in &or(&self.eta, cfg.eta) {
                for &lr in &or(&self.learning_rate, cfg.learning_rate) {
                    out.push((eta, lr, k));
                }
            }
        }
        out
    }
}

/// One trained cell of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub eta: f64,
    pub learning_rate: f64,
    pub k: usize,
    /// Selection criterion on the validation split (lower is better).
    pub criterion: f64,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

pub struct GridResult {
    pub best_index: usize,
    pub best_spec: NetworkSpec,
    pub best_config: TrainConfig,
    pub best_report: TrainReport,
    pub table: Vec<GridRecord>,
}

impl GridResult {
    pub fn write_table(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.table {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Validation criterion: `RMSE(m) + RMSE(s)` against the true conditional
/// mean and std when the data carries ground truth, otherwise the RMSE of the
/// predictive mean against the observed targets. Original target scale.
pub fn validation_criterion(model: &TrainedModel, data: &LabeledDataset) -> Result<f64> {
    let val = &data.split()?.val;
    let xs: Vec<Vec<f64>> = val.iter().map(|&i| data.features[i].clone()).collect();
    let summaries: Vec<_> = model
        .predict_batch(&xs)?
        .iter()
        .map(|p| p.moments())
        .collect();
    match &data.ground_truth {
        Some(t) => {
            let m: Vec<f64> = val.iter().map(|&i| t.mean[i]).collect();
            let s: Vec<f64> = val.iter().map(|&i| t.std[i]).collect();
            let (rm, rs) = rmse_against_truth(&summaries, &m, &s)?;
            Ok(rm + rs)
        }
        None => {
            let sq: Vec<f64> = summaries
                .iter()
                .zip(val)
                .map(|(s, &i)| (s.mean - data.targets[i]).powi(2))
                .collect();
            Ok((pairwise_sum(&sq) / sq.len() as f64).sqrt())
        }
    }
}

/// Trains every grid cell and keeps the one with the lowest validation
/// criterion (first wins on ties). With `jobs > 1` cells train in parallel;
/// the result does not depend on `jobs`.
pub fn grid_search(
    spec_base: &NetworkSpec,
    data: &LabeledDataset,
    grid: &Grid,
    base: &TrainConfig,
    jobs: usize,
) -> Result<GridResult> {
    let cells = grid.cells(spec_base, base);
    if cells.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let run_cell = |&(eta, lr, k): &(f64, f64, usize)| -> Result<(NetworkSpec, TrainConfig, TrainReport, f64)> {
        let spec = NetworkSpec {
            k_components: k,
            ..spec_base.clone()
        };
        let cfg = TrainConfig {
            eta,
            learning_rate: lr,
            ..base.clone()
        };
        let report = train(&spec, data, &cfg)?;
        let crit = validation_criterion(&report.model, data)?;
        Ok((spec, cfg, report, crit))
    };
    let results: Vec<Result<_>> = if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    } else {
        cells.iter().map(run_cell).collect()
    };
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let table: Vec<GridRecord> = results
        .iter()
        .map(|(spec, cfg, rep, crit)| GridRecord {
            eta: cfg.eta,
            learning_rate: cfg.learning_rate,
            k: spec.k_components,
            criterion: *crit,
            best_val_loss: rep.val_loss_curve[rep.best_epoch],
            best_epoch: rep.best_epoch,
            epochs_run: rep.val_loss_curve.len(),
        })
        .collect();
    let best_index = table
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| if r.criterion < table[best].criterion { i } else { best });
    let (best_spec, best_config, best_report, _) = results.into_iter().nth(best_index).unwrap();
    Ok(GridResult {
        best_index,
        best_spec,
        best_config,
        best_report,
        table,
    })
}

/// Where an experiment's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    /// Fresh toy data per replicate.
    Toy { example: ToyExample, n: usize },
    /// One CSV, re-split per replicate.
    Csv {
        path: std::path::PathBuf,
        target: String,
        has_header: bool,
        ratios: (f64, f64, f64),
    },
    /// Pre-split CSVs, as written by `energymix generate`; identical for
    /// every replicate.
    Files {
        train: std::path::PathBuf,
        val: std::path::PathBuf,
        test: Option<std::path::PathBuf>,
        target: String,
        has_header: bool,
    },
}

impl DataSource {
    /// Dataset for the replicate seeded by `seed`.
    pub fn materialize(&self, seed: u64) -> Result<LabeledDataset> {
        match self {
            DataSource::Toy { example, n } => example.generate(*n, seed),
            DataSource::Csv {
                path,
                target,
                has_header,
                ratios,
            } => {
                let target: TargetColumn = target.parse().unwrap();
                let data = crate::datasets::load_csv(path, &target, *has_header)?;
                split_and_standardize(data, *ratios, seed)
            }
            DataSource::Files {
                train,
                val,
                test,
                target,
                has_header,
            } => {
                let target: TargetColumn = target.parse().unwrap();
                let load = |p: &std::path::Path| crate::datasets::load_csv(p, &target, *has_header);
                let test = test.as_deref().map(load).transpose()?;
                let mut data = LabeledDataset::from_partitions(load(train)?, load(val)?, test)?;
                data.standardize()?;
                Ok(data)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub source: DataSource,
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub grid: Grid,
    pub base_seed: u64,
    /// Nominal coverage of the reported prediction intervals.
    pub level: f64,
}

/// Outcome of one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub seed: u64,
    pub result: std::result::Result<ReplicateRun, String>,
}

#[derive(Debug, Clone)]
pub struct ReplicateRun {
    pub chosen: GridRecord,
    pub test: EvalReport,
    pub table: Vec<GridRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct ReplicateSummary {
    pub outcomes: Vec<ReplicateOutcome>,
    pub metrics: Vec<MetricSummary>,
    pub failures: usize,
}

impl ReplicateSummary {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == name)
    }

    pub fn successes(&self) -> impl Iterator<Item = &ReplicateRun> {
        self.outcomes.iter().filter_map(|o| o.result.as_ref().ok())
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for m in &self.metrics {
            w.serialize(m)?;
        }
        w.serialize(MetricSummary {
            metric: "failures".into(),
            mean: self.failures as f64,
            std: 0.0,
            count: self.outcomes.len(),
        })?;
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Data and grid-search result for replicate `replicate`. Sub-seeds for the
/// data, network initialization and training order are derived from
/// `(base_seed, replicate)` only.
pub fn fit_replicate(
    experiment: &ExperimentSpec,
    replicate: usize,
    jobs: usize,
) -> Result<(LabeledDataset, GridResult)> {
    let seed = derive_seed(experiment.base_seed, replicate as u64);
    let data = experiment.source.materialize(derive_seed(seed, 0))?;
    let spec = NetworkSpec {
        seed: derive_seed(seed, 1),
        ..experiment.network.clone()
    };
    let cfg = TrainConfig {
        seed: derive_seed(seed, 2),
        ..experiment.train.clone()
    };
    let grid = grid_search(&spec, &data, &experiment.grid, &cfg, jobs)?;
    Ok((data, grid))
}

/// Runs one replicate: data, grid search, test-split evaluation. Depends only
/// on `(experiment, replicate)`.
pub fn run_replicate(experiment: &ExperimentSpec, replicate: usize) -> ReplicateOutcome {
    let seed = derive_seed(experiment.base_seed, replicate as u64);
    let result = (|| -> Result<ReplicateRun> {
        let (data, grid) = fit_replicate(experiment, replicate, 1)?;
        let test = evaluate_split(&grid.best_report.model, &data, &data.split()?.test, experiment.level)?;
        Ok(ReplicateRun {
            chosen: grid.table[grid.best_index].clone(),
            test,
            table: grid.table,
        })
    })();
    ReplicateOutcome {
        replicate,
        seed,
        result: result.map_err(|e| e.to_string()),
    }
}

/// Evaluates `model` on the given rows in the original target scale.
pub fn evaluate_split(
    model: &TrainedModel,
    data: &LabeledDataset,
    rows: &[usize],
    level: f64,
) -> Result<EvalReport> {
    let sub = data.subset(rows);
    let params = model.predict_batch(&sub.features)?;
    evaluate(&sub.features, &params, &sub.targets, sub.ground_truth.as_ref(), level)
}

/// Runs `n_reps` independent replicates and summarizes every metric as mean
/// and standard deviation over the successful ones.
pub fn run_replicates(experiment: &ExperimentSpec, n_reps: usize, jobs: usize) -> Result<ReplicateSummary> {
    if n_reps == 0 {
        return Err(Error::Config("need at least one replicate".into()));
    }
    let outcomes: Vec<ReplicateOutcome> = if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| (0..n_reps).into_par_iter().map(|r| run_replicate(experiment, r)).collect())
    } else {
        (0..n_reps).map(|r| run_replicate(experiment, r)).collect()
    };
    Ok(summarize(outcomes))
}

pub fn summarize(outcomes: Vec<ReplicateOutcome>) -> ReplicateSummary {
    let runs: Vec<&ReplicateRun> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    let failures = outcomes.len() - runs.len();
    let mut names: Vec<&'static str> = Vec::new();
    for r in &runs {
        for (k, _) in r.test.summary_fields() {
            if !names.contains(&k) && k != "n" && k != "level" {
                names.push(k);
            }
        }
    }
    let metrics = names
        .into_iter()
        .map(|name| {
            let vals: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.test.summary_fields().into_iter().find(|(k, _)| *k == name).map(|(_, v)| v))
                .collect();
            let (mean, std) = mean_and_sample_std(&vals);
            MetricSummary {
                metric: name.to_string(),
                mean,
                std,
                count: vals.len(),
            }
        })
        .collect();
    ReplicateSummary {
        outcomes,
        metrics,
        failures,
    }
}

/// Mean and `n - 1` standard deviation; the std of a single value is 0.
pub fn mean_and_sample_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_example1, Split};
    use crate::mixture::HeadBounds;
    use crate::network::Activation;

    fn tiny_spec(k: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim: 1,
            hidden_layers: vec![8],
            activation: Activation::Tanh,
            k_components: k,
            bounds: HeadBounds::default(),
            seed: 5,
        }
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            epochs_max: 30,
            patience: 10,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.patience = c.epochs_max + 1;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.eta = 1.2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn training_is_reproducible() {
        let data = gen_example1(60, 3).unwrap();
        let a = train(&tiny_spec(1), &data, &quick_cfg()).unwrap();
        let b = train(&tiny_spec(1), &data, &quick_cfg()).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.val_loss_curve, b.val_loss_curve);
        assert_eq!(a.train_loss_curve, b.train_loss_curve);
    }

    #[test]
    fn report_restores_best_validation_epoch() {
        let data = gen_example1(60, 3).unwrap();
        let r = train(&tiny_spec(1), &data, &quick_cfg()).unwrap();
        let min = r.val_loss_curve.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(r.val_loss_curve[r.best_epoch], min);
        assert_eq!(r.train_loss_curve.len(), r.val_loss_curve.len());
        // restored weights reproduce the best validation loss
        let split = data.split().unwrap();
        let (vx, vy) = data.standardized_rows(&split.val).unwrap();
        let v = dataset_loss(&r.model.network, &vx, &vy, ScoreConfig::new(0.5).unwrap()).unwrap();
        assert!((v - min).abs() < 1e-12);
    }

    #[test]
    fn training_needs_splits() {
        let mut data = gen_example1(20, 3).unwrap();
        data.set_split(Split {
            train: (0..20).collect(),
            val: vec![],
            test: vec![],
        })
        .unwrap();
        assert!(train(&tiny_spec(1), &data, &quick_cfg()).is_err());
        let mut spec = tiny_spec(1);
        spec.input_dim = 2;
        assert!(train(&spec, &gen_example1(20, 3).unwrap(), &quick_cfg()).is_err());
    }

    #[test]
    fn single_cell_grid_matches_plain_training() {
        let data = gen_example1(40, 8).unwrap();
        let cfg = quick_cfg();
        let plain = train(&tiny_spec(1), &data, &cfg).unwrap();
        let grid = Grid {
            eta: vec![cfg.eta],
            learning_rate: vec![cfg.learning_rate],
            k: vec![1],
        };
        let g = grid_search(&tiny_spec(1), &data, &grid, &cfg, 1).unwrap();
        assert_eq!(g.best_report.model, plain.model);
        assert_eq!(g.table.len(), 1);
    }

    #[test]
    fn grid_result_is_independent_of_jobs() {
        let data = gen_example1(40, 8).unwrap();
        let grid = Grid {
            eta: vec![0.0, 1.0],
            learning_rate: vec![0.01],
            k: vec![],
        };
        let a = grid_search(&tiny_spec(1), &data, &grid, &quick_cfg(), 1).unwrap();
        let b = grid_search(&tiny_spec(1), &data, &grid, &quick_cfg(), 2).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.best_index, b.best_index);
        let best = &a.table[a.best_index];
        assert!(a.table.iter().all(|r| r.criterion >= best.criterion));
    }

    #[test]
    fn summary_of_single_replicate_has_zero_std() {
        assert_eq!(mean_and_sample_std(&[2.5]), (2.5, 0.0));
        assert_eq!(mean_and_sample_std(&[1.0, 1.0, 1.0]), (1.0, 0.0));
        let (m, s) = mean_and_sample_std(&[1.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-15 && (s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn replicates_depend_only_on_seed_and_index() {
        let exp = ExperimentSpec {
            source: DataSource::Toy {
                example: ToyExample::Ex1,
                n: 30,
            },
            network: tiny_spec(1),
            train: TrainConfig {
                epochs_max: 5,
                patience: 5,
                ..TrainConfig::default()
            },
            grid: Grid::default(),
            base_seed: 77,
            level: 0.95,
        };
        let all = run_replicates(&exp, 3, 1).unwrap();
        let third = run_replicate(&exp, 2);
        let a = all.outcomes[2].result.as_ref().unwrap();
        let b = third.result.as_ref().unwrap();
        assert_eq!(a.test.summary_fields(), b.test.summary_fields());
        assert_eq!(all.failures, 0);
        assert_eq!(all.metric("rmse_s").unwrap().count, 3);

        let one = run_replicates(&exp, 1, 1).unwrap();
        assert!(one.metrics.iter().all(|m| m.std == 0.0));
    }
}
