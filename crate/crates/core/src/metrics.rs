//! Evaluation metrics for mixture forecasts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::GroundTruth;
use crate::error::{Error, Result};
use crate::mixture::{MixtureParams, PredictiveSummary};
use crate::scoring::{log_score, pairwise_sum};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{a} predictions for {b} references")));
    }
    if a == 0 {
        return Err(Error::Domain("empty evaluation set".into()));
    }
    Ok(())
}

fn rmse(pairs: impl Iterator<Item = (f64, f64)>, n: usize) -> f64 {
    let sq: Vec<f64> = pairs.map(|(a, b)| (a - b) * (a - b)).collect();
    (pairwise_sum(&sq) / n as f64).sqrt()
}

/// RMSE of the predicted mean and standard deviation against known truth.
pub fn rmse_against_truth(
    outputs: &[PredictiveSummary],
    truth_mean: &[f64],
    truth_std: &[f64],
) -> Result<(f64, f64)> {
    check_lengths(outputs.len(), truth_mean.len())?;
    check_lengths(outputs.len(), truth_std.len())?;
    let n = outputs.len();
    Ok((
        rmse(outputs.iter().map(|o| o.mean).zip(truth_mean.iter().copied()), n),
        rmse(outputs.iter().map(|o| o.std).zip(truth_std.iter().copied()), n),
    ))
}

/// Mean negative log predictive density. Pass parameters in the scale the
/// NLL should be reported in.
pub fn predictive_nll(params: &[MixtureParams], y: &[f64]) -> Result<f64> {
    check_lengths(params.len(), y.len())?;
    let s: Vec<f64> = params.iter().zip(y).map(|(p, &y)| log_score(p, y)).collect();
    Ok(pairwise_sum(&s) / s.len() as f64)
}

/// Coverage and mean width of central prediction intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMetrics {
    pub picp: f64,
    pub mpiw: f64,
    pub intervals: Vec<(f64, f64)>,
}

/// Central intervals from mixture quantiles at `(1 - level) / 2` and
/// `(1 + level) / 2`. Boundary hits count as covered.
pub fn interval_metrics(params: &[MixtureParams], y: &[f64], level: f64) -> Result<IntervalMetrics> {
    check_lengths(params.len(), y.len())?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("interval level {level} outside (0, 1)")));
    }
    let intervals = params
        .iter()
        .map(|p| p.central_interval(level))
        .collect::<Result<Vec<_>>>()?;
    let covered = intervals
        .iter()
        .zip(y)
        .filter(|((lo, hi), &y)| *lo <= y && y <= *hi)
        .count();
    let widths: Vec<f64> = intervals.iter().map(|(lo, hi)| hi - lo).collect();
    let n = y.len() as f64;
    Ok(IntervalMetrics {
        picp: covered as f64 / n,
        mpiw: pairwise_sum(&widths) / n,
        intervals,
    })
}

/// Per-family RMSE between fitted and true components after label alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentErrors {
    pub pi_rmse: f64,
    pub mu_rmse: f64,
    pub sigma_rmse: f64,
    /// Fitted component `permutation[k]` is matched to true component `k`.
    pub permutation: Vec<usize>,
    /// Average fitted std of each aligned component over all points.
    pub fitted_std_means: Vec<f64>,
}

/// Aligns components with one global permutation (the one minimizing the
/// summed squared distance between fitted and true means over all points),
/// then reports RMSE per parameter family.
pub fn component_recovery_error(
    fitted: &[MixtureParams],
    truth: &[MixtureParams],
) -> Result<ComponentErrors> {
    check_lengths(fitted.len(), truth.len())?;
    let k = truth[0].k();
    if fitted.iter().chain(truth).any(|p| p.k() != k) {
        return Err(Error::Domain("fitted and true mixtures differ in component count".into()));
    }
    // cost[t][f]: squared mean distance when fitted f plays true t
    let mut cost = vec![vec![0.0; k]; k];
    for (fp, tp) in fitted.iter().zip(truth) {
        for (t, row) in cost.iter_mut().enumerate() {
            for (f, c) in row.iter_mut().enumerate() {
                let d = fp.means()[f] - tp.means()[t];
                *c += d * d;
            }
        }
    }
    let permutation = best_assignment(&cost);
    let n = fitted.len() * k;
    let family = |get: fn(&MixtureParams) -> &[f64]| {
        let pairs = fitted.iter().zip(truth).flat_map(|(fp, tp)| {
            let f = get(fp);
            let t = get(tp);
            permutation.iter().enumerate().map(move |(ti, &fi)| (f[fi], t[ti]))
        });
        rmse(pairs, n)
    };
    let fitted_std_means = permutation
        .iter()
        .map(|&f| fitted.iter().map(|p| p.stds()[f]).sum::<f64>() / fitted.len() as f64)
        .collect();
    Ok(ComponentErrors {
        fitted_std_means,
        pi_rmse: family(MixtureParams::weights),
        mu_rmse: family(MixtureParams::means),
        sigma_rmse: family(MixtureParams::stds),
        permutation,
    })
}

/// Minimum-cost assignment: exhaustive for `K <= 8`, greedy above.
fn best_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let k = cost.len();
    if k <= 8 {
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best = perm.clone();
        let mut best_cost = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let c: f64 = p.iter().enumerate().map(|(t, &f)| cost[t][f]).sum();
            if c < best_cost {
                best_cost = c;
                best = p.to_vec();
            }
        });
        best
    } else {
        let mut used = vec![false; k];
        let mut out = vec![0; k];
        for (t, row) in cost.iter().enumerate() {
            let f = (0..k)
                .filter(|&f| !used[f])
                .min_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap();
            used[f] = true;
            out[t] = f;
        }
        out
    }
}

fn permute(p: &mut Vec<usize>, i: usize, visit: &mut dyn FnMut(&[usize])) {
    if i == p.len() {
        visit(p);
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permute(p, i + 1, visit);
        p.swap(i, j);
    }
}

/// One row of the per-point output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: Vec<f64>,
    pub y: f64,
    pub mean: f64,
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub level: f64,
    /// RMSE of the predictive mean against observed targets.
    pub rmse_y: f64,
    /// RMSE of the predictive mean against the true conditional mean.
    pub rmse_mean: Option<f64>,
    /// RMSE of the predictive std against the true conditional std.
    pub rmse_std: Option<f64>,
    pub nll: f64,
    pub picp: f64,
    pub mpiw: f64,
    pub pi_rmse: Option<f64>,
    pub mu_rmse: Option<f64>,
    pub sigma_rmse: Option<f64>,
    /// Aligned per-component average fitted std, when component truth exists.
    pub component_std_means: Option<Vec<f64>>,
    #[serde(skip)]
    pub per_point: Vec<PointRecord>,
}

/// Full report for predictions in the original target scale.
pub fn evaluate(
    x: &[Vec<f64>],
    params: &[MixtureParams],
    y: &[f64],
    truth: Option<&GroundTruth>,
    level: f64,
) -> Result<EvalReport> {
    check_lengths(params.len(), y.len())?;
    check_lengths(params.len(), x.len())?;
    let summaries: Vec<PredictiveSummary> = params.iter().map(|p| p.moments()).collect();
    let n = y.len();
    let rmse_y = rmse(summaries.iter().map(|s| s.mean).zip(y.iter().copied()), n);
    let nll = predictive_nll(params, y)?;
    let iv = interval_metrics(params, y, level)?;

    let (mut rmse_mean, mut rmse_std) = (None, None);
    let (mut pi_rmse, mut mu_rmse, mut sigma_rmse) = (None, None, None);
    let mut component_std_means = None;
    if let Some(t) = truth {
        let (m, s) = rmse_against_truth(&summaries, &t.mean, &t.std)?;
        rmse_mean = Some(m);
        rmse_std = Some(s);
        if let Some(comps) = &t.components {
            if comps.first().is_some_and(|c| c.k() == params[0].k()) {
                let ce = component_recovery_error(params, comps)?;
                pi_rmse = Some(ce.pi_rmse);
                mu_rmse = Some(ce.mu_rmse);
                sigma_rmse = Some(ce.sigma_rmse);
                component_std_means = Some(ce.fitted_std_means);
            }
        }
    }

    let per_point = (0..n)
        .map(|i| PointRecord {
            x: x[i].clone(),
            y: y[i],
            mean: summaries[i].mean,
            std: summaries[i].std,
            lo: iv.intervals[i].0,
            hi: iv.intervals[i].1,
        })
        .collect();

    Ok(EvalReport {
        n,
        level,
        rmse_y,
        rmse_mean,
        rmse_std,
        nll,
        picp: iv.picp,
        mpiw: iv.mpiw,
        pi_rmse,
        mu_rmse,
        sigma_rmse,
        component_std_means,
        per_point,
    })
}

impl EvalReport {
    /// Summary columns present in this report, in a fixed order.
    pub fn summary_fields(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![
            ("n", self.n as f64),
            ("level", self.level),
            ("rmse_y", self.rmse_y),
        ];
        let opt = [
            ("rmse_m", self.rmse_mean),
            ("rmse_s", self.rmse_std),
        ];
        out.extend(opt.iter().filter_map(|(k, v)| v.map(|v| (*k, v))));
        out.extend([("nll", self.nll), ("picp", self.picp), ("mpiw", self.mpiw)]);
        let comp = [
            ("pi_rmse", self.pi_rmse),
            ("mu_rmse", self.mu_rmse),
            ("sigma_rmse", self.sigma_rmse),
        ];
        out.extend(comp.iter().filter_map(|(k, v)| v.map(|v| (*k, v))));
        out
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let fields = self.summary_fields();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(fields.iter().map(|(k, _)| *k))?;
        w.write_record(fields.iter().map(|(_, v)| v.to_string()))?;
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// `x..., y, mean, std, lo, hi` per evaluated point.
    pub fn write_points_csv(&self, path: &Path, feature_names: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = feature_names.to_vec();
        header.extend(["y", "mean", "std", "lo", "hi"].map(String::from));
        w.write_record(&header)?;
        for p in &self.per_point {
            let mut rec: Vec<String> = p.x.iter().map(|v| v.to_string()).collect();
            rec.extend([p.y, p.mean, p.std, p.lo, p.hi].map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
