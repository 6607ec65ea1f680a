//! Labeled regression data: synthetic toy problems with known conditional
//! distributions, CSV ingestion, splitting and train-only standardization.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::MixtureParams;
use crate::rng::seeded_rng;

/// Row indices of the train / validation / test partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::Domain(format!("split index {i} out of range for {n} rows")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Domain(format!("row {i} appears in more than one split")));
            }
        }
        Ok(())
    }
}

/// Affine standardization fitted on the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    /// Columns that were constant on the training rows; their std is set to 1.
    pub constant_features: Vec<bool>,
    pub target_mean: f64,
    pub target_std: f64,
}

impl Standardization {
    pub fn fit(features: &[&[f64]], targets: &[f64]) -> Result<Self> {
        let n = features.len();
        if n == 0 || n != targets.len() {
            return Err(Error::Domain("cannot standardize an empty training set".into()));
        }
        let d = features[0].len();
        let mut feature_mean = vec![0.0; d];
        let mut feature_std = vec![0.0; d];
        let mut constant_features = vec![false; d];
        for j in 0..d {
            let col: Vec<f64> = features.iter().map(|r| r[j]).collect();
            let (m, s) = mean_std(&col);
            feature_mean[j] = m;
            if s > 0.0 {
                feature_std[j] = s;
            } else {
                feature_std[j] = 1.0;
                constant_features[j] = true;
            }
        }
        let (target_mean, ts) = mean_std(targets);
        Ok(Self {
            feature_mean,
            feature_std,
            constant_features,
            target_mean,
            target_std: if ts > 0.0 { ts } else { 1.0 },
        })
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    /// Maps a mixture over standardized targets back to the original scale.
    pub fn unscale_params(&self, p: &MixtureParams) -> Result<MixtureParams> {
        p.affine(self.target_std, self.target_mean)
    }
}

/// Population mean and standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Known conditional distribution for synthetic data, one entry per row.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Component parameters when the truth is itself a mixture with known parts.
    pub components: Option<Vec<MixtureParams>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub split: Option<Split>,
    pub standardization: Option<Standardization>,
    pub ground_truth: Option<GroundTruth>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if features.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} targets",
                features.len(),
                targets.len()
            )));
        }
        let d = features.first().map_or(0, |r| r.len());
        if features.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("feature rows differ in length".into()));
        }
        Ok(Self {
            feature_names: (1..=d).map(|j| format!("x{j}")).collect(),
            target_name: "y".into(),
            features,
            targets,
            split: None,
            standardization: None,
            ground_truth: None,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, |r| r.len())
    }

    pub fn split(&self) -> Result<&Split> {
        self.split
            .as_ref()
            .ok_or_else(|| Error::Domain("dataset has no train/val/test split".into()))
    }

    pub fn set_split(&mut self, split: Split) -> Result<()> {
        split.validate(self.len())?;
        self.split = Some(split);
        self.standardization = None;
        Ok(())
    }

    /// Fits standardization on the train split only.
    pub fn standardize(&mut self) -> Result<&Standardization> {
        let split = self.split()?;
        if split.train.is_empty() {
            return Err(Error::Domain("train split is empty".into()));
        }
        let rows: Vec<&[f64]> = split.train.iter().map(|&i| self.features[i].as_slice()).collect();
        let ys: Vec<f64> = split.train.iter().map(|&i| self.targets[i]).collect();
        let st = Standardization::fit(&rows, &ys)?;
        Ok(self.standardization.insert(st))
    }

    pub fn standardization(&self) -> Result<&Standardization> {
        self.standardization
            .as_ref()
            .ok_or_else(|| Error::Domain("dataset has not been standardized".into()))
    }

    /// Standardized features and targets for the given rows.
    pub fn standardized_rows(&self, rows: &[usize]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let st = self.standardization()?;
        Ok((
            rows.iter().map(|&i| st.features(&self.features[i])).collect(),
            rows.iter().map(|&i| st.target(self.targets[i])).collect(),
        ))
    }

    /// Concatenates separately stored partitions, recording the split.
    pub fn from_partitions(train: Self, val: Self, test: Option<Self>) -> Result<Self> {
        let parts: Vec<Self> = std::iter::once(train).chain(Some(val)).chain(test).collect();
        let d = parts[0].dim();
        if parts.iter().any(|p| p.dim() != d) {
            return Err(Error::Schema("partitions have different feature counts".into()));
        }
        let has_truth = parts.iter().all(|p| p.ground_truth.is_some());
        let mut out = Self::new(Vec::new(), Vec::new())?;
        out.feature_names = parts[0].feature_names.clone();
        out.target_name = parts[0].target_name.clone();
        let mut ranges = Vec::new();
        let mut truth = GroundTruth {
            mean: Vec::new(),
            std: Vec::new(),
            components: Some(Vec::new()),
        };
        for p in parts {
            let start = out.len();
            ranges.push((start..start + p.len()).collect::<Vec<_>>());
            if let Some(t) = p.ground_truth {
                truth.mean.extend(t.mean);
                truth.std.extend(t.std);
                match (truth.components.as_mut(), t.components) {
                    (Some(all), Some(c)) => all.extend(c),
                    _ => truth.components = None,
                }
            }
            out.features.extend(p.features);
            out.targets.extend(p.targets);
        }
        if has_truth {
            out.ground_truth = Some(truth);
        }
        let mut ranges = ranges.into_iter();
        let split = Split {
            train: ranges.next().unwrap(),
            val: ranges.next().unwrap(),
            test: ranges.next().unwrap_or_default(),
        };
        out.set_split(split)?;
        Ok(out)
    }

    /// Rows `idx` as a new unsplit dataset (ground truth carried along).
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            split: None,
            standardization: None,
            ground_truth: self.ground_truth.as_ref().map(|t| GroundTruth {
                mean: idx.iter().map(|&i| t.mean[i]).collect(),
                std: idx.iter().map(|&i| t.std[i]).collect(),
                components: t
                    .components
                    .as_ref()
                    .map(|c| idx.iter().map(|&i| c[i].clone()).collect()),
            }),
        }
    }
}

/// The two synthetic regressions with known conditional laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyExample {
    /// `y = x sin x + x e1 + e2`, `e1, e2 ~ N(0, 0.09)`, `x ~ U[-1, 11]`.
    Ex1,
    /// `y = U x^3 + e`, `P(U = -1) = 0.3`, `e ~ N(0, 9)`, `x ~ U[-4, 4]`.
    Ex2,
}

impl std::str::FromStr for ToyExample {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ex1" | "example1" => Ok(ToyExample::Ex1),
            "ex2" | "example2" => Ok(ToyExample::Ex2),
            other => Err(Error::Config(format!("unknown toy example `{other}`"))),
        }
    }
}

pub const TOY_TEST_SIZE: usize = 300;

impl ToyExample {
    pub fn x_range(self) -> (f64, f64) {
        match self {
            ToyExample::Ex1 => (-1.0, 11.0),
            ToyExample::Ex2 => (-4.0, 4.0),
        }
    }

    /// Number of mixture components of the true conditional law.
    pub fn k(self) -> usize {
        match self {
            ToyExample::Ex1 => 1,
            ToyExample::Ex2 => 2,
        }
    }

    /// True conditional distribution of `y` given `x`.
    pub fn truth(self, x: f64) -> MixtureParams {
        match self {
            ToyExample::Ex1 => {
                MixtureParams::gaussian(x * x.sin(), (0.09 * (x * x + 1.0)).sqrt()).unwrap()
            }
            ToyExample::Ex2 => {
                let c = x * x * x;
                MixtureParams::new(vec![0.3, 0.7], vec![-c, c], vec![3.0, 3.0]).unwrap()
            }
        }
    }

    /// Draws one `(x, y)` pair from the generative model.
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> (f64, f64) {
        let (lo, hi) = self.x_range();
        let x = rng.random_range(lo..hi);
        let y = self.draw_y(x, rng);
        (x, y)
    }

    /// Draws `y` at fixed `x` straight from the generative formula.
    pub fn draw_y<R: Rng + ?Sized>(self, x: f64, rng: &mut R) -> f64 {
        match self {
            ToyExample::Ex1 => {
                let e1: f64 = 0.3 * rng.sample::<f64, _>(StandardNormal);
                let e2: f64 = 0.3 * rng.sample::<f64, _>(StandardNormal);
                x * x.sin() + x * e1 + e2
            }
            ToyExample::Ex2 => {
                let u = if rng.random::<f64>() < 0.3 { -1.0 } else { 1.0 };
                let e: f64 = 3.0 * rng.sample::<f64, _>(StandardNormal);
                u * x * x * x + e
            }
        }
    }

    /// `n` training rows, `0.2 n` validation rows and 300 test rows from the
    /// same generator, standardized on the training rows.
    pub fn generate(self, n: usize, seed: u64) -> Result<LabeledDataset> {
        if n == 0 {
            return Err(Error::Domain("need at least one training sample".into()));
        }
        let n_val = ((0.2 * n as f64).round() as usize).max(1);
        let total = n + n_val + TOY_TEST_SIZE;
        let mut rng = seeded_rng(seed);
        let mut xs = Vec::with_capacity(total);
        let mut ys = Vec::with_capacity(total);
        for _ in 0..total {
            let (x, y) = self.draw(&mut rng);
            xs.push(vec![x]);
            ys.push(y);
        }
        let mut data = LabeledDataset::new(xs, ys)?;
        data.feature_names = vec!["x".into()];
        data.ground_truth = Some(self.truth_for(&data.features));
        data.set_split(Split {
            train: (0..n).collect(),
            val: (n..n + n_val).collect(),
            test: (n + n_val..total).collect(),
        })?;
        data.standardize()?;
        Ok(data)
    }

    pub fn truth_for(self, features: &[Vec<f64>]) -> GroundTruth {
        let comps: Vec<MixtureParams> = features.iter().map(|r| self.truth(r[0])).collect();
        let moments: Vec<_> = comps.iter().map(|c| c.moments()).collect();
        GroundTruth {
            mean: moments.iter().map(|m| m.mean).collect(),
            std: moments.iter().map(|m| m.std).collect(),
            components: Some(comps),
        }
    }
}

pub fn gen_example1(n: usize, seed: u64) -> Result<LabeledDataset> {
    ToyExample::Ex1.generate(n, seed)
}

pub fn gen_example2(n: usize, seed: u64) -> Result<LabeledDataset> {
    ToyExample::Ex2.generate(n, seed)
}

/// Random permutation split by `ratios = (train, val, test)`, then
/// standardization fitted on the training rows.
pub fn split_and_standardize(
    mut data: LabeledDataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<LabeledDataset> {
    let (a, b, c) = ratios;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "split ratios must be positive and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    let n = data.len();
    let n_train = (a * n as f64).round() as usize;
    let n_val = (b * n as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Domain(format!("split of {n} rows leaves an empty partition")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeded_rng(seed));
    let split = Split {
        train: perm[..n_train].to_vec(),
        val: perm[n_train..n_train + n_val].to_vec(),
        test: perm[n_train + n_val..].to_vec(),
    };
    data.set_split(split)?;
    data.standardize()?;
    Ok(data)
}

/// Which column holds the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
}

impl std::str::FromStr for TargetColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        })
    }
}

const TRUTH_MEAN: &str = "m_true";
const TRUTH_STD: &str = "s_true";

enum TruthColumn {
    Mean,
    Std,
    Weight(usize),
    Loc(usize),
    Scale(usize),
}

fn truth_column(name: &str) -> Option<TruthColumn> {
    if name == TRUTH_MEAN {
        return Some(TruthColumn::Mean);
    }
    if name == TRUTH_STD {
        return Some(TruthColumn::Std);
    }
    let body = name.strip_suffix("_true")?;
    let (kind, idx) = [("pi", 0), ("mu", 1), ("sigma", 2)]
        .iter()
        .find_map(|(p, kind)| body.strip_prefix(p).map(|rest| (*kind, rest)))?;
    let k: usize = idx.parse().ok().filter(|&k| k >= 1)?;
    Some(match kind {
        0 => TruthColumn::Weight(k - 1),
        1 => TruthColumn::Loc(k - 1),
        _ => TruthColumn::Scale(k - 1),
    })
}

/// Optional header and numeric rows.
type NumericTable = (Option<Vec<String>>, Vec<Vec<f64>>);

fn read_numeric_csv(path: &Path, has_header: bool) -> Result<NumericTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Option<Vec<String>> = if has_header {
        Some(rdr.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ri, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row_no = ri + 1 + has_header as usize;
        let vals = rec
            .iter()
            .enumerate()
            .map(|(ci, cell)| {
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    row: row_no,
                    column: ci + 1,
                    message: format!("`{cell}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if vals.len() != first.len() {
                return Err(Error::Parse {
                    row: row_no,
                    column: vals.len(),
                    message: format!("expected {} columns", first.len()),
                });
            }
        }
        rows.push(vals);
    }
    Ok((headers, rows))
}

/// Feature rows of a CSV for prediction: every column except ground-truth
/// columns and those named in `drop`. Returns the feature names (empty
/// without a header) and the rows.
pub fn load_feature_csv(path: &Path, has_header: bool, drop: &[&str]) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let (headers, rows) = read_numeric_csv(path, has_header)?;
    let keep: Vec<usize> = match &headers {
        Some(h) => (0..h.len())
            .filter(|&c| truth_column(&h[c]).is_none() && !drop.contains(&h[c].as_str()))
            .collect(),
        None => (0..rows.first().map_or(0, |r| r.len())).collect(),
    };
    let names = headers.map_or_else(Vec::new, |h| keep.iter().map(|&c| h[c].clone()).collect());
    let rows = rows.iter().map(|r| keep.iter().map(|&c| r[c]).collect()).collect();
    Ok((names, rows))
}

/// Reads a numeric CSV. All non-target columns become features, except the
/// ground-truth columns written by [`save_csv`] (`m_true`, `s_true`,
/// `pi<k>_true`, `mu<k>_true`, `sigma<k>_true`), which are recognized by
/// header name.
pub fn load_csv(path: &Path, target: &TargetColumn, has_header: bool) -> Result<LabeledDataset> {
    let (headers, rows) = read_numeric_csv(path, has_header)?;
    let n_cols = headers
        .as_ref()
        .map(|h| h.len())
        .or_else(|| rows.first().map(|r| r.len()))
        .unwrap_or(0);

    let target_idx = match target {
        TargetColumn::Index(i) if *i < n_cols => *i,
        TargetColumn::Index(i) => {
            return Err(Error::Schema(format!("target column {i} missing ({n_cols} columns)")))
        }
        TargetColumn::Name(name) => headers
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::Schema(format!("target column `{name}` not found")))?,
    };

    let mut feature_idx = Vec::new();
    let mut truth_cols: Vec<(usize, TruthColumn)> = Vec::new();
    for c in 0..n_cols {
        if c == target_idx {
            continue;
        }
        match headers.as_ref().and_then(|h| truth_column(&h[c])) {
            Some(t) => truth_cols.push((c, t)),
            None => feature_idx.push(c),
        }
    }
    if feature_idx.is_empty() {
        return Err(Error::Schema("no feature columns besides the target".into()));
    }

    let features: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| feature_idx.iter().map(|&c| r[c]).collect())
        .collect();
    let targets: Vec<f64> = rows.iter().map(|r| r[target_idx]).collect();
    let mut data = LabeledDataset::new(features, targets)?;
    if let Some(h) = &headers {
        data.feature_names = feature_idx.iter().map(|&c| h[c].clone()).collect();
        data.target_name = h[target_idx].clone();
    }
    data.ground_truth = parse_truth(&rows, &truth_cols)?;
    Ok(data)
}

fn parse_truth(rows: &[Vec<f64>], cols: &[(usize, TruthColumn)]) -> Result<Option<GroundTruth>> {
    let find = |pred: &dyn Fn(&TruthColumn) -> bool| cols.iter().find(|(_, t)| pred(t)).map(|(c, _)| *c);
    let (Some(mc), Some(sc)) = (
        find(&|t| matches!(t, TruthColumn::Mean)),
        find(&|t| matches!(t, TruthColumn::Std)),
    ) else {
        return Ok(None);
    };
    let k = cols
        .iter()
        .filter_map(|(_, t)| match t {
            TruthColumn::Weight(k) => Some(k + 1),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let mut components = None;
    if k > 0 {
        let mut idx = vec![[usize::MAX; 3]; k];
        for (c, t) in cols {
            match t {
                TruthColumn::Weight(j) if *j < k => idx[*j][0] = *c,
                TruthColumn::Loc(j) if *j < k => idx[*j][1] = *c,
                TruthColumn::Scale(j) if *j < k => idx[*j][2] = *c,
                _ => {}
            }
        }
        if idx.iter().flatten().any(|&c| c == usize::MAX) {
            return Err(Error::Schema("incomplete component ground-truth columns".into()));
        }
        let comps = rows
            .iter()
            .map(|r| {
                MixtureParams::new(
                    idx.iter().map(|c| r[c[0]]).collect(),
                    idx.iter().map(|c| r[c[1]]).collect(),
                    idx.iter().map(|c| r[c[2]]).collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        components = Some(comps);
    }
    Ok(Some(GroundTruth {
        mean: rows.iter().map(|r| r[mc]).collect(),
        std: rows.iter().map(|r| r[sc]).collect(),
        components,
    }))
}

/// Writes features, target and any ground truth as a headed CSV. Floats use
/// the shortest representation that parses back to the same value.
pub fn save_csv(data: &LabeledDataset, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = data.feature_names.clone();
    header.push(data.target_name.clone());
    let k = data
        .ground_truth
        .as_ref()
        .and_then(|t| t.components.as_ref())
        .and_then(|c| c.first())
        .map_or(0, |c| c.k());
    if data.ground_truth.is_some() {
        header.push(TRUTH_MEAN.into());
        header.push(TRUTH_STD.into());
        if k > 1 {
            for j in 1..=k {
                header.push(format!("pi{j}_true"));
                header.push(format!("mu{j}_true"));
                header.push(format!("sigma{j}_true"));
            }
        }
    }
    wtr.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.features[i].iter().map(|v| v.to_string()).collect();
        rec.push(data.targets[i].to_string());
        if let Some(t) = &data.ground_truth {
            rec.push(t.mean[i].to_string());
            rec.push(t.std[i].to_string());
            if k > 1 {
                let c = &t.components.as_ref().unwrap()[i];
                for j in 0..k {
                    rec.push(c.weights()[j].to_string());
                    rec.push(c.means()[j].to_string());
                    rec.push(c.stds()[j].to_string());
                }
            }
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn example1_truth_values() {
        let t = ToyExample::Ex1.truth(0.0).moments();
        assert_eq!(t.mean, 0.0);
        assert!((t.variance - 0.09).abs() < 1e-15);
        let t = ToyExample::Ex1.truth(11.0).moments();
        assert!((t.variance - 10.98).abs() < 1e-12);
    }

    #[test]
    fn example2_truth_values() {
        let t = ToyExample::Ex2.truth(2.0);
        assert!((t.moments().mean - 3.2).abs() < 1e-12);
        assert_eq!(t.weights(), &[0.3, 0.7]);
        assert_eq!(t.stds(), &[3.0, 3.0]);
        // between-component spread is 0.84 x^6, not 0.138 x^6
        assert!((t.moments().variance - (9.0 + 0.84 * 64.0)).abs() < 1e-10);
    }

    #[test]
    fn generated_split_sizes() {
        let d = gen_example1(600, 1).unwrap();
        let s = d.split().unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (600, 120, 300));
        let d = gen_example2(1000, 1).unwrap();
        let s = d.split().unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1000, 200, 300));
        assert!(gen_example1(0, 1).is_err());
    }

    #[test]
    fn generators_are_reproducible() {
        assert_eq!(gen_example2(50, 9).unwrap(), gen_example2(50, 9).unwrap());
        assert_ne!(gen_example2(50, 9).unwrap().targets, gen_example2(50, 10).unwrap().targets);
    }

    #[test]
    fn split_sizes_follow_ratios() {
        let xs: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let ys: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let d = LabeledDataset::new(xs, ys).unwrap();
        let d = split_and_standardize(d, (0.64, 0.16, 0.20), 3).unwrap();
        let s = d.split().unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (64, 16, 20));
    }

    #[test]
    fn split_rejects_bad_ratios_and_empty_parts() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let d = LabeledDataset::new(xs, vec![0.0; 10]).unwrap();
        assert!(split_and_standardize(d.clone(), (0.5, 0.5, 0.5), 0).is_err());
        assert!(split_and_standardize(d.clone(), (0.9, -0.1, 0.2), 0).is_err());
        assert!(split_and_standardize(d, (0.96, 0.02, 0.02), 0).is_err());
    }

    #[test]
    fn standardized_train_is_centered_and_val_is_not() {
        // shifted rows: validation rows come from a different range
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect();
        let ys: Vec<f64> = (0..40).map(|i| (i as f64).sqrt()).collect();
        let mut d = LabeledDataset::new(xs, ys).unwrap();
        d.set_split(Split {
            train: (0..30).collect(),
            val: (30..35).collect(),
            test: (35..40).collect(),
        })
        .unwrap();
        d.standardize().unwrap();
        let (tx, ty) = d.standardized_rows(&d.split().unwrap().train.clone()).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = tx.iter().map(|r| r[j]).collect();
            let (m, s) = mean_std(&col);
            assert!(m.abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
        }
        let (m, s) = mean_std(&ty);
        assert!(m.abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
        let (vx, _) = d.standardized_rows(&d.split().unwrap().val.clone()).unwrap();
        let vm = vx.iter().map(|r| r[0]).sum::<f64>() / vx.len() as f64;
        assert!(vm > 1.0);
    }

    #[test]
    fn constant_columns_get_unit_std() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![3.0, i as f64]).collect();
        let mut d = LabeledDataset::new(xs, (0..10).map(|i| i as f64).collect()).unwrap();
        d.set_split(Split {
            train: (0..6).collect(),
            val: vec![6, 7],
            test: vec![8, 9],
        })
        .unwrap();
        let st = d.standardize().unwrap();
        assert_eq!(st.feature_std[0], 1.0);
        assert!(st.constant_features[0] && !st.constant_features[1]);
    }

    #[test]
    fn overlapping_split_is_rejected() {
        let mut d = LabeledDataset::new(vec![vec![0.0]; 4], vec![0.0; 4]).unwrap();
        let bad = Split {
            train: vec![0, 1],
            val: vec![1],
            test: vec![3],
        };
        assert!(d.set_split(bad).is_err());
        let oob = Split {
            train: vec![0, 1],
            val: vec![2],
            test: vec![4],
        };
        assert!(d.set_split(oob).is_err());
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_csv_shapes_and_header() {
        let f = write_tmp("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let d = load_csv(f.path(), &TargetColumn::Name("y".into()), true).unwrap();
        assert_eq!((d.len(), d.dim()), (3, 2));
        assert_eq!(d.targets, vec![3.0, 6.0, 9.0]);
        assert_eq!(d.feature_names, vec!["a", "b"]);

        let f = write_tmp("1,2,3\n4,5,6\n");
        let d = load_csv(f.path(), &TargetColumn::Index(0), false).unwrap();
        assert_eq!(d.targets, vec![1.0, 4.0]);
        assert_eq!(d.features[1], vec![5.0, 6.0]);
    }

    #[test]
    fn load_csv_errors() {
        let f = write_tmp("a,y\n1,2\n3,x\n");
        match load_csv(f.path(), &TargetColumn::Name("y".into()), true) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 2)),
            other => panic!("expected parse error, got {other:?}"),
        }
        let f = write_tmp("a,b\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), &TargetColumn::Name("y".into()), true),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            load_csv(f.path(), &TargetColumn::Index(5), true),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn csv_round_trip_with_truth() {
        let d = gen_example2(20, 4).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_csv(&d, f.path()).unwrap();
        let back = load_csv(f.path(), &TargetColumn::Name("y".into()), true).unwrap();
        assert_eq!(back.features, d.features);
        assert_eq!(back.targets, d.targets);
        assert_eq!(back.ground_truth, d.ground_truth);
    }
}
