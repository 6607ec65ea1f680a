//! TOML configuration for the command-line tool.
//!
//! Values resolve in order: built-in defaults, the config file, environment
//! variables `ENERGYMIX_<SECTION>_<KEY>` (for example
//! `ENERGYMIX_TRAIN_LEARNING_RATE=0.01` or `ENERGYMIX_GRID_ETA="[0, 0.5]"`),
//! then command-line flags. Environment values are parsed as TOML values and
//! fall back to plain strings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::ToyExample;
use crate::error::{Error, Result};
use crate::mixture::HeadBounds;
use crate::network::{Activation, NetworkSpec};
use crate::training::{DataSource, ExperimentSpec, Grid, TrainConfig};

pub const ENV_PREFIX: &str = "ENERGYMIX_";
const SECTIONS: [&str; 5] = ["data", "network", "train", "grid", "experiment"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Toy,
    Csv,
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: SourceKind,
    /// Toy generator and training-set size (`source = "toy"`).
    pub example: ToyExample,
    pub n: usize,
    /// Single CSV re-split per replicate (`source = "csv"`).
    pub path: PathBuf,
    pub ratios: [f64; 3],
    /// Pre-split CSVs (`source = "files"`); an empty test path means none.
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
    /// Target column name, or zero-based index.
    pub target: String,
    pub has_header: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: SourceKind::Toy,
            example: ToyExample::Ex1,
            n: 600,
            path: PathBuf::new(),
            ratios: [0.8, 0.1, 0.1],
            train: PathBuf::from("train.csv"),
            val: PathBuf::from("val.csv"),
            test: PathBuf::from("test.csv"),
            target: "y".into(),
            has_header: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub k: usize,
    pub m_mu: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub pi_min: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let b = HeadBounds::default();
        Self {
            hidden: vec![50],
            activation: Activation::Tanh,
            k: 1,
            m_mu: b.m_mu,
            sigma_min: b.sigma_min,
            sigma_max: b.sigma_max,
            pi_min: b.pi_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub eta: f64,
    pub epochs_max: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub shuffle: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            eta: t.eta,
            epochs_max: t.epochs_max,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            patience: t.patience,
            shuffle: t.shuffle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub seed: u64,
    pub replicates: usize,
    pub level: f64,
    pub out: PathBuf,
    pub jobs: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seed: 0,
            replicates: 1,
            level: 0.95,
            out: PathBuf::from("out"),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: DataSection,
    pub network: NetworkSection,
    pub train: TrainSection,
    pub grid: Grid,
    pub experiment: ExperimentSection,
}

impl Config {
    /// Parses TOML text on top of the defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults, then `path` if given, then environment overrides from `vars`.
    pub fn resolve<I>(path: Option<&Path>, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (key, value) in vars {
            apply_env(&mut table, &key, &value)?;
        }
        // paths of pre-split files are relative to the config file
        let mut cfg = Self::from_table(table)?;
        if let Some(dir) = path.and_then(Path::parent) {
            for p in [&mut cfg.data.path, &mut cfg.data.train, &mut cfg.data.val, &mut cfg.data.test] {
                if !p.as_os_str().is_empty() && p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment.replicates == 0 {
            return Err(Error::Config("experiment.replicates must be at least 1".into()));
        }
        if !(self.experiment.level > 0.0 && self.experiment.level < 1.0) {
            return Err(Error::Config(format!(
                "experiment.level must be in (0, 1), got {}",
                self.experiment.level
            )));
        }
        if self.experiment.jobs == 0 {
            return Err(Error::Config("experiment.jobs must be at least 1".into()));
        }
        if self.data.source == SourceKind::Toy && self.data.n == 0 {
            return Err(Error::Config("data.n must be at least 1".into()));
        }
        self.train_config().validate().map_err(as_config)?;
        self.bounds().validate_for(self.network.k).map_err(as_config)?;
        for &k in &self.grid.k {
            self.bounds().validate_for(k).map_err(as_config)?;
        }
        for &eta in &self.grid.eta {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::Config(format!("grid.eta values must be in [0, 1], got {eta}")));
            }
        }
        for &lr in &self.grid.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("grid.learning_rate values must be positive, got {lr}")));
            }
        }
        Ok(())
    }

    pub fn bounds(&self) -> HeadBounds {
        HeadBounds {
            m_mu: self.network.m_mu,
            sigma_min: self.network.sigma_min,
            sigma_max: self.network.sigma_max,
            pi_min: self.network.pi_min,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            eta: self.train.eta,
            epochs_max: self.train.epochs_max,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            patience: self.train.patience,
            seed: self.experiment.seed,
            shuffle: self.train.shuffle,
        }
    }

    pub fn network_spec(&self, input_dim: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim,
            hidden_layers: self.network.hidden.clone(),
            activation: self.network.activation,
            k_components: self.network.k,
            bounds: self.bounds(),
            seed: self.experiment.seed,
        }
    }

    pub fn data_source(&self) -> DataSource {
        let d = &self.data;
        match d.source {
            SourceKind::Toy => DataSource::Toy {
                example: d.example,
                n: d.n,
            },
            SourceKind::Csv => DataSource::Csv {
                path: d.path.clone(),
                target: d.target.clone(),
                has_header: d.has_header,
                ratios: (d.ratios[0], d.ratios[1], d.ratios[2]),
            },
            SourceKind::Files => DataSource::Files {
                train: d.train.clone(),
                val: d.val.clone(),
                test: (!d.test.as_os_str().is_empty()).then(|| d.test.clone()),
                target: d.target.clone(),
                has_header: d.has_header,
            },
        }
    }

    /// The experiment this config describes, for data of dimension `input_dim`.
    pub fn experiment(&self, input_dim: usize) -> ExperimentSpec {
        ExperimentSpec {
            source: self.data_source(),
            network: self.network_spec(input_dim),
            train: self.train_config(),
            grid: self.grid.clone(),
            base_seed: self.experiment.seed,
            level: self.experiment.level,
        }
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Applies one `ENERGYMIX_<SECTION>_<KEY>` variable; other variables are
/// ignored.
fn apply_env(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let Some(rest) = key.strip_prefix(ENV_PREFIX) else {
        return Ok(());
    };
    let rest = rest.to_ascii_lowercase();
    let Some((section, field)) = SECTIONS
        .iter()
        .find_map(|s| rest.strip_prefix(s).and_then(|r| r.strip_prefix('_')).map(|f| (*s, f)))
    else {
        return Ok(());
    };
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(field.to_string(), parsed);
            Ok(())
        }
        _ => Err(Error::Config(format!("`{section}` is not a section"))),
    }
}

/// Writes the resolved configuration into `dir` as `config.toml`.
pub fn write_manifest(cfg: &Config, dir: &Path) -> Result<()> {
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml_string()).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let d = Config::default();
        let text = d.to_toml_string();
        assert_eq!(Config::from_toml_str(&text).unwrap(), d);
    }

    #[test]
    fn file_values_override_defaults() {
        let c = Config::from_toml_str("[train]\neta = 1.0\n[grid]\nk = [1, 2]\n").unwrap();
        assert_eq!(c.train.eta, 1.0);
        assert_eq!(c.grid.k, vec![1, 2]);
        assert_eq!(c.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn env_overrides() {
        let c = Config::resolve(
            None,
            env(&[
                ("ENERGYMIX_TRAIN_LEARNING_RATE", "0.01"),
                ("ENERGYMIX_GRID_ETA", "[0, 0.5]"),
                ("ENERGYMIX_DATA_EXAMPLE", "ex2"),
                ("ENERGYMIX_SEED", "4"),
                ("PATH", "/bin"),
            ]),
        )
        .unwrap();
        assert_eq!(c.train.learning_rate, 0.01);
        assert_eq!(c.grid.eta, vec![0.0, 0.5]);
        assert_eq!(c.data.example, ToyExample::Ex2);
        assert_eq!(c.experiment.seed, 0);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(matches!(Config::from_toml_str("[train]\netaa = 1\n"), Err(Error::Config(_))));
        assert!(matches!(Config::from_toml_str("[train]\neta = 2.0\n"), Err(Error::Config(_))));
        assert!(matches!(Config::from_toml_str("[grid]\neta = [1.5]\n"), Err(Error::Config(_))));
        assert!(matches!(Config::from_toml_str("[network]\nk = 0\n"), Err(Error::Config(_))));
        assert!(matches!(Config::from_toml_str("not toml"), Err(Error::Config(_))));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[data]\nsource = \"files\"\n").unwrap();
        let c = Config::resolve(Some(&p), Vec::new()).unwrap();
        assert_eq!(c.data.train, dir.path().join("train.csv"));
    }
}
