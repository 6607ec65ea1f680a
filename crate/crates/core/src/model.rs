//! A trained network bundled with the standardization it was trained under,
//! and its on-disk JSON form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::Standardization;
use crate::error::{Error, Result};
use crate::mixture::MixtureParams;
use crate::network::{predict_params, NetworkWeights};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// `eta = 1`: plain mixture density network.
    Nll,
    /// `eta = 0`: energy score only.
    Energy,
    Hybrid,
}

impl Objective {
    pub fn from_eta(eta: f64) -> Self {
        if eta == 1.0 {
            Objective::Nll
        } else if eta == 0.0 {
            Objective::Energy
        } else {
            Objective::Hybrid
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub objective: Objective,
    pub eta: f64,
    pub standardization: Standardization,
    pub network: NetworkWeights,
}

impl TrainedModel {
    pub fn new(network: NetworkWeights, standardization: Standardization, eta: f64) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            objective: Objective::from_eta(eta),
            eta,
            standardization,
            network,
        }
    }

    pub fn k(&self) -> usize {
        self.network.spec.k_components
    }

    pub fn input_dim(&self) -> usize {
        self.network.spec.input_dim
    }

    /// Predictive mixture in the original target scale for raw features `x`.
    pub fn predict(&self, x: &[f64]) -> Result<MixtureParams> {
        if x.len() != self.input_dim() {
            return Err(Error::Schema(format!(
                "data has {} features, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let z = self.standardization.features(x);
        let p = predict_params(&self.network, &z)?;
        self.standardization.unscale_params(&p)
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<MixtureParams>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "model format version {} not supported (expected {MODEL_FORMAT_VERSION})",
                model.version
            )));
        }
        model.network.spec.validate()?;
        if !model.network.is_finite() {
            return Err(Error::Schema("model file contains non-finite weights".into()));
        }
        Ok(model)
    }
}
