//! Probabilistic regression with input-dependent Gaussian mixtures trained on
//! a hybrid of the logarithmic score and the closed-form energy score.
//!
//! * [`mixture`]: the mixture distribution, its moments, CDF, quantiles and sampling
//! * [`scoring`]: log score, analytic and Monte Carlo energy score, hybrid score, gradients
//! * [`network`]: MLP with a bounded mixture head, reverse mode and Adam
//! * [`training`]: mini-batch training, grids, replicated experiments
//! * [`datasets`]: toy generators, CSV ingestion, splitting and standardization
//! * [`metrics`]: RMSE, NLL, PICP/MPIW and component recovery
//! * [`verify`]: finite-difference, oracle, asymptotic and properness suites
//! * [`cli`]: the `energymix` command line

pub mod cli;
pub mod config;
pub mod datasets;
pub mod error;
pub mod metrics;
pub mod mixture;
pub mod model;
pub mod network;
pub mod rng;
pub mod scoring;
pub mod special;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use mixture::{HeadBounds, MixtureParams, PredictiveSummary};
pub use model::TrainedModel;
pub use network::{Activation, NetworkSpec, NetworkWeights};
pub use scoring::{ScoreConfig, ScoreGradient};
pub use training::{TrainConfig, TrainReport};
