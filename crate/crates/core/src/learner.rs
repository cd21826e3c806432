//! Common interface over fitted regressors plus the serializable learner
//! configuration used by the ensemble and the pipelines.

use serde::{Deserialize, Serialize};

use crate::ensemble::{fit_linear, fit_relative, fit_vote, LinearModel, RelativeModel, Transform, VoteModel};
use crate::error::{Error, Result};
use crate::gbt::{fit_gbt, GbtModel, GbtParams};
use crate::matrix::Matrix;
use crate::mlp::{fit_mlp, MlpModel, MlpParams};

pub trait Regressor {
    fn n_features(&self) -> usize;

    fn predict_row(&self, row: &[f64]) -> Result<f64>;

    fn predict(&self, features: &Matrix) -> Result<Vec<f64>> {
        if features.cols() != self.n_features() {
            return Err(Error::argument(format!(
                "model expects {} features, got {}",
                self.n_features(),
                features.cols()
            )));
        }
        features.iter_rows().map(|r| self.predict_row(r)).collect()
    }

    fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() == self.n_features() {
            Ok(())
        } else {
            Err(Error::argument(format!(
                "model expects {} features, got {}",
                self.n_features(),
                row.len()
            )))
        }
    }
}

/// Predicts one value regardless of input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantModel {
    pub value: f64,
    pub n_features: usize,
}

impl ConstantModel {
    pub fn new(value: f64, n_features: usize) -> Self {
        ConstantModel { value, n_features }
    }
}

impl Regressor for ConstantModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        self.check_row(row)?;
        Ok(self.value)
    }
}

/// How to train one regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerConfig {
    Gbt(GbtParams),
    NeuralNet(MlpParams),
    Linear,
    Relative {
        base_feature: String,
        transform: Transform,
        inner: Box<LearnerConfig>,
    },
    Vote {
        members: Vec<LearnerConfig>,
        parallel: bool,
    },
}

impl LearnerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerConfig::Gbt(_) => "gbt",
            LearnerConfig::NeuralNet(_) => "neural_net",
            LearnerConfig::Linear => "linear",
            LearnerConfig::Relative { .. } => "relative",
            LearnerConfig::Vote { .. } => "vote",
        }
    }

    /// Trains on `features`; `seed` replaces any seed stored in the config.
    pub fn fit(
        &self,
        features: &Matrix,
        targets: &[f64],
        feature_names: &[String],
        seed: u64,
    ) -> Result<TrainedModel> {
        Ok(match self {
            LearnerConfig::Gbt(p) => {
                TrainedModel::Gbt(fit_gbt(features, targets, feature_names, GbtParams { seed, ..*p })?)
            }
            LearnerConfig::NeuralNet(p) => {
                TrainedModel::NeuralNet(fit_mlp(features, targets, &MlpParams { seed, ..p.clone() })?)
            }
            LearnerConfig::Linear => TrainedModel::Linear(fit_linear(features, targets)?),
            LearnerConfig::Relative {
                base_feature,
                transform,
                inner,
            } => TrainedModel::Relative(fit_relative(
                features,
                targets,
                feature_names,
                base_feature,
                *transform,
                inner,
                seed,
            )?),
            LearnerConfig::Vote { members, parallel } => TrainedModel::Vote(fit_vote(
                members,
                features,
                targets,
                feature_names,
                seed,
                *parallel,
            )?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum TrainedModel {
    Constant(ConstantModel),
    Gbt(GbtModel),
    NeuralNet(MlpModel),
    Linear(LinearModel),
    Relative(RelativeModel),
    Vote(VoteModel),
}

impl TrainedModel {
    fn inner(&self) -> &dyn Regressor {
        match self {
            TrainedModel::Constant(m) => m,
            TrainedModel::Gbt(m) => m,
            TrainedModel::NeuralNet(m) => m,
            TrainedModel::Linear(m) => m,
            TrainedModel::Relative(m) => m,
            TrainedModel::Vote(m) => m,
        }
    }
}

impl Regressor for TrainedModel {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        self.inner().predict_row(row)
    }
}
