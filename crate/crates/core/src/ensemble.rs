//! Least squares, relative regression and the averaging vote.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{LearnerConfig, Regressor, TrainedModel};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl Regressor for LinearModel {
    fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        self.check_row(row)?;
        Ok(self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>())
    }
}

/// Ordinary least squares with intercept.
///
/// The centred design is solved through an SVD; singular values below
/// `max(n, p) * eps * sigma_max` are dropped, which yields the minimum-norm
/// coefficients on rank-deficient designs.
pub fn fit_linear(features: &Matrix, targets: &[f64]) -> Result<LinearModel> {
    let (n, p) = (features.rows(), features.cols());
    if n != targets.len() {
        return Err(Error::argument("feature rows and targets differ in length"));
    }
    if n < p + 1 {
        return Err(Error::Underdetermined { rows: n, features: p });
    }
    if let Some((row, col)) = features.first_non_finite() {
        return Err(Error::argument(format!("non-finite feature at row {row}, column {col}")));
    }
    if let Some(row) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::argument(format!("non-finite target at row {row}")));
    }
    let means: Vec<f64> = (0..p)
        .map(|j| features.iter_rows().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let y_mean = targets.iter().sum::<f64>() / n as f64;
    if p == 0 {
        return Ok(LinearModel {
            coefficients: vec![],
            intercept: y_mean,
        });
    }
    let x = DMatrix::from_fn(n, p, |i, j| features.get(i, j) - means[j]);
    let y = DVector::from_iterator(n, targets.iter().map(|t| t - y_mean));
    let svd = x.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let tol = n.max(p) as f64 * f64::EPSILON * sigma_max;
    let beta = if sigma_max == 0.0 {
        DVector::zeros(p)
    } else {
        svd.solve(&y, tol).map_err(|e| Error::Invariant(format!("svd solve failed: {e}")))?
    };
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean - coefficients.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel {
        coefficients,
        intercept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Difference,
    Ratio,
}

impl Transform {
    fn forward(self, y: f64, base: f64) -> f64 {
        match self {
            Transform::Difference => y - base,
            Transform::Ratio => y / base,
        }
    }

    fn inverse(self, z: f64, base: f64) -> f64 {
        match self {
            Transform::Difference => z + base,
            Transform::Ratio => z * base,
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Difference => "difference",
            Transform::Ratio => "ratio",
        })
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "difference" => Ok(Transform::Difference),
            "ratio" => Ok(Transform::Ratio),
            other => Err(Error::argument(format!(
                "unknown transform '{other}' (expected difference or ratio)"
            ))),
        }
    }
}

/// Inner model fitted to targets expressed relative to one feature column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeModel {
    pub base_feature: String,
    pub base_index: usize,
    pub transform: Transform,
    pub inner: Box<TrainedModel>,
}

impl RelativeModel {
    /// Applies the inverse transform to an inner prediction.
    pub fn compose(&self, inner_prediction: f64, row: &[f64]) -> f64 {
        self.transform.inverse(inner_prediction, row[self.base_index])
    }
}

impl Regressor for RelativeModel {
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        self.check_row(row)?;
        Ok(self.compose(self.inner.predict_row(row)?, row))
    }
}

pub fn fit_relative(
    features: &Matrix,
    targets: &[f64],
    feature_names: &[String],
    base_feature: &str,
    transform: Transform,
    inner: &LearnerConfig,
    seed: u64,
) -> Result<RelativeModel> {
    if features.rows() != targets.len() {
        return Err(Error::argument("feature rows and targets differ in length"));
    }
    let base_index = feature_names
        .iter()
        .position(|n| n == base_feature)
        .ok_or_else(|| Error::argument(format!("base feature '{base_feature}' not among the features")))?;
    let bases = features.column(base_index);
    if transform == Transform::Ratio {
        if let Some(index) = bases.iter().position(|b| *b == 0.0) {
            return Err(Error::DivisionGuard { index });
        }
    }
    let relative: Vec<f64> = targets
        .iter()
        .zip(&bases)
        .map(|(y, b)| transform.forward(*y, *b))
        .collect();
    let inner = inner.fit(features, &relative, feature_names, seed)?;
    Ok(RelativeModel {
        base_feature: base_feature.to_string(),
        base_index,
        transform,
        inner: Box::new(inner),
    })
}

/// Unweighted mean of member predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteModel {
    pub members: Vec<TrainedModel>,
}

impl VoteModel {
    pub fn new(members: Vec<TrainedModel>) -> Result<VoteModel> {
        let Some(first) = members.first() else {
            return Err(Error::argument("a vote needs at least one member"));
        };
        let n = first.n_features();
        if members.iter().any(|m| m.n_features() != n) {
            return Err(Error::argument("vote members disagree on the feature count"));
        }
        Ok(VoteModel { members })
    }

    pub fn member_predictions(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.members.iter().map(|m| m.predict_row(row)).collect()
    }
}

impl Regressor for VoteModel {
    fn n_features(&self) -> usize {
        self.members[0].n_features()
    }

    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        self.check_row(row)?;
        let preds = self.member_predictions(row)?;
        Ok(preds.iter().sum::<f64>() / preds.len() as f64)
    }
}

/// Trains every member on the same data, member `i` with seed
/// `base_seed + i`. The first failing member (in configuration order) aborts
/// the fit.
pub fn fit_vote(
    members: &[LearnerConfig],
    features: &Matrix,
    targets: &[f64],
    feature_names: &[String],
    base_seed: u64,
    parallel: bool,
) -> Result<VoteModel> {
    if members.is_empty() {
        return Err(Error::argument("a vote needs at least one member"));
    }
    let train = |(i, cfg): (usize, &LearnerConfig)| {
        cfg.fit(features, targets, feature_names, base_seed.wrapping_add(i as u64))
            .map_err(|e| Error::Member {
                index: i,
                name: cfg.name().to_string(),
                source: Box::new(e),
            })
    };
    let results: Vec<Result<TrainedModel>> = if parallel {
        members.par_iter().enumerate().map(train).collect()
    } else {
        members.iter().enumerate().map(train).collect()
    };
    VoteModel::new(results.into_iter().collect::<Result<_>>()?)
}
