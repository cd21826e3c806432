//! Sliding-window validation over a windowed example set.
//!
//! Fold `k` trains on `train_width` consecutive examples starting at
//! `k * step` and tests on the `test_width` examples that begin `horizon`
//! examples after the last training example (`horizon = 1` means adjacent).
//! Every fold retrains from scratch with seed `base_seed + k`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::learner::Regressor;
use crate::matrix::Matrix;
use crate::metrics::{performance_vector, MeanStd, PerformanceVector};
use crate::windowing::WindowedExampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlidingConfig {
    pub train_width: usize,
    pub step: usize,
    pub test_width: usize,
    pub horizon: usize,
}

impl Default for SlidingConfig {
    fn default() -> Self {
        SlidingConfig {
            train_width: 4,
            step: 1,
            test_width: 4,
            horizon: 1,
        }
    }
}

impl SlidingConfig {
    pub fn min_examples(&self) -> usize {
        self.train_width + (self.horizon - 1) + self.test_width
    }

    fn validate(&self) -> Result<()> {
        if self.train_width == 0 || self.step == 0 || self.test_width == 0 || self.horizon == 0 {
            return Err(Error::argument("sliding validation widths, step and horizon must be positive"));
        }
        Ok(())
    }

    /// Number of folds for `n` examples.
    pub fn fold_count(&self, n: usize) -> usize {
        let need = self.min_examples();
        if n < need || self.step == 0 {
            0
        } else {
            (n - need) / self.step + 1
        }
    }

    /// Inclusive 0-based `(train, test)` index ranges of every fold.
    pub fn layout(&self, n: usize) -> Vec<((usize, usize), (usize, usize))> {
        (0..self.fold_count(n))
            .map(|k| {
                let train_first = k * self.step;
                let train_last = train_first + self.train_width - 1;
                let test_first = train_last + self.horizon;
                ((train_first, train_last), (test_first, test_first + self.test_width - 1))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold_index: usize,
    pub train_range: (usize, usize),
    pub test_range: (usize, usize),
    pub dates: Vec<NaiveDate>,
    pub predictions: Vec<f64>,
    pub actuals: Vec<f64>,
    pub prev_actuals: Vec<f64>,
    pub metrics: PerformanceVector,
}

/// Mean and spread of one headline metric across folds. Folds where the
/// metric is undefined are left out; `folds_defined` says how many remained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMetric {
    pub key: String,
    pub value: Option<MeanStd>,
    pub folds_defined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config: SlidingConfig,
    pub folds: Vec<FoldResult>,
    #[serde(rename = "macro")]
    pub macro_avg: Vec<MacroMetric>,
    pub micro: PerformanceVector,
}

impl ValidationReport {
    pub fn macro_metric(&self, key: &str) -> Option<&MacroMetric> {
        self.macro_avg.iter().find(|m| m.key == key)
    }

    /// Fold predictions concatenated in fold order: (dates, actuals, predictions, prev_actuals).
    pub fn pooled(&self) -> (Vec<NaiveDate>, Vec<f64>, Vec<f64>, Vec<f64>) {
        pool(&self.folds)
    }

    /// Long-format CSV: `fold,date,actual,prediction,prev_actual`.
    pub fn write_folds_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::io("writing folds", e.into());
        w.write_record(["fold", "date", "actual", "prediction", "prev_actual"]).map_err(io)?;
        for f in &self.folds {
            for i in 0..f.actuals.len() {
                w.write_record([
                    f.fold_index.to_string(),
                    f.dates[i].to_string(),
                    f.actuals[i].to_string(),
                    f.predictions[i].to_string(),
                    f.prev_actuals[i].to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::io("writing folds", e))
    }

    /// Text block: `metric: mean +/- std (micro average: ...)`.
    pub fn render(&self) -> String {
        let m = |k: &str| self.macro_metric(k).and_then(|m| m.value);
        let fmt_pair = |v: Option<MeanStd>, pct: bool| match v {
            Some(v) if pct => format!("{:.2}% +/- {:.2}%", v.mean * 100.0, v.std * 100.0),
            Some(v) => format!("{:.3} +/- {:.3}", v.mean, v.std),
            None => "undefined".into(),
        };
        let fmt_one = |v: Option<f64>| v.map_or("undefined".into(), |v| format!("{v:.3}"));
        let micro = &self.micro;
        let mut out = String::new();
        let mut line = |s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        line(format!(
            "Prediction trend accuracy: {} (micro average: {:.3})",
            fmt_pair(m("trend_accuracy"), false),
            micro.trend_accuracy
        ));
        line(format!(
            "Root mean squared error: {} (micro average: {:.3} +/- 0.000)",
            fmt_pair(m("rmse"), false),
            micro.rmse
        ));
        line(format!(
            "Absolute error: {} (micro average: {})",
            fmt_pair(m("absolute_error"), false),
            fmt_pair(Some(micro.absolute_error), false)
        ));
        line(format!(
            "Relative error: {} (micro average: {})",
            fmt_pair(m("relative_error"), true),
            fmt_pair(micro.relative_error, true)
        ));
        line(format!(
            "Squared error: {} (micro average: {})",
            fmt_pair(m("squared_error"), false),
            fmt_pair(Some(micro.squared_error), false)
        ));
        line(format!(
            "Correlation: {} (micro average: {})",
            fmt_pair(m("correlation"), false),
            fmt_one(micro.correlation)
        ));
        line(format!(
            "Squared correlation: {} (micro average: {})",
            fmt_pair(m("squared_correlation"), false),
            fmt_one(micro.squared_correlation)
        ));
        out
    }
}

fn pool(folds: &[FoldResult]) -> (Vec<NaiveDate>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut out = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for f in folds {
        out.0.extend_from_slice(&f.dates);
        out.1.extend_from_slice(&f.actuals);
        out.2.extend_from_slice(&f.predictions);
        out.3.extend_from_slice(&f.prev_actuals);
    }
    out
}

/// Mean and population std of each headline metric over the given fold vectors.
pub fn macro_average(fold_metrics: &[&PerformanceVector]) -> Vec<MacroMetric> {
    let keys = [
        "rmse",
        "trend_accuracy",
        "absolute_error",
        "relative_error",
        "squared_error",
        "correlation",
        "squared_correlation",
    ];
    keys.iter()
        .enumerate()
        .map(|(j, key)| {
            let values: Vec<f64> = fold_metrics.iter().filter_map(|pv| pv.headline()[j].1).collect();
            MacroMetric {
                key: key.to_string(),
                value: (!values.is_empty()).then(|| MeanStd::of(&values)),
                folds_defined: values.len(),
            }
        })
        .collect()
}

/// Runs sliding-window validation with `trainer(features, targets, seed)`.
/// With `parallel` set, folds train concurrently; the report is identical
/// either way.
pub fn sliding_validate<M, F>(
    examples: &WindowedExampleSet,
    trainer: F,
    config: SlidingConfig,
    base_seed: u64,
    parallel: bool,
) -> Result<ValidationReport>
where
    M: Regressor,
    F: Fn(&Matrix, &[f64], u64) -> Result<M> + Sync,
{
    config.validate()?;
    let n = examples.len();
    if n < config.min_examples() {
        return Err(Error::InsufficientData {
            what: "examples for sliding validation",
            needed: config.min_examples(),
            got: n,
        });
    }
    let layout = config.layout(n);
    let run_fold = |(k, &((tr0, tr1), (te0, te1))): (usize, &((usize, usize), (usize, usize)))| {
        let x = examples.features.slice_rows(tr0..tr1 + 1);
        let y = &examples.labels[tr0..tr1 + 1];
        let model = trainer(&x, y, base_seed.wrapping_add(k as u64))?;
        let test = te0..te1 + 1;
        let predictions = model.predict(&examples.features.slice_rows(test.clone()))?;
        let actuals = examples.labels[test.clone()].to_vec();
        let prev_actuals = examples.prev_actuals[test.clone()].to_vec();
        let metrics = performance_vector(&actuals, &predictions, &prev_actuals)?;
        Ok(FoldResult {
            fold_index: k,
            train_range: (tr0, tr1),
            test_range: (te0, te1),
            dates: examples.label_dates[test].to_vec(),
            predictions,
            actuals,
            prev_actuals,
            metrics,
        })
    };
    let folds: Vec<FoldResult> = if parallel {
        layout.par_iter().enumerate().map(run_fold).collect::<Result<_>>()?
    } else {
        layout.iter().enumerate().map(run_fold).collect::<Result<_>>()?
    };

    let per_fold: Vec<&PerformanceVector> = folds.iter().map(|f| &f.metrics).collect();
    let macro_avg = macro_average(&per_fold);
    let (_, actuals, predictions, prev) = pool(&folds);
    let micro = performance_vector(&actuals, &predictions, &prev)?;
    Ok(ValidationReport {
        config,
        folds,
        macro_avg,
        micro,
    })
}
