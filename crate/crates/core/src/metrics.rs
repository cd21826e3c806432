//! Regression performance metrics and residual summaries.
//!
//! All error terms use `e_i = prediction_i - actual_i`. Spreads reported next
//! to means are population standard deviations. Trend accuracy compares the
//! predicted and actual direction of change against the previous *actual*
//! value, counting a zero change as "not falling".

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat metric keys, in report order.
pub const METRIC_KEYS: [&str; 10] = [
    "rmse",
    "trend_accuracy",
    "absolute_error_mean",
    "absolute_error_std",
    "relative_error_mean",
    "relative_error_std",
    "squared_error_mean",
    "squared_error_std",
    "correlation",
    "squared_correlation",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Arithmetic mean and population standard deviation.
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

/// The seven regression metrics. `None` marks a metric that is undefined for
/// the input (zero variance for correlation, zero actual for relative error).
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceVector {
    pub rmse: f64,
    pub trend_accuracy: f64,
    pub absolute_error: MeanStd,
    pub relative_error: Option<MeanStd>,
    pub squared_error: MeanStd,
    pub correlation: Option<f64>,
    pub squared_correlation: Option<f64>,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::argument(format!("length mismatch: {a} actuals vs {b} predictions")));
    }
    if a == 0 {
        return Err(Error::argument("metrics need at least one pair"));
    }
    Ok(())
}

pub fn rmse(actuals: &[f64], predictions: &[f64]) -> Result<f64> {
    check_lengths(actuals.len(), predictions.len())?;
    let sse: f64 = actuals
        .iter()
        .zip(predictions)
        .map(|(a, p)| (p - a) * (p - a))
        .sum();
    Ok((sse / actuals.len() as f64).sqrt())
}

fn direction(delta: f64) -> bool {
    delta >= 0.0
}

pub fn trend_accuracy(actuals: &[f64], predictions: &[f64], prev_actuals: &[f64]) -> Result<f64> {
    check_lengths(actuals.len(), predictions.len())?;
    check_lengths(actuals.len(), prev_actuals.len())?;
    let hits = actuals
        .iter()
        .zip(predictions)
        .zip(prev_actuals)
        .filter(|((a, p), prev)| direction(*p - *prev) == direction(*a - *prev))
        .count();
    Ok(hits as f64 / actuals.len() as f64)
}

pub fn absolute_error(actuals: &[f64], predictions: &[f64]) -> Result<MeanStd> {
    check_lengths(actuals.len(), predictions.len())?;
    let e: Vec<f64> = actuals.iter().zip(predictions).map(|(a, p)| (p - a).abs()).collect();
    Ok(MeanStd::of(&e))
}

/// Absolute error as a fraction of `|actual|`.
pub fn relative_error(actuals: &[f64], predictions: &[f64]) -> Result<MeanStd> {
    check_lengths(actuals.len(), predictions.len())?;
    if let Some(index) = actuals.iter().position(|a| *a == 0.0) {
        return Err(Error::DivisionGuard { index });
    }
    let e: Vec<f64> = actuals
        .iter()
        .zip(predictions)
        .map(|(a, p)| (p - a).abs() / a.abs())
        .collect();
    Ok(MeanStd::of(&e))
}

pub fn squared_error(actuals: &[f64], predictions: &[f64]) -> Result<MeanStd> {
    check_lengths(actuals.len(), predictions.len())?;
    let e: Vec<f64> = actuals.iter().zip(predictions).map(|(a, p)| (p - a) * (p - a)).collect();
    Ok(MeanStd::of(&e))
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn correlation(actuals: &[f64], predictions: &[f64]) -> Result<Option<f64>> {
    check_lengths(actuals.len(), predictions.len())?;
    if actuals.len() < 2 {
        return Err(Error::argument("correlation needs at least two pairs"));
    }
    let n = actuals.len() as f64;
    let ma = actuals.iter().sum::<f64>() / n;
    let mp = predictions.iter().sum::<f64>() / n;
    let (mut sap, mut saa, mut spp) = (0.0, 0.0, 0.0);
    for (a, p) in actuals.iter().zip(predictions) {
        let (da, dp) = (a - ma, p - mp);
        sap += da * dp;
        saa += da * da;
        spp += dp * dp;
    }
    if saa == 0.0 || spp == 0.0 {
        return Ok(None);
    }
    Ok(Some((sap / (saa * spp).sqrt()).clamp(-1.0, 1.0)))
}

/// All seven metrics. A zero actual degrades only `relative_error` and a
/// single pair leaves the correlations undefined.
pub fn performance_vector(
    actuals: &[f64],
    predictions: &[f64],
    prev_actuals: &[f64],
) -> Result<PerformanceVector> {
    check_lengths(actuals.len(), predictions.len())?;
    let trend_accuracy = trend_accuracy(actuals, predictions, prev_actuals)?;
    let errors: Vec<f64> = actuals.iter().zip(predictions).map(|(a, p)| p - a).collect();
    let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let squared_error = MeanStd::of(&sq);
    let relative_error = if actuals.contains(&0.0) {
        None
    } else {
        let rel: Vec<f64> = abs.iter().zip(actuals).map(|(e, a)| e / a.abs()).collect();
        Some(MeanStd::of(&rel))
    };
    let correlation = if actuals.len() < 2 {
        None
    } else {
        correlation(actuals, predictions)?
    };
    Ok(PerformanceVector {
        rmse: squared_error.mean.sqrt(),
        trend_accuracy,
        absolute_error: MeanStd::of(&abs),
        relative_error,
        squared_error,
        correlation,
        squared_correlation: correlation.map(|c| c * c),
    })
}

impl PerformanceVector {
    /// Values keyed by [`METRIC_KEYS`].
    pub fn flat(&self) -> Vec<(&'static str, Option<f64>)> {
        let values = [
            Some(self.rmse),
            Some(self.trend_accuracy),
            Some(self.absolute_error.mean),
            Some(self.absolute_error.std),
            self.relative_error.map(|r| r.mean),
            self.relative_error.map(|r| r.std),
            Some(self.squared_error.mean),
            Some(self.squared_error.std),
            self.correlation,
            self.squared_correlation,
        ];
        METRIC_KEYS.iter().copied().zip(values).collect()
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.flat().into_iter().find(|(k, _)| *k == key).and_then(|(_, v)| v)
    }

    /// Reassembles a vector from flat keys (missing or null keys become undefined).
    pub fn from_flat(get: impl Fn(&str) -> Option<f64>) -> Result<PerformanceVector> {
        let req = |k: &str| get(k).ok_or_else(|| Error::argument(format!("metric `{k}` missing")));
        let pair = |m: &str, s: &str| match (get(m), get(s)) {
            (Some(mean), Some(std)) => Some(MeanStd { mean, std }),
            _ => None,
        };
        Ok(PerformanceVector {
            rmse: req("rmse")?,
            trend_accuracy: req("trend_accuracy")?,
            absolute_error: MeanStd {
                mean: req("absolute_error_mean")?,
                std: req("absolute_error_std")?,
            },
            relative_error: pair("relative_error_mean", "relative_error_std"),
            squared_error: MeanStd {
                mean: req("squared_error_mean")?,
                std: req("squared_error_std")?,
            },
            correlation: get("correlation"),
            squared_correlation: get("squared_correlation"),
        })
    }

    /// The headline value of each of the seven metrics (error terms by their mean).
    pub fn headline(&self) -> [(&'static str, Option<f64>); 7] {
        [
            ("rmse", Some(self.rmse)),
            ("trend_accuracy", Some(self.trend_accuracy)),
            ("absolute_error", Some(self.absolute_error.mean)),
            ("relative_error", self.relative_error.map(|r| r.mean)),
            ("squared_error", Some(self.squared_error.mean)),
            ("correlation", self.correlation),
            ("squared_correlation", self.squared_correlation),
        ]
    }
}

impl Serialize for PerformanceVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let flat = self.flat();
        let mut map = serializer.serialize_map(Some(flat.len()))?;
        for (k, v) in flat {
            map.serialize_entry(k, &v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for PerformanceVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let map = std::collections::BTreeMap::<String, Option<f64>>::deserialize(deserializer)?;
        PerformanceVector::from_flat(|k| map.get(k).copied().flatten()).map_err(serde::de::Error::custom)
    }
}

fn opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_else(|| "undefined".into())
}

fn pct(v: f64) -> String {
    format!("{:.2}%", v * 100.0)
}

fn dec(v: f64) -> String {
    format!("{v:.3}")
}

impl fmt::Display for PerformanceVector {
    /// One `metric: value +/- std` line per metric, relative error in percent.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Root mean squared error: {} +/- 0.000", dec(self.rmse))?;
        writeln!(f, "Prediction trend accuracy: {}", dec(self.trend_accuracy))?;
        writeln!(
            f,
            "Absolute error: {} +/- {}",
            dec(self.absolute_error.mean),
            dec(self.absolute_error.std)
        )?;
        match self.relative_error {
            Some(r) => writeln!(f, "Relative error: {} +/- {}", pct(r.mean), pct(r.std))?,
            None => writeln!(f, "Relative error: undefined")?,
        }
        writeln!(
            f,
            "Squared error: {} +/- {}",
            dec(self.squared_error.mean),
            dec(self.squared_error.std)
        )?;
        writeln!(f, "Correlation: {}", opt(self.correlation, dec))?;
        writeln!(f, "Squared correlation: {}", opt(self.squared_correlation, dec))
    }
}

/// Residuals `actual - forecast` and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub residuals: Vec<f64>,
    pub mean: f64,
    pub dates: Vec<NaiveDate>,
}

pub fn residual_summary(
    actuals: &[f64],
    forecasts: &[f64],
    dates: &[NaiveDate],
) -> Result<ResidualSummary> {
    check_lengths(actuals.len(), forecasts.len())?;
    check_lengths(actuals.len(), dates.len())?;
    let residuals: Vec<f64> = actuals.iter().zip(forecasts).map(|(a, f)| a - f).collect();
    let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
    Ok(ResidualSummary {
        residuals,
        mean,
        dates: dates.to_vec(),
    })
}
