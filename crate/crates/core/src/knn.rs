//! k-nearest-neighbour forecasting over (date, close) pairs.
//!
//! Distance between two days is the absolute difference of their ordinals.
//! Any query past the training range sees the same last `k` points, so with
//! uniform weights every such forecast is the same constant.

use std::io::Write;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::PriceSeries;
use crate::metrics::{performance_vector, residual_summary, PerformanceVector, ResidualSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    InverseDistance,
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Weighting::Uniform),
            "inverse_distance" => Ok(Weighting::InverseDistance),
            other => Err(Error::argument(format!(
                "unknown weighting '{other}' (expected uniform or inverse_distance)"
            ))),
        }
    }
}

/// Days since 1970-01-01.
pub fn date_ordinal(date: NaiveDate) -> i64 {
    (date - NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()).num_days()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    /// `(date_ordinal, close)`, strictly increasing in the ordinal.
    pub points: Vec<(i64, f64)>,
    pub k: usize,
    pub weighting: Weighting,
}

pub fn fit_knn(series: &PriceSeries, k: usize, weighting: Weighting) -> Result<KnnModel> {
    if k == 0 {
        return Err(Error::argument("k must be at least 1"));
    }
    if k > series.len() {
        return Err(Error::argument(format!(
            "k = {k} exceeds the {} training points",
            series.len()
        )));
    }
    Ok(KnnModel {
        points: series
            .records()
            .iter()
            .map(|r| (date_ordinal(r.date), r.close))
            .collect(),
        k,
        weighting,
    })
}

impl KnnModel {
    /// Indices of the `k` nearest points; equal distances prefer the later day.
    pub fn neighbors(&self, date: NaiveDate) -> Vec<usize> {
        let q = date_ordinal(date);
        let mut idx: Vec<usize> = (0..self.points.len()).collect();
        idx.sort_by_key(|&i| ((self.points[i].0 - q).abs(), std::cmp::Reverse(self.points[i].0)));
        idx.truncate(self.k);
        idx
    }

    pub fn forecast_one(&self, date: NaiveDate) -> f64 {
        let q = date_ordinal(date);
        // Sum in date order so equal neighbour sets give bit-equal forecasts.
        let mut nb = self.neighbors(date);
        nb.sort_unstable();
        match self.weighting {
            Weighting::Uniform => nb.iter().map(|&i| self.points[i].1).sum::<f64>() / nb.len() as f64,
            Weighting::InverseDistance => {
                let w: Vec<f64> = nb
                    .iter()
                    .map(|&i| 1.0 / ((self.points[i].0 - q).abs() as f64 + 1.0))
                    .collect();
                let total: f64 = w.iter().sum();
                nb.iter().zip(&w).map(|(&i, w)| w * self.points[i].1).sum::<f64>() / total
            }
        }
    }
}

pub fn forecast_knn(model: &KnnModel, dates: &[NaiveDate]) -> Result<Vec<f64>> {
    if dates.is_empty() {
        return Err(Error::argument("no forecast dates given"));
    }
    Ok(dates.iter().map(|d| model.forecast_one(*d)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnRun {
    pub model: KnnModel,
    pub dates: Vec<NaiveDate>,
    pub forecasts: Vec<f64>,
    pub actuals: Vec<f64>,
    pub prev_actuals: Vec<f64>,
    pub residuals: ResidualSummary,
    pub metrics: PerformanceVector,
}

/// Fits on `series`, forecasts `dates` and scores against `actuals`. The
/// previous actual of the first date is the last training close.
pub fn knn_run(
    series: &PriceSeries,
    dates: &[NaiveDate],
    actuals: &[f64],
    k: usize,
    weighting: Weighting,
) -> Result<KnnRun> {
    if dates.len() != actuals.len() {
        return Err(Error::argument(format!(
            "{} forecast dates but {} actuals",
            dates.len(),
            actuals.len()
        )));
    }
    let model = fit_knn(series, k, weighting)?;
    let forecasts = forecast_knn(&model, dates)?;
    let last_close = series.records().last().map(|r| r.close).unwrap_or(f64::NAN);
    let prev_actuals: Vec<f64> = std::iter::once(last_close)
        .chain(actuals[..actuals.len() - 1].iter().copied())
        .collect();
    let residuals = residual_summary(actuals, &forecasts, dates)?;
    let metrics = performance_vector(actuals, &forecasts, &prev_actuals)?;
    Ok(KnnRun {
        model,
        dates: dates.to_vec(),
        forecasts,
        actuals: actuals.to_vec(),
        prev_actuals,
        residuals,
        metrics,
    })
}

impl KnnRun {
    /// `date,forecast,actual,residual`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::io("writing forecast csv", e.into());
        w.write_record(["date", "forecast", "actual", "residual"]).map_err(io)?;
        for i in 0..self.dates.len() {
            w.write_record([
                self.dates[i].to_string(),
                self.forecasts[i].to_string(),
                self.actuals[i].to_string(),
                self.residuals.residuals[i].to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io("writing forecast csv", e))
    }
}
