//! Turning a price series into supervised examples.
//!
//! Two constructions are offered. [`window`] is the lagged transform: each
//! example sees `window_size` consecutive values of every requested attribute
//! and is labelled with the label attribute `horizon` steps past the window
//! end. [`make_same_day_examples`] regresses the label on other attributes of
//! the *same* day; it contains same-day lookahead by construction (the day's
//! high and low are only known at the close) and exists to reproduce the
//! attribute-table setup used for the boosted tree and ensemble runs.

use std::io::Write;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::market_data::{Attribute, PriceSeries};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedExampleSet {
    pub features: Matrix,
    pub feature_names: Vec<String>,
    pub labels: Vec<f64>,
    pub label_dates: Vec<NaiveDate>,
    /// Label attribute value immediately preceding each label in time.
    pub prev_actuals: Vec<f64>,
    /// Set when the first example had no predecessor and its `prev_actual`
    /// was filled with its own label.
    pub first_prev_actual_is_label: bool,
}

impl WindowedExampleSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub(crate) fn check(&self) -> Result<()> {
        let n = self.labels.len();
        if self.features.rows() != n || self.label_dates.len() != n || self.prev_actuals.len() != n
        {
            return Err(Error::Invariant("example set columns have unequal lengths".into()));
        }
        if self.features.cols() != self.feature_names.len() {
            return Err(Error::Invariant("feature names do not match feature columns".into()));
        }
        if self.label_dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invariant("label dates are not strictly increasing".into()));
        }
        Ok(())
    }

    /// Examples `range`, keeping alignment.
    pub fn subset(&self, range: std::ops::Range<usize>) -> WindowedExampleSet {
        WindowedExampleSet {
            features: self.features.slice_rows(range.clone()),
            feature_names: self.feature_names.clone(),
            labels: self.labels[range.clone()].to_vec(),
            label_dates: self.label_dates[range.clone()].to_vec(),
            prev_actuals: self.prev_actuals[range.clone()].to_vec(),
            first_prev_actual_is_label: self.first_prev_actual_is_label && range.start == 0,
        }
    }

    /// Index range of examples whose label date lies in `[start, end]`.
    pub fn date_range(&self, start: NaiveDate, end: NaiveDate) -> std::ops::Range<usize> {
        let lo = self.label_dates.partition_point(|d| *d < start);
        let hi = self.label_dates.partition_point(|d| *d <= end);
        lo..hi.max(lo)
    }

    /// Appends `prev_actuals` as a feature column named `name`. The first
    /// example is dropped when its previous value was synthetic.
    pub fn with_prev_actual_feature(&self, name: &str) -> Result<WindowedExampleSet> {
        if self.feature_index(name).is_some() {
            return Err(Error::argument(format!("feature `{name}` already present")));
        }
        let start = usize::from(self.first_prev_actual_is_label);
        if self.len() <= start {
            return Err(Error::InsufficientData {
                what: "examples",
                needed: start + 1,
                got: self.len(),
            });
        }
        let base = self.subset(start..self.len());
        let mut names = base.feature_names.clone();
        names.push(name.to_string());
        Ok(WindowedExampleSet {
            features: base.features.with_column(&base.prev_actuals)?,
            feature_names: names,
            ..base
        })
    }

    /// Feature columns, then `label`, then `label_date`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::io("writing examples", e.into());
        let mut header = self.feature_names.clone();
        header.push("label".into());
        header.push("label_date".into());
        w.write_record(&header).map_err(io)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.features.row(i).iter().map(f64::to_string).collect();
            row.push(self.labels[i].to_string());
            row.push(self.label_dates[i].to_string());
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io("writing examples", e))
    }
}

fn check_unique(attrs: &[Attribute]) -> Result<()> {
    if attrs.is_empty() {
        return Err(Error::argument("at least one feature attribute is required"));
    }
    for (i, a) in attrs.iter().enumerate() {
        if attrs[..i].contains(a) {
            return Err(Error::argument(format!("attribute `{a}` requested twice")));
        }
    }
    Ok(())
}

/// Number of windows that fit in a series of length `n`.
pub fn window_count(n: usize, window_size: usize, step_size: usize, horizon: usize) -> usize {
    if window_size == 0 || step_size == 0 || horizon == 0 || n < window_size + horizon {
        return 0;
    }
    (n - window_size - horizon) / step_size + 1
}

/// Lagged windowing. Window starts advance by `step_size`; each example's
/// features are the attribute values over the window (per attribute, oldest
/// to newest, named `attr-k` with `k` counted back from the window end), and
/// its label is `label_attr` at `window end + horizon`.
pub fn window(
    series: &PriceSeries,
    attrs: &[Attribute],
    window_size: usize,
    step_size: usize,
    horizon: usize,
    label_attr: Attribute,
) -> Result<WindowedExampleSet> {
    if window_size == 0 || step_size == 0 || horizon == 0 {
        return Err(Error::argument("window size, step size and horizon must be positive"));
    }
    check_unique(attrs)?;
    let n = series.len();
    if n < window_size + horizon {
        return Err(Error::InsufficientData {
            what: "records for windowing",
            needed: window_size + horizon,
            got: n,
        });
    }
    let columns: Vec<Vec<f64>> = attrs.iter().map(|&a| series.values(a)).collect::<Result<_>>()?;
    let label_values = series.values(label_attr)?;
    let dates = series.dates();

    let feature_names: Vec<String> = attrs
        .iter()
        .flat_map(|a| (0..window_size).rev().map(move |k| format!("{a}-{k}")))
        .collect();

    let count = window_count(n, window_size, step_size, horizon);
    let mut data = Vec::with_capacity(count * feature_names.len());
    let mut labels = Vec::with_capacity(count);
    let mut label_dates = Vec::with_capacity(count);
    let mut prev_actuals = Vec::with_capacity(count);
    for t in (0..count).map(|i| i * step_size) {
        for col in &columns {
            data.extend_from_slice(&col[t..t + window_size]);
        }
        let last = t + window_size - 1;
        labels.push(label_values[last + horizon]);
        label_dates.push(dates[last + horizon]);
        prev_actuals.push(label_values[last]);
    }
    let set = WindowedExampleSet {
        features: Matrix::from_vec(count, feature_names.len(), data)?,
        feature_names,
        labels,
        label_dates,
        prev_actuals,
        first_prev_actual_is_label: false,
    };
    set.check()?;
    Ok(set)
}

/// One example per record: features are the same day's `attrs`, the label is
/// the same day's `label_attr`, and `prev_actual` is the previous day's label
/// value (the first example uses its own label and is flagged).
pub fn make_same_day_examples(
    series: &PriceSeries,
    attrs: &[Attribute],
    label_attr: Attribute,
) -> Result<WindowedExampleSet> {
    check_unique(attrs)?;
    if attrs.contains(&label_attr) {
        return Err(Error::argument(format!(
            "label attribute `{label_attr}` cannot also be a same-day feature"
        )));
    }
    let n = series.len();
    let columns: Vec<Vec<f64>> = attrs.iter().map(|&a| series.values(a)).collect::<Result<_>>()?;
    let labels = series.values(label_attr)?;
    let mut data = Vec::with_capacity(n * attrs.len());
    for i in 0..n {
        data.extend(columns.iter().map(|c| c[i]));
    }
    let prev_actuals = std::iter::once(labels[0])
        .chain(labels[..n - 1].iter().copied())
        .collect();
    let set = WindowedExampleSet {
        features: Matrix::from_vec(n, attrs.len(), data)?,
        feature_names: attrs.iter().map(|a| a.name().to_string()).collect(),
        labels,
        label_dates: series.dates(),
        prev_actuals,
        first_prev_actual_is_label: true,
    };
    set.check()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::OhlcvRecord;

    pub(crate) fn closes(values: &[f64]) -> PriceSeries {
        let start = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        let records = values
            .iter()
            .enumerate()
            .map(|(i, &c)| OhlcvRecord {
                date: start + chrono::Duration::days(i as i64),
                open: c + 0.5,
                high: c + 1.0,
                low: c - 0.5,
                close: c,
                volume: Some(1000.0 + i as f64),
                market_cap: None,
            })
            .collect();
        PriceSeries::new("t", records).unwrap()
    }

    fn pairs(set: &WindowedExampleSet) -> Vec<(Vec<f64>, f64)> {
        (0..set.len())
            .map(|i| (set.features.row(i).to_vec(), set.labels[i]))
            .collect()
    }

    #[test]
    fn minimal_window() {
        let s = closes(&[1.0, 2.0, 3.0]);
        let set = window(&s, &[Attribute::Close], 1, 1, 1, Attribute::Close).unwrap();
        assert_eq!(pairs(&set), vec![(vec![1.0], 2.0), (vec![2.0], 3.0)]);
        assert_eq!(set.feature_names, vec!["close-0"]);
        assert_eq!(set.prev_actuals, vec![1.0, 2.0]);
    }

    #[test]
    fn window_two_step_one() {
        let s = closes(&[10.0, 11.0, 12.0, 13.0, 14.0]);
        let set = window(&s, &[Attribute::Close], 2, 1, 1, Attribute::Close).unwrap();
        assert_eq!(
            pairs(&set),
            vec![
                (vec![10.0, 11.0], 12.0),
                (vec![11.0, 12.0], 13.0),
                (vec![12.0, 13.0], 14.0)
            ]
        );
        assert_eq!(set.feature_names, vec!["close-1", "close-0"]);
    }

    #[test]
    fn window_two_step_two() {
        let s = closes(&[10.0, 11.0, 12.0, 13.0, 14.0]);
        let set = window(&s, &[Attribute::Close], 2, 2, 1, Attribute::Close).unwrap();
        assert_eq!(pairs(&set), vec![(vec![10.0, 11.0], 12.0), (vec![12.0, 13.0], 14.0)]);
    }

    #[test]
    fn window_errors() {
        let s = closes(&[1.0, 2.0]);
        assert!(matches!(
            window(&s, &[Attribute::Close], 2, 1, 1, Attribute::Close),
            Err(Error::InsufficientData { needed: 3, .. })
        ));
        assert!(window(&s, &[Attribute::MarketCap], 1, 1, 1, Attribute::Close).is_err());
        assert!(window(&s, &[], 1, 1, 1, Attribute::Close).is_err());
    }

    #[test]
    fn same_day() {
        let s = closes(&[5.0, 6.0, 7.0]);
        let attrs = [Attribute::Open, Attribute::High, Attribute::Low];
        let set = make_same_day_examples(&s, &attrs, Attribute::Close).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.n_features(), 3);
        assert_eq!(set.features.row(1), &[6.5, 7.0, 5.5]);
        assert_eq!(set.prev_actuals, vec![5.0, 5.0, 6.0]);
        assert!(set.first_prev_actual_is_label);

        let leak = make_same_day_examples(&s, &[Attribute::Open, Attribute::Close], Attribute::Close);
        assert!(matches!(leak, Err(Error::Argument(_))));
    }

    #[test]
    fn prev_actual_feature_drops_synthetic_first() {
        let s = closes(&[5.0, 6.0, 7.0]);
        let set = make_same_day_examples(&s, &[Attribute::Open], Attribute::Close).unwrap();
        let lagged = set.with_prev_actual_feature("close-1").unwrap();
        assert_eq!(lagged.len(), 2);
        assert_eq!(lagged.features.row(0), &[6.5, 5.0]);
        assert_eq!(lagged.labels, vec![6.0, 7.0]);
        assert!(!lagged.first_prev_actual_is_label);
    }

    #[test]
    fn date_range_lookup() {
        let s = closes(&[1.0, 2.0, 3.0, 4.0]);
        let set = window(&s, &[Attribute::Close], 1, 1, 1, Attribute::Close).unwrap();
        let d = |k| NaiveDate::from_ymd_opt(2019, 1, k).unwrap();
        assert_eq!(set.date_range(d(3), d(4)), 1..3);
        assert_eq!(set.date_range(d(10), d(12)), 3..3);
    }
}
