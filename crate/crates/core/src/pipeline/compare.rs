//! Side-by-side metrics for several runs on one symbol.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::pipeline::run::{run, RunReport};
use crate::pipeline::spec::{load_spec, RunSpec};

/// Metrics shown in the comparison table, in order.
pub const COMPARED_METRICS: [&str; 7] = [
    "rmse",
    "trend_accuracy",
    "absolute_error",
    "relative_error",
    "squared_error",
    "correlation",
    "squared_correlation",
];

/// One externally supplied reference value (`symbol,model,metric,value`).
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReferenceValue {
    pub symbol: String,
    pub model: String,
    pub metric: String,
    pub value: f64,
}

pub fn read_references(path: &Path) -> Result<Vec<ReferenceValue>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(format!("reading {}", path.display()), e.into()))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                row: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub symbol: String,
    /// Column labels: one per run, then `paper-reported <model>` columns.
    pub columns: Vec<String>,
    /// `rows[metric][column]`.
    pub rows: Vec<(String, Vec<Option<f64>>)>,
    pub reports: Vec<RunReport>,
}

fn headline_value(report: &RunReport, key: &str) -> Option<f64> {
    report
        .metrics
        .headline()
        .iter()
        .find(|(k, _)| *k == key)
        .and_then(|(_, v)| *v)
}

/// Tabulates finished runs. All runs must share one symbol.
pub fn tabulate(reports: Vec<RunReport>, references: &[ReferenceValue]) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::argument("compare needs at least two runs"));
    }
    let symbol = reports[0].spec.symbol.clone();
    if let Some(other) = reports.iter().find(|r| r.spec.symbol != symbol) {
        return Err(Error::argument(format!(
            "symbol mismatch: {} vs {}",
            symbol, other.spec.symbol
        )));
    }
    let mut columns: Vec<String> = Vec::new();
    for r in &reports {
        let base = r.spec.model.name().to_string();
        let mut label = base.clone();
        let mut n = 2;
        while columns.contains(&label) {
            label = format!("{base}#{n}");
            n += 1;
        }
        columns.push(label);
    }
    let mut refs: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for r in references.iter().filter(|r| r.symbol == symbol) {
        refs.entry(r.model.clone())
            .or_default()
            .insert(r.metric.clone(), r.value);
    }
    columns.extend(refs.keys().map(|m| format!("paper-reported {m}")));
    let rows = COMPARED_METRICS
        .iter()
        .map(|key| {
            let mut values: Vec<Option<f64>> = reports.iter().map(|r| headline_value(r, key)).collect();
            values.extend(refs.values().map(|m| m.get(*key).copied()));
            (key.to_string(), values)
        })
        .collect();
    Ok(Comparison {
        symbol,
        columns,
        rows,
        reports,
    })
}

impl Comparison {
    pub fn render_text(&self) -> String {
        let width = self.columns.iter().map(String::len).max().unwrap_or(0).max(12);
        let mut out = format!("symbol: {}\n\n{:<20}", self.symbol, "metric");
        for c in &self.columns {
            let _ = write!(out, " {c:>width$}");
        }
        out.push('\n');
        for (key, values) in &self.rows {
            let _ = write!(out, "{key:<20}");
            for v in values {
                let cell = v.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
                let _ = write!(out, " {cell:>width$}");
            }
            out.push('\n');
        }
        out
    }

    pub fn render_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::io("writing comparison", e.into());
        let mut header = vec!["metric".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (key, values) in &self.rows {
            let mut rec = vec![key.clone()];
            rec.extend(values.iter().map(|v| v.map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::io("writing comparison", e.into_error()))
    }

    /// Long format `date,actual,model,prediction`, one block per run.
    pub fn plot_data_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::io("writing plot data", e.into());
        w.write_record(["date", "actual", "model", "prediction"]).map_err(io)?;
        let run_columns = &self.columns[..self.reports.len()];
        for (report, label) in self.reports.iter().zip(run_columns) {
            for p in &report.predictions {
                w.write_record([
                    p.date.to_string(),
                    p.actual.to_string(),
                    label.clone(),
                    p.prediction.to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.into_inner().map_err(|e| Error::io("writing plot data", e.into_error()))
    }

    /// Writes `comparison.txt`, `comparison.csv` and `plot_data.csv`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let files = [
            ("comparison.txt", self.render_text().into_bytes()),
            ("comparison.csv", self.render_csv()?),
            ("plot_data.csv", self.plot_data_csv()?),
        ];
        files
            .into_iter()
            .map(|(name, bytes)| {
                let p = dir.join(name);
                std::fs::write(&p, bytes).map_err(|e| Error::io(format!("writing {}", p.display()), e))?;
                Ok(p)
            })
            .collect()
    }
}

/// Loads and runs every spec, then tabulates. Specs are checked for a common
/// symbol before anything runs.
pub fn compare(spec_paths: &[PathBuf], references: Option<&Path>) -> Result<Comparison> {
    let specs: Vec<RunSpec> = spec_paths.iter().map(|p| load_spec(p)).collect::<Result<_>>()?;
    compare_specs(&specs, references)
}

pub fn compare_specs(specs: &[RunSpec], references: Option<&Path>) -> Result<Comparison> {
    if specs.len() < 2 {
        return Err(Error::argument("compare needs at least two specs"));
    }
    if let Some(other) = specs.iter().find(|s| s.symbol != specs[0].symbol) {
        return Err(Error::argument(format!(
            "symbol mismatch: {} vs {}",
            specs[0].symbol, other.symbol
        )));
    }
    let refs = match references {
        Some(p) => read_references(p)?,
        None => vec![],
    };
    let reports = specs.iter().map(run).collect::<Result<Vec<_>>>()?;
    tabulate(reports, &refs)
}
