//! Executes a resolved run: ingest, split, examples, fit, predict, score,
//! then writes the run directory.
//!
//! Files written to `output_dir`:
//! `predictions.csv` (`date,actual,prediction,prev_actual`), `metrics.txt`,
//! `metrics.json`, `spec_echo.toml`, `model.json`, plus `folds.csv` for
//! sliding validation and `residuals.csv` for knn runs.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageExt};
use crate::knn::{knn_run, KnnModel};
use crate::learner::{Regressor, TrainedModel};
use crate::market_data::{parse_csv, Attribute, PriceSeries};
use crate::metrics::{performance_vector, PerformanceVector, ResidualSummary};
use crate::pipeline::spec::{ExampleMode, ModelKind, RunSpec, Split, Validation, PREV_CLOSE_FEATURE};
use crate::validation::{sliding_validate, MacroMetric, ValidationReport};
use crate::windowing::{make_same_day_examples, window, WindowedExampleSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub date: NaiveDate,
    pub actual: f64,
    pub prediction: f64,
    pub prev_actual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum SavedModel {
    Learner(TrainedModel),
    Knn(KnnModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub folds: usize,
    #[serde(rename = "macro")]
    pub macro_avg: Vec<MacroMetric>,
    pub micro: PerformanceVector,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub symbol: String,
    pub model: ModelKind,
    pub test: PerformanceVector,
    pub validation: Option<ValidationSummary>,
    pub residual_mean: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub spec: RunSpec,
    pub spec_echo: String,
    pub predictions: Vec<PredictionRow>,
    pub metrics: PerformanceVector,
    pub validation: Option<ValidationReport>,
    pub residuals: Option<ResidualSummary>,
    pub model: SavedModel,
    pub artifacts: Vec<PathBuf>,
}

impl RunReport {
    pub fn metrics_file(&self) -> MetricsFile {
        MetricsFile {
            symbol: self.spec.symbol.clone(),
            model: self.spec.model,
            test: self.metrics.clone(),
            validation: self.validation.as_ref().map(|v| ValidationSummary {
                folds: v.folds.len(),
                macro_avg: v.macro_avg.clone(),
                micro: v.micro.clone(),
            }),
            residual_mean: self.residuals.as_ref().map(|r| r.mean),
        }
    }

    /// Human-readable metrics block.
    pub fn metrics_text(&self) -> String {
        let mut out = format!(
            "symbol: {}\nmodel: {}\ntest rows: {}\n\n{}",
            self.spec.symbol,
            self.spec.model.name(),
            self.predictions.len(),
            self.metrics
        );
        if let Some(r) = &self.residuals {
            out.push_str(&format!("\nresidual mean: {}\n", r.mean));
        }
        if let Some(v) = &self.validation {
            out.push_str(&format!("\nsliding validation over {} folds\n{}", v.folds.len(), v.render()));
        }
        out
    }
}

pub fn load_series(spec: &RunSpec) -> Result<PriceSeries> {
    let file = File::open(&spec.data_path)
        .map_err(|e| Error::io(format!("opening {}", spec.data_path.display()), e))?;
    parse_csv(BufReader::new(file), &spec.columns, &spec.symbol)
}

fn build_examples(spec: &RunSpec, series: &PriceSeries) -> Result<WindowedExampleSet> {
    let mode = spec.examples.ok_or_else(|| Error::Invariant("learner run without example mode".into()))?;
    let set = match mode {
        ExampleMode::SameDay => make_same_day_examples(series, &spec.attributes, Attribute::Close)?,
        ExampleMode::Lagged {
            window_size,
            step_size,
            horizon,
        } => window(series, &spec.attributes, window_size, step_size, horizon, Attribute::Close)?,
    };
    if spec.model == ModelKind::Ensemble && mode == ExampleMode::SameDay {
        set.with_prev_actual_feature(PREV_CLOSE_FEATURE)
    } else {
        Ok(set)
    }
}

/// Series covered by the split: train start through test end.
fn covered(series: &PriceSeries, split: &Split) -> Result<PriceSeries> {
    match *split {
        Split::DateRange {
            train_start,
            test_end,
            ..
        } => series.slice_by_date(train_start, test_end),
        Split::Linear { start, end, .. } => match (start, end) {
            (None, None) => Ok(series.clone()),
            (s, e) => series.slice_by_date(
                s.unwrap_or_else(|| series.first_date()),
                e.unwrap_or_else(|| series.last_date()),
            ),
        },
    }
}

fn partition(examples: &WindowedExampleSet, split: &Split) -> Result<(WindowedExampleSet, WindowedExampleSet)> {
    let (train, test) = match *split {
        Split::DateRange {
            train_start,
            train_end,
            test_start,
            test_end,
        } => {
            let train = examples.date_range(train_start, train_end);
            let test = examples.date_range(test_start, test_end);
            if train.is_empty() {
                return Err(Error::EmptySlice {
                    start: train_start,
                    end: train_end,
                });
            }
            if test.is_empty() {
                return Err(Error::EmptySlice {
                    start: test_start,
                    end: test_end,
                });
            }
            (train, test)
        }
        Split::Linear { ratio, .. } => {
            let at = PriceSeries::linear_split_point(examples.len(), ratio)?;
            (0..at, at..examples.len())
        }
    };
    Ok((examples.subset(train), examples.subset(test)))
}

fn run_learner(spec: &RunSpec, series: &PriceSeries) -> Result<RunReport> {
    let scope = covered(series, &spec.split).stage("split")?;
    let examples = build_examples(spec, &scope).stage("examples")?;
    let (train, test) = partition(&examples, &spec.split).stage("split")?;
    let learner = spec.learner()?;
    let names = &examples.feature_names;
    let validation = match spec.validation {
        Validation::Holdout => None,
        Validation::Sliding(cfg) => Some(
            sliding_validate(
                &train,
                |x, y, seed| learner.fit(x, y, names, seed),
                cfg,
                spec.seed,
                spec.parallel,
            )
            .stage("validation")?,
        ),
    };
    let model = learner
        .fit(&train.features, &train.labels, names, spec.seed)
        .stage("fit")?;
    let predictions = model.predict(&test.features).stage("predict")?;
    let metrics = performance_vector(&test.labels, &predictions, &test.prev_actuals).stage("metrics")?;
    let rows = (0..test.len())
        .map(|i| PredictionRow {
            date: test.label_dates[i],
            actual: test.labels[i],
            prediction: predictions[i],
            prev_actual: test.prev_actuals[i],
        })
        .collect();
    Ok(RunReport {
        spec: spec.clone(),
        spec_echo: spec.echo(),
        predictions: rows,
        metrics,
        validation,
        residuals: None,
        model: SavedModel::Learner(model),
        artifacts: vec![],
    })
}

fn run_knn(spec: &RunSpec, series: &PriceSeries) -> Result<RunReport> {
    let settings = spec.knn.ok_or_else(|| Error::Invariant("knn run without knn settings".into()))?;
    let (train, test) = match spec.split {
        Split::DateRange {
            train_start,
            train_end,
            test_start,
            test_end,
        } => (
            series.slice_by_date(train_start, train_end),
            series.slice_by_date(test_start, test_end),
        ),
        Split::Linear { ratio, .. } => match covered(series, &spec.split).and_then(|s| s.split_linear(ratio)) {
            Ok((a, b)) => (Ok(a), Ok(b)),
            Err(e) => return Err(e).stage("split"),
        },
    };
    let (train, test) = (train.stage("split")?, test.stage("split")?);
    let run = knn_run(&train, &test.dates(), &test.closes(), settings.k, settings.weighting).stage("forecast")?;
    let rows = (0..run.dates.len())
        .map(|i| PredictionRow {
            date: run.dates[i],
            actual: run.actuals[i],
            prediction: run.forecasts[i],
            prev_actual: run.prev_actuals[i],
        })
        .collect();
    Ok(RunReport {
        spec: spec.clone(),
        spec_echo: spec.echo(),
        predictions: rows,
        metrics: run.metrics,
        validation: None,
        residuals: Some(run.residuals),
        model: SavedModel::Knn(run.model),
        artifacts: vec![],
    })
}

/// Runs without touching the file system beyond reading the data file.
pub fn execute(spec: &RunSpec) -> Result<RunReport> {
    let series = load_series(spec).stage("ingest")?;
    match spec.model {
        ModelKind::Knn => run_knn(spec, &series),
        _ => run_learner(spec, &series),
    }
}

pub fn write_predictions_csv<W: std::io::Write>(rows: &[PredictionRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::io("writing predictions", e.into());
    w.write_record(["date", "actual", "prediction", "prev_actual"]).map_err(io)?;
    for r in rows {
        w.write_record([
            r.date.to_string(),
            r.actual.to_string(),
            r.prediction.to_string(),
            r.prev_actual.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("writing predictions", e))
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<PredictionRow>> {
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

fn render_outputs(report: &RunReport) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let mut files = Vec::new();
    let mut buf = Vec::new();
    write_predictions_csv(&report.predictions, &mut buf)?;
    files.push(("predictions.csv", buf));
    files.push(("metrics.txt", report.metrics_text().into_bytes()));
    let json = serde_json::to_vec_pretty(&report.metrics_file())
        .map_err(|e| Error::Invariant(format!("metrics serialization: {e}")))?;
    files.push(("metrics.json", json));
    files.push(("spec_echo.toml", report.spec_echo.clone().into_bytes()));
    let model = serde_json::to_vec(&report.model).map_err(|e| Error::Invariant(format!("model serialization: {e}")))?;
    files.push(("model.json", model));
    if let Some(v) = &report.validation {
        let mut buf = Vec::new();
        v.write_folds_csv(&mut buf)?;
        files.push(("folds.csv", buf));
    }
    if let (Some(r), SavedModel::Knn(_)) = (&report.residuals, &report.model) {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::io("writing residuals", e.into());
        w.write_record(["date", "forecast", "actual", "residual"]).map_err(io)?;
        for (i, p) in report.predictions.iter().enumerate() {
            w.write_record([
                p.date.to_string(),
                p.prediction.to_string(),
                p.actual.to_string(),
                r.residuals[i].to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("writing residuals", e.into_error()))?;
        files.push(("residuals.csv", bytes));
    }
    Ok(files)
}

fn write_all(dir: &Path, files: &[(&'static str, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    let existed = dir.exists();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Err(e) = std::fs::write(&path, bytes) {
            remove_partial(dir, existed, &written);
            return Err(Error::io(format!("writing {}", path.display()), e));
        }
        written.push(path);
    }
    Ok(written)
}

fn remove_partial(dir: &Path, dir_existed: bool, written: &[PathBuf]) {
    for p in written {
        let _ = std::fs::remove_file(p);
    }
    if !dir_existed {
        let _ = std::fs::remove_dir(dir);
    }
}

/// Relative tolerance used when re-checking emitted metrics.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-9;

fn close_enough(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= CONSISTENCY_TOLERANCE * x.abs().max(y.abs()).max(1.0),
        _ => false,
    }
}

fn compare_vectors(what: &str, emitted: &PerformanceVector, recomputed: &PerformanceVector) -> Result<()> {
    for ((key, a), (_, b)) in emitted.flat().into_iter().zip(recomputed.flat()) {
        if !close_enough(a, b) {
            return Err(Error::Invariant(format!(
                "{what}: emitted {key} = {a:?} but predictions give {b:?}"
            )));
        }
    }
    Ok(())
}

/// Recomputes the metrics of a run directory from its CSV files and compares
/// them with `metrics.json`.
pub fn verify_run_dir(dir: &Path) -> Result<MetricsFile> {
    let path = dir.join("metrics.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let emitted: MetricsFile =
        serde_json::from_str(&text).map_err(|e| Error::Invariant(format!("{}: {e}", path.display())))?;
    let rows = read_predictions_csv(&dir.join("predictions.csv"))?;
    let col = |f: fn(&PredictionRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let recomputed = performance_vector(&col(|r| r.actual), &col(|r| r.prediction), &col(|r| r.prev_actual))?;
    compare_vectors("predictions.csv", &emitted.test, &recomputed)?;
    if let Some(v) = &emitted.validation {
        #[derive(Deserialize)]
        struct FoldRow {
            actual: f64,
            prediction: f64,
            prev_actual: f64,
        }
        let fpath = dir.join("folds.csv");
        let mut r = csv::Reader::from_path(&fpath)
            .map_err(|e| Error::io(format!("reading {}", fpath.display()), e.into()))?;
        let folds: Vec<FoldRow> = r
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                row: 0,
                message: e.to_string(),
            })?;
        let a: Vec<f64> = folds.iter().map(|f| f.actual).collect();
        let p: Vec<f64> = folds.iter().map(|f| f.prediction).collect();
        let q: Vec<f64> = folds.iter().map(|f| f.prev_actual).collect();
        compare_vectors("folds.csv", &v.micro, &performance_vector(&a, &p, &q)?)?;
    }
    Ok(emitted)
}

/// Executes `spec`, writes the run directory and re-checks it. On failure no
/// partial outputs are left behind.
pub fn run(spec: &RunSpec) -> Result<RunReport> {
    let mut report = execute(spec)?;
    let files = render_outputs(&report).stage("report")?;
    let dir = &spec.output_dir;
    let existed = dir.exists();
    let written = write_all(dir, &files).stage("report")?;
    if let Err(e) = verify_run_dir(dir) {
        remove_partial(dir, existed, &written);
        return Err(e).stage("self-check");
    }
    report.artifacts = written;
    Ok(report)
}
