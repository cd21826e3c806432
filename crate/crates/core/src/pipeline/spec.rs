//! Run files: TOML with top-level keys and one level of sections.
//!
//! ```toml
//! symbol = "bitcoin"
//! data_path = "../data/bitcoin.csv"
//! model = "gbt"            # gbt | neural_net | ensemble | knn
//! seed = 7
//!
//! [split]
//! kind = "date_range"
//! train_start = "27.12.2013"
//! train_end = "31.12.2018"
//! test_start = "01.01.2019"
//! test_end = "31.01.2019"
//!
//! [gbt]
//! n_trees = 500
//! ```
//!
//! Loading rejects unknown keys, fills every default and resolves relative
//! paths against the run file's directory. [`RunSpec::echo`] renders the
//! resolved form, which loads back to the same value.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ensemble::Transform;
use crate::error::{Error, Result};
use crate::gbt::GbtParams;
use crate::knn::Weighting;
use crate::learner::LearnerConfig;
use crate::market_data::{parse_day, Attribute, CsvSchema};
use crate::mlp::MlpParams;
use crate::validation::SlidingConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gbt,
    NeuralNet,
    Ensemble,
    Knn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gbt => "gbt",
            ModelKind::NeuralNet => "neural_net",
            ModelKind::Ensemble => "ensemble",
            ModelKind::Knn => "knn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberKind {
    Gbt,
    NeuralNet,
    Relative,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Split {
    DateRange {
        train_start: NaiveDate,
        train_end: NaiveDate,
        test_start: NaiveDate,
        test_end: NaiveDate,
    },
    /// Leading `ratio` of the examples train, the rest test.
    Linear {
        ratio: f64,
        start: Option<NaiveDate>,
        end: Option<NaiveDate>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Validation {
    Holdout,
    Sliding(SlidingConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleMode {
    SameDay,
    Lagged {
        window_size: usize,
        step_size: usize,
        horizon: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeSettings {
    pub base_feature: String,
    pub transform: Transform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnSettings {
    pub k: usize,
    pub weighting: Weighting,
}

/// Fully resolved run description. Sections that do not apply to `model`
/// are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub symbol: String,
    pub data_path: PathBuf,
    pub model: ModelKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub attributes: Vec<Attribute>,
    /// Train folds and ensemble members concurrently. Outputs do not depend on it.
    pub parallel: bool,
    pub split: Split,
    pub validation: Validation,
    pub examples: Option<ExampleMode>,
    pub columns: CsvSchema,
    pub gbt: Option<GbtParams>,
    pub neural_net: Option<MlpParams>,
    pub relative: Option<RelativeSettings>,
    pub ensemble_members: Option<Vec<MemberKind>>,
    pub knn: Option<KnnSettings>,
}

/// Column name of the previous close added to same-day ensemble examples.
pub const PREV_CLOSE_FEATURE: &str = "close-1";

impl RunSpec {
    /// Learner configuration for the non-knn models.
    pub fn learner(&self) -> Result<LearnerConfig> {
        let missing = |s: &str| Error::Invariant(format!("resolved spec lacks the {s} section"));
        let gbt = || self.gbt.map(LearnerConfig::Gbt).ok_or_else(|| missing("gbt"));
        let nn = || {
            self.neural_net
                .clone()
                .map(LearnerConfig::NeuralNet)
                .ok_or_else(|| missing("neural_net"))
        };
        match self.model {
            ModelKind::Gbt => gbt(),
            ModelKind::NeuralNet => nn(),
            ModelKind::Ensemble => {
                let rel = self.relative.as_ref().ok_or_else(|| missing("relative"))?;
                let members = self
                    .ensemble_members
                    .as_ref()
                    .ok_or_else(|| missing("ensemble"))?
                    .iter()
                    .map(|m| match m {
                        MemberKind::Gbt => gbt(),
                        MemberKind::NeuralNet => nn(),
                        MemberKind::Relative => Ok(LearnerConfig::Relative {
                            base_feature: rel.base_feature.clone(),
                            transform: rel.transform,
                            inner: Box::new(LearnerConfig::Linear),
                        }),
                    })
                    .collect::<Result<_>>()?;
                Ok(LearnerConfig::Vote {
                    members,
                    parallel: self.parallel,
                })
            }
            ModelKind::Knn => Err(Error::argument("knn runs have no feature learner")),
        }
    }

    /// Resolved spec as TOML.
    pub fn echo(&self) -> String {
        let date = |d: NaiveDate| d.to_string();
        let raw = RawSpec {
            symbol: self.symbol.clone(),
            data_path: self.data_path.display().to_string(),
            model: self.model,
            seed: Some(self.seed),
            output_dir: Some(self.output_dir.display().to_string()),
            attributes: Some(self.attributes.clone()),
            parallel: Some(self.parallel),
            split: Some(match &self.split {
                Split::DateRange {
                    train_start,
                    train_end,
                    test_start,
                    test_end,
                } => RawSplit {
                    kind: SplitKind::DateRange,
                    train_start: Some(date(*train_start)),
                    train_end: Some(date(*train_end)),
                    test_start: Some(date(*test_start)),
                    test_end: Some(date(*test_end)),
                    ..RawSplit::empty(SplitKind::DateRange)
                },
                Split::Linear { ratio, start, end } => RawSplit {
                    ratio: Some(*ratio),
                    start: start.map(date),
                    end: end.map(date),
                    ..RawSplit::empty(SplitKind::Linear)
                },
            }),
            validation: Some(match self.validation {
                Validation::Holdout => RawValidation {
                    kind: ValidationKind::Holdout,
                    train_width: None,
                    step: None,
                    test_width: None,
                    horizon: None,
                },
                Validation::Sliding(c) => RawValidation {
                    kind: ValidationKind::Sliding,
                    train_width: Some(c.train_width),
                    step: Some(c.step),
                    test_width: Some(c.test_width),
                    horizon: Some(c.horizon),
                },
            }),
            examples: self.examples.map(|e| match e {
                ExampleMode::SameDay => RawExamples {
                    kind: ExampleKind::SameDay,
                    window_size: None,
                    step_size: None,
                    horizon: None,
                },
                ExampleMode::Lagged {
                    window_size,
                    step_size,
                    horizon,
                } => RawExamples {
                    kind: ExampleKind::Lagged,
                    window_size: Some(window_size),
                    step_size: Some(step_size),
                    horizon: Some(horizon),
                },
            }),
            columns: Some(self.columns.clone()),
            gbt: self.gbt.map(|p| RawGbt {
                n_trees: Some(p.n_trees),
                shrinkage: Some(p.shrinkage),
                max_depth: Some(p.max_depth),
                min_leaf: Some(p.min_leaf),
            }),
            neural_net: self.neural_net.as_ref().map(|p| RawMlp {
                cycles: Some(p.cycles),
                learning_rate: Some(p.learning_rate),
                momentum: Some(p.momentum),
                hidden: p.hidden.clone(),
            }),
            relative: self.relative.as_ref().map(|r| RawRelative {
                base_feature: Some(r.base_feature.clone()),
                transform: Some(r.transform),
            }),
            ensemble: self.ensemble_members.as_ref().map(|m| RawEnsemble {
                members: Some(m.clone()),
            }),
            knn: self.knn.map(|k| RawKnn {
                k: Some(k.k),
                weighting: Some(k.weighting),
            }),
        };
        toml::to_string(&raw).expect("resolved spec serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SplitKind {
    DateRange,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ValidationKind {
    Holdout,
    Sliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ExampleKind {
    SameDay,
    Lagged,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    symbol: String,
    data_path: String,
    model: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    attributes: Option<Vec<Attribute>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    parallel: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<RawSplit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation: Option<RawValidation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    examples: Option<RawExamples>,
    #[serde(skip_serializing_if = "Option::is_none")]
    columns: Option<CsvSchema>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gbt: Option<RawGbt>,
    #[serde(skip_serializing_if = "Option::is_none")]
    neural_net: Option<RawMlp>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative: Option<RawRelative>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ensemble: Option<RawEnsemble>,
    #[serde(skip_serializing_if = "Option::is_none")]
    knn: Option<RawKnn>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplit {
    kind: SplitKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_start: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_end: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_start: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_end: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    start: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    end: Option<String>,
}

impl RawSplit {
    fn empty(kind: SplitKind) -> RawSplit {
        RawSplit {
            kind,
            train_start: None,
            train_end: None,
            test_start: None,
            test_end: None,
            ratio: None,
            start: None,
            end: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValidation {
    kind: ValidationKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExamples {
    kind: ExampleKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    window_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGbt {
    n_trees: Option<usize>,
    shrinkage: Option<f64>,
    max_depth: Option<usize>,
    min_leaf: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMlp {
    cycles: Option<usize>,
    learning_rate: Option<f64>,
    momentum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hidden: Option<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRelative {
    base_feature: Option<String>,
    transform: Option<Transform>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    members: Option<Vec<MemberKind>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKnn {
    k: Option<usize>,
    weighting: Option<Weighting>,
}

/// 1-based line of `key = ...` inside `[section]` (or the top level).
fn line_of(source: &str, section: Option<&str>, key: &str) -> usize {
    let mut current: Option<String> = None;
    let mut section_line = 1;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = Some(name.trim().to_string());
            if Some(name.trim()) == section {
                section_line = i + 1;
            }
            continue;
        }
        if current.as_deref() == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return i + 1;
                }
            }
        }
    }
    section_line
}

fn spec_error(source: &str, section: Option<&str>, key: &str, message: impl Into<String>) -> Error {
    let full_key = match section {
        Some(s) => format!("{s}.{key}"),
        None => key.to_string(),
    };
    Error::Spec {
        line: line_of(source, section, key),
        key: full_key,
        message: message.into(),
    }
}

fn from_toml_error(source: &str, err: &toml::de::Error) -> Error {
    let message = err.message().to_string();
    let line = err
        .span()
        .map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1)
        .unwrap_or(1);
    let quoted = message.split('`').nth(1).map(str::to_string);
    let line_key = source
        .lines()
        .nth(line - 1)
        .and_then(|l| l.split_once('='))
        .map(|(k, _)| k.trim().trim_matches('"').to_string());
    let key = if message.starts_with("missing field") || message.starts_with("unknown field") {
        quoted.or(line_key)
    } else {
        line_key.or(quoted)
    }
    .unwrap_or_default();
    Error::Spec { key, line, message }
}

/// Reads and resolves a run file.
pub fn load_spec(path: &Path) -> Result<RunSpec> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| Error::argument(format!("cannot read spec {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    parse_spec(&source, &base, &stem)
}

/// Resolves spec text; relative paths are joined to `base_dir` and the
/// default output directory is `base_dir/out/<name>`.
pub fn parse_spec(source: &str, base_dir: &Path, name: &str) -> Result<RunSpec> {
    let raw: RawSpec = toml::from_str(source).map_err(|e| from_toml_error(source, &e))?;
    resolve(raw, source, base_dir, name)
}

fn resolve(raw: RawSpec, src: &str, base: &Path, name: &str) -> Result<RunSpec> {
    let model = raw.model;
    let resolve_path = |p: &str| {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    if raw.symbol.trim().is_empty() {
        return Err(spec_error(src, None, "symbol", "symbol must not be empty"));
    }
    let not_for = |section: &str| {
        spec_error(
            src,
            None,
            section,
            format!("section [{section}] does not apply to model {}", model.name()),
        )
    };
    let date = |section: &str, key: &str, v: &Option<String>| -> Result<Option<NaiveDate>> {
        v.as_deref()
            .map(|s| parse_day(s).map_err(|e| spec_error(src, Some(section), key, e.to_string())))
            .transpose()
    };
    let required = |section: &str, key: &str| spec_error(src, Some(section), key, "missing required key");
    let forbid = |section: &str, key: &str, present: bool, why: &str| -> Result<()> {
        if present {
            Err(spec_error(src, Some(section), key, why.to_string()))
        } else {
            Ok(())
        }
    };

    let split = match raw.split {
        None => Split::Linear {
            ratio: 0.6,
            start: None,
            end: None,
        },
        Some(s) => match s.kind {
            SplitKind::DateRange => {
                let why = "only valid for kind = \"linear\"";
                forbid("split", "ratio", s.ratio.is_some(), why)?;
                forbid("split", "start", s.start.is_some(), why)?;
                forbid("split", "end", s.end.is_some(), why)?;
                let get = |key: &str, v: &Option<String>| -> Result<NaiveDate> {
                    date("split", key, v)?.ok_or_else(|| required("split", key))
                };
                let train_start = get("train_start", &s.train_start)?;
                let train_end = get("train_end", &s.train_end)?;
                let test_start = get("test_start", &s.test_start)?;
                let test_end = get("test_end", &s.test_end)?;
                if train_start > train_end {
                    return Err(spec_error(src, Some("split"), "train_end", "train_end precedes train_start"));
                }
                if test_start > test_end {
                    return Err(spec_error(src, Some("split"), "test_end", "test_end precedes test_start"));
                }
                if test_start <= train_end {
                    return Err(spec_error(
                        src,
                        Some("split"),
                        "test_start",
                        "test range must start after the training range ends",
                    ));
                }
                Split::DateRange {
                    train_start,
                    train_end,
                    test_start,
                    test_end,
                }
            }
            SplitKind::Linear => {
                let why = "only valid for kind = \"date_range\"";
                forbid("split", "train_start", s.train_start.is_some(), why)?;
                forbid("split", "train_end", s.train_end.is_some(), why)?;
                forbid("split", "test_start", s.test_start.is_some(), why)?;
                forbid("split", "test_end", s.test_end.is_some(), why)?;
                let ratio = s.ratio.unwrap_or(0.6);
                if !(ratio > 0.0 && ratio < 1.0) {
                    return Err(spec_error(src, Some("split"), "ratio", "ratio must lie strictly between 0 and 1"));
                }
                let start = date("split", "start", &s.start)?;
                let end = date("split", "end", &s.end)?;
                if let (Some(a), Some(b)) = (start, end) {
                    if a > b {
                        return Err(spec_error(src, Some("split"), "end", "end precedes start"));
                    }
                }
                Split::Linear { ratio, start, end }
            }
        },
    };

    let validation = match raw.validation {
        None if model == ModelKind::NeuralNet => Validation::Sliding(SlidingConfig::default()),
        None => Validation::Holdout,
        Some(v) => match v.kind {
            ValidationKind::Holdout => {
                let why = "only valid for kind = \"sliding\"";
                forbid("validation", "train_width", v.train_width.is_some(), why)?;
                forbid("validation", "step", v.step.is_some(), why)?;
                forbid("validation", "test_width", v.test_width.is_some(), why)?;
                forbid("validation", "horizon", v.horizon.is_some(), why)?;
                Validation::Holdout
            }
            ValidationKind::Sliding => {
                if model == ModelKind::Knn {
                    return Err(spec_error(src, Some("validation"), "kind", "knn runs support holdout only"));
                }
                let d = SlidingConfig::default();
                let cfg = SlidingConfig {
                    train_width: v.train_width.unwrap_or(d.train_width),
                    step: v.step.unwrap_or(d.step),
                    test_width: v.test_width.unwrap_or(d.test_width),
                    horizon: v.horizon.unwrap_or(d.horizon),
                };
                for (key, value) in [
                    ("train_width", cfg.train_width),
                    ("step", cfg.step),
                    ("test_width", cfg.test_width),
                    ("horizon", cfg.horizon),
                ] {
                    if value == 0 {
                        return Err(spec_error(src, Some("validation"), key, "must be positive"));
                    }
                }
                Validation::Sliding(cfg)
            }
        },
    };

    let examples = match (model, raw.examples) {
        (ModelKind::Knn, Some(_)) => return Err(not_for("examples")),
        (ModelKind::Knn, None) => None,
        (_, Some(e)) => Some(match e.kind {
            ExampleKind::SameDay => {
                let why = "only valid for kind = \"lagged\"";
                forbid("examples", "window_size", e.window_size.is_some(), why)?;
                forbid("examples", "step_size", e.step_size.is_some(), why)?;
                forbid("examples", "horizon", e.horizon.is_some(), why)?;
                ExampleMode::SameDay
            }
            ExampleKind::Lagged => {
                let mode = ExampleMode::Lagged {
                    window_size: e.window_size.unwrap_or(1),
                    step_size: e.step_size.unwrap_or(1),
                    horizon: e.horizon.unwrap_or(1),
                };
                if let ExampleMode::Lagged {
                    window_size,
                    step_size,
                    horizon,
                } = mode
                {
                    for (key, value) in [
                        ("window_size", window_size),
                        ("step_size", step_size),
                        ("horizon", horizon),
                    ] {
                        if value == 0 {
                            return Err(spec_error(src, Some("examples"), key, "must be positive"));
                        }
                    }
                }
                mode
            }
        }),
        (ModelKind::NeuralNet, None) => Some(ExampleMode::Lagged {
            window_size: 1,
            step_size: 1,
            horizon: 1,
        }),
        (_, None) => Some(ExampleMode::SameDay),
    };

    let attributes = match (model, raw.attributes) {
        (ModelKind::Knn, Some(a)) if a != [Attribute::Close] => {
            return Err(spec_error(src, None, "attributes", "knn runs use the close price only"));
        }
        (ModelKind::Knn, _) => vec![Attribute::Close],
        (_, Some(a)) => a,
        (ModelKind::NeuralNet, None) => vec![Attribute::Close],
        (_, None) => vec![
            Attribute::Open,
            Attribute::High,
            Attribute::Low,
            Attribute::Volume,
            Attribute::MarketCap,
        ],
    };
    if attributes.is_empty() {
        return Err(spec_error(src, None, "attributes", "at least one attribute is required"));
    }
    for (i, a) in attributes.iter().enumerate() {
        if attributes[..i].contains(a) {
            return Err(spec_error(src, None, "attributes", format!("attribute {a} listed twice")));
        }
    }
    if examples == Some(ExampleMode::SameDay) && attributes.contains(&Attribute::Close) {
        return Err(spec_error(
            src,
            None,
            "attributes",
            "same-day examples cannot use the close price as a feature",
        ));
    }

    let uses_gbt = matches!(model, ModelKind::Gbt | ModelKind::Ensemble);
    let uses_nn = matches!(model, ModelKind::NeuralNet | ModelKind::Ensemble);
    let is_ensemble = model == ModelKind::Ensemble;
    let seed = raw.seed.unwrap_or(0);

    let gbt = match (uses_gbt, raw.gbt) {
        (false, Some(_)) => return Err(not_for("gbt")),
        (false, None) => None,
        (true, g) => {
            let d = GbtParams::default();
            let g = g.unwrap_or(RawGbt {
                n_trees: None,
                shrinkage: None,
                max_depth: None,
                min_leaf: None,
            });
            let p = GbtParams {
                n_trees: g.n_trees.unwrap_or(d.n_trees),
                shrinkage: g.shrinkage.unwrap_or(d.shrinkage),
                max_depth: g.max_depth.unwrap_or(d.max_depth),
                min_leaf: g.min_leaf.unwrap_or(d.min_leaf),
                seed,
            };
            if !(p.shrinkage > 0.0 && p.shrinkage <= 1.0) {
                return Err(spec_error(src, Some("gbt"), "shrinkage", "shrinkage must lie in (0, 1]"));
            }
            if p.min_leaf == 0 {
                return Err(spec_error(src, Some("gbt"), "min_leaf", "must be positive"));
            }
            Some(p)
        }
    };

    let n_features = match examples {
        Some(ExampleMode::Lagged { window_size, .. }) => attributes.len() * window_size,
        _ => attributes.len() + usize::from(is_ensemble),
    };
    let neural_net = match (uses_nn, raw.neural_net) {
        (false, Some(_)) => return Err(not_for("neural_net")),
        (false, None) => None,
        (true, m) => {
            let (lr, mom) = if is_ensemble { (0.3, 0.2) } else { (0.03, 0.9) };
            let m = m.unwrap_or(RawMlp {
                cycles: None,
                learning_rate: None,
                momentum: None,
                hidden: None,
            });
            let mut p = MlpParams {
                cycles: m.cycles.unwrap_or(500),
                learning_rate: m.learning_rate.unwrap_or(lr),
                momentum: m.momentum.unwrap_or(mom),
                hidden: m.hidden,
                seed,
            };
            if !(p.learning_rate > 0.0) {
                return Err(spec_error(src, Some("neural_net"), "learning_rate", "must be positive"));
            }
            if !(0.0..1.0).contains(&p.momentum) {
                return Err(spec_error(src, Some("neural_net"), "momentum", "must lie in [0, 1)"));
            }
            if p.hidden.as_ref().is_some_and(|h| h.contains(&0)) {
                return Err(spec_error(src, Some("neural_net"), "hidden", "layer sizes must be positive"));
            }
            p.hidden = Some(p.hidden_for(n_features));
            Some(p)
        }
    };

    let relative = match (is_ensemble, raw.relative) {
        (false, Some(_)) => return Err(not_for("relative")),
        (false, None) => None,
        (true, r) => Some(RelativeSettings {
            base_feature: r
                .as_ref()
                .and_then(|r| r.base_feature.clone())
                .unwrap_or_else(|| PREV_CLOSE_FEATURE.to_string()),
            transform: r.and_then(|r| r.transform).unwrap_or(Transform::Difference),
        }),
    };
    let ensemble_members = match (is_ensemble, raw.ensemble) {
        (false, Some(_)) => return Err(not_for("ensemble")),
        (false, None) => None,
        (true, e) => {
            let members = e
                .and_then(|e| e.members)
                .unwrap_or_else(|| vec![MemberKind::Gbt, MemberKind::NeuralNet, MemberKind::Relative]);
            if members.is_empty() {
                return Err(spec_error(src, Some("ensemble"), "members", "at least one member is required"));
            }
            Some(members)
        }
    };
    let knn = match (model == ModelKind::Knn, raw.knn) {
        (false, Some(_)) => return Err(not_for("knn")),
        (false, None) => None,
        (true, k) => {
            let s = KnnSettings {
                k: k.as_ref().and_then(|k| k.k).unwrap_or(5),
                weighting: k.and_then(|k| k.weighting).unwrap_or_default(),
            };
            if s.k == 0 {
                return Err(spec_error(src, Some("knn"), "k", "k must be at least 1"));
            }
            Some(s)
        }
    };

    Ok(RunSpec {
        symbol: raw.symbol,
        data_path: resolve_path(&raw.data_path),
        model,
        seed,
        output_dir: raw
            .output_dir
            .as_deref()
            .map(resolve_path)
            .unwrap_or_else(|| base.join("out").join(name)),
        attributes,
        parallel: raw.parallel.unwrap_or(false),
        split,
        validation,
        examples,
        columns: raw.columns.unwrap_or_default(),
        gbt,
        neural_net,
        relative,
        ensemble_members,
        knn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunSpec> {
        parse_spec(text, Path::new("/specs"), "t")
    }

    #[test]
    fn knn_defaults() {
        let s = parse("symbol = \"btc\"\ndata_path = \"d.csv\"\nmodel = \"knn\"\n").unwrap();
        assert_eq!(
            s.knn,
            Some(KnnSettings {
                k: 5,
                weighting: Weighting::Uniform
            })
        );
        assert_eq!(s.data_path, PathBuf::from("/specs/d.csv"));
        assert_eq!(s.output_dir, PathBuf::from("/specs/out/t"));
        assert_eq!(s.validation, Validation::Holdout);
        assert!(s.examples.is_none() && s.gbt.is_none());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse("symbol = \"btc\"\ndata_path = \"d.csv\"\nmodle = \"knn\"\n").unwrap_err();
        match err {
            Error::Spec { key, line, .. } => {
                assert_eq!(key, "modle");
                assert_eq!(line, 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_and_mistyped() {
        match parse("symbol = \"btc\"\nmodel = \"knn\"\n").unwrap_err() {
            Error::Spec { key, .. } => assert_eq!(key, "data_path"),
            other => panic!("{other:?}"),
        }
        match parse("symbol = \"btc\"\ndata_path = \"d\"\nmodel = \"knn\"\nseed = \"x\"\n").unwrap_err() {
            Error::Spec { key, line, .. } => {
                assert_eq!(key, "seed");
                assert_eq!(line, 4);
            }
            other => panic!("{other:?}"),
        }
        match parse("symbol = \"b\"\ndata_path = \"d\"\nmodel = \"knn\"\n[knn]\nk = 3\nkk = 2\n").unwrap_err() {
            Error::Spec { key, line, .. } => {
                assert_eq!(key, "kk");
                assert_eq!(line, 6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn section_for_other_model_rejected() {
        let err = parse("symbol = \"b\"\ndata_path = \"d\"\nmodel = \"gbt\"\n[knn]\nk = 3\n").unwrap_err();
        assert!(matches!(err, Error::Spec { ref key, .. } if key == "knn"), "{err:?}");
    }

    #[test]
    fn overlapping_dates_rejected() {
        let text = "symbol = \"b\"\ndata_path = \"d\"\nmodel = \"gbt\"\n[split]\nkind = \"date_range\"\n\
                    train_start = \"2019-01-01\"\ntrain_end = \"2019-01-10\"\ntest_start = \"2019-01-10\"\ntest_end = \"2019-01-20\"\n";
        match parse(text).unwrap_err() {
            Error::Spec { key, line, .. } => {
                assert_eq!(key, "split.test_start");
                assert_eq!(line, 8);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ensemble_defaults_and_echo_roundtrip() {
        let s = parse("symbol = \"b\"\ndata_path = \"d\"\nmodel = \"ensemble\"\nseed = 3\n").unwrap();
        let nn = s.neural_net.clone().unwrap();
        assert_eq!((nn.learning_rate, nn.momentum), (0.3, 0.2));
        assert_eq!(nn.hidden, Some(vec![4]));
        assert_eq!(s.relative.as_ref().unwrap().base_feature, "close-1");
        assert_eq!(s.gbt.unwrap().n_trees, 500);
        let echo = s.echo();
        assert_eq!(parse_spec(&echo, Path::new("/elsewhere"), "x").unwrap(), s);
        match s.learner().unwrap() {
            LearnerConfig::Vote { members, .. } => assert_eq!(members.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nn_defaults() {
        let s = parse("symbol = \"b\"\ndata_path = \"d\"\nmodel = \"neural_net\"\n").unwrap();
        assert_eq!(s.validation, Validation::Sliding(SlidingConfig::default()));
        assert_eq!(
            s.examples,
            Some(ExampleMode::Lagged {
                window_size: 1,
                step_size: 1,
                horizon: 1
            })
        );
        let nn = s.neural_net.unwrap();
        assert_eq!((nn.cycles, nn.learning_rate, nn.momentum), (500, 0.03, 0.9));
        assert_eq!(nn.hidden, Some(vec![2]));
    }

    #[test]
    fn dotted_dates_accepted() {
        let text = "symbol = \"b\"\ndata_path = \"d\"\nmodel = \"gbt\"\n[split]\nkind = \"date_range\"\n\
                    train_start = \"27.12.2013\"\ntrain_end = \"31.12.2018\"\ntest_start = \"01.01.2019\"\ntest_end = \"31.01.2019\"\n";
        let s = parse(text).unwrap();
        assert_eq!(
            s.split,
            Split::DateRange {
                train_start: NaiveDate::from_ymd_opt(2013, 12, 27).unwrap(),
                train_end: NaiveDate::from_ymd_opt(2018, 12, 31).unwrap(),
                test_start: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
                test_end: NaiveDate::from_ymd_opt(2019, 1, 31).unwrap(),
            }
        );
    }

    #[test]
    fn same_day_close_rejected() {
        let err = parse("symbol = \"b\"\ndata_path = \"d\"\nmodel = \"gbt\"\nattributes = [\"open\", \"close\"]\n").unwrap_err();
        assert!(matches!(err, Error::Spec { ref key, line: 4, .. } if key == "attributes"), "{err:?}");
    }
}
