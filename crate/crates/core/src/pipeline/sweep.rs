//! Hyperparameter grid over one run file.
//!
//! The grid file maps dotted keys to lists of values:
//!
//! ```toml
//! "gbt.n_trees" = [100, 500]
//! "gbt.max_depth" = [3, 5]
//! ```
//!
//! Every combination runs into `<output_dir>/sweep-NNN`, and a summary
//! `sweep.csv` lands in `<output_dir>`.

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::pipeline::compare::COMPARED_METRICS;
use crate::pipeline::run::{run, RunReport};
use crate::pipeline::spec::parse_spec;

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub settings: Vec<(String, Value)>,
    pub report: RunReport,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub keys: Vec<String>,
    pub points: Vec<SweepPoint>,
    pub summary_path: PathBuf,
}

pub fn parse_grid(text: &str) -> Result<Vec<(String, Vec<Value>)>> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::argument(format!("grid file: {}", e.message())))?;
    let mut axes = Vec::new();
    for (key, value) in table {
        let Value::Array(values) = value else {
            return Err(Error::argument(format!("grid key `{key}` must map to a list")));
        };
        if values.is_empty() {
            return Err(Error::argument(format!("grid key `{key}` has no values")));
        }
        if key.split('.').count() > 2 {
            return Err(Error::argument(format!("grid key `{key}` nests deeper than one section")));
        }
        axes.push((key, values));
    }
    if axes.is_empty() {
        return Err(Error::argument("grid file defines no keys"));
    }
    Ok(axes)
}

fn set_key(table: &mut Table, key: &str, value: Value) -> Result<()> {
    match key.split_once('.') {
        None => {
            table.insert(key.to_string(), value);
        }
        Some((section, field)) => {
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            let Value::Table(inner) = entry else {
                return Err(Error::argument(format!("`{section}` is not a section")));
            };
            inner.insert(field.to_string(), value);
        }
    }
    Ok(())
}

/// Cartesian product, first key varying slowest.
fn combinations(axes: &[(String, Vec<Value>)]) -> Vec<Vec<(String, Value)>> {
    let mut out: Vec<Vec<(String, Value)>> = vec![vec![]];
    for (key, values) in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.push((key.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    out
}

pub fn sweep(spec_path: &Path, grid_path: &Path) -> Result<SweepResult> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| Error::argument(format!("cannot read {}: {e}", p.display())))
    };
    let source = read(spec_path)?;
    let base_dir = spec_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let name = spec_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let base = parse_spec(&source, &base_dir, &name)?;
    let axes = parse_grid(&read(grid_path)?)?;
    let table: Table = source
        .parse()
        .map_err(|e: toml::de::Error| Error::argument(format!("spec: {}", e.message())))?;

    let mut points = Vec::new();
    for (i, combo) in combinations(&axes).into_iter().enumerate() {
        let mut t = table.clone();
        for (k, v) in &combo {
            set_key(&mut t, k, v.clone())?;
        }
        let out = base.output_dir.join(format!("sweep-{i:03}"));
        t.insert("output_dir".into(), Value::String(out.display().to_string()));
        let text = toml::to_string(&t).map_err(|e| Error::Invariant(format!("grid spec: {e}")))?;
        let spec = parse_spec(&text, &base_dir, &name)?;
        let report = run(&spec)?;
        points.push(SweepPoint {
            settings: combo,
            report,
        });
    }

    let keys: Vec<String> = axes.iter().map(|(k, _)| k.clone()).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::io("writing sweep summary", e.into());
    let mut header = vec!["run".to_string()];
    header.extend(keys.iter().cloned());
    header.extend(COMPARED_METRICS.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(io)?;
    for (i, p) in points.iter().enumerate() {
        let mut rec = vec![format!("sweep-{i:03}")];
        rec.extend(p.settings.iter().map(|(_, v)| v.to_string()));
        rec.extend(
            p.report
                .metrics
                .headline()
                .iter()
                .map(|(_, v)| v.map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&rec).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("writing sweep summary", e.into_error()))?;
    let summary_path = base.output_dir.join("sweep.csv");
    std::fs::create_dir_all(&base.output_dir)
        .map_err(|e| Error::io(format!("creating {}", base.output_dir.display()), e))?;
    std::fs::write(&summary_path, bytes).map_err(|e| Error::io(format!("writing {}", summary_path.display()), e))?;
    Ok(SweepResult {
        keys,
        points,
        summary_path,
    })
}
