//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls into the code under test except for
//! plain data types.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use coinforecast::gbt::TreeNode;
use coinforecast::mlp::Network;
use coinforecast::{OhlcvRecord, PriceSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn close_opt(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => close(x, y, tol),
        _ => false,
    }
}

/// Loop-based metrics, written out term by term.
#[derive(Debug, Clone)]
pub struct NaiveMetrics {
    pub rmse: f64,
    pub trend: f64,
    pub abs: (f64, f64),
    pub rel: Option<(f64, f64)>,
    pub sq: (f64, f64),
    pub corr: Option<f64>,
    pub sq_corr: Option<f64>,
}

fn mean_and_population_std(v: &[f64]) -> (f64, f64) {
    let mut total = 0.0;
    for x in v {
        total += x;
    }
    let mean = total / v.len() as f64;
    let mut dev = 0.0;
    for x in v {
        dev += (x - mean) * (x - mean);
    }
    (mean, (dev / v.len() as f64).sqrt())
}

pub fn naive_metrics(actual: &[f64], pred: &[f64], prev: &[f64]) -> NaiveMetrics {
    let n = actual.len();
    let mut abs = vec![0.0; n];
    let mut sq = vec![0.0; n];
    let mut rel = vec![0.0; n];
    let mut has_zero = false;
    let mut hits = 0usize;
    for i in 0..n {
        let e = pred[i] - actual[i];
        abs[i] = e.abs();
        sq[i] = e * e;
        if actual[i] == 0.0 {
            has_zero = true;
        } else {
            rel[i] = e.abs() / actual[i].abs();
        }
        let up_pred = pred[i] - prev[i] >= 0.0;
        let up_act = actual[i] - prev[i] >= 0.0;
        if up_pred == up_act {
            hits += 1;
        }
    }
    let sq_ms = mean_and_population_std(&sq);
    let corr = if n < 2 {
        None
    } else {
        let (ma, sa) = mean_and_population_std(actual);
        let (mp, sp) = mean_and_population_std(pred);
        if sa == 0.0 || sp == 0.0 {
            None
        } else {
            let mut cov = 0.0;
            for i in 0..n {
                cov += (actual[i] - ma) * (pred[i] - mp);
            }
            cov /= n as f64;
            Some(cov / (sa * sp))
        }
    };
    NaiveMetrics {
        rmse: sq_ms.0.sqrt(),
        trend: hits as f64 / n as f64,
        abs: mean_and_population_std(&abs),
        rel: if has_zero { None } else { Some(mean_and_population_std(&rel)) },
        sq: sq_ms,
        corr,
        sq_corr: corr.map(|c| c * c),
    }
}

/// Checks every field of a performance vector against the naive oracle.
pub fn matches_oracle(pv: &coinforecast::PerformanceVector, o: &NaiveMetrics, tol: f64) -> Result<(), String> {
    let checks = [
        ("rmse", Some(pv.rmse), Some(o.rmse)),
        ("trend_accuracy", Some(pv.trend_accuracy), Some(o.trend)),
        ("absolute_error_mean", Some(pv.absolute_error.mean), Some(o.abs.0)),
        ("absolute_error_std", Some(pv.absolute_error.std), Some(o.abs.1)),
        ("relative_error_mean", pv.relative_error.map(|r| r.mean), o.rel.map(|r| r.0)),
        ("relative_error_std", pv.relative_error.map(|r| r.std), o.rel.map(|r| r.1)),
        ("squared_error_mean", Some(pv.squared_error.mean), Some(o.sq.0)),
        ("squared_error_std", Some(pv.squared_error.std), Some(o.sq.1)),
        ("correlation", pv.correlation, o.corr),
        ("squared_correlation", pv.squared_correlation, o.sq_corr),
    ];
    for (key, got, want) in checks {
        if !close_opt(got, want, tol) {
            return Err(format!("{key}: got {got:?}, oracle {want:?}"));
        }
    }
    Ok(())
}

/// Example count by walking every window start.
pub fn enumerate_windows(n: usize, w: usize, s: usize, h: usize) -> Vec<(Vec<usize>, usize)> {
    let mut out = Vec::new();
    let mut t = 0;
    while t + w - 1 + h < n {
        out.push(((t..t + w).collect(), t + w - 1 + h));
        t += s;
    }
    out
}

/// Fold layouts by walking every fold start.
pub fn enumerate_folds(n: usize, tw: usize, step: usize, ts: usize, h: usize) -> Vec<((usize, usize), (usize, usize))> {
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let train = (k * step, k * step + tw - 1);
        let test_first = train.1 + h;
        let test = (test_first, test_first + ts - 1);
        if test.1 >= n {
            break;
        }
        out.push((train, test));
        k += 1;
    }
    out
}

/// Layer-by-layer forward pass over the raw weight arrays.
pub fn naive_forward(net: &Network, input: &[f64]) -> f64 {
    let mut act = input.to_vec();
    for l in 0..net.weights.len() {
        let n_in = net.layer_sizes[l];
        let n_out = net.layer_sizes[l + 1];
        let mut next = vec![0.0; n_out];
        for j in 0..n_out {
            let mut z = net.biases[l][j];
            for i in 0..n_in {
                z += net.weights[l][j * n_in + i] * act[i];
            }
            next[j] = 1.0 / (1.0 + (-z).exp());
        }
        act = next;
    }
    act[0]
}

/// Recursive tree walk.
pub fn walk(node: &TreeNode, row: &[f64]) -> f64 {
    match node {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if row[*feature] <= *threshold {
                walk(left, row)
            } else {
                walk(right, row)
            }
        }
    }
}

/// Least squares with intercept via normal equations and Gaussian
/// elimination with partial pivoting. Returns (intercept, coefficients).
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> (f64, Vec<f64>) {
    let p = x[0].len() + 1;
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, t) in x.iter().zip(y) {
        let mut z = vec![1.0];
        z.extend_from_slice(row);
        for i in 0..p {
            for j in 0..p {
                a[i][j] += z[i] * z[j];
            }
            a[i][p] += z[i] * t;
        }
    }
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=p {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    let sol: Vec<f64> = (0..p).map(|i| a[i][p] / a[i][i]).collect();
    (sol[0], sol[1..].to_vec())
}

pub fn day(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Daily candles from closes; opens/highs/lows bracket the close.
pub fn series_from_closes(symbol: &str, start: NaiveDate, closes: &[f64]) -> PriceSeries {
    let records = closes
        .iter()
        .enumerate()
        .map(|(i, &c)| OhlcvRecord {
            date: start + Duration::days(i as i64),
            open: c * 0.99,
            high: c * 1.02,
            low: c * 0.97,
            close: c,
            volume: Some(1.0e6 + 1.0e3 * i as f64),
            market_cap: Some(c * 1.7e7),
        })
        .collect();
    PriceSeries::new(symbol, records).unwrap()
}

/// Bitcoin-sized random walk with realistic candle structure, covering
/// 2013-12-27 through 2019-01-31.
pub fn synthetic_market(seed: u64) -> PriceSeries {
    let start = day(2013, 12, 27);
    let n = (day(2019, 1, 31) - start).num_days() as usize + 1;
    let mut r = rng(seed);
    let mut close = 700.0f64;
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let open = close;
        close = (close * (1.0 + r.gen_range(-0.04..0.04))).max(1.0);
        let high = open.max(close) * (1.0 + r.gen_range(0.0..0.02));
        let low = open.min(close) * (1.0 - r.gen_range(0.0..0.02));
        records.push(OhlcvRecord {
            date: start + Duration::days(i as i64),
            open,
            high,
            low,
            close,
            volume: Some(r.gen_range(1.0e7..5.0e9)),
            market_cap: Some(close * 1.7e7),
        });
    }
    PriceSeries::new("bitcoin", records).unwrap()
}

pub fn write_series(series: &PriceSeries, path: &Path) {
    let file = std::fs::File::create(path).unwrap();
    series.write_csv(file).unwrap();
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[derive(Debug, serde::Deserialize)]
pub struct CsvPrediction {
    pub date: NaiveDate,
    pub actual: f64,
    pub prediction: f64,
    pub prev_actual: f64,
}

pub fn read_predictions(path: &Path) -> Vec<CsvPrediction> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.deserialize().map(|row| row.unwrap()).collect()
}
