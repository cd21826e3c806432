use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coinforecast"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

/// 90 days of candles from 2018-11-03 through 2019-01-31.
fn write_data(path: &Path, close_header: &str) {
    let mut s = format!("Date,Open,High,Low,{close_header},Volume,MarketCap\n");
    let mut close = 4000.0f64;
    for i in 0..90 {
        let day = date_of(i);
        let open = close;
        close *= 1.0 + 0.03 * ((i * 7 % 11) as f64 / 11.0 - 0.5);
        let _ = writeln!(
            s,
            "{day},{open},{},{},{close},{},{}",
            open.max(close) * 1.01,
            open.min(close) * 0.99,
            1.0e9 + i as f64 * 1.0e6,
            close * 1.7e7
        );
    }
    std::fs::write(path, s).unwrap();
}

fn date_of(i: usize) -> String {
    let months = [(2018, 11, 30), (2018, 12, 31), (2019, 1, 31)];
    let mut d = i + 3;
    for (y, m, len) in months {
        if d <= len {
            return format!("{y}-{m:02}-{d:02}");
        }
        d -= len;
    }
    panic!("date out of range")
}

fn spec(model: &str, extra: &str) -> String {
    format!(
        "symbol = \"demo\"\ndata_path = \"data.csv\"\nmodel = \"{model}\"\nseed = 1\noutput_dir = \"out/{model}\"\n\n\
         [split]\nkind = \"date_range\"\ntrain_start = \"2018-11-03\"\ntrain_end = \"2018-12-31\"\n\
         test_start = \"2019-01-01\"\ntest_end = \"2019-01-31\"\n{extra}"
    )
}

#[test]
fn ingest_reports_rows_and_honours_schema() {
    let dir = tempfile::tempdir().unwrap();
    write_data(&dir.path().join("a.csv"), "Close**");
    let plain = bin(&["ingest", "a.csv"], dir.path());
    assert_eq!(plain.status.code(), Some(2), "{}", text(&plain));
    let ok = bin(&["ingest", "a.csv", "--schema", "close=Close**", "--symbol", "demo"], dir.path());
    assert!(ok.status.success(), "{}", text(&ok));
    let out = text(&ok);
    assert!(out.contains("rows: 90") && out.contains("last date: 2019-01-31"), "{out}");
    let bad = bin(&["ingest", "a.csv", "--schema", "nonsense"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn run_dump_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    write_data(&dir.path().join("data.csv"), "Close");
    std::fs::write(dir.path().join("gbt.toml"), spec("gbt", "\n[gbt]\nn_trees = 20\n")).unwrap();
    std::fs::write(dir.path().join("knn.toml"), spec("knn", "")).unwrap();

    let run = bin(&["run", "gbt.toml"], dir.path());
    assert!(run.status.success(), "{}", text(&run));
    let predictions = std::fs::read_to_string(dir.path().join("out/gbt/predictions.csv")).unwrap();
    assert_eq!(predictions.lines().count(), 32);
    assert!(predictions.starts_with("date,actual,prediction,prev_actual"));

    let dump = bin(&["dump-model", "out/gbt/model.json"], dir.path());
    assert!(text(&dump).contains("20 trees"), "{}", text(&dump));
    let tree = bin(&["dump-model", "out/gbt/model.json", "--tree", "0"], dir.path());
    assert!(tree.status.success(), "{}", text(&tree));
    assert_eq!(bin(&["dump-model", "out/gbt/model.json", "--tree", "99"], dir.path()).status.code(), Some(1));

    let cmp = bin(&["compare", "gbt.toml", "knn.toml", "--out", "cmp"], dir.path());
    assert!(cmp.status.success(), "{}", text(&cmp));
    for f in ["comparison.txt", "comparison.csv", "plot_data.csv"] {
        assert!(dir.path().join("cmp").join(f).exists(), "{f}");
    }
    let knn_dump = bin(&["dump-model", "out/knn/model.json"], dir.path());
    assert!(text(&knn_dump).contains("k 5"), "{}", text(&knn_dump));
}

#[test]
fn sweep_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    write_data(&dir.path().join("data.csv"), "Close");
    std::fs::write(dir.path().join("gbt.toml"), spec("gbt", "\n[gbt]\nn_trees = 5\n")).unwrap();
    std::fs::write(dir.path().join("grid.toml"), "\"gbt.max_depth\" = [2, 3]\n").unwrap();
    let out = bin(&["sweep", "gbt.toml", "--grid", "grid.toml"], dir.path());
    assert!(out.status.success(), "{}", text(&out));
    let summary = std::fs::read_to_string(dir.path().join("out/gbt/sweep.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(dir.path().join("out/gbt/sweep-001/predictions.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bin(&[], dir.path()).status.code(), Some(1));
    assert_eq!(bin(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(bin(&["run", "missing.toml"], dir.path()).status.code(), Some(1));
    std::fs::write(dir.path().join("bad.toml"), "symbol = \"x\"\nmodel = \"gbt\"\nbogus = 1\n").unwrap();
    let bad = bin(&["run", "bad.toml"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(text(&bad).contains("bogus"), "{}", text(&bad));
    std::fs::write(dir.path().join("nodata.toml"), spec("gbt", "")).unwrap();
    let nodata = bin(&["run", "nodata.toml"], dir.path());
    assert_eq!(nodata.status.code(), Some(2), "{}", text(&nodata));
    assert!(!dir.path().join("out/gbt").exists());
    assert_eq!(bin(&["compare", "nodata.toml"], dir.path()).status.code(), Some(1));
}
