//! Daily OHLCV candles: ingestion, validation, date slicing and linear splits.
//!
//! Input rows may arrive in either date order (exports are frequently newest
//! first); the resulting [`PriceSeries`] is always ascending. Calendar gaps are
//! allowed and surfaced through [`PriceSeries::gaps`], never filled.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the six numeric attributes of a daily candle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Open,
    High,
    Low,
    Close,
    Volume,
    MarketCap,
}

impl Attribute {
    pub const ALL: [Attribute; 6] = [
        Attribute::Open,
        Attribute::High,
        Attribute::Low,
        Attribute::Close,
        Attribute::Volume,
        Attribute::MarketCap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Open => "open",
            Attribute::High => "high",
            Attribute::Low => "low",
            Attribute::Close => "close",
            Attribute::Volume => "volume",
            Attribute::MarketCap => "market_cap",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "open" => Ok(Attribute::Open),
            "high" => Ok(Attribute::High),
            "low" => Ok(Attribute::Low),
            "close" => Ok(Attribute::Close),
            "volume" => Ok(Attribute::Volume),
            "market_cap" | "marketcap" => Ok(Attribute::MarketCap),
            other => Err(Error::argument(format!("unknown attribute `{other}`"))),
        }
    }
}

/// A single daily candle. Volume and market cap are `None` when the source
/// does not carry them (index series).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OhlcvRecord {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: Option<f64>,
    pub market_cap: Option<f64>,
}

impl OhlcvRecord {
    pub fn value(&self, attr: Attribute) -> Option<f64> {
        match attr {
            Attribute::Open => Some(self.open),
            Attribute::High => Some(self.high),
            Attribute::Low => Some(self.low),
            Attribute::Close => Some(self.close),
            Attribute::Volume => self.volume,
            Attribute::MarketCap => self.market_cap,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} price must be positive and finite, got {v}"));
            }
        }
        for (name, v) in [("volume", self.volume), ("market cap", self.market_cap)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(format!("{name} must be nonnegative and finite, got {v}"));
                }
            }
        }
        Ok(())
    }
}

/// Date-ordered (strictly ascending) nonempty sequence of candles.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    symbol: String,
    records: Vec<OhlcvRecord>,
}

impl PriceSeries {
    /// Sorts the records ascending and checks every series invariant.
    pub fn new(symbol: impl Into<String>, mut records: Vec<OhlcvRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InsufficientData {
                what: "records",
                needed: 1,
                got: 0,
            });
        }
        records.sort_by_key(|r| r.date);
        for w in records.windows(2) {
            if w[0].date == w[1].date {
                return Err(Error::DuplicateDate(w[0].date));
            }
        }
        for r in &records {
            if r.low > r.high {
                return Err(Error::InconsistentCandle(r.date));
            }
            r.validate().map_err(Error::Argument)?;
        }
        Ok(PriceSeries {
            symbol: symbol.into(),
            records,
        })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn records(&self) -> &[OhlcvRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.records[0].date
    }

    pub fn last_date(&self) -> NaiveDate {
        self.records[self.records.len() - 1].date
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.records.iter().map(|r| r.date).collect()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.close).collect()
    }

    /// True when every record carries the attribute.
    pub fn has_attribute(&self, attr: Attribute) -> bool {
        self.records.iter().all(|r| r.value(attr).is_some())
    }

    /// The attribute's values, or an argument error naming the first date it is missing on.
    pub fn values(&self, attr: Attribute) -> Result<Vec<f64>> {
        self.records
            .iter()
            .map(|r| {
                r.value(attr).ok_or_else(|| {
                    Error::argument(format!(
                        "attribute `{attr}` is absent from {} on {}",
                        self.symbol, r.date
                    ))
                })
            })
            .collect()
    }

    /// Consecutive record pairs more than one calendar day apart.
    pub fn gaps(&self) -> Vec<(NaiveDate, NaiveDate)> {
        self.records
            .windows(2)
            .filter(|w| w[1].date - w[0].date > Duration::days(1))
            .map(|w| (w[0].date, w[1].date))
            .collect()
    }

    /// Records with `start <= date <= end`, in order.
    pub fn slice_by_date(&self, start: NaiveDate, end: NaiveDate) -> Result<PriceSeries> {
        if start > end {
            return Err(Error::argument(format!("slice start {start} is after end {end}")));
        }
        let records: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.date >= start && r.date <= end)
            .cloned()
            .collect();
        if records.is_empty() {
            return Err(Error::EmptySlice { start, end });
        }
        Ok(PriceSeries {
            symbol: self.symbol.clone(),
            records,
        })
    }

    /// Index of the first record after the leading part of a linear split.
    pub fn linear_split_point(n: usize, ratio: f64) -> Result<usize> {
        if n < 2 {
            return Err(Error::InsufficientData {
                what: "records for a linear split",
                needed: 2,
                got: n,
            });
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::argument(format!("split ratio must lie in (0,1), got {ratio}")));
        }
        Ok(((ratio * n as f64).floor() as usize).clamp(1, n - 1))
    }

    /// Splits into a leading and trailing part without reordering.
    pub fn split_linear(&self, ratio: f64) -> Result<(PriceSeries, PriceSeries)> {
        let cut = Self::linear_split_point(self.len(), ratio)?;
        let (head, tail) = self.records.split_at(cut);
        Ok((
            PriceSeries {
                symbol: self.symbol.clone(),
                records: head.to_vec(),
            },
            PriceSeries {
                symbol: self.symbol.clone(),
                records: tail.to_vec(),
            },
        ))
    }

    /// Writes the canonical CSV form: ISO dates, shortest round-trip decimals,
    /// empty cells for absent volume/market cap.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::io("writing csv", e.into());
        w.write_record(["Date", "Open", "High", "Low", "Close", "Volume", "MarketCap"])
            .map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.date.format("%Y-%m-%d").to_string(),
                r.open.to_string(),
                r.high.to_string(),
                r.low.to_string(),
                r.close.to_string(),
                opt(r.volume),
                opt(r.market_cap),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io("writing csv", e))?;
        Ok(())
    }
}

/// Column names for each attribute in an input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvSchema {
    pub date: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    pub volume: String,
    pub market_cap: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            date: "Date".into(),
            open: "Open".into(),
            high: "High".into(),
            low: "Low".into(),
            close: "Close".into(),
            volume: "Volume".into(),
            market_cap: "MarketCap".into(),
        }
    }
}

impl CsvSchema {
    /// Applies `key=Column` overrides, e.g. `close=Close**`.
    pub fn set(&mut self, key: &str, column: &str) -> Result<()> {
        let slot = match key.trim() {
            "date" => &mut self.date,
            "open" => &mut self.open,
            "high" => &mut self.high,
            "low" => &mut self.low,
            "close" => &mut self.close,
            "volume" => &mut self.volume,
            "market_cap" => &mut self.market_cap,
            other => return Err(Error::argument(format!("unknown schema key `{other}`"))),
        };
        *slot = column.trim().to_string();
        Ok(())
    }
}

/// Accepts `YYYY-MM-DD` or `DD.MM.YYYY`.
pub fn parse_day(s: &str) -> Result<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%d.%m.%Y"))
        .map_err(|_| Error::argument(format!("unparseable date `{s}`")))
}

fn parse_number(cell: &str, name: &str) -> std::result::Result<f64, String> {
    let cell = cell.trim();
    // Plain decimals only; no separators, symbols, or inf/nan spellings.
    let plain = !cell.is_empty()
        && cell
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    match cell.parse::<f64>() {
        Ok(v) if plain && v.is_finite() => Ok(v),
        _ => Err(format!("{name} is not a plain decimal: `{cell}`")),
    }
}

/// Parses a headed CSV into an ascending [`PriceSeries`]. Row numbers in
/// errors are 1-based file line numbers (the header is line 1).
pub fn parse_csv<R: Read>(source: R, schema: &CsvSchema, symbol: &str) -> Result<PriceSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| {
        find(name).ok_or_else(|| Error::Parse {
            row: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let date_col = required(&schema.date)?;
    let open_col = required(&schema.open)?;
    let high_col = required(&schema.high)?;
    let low_col = required(&schema.low)?;
    let close_col = required(&schema.close)?;
    let volume_col = find(&schema.volume);
    let cap_col = find(&schema.market_cap);

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let cell = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize, name: &str| {
            parse_number(cell(c), name).map_err(|message| Error::Parse { row, message })
        };
        let optional = |c: Option<usize>, name: &str| -> Result<Option<f64>> {
            match c {
                Some(c) if !cell(c).is_empty() => num(c, name).map(Some),
                _ => Ok(None),
            }
        };
        let date = parse_day(cell(date_col)).map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let record = OhlcvRecord {
            date,
            open: num(open_col, "open")?,
            high: num(high_col, "high")?,
            low: num(low_col, "low")?,
            close: num(close_col, "close")?,
            volume: optional(volume_col, "volume")?,
            market_cap: optional(cap_col, "market cap")?,
        };
        if record.low > record.high {
            return Err(Error::InconsistentCandle(date));
        }
        record
            .validate()
            .map_err(|message| Error::Parse { row, message })?;
        records.push(record);
    }
    PriceSeries::new(symbol, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Date,Open,High,Low,Close,Volume,MarketCap\n";

    fn day(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn parse(body: &str) -> Result<PriceSeries> {
        parse_csv(format!("{HEADER}{body}").as_bytes(), &CsvSchema::default(), "test")
    }

    fn january() -> PriceSeries {
        let body: String = (1..=10)
            .map(|d| format!("2019-01-{d:02},{p},{h},{l},{p},1,2\n", p = 100 + d, h = 120, l = 90))
            .collect();
        parse(&body).unwrap()
    }

    #[test]
    fn single_row() {
        let s = parse("2019-01-01,100.0,110.0,90.0,105.0,1000,50000\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.records()[0].close, 105.0);
        assert_eq!(s.records()[0].volume, Some(1000.0));
        assert_eq!(s.records()[0].market_cap, Some(50000.0));
    }

    #[test]
    fn duplicate_date_rejected() {
        let err = parse("2019-01-01,1,2,1,1,1,1\n01.01.2019,1,2,1,1,1,1\n").unwrap_err();
        assert!(matches!(err, Error::DuplicateDate(d) if d == day(2019, 1, 1)));
    }

    #[test]
    fn inconsistent_candle_rejected() {
        let err = parse("2019-01-03,100,90,110,100,1,1\n").unwrap_err();
        assert!(matches!(err, Error::InconsistentCandle(d) if d == day(2019, 1, 3)));
    }

    #[test]
    fn malformed_row_names_row_number() {
        let err = parse("2019-01-01,1,2,1,1,1,1\n2019-01-02,abc,2,1,1,1,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, .. }), "{err}");
        let err = parse("2019-13-45,1,2,1,1,1,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err}");
    }

    #[test]
    fn separators_and_symbols_rejected() {
        assert!(parse("2019-01-01,\"1,000\",2000,900,1000,1,1\n").is_err());
        assert!(parse("2019-01-01,$100,200,90,100,1,1\n").is_err());
        assert!(parse("2019-01-01,inf,200,90,100,1,1\n").is_err());
    }

    #[test]
    fn descending_input_resorted() {
        let s = parse("2019-01-03,1,2,1,3,1,1\n2019-01-02,1,2,1,2,1,1\n2019-01-01,1,2,1,1,1,1\n")
            .unwrap();
        assert_eq!(s.closes(), vec![1.0, 2.0, 3.0]);
        assert_eq!(s.first_date(), day(2019, 1, 1));
    }

    #[test]
    fn index_without_volume_columns() {
        let src = "Date,Open,High,Low,Close\n2019-01-01,1,2,1,1.5\n";
        let s = parse_csv(src.as_bytes(), &CsvSchema::default(), "cci30").unwrap();
        assert_eq!(s.records()[0].volume, None);
        assert!(!s.has_attribute(Attribute::Volume));
        assert!(s.values(Attribute::MarketCap).is_err());
    }

    #[test]
    fn remapped_schema() {
        let src = "day,o,h,l,c\n31.01.2019,1,2,1,1.5\n";
        let mut schema = CsvSchema::default();
        for (k, v) in [("date", "day"), ("open", "o"), ("high", "h"), ("low", "l"), ("close", "c")] {
            schema.set(k, v).unwrap();
        }
        let s = parse_csv(src.as_bytes(), &schema, "x").unwrap();
        assert_eq!(s.first_date(), day(2019, 1, 31));
    }

    #[test]
    fn gaps_reported() {
        let s = parse("2019-01-01,1,2,1,1,1,1\n2019-01-04,1,2,1,1,1,1\n").unwrap();
        assert_eq!(s.gaps(), vec![(day(2019, 1, 1), day(2019, 1, 4))]);
    }

    #[test]
    fn slicing() {
        let s = january();
        assert_eq!(s.slice_by_date(day(2019, 1, 3), day(2019, 1, 5)).unwrap().len(), 3);
        assert_eq!(s.slice_by_date(s.first_date(), s.last_date()).unwrap(), s);
        assert!(matches!(
            s.slice_by_date(day(2019, 2, 1), day(2019, 2, 2)),
            Err(Error::EmptySlice { .. })
        ));
        assert!(matches!(
            s.slice_by_date(day(2019, 1, 5), day(2019, 1, 3)),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn linear_split() {
        let s = january();
        let (a, b) = s.split_linear(0.6).unwrap();
        assert_eq!((a.len(), b.len()), (6, 4));
        let joined: Vec<_> = a.records().iter().chain(b.records()).cloned().collect();
        assert_eq!(joined, s.records());
        let one = s.slice_by_date(day(2019, 1, 1), day(2019, 1, 1)).unwrap();
        assert!(one.split_linear(0.5).is_err());
        assert!(s.split_linear(1.0).is_err());
    }
}
