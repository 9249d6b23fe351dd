//! Price panels, simple returns and in-sample / out-of-sample splits.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A complete panel of positive adjusted closing prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    /// Row-major, one row per date.
    prices: Vec<Vec<f64>>,
    /// Rows removed while loading because a cell was missing or non-positive.
    pub dropped_rows: usize,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, prices: Vec<Vec<f64>>) -> Result<Self> {
        if dates.len() != prices.len() {
            return Err(Error::arg(format!(
                "{} dates for {} price rows",
                dates.len(),
                prices.len()
            )));
        }
        if tickers.is_empty() {
            return Err(Error::arg("price series needs at least one ticker"));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::arg("dates must be strictly increasing"));
        }
        for row in &prices {
            if row.len() != tickers.len() {
                return Err(Error::arg("price row length differs from ticker count"));
            }
            if row.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                return Err(Error::arg("prices must be finite and positive"));
            }
        }
        Ok(PriceSeries {
            dates,
            tickers,
            prices,
            dropped_rows: 0,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }
}

/// N×n matrix of per-period simple returns; each row is one sample of the
/// empirical measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnsMatrix {
    data: Vec<f64>,
    n_obs: usize,
    n_assets: usize,
    tickers: Vec<String>,
    /// Either empty (synthetic data) or one date per row.
    dates: Vec<NaiveDate>,
}

impl ReturnsMatrix {
    /// Builds a matrix from rows with generated tickers and no dates.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map(Vec::len).unwrap_or(0);
        let tickers = (1..=n).map(|j| format!("A{j}")).collect();
        Self::with_labels(rows, tickers, Vec::new())
    }

    pub fn with_labels(rows: &[Vec<f64>], tickers: Vec<String>, dates: Vec<NaiveDate>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InsufficientData("return matrix has no rows".into()));
        }
        let n = tickers.len();
        if n == 0 {
            return Err(Error::arg("return matrix needs at least one asset"));
        }
        if !dates.is_empty() && dates.len() != rows.len() {
            return Err(Error::arg("date count differs from row count"));
        }
        let mut data = Vec::with_capacity(rows.len() * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::arg(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            if let Some(r) = row.iter().find(|r| !(r.is_finite() && **r > -1.0)) {
                return Err(Error::arg(format!("row {i}: return {r} is not > -1")));
            }
            data.extend_from_slice(row);
        }
        Ok(ReturnsMatrix {
            data,
            n_obs: rows.len(),
            n_assets: n,
            tickers,
            dates,
        })
    }

    /// Number of observations N.
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    /// Number of assets n.
    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_assets..(i + 1) * self.n_assets]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + Clone + '_ {
        self.data.chunks_exact(self.n_assets)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// Sample mean of every column.
    pub fn column_means(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.n_assets];
        for row in self.rows() {
            for (m, r) in mu.iter_mut().zip(row) {
                *m += r;
            }
        }
        let n = self.n_obs as f64;
        mu.iter_mut().for_each(|m| *m /= n);
        mu
    }

    /// Rows `range` as a new matrix, dates carried along.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.n_obs {
            return Err(Error::arg(format!(
                "row range {range:?} out of bounds for {} rows",
                self.n_obs
            )));
        }
        let dates = if self.dates.is_empty() {
            Vec::new()
        } else {
            self.dates[range.clone()].to_vec()
        };
        Ok(ReturnsMatrix {
            data: self.data[range.start * self.n_assets..range.end * self.n_assets].to_vec(),
            n_obs: range.len(),
            n_assets: self.n_assets,
            tickers: self.tickers.clone(),
            dates,
        })
    }

    /// The same matrix with every row repeated `times` times (row order kept
    /// block-wise). The empirical measure is unchanged.
    pub fn replicate(&self, times: usize) -> Self {
        let mut data = Vec::with_capacity(self.data.len() * times);
        for _ in 0..times {
            data.extend_from_slice(&self.data);
        }
        ReturnsMatrix {
            data,
            n_obs: self.n_obs * times,
            n_assets: self.n_assets,
            tickers: self.tickers.clone(),
            dates: Vec::new(),
        }
    }

    /// Writes `date,T1,...,Tn` CSV with returns in place of prices.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.tickers.iter().cloned());
        w.write_record(&header)?;
        for (i, row) in self.rows().enumerate() {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(self.dates.get(i).map(|d| d.to_string()).unwrap_or_else(|| i.to_string()));
            rec.extend(row.iter().map(|r| format!("{r:.17e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") || cell.eq_ignore_ascii_case("null") {
        return None;
    }
    cell.parse().ok().or(Some(f64::NAN))
}

/// Reads a `date,T1,...,Tn` price panel. Rows with a missing or non-positive
/// price are dropped (complete-case) and counted in `dropped_rows`.
pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
    read_prices(file, path)
}

pub(crate) fn read_prices<R: Read>(input: R, path: &Path) -> Result<PriceSeries> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(parse_err(1, e.to_string())),
    };
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(Error::InsufficientData(format!("{}: empty file", path.display())));
    }
    if headers.len() < 2 || !headers[0].trim().eq_ignore_ascii_case("date") {
        return Err(parse_err(1, "header must be `date,<ticker1>,...`".into()));
    }
    let tickers: Vec<String> = headers.iter().skip(1).map(|t| t.trim().to_string()).collect();

    let mut dates = Vec::new();
    let mut prices = Vec::new();
    let mut dropped = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != tickers.len() + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", tickers.len() + 1, rec.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(rec[0].trim(), "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date `{}`: {e}", &rec[0])))?;
        let mut row = Vec::with_capacity(tickers.len());
        let mut usable = true;
        for cell in rec.iter().skip(1) {
            match parse_cell(cell) {
                Some(p) if p.is_nan() => {
                    return Err(parse_err(line, format!("bad price `{cell}`")));
                }
                Some(p) if p > 0.0 && p.is_finite() => row.push(p),
                _ => usable = false,
            }
        }
        if !usable {
            dropped += 1;
            continue;
        }
        if let Some(last) = dates.last() {
            if *last >= date {
                return Err(parse_err(line, format!("date {date} is not after {last}")));
            }
        }
        dates.push(date);
        prices.push(row);
    }
    if prices.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{}: {} usable rows, need at least 3",
            path.display(),
            prices.len()
        )));
    }
    let mut series = PriceSeries::new(dates, tickers, prices)?;
    series.dropped_rows = dropped;
    Ok(series)
}

/// Writes a price panel in the same CSV shape `load_prices` reads.
pub fn write_prices<W: Write>(p: &PriceSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend(p.tickers.iter().cloned());
    w.write_record(&header)?;
    for (d, row) in p.dates.iter().zip(&p.prices) {
        let mut rec = vec![d.to_string()];
        rec.extend(row.iter().map(|x| format!("{x:.10}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Simple returns `p[t+1]/p[t] - 1`, dated at the later price.
pub fn compute_returns(p: &PriceSeries) -> Result<ReturnsMatrix> {
    if p.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} price rows, need at least 2",
            p.len()
        )));
    }
    let rows: Vec<Vec<f64>> = p
        .prices
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(next, prev)| next / prev - 1.0).collect())
        .collect();
    ReturnsMatrix::with_labels(&rows, p.tickers.clone(), p.dates[1..].to_vec())
}

/// First `in_sample_len` rows and the remainder.
pub fn split(r: &ReturnsMatrix, in_sample_len: usize) -> Result<(ReturnsMatrix, ReturnsMatrix)> {
    if in_sample_len == 0 || in_sample_len >= r.n_obs() {
        return Err(Error::arg(format!(
            "in-sample length {in_sample_len} must lie in 1..{}",
            r.n_obs()
        )));
    }
    Ok((r.slice_rows(0..in_sample_len)?, r.slice_rows(in_sample_len..r.n_obs())?))
}
