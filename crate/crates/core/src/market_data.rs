//! Option-chain ingestion and normalization into training records.
//!
//! Raw end-of-day quotes are reduced to out-of-the-money contracts, puts are
//! mapped to in-the-money calls through put-call parity, and every surviving
//! contract is expressed on the scale-free inputs `(m, tau)` with the
//! transformed target `y* = e^{r tau} c / S_t`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::NaturalCubicSpline;

/// ACT/365 fixed.
pub const DAYS_PER_YEAR: f64 = 365.0;
/// Contracts with fewer days to expiry are discarded.
pub const MIN_TAU_DAYS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionType {
    Call,
    Put,
}

impl std::str::FromStr for OptionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "c" | "call" => Ok(OptionType::Call),
            "p" | "put" => Ok(OptionType::Put),
            other => Err(Error::InvalidInput(format!("unknown option type `{other}`"))),
        }
    }
}

/// One end-of-day market observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub quote_date: NaiveDate,
    pub expiry_date: NaiveDate,
    pub option_type: OptionType,
    pub strike: f64,
    pub bid: f64,
    pub ask: f64,
    pub underlying_close: f64,
    pub risk_free_rate: Option<f64>,
    pub dividend_yield: f64,
}

impl OptionQuote {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.strike,
            self.bid,
            self.ask,
            self.underlying_close,
            self.dividend_yield,
        ]
        .iter()
        .chain(self.risk_free_rate.iter())
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite field".into()));
        }
        if self.strike < 0.0 {
            return Err(Error::InvalidInput(format!("negative strike {}", self.strike)));
        }
        if self.bid < 0.0 {
            return Err(Error::InvalidInput(format!("negative bid {}", self.bid)));
        }
        if self.ask < self.bid {
            return Err(Error::InvalidInput(format!(
                "bid {} exceeds ask {}",
                self.bid, self.ask
            )));
        }
        if self.underlying_close <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "non-positive underlying {}",
                self.underlying_close
            )));
        }
        if self.expiry_date < self.quote_date {
            return Err(Error::InvalidInput(format!(
                "expiry {} before quote date {}",
                self.expiry_date, self.quote_date
            )));
        }
        Ok(())
    }

    pub fn tau_days(&self) -> u32 {
        (self.expiry_date - self.quote_date).num_days().max(0) as u32
    }
}

/// Bid-ask midpoint used as the closing-price proxy.
pub fn midpoint_price(q: &OptionQuote) -> f64 {
    0.5 * (q.bid + q.ask)
}

/// A call observation on the network's input scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub date: NaiveDate,
    pub tau_days: u32,
    pub tau_years: f64,
    pub strike: f64,
    pub spot: f64,
    pub rate: f64,
    pub moneyness: f64,
    pub price: f64,
    pub target: f64,
}

impl CallRecord {
    pub fn new(date: NaiveDate, tau_days: u32, strike: f64, spot: f64, price: f64, rate: f64) -> Self {
        let tau_years = tau_days as f64 / DAYS_PER_YEAR;
        Self {
            date,
            tau_days,
            tau_years,
            strike,
            spot,
            rate,
            moneyness: strike / spot,
            price,
            target: (rate * tau_years).exp() * price / spot,
        }
    }

    /// Dollar price implied by a model output `y` for this contract.
    pub fn price_from_output(&self, y: f64) -> f64 {
        (-self.rate * self.tau_years).exp() * self.spot * y
    }

    pub fn is_valid(&self) -> bool {
        self.moneyness > 0.0
            && self.moneyness.is_finite()
            && self.tau_days >= MIN_TAU_DAYS
            && self.price >= 0.0
            && self.price.is_finite()
            && self.target.is_finite()
    }
}

/// Risk-free term structure, interpolated by a natural cubic spline in days.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    spline: NaturalCubicSpline,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateLookup {
    pub rate: f64,
    /// Query fell outside the knot range and was clamped to the nearest boundary.
    pub clamped: bool,
}

impl RateCurve {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (x, y): (Vec<f64>, Vec<f64>) = knots.into_iter().unzip();
        Ok(Self {
            spline: NaturalCubicSpline::new(x, y)?,
        })
    }

    pub fn flat(rate: f64) -> Self {
        Self::new(vec![(0.0, rate), (3650.0, rate)]).expect("two finite knots")
    }

    pub fn knots(&self) -> Vec<(f64, f64)> {
        let (x, y) = self.spline.knots();
        x.iter().copied().zip(y.iter().copied()).collect()
    }

    pub fn interpolate(&self, tau_days: f64) -> RateLookup {
        let (lo, hi) = self.spline.domain();
        let clamped = tau_days < lo || tau_days > hi;
        RateLookup {
            rate: self.spline.eval(tau_days.clamp(lo, hi)),
            clamped,
        }
    }

    /// Reads a `days,rate` CSV with a header row.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let mut knots = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| Error::csv(path, e))?;
            let days: f64 = parse_field(&row, 0, "days")?;
            let rate: f64 = parse_field(&row, 1, "rate")?;
            knots.push((days, rate));
        }
        Self::new(knots)
    }
}

/// Interpolated rate at `tau_days`; out-of-range queries clamp and are flagged.
pub fn interpolate_rate(curve: &RateCurve, tau_days: u32) -> RateLookup {
    let lookup = curve.interpolate(tau_days as f64);
    if lookup.clamped {
        warn!("rate query at {tau_days}d outside curve range; clamped");
    }
    lookup
}

/// Call price from a put through put-call parity, or `None` when the implied
/// call is negative (stale or inconsistent quote).
pub fn put_to_call(put: f64, spot: f64, strike: f64, rate: f64, div_yield: f64, tau: f64) -> Option<f64> {
    let c = put + spot * (-div_yield * tau).exp() - strike * (-rate * tau).exp();
    (c >= 0.0).then_some(c)
}

/// Inverse of [`put_to_call`].
pub fn call_to_put(call: f64, spot: f64, strike: f64, rate: f64, div_yield: f64, tau: f64) -> f64 {
    call - spot * (-div_yield * tau).exp() + strike * (-rate * tau).exp()
}

/// Column names for the option-chain CSV.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub quote_date: String,
    pub expiry_date: String,
    pub option_type: String,
    pub strike: String,
    pub bid: String,
    pub ask: String,
    pub underlying_close: String,
    pub rate: String,
    pub dividend_yield: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            quote_date: "quote_date".into(),
            expiry_date: "expiry_date".into(),
            option_type: "type".into(),
            strike: "strike".into(),
            bid: "bid".into(),
            ask: "ask".into(),
            underlying_close: "underlying_close".into(),
            rate: "rate".into(),
            dividend_yield: "dividend_yield".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowDiagnostic {
    /// 1-based data row number (the header is row 0).
    pub row: usize,
    pub reason: String,
}

impl std::fmt::Display for RowDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "row {}: {}", self.row, self.reason)
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub columns: ColumnMap,
    /// Abort when more than this fraction of rows is rejected.
    pub max_rejected_fraction: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            columns: ColumnMap::default(),
            max_rejected_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub quotes: Vec<OptionQuote>,
    pub rejected: Vec<RowDiagnostic>,
}

/// Reads an option chain, keeping file order and reporting bad rows.
pub fn ingest_chain(path: &Path, opts: &IngestOptions) -> Result<IngestReport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, path, opts)
}

pub fn ingest_reader<R: Read>(reader: R, path: &Path, opts: &IngestOptions) -> Result<IngestReport> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(Error::csv(path, e)),
    };
    if headers.is_empty() {
        warn!("{}: empty option chain", path.display());
        return Ok(IngestReport::default());
    }
    let cols = &opts.columns;
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let mut idx = BTreeMap::new();
    for (key, name) in [
        ("quote_date", &cols.quote_date),
        ("expiry_date", &cols.expiry_date),
        ("type", &cols.option_type),
        ("strike", &cols.strike),
        ("bid", &cols.bid),
        ("ask", &cols.ask),
        ("underlying_close", &cols.underlying_close),
    ] {
        let i = find(name)
            .ok_or_else(|| Error::InvalidInput(format!("{}: missing required column `{name}`", path.display())))?;
        idx.insert(key, i);
    }
    let rate_col = find(&cols.rate);
    let div_col = find(&cols.dividend_yield);

    let mut report = IngestReport::default();
    let mut total = 0usize;
    for (i, row) in rdr.records().enumerate() {
        total += 1;
        let row_no = i + 1;
        let parsed = row
            .map_err(|e| e.to_string())
            .and_then(|row| parse_quote(&row, &idx, rate_col, div_col).map_err(|e| e.to_string()));
        match parsed {
            Ok(q) => report.quotes.push(q),
            Err(reason) => {
                warn!("{}: row {row_no} rejected: {reason}", path.display());
                report.rejected.push(RowDiagnostic { row: row_no, reason });
            }
        }
    }
    if total == 0 {
        warn!("{}: option chain has no data rows", path.display());
    }
    let limit = (opts.max_rejected_fraction * total as f64).floor() as usize;
    if report.rejected.len() > limit {
        return Err(Error::TooManyBadRows {
            path: path.to_path_buf(),
            rejected: report.rejected.len(),
            total,
            limit,
            first: report.rejected[0].to_string(),
        });
    }
    Ok(report)
}

fn parse_quote(
    row: &csv::StringRecord,
    idx: &BTreeMap<&str, usize>,
    rate_col: Option<usize>,
    div_col: Option<usize>,
) -> Result<OptionQuote> {
    let optional = |col: Option<usize>, name: &str| -> Result<Option<f64>> {
        match col.and_then(|c| row.get(c)).filter(|s| !s.is_empty()) {
            None => Ok(None),
            Some(s) => s
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::InvalidInput(format!("cannot parse {name} `{s}`"))),
        }
    };
    let q = OptionQuote {
        quote_date: parse_date(required(row, idx["quote_date"], "quote_date")?)?,
        expiry_date: parse_date(required(row, idx["expiry_date"], "expiry_date")?)?,
        option_type: required(row, idx["type"], "type")?.parse()?,
        strike: parse_field(row, idx["strike"], "strike")?,
        bid: parse_field(row, idx["bid"], "bid")?,
        ask: parse_field(row, idx["ask"], "ask")?,
        underlying_close: parse_field(row, idx["underlying_close"], "underlying_close")?,
        risk_free_rate: optional(rate_col, "rate")?,
        dividend_yield: optional(div_col, "dividend_yield")?.unwrap_or(0.0),
    };
    q.validate()?;
    Ok(q)
}

fn required<'a>(row: &'a csv::StringRecord, i: usize, name: &str) -> Result<&'a str> {
    match row.get(i) {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(Error::InvalidInput(format!("missing {name}"))),
    }
}

fn parse_field(row: &csv::StringRecord, i: usize, name: &str) -> Result<f64> {
    let s = required(row, i, name)?;
    s.parse::<f64>()
        .map_err(|_| Error::InvalidInput(format!("cannot parse {name} `{s}`")))
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y%m%d"))
        .map_err(|_| Error::InvalidInput(format!("cannot parse date `{s}`")))
}

/// Counts of quotes removed by each filtering stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FilterStats {
    pub itm_calls: usize,
    pub itm_puts: usize,
    pub short_maturity: usize,
    pub parity_violations: usize,
    pub missing_rate: usize,
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub records: Vec<CallRecord>,
    pub stats: FilterStats,
}

/// Filters one quote date's chain and normalizes it to call records.
///
/// When a rate curve is supplied it takes precedence over any per-row vendor
/// rate; without a curve each quote must carry its own rate.
pub fn filter_and_normalize(quotes: &[OptionQuote], curve: Option<&RateCurve>) -> Result<Normalized> {
    if let Some(first) = quotes.first() {
        if quotes.iter().any(|q| q.quote_date != first.quote_date) {
            return Err(Error::InvalidInput(
                "filter_and_normalize expects quotes from a single date".into(),
            ));
        }
    }
    if curve.is_some() && quotes.iter().any(|q| q.risk_free_rate.is_some()) {
        info!("rate curve supplied; vendor rate column ignored in favour of interpolated rates");
    }
    let mut stats = FilterStats::default();
    let mut records = Vec::with_capacity(quotes.len());
    for q in quotes {
        let spot = q.underlying_close;
        match q.option_type {
            OptionType::Call if q.strike < spot => {
                stats.itm_calls += 1;
                continue;
            }
            OptionType::Put if q.strike > spot => {
                stats.itm_puts += 1;
                continue;
            }
            _ => {}
        }
        let tau_days = q.tau_days();
        if tau_days < MIN_TAU_DAYS {
            stats.short_maturity += 1;
            continue;
        }
        let rate = match (curve, q.risk_free_rate) {
            (Some(c), _) => interpolate_rate(c, tau_days).rate,
            (None, Some(r)) => r,
            (None, None) => {
                stats.missing_rate += 1;
                continue;
            }
        };
        let tau = tau_days as f64 / DAYS_PER_YEAR;
        let mid = midpoint_price(q);
        let price = match q.option_type {
            OptionType::Call => mid,
            OptionType::Put => match put_to_call(mid, spot, q.strike, rate, q.dividend_yield, tau) {
                Some(c) => c,
                None => {
                    stats.parity_violations += 1;
                    continue;
                }
            },
        };
        let rec = CallRecord::new(q.quote_date, tau_days, q.strike, spot, price, rate);
        if rec.is_valid() {
            records.push(rec);
        }
    }
    if records.is_empty() {
        return Err(Error::NoUsableQuotes);
    }
    Ok(Normalized { records, stats })
}

/// Keeps only records satisfying the emitted-record invariants.
pub fn retain_valid(records: &[CallRecord]) -> Vec<CallRecord> {
    records.iter().filter(|r| r.is_valid()).cloned().collect()
}

/// Groups quotes by date and normalizes each day independently; days that
/// yield no usable quotes are skipped with a warning.
pub fn normalize_by_date(quotes: &[OptionQuote], curve: Option<&RateCurve>) -> Result<Vec<CallRecord>> {
    let mut by_date: BTreeMap<NaiveDate, Vec<OptionQuote>> = BTreeMap::new();
    for q in quotes {
        by_date.entry(q.quote_date).or_default().push(q.clone());
    }
    let mut out = Vec::new();
    for (date, day) in by_date {
        match filter_and_normalize(&day, curve) {
            Ok(n) => out.extend(n.records),
            Err(Error::NoUsableQuotes) => warn!("{date}: no usable quotes"),
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::NoUsableQuotes);
    }
    Ok(out)
}

pub const RECORD_COLUMNS: [&str; 9] = ["date", "tau_days", "tau_years", "K", "S_t", "r", "m", "c", "y_target"];

pub fn write_records<W: Write>(out: W, records: &[CallRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::csv("<records>", e);
    w.write_record(RECORD_COLUMNS).map_err(map)?;
    for r in records {
        w.write_record([
            r.date.to_string(),
            r.tau_days.to_string(),
            r.tau_years.to_string(),
            r.strike.to_string(),
            r.spot.to_string(),
            r.rate.to_string(),
            r.moneyness.to_string(),
            r.price.to_string(),
            r.target.to_string(),
        ])
        .map_err(map)?;
    }
    w.flush().map_err(|e| Error::io("<records>", e))?;
    Ok(())
}

/// Reads records written by [`write_records`]; derived columns are recomputed
/// from `(date, tau_days, K, S_t, c, r)`.
pub fn read_records(path: &Path) -> Result<Vec<CallRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("{}: missing column `{name}`", path.display())))
    };
    let (di, ti, ki, si, ri, ci) = (
        col("date")?,
        col("tau_days")?,
        col("K")?,
        col("S_t")?,
        col("r")?,
        col("c")?,
    );
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let date = parse_date(required(&row, di, "date")?)?;
        let tau_days: u32 = required(&row, ti, "tau_days")?
            .parse()
            .map_err(|_| Error::InvalidInput("cannot parse tau_days".into()))?;
        out.push(CallRecord::new(
            date,
            tau_days,
            parse_field(&row, ki, "K")?,
            parse_field(&row, si, "S_t")?,
            parse_field(&row, ci, "c")?,
            parse_field(&row, ri, "r")?,
        ));
    }
    Ok(out)
}

/// Splits records into per-date groups in ascending date order.
pub fn group_by_date(records: &[CallRecord]) -> Vec<(NaiveDate, Vec<CallRecord>)> {
    let mut by_date: BTreeMap<NaiveDate, Vec<CallRecord>> = BTreeMap::new();
    for r in records {
        by_date.entry(r.date).or_default().push(r.clone());
    }
    by_date.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn quote(kind: OptionType, strike: f64, bid: f64, ask: f64, days: i64) -> OptionQuote {
        let qd = d("2008-05-15");
        OptionQuote {
            quote_date: qd,
            expiry_date: qd + chrono::Duration::days(days),
            option_type: kind,
            strike,
            bid,
            ask,
            underlying_close: 100.0,
            risk_free_rate: Some(0.0),
            dividend_yield: 0.0,
        }
    }

    #[test]
    fn midpoints() {
        let mut q = quote(OptionType::Call, 100.0, 9.0, 11.0, 30);
        assert_eq!(midpoint_price(&q), 10.0);
        q.bid = 5.0;
        q.ask = 5.0;
        assert_eq!(midpoint_price(&q), 5.0);
        q.bid = 0.0;
        q.ask = 0.5;
        assert_eq!(midpoint_price(&q), 0.25);
    }

    #[test]
    fn parity_examples() {
        assert!((put_to_call(10.0, 100.0, 100.0, 0.0, 0.0, 1.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((put_to_call(0.0, 100.0, 80.0, 0.0, 0.0, 0.5).unwrap() - 20.0).abs() < 1e-12);
        let c = put_to_call(5.0, 100.0, 100.0, 0.05, 0.0, 1.0).unwrap();
        assert!((c - 9.877057549928594).abs() < 1e-12, "{c}");
        assert_eq!(put_to_call(0.0, 100.0, 120.0, 0.0, 0.0, 1.0), None);
    }

    #[test]
    fn tau_normalization() {
        let r = CallRecord::new(d("2008-05-15"), 7, 100.0, 100.0, 1.0, 0.0);
        assert_eq!(format!("{:.6}", r.tau_years), "0.019178");
    }

    #[test]
    fn filter_rules() {
        let quotes = vec![
            quote(OptionType::Call, 90.0, 10.0, 11.0, 30), // ITM call
            quote(OptionType::Put, 90.0, 0.5, 0.7, 30),    // OTM put -> ITM call
            quote(OptionType::Call, 110.0, 0.4, 0.6, 30),  // OTM call
            quote(OptionType::Call, 110.0, 0.01, 0.02, 1), // 1-day
            quote(OptionType::Put, 110.0, 10.0, 11.0, 30), // ITM put
        ];
        let out = filter_and_normalize(&quotes, None).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.stats.itm_calls, 1);
        assert_eq!(out.stats.itm_puts, 1);
        assert_eq!(out.stats.short_maturity, 1);
        let itm = &out.records[0];
        assert_eq!(itm.strike, 90.0);
        assert!((itm.price - 10.6).abs() < 1e-12);
        assert!(out.records.iter().all(CallRecord::is_valid));
        assert_eq!(retain_valid(&out.records), out.records);
    }

    #[test]
    fn filter_empty_is_error() {
        let quotes = vec![quote(OptionType::Call, 90.0, 10.0, 11.0, 30)];
        assert!(matches!(
            filter_and_normalize(&quotes, None),
            Err(Error::NoUsableQuotes)
        ));
    }

    #[test]
    fn curve_rate_preferred_over_vendor() {
        let mut q = quote(OptionType::Call, 110.0, 0.4, 0.6, 30);
        q.risk_free_rate = Some(0.5);
        let curve = RateCurve::flat(0.02);
        let out = filter_and_normalize(&[q], Some(&curve)).unwrap();
        assert!((out.records[0].rate - 0.02).abs() < 1e-15);
    }

    #[test]
    fn rate_curve_knots_and_clamping() {
        let curve = RateCurve::new(vec![(30.0, 0.02), (90.0, 0.025), (10.0, 0.015)]).unwrap();
        assert!((interpolate_rate(&curve, 30).rate - 0.02).abs() < 1e-15);
        let low = interpolate_rate(&curve, 2);
        assert!(low.clamped);
        assert!((low.rate - 0.015).abs() < 1e-15);
        let two = RateCurve::new(vec![(0.0, 0.01), (100.0, 0.03)]).unwrap();
        assert!((interpolate_rate(&two, 50).rate - 0.02).abs() < 1e-15);
    }
}
