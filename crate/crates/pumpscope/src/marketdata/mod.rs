//! OHLCV market data: domain types, the pluggable exchange client, listing-date
//! discovery, paginated multi-pass collection, and the candle store.

pub mod client;
pub mod fetch;
pub mod listing;
pub mod replay;
pub mod rest;
pub mod store;

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{ClientError, ExchangeClient, RateLimiter, RequestClock, VirtualClock, WallClock};
pub use fetch::{fetch_paginated, fetch_tiered, FetchPlan, TierFailure, TieredMarketData};
pub use listing::{find_listing_date, Confidence, ListingDate, ListingError};
pub use replay::{ReplayBook, ReplayClient, ReplayError, ReplayManifest};
pub use rest::RestClient;
pub use store::{CandleStore, GapRecord, PutStats, StoreError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid pair `{0}`: expected BASE/QUOTE")]
    InvalidPair(String),
    #[error("unknown granularity `{0}`: expected 1m, 1h or 1d")]
    InvalidGranularity(String),
    #[error("candle at {open_time} violates OHLC bounds: {detail}")]
    InvalidCandle { open_time: DateTime<Utc>, detail: String },
    #[error("series {pair} {granularity}: {detail}")]
    InvalidSeries { pair: Pair, granularity: Granularity, detail: String },
}

/// A trading pair, e.g. `ARKER/BTC`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Pair {
    pub base: String,
    pub quote: String,
}

impl Pair {
    pub fn new(base: impl Into<String>, quote: impl Into<String>) -> Self {
        Self { base: base.into().to_uppercase(), quote: quote.into().to_uppercase() }
    }

    /// Filesystem-safe form used in store filenames: `BASE-QUOTE`.
    pub fn file_stem(&self) -> String {
        format!("{}-{}", self.base, self.quote)
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.base, self.quote)
    }
}

impl FromStr for Pair {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (base, quote) = s
            .split_once('/')
            .or_else(|| s.split_once('-'))
            .ok_or_else(|| DataError::InvalidPair(s.to_string()))?;
        if base.is_empty() || quote.is_empty() {
            return Err(DataError::InvalidPair(s.to_string()));
        }
        Ok(Pair::new(base, quote))
    }
}

impl TryFrom<String> for Pair {
    type Error = DataError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Pair> for String {
    fn from(p: Pair) -> String {
        p.to_string()
    }
}

/// Bar granularity. The three tiers collected per pump event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Granularity {
    Minute,
    Hour,
    Day,
}

impl Granularity {
    pub const ALL: [Granularity; 3] = [Granularity::Minute, Granularity::Hour, Granularity::Day];

    pub fn as_str(&self) -> &'static str {
        match self {
            Granularity::Minute => "1m",
            Granularity::Hour => "1h",
            Granularity::Day => "1d",
        }
    }

    pub fn millis(&self) -> i64 {
        match self {
            Granularity::Minute => 60_000,
            Granularity::Hour => 3_600_000,
            Granularity::Day => 86_400_000,
        }
    }

    pub fn duration(&self) -> chrono::Duration {
        chrono::Duration::milliseconds(self.millis())
    }

    /// Floors an instant to the enclosing bar boundary.
    pub fn floor(&self, t: DateTime<Utc>) -> DateTime<Utc> {
        let ms = t.timestamp_millis();
        let step = self.millis();
        ms_to_utc(ms.div_euclid(step) * step)
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1m" => Ok(Granularity::Minute),
            "1h" => Ok(Granularity::Hour),
            "1d" => Ok(Granularity::Day),
            other => Err(DataError::InvalidGranularity(other.to_string())),
        }
    }
}

impl TryFrom<String> for Granularity {
    type Error = DataError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Granularity> for String {
    fn from(g: Granularity) -> String {
        g.as_str().to_string()
    }
}

pub fn ms_to_utc(ms: i64) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(ms).single().expect("timestamp in range")
}

pub fn day_start(date: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight"))
}

/// One OHLCV bar. Prices and volume are exact decimals, parsed and emitted as
/// decimal strings; binary floating point enters only in analytics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candle {
    pub open_time: DateTime<Utc>,
    pub open: Decimal,
    pub high: Decimal,
    pub low: Decimal,
    pub close: Decimal,
    pub volume: Decimal,
}

impl Candle {
    pub fn validate(&self) -> Result<(), DataError> {
        let err = |detail: String| DataError::InvalidCandle { open_time: self.open_time, detail };
        if self.open.is_sign_negative()
            || self.high.is_sign_negative()
            || self.low.is_sign_negative()
            || self.close.is_sign_negative()
        {
            return Err(err("negative price".into()));
        }
        if self.volume.is_sign_negative() {
            return Err(err(format!("negative volume {}", self.volume)));
        }
        if self.low > self.open.min(self.close) {
            return Err(err(format!("low {} above min(open, close)", self.low)));
        }
        if self.high < self.open.max(self.close) {
            return Err(err(format!("high {} below max(open, close)", self.high)));
        }
        Ok(())
    }
}

/// A time-ordered series of bars for one (exchange, pair, granularity).
///
/// Bars are aligned to granularity boundaries, so consecutive spacing is
/// always a whole number of bars; missing bars are gaps, never filled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OhlcvSeries {
    pub exchange: String,
    pub pair: Pair,
    pub granularity: Granularity,
    candles: Vec<Candle>,
}

impl OhlcvSeries {
    pub fn new(
        exchange: impl Into<String>,
        pair: Pair,
        granularity: Granularity,
        candles: Vec<Candle>,
    ) -> Result<Self, DataError> {
        let series = Self { exchange: exchange.into(), pair, granularity, candles };
        series.check()?;
        Ok(series)
    }

    pub fn empty(exchange: impl Into<String>, pair: Pair, granularity: Granularity) -> Self {
        Self { exchange: exchange.into(), pair, granularity, candles: Vec::new() }
    }

    fn check(&self) -> Result<(), DataError> {
        let step = self.granularity.millis();
        let mut prev: Option<i64> = None;
        for c in &self.candles {
            c.validate()?;
            let ms = c.open_time.timestamp_millis();
            if ms % step != 0 {
                return Err(self.series_err(format!("bar at {} not aligned to {}", c.open_time, self.granularity)));
            }
            if let Some(p) = prev {
                if ms <= p {
                    return Err(self.series_err(format!("open_time not strictly increasing at {}", c.open_time)));
                }
            }
            prev = Some(ms);
        }
        Ok(())
    }

    fn series_err(&self, detail: String) -> DataError {
        DataError::InvalidSeries { pair: self.pair.clone(), granularity: self.granularity, detail }
    }

    pub fn candles(&self) -> &[Candle] {
        &self.candles
    }

    pub fn len(&self) -> usize {
        self.candles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candles.is_empty()
    }

    pub fn first_time(&self) -> Option<DateTime<Utc>> {
        self.candles.first().map(|c| c.open_time)
    }

    pub fn last_time(&self) -> Option<DateTime<Utc>> {
        self.candles.last().map(|c| c.open_time)
    }

    /// Bars with `start <= open_time < end`.
    pub fn slice(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> &[Candle] {
        let lo = self.candles.partition_point(|c| c.open_time < start);
        let hi = self.candles.partition_point(|c| c.open_time < end);
        &self.candles[lo..hi]
    }

    pub fn at(&self, open_time: DateTime<Utc>) -> Option<&Candle> {
        let idx = self.candles.partition_point(|c| c.open_time < open_time);
        self.candles.get(idx).filter(|c| c.open_time == open_time)
    }

    /// Missing bar ranges within `[start, end)`, as half-open ms intervals.
    pub fn gaps_within(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> Vec<(i64, i64)> {
        let step = self.granularity.millis();
        let start_ms = self.granularity.floor(start).timestamp_millis();
        let end_ms = end.timestamp_millis();
        let mut gaps = Vec::new();
        let mut cursor = start_ms;
        for c in self.slice(self.granularity.floor(start), end) {
            let ms = c.open_time.timestamp_millis();
            if ms > cursor {
                gaps.push((cursor, ms));
            }
            cursor = ms + step;
        }
        if cursor < end_ms {
            gaps.push((cursor, end_ms));
        }
        gaps
    }
}
