//! Listing-date discovery by binary search over daily probes.
//!
//! A probe asks whether a daily candle exists for exactly one calendar day:
//! nonempty means the pair was listed on or before that day, empty means
//! after. Probes are cached, so the whole search — bisection plus the
//! confirming probes at the result and the two days before it — issues at
//! most ⌈log2(days in range)⌉ + 2 requests.

use std::collections::HashMap;

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use super::client::{ClientError, ExchangeClient, RateLimiter};
use super::{day_start, Granularity, Pair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    /// Data at `date`, none at `date − 1` or `date − 2`.
    Exact,
    /// The confirming probes found data just before `date`; the true listing
    /// day is within one day of the reported one.
    Bounded,
}

impl Confidence {
    pub fn as_str(&self) -> &'static str {
        match self {
            Confidence::Exact => "exact",
            Confidence::Bounded => "bounded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ListingDate {
    pub exchange: String,
    pub pair: Pair,
    pub date: NaiveDate,
    pub confidence: Confidence,
    /// Requests actually issued (cache hits excluded).
    pub probes: u32,
}

#[derive(Debug, Error)]
pub enum ListingError {
    #[error("{exchange} {pair}: no daily data through {ceiling}; pair never listed in range")]
    NeverListed { exchange: String, pair: Pair, ceiling: NaiveDate },
    #[error("{exchange} {pair}: probe failed with bracket [{floor}, {ceiling}]: {source}")]
    Probe {
        exchange: String,
        pair: Pair,
        floor: NaiveDate,
        ceiling: NaiveDate,
        source: ClientError,
    },
    #[error("invalid search range [{floor}, {ceiling}]: floor must precede ceiling")]
    InvalidRange { floor: NaiveDate, ceiling: NaiveDate },
}

struct Prober<'a> {
    client: &'a dyn ExchangeClient,
    limiter: &'a RateLimiter,
    pair: &'a Pair,
    cache: HashMap<NaiveDate, bool>,
    issued: u32,
}

impl Prober<'_> {
    /// Does a daily candle exist for exactly this day?
    fn probe(&mut self, day: NaiveDate) -> Result<bool, ClientError> {
        if let Some(&hit) = self.cache.get(&day) {
            return Ok(hit);
        }
        self.issued += 1;
        let batch = self.limiter.fetch(self.client, self.pair, Granularity::Day, day_start(day), 1)?;
        let has_bar = batch.first().map(|c| c.open_time == day_start(day)).unwrap_or(false);
        self.cache.insert(day, has_bar);
        Ok(has_bar)
    }
}

/// Finds the earliest day with daily data in `[floor, ceiling]`.
///
/// Bracket update: nonempty probe pulls the ceiling down to the midpoint,
/// empty pushes the floor past it. The result is then confirmed: data on the
/// result day, none on the one or two days before (else confidence drops to
/// bounded — the data has a hole right at the boundary).
pub fn find_listing_date(
    client: &dyn ExchangeClient,
    limiter: &RateLimiter,
    pair: &Pair,
    floor: NaiveDate,
    ceiling: NaiveDate,
) -> Result<ListingDate, ListingError> {
    if floor >= ceiling {
        return Err(ListingError::InvalidRange { floor, ceiling });
    }
    let mut prober = Prober { client, limiter, pair, cache: HashMap::new(), issued: 0 };
    let mut lo = floor;
    let mut hi = ceiling;
    let probe_err = |p: &Prober, lo: NaiveDate, hi: NaiveDate, source: ClientError| {
        ListingError::Probe {
            exchange: p.client.exchange().to_string(),
            pair: p.pair.clone(),
            floor: lo,
            ceiling: hi,
            source,
        }
    };
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match prober.probe(mid) {
            Ok(true) => hi = mid,
            Ok(false) => lo = mid + chrono::Days::new(1),
            Err(source) => return Err(probe_err(&prober, lo, hi, source)),
        }
    }
    let date = lo;
    match prober.probe(date) {
        Ok(true) => {}
        Ok(false) => {
            return Err(ListingError::NeverListed {
                exchange: client.exchange().to_string(),
                pair: pair.clone(),
                ceiling,
            })
        }
        Err(source) => return Err(probe_err(&prober, lo, hi, source)),
    }
    let mut confidence = Confidence::Exact;
    for back in 1..=2u64 {
        let day = date - chrono::Days::new(back);
        match prober.probe(day) {
            Ok(false) => {}
            Ok(true) => {
                confidence = Confidence::Bounded;
                break;
            }
            Err(source) => return Err(probe_err(&prober, lo, hi, source)),
        }
    }
    Ok(ListingDate {
        exchange: client.exchange().to_string(),
        pair: pair.clone(),
        date,
        confidence,
        probes: prober.issued,
    })
}

/// Probe budget for a search over `[floor, ceiling]`: ⌈log2(days)⌉ + 2.
pub fn probe_budget(floor: NaiveDate, ceiling: NaiveDate) -> u32 {
    let days = (ceiling - floor).num_days() + 1;
    (days.max(1) as f64).log2().ceil() as u32 + 2
}
