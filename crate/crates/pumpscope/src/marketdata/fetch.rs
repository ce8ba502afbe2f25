//! Paginated collection of the three per-event windows: minute bars one day
//! either side of the announcement, hourly bars one week either side, daily
//! bars from listing to collection. A failed page stops the first pass; the
//! missing tail is re-requested once, and whatever still fails is recorded as
//! a tier failure, leaving the other tiers usable.

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::Serialize;

use super::client::{ClientError, ExchangeClient, RateLimiter};
use super::{day_start, Candle, Granularity, OhlcvSeries, Pair};

/// The three collection windows for one pump event. All half-open; the daily
/// window's end is the day after collection, so the collection day itself is
/// included.
#[derive(Debug, Clone)]
pub struct FetchPlan {
    pub event_id: String,
    pub exchange: String,
    pub pair: Pair,
    pub minute: (DateTime<Utc>, DateTime<Utc>),
    pub hourly: (DateTime<Utc>, DateTime<Utc>),
    pub daily: (DateTime<Utc>, DateTime<Utc>),
}

impl FetchPlan {
    pub fn new(
        event_id: impl Into<String>,
        exchange: impl Into<String>,
        pair: Pair,
        announced_at: DateTime<Utc>,
        listing_date: NaiveDate,
        collection_date: NaiveDate,
    ) -> Self {
        let m0 = Granularity::Minute.floor(announced_at);
        let h0 = Granularity::Hour.floor(announced_at);
        Self {
            event_id: event_id.into(),
            exchange: exchange.into(),
            pair,
            minute: (m0 - Duration::days(1), m0 + Duration::days(1)),
            hourly: (h0 - Duration::days(7), h0 + Duration::days(7)),
            daily: (day_start(listing_date), day_start(collection_date) + Duration::days(1)),
        }
    }

    pub fn window(&self, granularity: Granularity) -> (DateTime<Utc>, DateTime<Utc>) {
        match granularity {
            Granularity::Minute => self.minute,
            Granularity::Hour => self.hourly,
            Granularity::Day => self.daily,
        }
    }

    /// Bar slots the window covers when no data is missing.
    pub fn expected_slots(&self, granularity: Granularity) -> usize {
        let (start, end) = self.window(granularity);
        ((end - start).num_milliseconds() / granularity.millis()).max(0) as usize
    }
}

/// A sub-range that still had no answer after the second pass.
#[derive(Debug, Clone, Serialize)]
pub struct TierFailure {
    pub granularity: Granularity,
    pub from: DateTime<Utc>,
    pub to: DateTime<Utc>,
    pub detail: String,
}

/// Everything collected for one event. Series may be empty — or stop short —
/// where the exchange had no data; `failures` lists sub-ranges lost to errors
/// rather than to missing data.
#[derive(Debug, Clone)]
pub struct TieredMarketData {
    pub event_id: String,
    pub minute: OhlcvSeries,
    pub hourly: OhlcvSeries,
    pub daily: OhlcvSeries,
    pub failures: Vec<TierFailure>,
}

impl TieredMarketData {
    pub fn series(&self, granularity: Granularity) -> &OhlcvSeries {
        match granularity {
            Granularity::Minute => &self.minute,
            Granularity::Hour => &self.hourly,
            Granularity::Day => &self.daily,
        }
    }
}

/// Pages through `[start, end)`, advancing `since` past each batch. Returns
/// the bars collected and, if a page failed, where collection stopped.
fn paginate(
    client: &dyn ExchangeClient,
    limiter: &RateLimiter,
    pair: &Pair,
    granularity: Granularity,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
) -> (Vec<Candle>, Option<(DateTime<Utc>, ClientError)>) {
    let mut out: Vec<Candle> = Vec::new();
    let mut since = start;
    while since < end {
        let batch = match limiter.fetch(client, pair, granularity, since, client.max_batch_size()) {
            Ok(batch) => batch,
            Err(e) => return (out, Some((since, e))),
        };
        if batch.is_empty() {
            break; // nothing at or after `since`: the rest of the window is a gap
        }
        let mut advanced = since;
        for c in batch {
            if c.open_time >= end {
                return (out, None);
            }
            if c.open_time < since {
                continue; // tolerate clients that overlap batches
            }
            advanced = c.open_time + granularity.duration();
            out.push(c);
        }
        if advanced == since {
            break; // batch carried nothing new; avoid spinning on a bad client
        }
        since = advanced;
    }
    (out, None)
}

/// Strict pagination: any failed page is the caller's problem.
pub fn fetch_paginated(
    client: &dyn ExchangeClient,
    limiter: &RateLimiter,
    pair: &Pair,
    granularity: Granularity,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
) -> Result<Vec<Candle>, ClientError> {
    let (bars, failure) = paginate(client, limiter, pair, granularity, start, end);
    match failure {
        None => Ok(bars),
        Some((_, e)) => Err(e),
    }
}

/// Collects all three windows for one event, with a second pass over any
/// sub-range the first pass lost to errors.
pub fn fetch_tiered(
    client: &dyn ExchangeClient,
    limiter: &RateLimiter,
    plan: &FetchPlan,
) -> TieredMarketData {
    let mut failures = Vec::new();
    let mut collect = |granularity: Granularity| -> OhlcvSeries {
        let (start, end) = plan.window(granularity);
        let (mut bars, failure) = paginate(client, limiter, &plan.pair, granularity, start, end);
        if let Some((fail_from, first_err)) = failure {
            if first_err.is_retryable() {
                let (more, second) =
                    paginate(client, limiter, &plan.pair, granularity, fail_from, end);
                bars.extend(more);
                if let Some((from, e)) = second {
                    failures.push(TierFailure {
                        granularity,
                        from,
                        to: end,
                        detail: e.to_string(),
                    });
                }
            } else {
                failures.push(TierFailure {
                    granularity,
                    from: fail_from,
                    to: end,
                    detail: first_err.to_string(),
                });
            }
        }
        match OhlcvSeries::new(client.exchange(), plan.pair.clone(), granularity, bars) {
            Ok(series) => series,
            Err(e) => {
                failures.push(TierFailure {
                    granularity,
                    from: start,
                    to: end,
                    detail: e.to_string(),
                });
                OhlcvSeries::empty(client.exchange(), plan.pair.clone(), granularity)
            }
        }
    };
    let minute = collect(Granularity::Minute);
    let hourly = collect(Granularity::Hour);
    let daily = collect(Granularity::Day);
    TieredMarketData { event_id: plan.event_id.clone(), minute, hourly, daily, failures }
}
