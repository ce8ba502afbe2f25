//! Long-horizon index series: a coin's relative price index (base 100 at the
//! pump day), the volume-weighted market index over the top coins, and the
//! market-adjusted index I_n = R_n − M_n + 100.

use chrono::{DateTime, NaiveDate, Utc};
use std::collections::BTreeMap;

use super::{to_f64, AnalyticsError, PrePumpBaseline};
use crate::marketdata::{day_start, OhlcvSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    /// R: one coin's close relative to its pre-pump baseline.
    Coin,
    /// M: weighted market average, rebased to 100 at the pump day.
    Market,
    /// I: R − M + 100.
    Adjusted,
}

/// A day-indexed series with contiguous offsets 0..len from the base day.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSeries {
    pub kind: IndexKind,
    pub base_day: NaiveDate,
    values: Vec<f64>,
    /// Set when a subsequent pump (not data exhaustion) truncated the series.
    pub censored_from: Option<u32>,
}

impl IndexSeries {
    pub fn new(kind: IndexKind, base_day: NaiveDate, values: Vec<f64>, censored_from: Option<u32>) -> Self {
        Self { kind, base_day, values, censored_from }
    }

    pub fn value(&self, offset: u32) -> Option<f64> {
        self.values.get(offset as usize).copied()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest day offset covered, if any.
    pub fn last_offset(&self) -> Option<u32> {
        (!self.values.is_empty()).then(|| self.values.len() as u32 - 1)
    }
}

/// R_n = close_n / baseline × 100 for day offsets from the pump day, stopping
/// at the horizon, at a censoring offset (the next pump of the same coin), or
/// at the first missing daily bar — index offsets never skip a day.
///
/// Requires `baseline.price > 0`; degenerate baselines are filtered upstream.
pub fn relative_index(
    daily: &OhlcvSeries,
    baseline: &PrePumpBaseline,
    pump_day: NaiveDate,
    horizon_days: u32,
    censor_at: Option<u32>,
) -> IndexSeries {
    let limit = censor_at.unwrap_or(u32::MAX).min(horizon_days + 1);
    let mut values = Vec::new();
    for n in 0..limit {
        let day = pump_day + chrono::Days::new(u64::from(n));
        match daily.at(day_start(day)) {
            Some(bar) => values.push(to_f64(bar.close) / baseline.price * 100.0),
            None => break,
        }
    }
    let censored_from = censor_at.filter(|&c| c <= horizon_days && values.len() as u32 == c);
    IndexSeries::new(IndexKind::Coin, pump_day, values, censored_from)
}

/// One market-index constituent: a coin's daily series per exchange, already
/// in the common quote currency.
#[derive(Debug, Clone)]
pub struct MarketCoinData<'a> {
    pub coin: String,
    pub series: Vec<&'a OhlcvSeries>,
}

impl MarketCoinData<'_> {
    /// Unweighted mean of the exchange closes on `day`, if any exchange has a bar.
    fn price(&self, day: NaiveDate) -> Option<f64> {
        let t = day_start(day);
        let closes: Vec<f64> =
            self.series.iter().filter_map(|s| s.at(t)).map(|c| to_f64(c.close)).collect();
        (!closes.is_empty()).then(|| closes.iter().sum::<f64>() / closes.len() as f64)
    }

    /// Summed day volume in quote units (base volume × close) across exchanges.
    fn quote_volume(&self, day: NaiveDate) -> Option<f64> {
        let t = day_start(day);
        let vols: Vec<f64> = self
            .series
            .iter()
            .filter_map(|s| s.at(t))
            .map(|c| to_f64(c.volume) * to_f64(c.close))
            .collect();
        (!vols.is_empty()).then(|| vols.iter().sum())
    }
}

/// M_n: per coin, the daily price is the unweighted mean of its exchange
/// closes and the coin's index is rebased to 100 at the pump day; the
/// combined index is the volume-weighted average of those per-coin indices,
/// weighted by each coin's quote-unit day volume (falling back to its
/// pump-day volume when the offset-day volume is missing). Coins without a
/// pump-day price are dropped; offsets stop when no coin has data.
pub fn market_index(
    coins: &[MarketCoinData],
    pump_day: NaiveDate,
    horizon_days: u32,
) -> Result<IndexSeries, AnalyticsError> {
    struct Constituent<'a> {
        coin: &'a MarketCoinData<'a>,
        base_price: f64,
        base_weight: f64,
    }
    let constituents: Vec<Constituent> = coins
        .iter()
        .filter_map(|coin| {
            let base_price = coin.price(pump_day)?;
            if base_price <= 0.0 {
                return None;
            }
            let base_weight = coin.quote_volume(pump_day).unwrap_or(0.0);
            Some(Constituent { coin, base_price, base_weight })
        })
        .collect();
    if constituents.is_empty() {
        return Err(AnalyticsError::MarketIndexUnavailable { day: pump_day });
    }
    let mut values = Vec::new();
    for n in 0..=horizon_days {
        let day = pump_day + chrono::Days::new(u64::from(n));
        let mut weighted = 0.0;
        let mut weight_sum = 0.0;
        let mut present = 0usize;
        let mut unweighted = 0.0;
        for c in &constituents {
            let Some(price) = c.coin.price(day) else { continue };
            let relative = price / c.base_price * 100.0;
            let weight = match c.coin.quote_volume(day) {
                Some(w) if w > 0.0 => w,
                _ => c.base_weight,
            };
            weighted += weight * relative;
            weight_sum += weight;
            unweighted += relative;
            present += 1;
        }
        if present == 0 {
            break;
        }
        // All-zero weights (dead market day and dead pump day): fall back to
        // the unweighted mean rather than 0/0.
        let m = if weight_sum > 0.0 { weighted / weight_sum } else { unweighted / present as f64 };
        values.push(m);
    }
    Ok(IndexSeries::new(IndexKind::Market, pump_day, values, None))
}

/// I_n = R_n − M_n + 100 over the offsets both series cover; when the coin
/// tracks the market exactly this is identically 100.
pub fn adjusted_index(r: &IndexSeries, m: &IndexSeries) -> Result<IndexSeries, AnalyticsError> {
    if r.base_day != m.base_day {
        return Err(AnalyticsError::BaseDayMismatch { left: r.base_day, right: m.base_day });
    }
    let len = r.len().min(m.len());
    if len == 0 {
        return Err(AnalyticsError::EmptyIntersection);
    }
    let values = (0..len).map(|n| r.values[n] - m.values[n] + 100.0).collect();
    Ok(IndexSeries::new(IndexKind::Adjusted, r.base_day, values, r.censored_from))
}

/// For each event, the day offset of the same coin's next pump (on any
/// exchange or channel) — the censoring point for its index series. None when
/// the coin is never pumped again. Input: (event_id, coin, announced_at).
pub fn censor_offsets(
    events: &[(String, String, DateTime<Utc>)],
) -> BTreeMap<String, Option<u32>> {
    let mut by_coin: BTreeMap<&str, Vec<(&str, DateTime<Utc>)>> = BTreeMap::new();
    for (id, coin, at) in events {
        by_coin.entry(coin).or_default().push((id, *at));
    }
    let mut out = BTreeMap::new();
    for pumps in by_coin.values_mut() {
        pumps.sort_by_key(|(id, at)| (*at, id.to_string()));
        for (i, (id, at)) in pumps.iter().enumerate() {
            let censor = pumps.get(i + 1).map(|(_, next)| {
                let days = (next.date_naive() - at.date_naive()).num_days();
                u32::try_from(days).expect("later pump is not earlier")
            });
            out.insert(id.to_string(), censor);
        }
    }
    out
}
