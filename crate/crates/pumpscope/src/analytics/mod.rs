//! Impact measurement over pump events: pre-pump baselines, 5-minute-window
//! price and volume response, trade values, long-horizon market-adjusted
//! index series, robust aggregation, pump-count bins, nth-pump comparisons,
//! and before/after event-window splits.
//!
//! Market data stays decimal up to this boundary; everything in here works in
//! f64, with fixed iteration and summation orders so cohort statistics are
//! reproducible bit for bit.

pub mod cohort;
pub mod index;
pub mod stats;
pub mod window;

use chrono::{DateTime, NaiveDate, Utc};
use rust_decimal::prelude::ToPrimitive;
use thiserror::Error;

use crate::marketdata::{day_start, Granularity, OhlcvSeries};

pub use cohort::{
    aggregate, bin_by_pump_count, cpi_dominant_coins, nth_pump_analysis, AggregateRow, Bin,
    BinScheme, EventIndex, DAY_OFFSETS,
};
pub use index::{
    adjusted_index, censor_offsets, market_index, relative_index, IndexKind, IndexSeries,
    MarketCoinData,
};
pub use stats::{iqr_mean, mean, median, quantile_type7, summarize, Summary, QUANTILE_RULE};
pub use window::{
    before_after_means, event_window_analysis, EventPerf, EventWindowReport, ExchangeSplit,
    GroupMeans, WeekCount,
};

/// How many calendar days before the pump day feed the baseline.
pub const BASELINE_DAYS: u32 = 7;
/// The pump window: five 1-minute bars from the announcement minute.
pub const PUMP_WINDOW_MINUTES: i64 = 5;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("{granularity} series required, got {got}")]
    WrongGranularity { granularity: Granularity, got: Granularity },
    #[error("no daily bars in the {BASELINE_DAYS} days before {day}")]
    BaselineUnavailable { day: NaiveDate },
    #[error("baseline {field} for {day} is zero; ratio metrics undefined")]
    DegenerateBaseline { day: NaiveDate, field: &'static str },
    #[error("no minute bars in the {PUMP_WINDOW_MINUTES}-minute window from {start}")]
    EmptyWindow { start: DateTime<Utc> },
    #[error("no market-index coin has data on {day}")]
    MarketIndexUnavailable { day: NaiveDate },
    #[error("index series share no day offsets")]
    EmptyIntersection,
    #[error("index series have different base days: {left} vs {right}")]
    BaseDayMismatch { left: NaiveDate, right: NaiveDate },
}

/// Mean daily close and volume over the 7 calendar days before the pump day.
/// Missing days shrink the divisor; at least one contributing day is required.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrePumpBaseline {
    pub price: f64,
    pub volume: f64,
    /// How many of the 7 days actually had a bar.
    pub days: u32,
}

/// Response inside the 5-minute pump window, relative to the baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpPerformance {
    /// Max % price increase: (P_max − baseline) / baseline × 100.
    pub delta_p: f64,
    /// Peak price in the window (bar highs).
    pub max_price: f64,
    /// Total base-unit volume over the window.
    pub pump_volume: f64,
    /// % volume change vs the baseline day volume; None when the baseline
    /// volume is zero.
    pub delta_v: Option<f64>,
    /// max_price × pump_volume.
    pub total_value: f64,
    /// baseline.price × baseline.volume.
    pub pre_value: f64,
}

pub(crate) fn to_f64(d: rust_decimal::Decimal) -> f64 {
    d.to_f64().expect("decimal fits f64")
}

pub fn pre_pump_baseline(
    daily: &OhlcvSeries,
    announced_at: DateTime<Utc>,
) -> Result<PrePumpBaseline, AnalyticsError> {
    if daily.granularity != Granularity::Day {
        return Err(AnalyticsError::WrongGranularity {
            granularity: Granularity::Day,
            got: daily.granularity,
        });
    }
    let pump_day = announced_at.date_naive();
    let mut prices = 0.0;
    let mut volumes = 0.0;
    let mut days = 0u32;
    for back in (1..=BASELINE_DAYS).rev() {
        let day = pump_day - chrono::Days::new(u64::from(back));
        if let Some(bar) = daily.at(day_start(day)) {
            prices += to_f64(bar.close);
            volumes += to_f64(bar.volume);
            days += 1;
        }
    }
    if days == 0 {
        return Err(AnalyticsError::BaselineUnavailable { day: pump_day });
    }
    Ok(PrePumpBaseline { price: prices / f64::from(days), volume: volumes / f64::from(days), days })
}

/// The five 1-minute bars starting at the announcement floored to the minute.
fn pump_window<'a>(
    minute: &'a OhlcvSeries,
    announced_at: DateTime<Utc>,
) -> Result<&'a [crate::marketdata::Candle], AnalyticsError> {
    if minute.granularity != Granularity::Minute {
        return Err(AnalyticsError::WrongGranularity {
            granularity: Granularity::Minute,
            got: minute.granularity,
        });
    }
    let start = Granularity::Minute.floor(announced_at);
    let bars = minute.slice(start, start + chrono::Duration::minutes(PUMP_WINDOW_MINUTES));
    if bars.is_empty() {
        return Err(AnalyticsError::EmptyWindow { start });
    }
    Ok(bars)
}

/// ΔP = (P_max − P_before) / P_before × 100, with P_max the highest bar high
/// in the 5-minute window.
pub fn max_price_increase(
    minute: &OhlcvSeries,
    announced_at: DateTime<Utc>,
    baseline: &PrePumpBaseline,
) -> Result<f64, AnalyticsError> {
    if baseline.price <= 0.0 {
        return Err(AnalyticsError::DegenerateBaseline {
            day: announced_at.date_naive(),
            field: "price",
        });
    }
    let bars = pump_window(minute, announced_at)?;
    let p_max = bars.iter().map(|c| to_f64(c.high)).fold(f64::NEG_INFINITY, f64::max);
    Ok((p_max - baseline.price) / baseline.price * 100.0)
}

/// Total window volume plus ΔV, the symmetric percentage change against the
/// baseline day volume. ΔV is None (flagged upstream) when the baseline
/// volume is zero; the volume itself is still returned.
pub fn pump_volume_metrics(
    minute: &OhlcvSeries,
    announced_at: DateTime<Utc>,
    baseline: &PrePumpBaseline,
) -> Result<(f64, Option<f64>), AnalyticsError> {
    let bars = pump_window(minute, announced_at)?;
    let pump_volume: f64 = bars.iter().map(|c| to_f64(c.volume)).sum();
    let delta_v = (baseline.volume > 0.0)
        .then(|| (pump_volume - baseline.volume) / baseline.volume * 100.0);
    Ok((pump_volume, delta_v))
}

/// (pre_value, pump_value): the baseline and best-case window trade values.
pub fn total_value(
    baseline: &PrePumpBaseline,
    max_price: f64,
    pump_volume: f64,
) -> (f64, f64) {
    (baseline.price * baseline.volume, max_price * pump_volume)
}

/// Bundles the window metrics for one event.
pub fn pump_performance(
    minute: &OhlcvSeries,
    announced_at: DateTime<Utc>,
    baseline: &PrePumpBaseline,
) -> Result<PumpPerformance, AnalyticsError> {
    let delta_p = max_price_increase(minute, announced_at, baseline)?;
    let bars = pump_window(minute, announced_at)?;
    let max_price = bars.iter().map(|c| to_f64(c.high)).fold(f64::NEG_INFINITY, f64::max);
    let (pump_volume, delta_v) = pump_volume_metrics(minute, announced_at, baseline)?;
    let (pre_value, total) = total_value(baseline, max_price, pump_volume);
    Ok(PumpPerformance {
        delta_p,
        max_price,
        pump_volume,
        delta_v,
        total_value: total,
        pre_value,
    })
}
