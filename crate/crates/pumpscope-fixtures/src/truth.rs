//! Ground truth: every reported statistic recomputed from the synthesized
//! bars with plain loops and the formulas' definitions. No code is shared
//! with the pipeline under test, so agreement is evidence of correctness.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::market::{floor_ms, pair_of, tick_value, World, MARKET_COINS, MINUTE_MS};
use crate::scenario::{self, EventSpec, Scenario, CHANNELS, CODES};

pub const DAY_OFFSETS: [u32; 8] = [7, 14, 30, 60, 90, 180, 270, 365];
pub const HORIZON_DAYS: u32 = 365;
pub const NTH_PUMP_MAX: u32 = 4;
pub const HALF_WINDOW_WEEKS: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub messages: usize,
    pub matched: usize,
    pub skipped_unmatched: usize,
    pub skipped_no_exchange: usize,
    pub events_merged: usize,
    pub events_clean: usize,
    pub events_removed: usize,
    pub events_analyzed: usize,
    pub events_skipped: usize,
    pub coins: usize,
    pub exchanges: usize,
    pub channels: Vec<TruthChannel>,
    pub pumps_per_coin: Vec<TruthCoinBin>,
    pub events: Vec<TruthEvent>,
    pub impact_all: Vec<TruthRow>,
    pub impact_dominant: Vec<TruthRow>,
    pub impact_other: Vec<TruthRow>,
    pub impact_bins: Vec<TruthBin>,
    pub impact_nth: Vec<TruthNth>,
    pub split: TruthSplit,
    pub split_means: Vec<TruthGroupMeans>,
    pub coin_scatter: Vec<TruthScatter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthChannel {
    pub code: String,
    pub pumps: usize,
    pub share_pct: f64,
    pub distinct_coins: usize,
    pub pumps_per_coin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCoinBin {
    pub label: String,
    pub coins: usize,
    pub share_pct: f64,
}

/// One clean event: identity, window metrics (absent when the call window
/// holds no bars), and the index series the cohort statistics are built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub event_id: String,
    pub coin: String,
    pub exchange: String,
    pub channel_code: String,
    pub announced_at: DateTime<Utc>,
    pub censor: Option<u32>,
    pub pre_price: f64,
    pub pre_volume: f64,
    pub delta_p: Option<f64>,
    pub delta_v: Option<f64>,
    pub max_price: Option<f64>,
    pub pump_volume: Option<f64>,
    pub pre_value: f64,
    pub pump_value: Option<f64>,
    /// Censored market-adjusted index; empty when censored to nothing (the
    /// event then drops out of the analyzed cohort).
    pub adjusted: Vec<f64>,
    pub adjusted_uncensored: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub offset: u32,
    pub n: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub iqr_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthBin {
    pub group: String,
    pub label: String,
    pub coins: usize,
    pub rows: Vec<TruthRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthNth {
    pub group: String,
    pub n: u32,
    pub rows: Vec<TruthRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthWeek {
    pub week: i32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSplit {
    pub split_at: DateTime<Utc>,
    pub total: usize,
    pub before: usize,
    pub after: usize,
    pub share_before_pct: f64,
    pub share_after_pct: f64,
    pub time_share_before_pct: f64,
    pub time_share_after_pct: f64,
    pub pumps_per_week_before: f64,
    pub pumps_per_week_after: f64,
    pub per_exchange: Vec<(String, usize, usize, f64, f64)>,
    pub weekly: Vec<TruthWeek>,
    pub weekly_mean_before: Option<f64>,
    pub weekly_mean_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthGroupMeans {
    pub group: String,
    pub period: String,
    pub n: usize,
    pub delta_p: Option<f64>,
    pub delta_v: Option<f64>,
    pub pre_price: Option<f64>,
    pub max_price: Option<f64>,
    pub pre_volume: Option<f64>,
    pub pump_volume: Option<f64>,
    pub pre_value: Option<f64>,
    pub pump_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthScatter {
    pub coin: String,
    pub pumps: u32,
    pub dominant_channel_share_pct: f64,
    pub dominant: bool,
    pub adjusted_index_day365_mean: Option<f64>,
}

// ---------------------------------------------------------------------------
// statistics, from their definitions
// ---------------------------------------------------------------------------

fn mean_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

/// Type-7 quantile (linear interpolation of order statistics) over a sorted
/// slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

fn summary_of(values: &[f64]) -> Option<(usize, f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let median = quantile(&sorted, 0.5);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let inside: Vec<f64> = sorted.iter().copied().filter(|v| *v >= q1 && *v <= q3).collect();
    let iqr_mean = if inside.is_empty() {
        mean
    } else {
        inside.iter().sum::<f64>() / inside.len() as f64
    };
    Some((sorted.len(), mean, median, iqr_mean))
}

fn aggregate_rows(series: &[&Vec<f64>], offsets: &[u32]) -> Vec<TruthRow> {
    offsets
        .iter()
        .map(|&offset| {
            let values: Vec<f64> =
                series.iter().filter_map(|s| s.get(offset as usize).copied()).collect();
            match summary_of(&values) {
                Some((n, mean, median, iqr_mean)) => TruthRow {
                    offset,
                    n,
                    mean: Some(mean),
                    median: Some(median),
                    iqr_mean: Some(iqr_mean),
                },
                None => TruthRow { offset, n: 0, mean: None, median: None, iqr_mean: None },
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// price access, conversion included
// ---------------------------------------------------------------------------

struct Quotes<'a> {
    world: &'a World,
}

impl<'a> Quotes<'a> {
    /// Daily close in USDT terms plus raw base volume; BTC-quoted pairs are
    /// multiplied by the same exchange's BTC/USDT close of the same day.
    fn daily(&self, exchange: &'static str, pair: &str, day: NaiveDate) -> Option<(f64, f64)> {
        let series = self.world.series.get(&(exchange, pair.to_string()))?;
        let bar = series.daily.get(&day)?;
        let mut close = tick_value(bar.close, series.scale);
        if pair.ends_with("/BTC") {
            let reference = self.world.series.get(&(exchange, "BTC/USDT".to_string()))?;
            let ref_bar = reference.daily.get(&day)?;
            close *= tick_value(ref_bar.close, reference.scale);
        }
        Some((close, bar.volume as f64))
    }

    /// Minute-bar high in USDT terms plus raw base volume. The reference
    /// minute bars are flat, so high, open, and close all convert by the
    /// reference close.
    fn minute(&self, exchange: &'static str, pair: &str, ms: i64) -> Option<(f64, f64)> {
        let series = self.world.series.get(&(exchange, pair.to_string()))?;
        let bar = series.minute.get(&ms)?;
        let mut high = tick_value(bar.high, series.scale);
        if pair.ends_with("/BTC") {
            let reference = self.world.series.get(&(exchange, "BTC/USDT".to_string()))?;
            let ref_bar = reference.minute.get(&ms)?;
            high *= tick_value(ref_bar.close, reference.scale);
        }
        Some((high, bar.volume as f64))
    }
}

struct Baseline {
    price: f64,
    volume: f64,
}

fn baseline_of(quotes: &Quotes, event: &EventSpec, pair: &str) -> Option<Baseline> {
    let pump_day = event.at.date_naive();
    let mut closes = Vec::new();
    let mut volumes = Vec::new();
    for back in 1..=7i64 {
        if let Some((close, volume)) = quotes.daily(event.exchange, pair, pump_day - Duration::days(back)) {
            closes.push(close);
            volumes.push(volume);
        }
    }
    if closes.is_empty() {
        return None;
    }
    Some(Baseline {
        price: closes.iter().sum::<f64>() / closes.len() as f64,
        volume: volumes.iter().sum::<f64>() / volumes.len() as f64,
    })
}

// ---------------------------------------------------------------------------
// market index
// ---------------------------------------------------------------------------

/// The exchange series backing one market constituent, mirroring how the
/// exchanges carry them: binance prices in BTC (converted), the rest in USDT.
fn constituent_series(world: &World, coin: &str) -> Vec<(&'static str, String)> {
    let mut list = Vec::new();
    for ex in ["binance", "hotbit", "kucoin"] {
        let pair = if ex == "binance" {
            if coin == "BTC" { "BTC/USDT".to_string() } else { format!("{coin}/BTC") }
        } else {
            format!("{coin}/USDT")
        };
        if world.series.contains_key(&(ex, pair.clone())) {
            list.push((ex, pair));
        }
    }
    list
}

fn coin_price(quotes: &Quotes, series: &[(&'static str, String)], day: NaiveDate) -> Option<f64> {
    let closes: Vec<f64> =
        series.iter().filter_map(|(ex, pair)| quotes.daily(ex, pair, day)).map(|(c, _)| c).collect();
    (!closes.is_empty()).then(|| closes.iter().sum::<f64>() / closes.len() as f64)
}

fn coin_quote_volume(
    quotes: &Quotes,
    series: &[(&'static str, String)],
    day: NaiveDate,
) -> Option<f64> {
    let vols: Vec<f64> = series
        .iter()
        .filter_map(|(ex, pair)| quotes.daily(ex, pair, day))
        .map(|(c, v)| v * c)
        .collect();
    (!vols.is_empty()).then(|| vols.iter().sum())
}

fn market_index_values(quotes: &Quotes, pump_day: NaiveDate) -> Vec<f64> {
    struct Constituent {
        series: Vec<(&'static str, String)>,
        base_price: f64,
        base_weight: f64,
    }
    let mut coins: Vec<&str> = MARKET_COINS.iter().copied().filter(|c| *c != "USDT").collect();
    coins.sort_unstable();
    let constituents: Vec<Constituent> = coins
        .iter()
        .filter_map(|coin| {
            let series = constituent_series(quotes.world, coin);
            let base_price = coin_price(quotes, &series, pump_day)?;
            if base_price <= 0.0 {
                return None;
            }
            let base_weight = coin_quote_volume(quotes, &series, pump_day).unwrap_or(0.0);
            Some(Constituent { series, base_price, base_weight })
        })
        .collect();
    assert!(!constituents.is_empty(), "market index must have constituents");
    let mut values = Vec::new();
    for n in 0..=HORIZON_DAYS {
        let day = pump_day + Duration::days(i64::from(n));
        let mut weighted = 0.0;
        let mut weight_sum = 0.0;
        let mut unweighted = 0.0;
        let mut present = 0usize;
        for c in &constituents {
            let Some(price) = coin_price(quotes, &c.series, day) else { continue };
            let relative = price / c.base_price * 100.0;
            let weight = match coin_quote_volume(quotes, &c.series, day) {
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
        values.push(if weight_sum > 0.0 { weighted / weight_sum } else { unweighted / present as f64 });
    }
    values
}

// ---------------------------------------------------------------------------
// the full computation
// ---------------------------------------------------------------------------

fn event_id(e: &EventSpec) -> String {
    format!(
        "{}-{}-{}-{}",
        CODES[e.channel],
        e.at.format("%Y%m%dT%H%M%SZ"),
        e.coin,
        e.exchange
    )
}

pub fn compute(s: &Scenario, world: &World) -> GroundTruth {
    let quotes = Quotes { world };

    // Clean events in table order.
    let mut clean: Vec<&EventSpec> = s.clean().collect();
    clean.sort_by_key(|e| (e.at, e.coin, e.exchange, CODES[e.channel]));

    // Censoring: next pump of the same coin, in days, ties broken by id.
    let mut censors: BTreeMap<String, Option<u32>> = BTreeMap::new();
    {
        let mut by_coin: BTreeMap<&str, Vec<(String, DateTime<Utc>)>> = BTreeMap::new();
        for e in &clean {
            by_coin.entry(e.coin).or_default().push((event_id(e), e.at));
        }
        for pumps in by_coin.values_mut() {
            pumps.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
            for (i, (id, at)) in pumps.iter().enumerate() {
                let censor = pumps.get(i + 1).map(|(_, next)| {
                    (next.date_naive() - at.date_naive()).num_days() as u32
                });
                censors.insert(id.clone(), censor);
            }
        }
    }

    let mut market_cache: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
    let mut events: Vec<TruthEvent> = Vec::new();
    for e in &clean {
        let pair = pair_of(e);
        let pump_day = e.at.date_naive();
        let baseline = baseline_of(&quotes, e, &pair).expect("seven prior days always covered");

        // Call-window metrics over the five minute bars from the floored
        // announcement minute.
        let fm = floor_ms(e.at, MINUTE_MS);
        let window: Vec<(f64, f64)> =
            (0..5).filter_map(|i| quotes.minute(e.exchange, &pair, fm + i * MINUTE_MS)).collect();
        let (delta_p, delta_v, max_price, pump_volume, pump_value) = if window.is_empty() {
            (None, None, None, None, None)
        } else {
            let max_price = window.iter().map(|(h, _)| *h).fold(f64::MIN, f64::max);
            let pump_volume: f64 = window.iter().map(|(_, v)| *v).sum();
            let delta_p = (max_price - baseline.price) / baseline.price * 100.0;
            let delta_v = (baseline.volume > 0.0)
                .then(|| (pump_volume - baseline.volume) / baseline.volume * 100.0);
            (
                Some(delta_p),
                delta_v,
                Some(max_price),
                Some(pump_volume),
                Some(max_price * pump_volume),
            )
        };

        let id = event_id(e);
        let censor = censors[&id];
        let relative = |limit: u32| -> Vec<f64> {
            let mut values = Vec::new();
            for n in 0..limit {
                match quotes.daily(e.exchange, &pair, pump_day + Duration::days(i64::from(n))) {
                    Some((close, _)) => values.push(close / baseline.price * 100.0),
                    None => break,
                }
            }
            values
        };
        let r_censored = relative(censor.unwrap_or(u32::MAX).min(HORIZON_DAYS + 1));
        let r_uncensored = relative(HORIZON_DAYS + 1);
        let market = market_cache
            .entry(pump_day)
            .or_insert_with(|| market_index_values(&quotes, pump_day));
        let adjust = |r: &[f64]| -> Vec<f64> {
            r.iter().zip(market.iter()).map(|(r, m)| r - m + 100.0).collect()
        };
        events.push(TruthEvent {
            event_id: id,
            coin: e.coin.to_string(),
            exchange: e.exchange.to_string(),
            channel_code: CODES[e.channel].to_string(),
            announced_at: e.at,
            censor,
            pre_price: baseline.price,
            pre_volume: baseline.volume,
            delta_p,
            delta_v,
            max_price,
            pump_volume,
            pre_value: baseline.price * baseline.volume,
            pump_value,
            adjusted: adjust(&r_censored),
            adjusted_uncensored: adjust(&r_uncensored),
        });
    }

    let analyzed: Vec<&TruthEvent> = events.iter().filter(|e| !e.adjusted.is_empty()).collect();

    let dominant = "CPI";
    let adjusted_of = |pred: &dyn Fn(&TruthEvent) -> bool| -> Vec<&Vec<f64>> {
        analyzed.iter().filter(|e| pred(e)).map(|e| &e.adjusted).collect()
    };
    let impact_all = aggregate_rows(&adjusted_of(&|_| true), &DAY_OFFSETS);
    let impact_dominant =
        aggregate_rows(&adjusted_of(&|e| e.channel_code == dominant), &DAY_OFFSETS);
    let impact_other = aggregate_rows(&adjusted_of(&|e| e.channel_code != dominant), &DAY_OFFSETS);

    // Pump-count bins and nth-pump tables over the uncensored windows.
    let total_counts: BTreeMap<&str, u32> = {
        let mut counts = BTreeMap::new();
        for e in &clean {
            *counts.entry(e.coin).or_insert(0u32) += 1;
        }
        counts
    };
    let mut impact_bins = Vec::new();
    let mut impact_nth = Vec::new();
    for group in ["dominant", "other"] {
        let wants_dominant = group == "dominant";
        let cohort: Vec<&TruthEvent> = analyzed
            .iter()
            .copied()
            .filter(|e| (e.channel_code == dominant) == wants_dominant)
            .collect();
        let edges: &[(&str, u32, Option<u32>)] = if wants_dominant {
            &[("1-10", 1, Some(10)), ("11-18", 11, Some(18)), ("19-30", 19, Some(30)), ("31+", 31, None)]
        } else {
            &[("1", 1, Some(1)), ("2+", 2, None)]
        };
        let group_coins: BTreeSet<&str> = cohort.iter().map(|e| e.coin.as_str()).collect();
        for (label, min, max) in edges {
            let bin_coins: Vec<&str> = group_coins
                .iter()
                .copied()
                .filter(|coin| {
                    let n = total_counts[coin];
                    n >= *min && max.map_or(true, |m| n <= m)
                })
                .collect();
            let series: Vec<&Vec<f64>> = cohort
                .iter()
                .filter(|e| bin_coins.contains(&e.coin.as_str()))
                .map(|e| &e.adjusted_uncensored)
                .collect();
            impact_bins.push(TruthBin {
                group: group.to_string(),
                label: label.to_string(),
                coins: bin_coins.len(),
                rows: aggregate_rows(&series, &DAY_OFFSETS),
            });
        }
        let mut by_coin: BTreeMap<&str, Vec<&TruthEvent>> = BTreeMap::new();
        for e in &cohort {
            by_coin.entry(e.coin.as_str()).or_default().push(e);
        }
        for pumps in by_coin.values_mut() {
            pumps.sort_by(|a, b| {
                (a.announced_at, &a.event_id).cmp(&(b.announced_at, &b.event_id))
            });
        }
        for n in 1..=NTH_PUMP_MAX {
            let series: Vec<&Vec<f64>> = by_coin
                .values()
                .filter_map(|pumps| pumps.get(n as usize - 1))
                .map(|e| &e.adjusted_uncensored)
                .collect();
            impact_nth.push(TruthNth {
                group: group.to_string(),
                n,
                rows: aggregate_rows(&series, &DAY_OFFSETS),
            });
        }
    }

    let split = split_report(&clean);
    let split_means = group_means(&events);
    let channels = channel_rows(&clean);
    let pumps_per_coin = coin_bins(&total_counts);
    let coin_scatter = scatter_rows(&clean, &events, &total_counts);

    GroundTruth {
        seed: s.seed,
        messages: s.messages.len(),
        matched: s.matched_messages,
        skipped_unmatched: s.noise_messages,
        skipped_no_exchange: 1,
        events_merged: s.events.len(),
        events_clean: clean.len(),
        events_removed: s.events.len() - clean.len(),
        events_analyzed: analyzed.len(),
        events_skipped: clean.len() - analyzed.len(),
        coins: total_counts.len(),
        exchanges: clean.iter().map(|e| e.exchange).collect::<BTreeSet<_>>().len(),
        channels,
        pumps_per_coin,
        events,
        impact_all,
        impact_dominant,
        impact_other,
        impact_bins,
        impact_nth,
        split,
        split_means,
        coin_scatter,
    }
}

fn split_at() -> DateTime<Utc> {
    Utc.from_utc_datetime(&scenario::split_date().and_hms_opt(0, 0, 0).unwrap())
}

fn split_report(clean: &[&EventSpec]) -> TruthSplit {
    let split = split_at();
    let total = clean.len();
    let before = clean.iter().filter(|e| e.at < split).count();
    let after = total - before;
    let first = clean.iter().map(|e| e.at).min().unwrap();
    let last = clean.iter().map(|e| e.at).max().unwrap();
    let span = (last - first).num_seconds().max(0) as f64;
    let before_span = (split.min(last) - first).num_seconds().max(0) as f64;
    let after_span = (last - split.max(first)).num_seconds().max(0) as f64;
    let week_secs = 7.0 * 86_400.0;
    let weeks_before = before_span / week_secs;
    let weeks_after = after_span / week_secs;
    let share = |part: usize, whole: usize| {
        if whole == 0 { 0.0 } else { part as f64 / whole as f64 * 100.0 }
    };

    let mut exchanges: Vec<&str> = clean.iter().map(|e| e.exchange).collect();
    exchanges.sort_unstable();
    exchanges.dedup();
    let per_exchange = exchanges
        .into_iter()
        .map(|ex| {
            let b = clean.iter().filter(|e| e.exchange == ex && e.at < split).count();
            let a = clean.iter().filter(|e| e.exchange == ex && e.at >= split).count();
            (ex.to_string(), b, a, share(b, b + a), share(a, b + a))
        })
        .collect();

    let mut weekly = Vec::new();
    for week in -(HALF_WINDOW_WEEKS as i32)..(HALF_WINDOW_WEEKS as i32) {
        let start = split + Duration::weeks(i64::from(week));
        let end = start + Duration::weeks(1);
        let count = clean.iter().filter(|e| e.at >= start && e.at < end).count();
        weekly.push(TruthWeek { week, count });
    }
    let before_counts: Vec<f64> =
        weekly.iter().filter(|w| w.week < 0).map(|w| w.count as f64).collect();
    let after_counts: Vec<f64> =
        weekly.iter().filter(|w| w.week >= 0).map(|w| w.count as f64).collect();

    TruthSplit {
        split_at: split,
        total,
        before,
        after,
        share_before_pct: share(before, total),
        share_after_pct: share(after, total),
        time_share_before_pct: if span > 0.0 { before_span / span * 100.0 } else { 0.0 },
        time_share_after_pct: if span > 0.0 { after_span / span * 100.0 } else { 0.0 },
        pumps_per_week_before: if weeks_before > 0.0 { before as f64 / weeks_before } else { 0.0 },
        pumps_per_week_after: if weeks_after > 0.0 { after as f64 / weeks_after } else { 0.0 },
        per_exchange,
        weekly,
        weekly_mean_before: mean_of(&before_counts),
        weekly_mean_after: mean_of(&after_counts),
    }
}

fn group_means(events: &[TruthEvent]) -> Vec<TruthGroupMeans> {
    let split = split_at();
    let perfs: Vec<&TruthEvent> = events.iter().filter(|e| e.delta_p.is_some()).collect();
    let cell = |group: &str, period: &str| -> TruthGroupMeans {
        let selected: Vec<&&TruthEvent> = perfs
            .iter()
            .filter(|e| match group {
                "all" => true,
                "other" => e.channel_code != "CPI",
                _ => e.channel_code == "CPI",
            })
            .filter(|e| if period == "before" { e.announced_at < split } else { e.announced_at >= split })
            .collect();
        let of = |f: &dyn Fn(&TruthEvent) -> f64| -> Option<f64> {
            mean_of(&selected.iter().map(|e| f(e)).collect::<Vec<_>>())
        };
        let delta_vs: Vec<f64> = selected.iter().filter_map(|e| e.delta_v).collect();
        TruthGroupMeans {
            group: group.to_string(),
            period: period.to_string(),
            n: selected.len(),
            delta_p: of(&|e| e.delta_p.unwrap()),
            delta_v: mean_of(&delta_vs),
            pre_price: of(&|e| e.pre_price),
            max_price: of(&|e| e.max_price.unwrap()),
            pre_volume: of(&|e| e.pre_volume),
            pump_volume: of(&|e| e.pump_volume.unwrap()),
            pre_value: of(&|e| e.pre_value),
            pump_value: of(&|e| e.pump_value.unwrap()),
        }
    };
    vec![
        cell("dominant", "before"),
        cell("dominant", "after"),
        cell("other", "before"),
        cell("other", "after"),
        cell("all", "before"),
        cell("all", "after"),
    ]
}

fn channel_rows(clean: &[&EventSpec]) -> Vec<TruthChannel> {
    let total = clean.len();
    let mut rows: Vec<TruthChannel> = (0..CHANNELS.len())
        .filter_map(|ch| {
            let mine: Vec<&&EventSpec> = clean.iter().filter(|e| e.channel == ch).collect();
            if mine.is_empty() {
                return None;
            }
            let coins: BTreeSet<&str> = mine.iter().map(|e| e.coin).collect();
            Some(TruthChannel {
                code: CODES[ch].to_string(),
                pumps: mine.len(),
                share_pct: mine.len() as f64 / total as f64 * 100.0,
                distinct_coins: coins.len(),
                pumps_per_coin: mine.len() as f64 / coins.len() as f64,
            })
        })
        .collect();
    rows.sort_by(|a, b| b.pumps.cmp(&a.pumps).then(a.code.cmp(&b.code)));
    rows
}

fn coin_bins(counts: &BTreeMap<&str, u32>) -> Vec<TruthCoinBin> {
    const EDGES: [(&str, u32, Option<u32>); 6] = [
        ("1-10", 1, Some(10)),
        ("11-20", 11, Some(20)),
        ("21-30", 21, Some(30)),
        ("31-40", 31, Some(40)),
        ("41-50", 41, Some(50)),
        ("51+", 51, None),
    ];
    let total = counts.len();
    EDGES
        .iter()
        .map(|&(label, min, max)| {
            let coins = counts
                .values()
                .filter(|&&n| n >= min && max.map_or(true, |m| n <= m))
                .count();
            TruthCoinBin {
                label: label.to_string(),
                coins,
                share_pct: if total == 0 { 0.0 } else { coins as f64 / total as f64 * 100.0 },
            }
        })
        .collect()
}

fn scatter_rows(
    clean: &[&EventSpec],
    events: &[TruthEvent],
    counts: &BTreeMap<&str, u32>,
) -> Vec<TruthScatter> {
    // Coins where the dominant channel called a strict majority of pumps.
    let dominant_coins: BTreeSet<&str> = counts
        .iter()
        .filter(|(coin, total)| {
            let cpi = clean
                .iter()
                .filter(|e| e.coin == **coin && CODES[e.channel] == "CPI")
                .count() as u32;
            cpi * 2 > **total
        })
        .map(|(coin, _)| *coin)
        .collect();
    counts
        .iter()
        .map(|(coin, &pumps)| {
            let cpi = clean
                .iter()
                .filter(|e| e.coin == *coin && CODES[e.channel] == "CPI")
                .count();
            let day365: Vec<f64> = events
                .iter()
                .filter(|e| e.coin == *coin && !e.adjusted.is_empty())
                .filter_map(|e| e.adjusted_uncensored.get(365).copied())
                .collect();
            TruthScatter {
                coin: coin.to_string(),
                pumps,
                dominant_channel_share_pct: cpi as f64 / pumps as f64 * 100.0,
                dominant: dominant_coins.contains(coin),
                adjusted_index_day365_mean: mean_of(&day365),
            }
        })
        .collect()
}
