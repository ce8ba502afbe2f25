//! Before/after event-window analysis around a split day (the FTX collapse in
//! the shipped configuration): count and time proportions, per-exchange
//! shares, per-week counts around the split, and group means of the window
//! metrics.

use chrono::{DateTime, Duration, Utc};

use super::stats;
use crate::events::EventTable;

const WEEK: Duration = Duration::weeks(1);

/// `part` as a percentage of `whole`; 0 when the denominator is empty.
fn share(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64 * 100.0
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExchangeSplit {
    pub exchange: String,
    pub before: usize,
    pub after: usize,
    /// Share of this exchange's own pumps falling before the split, in
    /// percent; before + after shares sum to 100 per exchange.
    pub share_before_pct: f64,
    pub share_after_pct: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WeekCount {
    /// Whole weeks relative to the split: −1 is the week just before, 0 the
    /// week starting at the split.
    pub week: i32,
    pub start: DateTime<Utc>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EventWindowReport {
    pub split_at: DateTime<Utc>,
    pub total: usize,
    pub before: usize,
    pub after: usize,
    pub share_before_pct: f64,
    pub share_after_pct: f64,
    /// Share of the table's time span (first to last event) on each side.
    pub time_share_before_pct: f64,
    pub time_share_after_pct: f64,
    pub pumps_per_week_before: f64,
    pub pumps_per_week_after: f64,
    pub per_exchange: Vec<ExchangeSplit>,
    pub weekly: Vec<WeekCount>,
    pub weekly_mean_before: Option<f64>,
    pub weekly_mean_after: Option<f64>,
}

/// Splits the table at `split_at` (events strictly earlier count as before)
/// and reports count shares, time shares, per-week rates over each side's
/// span, per-exchange shares, and per-week counts for ±`half_window_weeks`.
pub fn event_window_analysis(
    table: &EventTable,
    split_at: DateTime<Utc>,
    half_window_weeks: u32,
) -> EventWindowReport {
    let events = table.events();
    let total = events.len();
    let before = events.iter().filter(|e| e.announced_at < split_at).count();
    let after = total - before;

    let (first, last) = match (events.first(), events.last()) {
        (Some(f), Some(l)) => (f.announced_at, l.announced_at),
        _ => (split_at, split_at),
    };
    let span = (last - first).num_seconds().max(0) as f64;
    let before_span = (split_at.min(last) - first).num_seconds().max(0) as f64;
    let after_span = (last - split_at.max(first)).num_seconds().max(0) as f64;
    let (time_before, time_after) = if span > 0.0 {
        (before_span / span * 100.0, after_span / span * 100.0)
    } else {
        (0.0, 0.0)
    };

    let weeks_before = before_span / WEEK.num_seconds() as f64;
    let weeks_after = after_span / WEEK.num_seconds() as f64;
    let rate = |count: usize, weeks: f64| if weeks > 0.0 { count as f64 / weeks } else { 0.0 };

    let mut exchanges: Vec<String> = events.iter().map(|e| e.exchange.clone()).collect();
    exchanges.sort();
    exchanges.dedup();
    let per_exchange = exchanges
        .into_iter()
        .map(|exchange| {
            let b = events
                .iter()
                .filter(|e| e.exchange == exchange && e.announced_at < split_at)
                .count();
            let a = events
                .iter()
                .filter(|e| e.exchange == exchange && e.announced_at >= split_at)
                .count();
            ExchangeSplit {
                exchange,
                before: b,
                after: a,
                share_before_pct: share(b, b + a),
                share_after_pct: share(a, b + a),
            }
        })
        .collect();

    let mut weekly = Vec::new();
    for week in -(half_window_weeks as i32)..(half_window_weeks as i32) {
        let start = split_at + WEEK * week;
        let end = start + WEEK;
        let count =
            events.iter().filter(|e| e.announced_at >= start && e.announced_at < end).count();
        weekly.push(WeekCount { week, start, count });
    }
    let before_counts: Vec<f64> =
        weekly.iter().filter(|w| w.week < 0).map(|w| w.count as f64).collect();
    let after_counts: Vec<f64> =
        weekly.iter().filter(|w| w.week >= 0).map(|w| w.count as f64).collect();

    EventWindowReport {
        split_at,
        total,
        before,
        after,
        share_before_pct: share(before, total),
        share_after_pct: share(after, total),
        time_share_before_pct: time_before,
        time_share_after_pct: time_after,
        pumps_per_week_before: rate(before, weeks_before),
        pumps_per_week_after: rate(after, weeks_after),
        per_exchange,
        weekly,
        weekly_mean_before: stats::mean(&before_counts),
        weekly_mean_after: stats::mean(&after_counts),
    }
}

/// One event's window metrics, for before/after group means.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EventPerf {
    pub event_id: String,
    pub coin: String,
    pub exchange: String,
    pub channel_code: String,
    pub announced_at: DateTime<Utc>,
    pub delta_p: f64,
    pub delta_v: Option<f64>,
    pub pre_price: f64,
    pub max_price: f64,
    pub pre_volume: f64,
    pub pump_volume: f64,
    pub pre_value: f64,
    pub pump_value: f64,
}

/// Mean window metrics for one (group, period) cell. `delta_v` averages only
/// the events where it is defined; `n` counts every event in the cell.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GroupMeans {
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

/// Before/after means of the window metrics, split into the organizer group
/// (`dominant_code`, e.g. CPI) vs the rest, plus combined rows.
pub fn before_after_means(
    perfs: &[EventPerf],
    split_at: DateTime<Utc>,
    dominant_code: &str,
) -> Vec<GroupMeans> {
    let cell = |group: &str, period: &str| -> GroupMeans {
        let selected: Vec<&EventPerf> = perfs
            .iter()
            .filter(|p| match group {
                "all" => true,
                "other" => p.channel_code != dominant_code,
                _ => p.channel_code == dominant_code,
            })
            .filter(|p| {
                if period == "before" {
                    p.announced_at < split_at
                } else {
                    p.announced_at >= split_at
                }
            })
            .collect();
        let of = |f: &dyn Fn(&EventPerf) -> f64| -> Option<f64> {
            stats::mean(&selected.iter().map(|p| f(p)).collect::<Vec<_>>())
        };
        let delta_vs: Vec<f64> = selected.iter().filter_map(|p| p.delta_v).collect();
        GroupMeans {
            group: group.to_string(),
            period: period.to_string(),
            n: selected.len(),
            delta_p: of(&|p| p.delta_p),
            delta_v: stats::mean(&delta_vs),
            pre_price: of(&|p| p.pre_price),
            max_price: of(&|p| p.max_price),
            pre_volume: of(&|p| p.pre_volume),
            pump_volume: of(&|p| p.pump_volume),
            pre_value: of(&|p| p.pre_value),
            pump_value: of(&|p| p.pump_value),
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{ChannelCode, ChannelRef, EventTable, PumpEvent};
    use chrono::TimeZone;

    fn channel() -> ChannelRef {
        ChannelRef { name: "Alpha Pumps".into(), code: ChannelCode::new("AP").unwrap() }
    }

    fn table(times: Vec<(DateTime<Utc>, &str)>) -> EventTable {
        let events = times
            .into_iter()
            .enumerate()
            .map(|(i, (at, exchange))| {
                PumpEvent::new(format!("C{i:05}"), exchange, channel(), at, "USDT").unwrap()
            })
            .collect();
        EventTable::new(events, vec![]).unwrap()
    }

    fn split() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2022, 11, 11, 0, 0, 0).unwrap()
    }

    #[test]
    fn count_shares_match_the_published_split() {
        let mut times = Vec::new();
        for i in 0..8725 {
            times.push((split() - Duration::minutes(i + 1), "binance"));
        }
        for i in 0..466 {
            times.push((split() + Duration::minutes(i), "binance"));
        }
        let report = event_window_analysis(&table(times), split(), 5);
        assert_eq!((report.before, report.after), (8725, 466));
        assert_eq!(report.before + report.after, report.total);
        assert!((report.share_before_pct - 94.93).abs() < 0.005);
        assert!((report.share_after_pct - 5.07).abs() < 0.005);
        assert!((report.share_before_pct + report.share_after_pct - 100.0).abs() < 0.01);
    }

    #[test]
    fn split_before_the_first_event_puts_everything_after() {
        let times =
            (0..10).map(|i| (split() + Duration::days(i + 1), "binance")).collect::<Vec<_>>();
        let report = event_window_analysis(&table(times), split(), 5);
        assert_eq!((report.share_before_pct, report.share_after_pct), (0.0, 100.0));
        assert_eq!(report.time_share_before_pct, 0.0);
        assert_eq!(report.time_share_after_pct, 100.0);
        assert_eq!(report.pumps_per_week_before, 0.0);
    }

    #[test]
    fn weekly_rates_are_count_over_weeks() {
        // 3 events in each of the 5 weeks on each side; the span pins the
        // first event exactly 5 weeks before the split and the last exactly
        // 5 weeks after (minus nothing — placed on the boundary).
        let mut times = vec![(split() - Duration::weeks(5), "binance")];
        for k in 0..5i64 {
            times.push((split() - Duration::weeks(k) - Duration::days(1), "binance"));
            times.push((split() - Duration::weeks(k) - Duration::days(2), "kucoin"));
        }
        // 11 before so far (anchor + 10); fill to 15 inside the last week.
        for h in 1..=4i64 {
            times.push((split() - Duration::weeks(4) - Duration::hours(h), "binance"));
        }
        for k in 0..5i64 {
            times.push((split() + Duration::weeks(k) + Duration::days(1), "binance"));
            times.push((split() + Duration::weeks(k) + Duration::days(2), "kucoin"));
        }
        for h in 1..=4i64 {
            times.push((split() + Duration::weeks(4) + Duration::hours(h), "binance"));
        }
        times.push((split() + Duration::weeks(5), "binance"));
        let t = table(times);
        let report = event_window_analysis(&t, split(), 5);
        assert_eq!((report.before, report.after), (15, 15));
        assert_eq!(report.pumps_per_week_before, 3.0);
        assert_eq!(report.pumps_per_week_after, 3.0);

        // Weekly buckets match a direct filter.
        for w in &report.weekly {
            let start = split() + Duration::weeks(w.week.into());
            let expect = t
                .events()
                .iter()
                .filter(|e| e.announced_at >= start && e.announced_at < start + Duration::weeks(1))
                .count();
            assert_eq!(w.count, expect, "week {}", w.week);
        }
        assert_eq!(report.weekly.len(), 10);
    }

    #[test]
    fn exchange_shares_sum_to_100_per_exchange() {
        let mut times = Vec::new();
        for i in 0..40 {
            times.push((split() - Duration::hours(i + 1), if i % 4 == 0 { "kucoin" } else { "binance" }));
        }
        for i in 0..10 {
            times.push((split() + Duration::hours(i), if i % 2 == 0 { "hotbit" } else { "binance" }));
        }
        let report = event_window_analysis(&table(times), split(), 5);
        for x in &report.per_exchange {
            assert!(
                (x.share_before_pct + x.share_after_pct - 100.0).abs() < 1e-9,
                "{}: {} + {}",
                x.exchange,
                x.share_before_pct,
                x.share_after_pct
            );
        }
        // binance 30/5, hotbit 0/5, kucoin 10/0, alphabetical.
        let shares: Vec<(&str, f64)> = report
            .per_exchange
            .iter()
            .map(|x| (x.exchange.as_str(), x.share_before_pct))
            .collect();
        assert_eq!(shares[0].0, "binance");
        assert!((shares[0].1 - 3000.0 / 35.0).abs() < 1e-9);
        assert_eq!(shares[1], ("hotbit", 0.0));
        assert_eq!(shares[2], ("kucoin", 100.0));
        let b: usize = report.per_exchange.iter().map(|x| x.before).sum();
        assert_eq!(b, report.before);
    }

    fn perf(code: &str, at: DateTime<Utc>, delta_p: f64, delta_v: Option<f64>) -> EventPerf {
        EventPerf {
            event_id: format!("{code}-{at}"),
            coin: "ABC".into(),
            exchange: "binance".into(),
            channel_code: code.into(),
            announced_at: at,
            delta_p,
            delta_v,
            pre_price: 1.0,
            max_price: 2.0,
            pre_volume: 10.0,
            pump_volume: 30.0,
            pre_value: 10.0,
            pump_value: 60.0,
        }
    }

    #[test]
    fn group_means_split_by_organizer_and_period() {
        let before = split() - Duration::days(1);
        let after = split() + Duration::days(1);
        let perfs = vec![
            perf("CPI", before, 10.0, Some(50.0)),
            perf("CPI", before, 20.0, None),
            perf("CPI", after, 40.0, Some(10.0)),
            perf("HPA", before, 60.0, Some(30.0)),
        ];
        let rows = before_after_means(&perfs, split(), "CPI");
        let get = |group: &str, period: &str| {
            rows.iter().find(|r| r.group == group && r.period == period).unwrap().clone()
        };
        let cpi_before = get("dominant", "before");
        assert_eq!(cpi_before.n, 2);
        assert_eq!(cpi_before.delta_p, Some(15.0));
        // The undefined ΔV is excluded from the mean but the event still counts.
        assert_eq!(cpi_before.delta_v, Some(50.0));
        assert_eq!(get("dominant", "after").delta_p, Some(40.0));
        assert_eq!(get("other", "before").delta_p, Some(60.0));
        assert_eq!(get("other", "after").n, 0);
        assert_eq!(get("other", "after").delta_p, None);
        let all_before = get("all", "before");
        assert_eq!(all_before.n, 3);
        assert_eq!(all_before.delta_p, Some(30.0));
    }
}
