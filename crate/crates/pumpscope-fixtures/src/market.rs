//! Synthetic OHLCV: integer tick walks per traded pair, flat minute and
//! hourly bars around each pump with a five-minute spike at the call, and
//! the deliberate holes the pipeline must surface instead of papering over.
//!
//! All prices are integers at a fixed per-pair decimal scale, so files carry
//! exact decimal strings and every downstream float is a quotient of
//! integers — reproducible across platforms.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::Rng;

use crate::scenario::{quote_of, EventSpec, Fate, Scenario};
use crate::sub_rng;

pub const MINUTE_MS: i64 = 60_000;
pub const HOUR_MS: i64 = 3_600_000;
pub const DAY_MS: i64 = 86_400_000;

/// Spike applied to the five minute-bar highs after a call, in percent.
pub const PUMP_PEAKS: [i64; 5] = [40, 90, 65, 30, 15];

/// Top-ten coins of the market-cap table, in cap order.
pub const MARKET_COINS: [&str; 10] =
    ["BTC", "ETH", "USDT", "BNB", "XRP", "ADA", "DOGE", "MATIC", "SOL", "DOT"];

#[derive(Debug, Clone, Copy)]
pub struct Bar {
    pub open: i64,
    pub high: i64,
    pub low: i64,
    pub close: i64,
    pub volume: i64,
}

pub struct Series {
    pub scale: u32,
    pub listing: NaiveDate,
    pub daily: BTreeMap<NaiveDate, Bar>,
    /// Keyed by slot open time in ms.
    pub hourly: BTreeMap<i64, Bar>,
    pub minute: BTreeMap<i64, Bar>,
}

pub struct Failure {
    pub exchange: &'static str,
    pub pair: String,
    pub granularity: &'static str,
    pub from_ms: i64,
    pub to_ms: i64,
    pub fail_times: u32,
}

pub struct World {
    pub series: BTreeMap<(&'static str, String), Series>,
    pub failures: Vec<Failure>,
}

pub fn pair_of(event: &EventSpec) -> String {
    format!("{}/{}", event.coin, quote_of(event.exchange))
}

pub fn market_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 5, 20).unwrap()
}

pub fn ref_listing() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 6, 15).unwrap()
}

/// Reference-quoted market pairs carried per exchange. Binance quotes in
/// BTC (so its market series exercise conversion); SOL is deliberately not
/// listed on kucoin.
pub fn market_pairs(exchange: &str) -> Vec<String> {
    let bases: &[&str] = match exchange {
        "binance" => &["ETH", "BNB", "XRP", "ADA", "DOGE", "MATIC", "SOL", "DOT"],
        "kucoin" => &["BTC", "ETH", "BNB", "XRP", "ADA", "DOGE", "MATIC", "DOT"],
        "hotbit" => &["BTC", "ETH", "BNB", "XRP", "ADA", "DOGE", "MATIC", "SOL", "DOT"],
        _ => &[],
    };
    bases.iter().map(|b| format!("{b}/{}", quote_of(exchange))).collect()
}

pub fn scale_of(pair: &str) -> u32 {
    if pair == "BTC/USDT" {
        2
    } else if pair.ends_with("/BTC") {
        8
    } else {
        4
    }
}

pub fn tick_value(ticks: i64, scale: u32) -> f64 {
    ticks as f64 / 10f64.powi(scale as i32)
}

pub fn day_start_ms(day: NaiveDate) -> i64 {
    Utc.from_utc_datetime(&day.and_hms_opt(0, 0, 0).unwrap()).timestamp_millis()
}

pub fn floor_ms(at: DateTime<Utc>, step: i64) -> i64 {
    let ts = at.timestamp_millis();
    ts - ts.rem_euclid(step)
}

fn date_of_ms(ms: i64) -> NaiveDate {
    DateTime::<Utc>::from_timestamp_millis(ms).unwrap().date_naive()
}

/// Everything one pair needs generated, accumulated from the scenario.
struct Plan {
    scale: u32,
    listing: NaiveDate,
    pump_days: Vec<NaiveDate>,
    minute_windows: Vec<(i64, i64)>,
    /// Floored call minute of each pump on this pair.
    pump_minutes: Vec<i64>,
    hourly_windows: Vec<(i64, i64)>,
    with_hourly: bool,
    zero_volume_days: Vec<NaiveDate>,
    daily_holes: Vec<NaiveDate>,
    minute_holes: Vec<(i64, i64)>,
}

impl Plan {
    fn new(scale: u32, listing: NaiveDate) -> Self {
        Plan {
            scale,
            listing,
            pump_days: Vec::new(),
            minute_windows: Vec::new(),
            pump_minutes: Vec::new(),
            hourly_windows: Vec::new(),
            with_hourly: true,
            zero_volume_days: Vec::new(),
            daily_holes: Vec::new(),
            minute_holes: Vec::new(),
        }
    }
}

pub fn synthesize(s: &Scenario) -> World {
    let collection = crate::scenario::collection_date();
    let mut plans: BTreeMap<(&'static str, String), Plan> = BTreeMap::new();

    let ref_key = ("binance", "BTC/USDT".to_string());
    plans.insert(ref_key.clone(), Plan::new(2, ref_listing()));

    for event in s.events.iter().filter(|e| e.fate == Fate::Clean) {
        let key = (event.exchange, pair_of(event));
        let listing = draw_listing(s.seed, event.exchange, &key.1);
        let plan =
            plans.entry(key.clone()).or_insert_with(|| Plan::new(scale_of(&key.1), listing));
        let fm = floor_ms(event.at, MINUTE_MS);
        let fh = floor_ms(event.at, HOUR_MS);
        plan.pump_days.push(event.at.date_naive());
        plan.pump_minutes.push(fm);
        plan.minute_windows.push((fm - DAY_MS, fm + DAY_MS));
        plan.hourly_windows.push((fh - 7 * DAY_MS, fh + 7 * DAY_MS));
        if event.coin == "IVY" {
            // No trades during the call window: impact must fail loudly.
            plan.minute_holes.push((fm, fm + 5 * MINUTE_MS));
        }
        if event.exchange == "binance" {
            // The quote-conversion reference is fetched over the same
            // windows as the event itself.
            let rp = plans.get_mut(&ref_key).unwrap();
            rp.minute_windows.push((fm - DAY_MS, fm + DAY_MS));
            rp.hourly_windows.push((fh - 7 * DAY_MS, fh + 7 * DAY_MS));
        }
    }

    // Pair-level stories.
    for (key, plan) in plans.iter_mut() {
        if key.0 == "hotbit" && key.1 == "GRIT/USDT" {
            plan.with_hourly = false;
        }
        if key.0 == "kucoin" && key.1 == "EMBR/USDT" {
            let mut days = plan.pump_days.clone();
            days.sort_unstable();
            plan.daily_holes.push(days[1] + Duration::days(3));
        }
        if key.0 == "hotbit" && key.1 == "JOLT/USDT" {
            let day = plan.pump_days[0];
            plan.zero_volume_days = (1..=7).map(|d| day - Duration::days(d)).collect();
        }
    }

    for ex in crate::scenario::EXCHANGES {
        for pair in market_pairs(ex) {
            let key = (ex, pair.clone());
            plans.entry(key).or_insert_with(|| Plan::new(scale_of(&pair), market_start()));
        }
    }

    let mut series = BTreeMap::new();
    for (key, plan) in &plans {
        series.insert(key.clone(), emit(s.seed, key.0, &key.1, plan, collection));
    }

    let failures = build_failures(s, &series);
    World { series, failures }
}

fn draw_listing(seed: u64, exchange: &str, pair: &str) -> NaiveDate {
    let mut rng = sub_rng(seed, &format!("listing:{exchange}:{pair}"));
    NaiveDate::from_ymd_opt(2020, 8, 1).unwrap() + Duration::days(rng.gen_range(0..160i64))
}

fn emit(
    seed: u64,
    exchange: &str,
    pair: &str,
    plan: &Plan,
    collection: NaiveDate,
) -> Series {
    let mut rng = sub_rng(seed, &format!("walk:{exchange}:{pair}"));
    let start_ticks: i64 = match plan.scale {
        2 => rng.gen_range(1_500_000..4_500_000),
        8 => rng.gen_range(2_000..900_000),
        _ => rng.gen_range(400..60_000),
    };
    let mut close = start_ticks;
    let mut vol: i64 = rng.gen_range(2_000..20_000);

    // Full walk, before holes are punched: minute and hourly backgrounds
    // read from here so a daily hole stays a daily-tier story.
    let mut walk_close: BTreeMap<NaiveDate, i64> = BTreeMap::new();
    let mut walk_vol: BTreeMap<NaiveDate, i64> = BTreeMap::new();
    let mut day = plan.listing;
    while day <= collection {
        let step = rng.gen_range(-25..=25i64);
        close = (close * (1000 + step) / 1000).max(10);
        vol = (vol * (1000 + rng.gen_range(-80..=80i64)) / 1000).max(50);
        let (mut c, mut v) = (close, vol);
        if plan.pump_days.contains(&day) {
            c = c * (1030 + rng.gen_range(0..90i64)) / 1000;
            v *= 3 + rng.gen_range(0..8i64);
            close = c;
        }
        walk_close.insert(day, c);
        walk_vol.insert(day, v);
        day = day.succ_opt().unwrap();
    }
    for z in &plan.zero_volume_days {
        walk_vol.insert(*z, 0);
    }

    let mut daily: BTreeMap<NaiveDate, Bar> = BTreeMap::new();
    let mut prev: Option<i64> = None;
    for (&d, &c) in &walk_close {
        let open = prev.unwrap_or(c);
        prev = Some(c);
        if plan.daily_holes.contains(&d) {
            continue;
        }
        daily.insert(
            d,
            Bar { open, high: open.max(c), low: open.min(c), close: c, volume: walk_vol[&d] },
        );
    }

    // Backgrounds are flat at the day's walk close: a pure function of the
    // slot, so overlapping event windows emit identical bars.
    let mut minute: BTreeMap<i64, Bar> = BTreeMap::new();
    for &(from, to) in &plan.minute_windows {
        let mut t = from;
        while t < to {
            let c = walk_close[&date_of_ms(t)];
            let v = (t / MINUTE_MS) % 15 + 1;
            minute.insert(t, Bar { open: c, high: c, low: c, close: c, volume: v });
            t += MINUTE_MS;
        }
    }
    for &fm in &plan.pump_minutes {
        let c = walk_close[&date_of_ms(fm)];
        let mut pv = sub_rng(seed, &format!("pvol:{exchange}:{pair}:{fm}"));
        for (i, peak) in PUMP_PEAKS.iter().enumerate() {
            let t = fm + i as i64 * MINUTE_MS;
            let bar = Bar {
                open: c,
                high: c * (100 + peak) / 100,
                low: c,
                close: c,
                volume: pv.gen_range(100..5_000i64),
            };
            minute.insert(t, bar);
        }
    }
    for &(from, to) in &plan.minute_holes {
        let mut t = from;
        while t < to {
            minute.remove(&t);
            t += MINUTE_MS;
        }
    }

    let mut hourly: BTreeMap<i64, Bar> = BTreeMap::new();
    if plan.with_hourly {
        for &(from, to) in &plan.hourly_windows {
            let mut t = from;
            while t < to {
                let d = date_of_ms(t);
                let c = walk_close[&d];
                hourly.insert(
                    t,
                    Bar { open: c, high: c, low: c, close: c, volume: walk_vol[&d] / 24 },
                );
                t += HOUR_MS;
            }
        }
    }

    Series { scale: plan.scale, listing: plan.listing, daily, hourly, minute }
}

/// Two transient faults, both recovered by client-side retries: the very
/// first pump's minute window, and one market daily fetch. Neither may leave
/// a trace beyond the request log.
fn build_failures(s: &Scenario, series: &BTreeMap<(&'static str, String), Series>) -> Vec<Failure> {
    let first = s.clean().min_by_key(|e| e.at).unwrap();
    let fm = floor_ms(first.at, MINUTE_MS);
    let mut failures = vec![Failure {
        exchange: first.exchange,
        pair: pair_of(first),
        granularity: "1m",
        from_ms: fm - DAY_MS,
        to_ms: fm + DAY_MS,
        fail_times: 2,
    }];
    debug_assert!(series.contains_key(&("hotbit", "ETH/USDT".to_string())));
    failures.push(Failure {
        exchange: "hotbit",
        pair: "ETH/USDT".to_string(),
        granularity: "1d",
        from_ms: day_start_ms(NaiveDate::from_ymd_opt(2021, 5, 1).unwrap()),
        to_ms: day_start_ms(NaiveDate::from_ymd_opt(2021, 7, 1).unwrap()),
        fail_times: 2,
    });
    failures
}
