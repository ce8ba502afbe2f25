//! Scenario synthesis: which coins get pumped when, by which channel, on
//! which exchange, and the raw message-log lines announcing each pump.
//!
//! The scenario bakes in one instance of every edge the pipeline must
//! survive: a same-day double pump (censored to an empty series), a pump
//! with no minute bars in its window, a daily-history hole, a pair with no
//! hourly history at all, a zero-volume baseline, announcements for an
//! excluded exchange, and an announcement for a coin the named exchange
//! never listed.

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::Rng;

use crate::sub_rng;

pub const EXCHANGES: [&str; 3] = ["binance", "kucoin", "hotbit"];

/// (display name, default exchange). Codes are left blank in the registry so
/// the reader derives them from initials: CPI, HPA, MSS, WW.
pub const CHANNELS: [(&str, &str); 4] = [
    ("Crypto Pump Island", "binance"),
    ("Hyper Pump Alerts", "kucoin"),
    ("Moon Shot Signals", "hotbit"),
    ("Whale Watchers", ""),
];

pub const CODES: [&str; 4] = ["CPI", "HPA", "MSS", "WW"];

/// (coin, pumps before the split, pumps after the split).
const COIN_PLAN: [(&str, usize, usize); 10] = [
    ("AURA", 18, 2),
    ("BOLT", 10, 2),
    ("CRNK", 7, 1),
    ("DUSK", 6, 0),
    ("EMBR", 4, 0),
    ("FLUX", 3, 0),
    ("GRIT", 2, 0),
    ("HALO", 1, 0),
    ("IVY", 1, 0),
    ("JOLT", 1, 0),
];

pub fn split_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 11, 11).unwrap()
}

pub fn collection_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 3, 7).unwrap()
}

pub fn listing_floor() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 6, 1).unwrap()
}

pub fn schedule_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 6, 1).unwrap()
}

pub fn quote_of(exchange: &str) -> &'static str {
    if exchange == "binance" {
        "BTC"
    } else {
        "USDT"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    Clean,
    ExcludedExchange,
    Delisted,
}

#[derive(Debug, Clone)]
pub struct EventSpec {
    pub coin: &'static str,
    pub exchange: &'static str,
    /// Index into [`CHANNELS`].
    pub channel: usize,
    pub at: DateTime<Utc>,
    pub fate: Fate,
}

#[derive(Debug, Clone)]
pub struct Message {
    pub channel: usize,
    pub at: DateTime<Utc>,
    pub text: String,
}

pub struct Scenario {
    pub seed: u64,
    /// All announced pumps, chronological; one per merged event.
    pub events: Vec<EventSpec>,
    pub messages: Vec<Message>,
    pub matched_messages: usize,
    pub noise_messages: usize,
}

impl Scenario {
    pub fn clean(&self) -> impl Iterator<Item = &EventSpec> {
        self.events.iter().filter(|e| e.fate == Fate::Clean)
    }
}

fn at(day: NaiveDate, h: u32, m: u32, s: u32) -> DateTime<Utc> {
    Utc.from_utc_datetime(&day.and_hms_opt(h, m, s).unwrap())
}

/// Announcement without an exchange hint; relies on the channel default.
fn plain_text(coin: &str) -> String {
    format!("Hello pumpers! The coin we have picked to pump today is #{coin}. Get ready!")
}

/// Announcement naming the exchange; overrides the channel default.
fn hinted_text(exchange: &str, coin: &str) -> String {
    let mut cap = String::new();
    let mut chars = exchange.chars();
    if let Some(first) = chars.next() {
        cap.extend(first.to_uppercase());
        cap.push_str(chars.as_str());
    }
    format!("Next pump on {cap}: #{coin} — don't miss it!")
}

const NOISE_LINES: [&str; 8] = [
    "great results yesterday team, congrats to everyone who joined",
    "welcome to all the new members, read the pinned rules first",
    "remember to set your own limits and never chase a candle",
    "voting for the next target opens tomorrow at noon",
    "server maintenance tonight, signals resume in the morning",
    "weekly recap is up, check the stats post above",
    "stay tuned, the next signal drops later this week",
    "admins will never message you first, beware of scammers",
];

fn pump_days(seed: u64, coin: &str, before: usize, after: usize) -> Vec<NaiveDate> {
    let mut rng = sub_rng(seed, &format!("days:{coin}"));
    let start = schedule_start();
    let mut offsets: Vec<i64> = Vec::with_capacity(before);
    while offsets.len() < before {
        let cand = rng.gen_range(0..=525i64);
        if offsets.iter().all(|&d| (d - cand).abs() >= 5) {
            offsets.push(cand);
        }
    }
    offsets.sort_unstable();
    let mut days: Vec<NaiveDate> = offsets.iter().map(|&d| start + Duration::days(d)).collect();
    let fixed_after: &[(i32, u32, u32)] = match coin {
        "AURA" => &[(2022, 11, 25), (2023, 1, 12)],
        "BOLT" => &[(2022, 12, 18), (2023, 1, 29)],
        "CRNK" => &[(2023, 2, 8)],
        _ => &[],
    };
    assert_eq!(fixed_after.len(), after, "{coin}: after-split plan mismatch");
    days.extend(fixed_after.iter().map(|&(y, m, d)| NaiveDate::from_ymd_opt(y, m, d).unwrap()));
    days
}

/// Channel and exchange for one scheduled pump. Forced-story coins pin both;
/// everything else draws a channel by weight and occasionally overrides the
/// channel's home exchange via an explicit hint in the message.
fn assign(seed: u64, coin: &'static str, idx: usize) -> (usize, &'static str) {
    match coin {
        "EMBR" | "IVY" => return (1, "kucoin"),
        "GRIT" | "JOLT" => return (2, "hotbit"),
        _ => {}
    }
    let mut rng = sub_rng(seed, &format!("chan:{coin}:{idx}"));
    let roll = rng.gen_range(0..100u32);
    let channel = if roll < 55 {
        0
    } else if roll < 85 {
        1
    } else {
        2
    };
    let mut exchange = CHANNELS[channel].1;
    if rng.gen_range(0..100u32) < 12 {
        let others: Vec<&'static str> =
            EXCHANGES.iter().copied().filter(|e| *e != exchange).collect();
        exchange = others[rng.gen_range(0..others.len())];
    }
    (channel, exchange)
}

pub fn build(seed: u64) -> Scenario {
    let mut events: Vec<EventSpec> = Vec::new();

    for (coin, before, after) in COIN_PLAN {
        let days = pump_days(seed, coin, before, after);
        for (idx, day) in days.iter().enumerate() {
            let mut time_rng = sub_rng(seed, &format!("time:{coin}:{idx}"));
            let h = time_rng.gen_range(9..=20u32);
            let m = time_rng.gen_range(0..60u32);
            let s = time_rng.gen_range(0..60u32);
            let (channel, exchange) = assign(seed, coin, idx);
            events.push(EventSpec { coin, exchange, channel, at: at(*day, h, m, s), fate: Fate::Clean });
        }
    }

    // Same-day double: a second AURA pump two hours after its third, called
    // by a different channel on a different exchange. The earlier pump is
    // censored at day offset zero and drops out of the index cohort.
    let third = {
        let mut aura: Vec<&EventSpec> = events.iter().filter(|e| e.coin == "AURA").collect();
        aura.sort_by_key(|e| e.at);
        aura[2].clone()
    };
    let double_exchange = if third.exchange == "kucoin" { "hotbit" } else { "kucoin" };
    events.push(EventSpec {
        coin: "AURA",
        exchange: double_exchange,
        channel: 2,
        at: third.at + Duration::hours(2),
        fate: Fate::Clean,
    });

    // Calls routed to an exchange the run excludes outright.
    events.push(EventSpec {
        coin: "FLUX",
        exchange: "yobit",
        channel: 2,
        at: at(NaiveDate::from_ymd_opt(2021, 9, 10).unwrap(), 14, 0, 0),
        fate: Fate::ExcludedExchange,
    });
    events.push(EventSpec {
        coin: "HALO",
        exchange: "yobit",
        channel: 2,
        at: at(NaiveDate::from_ymd_opt(2021, 9, 24).unwrap(), 15, 30, 0),
        fate: Fate::ExcludedExchange,
    });
    // A coin the named exchange never listed.
    events.push(EventSpec {
        coin: "DLST",
        exchange: "kucoin",
        channel: 1,
        at: at(NaiveDate::from_ymd_opt(2021, 10, 5).unwrap(), 12, 0, 0),
        fate: Fate::Delisted,
    });

    events.sort_by_key(|e| e.at);

    let mut messages: Vec<Message> = Vec::new();
    let mut matched = 0usize;
    let mut clean_idx = 0usize;
    for event in &events {
        let text = if event.exchange != CHANNELS[event.channel].1 {
            hinted_text(event.exchange, event.coin)
        } else {
            plain_text(event.coin)
        };
        messages.push(Message { channel: event.channel, at: event.at, text });
        matched += 1;
        if event.fate == Fate::Clean {
            if clean_idx % 3 == 0 {
                // A second channel echoes the call minutes later, naming the
                // exchange; dedup folds it into the original event.
                let mut rng = sub_rng(seed, &format!("echo:{}:{}", event.coin, event.at.timestamp()));
                let offset = Duration::minutes(rng.gen_range(3..=11i64));
                messages.push(Message {
                    channel: (event.channel + 1) % 3,
                    at: event.at + offset,
                    text: hinted_text(event.exchange, event.coin),
                });
                matched += 1;
            }
            clean_idx += 1;
        }
    }

    // One match from a channel with no default exchange and no hint: counted
    // as matched but dropped before the event table.
    messages.push(Message {
        channel: 3,
        at: at(NaiveDate::from_ymd_opt(2021, 7, 15).unwrap(), 10, 0, 0),
        text: plain_text("ORCA"),
    });
    matched += 1;

    let mut noise_rng = sub_rng(seed, "noise");
    let noise = 24usize;
    for i in 0..noise {
        let day = schedule_start() + Duration::days(noise_rng.gen_range(0..630i64));
        let h = noise_rng.gen_range(7..=22u32);
        let m = noise_rng.gen_range(0..60u32);
        messages.push(Message {
            channel: i % CHANNELS.len(),
            at: at(day, h, m, 17),
            text: NOISE_LINES[i % NOISE_LINES.len()].to_string(),
        });
    }

    let scenario =
        Scenario { seed, events, messages, matched_messages: matched, noise_messages: noise };
    check_invariants(&scenario);
    scenario
}

fn check_invariants(s: &Scenario) {
    let clean: Vec<&EventSpec> = s.clean().collect();
    assert_eq!(s.events.len(), 62, "merged event count drifted");
    assert_eq!(clean.len(), 59, "clean event count drifted");
    for ex in EXCHANGES {
        assert!(clean.iter().any(|e| e.exchange == ex), "no clean event on {ex}");
    }
    for ch in 0..3 {
        assert!(clean.iter().any(|e| e.channel == ch), "no clean event for {}", CODES[ch]);
    }
    // Exact-duplicate announcements would be rejected by the event table.
    let mut keys: Vec<(&str, &str, DateTime<Utc>)> =
        s.events.iter().map(|e| (e.coin, e.exchange, e.at)).collect();
    keys.sort_unstable();
    keys.dedup();
    assert_eq!(keys.len(), s.events.len(), "duplicate (coin, exchange, time)");
}
