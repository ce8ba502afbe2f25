//! Pump-event extraction: parse announcements out of channel message logs,
//! assign channel codes, merge cross-channel duplicates, and clean the event
//! table (delisted coins, excluded exchanges).

pub mod io;
pub mod patterns;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::Pair;

pub use io::{
    read_events_csv, read_message_log, read_registry, write_events_csv, write_removals_csv,
    ChannelEntry, ChannelRegistry,
};
pub use patterns::{Announcement, PatternSet};

#[derive(Debug, Error)]
pub enum EventError {
    #[error("channel code `{0}`: must be 2-4 uppercase letters or digits")]
    BadCode(String),
    #[error("channel `{name}`: initials give `{got}`; add an explicit code to the registry")]
    NeedOverride { name: String, got: String },
    #[error("channel code `{code}` assigned to both `{first}` and `{second}`")]
    CodeCollision { code: String, first: String, second: String },
    #[error("coin `{0}`: must be nonempty uppercase alphanumeric")]
    BadCoin(String),
    #[error("pattern `{name}`: {detail}")]
    BadPattern { name: String, detail: String },
    #[error("duplicate event ({coin}, {exchange}, {announced_at}) after merge")]
    DuplicateEvent { coin: String, exchange: String, announced_at: DateTime<Utc> },
    #[error("exchange `{0}` has no listings and is not excluded; cleaning is ambiguous")]
    AmbiguousExchange(String),
    #[error("channel `{0}` not in registry")]
    UnknownChannel(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: row {row}, column `{column}`: {detail}")]
    BadRow { path: PathBuf, row: u64, column: String, detail: String },
}

/// A channel with its short code, e.g. ("Crypto Pump Island", CPI).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct ChannelRef {
    pub name: String,
    pub code: ChannelCode,
}

/// 2–4 uppercase letters or digits, unique per registry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ChannelCode(String);

impl ChannelCode {
    pub fn new(code: impl Into<String>) -> Result<Self, EventError> {
        let code = code.into();
        let ok = (2..=4).contains(&code.len())
            && code.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit());
        if ok {
            Ok(Self(code))
        } else {
            Err(EventError::BadCode(code))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ChannelCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<ChannelCode> for String {
    fn from(c: ChannelCode) -> String {
        c.0
    }
}

impl TryFrom<String> for ChannelCode {
    type Error = EventError;

    fn try_from(code: String) -> Result<Self, Self::Error> {
        Self::new(code)
    }
}

/// Derives a channel code from the uppercased initials of the name's words,
/// truncated to four characters. Names whose initials come up short — or whose
/// natural code differs, like "Binance 24/7" → BP2 — need an explicit entry in
/// the overrides map.
pub fn derive_channel_code(
    name: &str,
    overrides: &BTreeMap<String, String>,
) -> Result<ChannelCode, EventError> {
    if let Some(code) = overrides.get(name) {
        return ChannelCode::new(code.clone());
    }
    let initials: String = name
        .split_whitespace()
        .filter_map(|word| word.chars().find(|c| c.is_ascii_alphanumeric()))
        .map(|c| c.to_ascii_uppercase())
        .take(4)
        .collect();
    if initials.len() < 2 {
        return Err(EventError::NeedOverride { name: name.to_string(), got: initials });
    }
    ChannelCode::new(initials)
}

/// One log line: who posted what, when. `text` is the plain message body, or
/// the pre-extracted text of an image announcement.
#[derive(Debug, Clone)]
pub struct RawMessage {
    pub channel: ChannelRef,
    pub timestamp: DateTime<Utc>,
    pub text: String,
}

/// One announced pump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PumpEvent {
    /// `CODE-YYYYMMDDTHHMMSSZ-COIN-exchange`; unique within a dataset.
    pub id: String,
    pub coin: String,
    pub exchange: String,
    pub channel: ChannelRef,
    pub announced_at: DateTime<Utc>,
    pub pair: Pair,
}

impl PumpEvent {
    pub fn new(
        coin: impl Into<String>,
        exchange: impl Into<String>,
        channel: ChannelRef,
        announced_at: DateTime<Utc>,
        quote: &str,
    ) -> Result<Self, EventError> {
        let coin = coin.into();
        let exchange = exchange.into();
        if coin.is_empty() || !coin.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit()) {
            return Err(EventError::BadCoin(coin));
        }
        let id = format!(
            "{}-{}-{}-{}",
            channel.code,
            announced_at.format("%Y%m%dT%H%M%SZ"),
            coin,
            exchange
        );
        let pair = Pair::new(coin.clone(), quote);
        Ok(Self { id, coin, exchange, channel, announced_at, pair })
    }
}

/// The merged main table: events sorted by announcement time, with no
/// (coin, exchange, announced_at) duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventTable {
    events: Vec<PumpEvent>,
    pub provenance: Vec<String>,
}

impl EventTable {
    pub fn new(mut events: Vec<PumpEvent>, provenance: Vec<String>) -> Result<Self, EventError> {
        events.sort_by(|a, b| {
            (a.announced_at, &a.coin, &a.exchange, &a.channel.code).cmp(&(
                b.announced_at,
                &b.coin,
                &b.exchange,
                &b.channel.code,
            ))
        });
        for pair in events.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.coin == b.coin && a.exchange == b.exchange && a.announced_at == b.announced_at {
                return Err(EventError::DuplicateEvent {
                    coin: b.coin.clone(),
                    exchange: b.exchange.clone(),
                    announced_at: b.announced_at,
                });
            }
        }
        Ok(Self { events, provenance })
    }

    pub fn events(&self) -> &[PumpEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Collapses cross-channel copies: events for the same (coin, exchange) whose
/// consecutive announcement times are within `window` form one cluster,
/// attributed to the earliest-posting channel (ties broken by channel code).
/// Merging a merged table is a no-op.
pub fn merge_events(
    raw: Vec<PumpEvent>,
    window: Duration,
    provenance: Vec<String>,
) -> EventTable {
    let mut groups: BTreeMap<(String, String), Vec<PumpEvent>> = BTreeMap::new();
    for e in raw {
        groups.entry((e.coin.clone(), e.exchange.clone())).or_default().push(e);
    }
    let mut representatives = Vec::new();
    for (_, mut group) in groups {
        group.sort_by(|a, b| {
            (a.announced_at, &a.channel.code).cmp(&(b.announced_at, &b.channel.code))
        });
        let mut iter = group.into_iter();
        let mut rep = iter.next().expect("group has at least one event");
        let mut last_time = rep.announced_at;
        for e in iter {
            if e.announced_at - last_time <= window {
                // Same cluster; the chain may stretch past the window in total.
                last_time = e.announced_at;
            } else {
                representatives.push(rep);
                last_time = e.announced_at;
                rep = e;
            }
        }
        representatives.push(rep);
    }
    EventTable::new(representatives, provenance)
        .expect("cluster representatives are separated by more than the window")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalReason {
    /// Coin no longer listed on the event's exchange at collection time.
    Delisted,
    /// Whole exchange excluded from the study.
    ExcludedExchange,
}

impl RemovalReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RemovalReason::Delisted => "delisted",
            RemovalReason::ExcludedExchange => "excluded-exchange",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Removal {
    pub event: PumpEvent,
    pub reason: RemovalReason,
}

/// Drops events on excluded exchanges and events whose coin is no longer
/// listed. Every exchange in the table must either carry a listing set or be
/// excluded — anything else would make the cleaning rule ambiguous.
pub fn clean_events(
    table: &EventTable,
    listings: &BTreeMap<String, BTreeSet<String>>,
    excluded: &BTreeSet<String>,
) -> Result<(EventTable, Vec<Removal>), EventError> {
    let mut kept = Vec::new();
    let mut removals = Vec::new();
    for e in table.events() {
        if excluded.contains(&e.exchange) {
            removals.push(Removal { event: e.clone(), reason: RemovalReason::ExcludedExchange });
            continue;
        }
        let Some(listed) = listings.get(&e.exchange) else {
            return Err(EventError::AmbiguousExchange(e.exchange.clone()));
        };
        if listed.contains(&e.coin) {
            kept.push(e.clone());
        } else {
            removals.push(Removal { event: e.clone(), reason: RemovalReason::Delisted });
        }
    }
    let table = EventTable::new(kept, table.provenance.clone())
        .expect("a subset of a valid table stays valid");
    Ok((table, removals))
}

/// Per-channel share of the table: pump count, percentage, and pumps per
/// distinct coin. Sorted by count descending, then code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStat {
    pub code: ChannelCode,
    pub name: String,
    pub pumps: usize,
    pub share_pct: f64,
    pub distinct_coins: usize,
    pub pumps_per_coin: f64,
}

pub fn channel_stats(table: &EventTable) -> Vec<ChannelStat> {
    let total = table.len();
    let mut per_channel: BTreeMap<&ChannelCode, (&ChannelRef, usize, BTreeSet<&str>)> =
        BTreeMap::new();
    for e in table.events() {
        let entry =
            per_channel.entry(&e.channel.code).or_insert((&e.channel, 0, BTreeSet::new()));
        entry.1 += 1;
        entry.2.insert(e.coin.as_str());
    }
    let mut stats: Vec<ChannelStat> = per_channel
        .into_values()
        .map(|(channel, pumps, coins)| ChannelStat {
            code: channel.code.clone(),
            name: channel.name.clone(),
            pumps,
            share_pct: 100.0 * pumps as f64 / total as f64,
            distinct_coins: coins.len(),
            pumps_per_coin: pumps as f64 / coins.len() as f64,
        })
        .collect();
    stats.sort_by(|a, b| b.pumps.cmp(&a.pumps).then_with(|| a.code.cmp(&b.code)));
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel(name: &str, code: &str) -> ChannelRef {
        ChannelRef { name: name.to_string(), code: ChannelCode::new(code).unwrap() }
    }

    fn ts(s: &str) -> DateTime<Utc> {
        s.parse().unwrap()
    }

    fn event(coin: &str, exchange: &str, ch: &ChannelRef, at: &str) -> PumpEvent {
        PumpEvent::new(coin, exchange, ch.clone(), ts(at), "USDT").unwrap()
    }

    #[test]
    fn channel_code_rules() {
        assert!(ChannelCode::new("CPI").is_ok());
        assert!(ChannelCode::new("BP2").is_ok());
        assert!(ChannelCode::new("C").is_err());
        assert!(ChannelCode::new("TOOBIG").is_err());
        assert!(ChannelCode::new("cpi").is_err());
    }

    #[test]
    fn derive_code_from_initials_and_overrides() {
        let no_overrides = BTreeMap::new();
        assert_eq!(derive_channel_code("Hit Pump Angels", &no_overrides).unwrap().as_str(), "HPA");
        assert_eq!(derive_channel_code("Crypto Pump Island", &no_overrides).unwrap().as_str(), "CPI");
        assert_eq!(
            derive_channel_code("Super Pump Signal Group", &no_overrides).unwrap().as_str(),
            "SPSG"
        );
        let overrides =
            BTreeMap::from([("Binance 24/7".to_string(), "BP2".to_string())]);
        assert_eq!(derive_channel_code("Binance 24/7", &overrides).unwrap().as_str(), "BP2");
        assert!(matches!(
            derive_channel_code("Bitcoin", &no_overrides),
            Err(EventError::NeedOverride { .. })
        ));
    }

    #[test]
    fn merge_collapses_copies_to_earliest_channel() {
        let a = channel("Alpha Pumps", "AP");
        let b = channel("Beta Pumps", "BP");
        let raw = vec![
            event("ABC", "binance", &b, "2021-06-01T17:00:30Z"),
            event("ABC", "binance", &a, "2021-06-01T17:00:00Z"),
        ];
        let merged = merge_events(raw, Duration::minutes(10), vec![]);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged.events()[0].channel.code.as_str(), "AP");
    }

    #[test]
    fn merge_keeps_events_outside_window() {
        let a = channel("Alpha Pumps", "AP");
        let raw = vec![
            event("ABC", "binance", &a, "2021-06-01T17:00:00Z"),
            event("ABC", "binance", &a, "2021-06-03T17:00:00Z"),
        ];
        let merged = merge_events(raw, Duration::minutes(15), vec![]);
        assert_eq!(merged.len(), 2);
    }

    #[test]
    fn merge_matches_transitive_closure_oracle() {
        // 500 random events over a handful of coins/exchanges/channels; the
        // oracle clusters by union-find over all pairs with the same
        // (coin, exchange) and |Δt| ≤ window, picking each cluster's earliest
        // event (ties by channel code) — same rule, quadratic construction.
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};

        let mut rng = StdRng::seed_from_u64(42);
        let channels =
            [channel("Alpha Pumps", "AP"), channel("Beta Pumps", "BP"), channel("Gamma Pumps", "GP")];
        let coins = ["ABC", "DEF", "GHI", "JKL"];
        let exchanges = ["binance", "kucoin"];
        let base = ts("2021-06-01T00:00:00Z");
        let mut raw = Vec::new();
        for _ in 0..500 {
            let coin = coins[rng.gen_range(0..coins.len())];
            let exchange = exchanges[rng.gen_range(0..exchanges.len())];
            let ch = &channels[rng.gen_range(0..channels.len())];
            let at = base + Duration::seconds(rng.gen_range(0..86_400 * 3));
            raw.push(event(coin, exchange, ch, &at.format("%Y-%m-%dT%H:%M:%SZ").to_string()));
        }
        let window = Duration::minutes(15);

        // Union-find oracle.
        let n = raw.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let root = find(parent, parent[i]);
                parent[i] = root;
            }
            parent[i]
        }
        for i in 0..n {
            for j in 0..n {
                if raw[i].coin == raw[j].coin
                    && raw[i].exchange == raw[j].exchange
                    && (raw[i].announced_at - raw[j].announced_at).abs() <= window
                {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri] = rj;
                }
            }
        }
        let mut clusters: BTreeMap<usize, Vec<&PumpEvent>> = BTreeMap::new();
        for i in 0..n {
            let root = find(&mut parent, i);
            clusters.entry(root).or_default().push(&raw[i]);
        }
        let mut oracle: Vec<PumpEvent> = clusters
            .into_values()
            .map(|mut members| {
                members.sort_by(|a, b| {
                    (a.announced_at, &a.channel.code).cmp(&(b.announced_at, &b.channel.code))
                });
                members[0].clone()
            })
            .collect();
        oracle.sort_by(|a, b| {
            (a.announced_at, &a.coin, &a.exchange).cmp(&(b.announced_at, &b.coin, &b.exchange))
        });

        // The sweep in merge_events links *consecutive* events ≤ window
        // apart; the oracle links *all pairs* ≤ window apart. The closures
        // coincide: any in-window pair is bridged by the events between them.
        let merged = merge_events(raw.clone(), window, vec![]);
        let got: Vec<&PumpEvent> = merged.events().iter().collect();
        assert_eq!(got.len(), oracle.len());
        for (g, o) in got.iter().zip(oracle.iter()) {
            assert_eq!(g.id, o.id);
        }

        // Idempotence: merging the merged table changes nothing.
        let again = merge_events(merged.events().to_vec(), window, vec![]);
        assert_eq!(again.events(), merged.events());
    }

    #[test]
    fn clean_removes_delisted_and_excluded_with_conservation() {
        let a = channel("Alpha Pumps", "AP");
        let raw = vec![
            event("ABC", "binance", &a, "2021-06-01T17:00:00Z"),
            event("GONE", "binance", &a, "2021-06-02T17:00:00Z"),
            event("DEF", "yobit", &a, "2021-06-03T17:00:00Z"),
        ];
        let table = EventTable::new(raw, vec![]).unwrap();
        let listings = BTreeMap::from([(
            "binance".to_string(),
            BTreeSet::from(["ABC".to_string(), "DEF".to_string()]),
        )]);
        let excluded = BTreeSet::from(["yobit".to_string()]);
        let (kept, removals) = clean_events(&table, &listings, &excluded).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept.events()[0].coin, "ABC");
        assert_eq!(removals.len(), 2);
        assert_eq!(kept.len() + removals.len(), table.len());
        assert_eq!(
            removals.iter().filter(|r| r.reason == RemovalReason::Delisted).count(),
            1
        );

        // Surviving events are untouched.
        assert_eq!(kept.events()[0], table.events()[0]);

        // Exchange neither listed nor excluded → ambiguous.
        let err = clean_events(&table, &listings, &BTreeSet::new()).unwrap_err();
        assert!(matches!(err, EventError::AmbiguousExchange(e) if e == "yobit"));
    }

    #[test]
    fn cleaning_fixture_sized_to_published_counts() {
        // 10687 raw events; cleaning removes 459 delisted on binance plus 364
        // on the excluded exchange plus 673 delisted elsewhere, keeping 9191.
        let a = channel("Alpha Pumps", "AP");
        let mut raw = Vec::new();
        let base = ts("2021-06-01T00:00:00Z");
        let mut push = |coin: String, exchange: &str, i: usize| {
            let at = base + Duration::minutes(i as i64 * 20);
            raw.push(
                PumpEvent::new(coin, exchange, a.clone(), at, "USDT").unwrap(),
            );
        };
        let mut i = 0;
        let mut listed_binance = BTreeSet::new();
        let mut listed_hotbit = BTreeSet::new();
        for k in 0..8191 {
            let coin = format!("B{k}");
            listed_binance.insert(coin.clone());
            push(coin, "binance", i);
            i += 1;
        }
        for k in 0..459 {
            push(format!("XB{k}"), "binance", i); // delisted on binance
            i += 1;
        }
        for k in 0..364 {
            push(format!("Y{k}"), "yobit", i); // excluded exchange
            i += 1;
        }
        for k in 0..1000 {
            let coin = format!("H{k}");
            listed_hotbit.insert(coin.clone());
            push(coin, "hotbit", i);
            i += 1;
        }
        for k in 0..673 {
            push(format!("XH{k}"), "hotbit", i); // delisted on hotbit
            i += 1;
        }
        assert_eq!(raw.len(), 10_687);
        let table = EventTable::new(raw, vec![]).unwrap();
        let listings = BTreeMap::from([
            ("binance".to_string(), listed_binance),
            ("hotbit".to_string(), listed_hotbit),
        ]);
        let excluded = BTreeSet::from(["yobit".to_string()]);
        let (kept, removals) = clean_events(&table, &listings, &excluded).unwrap();
        assert_eq!(kept.len(), 9_191);
        assert_eq!(removals.len(), 10_687 - 9_191);
        assert_eq!(
            removals.iter().filter(|r| r.reason == RemovalReason::ExcludedExchange).count(),
            364
        );
    }

    #[test]
    fn channel_shares_match_published_arithmetic() {
        // 9191 events total, 7920 from one channel → 86.17% (2 d.p.); a
        // channel with 145 pumps across 66 coins → 2.20 pumps per coin.
        let cpi = channel("Crypto Pump Island", "CPI");
        let hpa = channel("Hit Pump Angels", "HPA");
        let other = channel("Misc Pumps", "MP");
        let base = ts("2021-06-01T00:00:00Z");
        let mut raw = Vec::new();
        for k in 0..7920usize {
            let at = base + Duration::minutes(k as i64 * 20);
            raw.push(PumpEvent::new(format!("C{}", k % 500), "binance", cpi.clone(), at, "USDT").unwrap());
        }
        for k in 0..145usize {
            let at = base + Duration::minutes(7920 * 20 + k as i64 * 20);
            raw.push(PumpEvent::new(format!("H{}", k % 66), "binance", hpa.clone(), at, "USDT").unwrap());
        }
        for k in 0..(9191 - 7920 - 145) {
            let at = base + Duration::minutes(9000 * 20 + k as i64 * 20);
            raw.push(PumpEvent::new(format!("M{k}"), "binance", other.clone(), at, "USDT").unwrap());
        }
        let table = EventTable::new(raw, vec![]).unwrap();
        assert_eq!(table.len(), 9191);
        let stats = channel_stats(&table);
        assert_eq!(stats[0].code.as_str(), "CPI");
        assert!((stats[0].share_pct - 86.17).abs() < 0.005, "share {}", stats[0].share_pct);
        let hpa_stat = stats.iter().find(|s| s.code.as_str() == "HPA").unwrap();
        assert_eq!(hpa_stat.distinct_coins, 66);
        assert!((hpa_stat.pumps_per_coin - 2.20).abs() < 0.005);
        let share_sum: f64 = stats.iter().map(|s| s.share_pct).sum();
        assert!((share_sum - 100.0).abs() < 0.01);
        let count_sum: usize = stats.iter().map(|s| s.pumps).sum();
        assert_eq!(count_sum, table.len());
    }

    #[test]
    fn single_channel_share_is_100() {
        let a = channel("Alpha Pumps", "AP");
        let table = EventTable::new(
            vec![event("ABC", "binance", &a, "2021-06-01T17:00:00Z")],
            vec![],
        )
        .unwrap();
        let stats = channel_stats(&table);
        assert_eq!(stats.len(), 1);
        assert!((stats[0].share_pct - 100.0).abs() < 1e-9);
    }

    #[test]
    fn duplicate_triples_are_rejected() {
        let a = channel("Alpha Pumps", "AP");
        let b = channel("Beta Pumps", "BP");
        let events = vec![
            event("ABC", "binance", &a, "2021-06-01T17:00:00Z"),
            event("ABC", "binance", &b, "2021-06-01T17:00:00Z"),
        ];
        assert!(matches!(
            EventTable::new(events, vec![]),
            Err(EventError::DuplicateEvent { .. })
        ));
    }
}
