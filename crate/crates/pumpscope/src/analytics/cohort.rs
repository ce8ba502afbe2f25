//! Cohort-level aggregation: robust summaries of adjusted index series at the
//! standard day offsets, pump-count bins, nth-pump comparisons, and the
//! CPI-dominance split.

use chrono::{DateTime, Utc};
use std::collections::{BTreeMap, BTreeSet};

use super::index::IndexSeries;
use super::stats;

/// The reporting day offsets used throughout.
pub const DAY_OFFSETS: [u32; 8] = [7, 14, 30, 60, 90, 180, 270, 365];

/// Aggregates over the events whose series reach one day offset. Cells with
/// no contributing events keep n = 0 and no statistics.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AggregateRow {
    pub offset: u32,
    pub n: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub iqr_mean: Option<f64>,
}

pub fn aggregate(indices: &[&IndexSeries], offsets: &[u32]) -> Vec<AggregateRow> {
    offsets
        .iter()
        .map(|&offset| {
            let values: Vec<f64> = indices.iter().filter_map(|s| s.value(offset)).collect();
            match stats::summarize(&values) {
                Some(s) => AggregateRow {
                    offset,
                    n: s.n,
                    mean: Some(s.mean),
                    median: Some(s.median),
                    iqr_mean: Some(s.iqr_mean),
                },
                None => AggregateRow { offset, n: 0, mean: None, median: None, iqr_mean: None },
            }
        })
        .collect()
}

/// Pump-count binning scheme: coins pumped (at least once) on CPI get the
/// four-bin split, everything else the coarse two-bin split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinScheme {
    Cpi,
    NonCpi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub label: &'static str,
    pub min_pumps: u32,
    pub max_pumps: Option<u32>,
    pub coins: Vec<String>,
}

impl BinScheme {
    fn edges(self) -> &'static [(&'static str, u32, Option<u32>)] {
        match self {
            BinScheme::Cpi => {
                &[("1-10", 1, Some(10)), ("11-18", 11, Some(18)), ("19-30", 19, Some(30)), ("31+", 31, None)]
            }
            BinScheme::NonCpi => &[("1", 1, Some(1)), ("2+", 2, None)],
        }
    }
}

/// Assigns each coin to exactly one bin by its total pump count.
pub fn bin_by_pump_count(counts: &BTreeMap<String, u32>, scheme: BinScheme) -> Vec<Bin> {
    let mut bins: Vec<Bin> = scheme
        .edges()
        .iter()
        .map(|&(label, min_pumps, max_pumps)| Bin { label, min_pumps, max_pumps, coins: Vec::new() })
        .collect();
    for (coin, &count) in counts {
        if count == 0 {
            continue;
        }
        let bin = bins
            .iter_mut()
            .find(|b| count >= b.min_pumps && b.max_pumps.is_none_or(|hi| count <= hi))
            .expect("open-ended last bin catches every positive count");
        bin.coins.push(coin.clone());
    }
    bins
}

/// One event with its (adjusted) index series, for cohort aggregation.
#[derive(Debug, Clone)]
pub struct EventIndex {
    pub event_id: String,
    pub coin: String,
    pub channel_code: String,
    pub announced_at: DateTime<Utc>,
    pub index: IndexSeries,
}

/// Per n in 1..=max_n: aggregates the adjusted indices of each coin's nth
/// pump. The index series here are expected uncensored — later pumps of the
/// same coin are part of what's being measured.
pub fn nth_pump_analysis(
    cohort: &[EventIndex],
    max_n: u32,
    offsets: &[u32],
) -> BTreeMap<u32, Vec<AggregateRow>> {
    let mut by_coin: BTreeMap<&str, Vec<&EventIndex>> = BTreeMap::new();
    for e in cohort {
        by_coin.entry(&e.coin).or_default().push(e);
    }
    for pumps in by_coin.values_mut() {
        pumps.sort_by(|a, b| (a.announced_at, &a.event_id).cmp(&(b.announced_at, &b.event_id)));
    }
    let mut out = BTreeMap::new();
    for n in 1..=max_n {
        let nth: Vec<&IndexSeries> = by_coin
            .values()
            .filter_map(|pumps| pumps.get(n as usize - 1))
            .map(|e| &e.index)
            .collect();
        out.insert(n, aggregate(&nth, offsets));
    }
    out
}

/// Coins where strictly more than half of all pumps came from the given
/// channel code; input is (coin, channel_code) per event.
pub fn cpi_dominant_coins<'a>(
    events: impl IntoIterator<Item = (&'a str, &'a str)>,
    dominant_code: &str,
) -> BTreeSet<String> {
    let mut counts: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
    for (coin, code) in events {
        let entry = counts.entry(coin).or_default();
        entry.1 += 1;
        if code == dominant_code {
            entry.0 += 1;
        }
    }
    counts
        .into_iter()
        .filter(|(_, (cpi, total))| cpi * 2 > *total)
        .map(|(coin, _)| coin.to_string())
        .collect()
}
