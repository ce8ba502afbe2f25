//! Report rendering: a fixed cell format (two decimals, scientific with three
//! significant digits from 10⁶) and deterministic CSV/JSON writers, so the
//! same analysis always produces byte-identical files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    AggregateRow, EventPerf, EventWindowReport, GroupMeans, QUANTILE_RULE,
};
use crate::events::ChannelStat;
use crate::normalize::{ConversionReport, CLOSE_RULE};

/// Values at or beyond this magnitude render in scientific notation.
pub const SCIENTIFIC_THRESHOLD: f64 = 1e6;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report io at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("report csv at {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Formats one table cell: two decimal places, switching to scientific
/// notation with three significant digits (e.g. `2.62e9`) at |v| ≥ 10⁶.
/// Non-finite values render empty.
pub fn format_stat(v: f64) -> String {
    if !v.is_finite() {
        return String::new();
    }
    if v.abs() >= SCIENTIFIC_THRESHOLD {
        let sign = if v < 0.0 { "-" } else { "" };
        let magnitude = v.abs();
        let mut exp = magnitude.log10().floor() as i32;
        let mut mantissa = magnitude / 10f64.powi(exp);
        if mantissa >= 10.0 {
            mantissa /= 10.0;
            exp += 1;
        } else if mantissa < 1.0 {
            mantissa *= 10.0;
            exp -= 1;
        }
        mantissa = (mantissa * 100.0).round() / 100.0;
        if mantissa >= 10.0 {
            mantissa /= 10.0;
            exp += 1;
        }
        format!("{sign}{mantissa:.2}e{exp}")
    } else {
        format!("{v:.2}")
    }
}

/// `format_stat`, with absent values rendered as empty cells.
pub fn format_opt(v: Option<f64>) -> String {
    v.map(format_stat).unwrap_or_default()
}

/// Full-precision cell for data files (per-event detail, plot series):
/// shortest round-trip rendering, empty when absent.
pub fn format_raw(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v}"),
        _ => String::new(),
    }
}

/// The methodology choices in force, restated in every report so a table
/// can be read without the code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRules {
    pub quantile_rule: String,
    pub adjusted_index: String,
    pub pump_window: String,
    pub baseline: String,
    pub day_offsets: String,
    pub market_weights: String,
    pub quote_conversion: String,
    pub censoring: String,
    pub deduplication: String,
    pub degenerate_events: String,
}

impl DecisionRules {
    pub fn current(dedup_window_minutes: i64) -> Self {
        Self {
            quantile_rule: QUANTILE_RULE.to_string(),
            adjusted_index: "adjusted = coin_index - market_index + 100".to_string(),
            pump_window: "five one-minute bars from the announcement minute; \
                          peak price uses bar highs"
                .to_string(),
            baseline: "mean daily close and volume over the seven days before the pump day"
                .to_string(),
            day_offsets: "day n = pump day + n calendar days, read at the daily close; \
                          day 0 is the pump day itself"
                .to_string(),
            market_weights: "per-day quote-unit volume (volume x close) summed across \
                             exchanges; falls back to the pump-day weight, then to an \
                             unweighted mean"
                .to_string(),
            quote_conversion: format!(
                "{CLOSE_RULE}; open via reference open, high/low via reference typical \
                 price, widened to bracket open and close; volume unchanged"
            ),
            censoring: "long-term series stop at the next pump of the same coin; \
                        pump-count bins and nth-pump tables use uncensored windows"
                .to_string(),
            deduplication: format!(
                "announcements of the same coin and exchange within {dedup_window_minutes} \
                 minutes merge into one event; the earliest channel wins"
            ),
            degenerate_events: "events with a zero pre-pump price or volume are excluded \
                                from ratio statistics and kept in counts"
                .to_string(),
        }
    }
}

/// Pipeline stage tallies embedded in the report metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub announcements_extracted: usize,
    pub events_merged: usize,
    pub events_clean: usize,
    pub events_removed: usize,
    pub events_analyzed: usize,
    pub events_skipped: usize,
    pub coins: usize,
    pub exchanges: usize,
}

/// Distribution row: how many coins were pumped a given number of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinCountBin {
    pub label: String,
    pub coins: usize,
    pub share_pct: f64,
}

/// Day-offset aggregates for one pump-count bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinImpact {
    pub group: String,
    pub label: String,
    pub coins: usize,
    pub rows: Vec<AggregateRow>,
}

/// Day-offset aggregates for each coin's nth pump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NthImpact {
    pub group: String,
    pub n: u32,
    pub rows: Vec<AggregateRow>,
}

/// One day of the plotted index curves: cross-event means of the coin,
/// market, and adjusted indices at this offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotIndexRow {
    pub day: u32,
    pub events: usize,
    pub coin_index_mean: Option<f64>,
    pub market_index_mean: Option<f64>,
    pub adjusted_index_mean: Option<f64>,
    pub adjusted_index_median: Option<f64>,
    pub adjusted_index_iqr_mean: Option<f64>,
}

/// One coin in the pump-count vs long-term-impact scatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinScatterRow {
    pub coin: String,
    pub pumps: u32,
    pub dominant_channel_share_pct: f64,
    pub dominant: bool,
    pub adjusted_index_day365_mean: Option<f64>,
}

/// Everything the analyze stage produces; serialized as `results.json` and
/// rendered into the report bundle by the report stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisResults {
    pub config_hash: String,
    pub rules: DecisionRules,
    pub counts: RunCounts,
    pub warnings: Vec<String>,
    pub channels: Vec<ChannelStat>,
    pub pumps_per_coin: Vec<CoinCountBin>,
    pub impact_all: Vec<AggregateRow>,
    pub impact_dominant: Vec<AggregateRow>,
    pub impact_other: Vec<AggregateRow>,
    pub impact_bins: Vec<BinImpact>,
    pub impact_nth: Vec<NthImpact>,
    pub window: EventWindowReport,
    pub split_means: Vec<GroupMeans>,
    pub events: Vec<EventPerf>,
    pub plot_index: Vec<PlotIndexRow>,
    pub coin_scatter: Vec<CoinScatterRow>,
    pub conversions: Vec<ConversionReport>,
}

impl AnalysisResults {
    pub fn save(&self, path: &Path) -> Result<(), ReportError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(|source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn write_csv(
    path: &Path,
    header: &[String],
    rows: &[Vec<String>],
) -> Result<(), ReportError> {
    let err = |source: csv::Error| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(err)?;
    writer.write_record(header).map_err(err)?;
    for row in rows {
        writer.write_record(row).map_err(err)?;
    }
    writer.flush().map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn offset_header(first: &str, rest: &[&str], rows: &[AggregateRow]) -> Vec<String> {
    let mut header = vec![first.to_string()];
    header.extend(rest.iter().map(|s| s.to_string()));
    header.extend(rows.iter().map(|r| format!("day_{}", r.offset)));
    header
}

/// Statistic-per-row table: n, mean, median, IQR mean, and their average,
/// one column per day offset.
fn impact_rows(rows: &[AggregateRow]) -> Vec<Vec<String>> {
    let cells = |f: &dyn Fn(&AggregateRow) -> String| -> Vec<String> {
        rows.iter().map(|r| f(r)).collect()
    };
    let average = |r: &AggregateRow| match (r.mean, r.median, r.iqr_mean) {
        (Some(a), Some(b), Some(c)) => format_stat((a + b + c) / 3.0),
        _ => String::new(),
    };
    let mut out = Vec::new();
    for (name, row) in [
        ("n", cells(&|r| r.n.to_string())),
        ("mean", cells(&|r| format_opt(r.mean))),
        ("median", cells(&|r| format_opt(r.median))),
        ("iqr_mean", cells(&|r| format_opt(r.iqr_mean))),
        ("average", cells(&average)),
    ] {
        let mut line = vec![name.to_string()];
        line.extend(row);
        out.push(line);
    }
    out
}

/// Renders the full report bundle under `dir`: the paper-shaped CSV tables,
/// `metadata.json` with the config hash and methodology rules, and plot-data
/// series under `dir/plot`. Returns the files written, in order.
pub fn write_report(results: &AnalysisResults, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let plot_dir = dir.join("plot");
    fs::create_dir_all(&plot_dir).map_err(|source| ReportError::Io {
        path: plot_dir.clone(),
        source,
    })?;
    let mut written = Vec::new();
    let emit =
        |name: &str, header: Vec<String>, rows: Vec<Vec<String>>| -> Result<PathBuf, ReportError> {
            let path = dir.join(name);
            write_csv(&path, &header, &rows)?;
            Ok(path)
        };

    // Pumps per channel.
    written.push(emit(
        "channels.csv",
        ["code", "name", "pumps", "share_pct", "distinct_coins", "pumps_per_coin"]
            .map(String::from)
            .to_vec(),
        results
            .channels
            .iter()
            .map(|c| {
                vec![
                    c.code.to_string(),
                    c.name.clone(),
                    c.pumps.to_string(),
                    format_stat(c.share_pct),
                    c.distinct_coins.to_string(),
                    format_stat(c.pumps_per_coin),
                ]
            })
            .collect(),
    )?);

    // Pumps-per-coin distribution.
    written.push(emit(
        "pumps_per_coin.csv",
        ["pumps", "coins", "share_pct"].map(String::from).to_vec(),
        results
            .pumps_per_coin
            .iter()
            .map(|b| vec![b.label.clone(), b.coins.to_string(), format_stat(b.share_pct)])
            .collect(),
    )?);

    // Long-term adjusted impact: all events, dominant channel, the rest.
    for (name, rows) in [
        ("impact_all.csv", &results.impact_all),
        ("impact_dominant_channel.csv", &results.impact_dominant),
        ("impact_other_channels.csv", &results.impact_other),
    ] {
        written.push(emit(name, offset_header("statistic", &[], rows), impact_rows(rows))?);
    }

    // IQR-mean impact by pump-count bin and by nth pump.
    if let Some(first) = results.impact_bins.first() {
        written.push(emit(
            "impact_by_pump_count.csv",
            offset_header("group", &["bin", "coins"], &first.rows),
            results
                .impact_bins
                .iter()
                .map(|b| {
                    let mut row =
                        vec![b.group.clone(), b.label.clone(), b.coins.to_string()];
                    row.extend(b.rows.iter().map(|r| format_opt(r.iqr_mean)));
                    row
                })
                .collect(),
        )?);
    }
    if let Some(first) = results.impact_nth.first() {
        written.push(emit(
            "impact_by_nth_pump.csv",
            offset_header("group", &["n"], &first.rows),
            results
                .impact_nth
                .iter()
                .map(|x| {
                    let mut row = vec![x.group.clone(), x.n.to_string()];
                    row.extend(x.rows.iter().map(|r| format_opt(r.iqr_mean)));
                    row
                })
                .collect(),
        )?);
    }

    // Before/after split: headline proportions, per-exchange shares, weekly counts.
    let w = &results.window;
    written.push(emit(
        "event_split.csv",
        [
            "period",
            "events",
            "share_pct",
            "time_share_pct",
            "pumps_per_week",
            "weekly_mean_near_split",
        ]
        .map(String::from)
        .to_vec(),
        vec![
            vec![
                "before".to_string(),
                w.before.to_string(),
                format_stat(w.share_before_pct),
                format_stat(w.time_share_before_pct),
                format_stat(w.pumps_per_week_before),
                format_opt(w.weekly_mean_before),
            ],
            vec![
                "after".to_string(),
                w.after.to_string(),
                format_stat(w.share_after_pct),
                format_stat(w.time_share_after_pct),
                format_stat(w.pumps_per_week_after),
                format_opt(w.weekly_mean_after),
            ],
        ],
    )?);
    written.push(emit(
        "event_split_exchanges.csv",
        ["exchange", "before", "after", "before_pct", "after_pct"]
            .map(String::from)
            .to_vec(),
        w.per_exchange
            .iter()
            .map(|x| {
                vec![
                    x.exchange.clone(),
                    x.before.to_string(),
                    x.after.to_string(),
                    format_stat(x.share_before_pct),
                    format_stat(x.share_after_pct),
                ]
            })
            .collect(),
    )?);
    written.push(emit(
        "event_split_weekly.csv",
        ["week", "start", "pumps"].map(String::from).to_vec(),
        w.weekly
            .iter()
            .map(|x| {
                vec![
                    x.week.to_string(),
                    x.start.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
                    x.count.to_string(),
                ]
            })
            .collect(),
    )?);

    // Mean pump performance per (group, period) cell, and the relative change
    // of each mean across the split.
    written.push(emit(
        "performance_split.csv",
        [
            "group",
            "period",
            "n",
            "price_increase_pct",
            "relative_pump_volume_pct",
            "pre_price",
            "max_price",
            "pre_volume",
            "pump_volume",
            "pre_value",
            "pump_value",
        ]
        .map(String::from)
        .to_vec(),
        results
            .split_means
            .iter()
            .map(|m| {
                vec![
                    m.group.clone(),
                    m.period.clone(),
                    m.n.to_string(),
                    format_opt(m.delta_p),
                    format_opt(m.delta_v),
                    format_opt(m.pre_price),
                    format_opt(m.max_price),
                    format_opt(m.pre_volume),
                    format_opt(m.pump_volume),
                    format_opt(m.pre_value),
                    format_opt(m.pump_value),
                ]
            })
            .collect(),
    )?);
    written.push(emit(
        "performance_split_change.csv",
        [
            "group",
            "pre_price_change_pct",
            "pre_volume_change_pct",
            "max_price_change_pct",
            "pump_volume_change_pct",
            "pre_value_change_pct",
            "pump_value_change_pct",
        ]
        .map(String::from)
        .to_vec(),
        split_changes(&results.split_means),
    )?);

    // Per-event detail, full precision.
    written.push(emit(
        "events.csv",
        [
            "event_id",
            "coin",
            "exchange",
            "channel_code",
            "announced_at",
            "price_increase_pct",
            "volume_increase_pct",
            "pre_price",
            "max_price",
            "pre_volume",
            "pump_volume",
            "pre_value",
            "pump_value",
        ]
        .map(String::from)
        .to_vec(),
        results
            .events
            .iter()
            .map(|e| {
                vec![
                    e.event_id.clone(),
                    e.coin.clone(),
                    e.exchange.clone(),
                    e.channel_code.clone(),
                    e.announced_at.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
                    format_raw(Some(e.delta_p)),
                    format_raw(e.delta_v),
                    format_raw(Some(e.pre_price)),
                    format_raw(Some(e.max_price)),
                    format_raw(Some(e.pre_volume)),
                    format_raw(Some(e.pump_volume)),
                    format_raw(Some(e.pre_value)),
                    format_raw(Some(e.pump_value)),
                ]
            })
            .collect(),
    )?);

    // Conversion audit.
    written.push(emit(
        "conversions.csv",
        [
            "exchange",
            "pair",
            "granularity",
            "converted",
            "skipped",
            "repairs",
            "source_quote",
            "target_quote",
            "close_rule",
        ]
        .map(String::from)
        .to_vec(),
        results
            .conversions
            .iter()
            .map(|c| {
                vec![
                    c.exchange.clone(),
                    c.pair.to_string(),
                    c.granularity.as_str().to_string(),
                    c.converted.to_string(),
                    c.skipped.to_string(),
                    c.repairs.to_string(),
                    c.source_quote.clone(),
                    c.target_quote.clone(),
                    c.close_rule.clone(),
                ]
            })
            .collect(),
    )?);

    // Plot data: index curves by day, and the pump-count scatter.
    let plot_index = plot_dir.join("index_by_day.csv");
    write_csv(
        &plot_index,
        &[
            "day",
            "events",
            "coin_index_mean",
            "market_index_mean",
            "adjusted_index_mean",
            "adjusted_index_median",
            "adjusted_index_iqr_mean",
        ]
        .map(String::from),
        &results
            .plot_index
            .iter()
            .map(|r| {
                vec![
                    r.day.to_string(),
                    r.events.to_string(),
                    format_raw(r.coin_index_mean),
                    format_raw(r.market_index_mean),
                    format_raw(r.adjusted_index_mean),
                    format_raw(r.adjusted_index_median),
                    format_raw(r.adjusted_index_iqr_mean),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    written.push(plot_index);
    let plot_scatter = plot_dir.join("coin_impact_scatter.csv");
    write_csv(
        &plot_scatter,
        &[
            "coin",
            "pumps",
            "dominant_channel_share_pct",
            "dominant",
            "adjusted_index_day365_mean",
        ]
        .map(String::from),
        &results
            .coin_scatter
            .iter()
            .map(|r| {
                vec![
                    r.coin.clone(),
                    r.pumps.to_string(),
                    format_raw(Some(r.dominant_channel_share_pct)),
                    r.dominant.to_string(),
                    format_raw(r.adjusted_index_day365_mean),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    written.push(plot_scatter);

    // Metadata: config hash, methodology rules, tallies, warnings.
    let metadata = serde_json::json!({
        "config_hash": results.config_hash,
        "rules": results.rules,
        "counts": results.counts,
        "warnings": results.warnings,
    });
    let metadata_path = dir.join("metadata.json");
    let mut text = serde_json::to_string_pretty(&metadata)?;
    text.push('\n');
    fs::write(&metadata_path, text).map_err(|source| ReportError::Io {
        path: metadata_path.clone(),
        source,
    })?;
    written.push(metadata_path);

    Ok(written)
}

/// Per-group relative change of each mean across the split:
/// (after − before) / before × 100.
fn split_changes(means: &[GroupMeans]) -> Vec<Vec<String>> {
    let mut groups: Vec<&str> = means.iter().map(|m| m.group.as_str()).collect();
    groups.dedup();
    let cell = |group: &str, pick: &dyn Fn(&GroupMeans) -> Option<f64>| -> String {
        let at = |period: &str| {
            means
                .iter()
                .find(|m| m.group == group && m.period == period)
                .and_then(pick)
        };
        match (at("before"), at("after")) {
            (Some(b), Some(a)) if b != 0.0 => format_stat((a - b) / b * 100.0),
            _ => String::new(),
        }
    };
    groups
        .into_iter()
        .map(|g| {
            vec![
                g.to_string(),
                cell(g, &|m| m.pre_price),
                cell(g, &|m| m.pre_volume),
                cell(g, &|m| m.max_price),
                cell(g, &|m| m.pump_volume),
                cell(g, &|m| m.pre_value),
                cell(g, &|m| m.pump_value),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_values_get_two_decimals() {
        assert_eq!(format_stat(59.234), "59.23");
        assert_eq!(format_stat(100.0), "100.00");
        assert_eq!(format_stat(-95.955), "-95.95");
        assert_eq!(format_stat(0.0), "0.00");
        assert_eq!(format_stat(999_999.99), "999999.99");
    }

    #[test]
    fn large_values_get_three_significant_digits() {
        assert_eq!(format_stat(2.6187e9), "2.62e9");
        assert_eq!(format_stat(-2.6187e9), "-2.62e9");
        assert_eq!(format_stat(1_000_000.0), "1.00e6");
        assert_eq!(format_stat(4_284_400.0), "4.28e6");
    }

    #[test]
    fn mantissa_rounding_carries_into_the_exponent() {
        assert_eq!(format_stat(9.996e6), "1.00e7");
        assert_eq!(format_stat(9.994e6), "9.99e6");
        assert_eq!(format_stat(-9.996e6), "-1.00e7");
    }

    #[test]
    fn absent_and_non_finite_render_empty() {
        assert_eq!(format_opt(None), "");
        assert_eq!(format_opt(Some(1.0)), "1.00");
        assert_eq!(format_stat(f64::NAN), "");
        assert_eq!(format_stat(f64::INFINITY), "");
        assert_eq!(format_raw(None), "");
        assert_eq!(format_raw(Some(0.1)), "0.1");
    }

    #[test]
    fn impact_table_has_fixed_statistic_rows() {
        let rows = vec![
            AggregateRow {
                offset: 7,
                n: 3,
                mean: Some(104.04),
                median: Some(102.86),
                iqr_mean: Some(103.16),
            },
            AggregateRow {
                offset: 365,
                n: 0,
                mean: None,
                median: None,
                iqr_mean: None,
            },
        ];
        let header = offset_header("statistic", &[], &rows);
        assert_eq!(header, vec!["statistic", "day_7", "day_365"]);
        let table = impact_rows(&rows);
        assert_eq!(table[0], vec!["n", "3", "0"]);
        assert_eq!(table[1], vec!["mean", "104.04", ""]);
        assert_eq!(table[4], vec!["average", "103.35", ""]);
    }

    #[test]
    fn split_changes_compare_after_to_before() {
        let mk = |group: &str, period: &str, pre_price: f64| GroupMeans {
            group: group.to_string(),
            period: period.to_string(),
            n: 1,
            delta_p: Some(1.0),
            delta_v: None,
            pre_price: Some(pre_price),
            max_price: Some(2.0 * pre_price),
            pre_volume: Some(10.0),
            pump_volume: Some(20.0),
            pre_value: Some(100.0),
            pump_value: Some(200.0),
        };
        let rows = split_changes(&[mk("cpi", "before", 200.0), mk("cpi", "after", 150.0)]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0][0], "cpi");
        assert_eq!(rows[0][1], "-25.00"); // (150 - 200) / 200
        assert_eq!(rows[0][3], "-25.00"); // max price scales with pre price
        assert_eq!(rows[0][5], "0.00");
    }

    #[test]
    fn report_bundle_is_byte_deterministic() {
        let results = AnalysisResults {
            config_hash: "00112233aabbccdd".to_string(),
            rules: DecisionRules::current(15),
            counts: RunCounts {
                announcements_extracted: 4,
                events_merged: 3,
                events_clean: 2,
                events_removed: 1,
                events_analyzed: 2,
                events_skipped: 0,
                coins: 2,
                exchanges: 1,
            },
            warnings: vec!["example warning".to_string()],
            channels: Vec::new(),
            pumps_per_coin: vec![CoinCountBin {
                label: "1-10".to_string(),
                coins: 2,
                share_pct: 100.0,
            }],
            impact_all: vec![AggregateRow {
                offset: 7,
                n: 2,
                mean: Some(104.0),
                median: Some(104.0),
                iqr_mean: Some(104.0),
            }],
            impact_dominant: Vec::new(),
            impact_other: Vec::new(),
            impact_bins: Vec::new(),
            impact_nth: Vec::new(),
            window: crate::analytics::EventWindowReport {
                split_at: chrono::DateTime::parse_from_rfc3339("2022-11-11T00:00:00Z")
                    .unwrap()
                    .with_timezone(&chrono::Utc),
                total: 2,
                before: 2,
                after: 0,
                share_before_pct: 100.0,
                share_after_pct: 0.0,
                time_share_before_pct: 100.0,
                time_share_after_pct: 0.0,
                pumps_per_week_before: 1.0,
                pumps_per_week_after: 0.0,
                per_exchange: Vec::new(),
                weekly: Vec::new(),
                weekly_mean_before: None,
                weekly_mean_after: None,
            },
            split_means: Vec::new(),
            events: Vec::new(),
            plot_index: vec![PlotIndexRow {
                day: 0,
                events: 2,
                coin_index_mean: Some(100.0),
                market_index_mean: Some(100.0),
                adjusted_index_mean: Some(100.0),
                adjusted_index_median: Some(100.0),
                adjusted_index_iqr_mean: Some(100.0),
            }],
            coin_scatter: Vec::new(),
            conversions: Vec::new(),
        };

        let dir = tempfile::tempdir().expect("tempdir");
        let first_dir = dir.path().join("a");
        let second_dir = dir.path().join("b");
        fs::create_dir_all(&first_dir).unwrap();
        fs::create_dir_all(&second_dir).unwrap();
        let first = write_report(&results, &first_dir).expect("write");
        let second = write_report(&results, &second_dir).expect("write");
        assert_eq!(first.len(), second.len());
        assert!(first.iter().any(|p| p.ends_with("metadata.json")));
        for (a, b) in first.iter().zip(&second) {
            assert_eq!(
                fs::read(a).unwrap(),
                fs::read(b).unwrap(),
                "{} differs",
                a.display()
            );
        }

        let metadata = fs::read_to_string(first_dir.join("metadata.json")).unwrap();
        assert!(metadata.contains("00112233aabbccdd"));
        assert!(metadata.contains(QUANTILE_RULE));
        assert!(metadata.contains(CLOSE_RULE));

        let json_path = dir.path().join("results.json");
        results.save(&json_path).expect("save");
        let reloaded = AnalysisResults::load(&json_path).expect("load");
        assert_eq!(reloaded.config_hash, results.config_hash);
        assert_eq!(reloaded.impact_all, results.impact_all);
        assert_eq!(reloaded.window, results.window);
    }
}
