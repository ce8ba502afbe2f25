//! File emission: the complete input tree a pipeline run consumes, plus the
//! ground truth alongside it for inspection.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use chrono::SecondsFormat;
use serde_json::json;

use crate::market::{day_start_ms, Bar, Series, World};
use crate::scenario::{collection_date, Message, Scenario, CHANNELS};
use crate::truth::GroundTruth;

pub fn emit(root: &Path, s: &Scenario, world: &World, truth: &GroundTruth) -> io::Result<()> {
    fs::create_dir_all(root.join("logs"))?;
    fs::create_dir_all(root.join("replay/data"))?;

    write_registry(root)?;
    write_patterns(root)?;
    write_logs(root, s)?;
    write_market_caps(root)?;
    write_replay(root, world)?;
    write_config(root)?;

    let mut text = serde_json::to_string_pretty(truth).expect("truth serializes");
    text.push('\n');
    fs::write(root.join("ground_truth.json"), text)
}

fn slug(name: &str) -> String {
    name.to_lowercase().replace(' ', "")
}

fn write_registry(root: &Path) -> io::Result<()> {
    let mut text = String::from("name,code,default_exchange,telegram_link\n");
    for (name, default_exchange) in CHANNELS {
        // Codes left blank: the reader derives them from initials.
        text.push_str(&format!("{name},,{default_exchange},https://t.me/{}\n", slug(name)));
    }
    fs::write(root.join("registry.csv"), text)
}

fn write_patterns(root: &Path) -> io::Result<()> {
    let patterns = json!([
        {
            "name": "picked_coin",
            "regex": "coin we have picked to pump today is #(?<coin>[A-Za-z0-9]+)"
        },
        {
            "name": "exchange_call",
            "regex": "Next pump on (?<exchange>[A-Za-z]+)[:!] #(?<coin>[A-Za-z0-9]+)"
        }
    ]);
    let mut text = serde_json::to_string_pretty(&patterns).expect("patterns serialize");
    text.push('\n');
    fs::write(root.join("patterns.json"), text)
}

pub fn log_file_name(channel: usize) -> String {
    let (name, _) = CHANNELS[channel];
    format!("{}.jsonl", name.split_whitespace().map(|w| &w[..1]).collect::<String>().to_lowercase())
}

fn write_logs(root: &Path, s: &Scenario) -> io::Result<()> {
    for channel in 0..CHANNELS.len() {
        let mut mine: Vec<&Message> = s.messages.iter().filter(|m| m.channel == channel).collect();
        mine.sort_by(|a, b| (a.at, &a.text).cmp(&(b.at, &b.text)));
        let file = fs::File::create(root.join("logs").join(log_file_name(channel)))?;
        let mut out = BufWriter::new(file);
        for m in mine {
            let line = json!({
                "channel_name": CHANNELS[channel].0,
                "timestamp": m.at.to_rfc3339_opts(SecondsFormat::Secs, true),
                "text": m.text,
            });
            writeln!(out, "{line}")?;
        }
        out.flush()?;
    }
    Ok(())
}

fn write_market_caps(root: &Path) -> io::Result<()> {
    // Caps in descending order; the top ten become the market-index coins,
    // the last two exist to prove the cut happens.
    const CAPS: [(&str, u64); 12] = [
        ("BTC", 560_000_000_000),
        ("ETH", 220_000_000_000),
        ("USDT", 83_000_000_000),
        ("BNB", 48_000_000_000),
        ("XRP", 26_000_000_000),
        ("ADA", 14_000_000_000),
        ("DOGE", 11_000_000_000),
        ("MATIC", 10_000_000_000),
        ("SOL", 9_000_000_000),
        ("DOT", 8_000_000_000),
        ("LTC", 6_500_000_000),
        ("TRX", 5_900_000_000),
    ];
    let mut text = String::from("coin,market_cap_usd,volume_usd,as_of_date\n");
    for (coin, cap) in CAPS {
        text.push_str(&format!("{coin},{cap},{},2023-04-22\n", cap / 20));
    }
    fs::write(root.join("market_cap.csv"), text)
}

/// Path of one emitted candle file, relative to the fixture root.
pub fn replay_data_file(exchange: &str, pair: &str, granularity: &str) -> String {
    format!("replay/{}", candle_file(exchange, pair, granularity))
}

/// Exact decimal rendering of a tick count at a fixed scale.
fn ticks(t: i64, scale: u32) -> String {
    assert!(t >= 0);
    if scale == 0 {
        return t.to_string();
    }
    let base = 10i64.pow(scale);
    format!("{}.{:0width$}", t / base, t % base, width = scale as usize)
}

fn candle_file(exchange: &str, pair: &str, granularity: &str) -> String {
    format!("data/{exchange}_{}_{granularity}.csv", pair.replace('/', "_"))
}

fn write_candles(
    path: &Path,
    scale: u32,
    bars: impl Iterator<Item = (i64, Bar)>,
) -> io::Result<()> {
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "open_time_ms,open,high,low,close,volume")?;
    for (ms, bar) in bars {
        writeln!(
            out,
            "{ms},{},{},{},{},{}",
            ticks(bar.open, scale),
            ticks(bar.high, scale),
            ticks(bar.low, scale),
            ticks(bar.close, scale),
            bar.volume
        )?;
    }
    out.flush()
}

/// The tiers one series actually carries: every series has daily bars, event
/// pairs also carry minute and hourly windows (unless a story removed them).
fn tiers(series: &Series) -> Vec<(&'static str, Vec<(i64, Bar)>)> {
    let mut out = Vec::new();
    if !series.minute.is_empty() {
        out.push(("1m", series.minute.iter().map(|(&ms, &b)| (ms, b)).collect()));
    }
    if !series.hourly.is_empty() {
        out.push(("1h", series.hourly.iter().map(|(&ms, &b)| (ms, b)).collect()));
    }
    let daily: Vec<(i64, Bar)> =
        series.daily.iter().map(|(&day, &b)| (day_start_ms(day), b)).collect();
    out.push(("1d", daily));
    out
}

fn write_replay(root: &Path, world: &World) -> io::Result<()> {
    let mut exchanges = serde_json::Map::new();
    for ex in crate::scenario::EXCHANGES {
        let mut series_specs = Vec::new();
        for ((series_ex, pair), series) in &world.series {
            if *series_ex != ex {
                continue;
            }
            // Listing discovery binary-searches the daily history, so the
            // first daily bar must sit exactly on the intended listing day.
            assert_eq!(series.daily.keys().next(), Some(&series.listing));
            for (granularity, bars) in tiers(series) {
                let file = candle_file(ex, pair, granularity);
                write_candles(&root.join("replay").join(&file), series.scale, bars.into_iter())?;
                series_specs.push(json!({
                    "pair": pair,
                    "granularity": granularity,
                    "file": file,
                }));
            }
        }
        let failures: Vec<serde_json::Value> = world
            .failures
            .iter()
            .filter(|f| f.exchange == ex)
            .map(|f| {
                json!({
                    "pair": f.pair,
                    "granularity": f.granularity,
                    "from_ms": f.from_ms,
                    "to_ms": f.to_ms,
                    "fail_times": f.fail_times,
                })
            })
            .collect();
        let mut spec = serde_json::Map::new();
        spec.insert("series".into(), json!(series_specs));
        if !failures.is_empty() {
            spec.insert("failures".into(), json!(failures));
        }
        exchanges.insert(ex.to_string(), spec.into());
    }

    let now_ms = day_start_ms(collection_date());
    let manifest = json!({
        "max_batch_size": 500,
        "rate_limit": {"every_n_requests": 97, "retry_after_ms": 200},
        "now_ms": now_ms,
        "exchanges": exchanges,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(root.join("replay/manifest.json"), text)
}

fn write_config(root: &Path) -> io::Result<()> {
    let logs: Vec<String> =
        (0..CHANNELS.len()).map(|ch| format!("logs/{}", log_file_name(ch))).collect();
    let config = json!({
        "registry": "registry.csv",
        "patterns": "patterns.json",
        "message_logs": logs,
        "replay_manifest": "replay/manifest.json",
        "excluded_exchanges": ["yobit"],
        "market_coins": [],
        "market_cap_file": "market_cap.csv",
        "quote_by_exchange": {"binance": "BTC"},
        "split_date": crate::scenario::split_date().to_string(),
        "collection_date": collection_date().to_string(),
        "listing_floor": crate::scenario::listing_floor().to_string(),
        "output_dir": "out",
    });
    let mut text = serde_json::to_string_pretty(&config).expect("config serializes");
    text.push('\n');
    fs::write(root.join("config.json"), text)
}
