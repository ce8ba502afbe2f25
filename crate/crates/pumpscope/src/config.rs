//! Pipeline configuration: one JSON document naming the inputs, the market
//! data source, and every analysis parameter. Paths are resolved relative to
//! the config file's directory so a bundle of fixtures can be moved wholesale.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coins kept for the volume-weighted market index when a market-cap file is
/// the source: the largest ten by reported cap.
pub const MARKET_COIN_COUNT: usize = 10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config field `{field}`: path does not exist: {path}")]
    MissingPath { field: &'static str, path: PathBuf },
    #[error("config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("market cap file row {row}: {reason}")]
    BadMarketCapRow { row: usize, reason: String },
}

fn default_dedup_window_minutes() -> i64 {
    15
}
fn default_horizon_days() -> u32 {
    365
}
fn default_day_offsets() -> Vec<u32> {
    crate::analytics::DAY_OFFSETS.to_vec()
}
fn default_nth_pump_max() -> u32 {
    4
}
fn default_quote() -> String {
    "USDT".to_string()
}
fn default_dominant_channel() -> String {
    "CPI".to_string()
}
fn default_half_window_weeks() -> u32 {
    5
}
fn default_listing_floor() -> NaiveDate {
    NaiveDate::from_ymd_opt(2005, 1, 1).expect("valid date")
}

/// Everything the pipeline commands need, in one document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Channel registry CSV (`name,code,default_exchange,telegram_link`).
    pub registry: PathBuf,
    /// Announcement pattern set (JSON array of named regexes).
    pub patterns: PathBuf,
    /// Message logs to parse, JSONL, one announcement per line.
    pub message_logs: Vec<PathBuf>,

    /// Replay manifest for offline market data (the default source).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_manifest: Option<PathBuf>,
    /// Live REST endpoints by exchange name; only used behind `--live`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub live_endpoints: BTreeMap<String, String>,

    /// Exchanges whose events are dropped during cleaning (with a logged
    /// reason) instead of failing as unknown.
    #[serde(default)]
    pub excluded_exchanges: BTreeSet<String>,
    /// Cross-channel duplicate window: announcements of the same coin and
    /// exchange within this many minutes collapse into one event.
    #[serde(default = "default_dedup_window_minutes")]
    pub dedup_window_minutes: i64,

    /// Longest day offset tracked by the index series.
    #[serde(default = "default_horizon_days")]
    pub horizon_days: u32,
    /// Day offsets reported in the aggregate tables.
    #[serde(default = "default_day_offsets")]
    pub day_offsets: Vec<u32>,
    /// Per-coin pump ordinals analyzed separately (1st..nth).
    #[serde(default = "default_nth_pump_max")]
    pub nth_pump_max: u32,

    /// Market-index constituents. May be left empty when `market_cap_file`
    /// is given; the top ten by cap are taken instead.
    #[serde(default)]
    pub market_coins: Vec<String>,
    /// Optional market-cap snapshot CSV: `coin,market_cap_usd,volume_usd,as_of_date`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market_cap_file: Option<PathBuf>,

    /// Quote currency pumped pairs trade against, per exchange.
    /// Exchanges not listed use `default_quote`.
    #[serde(default)]
    pub quote_by_exchange: BTreeMap<String, String>,
    /// Fallback quote currency for pumped pairs.
    #[serde(default = "default_quote")]
    pub default_quote: String,
    /// Currency every series is normalized to before analysis; non-matching
    /// quotes are converted through a `<quote>/<reference_quote>` series.
    #[serde(default = "default_quote")]
    pub reference_quote: String,

    /// Channel code whose majority makes a coin "dominant-channel" in the
    /// binned and split analyses.
    #[serde(default = "default_dominant_channel")]
    pub dominant_channel_code: String,

    /// Day separating the before/after event-window analysis.
    pub split_date: NaiveDate,
    /// Weeks charted on each side of `split_date`.
    #[serde(default = "default_half_window_weeks")]
    pub half_window_weeks: u32,
    /// Day the dataset was assembled; fetch windows never extend past it.
    pub collection_date: NaiveDate,
    /// Earliest date the listing-date search will consider.
    #[serde(default = "default_listing_floor")]
    pub listing_floor: NaiveDate,

    /// Directory all command outputs land in.
    pub output_dir: PathBuf,
}

impl PipelineConfig {
    /// Reads, resolves, and validates a config file. Relative paths become
    /// absolute against the file's parent directory; an empty `market_coins`
    /// is filled from `market_cap_file`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: PipelineConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        config.normalize();
        config.validate()?;
        if config.market_coins.is_empty() {
            let file = config
                .market_cap_file
                .as_ref()
                .expect("validate guarantees a coin source");
            config.market_coins = top_coins_by_market_cap(file, MARKET_COIN_COUNT)?;
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.registry);
        resolve(&mut self.patterns);
        self.message_logs.iter_mut().for_each(resolve);
        if let Some(p) = self.replay_manifest.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.market_cap_file.as_mut() {
            resolve(p);
        }
        resolve(&mut self.output_dir);
    }

    fn normalize(&mut self) {
        self.day_offsets.sort_unstable();
        self.day_offsets.dedup();
        self.default_quote = self.default_quote.to_uppercase();
        self.reference_quote = self.reference_quote.to_uppercase();
        self.quote_by_exchange = self
            .quote_by_exchange
            .iter()
            .map(|(k, v)| (k.to_lowercase(), v.to_uppercase()))
            .collect();
        self.excluded_exchanges = self
            .excluded_exchanges
            .iter()
            .map(|e| e.to_lowercase())
            .collect();
        for coin in &mut self.market_coins {
            *coin = coin.to_uppercase();
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let must_exist = |field: &'static str, path: &Path| {
            if path.exists() {
                Ok(())
            } else {
                Err(ConfigError::MissingPath {
                    field,
                    path: path.to_path_buf(),
                })
            }
        };
        must_exist("registry", &self.registry)?;
        must_exist("patterns", &self.patterns)?;
        if self.message_logs.is_empty() {
            return Err(ConfigError::Invalid {
                field: "message_logs",
                reason: "at least one log is required".to_string(),
            });
        }
        for log in &self.message_logs {
            must_exist("message_logs", log)?;
        }
        if let Some(manifest) = &self.replay_manifest {
            must_exist("replay_manifest", manifest)?;
        }
        if let Some(file) = &self.market_cap_file {
            must_exist("market_cap_file", file)?;
        }
        if self.day_offsets.is_empty() {
            return Err(ConfigError::Invalid {
                field: "day_offsets",
                reason: "must be nonempty".to_string(),
            });
        }
        let max_offset = *self.day_offsets.last().expect("nonempty");
        if self.horizon_days < max_offset {
            return Err(ConfigError::Invalid {
                field: "horizon_days",
                reason: format!(
                    "horizon {} is shorter than the largest day offset {max_offset}",
                    self.horizon_days
                ),
            });
        }
        if self.dedup_window_minutes < 0 {
            return Err(ConfigError::Invalid {
                field: "dedup_window_minutes",
                reason: "must be non-negative".to_string(),
            });
        }
        if self.nth_pump_max == 0 {
            return Err(ConfigError::Invalid {
                field: "nth_pump_max",
                reason: "must be at least 1".to_string(),
            });
        }
        if self.market_coins.is_empty() && self.market_cap_file.is_none() {
            return Err(ConfigError::Invalid {
                field: "market_coins",
                reason: "give a coin list or a market_cap_file".to_string(),
            });
        }
        if self.listing_floor >= self.collection_date {
            return Err(ConfigError::Invalid {
                field: "listing_floor",
                reason: "must be before collection_date".to_string(),
            });
        }
        if self.default_quote.is_empty() || self.reference_quote.is_empty() {
            return Err(ConfigError::Invalid {
                field: "default_quote",
                reason: "quote currencies must be nonempty".to_string(),
            });
        }
        Ok(())
    }

    /// Quote currency pumped pairs use on `exchange`.
    pub fn quote_for(&self, exchange: &str) -> &str {
        self.quote_by_exchange
            .get(exchange)
            .map(String::as_str)
            .unwrap_or(&self.default_quote)
    }

    /// Hash of the analysis parameters (not the input paths), embedded in
    /// every report so two reports are comparable at a glance. FNV-1a 64
    /// over a canonical rendering, fixed here rather than borrowed from the
    /// standard hasher so the value survives toolchain changes.
    pub fn config_hash(&self) -> String {
        let mut canon = String::new();
        let mut put = |key: &str, value: String| {
            canon.push_str(key);
            canon.push('=');
            canon.push_str(&value);
            canon.push(';');
        };
        put("dedup_window_minutes", self.dedup_window_minutes.to_string());
        put("horizon_days", self.horizon_days.to_string());
        put(
            "day_offsets",
            self.day_offsets
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        put("nth_pump_max", self.nth_pump_max.to_string());
        put("market_coins", self.market_coins.join(","));
        put(
            "quote_by_exchange",
            self.quote_by_exchange
                .iter()
                .map(|(k, v)| format!("{k}:{v}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        put("default_quote", self.default_quote.clone());
        put("reference_quote", self.reference_quote.clone());
        put("dominant_channel_code", self.dominant_channel_code.clone());
        put("split_date", self.split_date.to_string());
        put("half_window_weeks", self.half_window_weeks.to_string());
        put("collection_date", self.collection_date.to_string());
        put("listing_floor", self.listing_floor.to_string());
        put(
            "excluded_exchanges",
            self.excluded_exchanges
                .iter()
                .cloned()
                .collect::<Vec<_>>()
                .join(","),
        );
        format!("{:016x}", fnv1a64(canon.as_bytes()))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Deserialize)]
struct MarketCapRow {
    coin: String,
    market_cap_usd: f64,
    #[allow(dead_code)]
    volume_usd: f64,
    #[allow(dead_code)]
    as_of_date: NaiveDate,
}

/// Reads a market-cap snapshot and returns the `count` largest coins by cap,
/// ties broken by coin name, uppercased.
pub fn top_coins_by_market_cap(path: &Path, count: usize) -> Result<Vec<String>, ConfigError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| ConfigError::BadMarketCapRow {
        row: 0,
        reason: e.to_string(),
    })?;
    let mut rows: Vec<MarketCapRow> = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        let row: MarketCapRow = row.map_err(|e| ConfigError::BadMarketCapRow {
            row: i + 1,
            reason: e.to_string(),
        })?;
        if !row.market_cap_usd.is_finite() || row.market_cap_usd < 0.0 {
            return Err(ConfigError::BadMarketCapRow {
                row: i + 1,
                reason: format!("market_cap_usd {} is not usable", row.market_cap_usd),
            });
        }
        rows.push(row);
    }
    rows.sort_by(|a, b| {
        b.market_cap_usd
            .total_cmp(&a.market_cap_usd)
            .then_with(|| a.coin.cmp(&b.coin))
    });
    Ok(rows
        .into_iter()
        .take(count)
        .map(|r| r.coin.to_uppercase())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, contents).expect("write fixture");
        path
    }

    fn minimal_config_json() -> serde_json::Value {
        serde_json::json!({
            "registry": "channels.csv",
            "patterns": "patterns.json",
            "message_logs": ["log.jsonl"],
            "market_coins": ["btc", "eth"],
            "split_date": "2022-11-11",
            "collection_date": "2023-03-07",
            "output_dir": "out"
        })
    }

    fn write_minimal_inputs(dir: &Path) {
        write(dir, "channels.csv", "name,code,default_exchange,telegram_link\n");
        write(dir, "patterns.json", "[]");
        write(dir, "log.jsonl", "");
    }

    #[test]
    fn fnv1a64_matches_known_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn load_applies_defaults_and_resolves_paths() {
        let dir = tempfile::tempdir().expect("tempdir");
        write_minimal_inputs(dir.path());
        let config_path = write(
            dir.path(),
            "config.json",
            &minimal_config_json().to_string(),
        );

        let config = PipelineConfig::load(&config_path).expect("load");
        assert_eq!(config.registry, dir.path().join("channels.csv"));
        assert_eq!(config.output_dir, dir.path().join("out"));
        assert_eq!(config.dedup_window_minutes, 15);
        assert_eq!(config.horizon_days, 365);
        assert_eq!(config.day_offsets, vec![7, 14, 30, 60, 90, 180, 270, 365]);
        assert_eq!(config.nth_pump_max, 4);
        assert_eq!(config.default_quote, "USDT");
        assert_eq!(config.reference_quote, "USDT");
        assert_eq!(config.market_coins, vec!["BTC", "ETH"]);
        assert_eq!(config.dominant_channel_code, "CPI");
        assert_eq!(config.half_window_weeks, 5);
        assert_eq!(
            config.listing_floor,
            NaiveDate::from_ymd_opt(2005, 1, 1).unwrap()
        );
    }

    #[test]
    fn missing_input_file_names_the_field() {
        let dir = tempfile::tempdir().expect("tempdir");
        write(dir.path(), "patterns.json", "[]");
        write(dir.path(), "log.jsonl", "");
        let config_path = write(
            dir.path(),
            "config.json",
            &minimal_config_json().to_string(),
        );

        let err = PipelineConfig::load(&config_path).expect_err("registry missing");
        match err {
            ConfigError::MissingPath { field, .. } => assert_eq!(field, "registry"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn horizon_shorter_than_max_offset_is_rejected() {
        let dir = tempfile::tempdir().expect("tempdir");
        write_minimal_inputs(dir.path());
        let mut json = minimal_config_json();
        json["horizon_days"] = serde_json::json!(180);
        let config_path = write(dir.path(), "config.json", &json.to_string());

        let err = PipelineConfig::load(&config_path).expect_err("horizon too short");
        match err {
            ConfigError::Invalid { field, .. } => assert_eq!(field, "horizon_days"),
            other => panic!("unexpected error {other:?}"),
        }

        let mut json = minimal_config_json();
        json["day_offsets"] = serde_json::json!([]);
        let config_path = write(dir.path(), "config2.json", &json.to_string());
        let err = PipelineConfig::load(&config_path).expect_err("no offsets");
        match err {
            ConfigError::Invalid { field, .. } => assert_eq!(field, "day_offsets"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn quote_lookup_normalizes_case_and_falls_back() {
        let dir = tempfile::tempdir().expect("tempdir");
        write_minimal_inputs(dir.path());
        let mut json = minimal_config_json();
        json["quote_by_exchange"] = serde_json::json!({"Binance": "btc"});
        let config_path = write(dir.path(), "config.json", &json.to_string());

        let config = PipelineConfig::load(&config_path).expect("load");
        assert_eq!(config.quote_for("binance"), "BTC");
        assert_eq!(config.quote_for("kucoin"), "USDT");
    }

    #[test]
    fn market_cap_file_fills_empty_coin_list() {
        let dir = tempfile::tempdir().expect("tempdir");
        write_minimal_inputs(dir.path());
        let mut caps = String::from("coin,market_cap_usd,volume_usd,as_of_date\n");
        for (i, coin) in ["aaa", "bbb", "ccc", "ddd"].iter().enumerate() {
            caps.push_str(&format!(
                "{coin},{},1000,2023-04-22\n",
                (i as u64 + 1) * 1_000_000
            ));
        }
        write(dir.path(), "caps.csv", &caps);
        let mut json = minimal_config_json();
        json["market_coins"] = serde_json::json!([]);
        json["market_cap_file"] = serde_json::json!("caps.csv");
        let config_path = write(dir.path(), "config.json", &json.to_string());

        let config = PipelineConfig::load(&config_path).expect("load");
        assert_eq!(config.market_coins, vec!["DDD", "CCC", "BBB", "AAA"]);

        let top2 = top_coins_by_market_cap(&dir.path().join("caps.csv"), 2).expect("top 2");
        assert_eq!(top2, vec!["DDD", "CCC"]);
    }

    #[test]
    fn hash_tracks_analysis_parameters_only() {
        let dir = tempfile::tempdir().expect("tempdir");
        write_minimal_inputs(dir.path());
        let config_path = write(
            dir.path(),
            "config.json",
            &minimal_config_json().to_string(),
        );
        let base = PipelineConfig::load(&config_path).expect("load");

        let mut same_analysis = base.clone();
        same_analysis.output_dir = PathBuf::from("/elsewhere");
        same_analysis.registry = PathBuf::from("/elsewhere/channels.csv");
        assert_eq!(base.config_hash(), same_analysis.config_hash());

        let mut different = base.clone();
        different.horizon_days = 400;
        assert_ne!(base.config_hash(), different.config_hash());

        assert_eq!(base.config_hash().len(), 16);
    }
}
