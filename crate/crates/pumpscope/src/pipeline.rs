//! The batch pipeline behind the CLI: parse → listings → fetch → analyze →
//! report. Each stage reads the previous stage's files under the configured
//! output directory, so every stage is restartable and the chain is
//! deterministic end to end.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    self, adjusted_index, aggregate, before_after_means, bin_by_pump_count, censor_offsets,
    cpi_dominant_coins, event_window_analysis, market_index, nth_pump_analysis,
    pre_pump_baseline, pump_performance, relative_index, AnalyticsError, BinScheme, EventIndex,
    EventPerf, IndexSeries, MarketCoinData,
};
use crate::config::{ConfigError, PipelineConfig};
use crate::events::{
    channel_stats, clean_events, merge_events, read_events_csv, read_message_log, read_registry,
    write_events_csv, write_removals_csv, EventError, PatternSet, PumpEvent,
};
use crate::marketdata::{
    day_start, fetch_paginated, fetch_tiered, find_listing_date, store::read_gap_log,
    store::write_gap_log, CandleStore, ClientError, ExchangeClient, FetchPlan, GapRecord,
    Granularity, ListingError, OhlcvSeries, Pair, RateLimiter, ReplayBook, ReplayError,
    RestClient, StoreError, WallClock,
};
use crate::normalize::{convert_quote, ConversionReport, NormalizeError};
use crate::report::{
    write_report, AnalysisResults, BinImpact, CoinCountBin, CoinScatterRow, DecisionRules,
    NthImpact, PlotIndexRow, ReportError, RunCounts,
};

/// Batch size assumed for live REST endpoints.
const LIVE_BATCH_SIZE: usize = 500;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("replay manifest: {0}")]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Listing(#[from] ListingError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no market data source: {0}")]
    MissingSource(&'static str),
    #[error("{exchange} {pair} has no listing date; run the listings stage first")]
    MissingListing { exchange: String, pair: String },
    #[error("{failed} range(s) still unavailable after retries; see {gap_log}")]
    Ingestion { failed: usize, gap_log: PathBuf },
}

impl PipelineError {
    /// Process exit code: 2 for schema/config violations, 3 for market-data
    /// ingestion failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_)
            | PipelineError::Event(_)
            | PipelineError::Replay(_)
            | PipelineError::MissingSource(_)
            | PipelineError::MissingListing { .. } => 2,
            PipelineError::Store(_)
            | PipelineError::Listing(_)
            | PipelineError::Client(_)
            | PipelineError::Ingestion { .. } => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Paths of every artifact under the output directory.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
    pub fn events(&self) -> PathBuf {
        self.root.join("events.csv")
    }
    pub fn parse_log(&self) -> PathBuf {
        self.root.join("parse_log.json")
    }
    pub fn events_clean(&self) -> PathBuf {
        self.root.join("events_clean.csv")
    }
    pub fn removals(&self) -> PathBuf {
        self.root.join("removals.csv")
    }
    pub fn listings(&self) -> PathBuf {
        self.root.join("listings.csv")
    }
    pub fn store_dir(&self) -> PathBuf {
        self.root.join("store")
    }
    pub fn gap_log(&self) -> PathBuf {
        self.root.join("gaps.csv")
    }
    pub fn fetch_log(&self) -> PathBuf {
        self.root.join("fetch_log.json")
    }
    pub fn results(&self) -> PathBuf {
        self.root.join("analysis").join("results.json")
    }
    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// Where candles come from: a replay book (default) or live REST endpoints.
pub enum MarketSource {
    Replay(ReplayBook),
    Live(BTreeMap<String, RestClient>),
}

impl MarketSource {
    /// Opens the source selected by the config: the replay manifest unless
    /// `live` is set, in which case the configured REST endpoints.
    pub fn open(config: &PipelineConfig, live: bool) -> Result<Self, PipelineError> {
        if live {
            if config.live_endpoints.is_empty() {
                return Err(PipelineError::MissingSource(
                    "--live requires live_endpoints in the config",
                ));
            }
            let mut clients = BTreeMap::new();
            for (exchange, base_url) in &config.live_endpoints {
                clients.insert(
                    exchange.clone(),
                    RestClient::new(exchange.clone(), base_url.clone(), LIVE_BATCH_SIZE)?,
                );
            }
            Ok(MarketSource::Live(clients))
        } else {
            let manifest = config.replay_manifest.as_ref().ok_or(PipelineError::MissingSource(
                "no replay_manifest in the config; pass --live to use live endpoints",
            ))?;
            Ok(MarketSource::Replay(ReplayBook::open(manifest)?))
        }
    }

    pub fn limiter(&self) -> RateLimiter {
        match self {
            MarketSource::Replay(book) => RateLimiter::new(book.clock()),
            MarketSource::Live(_) => RateLimiter::new(Arc::new(WallClock)),
        }
    }

    pub fn client(&self, exchange: &str) -> Option<Box<dyn ExchangeClient>> {
        match self {
            MarketSource::Replay(book) => book
                .client(exchange)
                .map(|c| Box::new(c) as Box<dyn ExchangeClient>),
            MarketSource::Live(clients) => clients
                .get(exchange)
                .map(|c| Box::new(c.clone()) as Box<dyn ExchangeClient>),
        }
    }
}

// ---------------------------------------------------------------------------
// parse
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ParseSummary {
    pub messages: usize,
    pub matched: usize,
    pub skipped_unmatched: usize,
    pub skipped_no_exchange: usize,
    pub events: usize,
    pub out: PathBuf,
}

/// Reads every configured message log, extracts announcements, merges
/// cross-channel duplicates, and writes the event table.
pub fn cmd_parse(config: &PipelineConfig) -> Result<ParseSummary, PipelineError> {
    let registry = read_registry(&config.registry)?;
    let patterns = PatternSet::load(&config.patterns)?;
    let layout = OutputLayout::new(&config.output_dir);
    fs::create_dir_all(layout.root()).map_err(io_err(layout.root()))?;

    let mut raw: Vec<PumpEvent> = Vec::new();
    let mut provenance = Vec::new();
    let mut messages = 0usize;
    let mut matched = 0usize;
    let mut skipped_no_exchange = 0usize;
    for log in &config.message_logs {
        provenance.push(
            log.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        );
        for msg in read_message_log(log, &registry)? {
            messages += 1;
            let Some(announcement) = patterns.parse_announcement(&msg.text) else {
                continue;
            };
            matched += 1;
            let default_exchange = registry
                .get(&msg.channel.name)
                .map(|entry| entry.default_exchange.as_str())
                .unwrap_or_default();
            let exchange = match announcement.exchange_hint.as_deref() {
                Some(hint) => hint,
                None if !default_exchange.is_empty() => default_exchange,
                None => {
                    skipped_no_exchange += 1;
                    continue;
                }
            };
            let quote = config.quote_for(exchange);
            raw.push(PumpEvent::new(
                announcement.coin,
                exchange,
                msg.channel.clone(),
                msg.timestamp,
                quote,
            )?);
        }
    }

    let table = merge_events(raw, Duration::minutes(config.dedup_window_minutes), provenance);
    write_events_csv(&layout.events(), &table)?;

    let summary = ParseSummary {
        messages,
        matched,
        skipped_unmatched: messages - matched,
        skipped_no_exchange,
        events: table.len(),
        out: layout.events(),
    };
    let log_path = layout.parse_log();
    let mut text = serde_json::to_string_pretty(&summary)
        .expect("summary serializes");
    text.push('\n');
    fs::write(&log_path, text).map_err(io_err(&log_path))?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// listings
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ListingsSummary {
    pub events_in: usize,
    pub events_kept: usize,
    pub events_removed: usize,
    pub listings: usize,
    pub requests: u64,
}

const LISTINGS_HEADER: [&str; 5] = ["exchange", "pair", "listing_date", "confidence", "probes"];

/// Cleans the event table against each exchange's listed pairs, then finds
/// the listing date of every surviving pair (plus the conversion reference
/// pairs) by binary search over the daily history.
pub fn cmd_listings(
    config: &PipelineConfig,
    source: &MarketSource,
) -> Result<ListingsSummary, PipelineError> {
    let registry = read_registry(&config.registry)?;
    let layout = OutputLayout::new(&config.output_dir);
    let table = read_events_csv(&layout.events(), &registry)?;

    let exchanges: BTreeSet<String> =
        table.events().iter().map(|e| e.exchange.clone()).collect();
    let mut listed: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for exchange in &exchanges {
        if config.excluded_exchanges.contains(exchange) {
            continue;
        }
        let Some(client) = source.client(exchange) else {
            return Err(EventError::AmbiguousExchange(exchange.clone()).into());
        };
        let coins = client.listed_pairs()?.into_iter().map(|p| p.base).collect();
        listed.insert(exchange.clone(), coins);
    }
    let (clean, removals) = clean_events(&table, &listed, &config.excluded_exchanges)?;
    write_events_csv(&layout.events_clean(), &clean)?;
    write_removals_csv(&layout.removals(), &removals)?;

    // Every surviving pair, plus each exchange's conversion reference.
    let mut pairs: BTreeSet<(String, Pair)> = clean
        .events()
        .iter()
        .map(|e| (e.exchange.clone(), e.pair.clone()))
        .collect();
    for exchange in clean.events().iter().map(|e| e.exchange.clone()).collect::<BTreeSet<_>>() {
        let quote = config.quote_for(&exchange);
        if quote != config.reference_quote {
            pairs.insert((exchange.clone(), Pair::new(quote, &config.reference_quote)));
        }
    }

    let limiter = source.limiter();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (exchange, pair) in &pairs {
        let client = source
            .client(exchange)
            .ok_or_else(|| EventError::AmbiguousExchange(exchange.clone()))?;
        let listing = find_listing_date(
            client.as_ref(),
            &limiter,
            pair,
            config.listing_floor,
            config.collection_date,
        )?;
        rows.push(vec![
            exchange.clone(),
            pair.to_string(),
            listing.date.to_string(),
            listing.confidence.as_str().to_string(),
            listing.probes.to_string(),
        ]);
    }
    let listings_path = layout.listings();
    write_string_csv(&listings_path, &LISTINGS_HEADER, &rows)?;

    Ok(ListingsSummary {
        events_in: table.len(),
        events_kept: clean.len(),
        events_removed: removals.len(),
        listings: rows.len(),
        requests: limiter.requests_made(),
    })
}

fn write_string_csv(
    path: &Path,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), PipelineError> {
    let err = |source: csv::Error| match source.into_kind() {
        csv::ErrorKind::Io(source) => PipelineError::Io { path: path.to_path_buf(), source },
        other => PipelineError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(format!("csv: {other:?}")),
        },
    };
    let mut writer = csv::Writer::from_path(path).map_err(err)?;
    writer.write_record(header).map_err(err)?;
    for row in rows {
        writer.write_record(row).map_err(err)?;
    }
    writer.flush().map_err(io_err(path))
}

fn read_listings(path: &Path) -> Result<BTreeMap<(String, String), NaiveDate>, PipelineError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let mut out = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;
        let bad = |what: &str| PipelineError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(format!("listings row {:?}: {what}", row.position())),
        };
        let exchange = row.get(0).ok_or_else(|| bad("missing exchange"))?.to_string();
        let pair = row.get(1).ok_or_else(|| bad("missing pair"))?.to_string();
        let date: NaiveDate = row
            .get(2)
            .ok_or_else(|| bad("missing listing_date"))?
            .parse()
            .map_err(|_| bad("bad listing_date"))?;
        out.insert((exchange, pair), date);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// fetch
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct FetchSummary {
    pub events_fetched: usize,
    pub events_reused: usize,
    pub aux_series_fetched: usize,
    pub requests: u64,
    pub gaps: usize,
    pub failed_ranges: usize,
}

/// Work ledger persisted as `fetch_log.json`: which fetch units finished, so
/// a rerun never re-requests them.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct FetchLedger {
    completed: BTreeSet<String>,
    requests_last_run: u64,
}

impl FetchLedger {
    fn load(path: &Path) -> Result<Self, PipelineError> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })
    }

    fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(self).expect("ledger serializes");
        text.push('\n');
        fs::write(path, text).map_err(io_err(path))
    }
}

/// Collects the three windows for every cleaned event (and, where the pair is
/// not quoted in the reference currency, the same windows of the reference
/// pair), plus daily series for the market-index coins. Completed work is
/// recorded in the fetch ledger, so reruns issue zero requests; missing bar
/// ranges land in the gap log; ranges lost to errors abort with exit 3 after
/// everything recoverable is persisted.
pub fn cmd_fetch(
    config: &PipelineConfig,
    source: &MarketSource,
) -> Result<FetchSummary, PipelineError> {
    let registry = read_registry(&config.registry)?;
    let layout = OutputLayout::new(&config.output_dir);
    let clean = read_events_csv(&layout.events_clean(), &registry)?;
    let listings = read_listings(&layout.listings())?;
    let mut store = CandleStore::open(layout.store_dir())?;
    let mut ledger = FetchLedger::load(&layout.fetch_log())?;
    let limiter = source.limiter();

    let mut gaps: BTreeMap<(String, String, String, i64, i64), GapRecord> = BTreeMap::new();
    if layout.gap_log().exists() {
        for g in read_gap_log(&layout.gap_log())? {
            gaps.insert(gap_key(&g), g);
        }
    }
    let mut failed_ranges = 0usize;
    let mut events_fetched = 0usize;
    let mut events_reused = 0usize;
    let mut aux_fetched = 0usize;

    let client_for = |exchange: &str| -> Result<Box<dyn ExchangeClient>, PipelineError> {
        source
            .client(exchange)
            .ok_or_else(|| EventError::AmbiguousExchange(exchange.to_string()).into())
    };
    let listing_for = |exchange: &str, pair: &Pair| -> Result<NaiveDate, PipelineError> {
        listings.get(&(exchange.to_string(), pair.to_string())).copied().ok_or_else(|| {
            PipelineError::MissingListing {
                exchange: exchange.to_string(),
                pair: pair.to_string(),
            }
        })
    };

    // Tiered windows per event; the same windows again for the reference pair
    // where conversion will be needed.
    for event in clean.events() {
        let mut plans: Vec<(String, FetchPlan)> = Vec::new();
        let event_listing = listing_for(&event.exchange, &event.pair)?;
        plans.push((
            event.id.clone(),
            FetchPlan::new(
                &event.id,
                &event.exchange,
                event.pair.clone(),
                event.announced_at,
                event_listing,
                config.collection_date,
            ),
        ));
        if event.pair.quote != config.reference_quote {
            let reference = Pair::new(&event.pair.quote, &config.reference_quote);
            let ref_listing = listing_for(&event.exchange, &reference)?;
            plans.push((
                format!("{}:ref", event.id),
                FetchPlan::new(
                    format!("{}:ref", event.id),
                    &event.exchange,
                    reference,
                    event.announced_at,
                    ref_listing,
                    config.collection_date,
                ),
            ));
        }
        let mut fetched_here = false;
        for (key, plan) in plans {
            if ledger.completed.contains(&key) {
                continue;
            }
            fetched_here = true;
            let client = client_for(&event.exchange)?;
            let data = fetch_tiered(client.as_ref(), &limiter, &plan);
            failed_ranges += data.failures.len();
            for granularity in [Granularity::Minute, Granularity::Hour, Granularity::Day] {
                let series = data.series(granularity);
                store.put(series)?;
                let (start, end) = plan.window(granularity);
                record_gaps(&mut gaps, series, start, end);
            }
            if data.failures.is_empty() {
                ledger.completed.insert(key);
            }
        }
        if fetched_here {
            events_fetched += 1;
        } else {
            events_reused += 1;
        }
    }

    // Daily series for the market-index constituents, per exchange, from the
    // earliest pump day through collection.
    let first_pump_day = clean.events().first().map(|e| e.announced_at.date_naive());
    if let Some(first_day) = first_pump_day {
        let start = day_start(first_day);
        let end = day_start(config.collection_date) + Duration::days(1);
        let exchanges: BTreeSet<&str> =
            clean.events().iter().map(|e| e.exchange.as_str()).collect();
        for exchange in exchanges {
            let quote = config.quote_for(exchange);
            for coin in &config.market_coins {
                // The reference currency itself has no pair; a coin equal to
                // the exchange quote is covered by the reference series.
                if coin == &config.reference_quote || coin == quote {
                    continue;
                }
                let pair = Pair::new(coin, quote);
                let key = format!("market:{exchange}:{pair}");
                if ledger.completed.contains(&key) {
                    continue;
                }
                let client = client_for(exchange)?;
                match fetch_paginated(
                    client.as_ref(),
                    &limiter,
                    &pair,
                    Granularity::Day,
                    start,
                    end,
                ) {
                    Ok(bars) => {
                        let series =
                            OhlcvSeries::new(exchange, pair.clone(), Granularity::Day, bars)
                                .map_err(StoreError::from)?;
                        store.put(&series)?;
                        record_gaps(&mut gaps, &series, start, end);
                        ledger.completed.insert(key);
                        aux_fetched += 1;
                    }
                    Err(ClientError::UnknownPair(_)) => {
                        // Not listed on this exchange; other exchanges carry it.
                        ledger.completed.insert(key);
                    }
                    Err(e) if e.is_retryable() => {
                        failed_ranges += 1;
                        gaps.insert(
                            gap_key_raw(exchange, &pair, Granularity::Day, &start, &end),
                            GapRecord {
                                exchange: exchange.to_string(),
                                pair: pair.clone(),
                                granularity: Granularity::Day,
                                gap_start_ms: start.timestamp_millis(),
                                gap_end_ms: end.timestamp_millis(),
                            },
                        );
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }

    store.flush()?;
    let gap_rows: Vec<GapRecord> = gaps.into_values().collect();
    write_gap_log(&layout.gap_log(), &gap_rows)?;
    ledger.requests_last_run = limiter.requests_made();
    ledger.save(&layout.fetch_log())?;

    if failed_ranges > 0 {
        return Err(PipelineError::Ingestion {
            failed: failed_ranges,
            gap_log: layout.gap_log(),
        });
    }
    Ok(FetchSummary {
        events_fetched,
        events_reused,
        aux_series_fetched: aux_fetched,
        requests: limiter.requests_made(),
        gaps: gap_rows.len(),
        failed_ranges,
    })
}

fn gap_key(g: &GapRecord) -> (String, String, String, i64, i64) {
    (
        g.exchange.clone(),
        g.pair.to_string(),
        g.granularity.as_str().to_string(),
        g.gap_start_ms,
        g.gap_end_ms,
    )
}

fn gap_key_raw(
    exchange: &str,
    pair: &Pair,
    granularity: Granularity,
    start: &DateTime<Utc>,
    end: &DateTime<Utc>,
) -> (String, String, String, i64, i64) {
    (
        exchange.to_string(),
        pair.to_string(),
        granularity.as_str().to_string(),
        start.timestamp_millis(),
        end.timestamp_millis(),
    )
}

fn record_gaps(
    gaps: &mut BTreeMap<(String, String, String, i64, i64), GapRecord>,
    series: &OhlcvSeries,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
) {
    for (gap_start_ms, gap_end_ms) in series.gaps_within(start, end) {
        let record = GapRecord {
            exchange: series.exchange.clone(),
            pair: series.pair.clone(),
            granularity: series.granularity,
            gap_start_ms,
            gap_end_ms,
        };
        gaps.insert(gap_key(&record), record);
    }
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeSummary {
    pub events: usize,
    pub analyzed: usize,
    pub skipped: usize,
    pub warnings: usize,
    pub out: PathBuf,
}

/// Everything indexed for one event.
struct EventSeries {
    event_id: String,
    coin: String,
    channel_code: String,
    announced_at: DateTime<Utc>,
    coin_index: IndexSeries,
    market: IndexSeries,
    adjusted: IndexSeries,
    adjusted_uncensored: IndexSeries,
}

/// Lazily converts stored series into the reference quote, remembering every
/// outcome so each (exchange, pair, granularity) is converted exactly once.
struct SeriesBank<'a> {
    store: &'a CandleStore,
    reference_quote: &'a str,
    cache: BTreeMap<(String, Pair, Granularity), Option<OhlcvSeries>>,
    conversions: Vec<ConversionReport>,
    warnings: Vec<String>,
}

impl<'a> SeriesBank<'a> {
    fn new(store: &'a CandleStore, reference_quote: &'a str) -> Self {
        Self {
            store,
            reference_quote,
            cache: BTreeMap::new(),
            conversions: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn get(
        &mut self,
        exchange: &str,
        pair: &Pair,
        granularity: Granularity,
    ) -> Option<OhlcvSeries> {
        let key = (exchange.to_string(), pair.clone(), granularity);
        if let Some(hit) = self.cache.get(&key) {
            return hit.clone();
        }
        let result = self.convert(exchange, pair, granularity);
        self.cache.insert(key, result.clone());
        result
    }

    fn convert(
        &mut self,
        exchange: &str,
        pair: &Pair,
        granularity: Granularity,
    ) -> Option<OhlcvSeries> {
        let tag = granularity.as_str();
        let Some(raw) = self.store.series(exchange, pair, granularity) else {
            self.warnings.push(format!("{exchange} {pair} {tag}: no stored bars"));
            return None;
        };
        if pair.quote == self.reference_quote {
            return Some(raw);
        }
        let reference_pair = Pair::new(&pair.quote, self.reference_quote);
        let Some(reference) = self.store.series(exchange, &reference_pair, granularity) else {
            self.warnings.push(format!(
                "{exchange} {pair} {tag}: no {reference_pair} reference bars for conversion"
            ));
            return None;
        };
        match convert_quote(&raw, &reference) {
            Ok((converted, report)) => {
                self.conversions.push(report);
                Some(converted)
            }
            Err(e) => {
                self.warnings.push(format!("{exchange} {pair} {tag}: conversion failed: {e}"));
                None
            }
        }
    }
}

/// Computes per-event performance and index series from the candle store,
/// aggregates the cohort, and writes `analysis/results.json`. Degenerate or
/// data-starved events become warnings, never failures: counts keep them,
/// ratio statistics skip them.
pub fn cmd_analyze(config: &PipelineConfig) -> Result<AnalyzeSummary, PipelineError> {
    let registry = read_registry(&config.registry)?;
    let layout = OutputLayout::new(&config.output_dir);
    let clean = read_events_csv(&layout.events_clean(), &registry)?;
    let store = CandleStore::open(layout.store_dir())?;
    let mut bank = SeriesBank::new(&store, &config.reference_quote);

    // Market-index constituents: converted daily series per exchange. A coin
    // equal to an exchange's quote currency is priced by the reference series
    // itself.
    let exchanges: BTreeSet<String> =
        clean.events().iter().map(|e| e.exchange.clone()).collect();
    let mut market_series: BTreeMap<String, Vec<OhlcvSeries>> = BTreeMap::new();
    for coin in &config.market_coins {
        if coin == &config.reference_quote {
            bank.warnings
                .push(format!("market coin {coin} equals the reference quote; skipped"));
            continue;
        }
        let mut series = Vec::new();
        for exchange in &exchanges {
            let quote = config.quote_for(exchange);
            let pair = if coin == quote {
                Pair::new(quote, &config.reference_quote)
            } else {
                Pair::new(coin, quote)
            };
            if pair.quote == config.reference_quote {
                if let Some(s) = store.series(exchange, &pair, Granularity::Day) {
                    series.push(s);
                }
            } else if let Some(s) = bank.get(exchange, &pair, Granularity::Day) {
                series.push(s);
            }
        }
        if series.is_empty() {
            bank.warnings.push(format!("market coin {coin}: no daily data on any exchange"));
        } else {
            market_series.insert(coin.clone(), series);
        }
    }
    let market_data: Vec<MarketCoinData> = market_series
        .iter()
        .map(|(coin, series)| MarketCoinData {
            coin: coin.clone(),
            series: series.iter().collect(),
        })
        .collect();

    let censors = censor_offsets(
        &clean
            .events()
            .iter()
            .map(|e| (e.id.clone(), e.coin.clone(), e.announced_at))
            .collect::<Vec<_>>(),
    );

    let mut market_cache: BTreeMap<NaiveDate, Option<IndexSeries>> = BTreeMap::new();
    let mut perfs: Vec<EventPerf> = Vec::new();
    let mut indexed: Vec<EventSeries> = Vec::new();
    for event in clean.events() {
        let daily = bank.get(&event.exchange, &event.pair, Granularity::Day);
        let minute = bank.get(&event.exchange, &event.pair, Granularity::Minute);
        let Some(daily) = daily else { continue };

        let baseline = match pre_pump_baseline(&daily, event.announced_at) {
            Ok(b) => b,
            Err(e) => {
                bank.warnings.push(format!("{}: {e}", event.id));
                continue;
            }
        };
        if let Some(minute) = &minute {
            match pump_performance(minute, event.announced_at, &baseline) {
                Ok(p) => perfs.push(EventPerf {
                    event_id: event.id.clone(),
                    coin: event.coin.clone(),
                    exchange: event.exchange.clone(),
                    channel_code: event.channel.code.to_string(),
                    announced_at: event.announced_at,
                    delta_p: p.delta_p,
                    delta_v: p.delta_v,
                    pre_price: baseline.price,
                    max_price: p.max_price,
                    pre_volume: baseline.volume,
                    pump_volume: p.pump_volume,
                    pre_value: p.pre_value,
                    pump_value: p.total_value,
                }),
                Err(e) => bank.warnings.push(format!("{}: {e}", event.id)),
            }
        }

        if baseline.price <= 0.0 {
            bank.warnings
                .push(format!("{}: zero pre-pump price; no index computed", event.id));
            continue;
        }
        let pump_day = event.announced_at.date_naive();
        let censor = censors.get(&event.id).copied().flatten();
        let coin_index =
            relative_index(&daily, &baseline, pump_day, config.horizon_days, censor);
        let uncensored = relative_index(&daily, &baseline, pump_day, config.horizon_days, None);
        if coin_index.is_empty() {
            bank.warnings.push(format!("{}: no daily bars from the pump day on", event.id));
            continue;
        }
        let market = market_cache
            .entry(pump_day)
            .or_insert_with(|| match market_index(&market_data, pump_day, config.horizon_days) {
                Ok(m) => Some(m),
                Err(e) => {
                    bank.warnings.push(format!("market index at {pump_day}: {e}"));
                    None
                }
            })
            .clone();
        let Some(market) = market else { continue };
        let adjusted = adjusted_index(&coin_index, &market)?;
        let adjusted_uncensored = adjusted_index(&uncensored, &market)?;
        indexed.push(EventSeries {
            event_id: event.id.clone(),
            coin: event.coin.clone(),
            channel_code: event.channel.code.to_string(),
            announced_at: event.announced_at,
            coin_index,
            market,
            adjusted,
            adjusted_uncensored,
        });
    }

    let dominant = config.dominant_channel_code.as_str();
    let adjusted_of = |pred: &dyn Fn(&EventSeries) -> bool| -> Vec<&IndexSeries> {
        indexed.iter().filter(|e| pred(e)).map(|e| &e.adjusted).collect()
    };
    let impact_all = aggregate(&adjusted_of(&|_| true), &config.day_offsets);
    let impact_dominant =
        aggregate(&adjusted_of(&|e| e.channel_code == dominant), &config.day_offsets);
    let impact_other =
        aggregate(&adjusted_of(&|e| e.channel_code != dominant), &config.day_offsets);

    // Pump-count bins and nth-pump tables, built from uncensored windows.
    let total_counts: BTreeMap<String, u32> = {
        let mut counts = BTreeMap::new();
        for e in clean.events() {
            *counts.entry(e.coin.clone()).or_insert(0u32) += 1;
        }
        counts
    };
    let uncensored_cohort = |pred: &dyn Fn(&EventSeries) -> bool| -> Vec<EventIndex> {
        indexed
            .iter()
            .filter(|e| pred(e))
            .map(|e| EventIndex {
                event_id: e.event_id.clone(),
                coin: e.coin.clone(),
                channel_code: e.channel_code.clone(),
                announced_at: e.announced_at,
                index: e.adjusted_uncensored.clone(),
            })
            .collect()
    };
    let groups: [(&str, BinScheme, Vec<EventIndex>); 2] = [
        ("dominant", BinScheme::Cpi, uncensored_cohort(&|e| e.channel_code == dominant)),
        ("other", BinScheme::NonCpi, uncensored_cohort(&|e| e.channel_code != dominant)),
    ];
    let mut impact_bins: Vec<BinImpact> = Vec::new();
    let mut impact_nth: Vec<NthImpact> = Vec::new();
    for (group, scheme, cohort) in &groups {
        let group_counts: BTreeMap<String, u32> = cohort
            .iter()
            .map(|e| e.coin.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter_map(|coin| total_counts.get(&coin).map(|&n| (coin, n)))
            .collect();
        for bin in bin_by_pump_count(&group_counts, *scheme) {
            let members: BTreeSet<&str> = bin.coins.iter().map(String::as_str).collect();
            let indices: Vec<&IndexSeries> = cohort
                .iter()
                .filter(|e| members.contains(e.coin.as_str()))
                .map(|e| &e.index)
                .collect();
            impact_bins.push(BinImpact {
                group: group.to_string(),
                label: bin.label.to_string(),
                coins: bin.coins.len(),
                rows: aggregate(&indices, &config.day_offsets),
            });
        }
        for (n, rows) in nth_pump_analysis(cohort, config.nth_pump_max, &config.day_offsets) {
            impact_nth.push(NthImpact { group: group.to_string(), n, rows });
        }
    }

    let split_at = day_start(config.split_date);
    let window = event_window_analysis(&clean, split_at, config.half_window_weeks);
    let split_means = before_after_means(&perfs, split_at, dominant);
    let channels = channel_stats(&clean);
    let pumps_per_coin = coin_count_distribution(&total_counts);

    // Plot series over the full horizon, and the per-coin scatter.
    let mut plot_index = Vec::new();
    for day in 0..=config.horizon_days {
        let collect = |pick: &dyn Fn(&EventSeries) -> Option<f64>| -> Vec<f64> {
            indexed.iter().filter_map(|e| pick(e)).collect()
        };
        let adjusted = collect(&|e| e.adjusted.value(day));
        let summary = analytics::summarize(&adjusted);
        plot_index.push(PlotIndexRow {
            day,
            events: adjusted.len(),
            coin_index_mean: analytics::mean(&collect(&|e| e.coin_index.value(day))),
            market_index_mean: analytics::mean(&collect(&|e| e.market.value(day))),
            adjusted_index_mean: summary.as_ref().map(|s| s.mean),
            adjusted_index_median: summary.as_ref().map(|s| s.median),
            adjusted_index_iqr_mean: summary.as_ref().map(|s| s.iqr_mean),
        });
    }
    let dominant_coins = cpi_dominant_coins(
        clean.events().iter().map(|e| (e.coin.as_str(), e.channel.code.as_str())),
        dominant,
    );
    let coin_scatter = total_counts
        .iter()
        .map(|(coin, &pumps)| {
            let dominant_pumps = clean
                .events()
                .iter()
                .filter(|e| &e.coin == coin && e.channel.code.as_str() == dominant)
                .count();
            let day365: Vec<f64> = indexed
                .iter()
                .filter(|e| &e.coin == coin)
                .filter_map(|e| e.adjusted_uncensored.value(365))
                .collect();
            CoinScatterRow {
                coin: coin.clone(),
                pumps,
                dominant_channel_share_pct: dominant_pumps as f64 / pumps as f64 * 100.0,
                dominant: dominant_coins.contains(coin),
                adjusted_index_day365_mean: analytics::mean(&day365),
            }
        })
        .collect();

    let analyzed = indexed.len();
    let results = AnalysisResults {
        config_hash: config.config_hash(),
        rules: DecisionRules::current(config.dedup_window_minutes),
        counts: RunCounts {
            announcements_extracted: 0, // parse-time figure, restated below if known
            events_merged: 0,
            events_clean: clean.len(),
            events_removed: 0,
            events_analyzed: analyzed,
            events_skipped: clean.len() - analyzed,
            coins: total_counts.len(),
            exchanges: exchanges.len(),
        },
        warnings: bank.warnings.clone(),
        channels,
        pumps_per_coin,
        impact_all,
        impact_dominant,
        impact_other,
        impact_bins,
        impact_nth,
        window,
        split_means,
        events: perfs,
        plot_index,
        coin_scatter,
        conversions: bank.conversions.clone(),
    };
    let mut results = results;
    restate_parse_counts(&layout, &mut results.counts);

    let out = layout.results();
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    results.save(&out)?;
    Ok(AnalyzeSummary {
        events: clean.len(),
        analyzed,
        skipped: clean.len() - analyzed,
        warnings: results.warnings.len(),
        out,
    })
}

/// Fills the parse/clean tallies from the earlier stages' logs, where present.
fn restate_parse_counts(layout: &OutputLayout, counts: &mut RunCounts) {
    if let Ok(text) = fs::read_to_string(layout.parse_log()) {
        if let Ok(parse) = serde_json::from_str::<serde_json::Value>(&text) {
            counts.announcements_extracted =
                parse["matched"].as_u64().unwrap_or(0) as usize;
            counts.events_merged = parse["events"].as_u64().unwrap_or(0) as usize;
        }
    }
    if let Ok(removals) = fs::read_to_string(layout.removals()) {
        counts.events_removed = removals.lines().skip(1).filter(|l| !l.is_empty()).count();
    }
}

/// Pump-count distribution over coins, in the fixed descriptive bins.
fn coin_count_distribution(counts: &BTreeMap<String, u32>) -> Vec<CoinCountBin> {
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
                .filter(|&&n| n >= min && max.is_none_or(|m| n <= m))
                .count();
            CoinCountBin {
                label: label.to_string(),
                coins,
                share_pct: if total == 0 { 0.0 } else { coins as f64 / total as f64 * 100.0 },
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub files: Vec<PathBuf>,
}

/// Renders `analysis/results.json` into the report bundle.
pub fn cmd_report(config: &PipelineConfig) -> Result<ReportSummary, PipelineError> {
    let layout = OutputLayout::new(&config.output_dir);
    let results = AnalysisResults::load(&layout.results())?;
    let files = write_report(&results, &layout.report_dir())?;
    Ok(ReportSummary { files })
}
