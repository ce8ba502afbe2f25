//! Deterministic replay client: serves candles from fixture files under a
//! manifest-declared batch size, simulated rate limit, optional minute-history
//! horizon, and injected transient failures. Runs on a virtual clock, records
//! every request, and never touches the network — the reference
//! `ExchangeClient` for tests and offline pipelines.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::client::{ClientError, ExchangeClient, RequestClock, VirtualClock};
use super::store::{read_candles_csv, StoreError};
use super::{Candle, DataError, Granularity, OhlcvSeries, Pair};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("{path}: {detail}")]
    Manifest { path: PathBuf, detail: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// On-disk manifest shape. Fixture file paths are relative to the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayManifest {
    pub max_batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit: Option<RateLimitSpec>,
    /// Collection instant; the reference point for the minute horizon.
    pub now_ms: i64,
    /// If set, minute bars older than `now_ms - horizon` are not served,
    /// mimicking exchanges that cap 1m history.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minute_horizon_days: Option<i64>,
    pub exchanges: BTreeMap<String, ExchangeSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateLimitSpec {
    /// Every nth request per exchange is refused …
    pub every_n_requests: u64,
    /// … with this retry-after hint.
    pub retry_after_ms: i64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExchangeSpec {
    #[serde(default)]
    pub series: Vec<SeriesSpec>,
    /// Pairs listed at collection time. Defaults to the pairs with series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listed: Option<Vec<Pair>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FailureSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub pair: Pair,
    pub granularity: Granularity,
    pub file: String,
}

/// Injected transient failure: the next `fail_times` requests for this pair
/// and granularity whose `since` falls in `[from_ms, to_ms)` get a transport
/// error. Three failures defeat one retry cycle; six defeat the second pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureSpec {
    pub pair: Pair,
    pub granularity: Granularity,
    pub from_ms: i64,
    pub to_ms: i64,
    pub fail_times: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RequestOutcome {
    Served(usize),
    RateLimited,
    Failed,
    UnknownPair,
}

/// One request as the exchange saw it, stamped with the virtual clock.
/// `before_deadline` flags a request issued before the retry-after deadline
/// the exchange last gave — the rate-limiter contract says this never happens.
#[derive(Debug, Clone, Serialize)]
pub struct RequestLogEntry {
    pub at_ms: i64,
    pub exchange: String,
    pub pair: Pair,
    pub granularity: Granularity,
    pub since_ms: i64,
    pub limit: usize,
    pub outcome: RequestOutcome,
    pub before_deadline: bool,
}

struct ExchangeBook {
    series: BTreeMap<(Pair, Granularity), OhlcvSeries>,
    listed: BTreeSet<Pair>,
}

struct FailureState {
    spec: FailureSpec,
    remaining: u32,
}

struct ExchangeState {
    requests: u64,
    deadline_ms: i64,
    failures: Vec<FailureState>,
}

struct Inner {
    clock: Arc<VirtualClock>,
    max_batch_size: usize,
    rate_limit: Option<RateLimitSpec>,
    now_ms: i64,
    minute_horizon_days: Option<i64>,
    books: BTreeMap<String, ExchangeBook>,
    state: Mutex<ReplayState>,
}

struct ReplayState {
    log: Vec<RequestLogEntry>,
    exchanges: BTreeMap<String, ExchangeState>,
}

/// Loaded fixture book; hands out per-exchange clients that share one virtual
/// clock and one request log.
#[derive(Clone)]
pub struct ReplayBook {
    inner: Arc<Inner>,
}

impl ReplayBook {
    pub fn open(manifest_path: &Path) -> Result<Self, ReplayError> {
        let raw = std::fs::read_to_string(manifest_path).map_err(|e| ReplayError::Manifest {
            path: manifest_path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let manifest: ReplayManifest =
            serde_json::from_str(&raw).map_err(|e| ReplayError::Manifest {
                path: manifest_path.to_path_buf(),
                detail: e.to_string(),
            })?;
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let mut loaded = Vec::new();
        for (exchange, spec) in &manifest.exchanges {
            for s in &spec.series {
                let candles = read_candles_csv(&base.join(&s.file))?;
                loaded.push(OhlcvSeries::new(exchange.clone(), s.pair.clone(), s.granularity, candles)?);
            }
        }
        Self::assemble(manifest, loaded)
    }

    /// Builds a book straight from series, for tests that don't need files.
    pub fn from_series(manifest: ReplayManifest, series: Vec<OhlcvSeries>) -> Result<Self, ReplayError> {
        Self::assemble(manifest, series)
    }

    fn assemble(manifest: ReplayManifest, series: Vec<OhlcvSeries>) -> Result<Self, ReplayError> {
        let mut books: BTreeMap<String, ExchangeBook> = BTreeMap::new();
        let mut state = ReplayState { log: Vec::new(), exchanges: BTreeMap::new() };
        for (exchange, spec) in &manifest.exchanges {
            let listed: BTreeSet<Pair> = match &spec.listed {
                Some(listed) => listed.iter().cloned().collect(),
                None => spec.series.iter().map(|s| s.pair.clone()).collect(),
            };
            books.insert(exchange.clone(), ExchangeBook { series: BTreeMap::new(), listed });
            state.exchanges.insert(
                exchange.clone(),
                ExchangeState {
                    requests: 0,
                    deadline_ms: i64::MIN,
                    failures: spec
                        .failures
                        .iter()
                        .map(|f| FailureState { spec: f.clone(), remaining: f.fail_times })
                        .collect(),
                },
            );
        }
        for s in series {
            let book = books.entry(s.exchange.clone()).or_insert_with(|| ExchangeBook {
                series: BTreeMap::new(),
                listed: BTreeSet::new(),
            });
            book.listed.insert(s.pair.clone());
            state.exchanges.entry(s.exchange.clone()).or_insert_with(|| ExchangeState {
                requests: 0,
                deadline_ms: i64::MIN,
                failures: Vec::new(),
            });
            book.series.insert((s.pair.clone(), s.granularity), s);
        }
        let clock = VirtualClock::new();
        clock.sleep_ms(manifest.now_ms);
        Ok(Self {
            inner: Arc::new(Inner {
                clock,
                max_batch_size: manifest.max_batch_size,
                rate_limit: manifest.rate_limit,
                now_ms: manifest.now_ms,
                minute_horizon_days: manifest.minute_horizon_days,
                books,
                state: Mutex::new(state),
            }),
        })
    }

    pub fn clock(&self) -> Arc<VirtualClock> {
        self.inner.clock.clone()
    }

    pub fn max_batch_size(&self) -> usize {
        self.inner.max_batch_size
    }

    pub fn now_ms(&self) -> i64 {
        self.inner.now_ms
    }

    pub fn exchanges(&self) -> Vec<String> {
        self.inner.books.keys().cloned().collect()
    }

    pub fn client(&self, exchange: &str) -> Option<ReplayClient> {
        self.inner
            .books
            .contains_key(exchange)
            .then(|| ReplayClient { inner: self.inner.clone(), exchange: exchange.to_string() })
    }

    /// The raw fixture series, bypassing batch limits — the single-request
    /// oracle that pagination output is compared against.
    pub fn fixture(&self, exchange: &str, pair: &Pair, granularity: Granularity) -> Option<&OhlcvSeries> {
        self.inner.books.get(exchange)?.series.get(&(pair.clone(), granularity))
    }

    pub fn request_log(&self) -> Vec<RequestLogEntry> {
        self.inner.state.lock().expect("replay state lock").log.clone()
    }

    pub fn total_requests(&self) -> u64 {
        let state = self.inner.state.lock().expect("replay state lock");
        state.exchanges.values().map(|e| e.requests).sum()
    }
}

/// One exchange's view of the book. Cheap to clone; all clones share state.
#[derive(Clone)]
pub struct ReplayClient {
    inner: Arc<Inner>,
    exchange: String,
}

impl ExchangeClient for ReplayClient {
    fn exchange(&self) -> &str {
        &self.exchange
    }

    fn max_batch_size(&self) -> usize {
        self.inner.max_batch_size
    }

    fn fetch_ohlcv(
        &self,
        pair: &Pair,
        granularity: Granularity,
        since: DateTime<Utc>,
        limit: usize,
    ) -> Result<Vec<Candle>, ClientError> {
        let since_ms = since.timestamp_millis();
        let limit = limit.min(self.inner.max_batch_size);
        let now = self.inner.clock.now_ms();
        let book = self.inner.books.get(&self.exchange).expect("client built from book");
        let mut state = self.inner.state.lock().expect("replay state lock");
        let ex = state.exchanges.get_mut(&self.exchange).expect("client built from book");
        let before_deadline = now < ex.deadline_ms;
        ex.requests += 1;

        let result = 'req: {
            // Simulated rate limit: every nth request is refused with retry-after.
            if let Some(rl) = self.inner.rate_limit {
                if rl.every_n_requests > 0 && ex.requests % rl.every_n_requests == 0 {
                    ex.deadline_ms = now + rl.retry_after_ms;
                    break 'req Err(ClientError::RateLimited { retry_after_ms: rl.retry_after_ms });
                }
            }
            // Injected transient failures, consumed per matching request.
            if let Some(f) = ex.failures.iter_mut().find(|f| {
                f.remaining > 0
                    && f.spec.pair == *pair
                    && f.spec.granularity == granularity
                    && (f.spec.from_ms..f.spec.to_ms).contains(&since_ms)
            }) {
                f.remaining -= 1;
                break 'req Err(ClientError::Transport("injected transient failure".into()));
            }
            if !book.listed.contains(pair) {
                break 'req Err(ClientError::UnknownPair(pair.clone()));
            }
            let mut effective_since = since;
            if granularity == Granularity::Minute {
                if let Some(days) = self.inner.minute_horizon_days {
                    let horizon_start = super::ms_to_utc(self.inner.now_ms - days * 86_400_000);
                    effective_since = effective_since.max(horizon_start);
                }
            }
            match book.series.get(&(pair.clone(), granularity)) {
                Some(series) => {
                    let candles = series.candles();
                    let lo = candles.partition_point(|c| c.open_time < effective_since);
                    Ok(candles[lo..].iter().take(limit).cloned().collect())
                }
                None => Ok(Vec::new()),
            }
        };

        let outcome = match &result {
            Ok(batch) => RequestOutcome::Served(batch.len()),
            Err(ClientError::RateLimited { .. }) => RequestOutcome::RateLimited,
            Err(ClientError::Transport(_)) => RequestOutcome::Failed,
            Err(_) => RequestOutcome::UnknownPair,
        };
        state.log.push(RequestLogEntry {
            at_ms: now,
            exchange: self.exchange.clone(),
            pair: pair.clone(),
            granularity,
            since_ms,
            limit,
            outcome,
            before_deadline,
        });
        result
    }

    fn listed_pairs(&self) -> Result<Vec<Pair>, ClientError> {
        let book = self.inner.books.get(&self.exchange).expect("client built from book");
        Ok(book.listed.iter().cloned().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::client::RateLimiter;
    use crate::marketdata::ms_to_utc;
    use rust_decimal::Decimal;
    use std::str::FromStr as _;

    fn bar(ms: i64) -> Candle {
        let one = Decimal::from_str("1").unwrap();
        Candle { open_time: ms_to_utc(ms), open: one, high: one, low: one, close: one, volume: one }
    }

    fn manifest(max_batch: usize, rate_limit: Option<RateLimitSpec>) -> ReplayManifest {
        ReplayManifest {
            max_batch_size: max_batch,
            rate_limit,
            now_ms: 0,
            minute_horizon_days: None,
            exchanges: BTreeMap::new(),
        }
    }

    fn daily_series(n: usize) -> OhlcvSeries {
        let bars = (0..n).map(|i| bar(i as i64 * 86_400_000)).collect();
        OhlcvSeries::new("binance", Pair::new("ABC", "USDT"), Granularity::Day, bars).unwrap()
    }

    #[test]
    fn serves_batches_from_since_capped_at_limit() {
        let book = ReplayBook::from_series(manifest(50, None), vec![daily_series(100)]).unwrap();
        let client = book.client("binance").unwrap();
        let pair = Pair::new("ABC", "USDT");
        let batch = client.fetch_ohlcv(&pair, Granularity::Day, ms_to_utc(0), 50).unwrap();
        assert_eq!(batch.len(), 50);
        assert_eq!(batch[0].open_time, ms_to_utc(0));

        let past_end = client
            .fetch_ohlcv(&pair, Granularity::Day, ms_to_utc(100 * 86_400_000), 50)
            .unwrap();
        assert!(past_end.is_empty());
    }

    #[test]
    fn unknown_pair_is_permanent() {
        let book = ReplayBook::from_series(manifest(50, None), vec![daily_series(3)]).unwrap();
        let client = book.client("binance").unwrap();
        let err = client
            .fetch_ohlcv(&Pair::new("NOPE", "USDT"), Granularity::Day, ms_to_utc(0), 10)
            .unwrap_err();
        assert!(matches!(err, ClientError::UnknownPair(_)));
    }

    #[test]
    fn rate_limit_refuses_every_nth_request_and_logs_deadline_compliance() {
        let rl = RateLimitSpec { every_n_requests: 3, retry_after_ms: 1_000 };
        let book = ReplayBook::from_series(manifest(10, Some(rl)), vec![daily_series(100)]).unwrap();
        let client = book.client("binance").unwrap();
        let limiter = RateLimiter::new(book.clock());
        let pair = Pair::new("ABC", "USDT");
        let mut since = ms_to_utc(0);
        for _ in 0..6 {
            let batch = limiter.fetch(&client, &pair, Granularity::Day, since, 10).unwrap();
            since = batch.last().unwrap().open_time + Granularity::Day.duration();
        }
        let log = book.request_log();
        let limited = log.iter().filter(|e| matches!(e.outcome, RequestOutcome::RateLimited)).count();
        assert!(limited >= 2, "expected simulated refusals, log: {}", log.len());
        assert!(log.iter().all(|e| !e.before_deadline), "request issued before retry-after deadline");
    }

    #[test]
    fn injected_failures_consume_then_clear() {
        let mut m = manifest(10, None);
        m.exchanges.insert(
            "binance".into(),
            ExchangeSpec {
                series: Vec::new(),
                listed: Some(vec![Pair::new("ABC", "USDT")]),
                failures: vec![FailureSpec {
                    pair: Pair::new("ABC", "USDT"),
                    granularity: Granularity::Day,
                    from_ms: 0,
                    to_ms: 86_400_000,
                    fail_times: 2,
                }],
            },
        );
        let book = ReplayBook::from_series(m, vec![daily_series(5)]).unwrap();
        let client = book.client("binance").unwrap();
        let pair = Pair::new("ABC", "USDT");
        assert!(client.fetch_ohlcv(&pair, Granularity::Day, ms_to_utc(0), 5).is_err());
        assert!(client.fetch_ohlcv(&pair, Granularity::Day, ms_to_utc(0), 5).is_err());
        assert!(client.fetch_ohlcv(&pair, Granularity::Day, ms_to_utc(0), 5).is_ok());
    }

    #[test]
    fn minute_horizon_hides_old_bars() {
        let mut m = manifest(10, None);
        m.now_ms = 10 * 86_400_000;
        m.minute_horizon_days = Some(2);
        let bars = (0..10 * 1440).map(|i| bar(i * 60_000)).collect();
        let series =
            OhlcvSeries::new("binance", Pair::new("ABC", "USDT"), Granularity::Minute, bars).unwrap();
        let book = ReplayBook::from_series(m, vec![series]).unwrap();
        let client = book.client("binance").unwrap();
        let batch = client
            .fetch_ohlcv(&Pair::new("ABC", "USDT"), Granularity::Minute, ms_to_utc(0), 10)
            .unwrap();
        assert_eq!(batch[0].open_time, ms_to_utc(8 * 86_400_000));
    }
}
