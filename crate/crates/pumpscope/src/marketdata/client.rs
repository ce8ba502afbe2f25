//! The pluggable exchange client contract plus the per-exchange rate limiter.
//!
//! All requests to one exchange funnel through a single `RateLimiter`, which
//! owns the request clock: no request is issued before the retry-after
//! deadline the exchange last gave us, and every issued request is counted.

use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use thiserror::Error;

use super::{Candle, Granularity, Pair};

#[derive(Debug, Clone, Error)]
pub enum ClientError {
    /// The exchange asked us to back off. Retryable after the given delay.
    #[error("rate limited, retry after {retry_after_ms} ms")]
    RateLimited { retry_after_ms: i64 },
    /// Network-level failure. Retryable.
    #[error("transport error: {0}")]
    Transport(String),
    /// The exchange does not know this pair. Permanent.
    #[error("unknown pair {0}")]
    UnknownPair(Pair),
    /// The client cannot serve this request shape. Permanent.
    #[error("unsupported request: {0}")]
    Unsupported(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClientError::RateLimited { .. } | ClientError::Transport(_))
    }
}

/// Candle source abstraction. Batches come back ascending, `open_time >= since`,
/// at most `limit` bars; an empty batch means no data at or after `since`
/// within the client's horizon.
pub trait ExchangeClient {
    fn exchange(&self) -> &str;

    /// Largest batch the client will return per request.
    fn max_batch_size(&self) -> usize;

    fn fetch_ohlcv(
        &self,
        pair: &Pair,
        granularity: Granularity,
        since: DateTime<Utc>,
        limit: usize,
    ) -> Result<Vec<Candle>, ClientError>;

    /// Pairs currently listed on the exchange, used for event-table cleaning.
    fn listed_pairs(&self) -> Result<Vec<Pair>, ClientError>;
}

/// Clock the rate limiter schedules against. The replay stack uses a virtual
/// clock so tests advance time without sleeping.
pub trait RequestClock: Send + Sync {
    fn now_ms(&self) -> i64;
    fn sleep_ms(&self, ms: i64);
}

#[derive(Debug, Default)]
pub struct VirtualClock {
    now: AtomicI64,
}

impl VirtualClock {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }
}

impl RequestClock for VirtualClock {
    fn now_ms(&self) -> i64 {
        self.now.load(Ordering::SeqCst)
    }

    fn sleep_ms(&self, ms: i64) {
        if ms > 0 {
            self.now.fetch_add(ms, Ordering::SeqCst);
        }
    }
}

#[derive(Debug, Default)]
pub struct WallClock;

impl RequestClock for WallClock {
    fn now_ms(&self) -> i64 {
        Utc::now().timestamp_millis()
    }

    fn sleep_ms(&self, ms: i64) {
        if ms > 0 {
            std::thread::sleep(std::time::Duration::from_millis(ms as u64));
        }
    }
}

/// Per-exchange request gate. Tracks the latest retry-after deadline and the
/// total number of requests issued through it.
pub struct RateLimiter {
    clock: Arc<dyn RequestClock>,
    not_before_ms: AtomicI64,
    requests: AtomicU64,
}

impl RateLimiter {
    pub const ATTEMPTS: u32 = 3;
    pub const BACKOFF_BASE_MS: i64 = 100;

    pub fn new(clock: Arc<dyn RequestClock>) -> Self {
        Self { clock, not_before_ms: AtomicI64::new(i64::MIN), requests: AtomicU64::new(0) }
    }

    pub fn clock(&self) -> &Arc<dyn RequestClock> {
        &self.clock
    }

    pub fn requests_made(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    fn wait_until_allowed(&self) {
        let deadline = self.not_before_ms.load(Ordering::SeqCst);
        let now = self.clock.now_ms();
        if now < deadline {
            self.clock.sleep_ms(deadline - now);
        }
    }

    fn defer(&self, delay_ms: i64) {
        let next = self.clock.now_ms() + delay_ms;
        self.not_before_ms.fetch_max(next, Ordering::SeqCst);
    }

    /// Issues one fetch with the retry policy: 3 attempts, exponential backoff
    /// on transport errors, retry-after honored on rate limits. Permanent
    /// errors and exhausted retries surface to the caller, which marks the
    /// sub-range missing for the next pass.
    pub fn fetch(
        &self,
        client: &dyn ExchangeClient,
        pair: &Pair,
        granularity: Granularity,
        since: DateTime<Utc>,
        limit: usize,
    ) -> Result<Vec<Candle>, ClientError> {
        let limit = limit.min(client.max_batch_size());
        let mut last_err = ClientError::Transport("no attempt made".into());
        for attempt in 0..Self::ATTEMPTS {
            self.wait_until_allowed();
            self.requests.fetch_add(1, Ordering::SeqCst);
            match client.fetch_ohlcv(pair, granularity, since, limit) {
                Ok(batch) => return Ok(batch),
                Err(e) => {
                    match &e {
                        ClientError::RateLimited { retry_after_ms } => self.defer(*retry_after_ms),
                        ClientError::Transport(_) => {
                            self.defer(Self::BACKOFF_BASE_MS << attempt);
                        }
                        _ => return Err(e),
                    }
                    last_err = e;
                }
            }
        }
        Err(last_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct FlakyClient {
        clock: Arc<VirtualClock>,
        fail_first: usize,
        calls: Mutex<Vec<i64>>,
        rate_limit_first: bool,
    }

    impl ExchangeClient for FlakyClient {
        fn exchange(&self) -> &str {
            "test"
        }

        fn max_batch_size(&self) -> usize {
            100
        }

        fn fetch_ohlcv(
            &self,
            _pair: &Pair,
            _granularity: Granularity,
            _since: DateTime<Utc>,
            _limit: usize,
        ) -> Result<Vec<Candle>, ClientError> {
            let mut calls = self.calls.lock().unwrap();
            calls.push(self.clock.now_ms());
            let n = calls.len();
            if n <= self.fail_first {
                if self.rate_limit_first {
                    Err(ClientError::RateLimited { retry_after_ms: 500 })
                } else {
                    Err(ClientError::Transport("boom".into()))
                }
            } else {
                Ok(Vec::new())
            }
        }

        fn listed_pairs(&self) -> Result<Vec<Pair>, ClientError> {
            Ok(Vec::new())
        }
    }

    fn pair() -> Pair {
        Pair::new("ABC", "USDT")
    }

    #[test]
    fn honors_retry_after_deadline() {
        let clock = VirtualClock::new();
        let client = FlakyClient {
            clock: clock.clone(),
            fail_first: 1,
            calls: Mutex::new(Vec::new()),
            rate_limit_first: true,
        };
        let limiter = RateLimiter::new(clock);
        let out = limiter.fetch(&client, &pair(), Granularity::Day, Utc::now(), 10);
        assert!(out.is_ok());
        let calls = client.calls.lock().unwrap();
        assert_eq!(calls.len(), 2);
        assert!(calls[1] - calls[0] >= 500, "second request before retry-after deadline");
        assert_eq!(limiter.requests_made(), 2);
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let clock = VirtualClock::new();
        let client = FlakyClient {
            clock: clock.clone(),
            fail_first: 99,
            calls: Mutex::new(Vec::new()),
            rate_limit_first: false,
        };
        let limiter = RateLimiter::new(clock);
        let out = limiter.fetch(&client, &pair(), Granularity::Day, Utc::now(), 10);
        assert!(matches!(out, Err(ClientError::Transport(_))));
        assert_eq!(limiter.requests_made(), 3);
    }

    #[test]
    fn permanent_error_is_not_retried() {
        struct Unknown;
        impl ExchangeClient for Unknown {
            fn exchange(&self) -> &str {
                "test"
            }
            fn max_batch_size(&self) -> usize {
                10
            }
            fn fetch_ohlcv(
                &self,
                pair: &Pair,
                _g: Granularity,
                _s: DateTime<Utc>,
                _l: usize,
            ) -> Result<Vec<Candle>, ClientError> {
                Err(ClientError::UnknownPair(pair.clone()))
            }
            fn listed_pairs(&self) -> Result<Vec<Pair>, ClientError> {
                Ok(Vec::new())
            }
        }
        let limiter = RateLimiter::new(VirtualClock::new());
        let out = limiter.fetch(&Unknown, &pair(), Granularity::Day, Utc::now(), 10);
        assert!(matches!(out, Err(ClientError::UnknownPair(_))));
        assert_eq!(limiter.requests_made(), 1);
    }
}
