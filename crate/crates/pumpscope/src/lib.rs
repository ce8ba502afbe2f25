//! Pump-event measurement pipeline: extract announced pumps from channel
//! message logs, ingest tiered OHLCV market data through a pluggable
//! exchange client, re-quote BTC pairs in USDT, and compute short- and
//! long-term market-adjusted price-impact statistics.

pub mod analytics;
pub mod config;
pub mod events;
pub mod marketdata;
pub mod normalize;
pub mod pipeline;
pub mod report;
