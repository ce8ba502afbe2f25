//! Minimal live REST client speaking the widespread kline endpoint shape
//! (`/api/v3/klines?symbol=ABCBTC&interval=1m&startTime=…&limit=…`). The
//! replay client is the default data source; this one is opt-in for live
//! collection against an exchange or a compatible proxy. Public market data
//! only — no credentials.

use chrono::{DateTime, Utc};
use rust_decimal::Decimal;
use serde::Deserialize;
use serde_json::Value;
use std::str::FromStr;

use super::client::{ClientError, ExchangeClient};
use super::{ms_to_utc, Candle, Granularity, Pair};

#[derive(Clone)]
pub struct RestClient {
    exchange: String,
    base_url: String,
    max_batch_size: usize,
    http: reqwest::blocking::Client,
}

impl RestClient {
    pub fn new(
        exchange: impl Into<String>,
        base_url: impl Into<String>,
        max_batch_size: usize,
    ) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(30))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self {
            exchange: exchange.into(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            max_batch_size,
            http,
        })
    }

    fn classify(&self, resp: reqwest::blocking::Response) -> Result<String, ClientError> {
        let status = resp.status();
        if status.as_u16() == 429 || status.as_u16() == 418 {
            let retry_after_ms = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse::<i64>().ok())
                .map(|secs| secs * 1_000)
                .unwrap_or(1_000);
            return Err(ClientError::RateLimited { retry_after_ms });
        }
        let body = resp.text().map_err(|e| ClientError::Transport(e.to_string()))?;
        if status.is_success() {
            Ok(body)
        } else if status.is_client_error() {
            Err(ClientError::Unsupported(format!("{status}: {body}")))
        } else {
            Err(ClientError::Transport(format!("{status}: {body}")))
        }
    }
}

/// Kline rows arrive as arrays: `[open_time_ms, open, high, low, close,
/// volume, …]` with prices as decimal strings.
fn parse_klines(body: &str) -> Result<Vec<Candle>, ClientError> {
    let rows: Vec<Vec<Value>> = serde_json::from_str(body)
        .map_err(|e| ClientError::Transport(format!("bad kline payload: {e}")))?;
    let field = |v: &Value| -> Result<Decimal, ClientError> {
        let parsed = match v {
            Value::String(s) => Decimal::from_str(s).ok(),
            Value::Number(n) => Decimal::from_str(&n.to_string()).ok(),
            _ => None,
        };
        parsed.ok_or_else(|| ClientError::Transport(format!("bad kline field: {v}")))
    };
    rows.iter()
        .map(|row| {
            if row.len() < 6 {
                return Err(ClientError::Transport("kline row shorter than 6 fields".into()));
            }
            let open_time_ms = row[0]
                .as_i64()
                .ok_or_else(|| ClientError::Transport(format!("bad open time: {}", row[0])))?;
            Ok(Candle {
                open_time: ms_to_utc(open_time_ms),
                open: field(&row[1])?,
                high: field(&row[2])?,
                low: field(&row[3])?,
                close: field(&row[4])?,
                volume: field(&row[5])?,
            })
        })
        .collect()
}

impl ExchangeClient for RestClient {
    fn exchange(&self) -> &str {
        &self.exchange
    }

    fn max_batch_size(&self) -> usize {
        self.max_batch_size
    }

    fn fetch_ohlcv(
        &self,
        pair: &Pair,
        granularity: Granularity,
        since: DateTime<Utc>,
        limit: usize,
    ) -> Result<Vec<Candle>, ClientError> {
        let url = format!("{}/api/v3/klines", self.base_url);
        let symbol = format!("{}{}", pair.base, pair.quote);
        let resp = self
            .http
            .get(url)
            .query(&[
                ("symbol", symbol.as_str()),
                ("interval", granularity.as_str()),
                ("startTime", &since.timestamp_millis().to_string()),
                ("limit", &limit.min(self.max_batch_size).to_string()),
            ])
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let body = match self.classify(resp) {
            Ok(body) => body,
            // The common kline API answers an unknown symbol with a 4xx.
            Err(ClientError::Unsupported(_)) => return Err(ClientError::UnknownPair(pair.clone())),
            Err(e) => return Err(e),
        };
        parse_klines(&body)
    }

    fn listed_pairs(&self) -> Result<Vec<Pair>, ClientError> {
        #[derive(Deserialize)]
        struct ExchangeInfo {
            symbols: Vec<SymbolInfo>,
        }
        #[derive(Deserialize)]
        #[serde(rename_all = "camelCase")]
        struct SymbolInfo {
            base_asset: String,
            quote_asset: String,
            status: String,
        }
        let url = format!("{}/api/v3/exchangeInfo", self.base_url);
        let resp = self.http.get(url).send().map_err(|e| ClientError::Transport(e.to_string()))?;
        let body = self.classify(resp)?;
        let info: ExchangeInfo = serde_json::from_str(&body)
            .map_err(|e| ClientError::Transport(format!("bad exchangeInfo payload: {e}")))?;
        Ok(info
            .symbols
            .into_iter()
            .filter(|s| s.status == "TRADING")
            .map(|s| Pair::new(s.base_asset, s.quote_asset))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// One-shot canned HTTP server; returns the base URL to aim the client at.
    fn serve_once(status_line: &'static str, extra_headers: &'static str, body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            if let Ok((mut stream, _)) = listener.accept() {
                let mut buf = [0u8; 8192];
                let _ = stream.read(&mut buf);
                let resp = format!(
                    "HTTP/1.1 {status_line}\r\nContent-Type: application/json\r\n{extra_headers}Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        format!("http://{addr}")
    }

    fn pair() -> Pair {
        Pair::new("ABC", "BTC")
    }

    #[test]
    fn parses_kline_rows() {
        let base = serve_once(
            "200 OK",
            "",
            r#"[[60000,"1.0","2.0","0.5","1.5","100.0",119999,"150.0",42,"50.0","75.0","0"]]"#,
        );
        let client = RestClient::new("binance", base, 500).unwrap();
        let bars = client.fetch_ohlcv(&pair(), Granularity::Minute, ms_to_utc(0), 10).unwrap();
        assert_eq!(bars.len(), 1);
        assert_eq!(bars[0].open_time, ms_to_utc(60_000));
        assert_eq!(bars[0].high.to_string(), "2.0");
        assert_eq!(bars[0].volume.to_string(), "100.0");
    }

    #[test]
    fn rate_limit_carries_retry_after() {
        let base = serve_once("429 Too Many Requests", "Retry-After: 2\r\n", "{}");
        let client = RestClient::new("binance", base, 500).unwrap();
        let err = client.fetch_ohlcv(&pair(), Granularity::Minute, ms_to_utc(0), 10).unwrap_err();
        assert!(matches!(err, ClientError::RateLimited { retry_after_ms: 2_000 }));
    }

    #[test]
    fn unknown_symbol_is_permanent() {
        let base = serve_once("400 Bad Request", "", r#"{"code":-1121,"msg":"Invalid symbol."}"#);
        let client = RestClient::new("binance", base, 500).unwrap();
        let err = client.fetch_ohlcv(&pair(), Granularity::Minute, ms_to_utc(0), 10).unwrap_err();
        assert!(matches!(err, ClientError::UnknownPair(_)));
    }

    #[test]
    fn listed_pairs_filters_trading_symbols() {
        let base = serve_once(
            "200 OK",
            "",
            r#"{"symbols":[
                {"baseAsset":"ABC","quoteAsset":"BTC","status":"TRADING"},
                {"baseAsset":"OLD","quoteAsset":"BTC","status":"BREAK"}
            ]}"#,
        );
        let client = RestClient::new("binance", base, 500).unwrap();
        let pairs = client.listed_pairs().unwrap();
        assert_eq!(pairs, vec![Pair::new("ABC", "BTC")]);
    }
}
