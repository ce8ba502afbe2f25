//! Candle store: merged OHLCV bars keyed by (exchange, pair, granularity),
//! persisted as one CSV per key plus a gap log. Round-trips are lossless:
//! prices and volumes survive as exact decimal strings.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ms_to_utc, Candle, DataError, Granularity, OhlcvSeries, Pair};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: cannot parse store filename, expected exchange__BASE-QUOTE__granularity.csv")]
    BadFilename { path: PathBuf },
    #[error("{path}: row {row}, column `{column}`: {detail}")]
    BadRow { path: PathBuf, row: u64, column: &'static str, detail: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

pub const CANDLE_CSV_HEADER: [&str; 6] = ["open_time_ms", "open", "high", "low", "close", "volume"];

/// A missing bar range, logged after the final fetch pass. Never filled in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapRecord {
    pub exchange: String,
    pub pair: Pair,
    pub granularity: Granularity,
    pub gap_start_ms: i64,
    pub gap_end_ms: i64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PutStats {
    pub inserted: usize,
    pub replaced: usize,
}

type Key = (String, Pair, Granularity);

/// In-memory merge map with optional directory persistence.
#[derive(Debug)]
pub struct CandleStore {
    dir: Option<PathBuf>,
    map: BTreeMap<Key, BTreeMap<i64, Candle>>,
    dirty: BTreeSet<Key>,
}

impl CandleStore {
    pub fn in_memory() -> Self {
        Self { dir: None, map: BTreeMap::new(), dirty: BTreeSet::new() }
    }

    /// Opens a directory-backed store, loading every candle CSV already there.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| StoreError::Io { path: dir.clone(), source })?;
        let mut store = Self { dir: Some(dir.clone()), map: BTreeMap::new(), dirty: BTreeSet::new() };
        let entries =
            fs::read_dir(&dir).map_err(|source| StoreError::Io { path: dir.clone(), source })?;
        for entry in entries {
            let entry = entry.map_err(|source| StoreError::Io { path: dir.clone(), source })?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("csv") {
                continue;
            }
            let (exchange, pair, granularity) = parse_store_filename(&path)?;
            let candles = read_candles_csv(&path)?;
            // Re-validate through the series constructor so a corrupt file is
            // rejected here, with the filename, not deep inside analytics.
            let series = OhlcvSeries::new(exchange, pair, granularity, candles)?;
            store.put(&series)?;
        }
        store.dirty.clear();
        Ok(store)
    }

    /// Merges bars by open_time; a bar written twice at the same timestamp
    /// keeps the newest value.
    pub fn put(&mut self, series: &OhlcvSeries) -> Result<PutStats, StoreError> {
        let key = (series.exchange.clone(), series.pair.clone(), series.granularity);
        let slot = self.map.entry(key.clone()).or_default();
        let mut stats = PutStats::default();
        for c in series.candles() {
            c.validate()?;
            match slot.insert(c.open_time.timestamp_millis(), c.clone()) {
                Some(_) => stats.replaced += 1,
                None => stats.inserted += 1,
            }
        }
        if stats.inserted + stats.replaced > 0 {
            self.dirty.insert(key);
        }
        Ok(stats)
    }

    /// Full merged series for a key, if any bars are present.
    pub fn series(&self, exchange: &str, pair: &Pair, granularity: Granularity) -> Option<OhlcvSeries> {
        let key = (exchange.to_string(), pair.clone(), granularity);
        self.map.get(&key).map(|slot| {
            OhlcvSeries::new(exchange, pair.clone(), granularity, slot.values().cloned().collect())
                .expect("merged bars stay valid: per-bar checks ran on put, map orders by time")
        })
    }

    /// Bars with `start_ms <= open_time < end_ms` for a key.
    pub fn get(
        &self,
        exchange: &str,
        pair: &Pair,
        granularity: Granularity,
        start_ms: i64,
        end_ms: i64,
    ) -> Option<OhlcvSeries> {
        let key = (exchange.to_string(), pair.clone(), granularity);
        self.map.get(&key).map(|slot| {
            let candles = slot.range(start_ms..end_ms).map(|(_, c)| c.clone()).collect();
            OhlcvSeries::new(exchange, pair.clone(), granularity, candles)
                .expect("range view of valid bars stays valid")
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = (&str, &Pair, Granularity)> {
        self.map.keys().map(|(e, p, g)| (e.as_str(), p, *g))
    }

    pub fn len(&self) -> usize {
        self.map.values().map(|slot| slot.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Writes every key touched since the last flush to its CSV file.
    pub fn flush(&mut self) -> Result<(), StoreError> {
        let Some(dir) = self.dir.clone() else {
            self.dirty.clear();
            return Ok(());
        };
        for key in std::mem::take(&mut self.dirty) {
            let (exchange, pair, granularity) = &key;
            let path = dir.join(store_filename(exchange, pair, *granularity));
            let slot = &self.map[&key];
            let candles: Vec<Candle> = slot.values().cloned().collect();
            write_candles_csv(&path, &candles)?;
        }
        Ok(())
    }
}

pub fn store_filename(exchange: &str, pair: &Pair, granularity: Granularity) -> String {
    format!("{}__{}__{}.csv", exchange, pair.file_stem(), granularity)
}

fn parse_store_filename(path: &Path) -> Result<(String, Pair, Granularity), StoreError> {
    let bad = || StoreError::BadFilename { path: path.to_path_buf() };
    let stem = path.file_stem().and_then(|s| s.to_str()).ok_or_else(bad)?;
    let mut parts = stem.split("__");
    let exchange = parts.next().ok_or_else(bad)?;
    let pair: Pair = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let granularity: Granularity = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    if exchange.is_empty() || parts.next().is_some() {
        return Err(bad());
    }
    Ok((exchange.to_string(), pair, granularity))
}

/// Reads `open_time_ms,open,high,low,close,volume` rows. Errors carry the
/// row number and column so a bad file is reported, not half-loaded.
pub fn read_candles_csv(path: &Path) -> Result<Vec<Candle>, StoreError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_open_err(path, e))?;
    {
        let headers = reader.headers().map_err(|e| csv_open_err(path, e))?;
        if headers != CANDLE_CSV_HEADER.as_slice() {
            return Err(StoreError::BadRow {
                path: path.to_path_buf(),
                row: 1,
                column: "header",
                detail: format!("expected {:?}, got {:?}", CANDLE_CSV_HEADER.join(","), headers),
            });
        }
    }
    let mut out = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx as u64 + 2; // header is row 1
        let record = record.map_err(|e| StoreError::BadRow {
            path: path.to_path_buf(),
            row,
            column: "record",
            detail: e.to_string(),
        })?;
        let field = |i: usize, column: &'static str| -> Result<&str, StoreError> {
            record.get(i).ok_or_else(|| StoreError::BadRow {
                path: path.to_path_buf(),
                row,
                column,
                detail: "missing field".into(),
            })
        };
        let open_time_ms: i64 = field(0, "open_time_ms")?.parse().map_err(|e| StoreError::BadRow {
            path: path.to_path_buf(),
            row,
            column: "open_time_ms",
            detail: format!("{e}"),
        })?;
        let dec = |i: usize, column: &'static str| -> Result<Decimal, StoreError> {
            let raw = field(i, column)?;
            Decimal::from_str(raw).map_err(|e| StoreError::BadRow {
                path: path.to_path_buf(),
                row,
                column,
                detail: format!("`{raw}`: {e}"),
            })
        };
        out.push(Candle {
            open_time: ms_to_utc(open_time_ms),
            open: dec(1, "open")?,
            high: dec(2, "high")?,
            low: dec(3, "low")?,
            close: dec(4, "close")?,
            volume: dec(5, "volume")?,
        });
    }
    Ok(out)
}

pub fn write_candles_csv(path: &Path, candles: &[Candle]) -> Result<(), StoreError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_open_err(path, e))?;
    writer.write_record(CANDLE_CSV_HEADER).map_err(|e| csv_open_err(path, e))?;
    for c in candles {
        writer
            .write_record([
                c.open_time.timestamp_millis().to_string(),
                c.open.to_string(),
                c.high.to_string(),
                c.low.to_string(),
                c.close.to_string(),
                c.volume.to_string(),
            ])
            .map_err(|e| csv_open_err(path, e))?;
    }
    writer.flush().map_err(|source| StoreError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

pub fn write_gap_log(path: &Path, gaps: &[GapRecord]) -> Result<(), StoreError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_open_err(path, e))?;
    writer
        .write_record(["exchange", "pair", "granularity", "gap_start_ms", "gap_end_ms"])
        .map_err(|e| csv_open_err(path, e))?;
    for g in gaps {
        writer
            .write_record([
                g.exchange.clone(),
                g.pair.to_string(),
                g.granularity.to_string(),
                g.gap_start_ms.to_string(),
                g.gap_end_ms.to_string(),
            ])
            .map_err(|e| csv_open_err(path, e))?;
    }
    writer.flush().map_err(|source| StoreError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

pub fn read_gap_log(path: &Path) -> Result<Vec<GapRecord>, StoreError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_open_err(path, e))?;
    let mut out = Vec::new();
    for (idx, record) in reader.deserialize::<GapRecord>().enumerate() {
        out.push(record.map_err(|e| StoreError::BadRow {
            path: path.to_path_buf(),
            row: idx as u64 + 2,
            column: "record",
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

fn csv_open_err(path: &Path, e: csv::Error) -> StoreError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => StoreError::Io { path: path.to_path_buf(), source },
        other => StoreError::BadRow {
            path: path.to_path_buf(),
            row: 0,
            column: "file",
            detail: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn bar(ms: i64, close: &str) -> Candle {
        let d = |s: &str| Decimal::from_str(s).unwrap();
        Candle {
            open_time: ms_to_utc(ms),
            open: d(close),
            high: d(close),
            low: d(close),
            close: d(close),
            volume: d("1"),
        }
    }

    fn series(exchange: &str, bars: Vec<Candle>) -> OhlcvSeries {
        OhlcvSeries::new(exchange, Pair::new("ABC", "USDT"), Granularity::Minute, bars).unwrap()
    }

    #[test]
    fn put_then_get_round_trips() {
        let mut store = CandleStore::in_memory();
        let s = series("binance", vec![bar(0, "1.10"), bar(60_000, "2")]);
        store.put(&s).unwrap();
        let back = store.series("binance", &s.pair, Granularity::Minute).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn overlapping_puts_union_without_duplicates() {
        let mut store = CandleStore::in_memory();
        store.put(&series("binance", vec![bar(0, "1"), bar(60_000, "2")])).unwrap();
        let stats = store.put(&series("binance", vec![bar(60_000, "2"), bar(120_000, "3")])).unwrap();
        assert_eq!((stats.inserted, stats.replaced), (1, 1));
        let back = store.series("binance", &Pair::new("ABC", "USDT"), Granularity::Minute).unwrap();
        assert_eq!(back.len(), 3);
    }

    #[test]
    fn interleaved_puts_match_map_oracle() {
        // Randomized order of overlapping writes; oracle is a plain map
        // receiving the same inserts in the same order.
        let mut store = CandleStore::in_memory();
        let mut oracle: HashMap<i64, Candle> = HashMap::new();
        let writes = [
            vec![bar(0, "1"), bar(120_000, "3")],
            vec![bar(60_000, "2")],
            vec![bar(0, "1.5"), bar(180_000, "4")],
            vec![bar(120_000, "3"), bar(60_000, "2")],
        ];
        for w in writes {
            // The series constructor wants ordered bars; sort a copy.
            let mut sorted = w.clone();
            sorted.sort_by_key(|c| c.open_time);
            sorted.dedup_by_key(|c| c.open_time);
            store.put(&series("binance", sorted)).unwrap();
            for c in w {
                oracle.insert(c.open_time.timestamp_millis(), c);
            }
        }
        let back = store.series("binance", &Pair::new("ABC", "USDT"), Granularity::Minute).unwrap();
        let mut expect: Vec<(i64, Candle)> = oracle.into_iter().collect();
        expect.sort_by_key(|(ms, _)| *ms);
        let got: Vec<(i64, Candle)> =
            back.candles().iter().map(|c| (c.open_time.timestamp_millis(), c.clone())).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let pair = Pair::new("ABC", "USDT");
        // Mixed scales on purpose: 1.10 must come back as "1.10", not "1.1".
        let bars = vec![bar(0, "0.00000001"), bar(60_000, "1.10"), bar(120_000, "98765.4321")];
        {
            let mut store = CandleStore::open(dir.path()).unwrap();
            store.put(&series("binance", bars.clone())).unwrap();
            store.flush().unwrap();
        }
        let reopened = CandleStore::open(dir.path()).unwrap();
        let back = reopened.series("binance", &pair, Granularity::Minute).unwrap();
        for (a, b) in back.candles().iter().zip(&bars) {
            assert_eq!(a.open_time, b.open_time);
            assert_eq!(a.close.to_string(), b.close.to_string());
            assert_eq!(a.volume.to_string(), b.volume.to_string());
        }
    }

    #[test]
    fn range_get_is_half_open() {
        let mut store = CandleStore::in_memory();
        store.put(&series("binance", vec![bar(0, "1"), bar(60_000, "2"), bar(120_000, "3")])).unwrap();
        let view = store
            .get("binance", &Pair::new("ABC", "USDT"), Granularity::Minute, 0, 120_000)
            .unwrap();
        assert_eq!(view.len(), 2);
    }

    #[test]
    fn bad_row_is_reported_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("binance__ABC-USDT__1m.csv");
        std::fs::write(&path, "open_time_ms,open,high,low,close,volume\n0,1,1,1,not-a-price,1\n")
            .unwrap();
        let err = CandleStore::open(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains("close"), "{msg}");
    }

    #[test]
    fn filename_round_trip() {
        let pair = Pair::new("ARKER", "BTC");
        let name = store_filename("kucoin", &pair, Granularity::Day);
        assert_eq!(name, "kucoin__ARKER-BTC__1d.csv");
        let parsed = parse_store_filename(Path::new(&name)).unwrap();
        assert_eq!(parsed, ("kucoin".to_string(), pair, Granularity::Day));
    }
}
