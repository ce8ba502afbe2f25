//! File formats around event extraction: the channel registry CSV
//! (`name,code,default_exchange,telegram_link`), exported message logs as
//! JSON lines (`{channel_name, timestamp, text}`), and the event and removal
//! tables as CSV.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use chrono::{DateTime, Timelike, Utc};
use serde::Deserialize;

use super::{
    derive_channel_code, ChannelCode, ChannelRef, EventError, EventTable, PumpEvent, RawMessage,
    Removal,
};

#[derive(Debug, Clone)]
pub struct ChannelEntry {
    pub channel: ChannelRef,
    pub default_exchange: String,
    pub telegram_link: String,
}

/// The channel registry: names, codes (explicit or derived from initials),
/// and each channel's default exchange.
#[derive(Debug, Clone)]
pub struct ChannelRegistry {
    entries: Vec<ChannelEntry>,
    by_name: BTreeMap<String, usize>,
    by_code: BTreeMap<String, usize>,
}

impl ChannelRegistry {
    pub fn from_entries(entries: Vec<ChannelEntry>) -> Result<Self, EventError> {
        let mut by_name: BTreeMap<String, usize> = BTreeMap::new();
        let mut by_code: BTreeMap<String, usize> = BTreeMap::new();
        for (i, entry) in entries.iter().enumerate() {
            if let Some(&j) = by_name.get(&entry.channel.name) {
                return Err(EventError::CodeCollision {
                    code: entry.channel.code.to_string(),
                    first: entries[j].channel.name.clone(),
                    second: entry.channel.name.clone(),
                });
            }
            if let Some(&j) = by_code.get(entry.channel.code.as_str()) {
                return Err(EventError::CodeCollision {
                    code: entry.channel.code.to_string(),
                    first: entries[j].channel.name.clone(),
                    second: entry.channel.name.clone(),
                });
            }
            by_name.insert(entry.channel.name.clone(), i);
            by_code.insert(entry.channel.code.as_str().to_string(), i);
        }
        Ok(Self { entries, by_name, by_code })
    }

    pub fn get(&self, name: &str) -> Option<&ChannelEntry> {
        self.by_name.get(name).map(|&i| &self.entries[i])
    }

    pub fn by_code(&self, code: &str) -> Option<&ChannelEntry> {
        self.by_code.get(code).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[ChannelEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Loads the registry. A row may leave `code` empty to get the derived
/// initials code; explicit codes double as the override map for names whose
/// initials don't work out.
pub fn read_registry(path: &Path) -> Result<ChannelRegistry, EventError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, 1, "file", e))?;
    let expected = ["name", "code", "default_exchange", "telegram_link"];
    let headers = reader.headers().map_err(|e| csv_err(path, 1, "header", e))?;
    if headers != expected.as_slice() {
        return Err(EventError::BadRow {
            path: path.to_path_buf(),
            row: 1,
            column: "header".into(),
            detail: format!("expected {:?}, got {:?}", expected.join(","), headers),
        });
    }
    #[derive(Deserialize)]
    struct Row {
        name: String,
        code: String,
        default_exchange: String,
        telegram_link: String,
    }
    let mut rows: Vec<Row> = Vec::new();
    for (idx, row) in reader.deserialize::<Row>().enumerate() {
        rows.push(row.map_err(|e| csv_err(path, idx as u64 + 2, "record", e))?);
    }
    // Explicit codes act as the override map for every derivation.
    let overrides: BTreeMap<String, String> = rows
        .iter()
        .filter(|r| !r.code.is_empty())
        .map(|r| (r.name.clone(), r.code.clone()))
        .collect();
    let mut entries = Vec::with_capacity(rows.len());
    for row in rows {
        let code = derive_channel_code(&row.name, &overrides)?;
        entries.push(ChannelEntry {
            channel: ChannelRef { name: row.name, code },
            default_exchange: row.default_exchange.to_lowercase(),
            telegram_link: row.telegram_link,
        });
    }
    ChannelRegistry::from_entries(entries)
}

/// Reads one exported message log: JSON lines of
/// `{"channel_name": …, "timestamp": iso8601-utc, "text": …}`. Timestamps
/// are truncated to whole seconds — the finest analysis unit is the 1m bar.
pub fn read_message_log(path: &Path, registry: &ChannelRegistry) -> Result<Vec<RawMessage>, EventError> {
    #[derive(Deserialize)]
    struct LogRecord {
        channel_name: String,
        timestamp: DateTime<Utc>,
        text: String,
    }
    let file = std::fs::File::open(path)
        .map_err(|source| EventError::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let row = idx as u64 + 1;
        let line = line.map_err(|source| EventError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LogRecord = serde_json::from_str(&line).map_err(|e| EventError::BadRow {
            path: path.to_path_buf(),
            row,
            column: "record".into(),
            detail: e.to_string(),
        })?;
        let entry = registry.get(&record.channel_name).ok_or_else(|| EventError::BadRow {
            path: path.to_path_buf(),
            row,
            column: "channel_name".into(),
            detail: format!("channel `{}` not in registry", record.channel_name),
        })?;
        out.push(RawMessage {
            channel: entry.channel.clone(),
            timestamp: record.timestamp.with_nanosecond(0).expect("zero nanos is valid"),
            text: record.text,
        });
    }
    Ok(out)
}

const EVENTS_HEADER: [&str; 6] = ["id", "channel_code", "coin", "exchange", "pair", "announced_at"];

fn format_ts(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub fn write_events_csv(path: &Path, table: &EventTable) -> Result<(), EventError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, 0, "file", e))?;
    writer.write_record(EVENTS_HEADER).map_err(|e| csv_err(path, 0, "file", e))?;
    for e in table.events() {
        writer
            .write_record([
                e.id.clone(),
                e.channel.code.to_string(),
                e.coin.clone(),
                e.exchange.clone(),
                e.pair.to_string(),
                format_ts(e.announced_at),
            ])
            .map_err(|e| csv_err(path, 0, "file", e))?;
    }
    writer.flush().map_err(|source| EventError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

pub fn read_events_csv(path: &Path, registry: &ChannelRegistry) -> Result<EventTable, EventError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, 1, "file", e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, 1, "header", e))?;
    if headers != EVENTS_HEADER.as_slice() {
        return Err(EventError::BadRow {
            path: path.to_path_buf(),
            row: 1,
            column: "header".into(),
            detail: format!("expected {:?}, got {:?}", EVENTS_HEADER.join(","), headers),
        });
    }
    let mut events = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx as u64 + 2;
        let record = record.map_err(|e| csv_err(path, row, "record", e))?;
        let field = |i: usize, column: &str| -> Result<String, EventError> {
            record.get(i).map(str::to_string).ok_or_else(|| EventError::BadRow {
                path: path.to_path_buf(),
                row,
                column: column.into(),
                detail: "missing field".into(),
            })
        };
        let bad = |column: &str, detail: String| EventError::BadRow {
            path: path.to_path_buf(),
            row,
            column: column.into(),
            detail,
        };
        let code = ChannelCode::new(field(1, "channel_code")?)
            .map_err(|e| bad("channel_code", e.to_string()))?;
        // The registry restores the channel's display name; a code the
        // registry doesn't know falls back to itself.
        let name = registry
            .by_code(code.as_str())
            .map(|e| e.channel.name.clone())
            .unwrap_or_else(|| code.to_string());
        let announced_at: DateTime<Utc> = field(5, "announced_at")?
            .parse()
            .map_err(|e: chrono::ParseError| bad("announced_at", e.to_string()))?;
        let pair = field(4, "pair")?
            .parse()
            .map_err(|e: crate::marketdata::DataError| bad("pair", e.to_string()))?;
        let coin = field(2, "coin")?;
        if coin.is_empty() || !coin.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit()) {
            return Err(bad("coin", format!("`{coin}` is not an uppercase ticker")));
        }
        events.push(PumpEvent {
            id: field(0, "id")?,
            coin,
            exchange: field(3, "exchange")?,
            channel: ChannelRef { name, code },
            announced_at,
            pair,
        });
    }
    let provenance = path
        .file_name()
        .map(|n| vec![n.to_string_lossy().into_owned()])
        .unwrap_or_default();
    EventTable::new(events, provenance)
}

pub fn write_removals_csv(path: &Path, removals: &[Removal]) -> Result<(), EventError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, 0, "file", e))?;
    writer
        .write_record(["id", "channel_code", "coin", "exchange", "pair", "announced_at", "reason"])
        .map_err(|e| csv_err(path, 0, "file", e))?;
    for r in removals {
        let e = &r.event;
        writer
            .write_record([
                e.id.clone(),
                e.channel.code.to_string(),
                e.coin.clone(),
                e.exchange.clone(),
                e.pair.to_string(),
                format_ts(e.announced_at),
                r.reason.as_str().to_string(),
            ])
            .map_err(|e| csv_err(path, 0, "file", e))?;
    }
    writer.flush().map_err(|source| EventError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

fn csv_err(path: &Path, row: u64, column: &str, e: csv::Error) -> EventError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => EventError::Io { path: path.to_path_buf(), source },
        other => EventError::BadRow {
            path: path.to_path_buf(),
            row,
            column: column.into(),
            detail: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn write(path: &Path, content: &str) {
        std::fs::write(path, content).unwrap();
    }

    #[test]
    fn registry_derives_missing_codes_and_applies_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("channels.csv");
        write(
            &path,
            "name,code,default_exchange,telegram_link\n\
             Crypto Pump Island,,Binance,https://t.me/cpi\n\
             Binance 24/7,BP2,Binance,https://t.me/b247\n\
             Hit Pump Angels,,Kucoin,https://t.me/hpa\n",
        );
        let registry = read_registry(&path).unwrap();
        assert_eq!(registry.get("Crypto Pump Island").unwrap().channel.code.as_str(), "CPI");
        assert_eq!(registry.get("Binance 24/7").unwrap().channel.code.as_str(), "BP2");
        assert_eq!(registry.get("Hit Pump Angels").unwrap().default_exchange, "kucoin");
        assert_eq!(registry.by_code("HPA").unwrap().channel.name, "Hit Pump Angels");
    }

    #[test]
    fn registry_rejects_code_collisions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("channels.csv");
        write(
            &path,
            "name,code,default_exchange,telegram_link\n\
             Crypto Pump Island,,Binance,\n\
             Cool Pump Infra,CPI,Binance,\n",
        );
        assert!(matches!(read_registry(&path), Err(EventError::CodeCollision { .. })));
    }

    #[test]
    fn message_log_reads_and_truncates_to_seconds() {
        let dir = tempfile::tempdir().unwrap();
        let reg_path = dir.path().join("channels.csv");
        write(&reg_path, "name,code,default_exchange,telegram_link\nAlpha Pumps,,Binance,\n");
        let registry = read_registry(&reg_path).unwrap();
        let log_path = dir.path().join("alpha.jsonl");
        write(
            &log_path,
            r#"{"channel_name": "Alpha Pumps", "timestamp": "2021-06-01T17:00:00.750Z", "text": "pump #ABC"}
{"channel_name": "Alpha Pumps", "timestamp": "2021-06-01T18:00:00Z", "text": ""}
"#,
        );
        let messages = read_message_log(&log_path, &registry).unwrap();
        assert_eq!(messages.len(), 2);
        assert_eq!(messages[0].timestamp, "2021-06-01T17:00:00Z".parse::<DateTime<Utc>>().unwrap());
        assert_eq!(messages[0].channel.code.as_str(), "AP");

        let bad_path = dir.path().join("bad.jsonl");
        write(&bad_path, r#"{"channel_name": "Nobody", "timestamp": "2021-06-01T17:00:00Z", "text": ""}"#);
        let err = read_message_log(&bad_path, &registry).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn events_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let reg_path = dir.path().join("channels.csv");
        write(&reg_path, "name,code,default_exchange,telegram_link\nAlpha Pumps,,Binance,\n");
        let registry = read_registry(&reg_path).unwrap();
        let ch = registry.get("Alpha Pumps").unwrap().channel.clone();
        let base: DateTime<Utc> = "2021-06-01T17:00:00Z".parse().unwrap();
        let table = EventTable::new(
            vec![
                PumpEvent::new("ABC", "binance", ch.clone(), base, "BTC").unwrap(),
                PumpEvent::new("DEF", "kucoin", ch, base + Duration::hours(1), "USDT").unwrap(),
            ],
            vec!["alpha.jsonl".into()],
        )
        .unwrap();
        let path = dir.path().join("events.csv");
        write_events_csv(&path, &table).unwrap();
        let back = read_events_csv(&path, &registry).unwrap();
        assert_eq!(back.events(), table.events());

        let content = std::fs::read_to_string(&path).unwrap();
        assert!(content.starts_with("id,channel_code,coin,exchange,pair,announced_at\n"));
        assert!(content.contains("AP-20210601T170000Z-ABC-binance,AP,ABC,binance,ABC/BTC,2021-06-01T17:00:00Z"));
    }
}
