//! Announcement patterns: an ordered list of regexes, each with a named
//! `coin` capture and an optional `exchange` capture. The set is
//! configuration — loaded from JSON and validated up front, so a malformed
//! pattern fails at load time, never while parsing messages.

use std::path::Path;

use regex::Regex;
use serde::Deserialize;

use super::EventError;

#[derive(Debug, Deserialize)]
struct PatternSpec {
    name: String,
    regex: String,
}

#[derive(Debug, Clone)]
struct CompiledPattern {
    name: String,
    regex: Regex,
}

#[derive(Debug, Clone)]
pub struct PatternSet {
    patterns: Vec<CompiledPattern>,
}

/// What one message announced: the first coin matched, the exchange hint if
/// the pattern captured one, and any further coins the same pattern found
/// (kept for the parse log; only the first drives an event).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Announcement {
    pub coin: String,
    pub exchange_hint: Option<String>,
    pub extra_coins: Vec<String>,
}

/// Uppercases a captured token and strips announcement markers (#, $).
fn normalize_coin(raw: &str) -> Option<String> {
    let stripped = raw.trim().trim_start_matches(['#', '$']);
    let coin = stripped.to_ascii_uppercase();
    let ok = !coin.is_empty() && coin.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit());
    ok.then_some(coin)
}

impl PatternSet {
    pub fn from_json(json: &str) -> Result<Self, EventError> {
        let specs: Vec<PatternSpec> = serde_json::from_str(json).map_err(|e| {
            EventError::BadPattern { name: "pattern set".into(), detail: e.to_string() }
        })?;
        if specs.is_empty() {
            return Err(EventError::BadPattern {
                name: "pattern set".into(),
                detail: "at least one pattern is required".into(),
            });
        }
        let mut patterns = Vec::with_capacity(specs.len());
        for spec in specs {
            let regex = Regex::new(&spec.regex)
                .map_err(|e| EventError::BadPattern { name: spec.name.clone(), detail: e.to_string() })?;
            if !regex.capture_names().any(|n| n == Some("coin")) {
                return Err(EventError::BadPattern {
                    name: spec.name,
                    detail: "missing required named capture `coin`".into(),
                });
            }
            patterns.push(CompiledPattern { name: spec.name, regex });
        }
        Ok(Self { patterns })
    }

    pub fn load(path: &Path) -> Result<Self, EventError> {
        let json = std::fs::read_to_string(path)
            .map_err(|source| EventError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&json)
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// First pattern in priority order that yields a valid coin token wins.
    pub fn parse_announcement(&self, text: &str) -> Option<Announcement> {
        for pattern in &self.patterns {
            let mut coins = Vec::new();
            let mut exchange_hint = None;
            for caps in pattern.regex.captures_iter(text) {
                let Some(coin) = caps.name("coin").and_then(|m| normalize_coin(m.as_str())) else {
                    continue;
                };
                if coins.is_empty() {
                    exchange_hint =
                        caps.name("exchange").map(|m| m.as_str().to_ascii_lowercase());
                }
                if !coins.contains(&coin) {
                    coins.push(coin);
                }
            }
            if !coins.is_empty() {
                let coin = coins.remove(0);
                return Some(Announcement { coin, exchange_hint, extra_coins: coins });
            }
        }
        None
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.patterns.iter().map(|p| p.name.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_set() -> PatternSet {
        PatternSet::from_json(
            r##"[
                {"name": "picked-to-pump", "regex": "(?i)coin\\s+we\\s+have\\s+picked\\s+to\\s+pump\\s+today\\s+is\\s+[#$]?(?P<coin>[A-Za-z0-9]{2,10})"},
                {"name": "next-pump-on", "regex": "(?i)next\\s+pump.*?\\bon\\s+(?P<exchange>[A-Za-z]+)\\b.*?[#$](?P<coin>[A-Za-z0-9]{2,10})"},
                {"name": "hash-ticker", "regex": "[#$](?P<coin>[A-Za-z0-9]{2,10})\\b"}
            ]"##,
        )
        .unwrap()
    }

    #[test]
    fn keyword_form_extracts_coin() {
        let set = default_set();
        let got = set.parse_announcement("The coin we have picked to pump today is #ARKER");
        assert_eq!(got.unwrap().coin, "ARKER");
    }

    #[test]
    fn empty_text_matches_nothing() {
        assert_eq!(default_set().parse_announcement(""), None);
    }

    #[test]
    fn exchange_hint_is_captured_and_lowercased() {
        let set = default_set();
        let got = set.parse_announcement("Next pump is on KuCoin! Get ready for #DEF").unwrap();
        assert_eq!(got.coin, "DEF");
        assert_eq!(got.exchange_hint.as_deref(), Some("kucoin"));
    }

    #[test]
    fn first_pattern_wins_and_extras_are_logged() {
        let set = default_set();
        let got = set
            .parse_announcement("The coin we have picked to pump today is #ABC, also watch #XYZ")
            .unwrap();
        assert_eq!(got.coin, "ABC");
        // The winning pattern matches once; the plain ticker pattern never ran.
        assert!(got.extra_coins.is_empty());

        let got = set.parse_announcement("Watch #ABC and #XYZ tonight").unwrap();
        assert_eq!(got.coin, "ABC");
        assert_eq!(got.extra_coins, vec!["XYZ".to_string()]);
    }

    #[test]
    fn malformed_patterns_fail_at_load() {
        let unbalanced = r#"[{"name": "broken", "regex": "([unclosed"}]"#;
        assert!(matches!(
            PatternSet::from_json(unbalanced),
            Err(EventError::BadPattern { .. })
        ));
        let no_coin_group = r##"[{"name": "nameless", "regex": "#([A-Z]+)"}]"##;
        assert!(matches!(
            PatternSet::from_json(no_coin_group),
            Err(EventError::BadPattern { .. })
        ));
        assert!(matches!(PatternSet::from_json("[]"), Err(EventError::BadPattern { .. })));
    }

    /// Fifty synthetic messages, labelled by hand below — the label column was
    /// written by reading each message, not by running the parser. Exactly the
    /// twenty ticker-bearing messages extract, with the expected coin.
    #[test]
    fn hand_labelled_corpus_of_fifty() {
        let corpus: [(&str, Option<&str>); 50] = [
            ("The coin we have picked to pump today is #ARKER", Some("ARKER")),
            ("Good morning! Pump at 17:00 GMT sharp.", None),
            ("Get ready, 30 minutes to go", None),
            ("Today's pick: #BAX to the moon", Some("BAX")),
            ("Rules: buy fast, hold, sell in profit", None),
            ("Coin will be revealed here, stay tuned", None),
            ("The coin we have picked to pump today is #MDA", Some("MDA")),
            ("Massive volume incoming on $NAV", Some("NAV")),
            ("5 minutes left!!!", None),
            ("Signal: #OAX breakout imminent", Some("OAX")),
            ("We hit 300% last week, join VIP", None),
            ("The coin we have picked to pump today is #PHB", Some("PHB")),
            ("Countdown: one hour to pump", None),
            ("Next target is #QLC, don't miss it", Some("QLC")),
            ("Admins never DM you first", None),
            ("Vote for the next exchange in the poll", None),
            ("The coin we have picked to pump today is #RDN", Some("RDN")),
            ("Huge news coming for $SNM holders", Some("SNM")),
            ("Results: +85% peak on yesterday's pick", None),
            ("Buy #TNT now now now", Some("TNT")),
            ("Stay calm and wait for the signal", None),
            ("The coin we have picked to pump today is #VIB", Some("VIB")),
            ("Reminder: pump tomorrow 16:00 GMT", None),
            ("It's happening: #WPR just listed", Some("WPR")),
            ("Don't FOMO, follow the plan", None),
            ("The coin we have picked to pump today is #XVG", Some("XVG")),
            ("Mods are online, ask your questions", None),
            ("Target 1 reached, target 2 loading", None),
            ("All eyes on $YOYO this evening", Some("YOYO")),
            ("The coin we have picked to pump today is #ZIL", Some("ZIL")),
            ("Free signals every Sunday", None),
            ("Whales are accumulating, be patient", None),
            ("Next pump is on Binance! Get ready for #AGI", Some("AGI")),
            ("Weekly recap posted on the blog", None),
            ("The coin we have picked to pump today is #BRD", Some("BRD")),
            ("Invite 3 friends for premium access", None),
            ("Screenshot your gains below", None),
            ("Tonight we ride #CND together", Some("CND")),
            ("No pump today, see you Friday", None),
            ("The coin we have picked to pump today is #DLT", Some("DLT")),
            ("Keep your BTC ready on the exchange", None),
            ("New ATH for our community!", None),
            ("Set your alarms, big one tomorrow", None),
            ("Pump postponed by 24 hours", None),
            ("The coin we have picked to pump today is #FUEL", Some("FUEL")),
            ("Read the pinned message for rules", None),
            ("Volume bots detected, stay sharp", None),
            ("Charts look ready, patience pays", None),
            ("The answer is in the image above", None),
            ("See you at 17:00, it will be big", None),
        ];
        let set = default_set();
        let extracted: Vec<(usize, String)> = corpus
            .iter()
            .enumerate()
            .filter_map(|(i, (text, _))| set.parse_announcement(text).map(|a| (i, a.coin)))
            .collect();
        let labelled: Vec<(usize, String)> = corpus
            .iter()
            .enumerate()
            .filter_map(|(i, (_, label))| label.map(|c| (i, c.to_string())))
            .collect();
        assert_eq!(labelled.len(), 20);
        assert_eq!(extracted, labelled);
    }
}
