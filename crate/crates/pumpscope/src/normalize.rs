//! Quote-currency normalization: convert BTC-quoted series to USDT-equivalent
//! prices through a BTC/USDT reference series, plus timestamp alignment.
//!
//! Open and close convert with the reference bar's own open and close (the
//! interval endpoints coincide across pairs); high and low convert with the
//! reference bar's typical price, since the intra-bar extremes of the two
//! pairs generally happen at different instants. Volume is in base units and
//! passes through untouched.

use chrono::{DateTime, Utc};
use rust_decimal::Decimal;
use serde::Serialize;
use thiserror::Error;

use crate::marketdata::{Candle, DataError, Granularity, OhlcvSeries, Pair};

/// How the close is converted. The reference bar's typical price is an
/// alternative reading; the rule in force is stamped into every report so a
/// sensitivity rerun can tell results apart.
pub const CLOSE_RULE: &str = "close_times_reference_close";

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("granularity mismatch: series is {series}, reference is {reference}")]
    GranularityMismatch { series: Granularity, reference: Granularity },
    #[error("reference series is empty")]
    EmptyReference,
    #[error("series quoted in {series_quote} cannot be converted through reference pair {reference}")]
    QuoteMismatch { series_quote: String, reference: Pair },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// (high + low + close) / 3 of one bar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TypicalPrice {
    pub value: Decimal,
}

pub fn typical_price(c: &Candle) -> TypicalPrice {
    TypicalPrice { value: (c.high + c.low + c.close) / Decimal::from(3) }
}

/// Outcome of one series conversion, emitted as a JSON line in the pipeline log.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct ConversionReport {
    pub exchange: String,
    pub pair: Pair,
    pub granularity: Granularity,
    pub converted: usize,
    /// Bars dropped because the reference had no bar at that timestamp.
    pub skipped: usize,
    /// Bars whose converted high/low had to be widened to bracket open/close.
    pub repairs: usize,
    pub source_quote: String,
    pub target_quote: String,
    pub close_rule: String,
}

/// Converts a series quoted in the reference pair's base currency (e.g.
/// ALT/BTC through BTC/USDT) into the reference pair's quote currency.
///
/// Per aligned bar: open × ref.open, high × typical(ref), low × typical(ref),
/// close × ref.close, volume unchanged. Bars with no reference bar at the
/// same timestamp are dropped and counted — rates are never carried forward.
pub fn convert_quote(
    series: &OhlcvSeries,
    reference: &OhlcvSeries,
) -> Result<(OhlcvSeries, ConversionReport), NormalizeError> {
    if series.granularity != reference.granularity {
        return Err(NormalizeError::GranularityMismatch {
            series: series.granularity,
            reference: reference.granularity,
        });
    }
    if reference.is_empty() {
        return Err(NormalizeError::EmptyReference);
    }
    if series.pair.quote != reference.pair.base {
        return Err(NormalizeError::QuoteMismatch {
            series_quote: series.pair.quote.clone(),
            reference: reference.pair.clone(),
        });
    }
    let mut out = Vec::with_capacity(series.len());
    let mut skipped = 0usize;
    let mut repairs = 0usize;
    for (c, r) in join(series, reference, &mut skipped) {
        let typical = typical_price(r).value;
        let open = c.open * r.open;
        let close = c.close * r.close;
        let mut high = c.high * typical;
        let mut low = c.low * typical;
        // The typical-price rate can land high below open/close (or low
        // above); widen to the envelope of the four converted prices so the
        // bar stays a valid candle.
        let widened_high = high.max(open).max(close);
        let widened_low = low.min(open).min(close);
        if widened_high != high || widened_low != low {
            repairs += 1;
            high = widened_high;
            low = widened_low;
        }
        out.push(Candle { open_time: c.open_time, open, high, low, close, volume: c.volume });
    }
    let pair = Pair::new(series.pair.base.clone(), reference.pair.quote.clone());
    let report = ConversionReport {
        exchange: series.exchange.clone(),
        pair: pair.clone(),
        granularity: series.granularity,
        converted: out.len(),
        skipped,
        repairs,
        source_quote: series.pair.quote.clone(),
        target_quote: reference.pair.quote.clone(),
        close_rule: CLOSE_RULE.to_string(),
    };
    let converted = OhlcvSeries::new(series.exchange.clone(), pair, series.granularity, out)?;
    Ok((converted, report))
}

fn join<'a>(
    series: &'a OhlcvSeries,
    reference: &'a OhlcvSeries,
    skipped: &mut usize,
) -> Vec<(&'a Candle, &'a Candle)> {
    let mut out = Vec::new();
    for c in series.candles() {
        match reference.at(c.open_time) {
            Some(r) => out.push((c, r)),
            None => *skipped += 1,
        }
    }
    out
}

/// Inner join of two equal-granularity series on open_time, in time order.
pub fn align<'a>(
    a: &'a OhlcvSeries,
    b: &'a OhlcvSeries,
) -> Vec<(DateTime<Utc>, &'a Candle, &'a Candle)> {
    let (xs, ys) = (a.candles(), b.candles());
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < xs.len() && j < ys.len() {
        match xs[i].open_time.cmp(&ys[j].open_time) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push((xs[i].open_time, &xs[i], &ys[j]));
                i += 1;
                j += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::str::FromStr;

    fn d(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    fn t(minute: i64) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap() + chrono::Duration::minutes(minute)
    }

    fn bar(minute: i64, o: &str, h: &str, l: &str, c: &str, v: &str) -> Candle {
        Candle { open_time: t(minute), open: d(o), high: d(h), low: d(l), close: d(c), volume: d(v) }
    }

    fn series(pair: &str, bars: Vec<Candle>) -> OhlcvSeries {
        OhlcvSeries::new("binance", pair.parse().unwrap(), Granularity::Minute, bars).unwrap()
    }

    #[test]
    fn typical_price_is_mean_of_high_low_close() {
        assert_eq!(typical_price(&bar(0, "2", "3", "1", "2", "0")).value, d("2"));
        let flat = bar(0, "7.5", "7.5", "7.5", "7.5", "1");
        assert_eq!(typical_price(&flat).value, d("7.5"));
    }

    #[test]
    fn typical_price_stays_within_bar_range() {
        let mut rng = StdRng::seed_from_u64(7);
        for i in 0..500 {
            let low = Decimal::from(rng.gen_range(1..1000)) / Decimal::from(100);
            let high = low + Decimal::from(rng.gen_range(0..500)) / Decimal::from(100);
            let close = low + (high - low) * Decimal::from(rng.gen_range(0..=100)) / Decimal::from(100);
            let c = Candle { open_time: t(i), open: close, high, low, close, volume: d("1") };
            let tp = typical_price(&c).value;
            assert!(c.low <= tp && tp <= c.high, "typical {tp} outside [{}, {}]", c.low, c.high);
        }
    }

    #[test]
    fn constant_reference_scales_prices_exactly() {
        let alt = series("ABC/BTC", vec![bar(0, "1.1", "1.3", "0.9", "1.2", "42.5")]);
        let reference = series("BTC/USDT", vec![bar(0, "2.5", "2.5", "2.5", "2.5", "9")]);
        let (out, report) = convert_quote(&alt, &reference).unwrap();
        let c = &out.candles()[0];
        assert_eq!((c.open, c.high, c.low, c.close), (d("2.75"), d("3.25"), d("2.25"), d("3.0")));
        assert_eq!(c.volume, d("42.5"));
        assert_eq!(out.pair, "ABC/USDT".parse().unwrap());
        assert_eq!((report.converted, report.skipped, report.repairs), (1, 0, 0));
        assert_eq!(report.close_rule, CLOSE_RULE);
    }

    #[test]
    fn identity_reference_is_a_noop_on_prices() {
        let alt = series(
            "ABC/BTC",
            vec![bar(0, "1.1", "1.3", "0.9", "1.2", "5"), bar(1, "1.2", "1.4", "1.0", "1.3", "6")],
        );
        let reference = series(
            "BTC/USDT",
            vec![bar(0, "1", "1", "1", "1", "9"), bar(1, "1", "1", "1", "1", "9")],
        );
        let (out, _) = convert_quote(&alt, &reference).unwrap();
        for (a, b) in alt.candles().iter().zip(out.candles()) {
            assert_eq!((a.open, a.high, a.low, a.close, a.volume), (b.open, b.high, b.low, b.close, b.volume));
        }
    }

    #[test]
    fn random_series_match_a_per_bar_oracle_bit_for_bit() {
        let mut rng = StdRng::seed_from_u64(99);
        let mut alt_bars = Vec::new();
        let mut ref_bars = Vec::new();
        for i in 0..300 {
            let low = Decimal::from(rng.gen_range(50..150)) / Decimal::from(1000);
            let high = low + Decimal::from(rng.gen_range(0..80)) / Decimal::from(1000);
            let open = low + (high - low) * Decimal::from(rng.gen_range(0..=10)) / Decimal::from(10);
            let close = low + (high - low) * Decimal::from(rng.gen_range(0..=10)) / Decimal::from(10);
            alt_bars.push(Candle {
                open_time: t(i),
                open,
                high,
                low,
                close,
                volume: Decimal::from(rng.gen_range(0..10_000)),
            });
            if rng.gen_range(0..10) < 8 {
                // Spread the reference wide so open sometimes strays far from
                // the typical price and forces repairs.
                let rlow = Decimal::from(rng.gen_range(10_000..20_000));
                let rhigh = rlow + Decimal::from(rng.gen_range(0..9_000));
                let ropen = rlow + (rhigh - rlow) * Decimal::from(rng.gen_range(0..=10)) / Decimal::from(10);
                let rclose = rlow + (rhigh - rlow) * Decimal::from(rng.gen_range(0..=10)) / Decimal::from(10);
                ref_bars.push(Candle {
                    open_time: t(i),
                    open: ropen,
                    high: rhigh,
                    low: rlow,
                    close: rclose,
                    volume: Decimal::from(1),
                });
            }
        }
        let alt = series("ABC/BTC", alt_bars.clone());
        let reference = series("BTC/USDT", ref_bars.clone());
        let (out, report) = convert_quote(&alt, &reference).unwrap();

        // Per-bar oracle: apply the four conversion rules directly.
        let mut expected = Vec::new();
        let mut repairs = 0;
        for a in &alt_bars {
            let Some(r) = ref_bars.iter().find(|r| r.open_time == a.open_time) else { continue };
            let tp = (r.high + r.low + r.close) / Decimal::from(3);
            let open = a.open * r.open;
            let close = a.close * r.close;
            let high = (a.high * tp).max(open).max(close);
            let low = (a.low * tp).min(open).min(close);
            if high != a.high * tp || low != a.low * tp {
                repairs += 1;
            }
            expected.push((a.open_time, open, high, low, close, a.volume));
        }
        assert_eq!(out.len(), expected.len());
        assert_eq!(report.converted + report.skipped, alt_bars.len());
        assert_eq!(report.repairs, repairs);
        assert!(repairs > 0, "fixture never exercised the repair path");
        for (c, e) in out.candles().iter().zip(&expected) {
            assert_eq!((c.open_time, c.open, c.high, c.low, c.close, c.volume), *e);
            c.validate().unwrap();
        }
    }

    #[test]
    fn scaling_input_prices_scales_output_prices() {
        let alt = series(
            "ABC/BTC",
            vec![bar(0, "1.1", "1.3", "0.9", "1.2", "5"), bar(1, "1.2", "1.4", "1.0", "1.3", "6")],
        );
        let scaled = series(
            "ABC/BTC",
            alt.candles()
                .iter()
                .map(|c| Candle {
                    open_time: c.open_time,
                    open: c.open * Decimal::from(3),
                    high: c.high * Decimal::from(3),
                    low: c.low * Decimal::from(3),
                    close: c.close * Decimal::from(3),
                    volume: c.volume,
                })
                .collect(),
        );
        // H+L+C divisible by 3 keeps the typical price terminating, so the
        // scaled products stay exact; otherwise homogeneity holds to 1 ulp.
        let reference = series(
            "BTC/USDT",
            vec![bar(0, "20000", "21000", "19000", "20000", "1"), bar(1, "20500", "22000", "20000", "21000", "1")],
        );
        let (base, _) = convert_quote(&alt, &reference).unwrap();
        let (tripled, _) = convert_quote(&scaled, &reference).unwrap();
        for (b, s) in base.candles().iter().zip(tripled.candles()) {
            assert_eq!(s.open, b.open * Decimal::from(3));
            assert_eq!(s.high, b.high * Decimal::from(3));
            assert_eq!(s.low, b.low * Decimal::from(3));
            assert_eq!(s.close, b.close * Decimal::from(3));
        }
    }

    #[test]
    fn bars_without_reference_are_dropped_and_counted() {
        let alt = series(
            "ABC/BTC",
            vec![bar(0, "1", "1", "1", "1", "1"), bar(1, "1", "1", "1", "1", "1"), bar(2, "1", "1", "1", "1", "1")],
        );
        let reference = series("BTC/USDT", vec![bar(1, "2", "2", "2", "2", "1")]);
        let (out, report) = convert_quote(&alt, &reference).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.candles()[0].open_time, t(1));
        assert_eq!((report.converted, report.skipped), (1, 2));
    }

    #[test]
    fn repair_widens_high_low_to_bracket_open_close() {
        // Reference opens at its high (4) while typical = (4+1+1)/3 = 2, so
        // the converted open lands far above the converted high.
        let alt = series("ABC/BTC", vec![bar(0, "1.0", "1.1", "0.9", "1.0", "3")]);
        let reference = series("BTC/USDT", vec![bar(0, "4", "4", "1", "1", "1")]);
        let (out, report) = convert_quote(&alt, &reference).unwrap();
        let c = &out.candles()[0];
        assert_eq!(c.open, d("4.0"));
        assert_eq!(c.close, d("1.0"));
        assert_eq!(c.high, d("4.0"));
        assert_eq!(c.low, d("1.0"));
        assert_eq!(report.repairs, 1);
        c.validate().unwrap();
    }

    #[test]
    fn mismatches_are_rejected() {
        let alt = series("ABC/BTC", vec![bar(0, "1", "1", "1", "1", "1")]);
        let hourly = OhlcvSeries::empty("binance", "BTC/USDT".parse().unwrap(), Granularity::Hour);
        assert!(matches!(
            convert_quote(&alt, &hourly),
            Err(NormalizeError::GranularityMismatch { .. })
        ));
        let empty = OhlcvSeries::empty("binance", "BTC/USDT".parse().unwrap(), Granularity::Minute);
        assert!(matches!(convert_quote(&alt, &empty), Err(NormalizeError::EmptyReference)));
        let wrong_quote = series("ETH/USDT", vec![bar(0, "1", "1", "1", "1", "1")]);
        let reference = series("BTC/USDT", vec![bar(0, "1", "1", "1", "1", "1")]);
        assert!(matches!(
            convert_quote(&wrong_quote, &reference),
            Err(NormalizeError::QuoteMismatch { .. })
        ));
    }

    #[test]
    fn align_joins_on_timestamps() {
        let a = series("ABC/BTC", vec![bar(0, "1", "1", "1", "1", "1"), bar(1, "1", "1", "1", "1", "1")]);
        let full = align(&a, &a);
        assert_eq!(full.len(), 2);

        let b = series("ABC/BTC", vec![bar(5, "1", "1", "1", "1", "1")]);
        assert!(align(&a, &b).is_empty());
    }

    #[test]
    fn align_matches_set_intersection_on_random_gaps() {
        let mut rng = StdRng::seed_from_u64(3);
        let pick = |rng: &mut StdRng| -> Vec<Candle> {
            (0..200).filter(|_| rng.gen_range(0..10) < 6).map(|i| bar(i, "1", "1", "1", "1", "1")).collect()
        };
        let a = series("ABC/BTC", pick(&mut rng));
        let b = series("ABC/BTC", pick(&mut rng));
        let got: Vec<_> = align(&a, &b).iter().map(|(ts, _, _)| *ts).collect();
        let set_a: std::collections::BTreeSet<_> = a.candles().iter().map(|c| c.open_time).collect();
        let set_b: std::collections::BTreeSet<_> = b.candles().iter().map(|c| c.open_time).collect();
        let expected: Vec<_> = set_a.intersection(&set_b).copied().collect();
        assert_eq!(got, expected);
        assert!(got.len() <= a.len().min(b.len()));
        assert!(!got.is_empty());
    }
}
