//! Aggregation kernel: mean, median, and interquartile-range mean over f64
//! samples, with a fixed evaluation order so cohort statistics are
//! reproducible bit for bit.
//!
//! Quartiles use linear interpolation between order statistics (the "type 7"
//! rule: h = (n−1)p), and IQR membership is inclusive on both bounds. Both
//! choices are stamped into report metadata.

/// Names the quantile rule in force, for report metadata.
pub const QUANTILE_RULE: &str = "type7_linear_interpolation_inclusive_iqr";

/// Mean with a fixed order: sort ascending, then sum left to right.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let sorted = sorted(values);
    Some(sorted.iter().sum::<f64>() / sorted.len() as f64)
}

/// Quantile by linear interpolation between order statistics: h = (n−1)p,
/// q = x[⌊h⌋] + (h − ⌊h⌋)(x[⌊h⌋+1] − x[⌊h⌋]). Input must be sorted ascending.
pub fn quantile_type7(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let a = sorted[lo];
    if frac == 0.0 {
        return Some(a);
    }
    let b = sorted[lo + 1];
    Some(a + frac * (b - a))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile_type7(&sorted(values), 0.5)
}

/// Mean of the values v with Q1 ≤ v ≤ Q3 (inclusive bounds).
pub fn iqr_mean(values: &[f64]) -> Option<f64> {
    let sorted = sorted(values);
    let q1 = quantile_type7(&sorted, 0.25)?;
    let q3 = quantile_type7(&sorted, 0.75)?;
    let inside: Vec<f64> = sorted.iter().copied().filter(|v| *v >= q1 && *v <= q3).collect();
    if inside.is_empty() {
        // Exactly two distinct samples: both quartiles interpolate strictly
        // between them and nothing is inside. The mean of the pair (= their
        // median) is the only sensible trimmed value.
        return Some(sorted.iter().sum::<f64>() / sorted.len() as f64);
    }
    Some(inside.iter().sum::<f64>() / inside.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub iqr_mean: f64,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    Some(Summary {
        n: values.len(),
        mean: mean(values)?,
        median: median(values)?,
        iqr_mean: iqr_mean(values)?,
    })
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}
