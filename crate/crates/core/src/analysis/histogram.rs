use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bin_count: usize,
    pub lower: f64,
    pub upper: f64,
    /// Report `count / (total · width)` instead of raw counts.
    pub normalize: bool,
}

impl HistogramSpec {
    pub const DEFAULT_BINS: usize = 64;

    /// `bin_count` bins over `[0, max of all series]`.
    pub fn covering<'a>(
        series: impl IntoIterator<Item = &'a [f64]>,
        bin_count: usize,
        normalize: bool,
    ) -> Result<Self> {
        let upper = series
            .into_iter()
            .flat_map(|s| s.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max);
        if !upper.is_finite() {
            return Err(Error::Argument("no finite scores to bin".into()));
        }
        Ok(Self {
            bin_count,
            lower: 0.0,
            upper,
            normalize,
        })
    }

    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.bin_count as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub value: f64,
}

/// Bin `scores`; `x` lands in bin `floor((x − lower) / width)` with the top
/// edge folded into the last bin.
pub fn histogram(scores: &[f64], spec: &HistogramSpec) -> Result<Vec<Bin>> {
    if scores.is_empty() {
        return Err(Error::Argument("cannot bin an empty series".into()));
    }
    if spec.bin_count == 0 {
        return Err(Error::Argument("bin count must be positive".into()));
    }
    if !(spec.upper > spec.lower) || !spec.lower.is_finite() || !spec.upper.is_finite() {
        return Err(Error::Argument(format!(
            "degenerate histogram range [{}, {}]",
            spec.lower, spec.upper
        )));
    }
    let width = spec.width();
    let mut counts = vec![0usize; spec.bin_count];
    for &x in scores {
        if !(x >= spec.lower && x <= spec.upper) {
            return Err(Error::Argument(format!(
                "score {x} outside histogram range [{}, {}]",
                spec.lower, spec.upper
            )));
        }
        let b = (((x - spec.lower) / width).floor() as usize).min(spec.bin_count - 1);
        counts[b] += 1;
    }
    let total = scores.len() as f64;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(b, &c)| Bin {
            lower: spec.lower + b as f64 * width,
            upper: if b + 1 == spec.bin_count {
                spec.upper
            } else {
                spec.lower + (b + 1) as f64 * width
            },
            value: if spec.normalize {
                c as f64 / (total * width)
            } else {
                c as f64
            },
        })
        .collect())
}
