//! Logarithmic binning of flow-length histograms, and CCDFs.
//!
//! Bin `k` covers the integer lengths `[i_{k-1}, i_k)`. Its value is the
//! average count per unit length over that range, and for plotting it is
//! drawn from `i_{k-1} - 0.5` to `i_k - 0.5`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dist::{FlowLengthDistribution, LengthHistogram};
use crate::error::{Error, Result};

/// Ten bins per decade.
pub fn default_ratio() -> f64 {
    ratio_for_bins_per_decade(10.0)
}

pub fn ratio_for_bins_per_decade(bins_per_decade: f64) -> f64 {
    10f64.powf(1.0 / bins_per_decade)
}

/// Boundaries `1 = i_0 < i_1 < ...`, with `i_{k+1} = max(i_k + 1,
/// round(i_k * ratio))` (round half up), ending at the first boundary
/// greater than `max_len`.
pub fn make_bins(max_len: u64, ratio: f64) -> Result<Vec<u64>> {
    if !(ratio > 1.0) || !ratio.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "bin ratio {ratio} must be a finite number > 1"
        )));
    }
    if max_len == 0 {
        return Err(Error::InvalidConfig("max_len must be >= 1".into()));
    }
    let mut bounds = vec![1u64];
    let mut current = 1u64;
    while current <= max_len {
        let scaled = (current as f64 * ratio + 0.5).floor();
        let next = if scaled >= u64::MAX as f64 {
            u64::MAX
        } else {
            (scaled as u64).max(current + 1)
        };
        bounds.push(next);
        current = next;
    }
    Ok(bounds)
}

pub fn check_boundaries(boundaries: &[u64]) -> Result<()> {
    if boundaries.len() < 2 {
        return Err(Error::BinMismatch("need at least two boundaries".into()));
    }
    if boundaries[0] != 1 {
        return Err(Error::BinMismatch("first boundary must be 1".into()));
    }
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::BinMismatch(
            "boundaries must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Index of the bin holding `length`, if any.
pub fn bin_index(boundaries: &[u64], length: u64) -> Option<usize> {
    if length < boundaries[0] || length >= *boundaries.last()? {
        return None;
    }
    Some(boundaries.partition_point(|&b| b <= length) - 1)
}

/// Sums per-length values (index 0 = length 1) into bins. Values beyond the
/// last boundary are an error.
pub fn bin_sums(values: &[f64], boundaries: &[u64]) -> Result<Vec<f64>> {
    check_boundaries(boundaries)?;
    let last = *boundaries.last().expect("checked");
    let mut sums = vec![0.0; boundaries.len() - 1];
    for (i, &v) in values.iter().enumerate() {
        let length = i as u64 + 1;
        match bin_index(boundaries, length) {
            Some(k) => sums[k] += v,
            None if v == 0.0 => {}
            None => {
                return Err(Error::BinOverflow {
                    length,
                    last_boundary: last,
                })
            }
        }
    }
    Ok(sums)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogBinning {
    pub boundaries: Vec<u64>,
    /// Flows counted in each bin.
    pub counts: Vec<u64>,
    /// Average count per unit length in each bin, `counts[k] / width[k]`.
    pub averages: Vec<f64>,
}

impl LogBinning {
    pub fn bins(&self) -> impl Iterator<Item = (u64, u64, f64)> + '_ {
        self.boundaries
            .windows(2)
            .zip(&self.averages)
            .map(|(w, &avg)| (w[0], w[1], avg))
    }

    /// `Σ averages · widths` in floating point; equal to the total count up
    /// to rounding of the averages (`1.0 / 49.0 * 49.0 != 1.0`).
    pub fn total_mass(&self) -> f64 {
        self.bins()
            .map(|(lo, hi, avg)| avg * (hi - lo) as f64)
            .sum()
    }

    /// `Σ averages · widths` with each average kept as the exact fraction
    /// `count / width`.
    pub fn exact_mass(&self) -> u64 {
        self.counts
            .iter()
            .zip(self.boundaries.windows(2))
            .map(|(&count, w)| {
                let width = w[1] - w[0];
                // (count / width) * width, reduced without rounding
                let g = gcd(count, width);
                (count / g) * (width / g) / (width / g) * g
            })
            .sum()
    }

    /// CSV with columns `bin_lo,bin_hi,plot_lo,plot_hi,avg_count`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_lo", "bin_hi", "plot_lo", "plot_hi", "avg_count"])?;
        for (lo, hi, avg) in self.bins() {
            w.write_record([
                lo.to_string(),
                hi.to_string(),
                (lo as f64 - 0.5).to_string(),
                (hi as f64 - 0.5).to_string(),
                avg.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<binning csv>", e))?;
        Ok(())
    }
}

pub fn bin_histogram(counts: &LengthHistogram, boundaries: &[u64]) -> Result<LogBinning> {
    check_boundaries(boundaries)?;
    let last = *boundaries.last().expect("checked");
    let mut sums = vec![0u64; boundaries.len() - 1];
    for (length, count) in counts.iter() {
        let k = bin_index(boundaries, length).ok_or(Error::BinOverflow {
            length,
            last_boundary: last,
        })?;
        sums[k] += count;
    }
    let averages = sums
        .iter()
        .zip(boundaries.windows(2))
        .map(|(&s, w)| s as f64 / (w[1] - w[0]) as f64)
        .collect();
    Ok(LogBinning {
        boundaries: boundaries.to_vec(),
        counts: sums,
        averages,
    })
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `(x, P(L > x))` for `x = 1..=max`, from integer counts.
pub fn ccdf_histogram(hist: &LengthHistogram) -> Result<Vec<(u64, f64)>> {
    let total = hist.total_flows();
    let max = hist
        .max_len()
        .filter(|_| total > 0)
        .ok_or_else(|| Error::InvalidDistribution("empty histogram".into()))?;
    let mut out = Vec::with_capacity(max as usize);
    let mut at_most = 0u64;
    let mut iter = hist.iter().peekable();
    for x in 1..=max {
        while let Some(&(len, count)) = iter.peek() {
            if len > x {
                break;
            }
            at_most += count;
            iter.next();
        }
        out.push((x, (total - at_most) as f64 / total as f64));
    }
    Ok(out)
}

/// `(x, P(L > x))` for `x = 1..=M`; tails are summed from the top so the
/// last value is exactly 0.
pub fn ccdf_distribution(dist: &FlowLengthDistribution) -> Vec<(u64, f64)> {
    ccdf_values(dist.probs())
        .into_iter()
        .enumerate()
        .map(|(i, v)| (i as u64 + 1, v))
        .collect()
}

/// Tail sums of non-negative per-length masses, clamped to [0, 1].
pub(crate) fn ccdf_values(probs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; probs.len()];
    let mut tail = 0.0f64;
    for i in (0..probs.len()).rev() {
        out[i] = tail.clamp(0.0, 1.0);
        tail += probs[i];
    }
    // enforce monotonicity against rounding
    for i in 1..out.len() {
        if out[i] > out[i - 1] {
            out[i] = out[i - 1];
        }
    }
    out
}
