//! Flow-length histograms and probability vectors over flow lengths.
//!
//! Lengths are 1-based packet counts; index 0 of every probability vector
//! holds the probability of length 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ probs = 1` accepted by the distribution constructors.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Flow counts keyed by flow length in packets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthHistogram(BTreeMap<u64, u64>);

impl LengthHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, length: u64) {
        self.add_count(length, 1);
    }

    pub fn add_count(&mut self, length: u64, count: u64) {
        if count > 0 {
            *self.0.entry(length).or_insert(0) += count;
        }
    }

    pub fn get(&self, length: u64) -> u64 {
        self.0.get(&length).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_len(&self) -> Option<u64> {
        self.0.keys().next_back().copied()
    }

    pub fn total_flows(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn total_packets(&self) -> u64 {
        self.0.iter().map(|(k, v)| k * v).sum()
    }

    pub fn mean_length(&self) -> Option<f64> {
        let flows = self.total_flows();
        (flows > 0).then(|| self.total_packets() as f64 / flows as f64)
    }

    pub fn as_map(&self) -> &BTreeMap<u64, u64> {
        &self.0
    }

    /// Per-length counts as a dense vector (index 0 = length 1).
    pub fn dense_counts(&self) -> Vec<f64> {
        let max = self.max_len().unwrap_or(0) as usize;
        let mut v = vec![0.0; max];
        for (len, count) in self.iter() {
            if len > 0 {
                v[len as usize - 1] = count as f64;
            }
        }
        v
    }

    pub fn to_distribution(&self) -> Result<FlowLengthDistribution> {
        if self.get(0) > 0 {
            return Err(Error::InvalidDistribution(
                "histogram holds zero-length flows".into(),
            ));
        }
        FlowLengthDistribution::from_weights(self.dense_counts())
    }
}

impl FromIterator<u64> for LengthHistogram {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        let mut h = LengthHistogram::new();
        for len in iter {
            h.add(len);
        }
        h
    }
}

impl From<BTreeMap<u64, u64>> for LengthHistogram {
    fn from(map: BTreeMap<u64, u64>) -> Self {
        let mut h = LengthHistogram::new();
        for (k, v) in map {
            h.add_count(k, v);
        }
        h
    }
}

fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution(
            "empty probability vector".into(),
        ));
    }
    if let Some((i, v)) = probs
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(Error::InvalidDistribution(format!(
            "probability of length {} is {v}",
            i + 1
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidDistribution(format!(
            "probabilities sum to {sum}, not 1"
        )));
    }
    Ok(())
}

fn normalize(weights: Vec<f64>) -> Result<Vec<f64>> {
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidDistribution(format!("bad weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidDistribution("weights sum to zero".into()));
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// θ: the probability that a randomly chosen flow has each length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowLengthDistribution {
    probs: Vec<f64>,
}

impl FlowLengthDistribution {
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        validate_probs(&probs)?;
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        Self::from_probs(normalize(weights)?)
    }

    pub fn point_mass(length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::InvalidDistribution("length must be >= 1".into()));
        }
        let mut probs = vec![0.0; length];
        probs[length - 1] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Largest representable length M.
    pub fn max_len(&self) -> usize {
        self.probs.len()
    }

    /// θ_len, zero outside the support.
    pub fn prob(&self, length: usize) -> f64 {
        if length == 0 {
            0.0
        } else {
            self.probs.get(length - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    /// Cuts the support to `max_len` and renormalizes, returning the
    /// dropped tail mass. Tails of 1e-12 or more are logged as a warning.
    pub fn truncate(&self, max_len: usize) -> Result<(Self, f64)> {
        if max_len >= self.probs.len() {
            return Ok((self.clone(), 0.0));
        }
        let tail: f64 = self.probs[max_len..].iter().sum();
        if tail >= SUM_TOLERANCE {
            log::warn!("truncating flow-length distribution at {max_len} drops mass {tail:e}");
        }
        Ok((Self::from_weights(self.probs[..max_len].to_vec())?, tail))
    }
}

/// X: the law of sampled flow lengths, zero-length flows excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedDistribution {
    probs: Vec<f64>,
    p_used: f64,
}

impl ObservedDistribution {
    pub fn from_probs(probs: Vec<f64>, p_used: f64) -> Result<Self> {
        if !(p_used > 0.0 && p_used <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sampling probability {p_used} is outside (0, 1]"
            )));
        }
        validate_probs(&probs)?;
        Ok(Self { probs, p_used })
    }

    pub fn from_weights(weights: Vec<f64>, p_used: f64) -> Result<Self> {
        Self::from_probs(normalize(weights)?, p_used)
    }

    /// Empirical X from the lengths of sampled flows.
    pub fn from_histogram(hist: &LengthHistogram, p_used: f64) -> Result<Self> {
        if hist.get(0) > 0 {
            return Err(Error::InvalidDistribution(
                "observed histogram holds zero-length flows".into(),
            ));
        }
        Self::from_weights(hist.dense_counts(), p_used)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn p_used(&self) -> f64 {
        self.p_used
    }

    pub fn max_len(&self) -> usize {
        self.probs.len()
    }

    /// X_len, with X_{M+1} and beyond equal to zero.
    pub fn prob(&self, length: usize) -> f64 {
        if length == 0 {
            0.0
        } else {
            self.probs.get(length - 1).copied().unwrap_or(0.0)
        }
    }
}
