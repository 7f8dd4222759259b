//! Estimating the original flow-length distribution from sample-and-hold
//! observations.
//!
//! Under sample-and-hold by packet with start probability `p` (`q = 1 - p`),
//! the observed length law `X` satisfies `q^i X_i = C Σ_{j>=i} q^j θ_j` with
//! `C = 1 - q + q X_1`, which inverts to
//!
//! ```text
//! θ_i = (X_i - q X_{i+1}) / C
//! ```
//!
//! Nothing keeps these estimates non-negative: whenever `X_{i+1} > X_i / q`
//! the estimate for `i` goes negative. Raw values are always reported next
//! to a clamped-and-renormalized version.

use serde::{Deserialize, Serialize};

use crate::binning::bin_sums;
use crate::dist::{FlowLengthDistribution, ObservedDistribution};
use crate::error::{Error, Result};
use crate::flowtable::{flow_length_histogram, FlowSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    /// The sampling parameter supplied by the caller (per byte for sh-byte).
    pub p: f64,
    /// The per-packet start probability actually used in the inversion.
    pub p_effective: f64,
    #[serde(rename = "C")]
    pub normalizer: f64,
    /// θ̂_1..θ̂_M, possibly negative.
    pub raw: Vec<f64>,
    pub clamped: FlowLengthDistribution,
    /// Lengths (1-based) whose raw estimate is negative.
    pub negative_indices: Vec<usize>,
    /// Set when the model assumed does not match how the data was sampled.
    pub approximate: bool,
}

/// Per-bin pooled estimates over log bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub boundaries: Vec<u64>,
    /// Bin sums of the raw per-length estimates.
    pub raw: Vec<f64>,
    /// Raw bin sums with negatives set to zero, renormalized.
    pub clamped: Vec<f64>,
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "sampling probability {p} is outside (0, 1]"
        )))
    }
}

fn clamp_normalize(values: &[f64]) -> Result<Vec<f64>> {
    let clamped: Vec<f64> = values.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidDistribution(
            "no positive estimates to normalize".into(),
        ));
    }
    Ok(clamped.into_iter().map(|v| v / total).collect())
}

pub fn invert_sh_packet(observed: &ObservedDistribution, p: f64) -> Result<InversionResult> {
    check_p(p)?;
    let q = 1.0 - p;
    let normalizer = 1.0 - q + q * observed.prob(1);
    if !(normalizer > 0.0) {
        return Err(Error::NonPositiveNormalizer(normalizer));
    }
    let m = observed.max_len();
    let raw: Vec<f64> = (1..=m)
        .map(|i| (observed.prob(i) - q * observed.prob(i + 1)) / normalizer)
        .collect();
    let negative_indices = raw
        .iter()
        .enumerate()
        .filter(|(_, v)| **v < 0.0)
        .map(|(i, _)| i + 1)
        .collect();
    let clamped = FlowLengthDistribution::from_weights(clamp_normalize(&raw)?)?;
    Ok(InversionResult {
        p,
        p_effective: p,
        normalizer,
        raw,
        clamped,
        negative_indices,
        approximate: false,
    })
}

/// Sums raw estimates within each bin; the clamp happens per bin.
pub fn pool_estimates(raw: &[f64], boundaries: &[u64]) -> Result<PooledEstimate> {
    let sums = bin_sums(raw, boundaries)?;
    let clamped = clamp_normalize(&sums)?;
    Ok(PooledEstimate {
        boundaries: boundaries.to_vec(),
        raw: sums,
        clamped,
    })
}

pub fn invert_sh_packet_pooled(
    observed: &ObservedDistribution,
    p: f64,
    boundaries: &[u64],
) -> Result<PooledEstimate> {
    let result = invert_sh_packet(observed, p)?;
    pool_estimates(&result.raw, boundaries)
}

/// `1 - (1 - p)^b` for a real-valued mean length `b`.
pub fn effective_packet_probability(p_per_byte: f64, mean_packet_len: f64) -> f64 {
    if mean_packet_len == 1.0 || p_per_byte >= 1.0 {
        return p_per_byte;
    }
    -(mean_packet_len * (-p_per_byte).ln_1p()).exp_m1()
}

/// Treats sample-and-hold-by-byte data as if every packet had the mean
/// length, and inverts it as sample-and-hold by packet. Approximate.
pub fn invert_sh_byte(
    observed: &ObservedDistribution,
    p_per_byte: f64,
    mean_packet_len: f64,
) -> Result<InversionResult> {
    check_p(p_per_byte)?;
    if !(mean_packet_len >= 1.0) || !mean_packet_len.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "mean packet length {mean_packet_len} must be >= 1"
        )));
    }
    let p_eff = effective_packet_probability(p_per_byte, mean_packet_len);
    let mut result = invert_sh_packet(observed, p_eff)?;
    result.p = p_per_byte;
    result.p_effective = p_eff;
    result.approximate = true;
    Ok(result)
}

/// Flow-length estimate from sample-and-hold by SYN; covers TCP only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynEstimate {
    /// `None` when no TCP flow was sampled.
    pub distribution: Option<FlowLengthDistribution>,
    pub flows_used: u64,
}

/// With one SYN per TCP flow, SYN sampling is flow sampling and the
/// sampled lengths need no inversion.
pub fn syn_estimate(flows: &FlowSet) -> Result<SynEstimate> {
    let hist = flow_length_histogram(&flows.tcp_only());
    let flows_used = hist.total_flows();
    if flows_used == 0 {
        log::warn!("no TCP flows were sampled; SYN estimate is empty");
        return Ok(SynEstimate {
            distribution: None,
            flows_used,
        });
    }
    Ok(SynEstimate {
        distribution: Some(hist.to_distribution()?),
        flows_used,
    })
}
