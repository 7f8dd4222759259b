//! Synthetic traces with heavy-tailed flow lengths and a known ground truth.
//!
//! Flow lengths follow a discrete Pareto law truncated to
//! `[min_flow_len, max_flow_len]`, `P(L = k) ∝ k^-(alpha+1)`, so that
//! `P(L > x) ~ x^-alpha`. Flow starts are a Poisson process and packets
//! inside a flow are separated by exponential gaps, so flows interleave.

use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{secs_to_micros, FiveTuple, PacketRecord, TcpFlags, PROTO_TCP, PROTO_UDP};
use crate::dist::{FlowLengthDistribution, LengthHistogram};
use crate::error::{Error, Result};

const MAX_FLOWS: u64 = 1 << 24;
const MAX_LENGTH_SPAN: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ByteLenModel {
    Fixed { bytes: u16 },
    Uniform { min: u16, max: u16 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTraceConfig {
    pub num_flows: u64,
    /// Pareto tail exponent, in (0, 2).
    pub alpha: f64,
    pub min_flow_len: u64,
    pub max_flow_len: u64,
    /// Mean gap between flow starts, seconds.
    pub mean_interarrival: f64,
    /// Mean gap between consecutive packets of one flow, seconds.
    pub mean_packet_gap: f64,
    pub tcp_fraction: f64,
    /// Probability that an eligible TCP flow carries a second SYN.
    pub extra_syn_prob: f64,
    /// Only flows no longer than this are eligible for a second SYN.
    pub extra_syn_max_len: Option<u64>,
    pub byte_len_model: ByteLenModel,
    pub seed: u64,
}

impl Default for SyntheticTraceConfig {
    fn default() -> Self {
        Self {
            num_flows: 10_000,
            alpha: 1.5,
            min_flow_len: 1,
            max_flow_len: 10_000,
            mean_interarrival: 0.001,
            mean_packet_gap: 0.01,
            tcp_fraction: 0.9,
            extra_syn_prob: 0.0,
            extra_syn_max_len: None,
            byte_len_model: ByteLenModel::Uniform { min: 40, max: 1500 },
            seed: 0,
        }
    }
}

impl SyntheticTraceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_flows == 0 || self.num_flows > MAX_FLOWS {
            return bad(format!("num_flows must be in 1..={MAX_FLOWS}"));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return bad(format!("alpha {} is outside (0, 2)", self.alpha));
        }
        if self.min_flow_len == 0 || self.min_flow_len > self.max_flow_len {
            return bad("need 1 <= min_flow_len <= max_flow_len".into());
        }
        if self.max_flow_len - self.min_flow_len > MAX_LENGTH_SPAN {
            return bad(format!("flow length range wider than {MAX_LENGTH_SPAN}"));
        }
        for (name, v) in [
            ("mean_interarrival", self.mean_interarrival),
            ("mean_packet_gap", self.mean_packet_gap),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a non-negative number"));
            }
        }
        for (name, v) in [
            ("tcp_fraction", self.tcp_fraction),
            ("extra_syn_prob", self.extra_syn_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1]"));
            }
        }
        match self.byte_len_model {
            ByteLenModel::Fixed { bytes: 0 } => bad("packet length must be >= 1".into()),
            ByteLenModel::Uniform { min, max } if min == 0 || min > max => {
                bad("need 1 <= min <= max packet length".into())
            }
            _ => Ok(()),
        }
    }

    fn eligible_for_extra_syn(&self, length: u64) -> bool {
        length >= 2 && self.extra_syn_max_len.is_none_or(|max| length <= max)
    }
}

/// Per-flow record of what the generator emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedFlow {
    pub key: FiveTuple,
    pub length: u64,
    pub syn_count: u32,
    pub start_us: u64,
    /// Largest gap between consecutive packets of this flow.
    pub max_gap_us: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticTrace {
    pub packets: Vec<PacketRecord>,
    pub flows: Vec<GeneratedFlow>,
    /// Exact flow-length counts of the generated flows.
    pub truth: LengthHistogram,
}

impl SyntheticTrace {
    pub fn ground_truth(&self) -> Result<FlowLengthDistribution> {
        self.truth.to_distribution()
    }

    pub fn tcp_truth(&self) -> LengthHistogram {
        self.flows
            .iter()
            .filter(|f| f.key.is_tcp())
            .map(|f| f.length)
            .collect()
    }

    pub fn max_intra_flow_gap_us(&self) -> u64 {
        self.flows.iter().map(|f| f.max_gap_us).max().unwrap_or(0)
    }
}

/// Inverse-CDF sampler for the truncated discrete Pareto law.
struct TruncatedPareto {
    min: u64,
    cumulative: Vec<f64>,
}

impl TruncatedPareto {
    fn new(alpha: f64, min: u64, max: u64) -> Self {
        let mut total = 0.0;
        let cumulative = (min..=max)
            .map(|k| {
                total += (k as f64).powf(-(alpha + 1.0));
                total
            })
            .collect();
        Self { min, cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let total = *self.cumulative.last().expect("non-empty support");
        let u = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.min + idx.min(self.cumulative.len() - 1) as u64
    }
}

fn flow_key(index: u64, protocol: u8) -> FiveTuple {
    let src = Ipv4Addr::from(0x0a00_0000u32 + index as u32);
    let sport = 1024 + (index % 64_000) as u16;
    let (dst, dport) = if protocol == PROTO_TCP {
        (Ipv4Addr::new(192, 168, 0, 1), 80)
    } else {
        (Ipv4Addr::new(192, 168, 0, 2), 53)
    };
    FiveTuple::new(protocol, src, sport, dst, dport)
}

/// Generates a trace; deterministic in `config.seed`.
pub fn generate_trace(config: &SyntheticTraceConfig) -> Result<SyntheticTrace> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lengths = TruncatedPareto::new(config.alpha, config.min_flow_len, config.max_flow_len);
    let interarrival = exp_or_zero(config.mean_interarrival)?;
    let packet_gap = exp_or_zero(config.mean_packet_gap)?;

    // (timestamp, flow index, packet index within flow, packet)
    let mut tagged: Vec<(u64, u64, u64, PacketRecord)> = Vec::new();
    let mut flows = Vec::with_capacity(config.num_flows as usize);
    let mut truth = LengthHistogram::new();
    let mut start = 0.0f64;

    for index in 0..config.num_flows {
        if index > 0 {
            start += sample_exp(&interarrival, &mut rng);
        }
        let length = lengths.sample(&mut rng);
        let is_tcp = rng.random::<f64>() < config.tcp_fraction;
        let key = flow_key(index, if is_tcp { PROTO_TCP } else { PROTO_UDP });

        let extra_syn_at = (is_tcp
            && config.eligible_for_extra_syn(length)
            && rng.random::<f64>() < config.extra_syn_prob)
            .then(|| rng.random_range(1..length));

        let mut t = start;
        let mut prev_us = None;
        let mut max_gap_us = 0;
        let mut syn_count = 0;
        for seq in 0..length {
            if seq > 0 {
                t += sample_exp(&packet_gap, &mut rng);
            }
            let ts = secs_to_micros(t);
            if let Some(prev) = prev_us {
                max_gap_us = max_gap_us.max(ts - prev);
            }
            prev_us = Some(ts);
            let byte_len = match config.byte_len_model {
                ByteLenModel::Fixed { bytes } => bytes,
                ByteLenModel::Uniform { min, max } => rng.random_range(min..=max),
            };
            let tcp_flags = if is_tcp && (seq == 0 || extra_syn_at == Some(seq)) {
                syn_count += 1;
                TcpFlags::SYN
            } else {
                TcpFlags::NONE
            };
            tagged.push((
                ts,
                index,
                seq,
                PacketRecord {
                    timestamp_us: ts,
                    key,
                    byte_len,
                    tcp_flags,
                },
            ));
        }
        truth.add(length);
        flows.push(GeneratedFlow {
            key,
            length,
            syn_count,
            start_us: secs_to_micros(start),
            max_gap_us,
        });
    }

    tagged.sort_unstable_by_key(|&(ts, flow, seq, _)| (ts, flow, seq));
    let packets = tagged.into_iter().map(|(.., p)| p).collect();
    Ok(SyntheticTrace {
        packets,
        flows,
        truth,
    })
}

fn exp_or_zero(mean: f64) -> Result<Option<Exp<f64>>> {
    if mean == 0.0 {
        return Ok(None);
    }
    Exp::new(1.0 / mean)
        .map(Some)
        .map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn sample_exp<R: Rng>(dist: &Option<Exp<f64>>, rng: &mut R) -> f64 {
    dist.as_ref().map_or(0.0, |d| d.sample(rng))
}
