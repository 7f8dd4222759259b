//! Per-packet sampling decisions for packet sampling and the three
//! sample-and-hold variants, plus the distribution-level forward operators,
//! rate calibration and resampling.

mod calibrate;
mod forward;
mod resample;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::PacketRecord;

pub use crate::dist::{FlowLengthDistribution, ObservedDistribution};
pub use calibrate::{
    calibrate_rate, expected_sh_packet_fraction, realized_fraction, CalibrationInput,
};
pub use forward::{forward_packet_sampling, forward_sh_packet};
pub use resample::{resample_as_packet_sample, HeldPacket};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// iid packet sampling.
    Packet,
    /// Sample-and-hold, constant start probability per packet.
    ShPacket,
    /// Sample-and-hold, start probability `1 - (1-p)^bytes`.
    ShByte,
    /// Sample-and-hold, starts only on SYN packets.
    ShSyn,
    /// Keep everything (ground truth).
    Always,
}

impl Method {
    pub const SAMPLING: [Method; 4] = [
        Method::Packet,
        Method::ShPacket,
        Method::ShByte,
        Method::ShSyn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Packet => "packet",
            Method::ShPacket => "sh-packet",
            Method::ShByte => "sh-byte",
            Method::ShSyn => "sh-syn",
            Method::Always => "always",
        }
    }

    pub fn is_sample_and_hold(self) -> bool {
        matches!(self, Method::ShPacket | Method::ShByte | Method::ShSyn)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "packet" => Ok(Method::Packet),
            "sh-packet" => Ok(Method::ShPacket),
            "sh-byte" => Ok(Method::ShByte),
            "sh-syn" => Ok(Method::ShSyn),
            "always" => Ok(Method::Always),
            other => Err(format!("unknown sampling method {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub method: Method,
    /// Per-packet probability (per-byte for `sh-byte`), in (0, 1].
    pub p: f64,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(method: Method, p: f64, seed: u64) -> Result<Self> {
        let config = Self { method, p, seed };
        config.validate()?;
        Ok(config)
    }

    pub fn always() -> Self {
        Self {
            method: Method::Always,
            p: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p > 0.0 && self.p <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "sampling probability {} is outside (0, 1]",
                self.p
            )))
        }
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    /// Keep the packet and (keep) tracking its flow.
    SampleAndTrack,
    /// Keep the packet; flows are not held.
    SampleOnly,
    Skip,
}

impl Decision {
    pub fn is_sampled(self) -> bool {
        !matches!(self, Decision::Skip)
    }
}

/// Anything the flow table can ask whether to admit a packet.
pub trait SamplerDecision {
    fn decide(&self, packet: &PacketRecord, index: u64, tracked: bool) -> Decision;
}

impl<F> SamplerDecision for F
where
    F: Fn(&PacketRecord, u64, bool) -> Decision,
{
    fn decide(&self, packet: &PacketRecord, index: u64, tracked: bool) -> Decision {
        self(packet, index, tracked)
    }
}

/// `1 - (1-p)^bytes`, the chance at least one of `bytes` bytes is picked.
pub fn sh_byte_start_probability(p: f64, bytes: u16) -> f64 {
    if p >= 1.0 {
        return 1.0;
    }
    -(f64::from(bytes) * (-p).ln_1p()).exp_m1()
}

/// Probability that an untracked flow starts being held at `packet`.
pub fn start_probability(config: &SamplerConfig, packet: &PacketRecord) -> f64 {
    match config.method {
        Method::Packet | Method::ShPacket => config.p,
        Method::ShByte => sh_byte_start_probability(config.p, packet.byte_len),
        Method::ShSyn => {
            if packet.is_syn() {
                config.p
            } else {
                0.0
            }
        }
        Method::Always => 1.0,
    }
}

/// Counter-based uniform in [0, 1): a pure function of `(seed, counter)`.
pub fn uniform(seed: u64, counter: u64) -> f64 {
    let mut z = seed ^ counter.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = mix64(z.wrapping_add(0x9e37_79b9_7f4a_7c15));
    z = mix64(z ^ seed.rotate_left(32));
    (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

// splitmix64 finalizer
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The concrete sampler; decisions depend only on `(seed, packet index)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampler {
    config: SamplerConfig,
}

impl Sampler {
    pub fn new(config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }
}

impl SamplerDecision for Sampler {
    fn decide(&self, packet: &PacketRecord, index: u64, tracked: bool) -> Decision {
        let cfg = &self.config;
        match cfg.method {
            Method::Always => Decision::SampleAndTrack,
            Method::Packet => {
                if uniform(cfg.seed, index) < cfg.p {
                    Decision::SampleOnly
                } else {
                    Decision::Skip
                }
            }
            _ if tracked => Decision::SampleAndTrack,
            _ => {
                let start = start_probability(cfg, packet);
                if start > 0.0 && uniform(cfg.seed, index) < start {
                    Decision::SampleAndTrack
                } else {
                    Decision::Skip
                }
            }
        }
    }
}
