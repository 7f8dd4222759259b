#![allow(dead_code)]

use std::net::Ipv4Addr;

use flowinv::sampling::{resample_as_packet_sample, HeldPacket};
use flowinv::trace::PROTO_UDP;
use flowinv::{
    FiveTuple, FlowLengthDistribution, FlowTable, FlowTableConfig, PacketRecord, Sampler,
    SamplerConfig, TcpFlags,
};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Outcome of pushing `flows` independent flows with lengths drawn from a
/// known law through a real flow table.
pub struct Simulation {
    /// `sampled[k - 1]`: flows that showed exactly `k` packets.
    pub sampled: Vec<u64>,
    /// Same, after thinning each hold back to an iid packet sample.
    pub resampled: Vec<u64>,
}

pub fn simulate(theta: &FlowLengthDistribution, flows: u64, config: SamplerConfig) -> Simulation {
    let m = theta.max_len();
    let lengths = WeightedIndex::new(theta.probs()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let sampler = Sampler::new(config).unwrap();
    let mut table = FlowTable::new(FlowTableConfig::unbounded(), &sampler).unwrap();
    let mut sampled = vec![0u64; m];
    let mut resampled = vec![0u64; m];
    let mut t = 0u64;
    let mut held = Vec::with_capacity(m);
    for flow in 0..flows {
        let len = lengths.sample(&mut rng) + 1;
        let key = FiveTuple::new(
            PROTO_UDP,
            Ipv4Addr::from(flow as u32),
            1000,
            Ipv4Addr::new(192, 168, 0, 1),
            53,
        );
        held.clear();
        for _ in 0..len {
            let packet = PacketRecord {
                timestamp_us: t,
                key,
                byte_len: 100,
                tcp_flags: TcpFlags::NONE,
            };
            t += 1;
            if let Some(adm) = table.push(&packet).unwrap() {
                held.push(HeldPacket {
                    packet,
                    started: adm.started,
                });
            }
        }
        if !held.is_empty() {
            sampled[held.len() - 1] += 1;
            let thin_seed = config
                .seed
                .wrapping_add(flow.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let kept = resample_as_packet_sample(&held, config.p, thin_seed).unwrap();
            resampled[kept.len() - 1] += 1;
        }
    }
    Simulation { sampled, resampled }
}

/// Largest |count - n x| / sigma over all lengths, with multinomial sigma.
pub fn max_z(counts: &[u64], expected: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let n = n as f64;
    counts
        .iter()
        .zip(expected)
        .map(|(&c, &x)| {
            let sd = (n * x * (1.0 - x)).sqrt();
            let diff = (c as f64 - n * x).abs();
            if sd == 0.0 {
                if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                diff / sd
            }
        })
        .fold(0.0, f64::max)
}
