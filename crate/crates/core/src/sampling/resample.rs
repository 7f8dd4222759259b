//! Turning a sample-and-hold-by-packet sample back into an iid packet sample.
//!
//! The packet that started a hold was itself picked with probability `p`;
//! every packet before it on that flow was passed over with probability
//! `q`. Keeping the start packet and thinning the rest of the hold with
//! probability `p` therefore yields iid packet sampling at rate `p`.

use super::uniform;
use crate::error::{Error, Result};
use crate::trace::PacketRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeldPacket {
    pub packet: PacketRecord,
    /// True for the packet whose start decision began the hold.
    pub started: bool,
}

/// Keeps every start packet and each later held packet with probability
/// `p`; the thinning draws are keyed by `(seed, position in the input)`.
pub fn resample_as_packet_sample(
    held: &[HeldPacket],
    p: f64,
    seed: u64,
) -> Result<Vec<PacketRecord>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "sampling probability {p} is outside (0, 1]"
        )));
    }
    Ok(held
        .iter()
        .enumerate()
        .filter(|(i, h)| h.started || uniform(seed, *i as u64) < p)
        .map(|(_, h)| h.packet)
        .collect())
}

#[cfg(test)]
mod tests {
    use std::net::Ipv4Addr;

    use super::*;
    use crate::trace::{FiveTuple, TcpFlags};

    fn segment(n: usize) -> Vec<HeldPacket> {
        (0..n)
            .map(|i| HeldPacket {
                packet: PacketRecord {
                    timestamp_us: i as u64,
                    key: FiveTuple::new(17, Ipv4Addr::LOCALHOST, 1, Ipv4Addr::LOCALHOST, 2),
                    byte_len: 64,
                    tcp_flags: TcpFlags::NONE,
                },
                started: i == 0,
            })
            .collect()
    }

    #[test]
    fn single_packet_hold_is_kept() {
        let out = resample_as_packet_sample(&segment(1), 1e-6, 0).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn p_one_is_identity() {
        let seg = segment(50);
        let out = resample_as_packet_sample(&seg, 1.0, 3).unwrap();
        assert_eq!(out, seg.iter().map(|h| h.packet).collect::<Vec<_>>());
    }

    #[test]
    fn expected_length_is_one_plus_rest_times_p() {
        let (n, p, reps) = (20usize, 0.25, 20_000u64);
        let seg = segment(n);
        let mut total = 0usize;
        for seed in 0..reps {
            total += resample_as_packet_sample(&seg, p, seed).unwrap().len();
        }
        let mean = total as f64 / reps as f64;
        let expected = 1.0 + (n as f64 - 1.0) * p;
        let sd = ((n as f64 - 1.0) * p * (1.0 - p) / reps as f64).sqrt();
        assert!((mean - expected).abs() < 4.0 * sd, "{mean} vs {expected}");
    }
}
