//! Choosing `p` so that a target fraction of packets is sampled.

use super::{Method, Sampler, SamplerConfig};
use crate::dist::LengthHistogram;
use crate::error::{Error, Result};
use crate::flowtable::{FlowTable, FlowTableConfig};
use crate::trace::PacketRecord;

/// Accepted relative error of the calibrated fraction.
pub const CALIBRATION_TOLERANCE: f64 = 0.2;
// Bisection stops early once this close.
const EARLY_STOP: f64 = 0.01;
const MIN_P: f64 = 1e-12;
const MAX_ITERATIONS: usize = 80;

#[derive(Debug, Clone, Copy)]
pub enum CalibrationInput<'a> {
    /// Flow lengths of the unsampled trace; enough for `packet` and `sh-packet`.
    Histogram(&'a LengthHistogram),
    /// A pilot packet stream replayed through a flow table with a fixed seed.
    Pilot {
        packets: &'a [PacketRecord],
        table: FlowTableConfig,
        seed: u64,
    },
}

/// Expected fraction of packets kept by sample-and-hold by packet when
/// every flow is held from its start packet to its end.
pub fn expected_sh_packet_fraction(hist: &LengthHistogram, p: f64) -> f64 {
    let total = hist.total_packets();
    if total == 0 {
        return 0.0;
    }
    let sampled: f64 = hist
        .iter()
        .map(|(len, count)| count as f64 * expected_held(len, p))
        .sum();
    sampled / total as f64
}

// E[packets held] for one flow of `len` packets: Σ_{i=1}^{len} i p q^(len-i).
fn expected_held(len: u64, p: f64) -> f64 {
    let l = len as f64;
    if p >= 1.0 {
        return l;
    }
    if p * l < 1e-3 {
        // p Σ_m (-p)^m C(l+1, m+2); four terms leave a relative error ~ (pl)^4
        let mut sum = 0.0;
        let mut binom = (l + 1.0) * l / 2.0;
        let mut pow = 1.0;
        for m in 0..4 {
            sum += pow * binom;
            let top = l + 1.0 - (m as f64 + 2.0);
            binom *= top / (m as f64 + 3.0);
            pow *= -p;
        }
        return p * sum;
    }
    let q = 1.0 - p;
    let one_minus_q_pow = -(l * (-p).ln_1p()).exp_m1();
    l - q * one_minus_q_pow / p
}

/// Fraction of `packets` admitted by `sampler` through a flow table.
pub fn realized_fraction(
    packets: &[PacketRecord],
    table: FlowTableConfig,
    sampler: SamplerConfig,
) -> Result<f64> {
    if packets.is_empty() {
        return Ok(0.0);
    }
    let sampler = Sampler::new(sampler)?;
    let mut ft = FlowTable::new(table, &sampler)?;
    for p in packets {
        ft.push(p)?;
    }
    Ok(ft.admitted() as f64 / packets.len() as f64)
}

pub fn calibrate_rate(input: &CalibrationInput<'_>, method: Method, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "target fraction {target} is outside (0, 1)"
        )));
    }
    match (method, input) {
        (Method::Always, _) => Err(Error::InvalidConfig(
            "the always-sample strategy has no rate".into(),
        )),
        // Expected fraction of iid sampling is p itself; a pilot is matched
        // on its realized fraction below like every other method.
        (Method::Packet, CalibrationInput::Histogram(_)) => Ok(target),
        (Method::ShPacket, CalibrationInput::Histogram(hist)) => {
            if hist.total_packets() == 0 {
                return Err(Error::Unattainable("empty trace".into()));
            }
            bisect(target, |p| Ok(expected_sh_packet_fraction(hist, p)))
        }
        (_, CalibrationInput::Histogram(_)) => Err(Error::InvalidConfig(format!(
            "{method} calibration needs a pilot packet stream"
        ))),
        (
            _,
            CalibrationInput::Pilot {
                packets,
                table,
                seed,
            },
        ) => {
            if packets.is_empty() {
                return Err(Error::Unattainable("empty pilot stream".into()));
            }
            bisect(target, |p| {
                realized_fraction(
                    packets,
                    *table,
                    SamplerConfig {
                        method,
                        p,
                        seed: *seed,
                    },
                )
            })
        }
    }
}

/// Log-scale bisection on a fraction that is non-decreasing in p.
fn bisect(target: f64, mut fraction: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let within = |f: f64, tol: f64| (f / target - 1.0).abs() <= tol;

    let at_max = fraction(1.0)?;
    if within(at_max, EARLY_STOP) {
        return Ok(1.0);
    }
    if at_max < target * (1.0 - CALIBRATION_TOLERANCE) {
        return Err(Error::Unattainable(format!(
            "even p = 1 samples only {at_max:.6} of packets (target {target})"
        )));
    }
    let (mut lo, mut hi) = (MIN_P, 1.0);
    let (mut f_lo, mut f_hi) = (fraction(lo)?, at_max);
    if f_lo > target * (1.0 + CALIBRATION_TOLERANCE) {
        return Err(Error::Unattainable(format!(
            "p = {MIN_P} already samples {f_lo:.6} of packets (target {target})"
        )));
    }
    for _ in 0..MAX_ITERATIONS {
        let mid = (lo * hi).sqrt();
        let f = fraction(mid)?;
        if within(f, EARLY_STOP) {
            return Ok(mid);
        }
        if f < target {
            lo = mid;
            f_lo = f;
        } else {
            hi = mid;
            f_hi = f;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    let (p, f) = if (f_lo / target - 1.0).abs() <= (f_hi / target - 1.0).abs() {
        (lo, f_lo)
    } else {
        (hi, f_hi)
    };
    if within(f, CALIBRATION_TOLERANCE) {
        Ok(p)
    } else {
        Err(Error::Unattainable(format!(
            "sampled fraction jumps past {target}: closest is {f:.6} at p = {p:e}"
        )))
    }
}
