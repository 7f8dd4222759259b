//! Exact laws of the observed (sampled) flow length given the true one.

use crate::dist::{FlowLengthDistribution, ObservedDistribution};
use crate::error::{Error, Result};

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "sampling probability {p} is outside (0, 1]"
        )))
    }
}

/// iid packet sampling: a flow of length `j` shows `k ~ Binomial(j, p)`
/// packets; flows with `k = 0` are invisible and dropped.
pub fn forward_packet_sampling(
    dist: &FlowLengthDistribution,
    p: f64,
) -> Result<ObservedDistribution> {
    check_p(p)?;
    if p == 1.0 {
        return ObservedDistribution::from_probs(dist.probs().to_vec(), p);
    }
    let m = dist.max_len();
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let mut ln_fact = Vec::with_capacity(m + 1);
    ln_fact.push(0.0f64);
    for i in 1..=m {
        ln_fact.push(ln_fact[i - 1] + (i as f64).ln());
    }
    let mut weights = vec![0.0f64; m];
    for (j_idx, &theta) in dist.probs().iter().enumerate() {
        if theta == 0.0 {
            continue;
        }
        let j = j_idx + 1;
        for k in 1..=j {
            let ln_binom = ln_fact[j] - ln_fact[k] - ln_fact[j - k];
            let ln_term = ln_binom + k as f64 * ln_p + (j - k) as f64 * ln_q;
            weights[k - 1] += theta * ln_term.exp();
        }
    }
    ObservedDistribution::from_weights(weights, p)
}

/// Sample-and-hold by packet: a flow of length `j` is held from packet
/// `j - i + 1` on (showing `i` packets) with probability `p q^(j-i)`, and
/// never held with probability `q^j`.
pub fn forward_sh_packet(dist: &FlowLengthDistribution, p: f64) -> Result<ObservedDistribution> {
    check_p(p)?;
    let q = 1.0 - p;
    let probs = dist.probs();
    // tail[i] = Σ_{j>=i} q^{j-i} θ_j, built from the top down
    let mut weights = vec![0.0f64; probs.len()];
    let mut tail = 0.0;
    for (i, &theta) in probs.iter().enumerate().rev() {
        tail = theta + q * tail;
        weights[i] = p * tail;
    }
    ObservedDistribution::from_weights(weights, p)
}
