//! Closed-form security, economic and resource calculators.
//!
//! Probabilities are clamped to `[0, 1]`. Byte and cycle counts are exact
//! integers and use `ceil(log2 m)` for the number of hashes in a Merkle path
//! over `m` transactions. The latency, redundancy and adversarial-relay
//! helpers return bound shapes with unit constants; they are not calibrated
//! predictions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::merkle::proof_len;

pub const HASH_BYTES: u64 = 32;
pub const HEADER_BYTES: u64 = 80;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum CalcError {
    #[error("geometric tail diverges for alpha = {0} (needs alpha < 0.5)")]
    DivergentSeries(f64),
    #[error("unit cost must be positive, got {0}")]
    NonPositiveCost(f64),
    #[error("detection rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("filter must have at least one bit")]
    ZeroBits,
}

/// Adversarial share of hash power, `0 <= alpha < 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversaryModel {
    pub alpha: f64,
}

impl AdversaryModel {
    pub fn new(alpha: f64) -> Option<AdversaryModel> {
        (0.0..1.0).contains(&alpha).then_some(AdversaryModel { alpha })
    }

    /// Honest share `p = 1 - alpha`.
    pub fn honest(&self) -> f64 {
        1.0 - self.alpha
    }

    /// `q / p`.
    pub fn ratio(&self) -> f64 {
        odds(self.alpha)
    }
}

fn odds(alpha: f64) -> f64 {
    alpha / (1.0 - alpha)
}

fn clamp01(x: f64) -> f64 {
    if x.is_nan() {
        1.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// `(alpha / (1 - alpha))^k`, clamped to `[0, 1]`.
pub fn fraud_bound(alpha: f64, k: u32) -> f64 {
    clamp01(odds(alpha).powi(k as i32))
}

/// Smallest depth `k` with `fraud_bound(alpha, k) <= 2^-security_bits`, found
/// by bisection over the monotone bound. `None` when `alpha >= 0.5`.
pub fn min_depth_for_security(alpha: f64, security_bits: f64) -> Option<u32> {
    let goal = (-security_bits).exp2();
    if fraud_bound(alpha, 0) <= goal {
        return Some(0);
    }
    if alpha >= 0.5 {
        return None;
    }
    let mut hi: u32 = 1;
    while fraud_bound(alpha, hi) > goal {
        hi = hi.checked_mul(2)?;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fraud_bound(alpha, mid) <= goal {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// `sum_{k > d} r^k = r^(d+1) / (1 - r)` with `r = alpha / (1 - alpha)`.
pub fn reorg_tail_bound(alpha: f64, d: u32) -> Result<f64, CalcError> {
    if alpha >= 0.5 {
        return Err(CalcError::DivergentSeries(alpha));
    }
    let r = odds(alpha);
    Ok(clamp01(r.powi(d as i32 + 1) / (1.0 - r)))
}

/// Probability that an attacker with share `alpha` ever overtakes a payment
/// buried under `z` blocks: the attacker's progress while the honest chain
/// mines `z` blocks is Poisson with mean `z * alpha / (1 - alpha)`, and from
/// a deficit of `d` it catches up with probability `r^d`.
///
/// Summed as non-negative terms, `sum_{k <= z} P(k) r^(z-k) + P(K > z)`, so
/// tiny probabilities keep their precision.
pub fn race_success_prob(alpha: f64, z: u32) -> f64 {
    if alpha >= 0.5 {
        return 1.0;
    }
    let r = odds(alpha);
    let lambda = f64::from(z) * r;
    let mut poisson = (-lambda).exp();
    let mut total = 0.0;
    for k in 0..=z {
        if k > 0 {
            poisson *= lambda / f64::from(k);
        }
        total += poisson * r.powi((z - k) as i32);
    }
    let mut k = z;
    loop {
        k += 1;
        poisson *= lambda / f64::from(k);
        total += poisson;
        if poisson <= total * f64::EPSILON || poisson == 0.0 {
            break;
        }
    }
    clamp01(total)
}

/// `floor((capital / unit_cost) * detection_rate)`.
pub fn attack_count_bound(capital: f64, unit_cost: f64, detection_rate: f64) -> Result<u64, CalcError> {
    if unit_cost <= 0.0 || unit_cost.is_nan() {
        return Err(CalcError::NonPositiveCost(unit_cost));
    }
    if detection_rate <= 0.0 || detection_rate.is_nan() {
        return Err(CalcError::NonPositiveRate(detection_rate));
    }
    Ok(((capital / unit_cost) * detection_rate).floor().max(0.0) as u64)
}

/// Per-block costs: energy, energy rate, amortisation, capital rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCost {
    pub energy: f64,
    pub energy_rate: f64,
    pub amortisation: f64,
    pub capital_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub blocks: Vec<BlockCost>,
}

/// `sum(e_i * r_i + p_i * c_i)`.
pub fn fork_cost(model: &CostModel) -> f64 {
    model
        .blocks
        .iter()
        .map(|b| b.energy * b.energy_rate + b.amortisation * b.capital_rate)
        .sum()
}

pub fn deterrence_holds(expected_fraud_value: f64, cost: f64) -> bool {
    expected_fraud_value <= cost
}

/// Minimum relay reward `c_v + gamma * (kappa - c_a)`.
pub fn min_relay_reward(verify_cost: f64, gamma: f64, kappa: f64, withhold_cost: f64) -> f64 {
    verify_cost + gamma * (kappa - withhold_cost)
}

pub fn incentive_compatible(
    fee: f64,
    reward: f64,
    verify_cost: f64,
    gamma: f64,
    kappa: f64,
    withhold_cost: f64,
) -> bool {
    fee + reward >= min_relay_reward(verify_cost, gamma, kappa, withhold_cost)
}

/// `(1 - e^(-k n / m))^k`.
pub fn bloom_fpr(k_hashes: u32, n_inserted: u64, m_bits: u64) -> Result<f64, CalcError> {
    if m_bits == 0 {
        return Err(CalcError::ZeroBits);
    }
    let k = f64::from(k_hashes);
    let exponent = -k * n_inserted as f64 / m_bits as f64;
    Ok(clamp01((1.0 - exponent.exp()).powf(k)))
}

/// `fpr * (n_block - k_interest)`: false matches among the uninteresting
/// transactions of a block.
pub fn bloom_expected_false_matches(fpr: f64, n_block: u64, k_interest: u64) -> f64 {
    fpr * n_block.saturating_sub(k_interest) as f64
}

/// `1 - (1 - p)^k`.
pub fn relay_visibility(p_upstream: f64, k_relays: u32) -> f64 {
    clamp01(1.0 - (1.0 - p_upstream).powi(k_relays as i32))
}

fn path_hashes(m: u64) -> u64 {
    proof_len(m.max(1) as usize) as u64
}

/// `tx_bytes + 32 * ceil(log2 m) + 80 * n_headers`.
pub fn packet_cost(tx_bytes: u64, m_txs_per_block: u64, n_headers: u64) -> u64 {
    amortised_query_cost(tx_bytes, m_txs_per_block) + HEADER_BYTES * n_headers
}

/// Per-query cost once headers are already held.
pub fn amortised_query_cost(tx_bytes: u64, m_txs_per_block: u64) -> u64 {
    tx_bytes + HASH_BYTES * path_hashes(m_txs_per_block)
}

/// `80 n + 32 k ceil(log2 m)`.
pub fn memory_cost(n_headers: u64, k_txs: u64, m: u64) -> u64 {
    HEADER_BYTES * n_headers + HASH_BYTES * k_txs * path_hashes(m)
}

/// `k * ceil(log2 m) * cycles_per_hash`.
pub fn cycle_cost(k_txs: u64, m: u64, cycles_per_hash: u64) -> u64 {
    k_txs * path_hashes(m) * cycles_per_hash
}

/// Transactions verified per second, `cpu / (ceil(log2 m) * cycles_per_hash)`.
pub fn throughput(cpu_cycles_per_s: f64, m: u64, cycles_per_hash: u64) -> f64 {
    cpu_cycles_per_s / (path_hashes(m) as f64 * cycles_per_hash as f64)
}

/// Chance that a polling window of `kappa` mean block intervals sees at
/// least one block: `1 - e^(-kappa)`.
pub fn poll_capture_prob(kappa: f64) -> f64 {
    clamp01(1.0 - (-kappa).exp())
}

/// `ln n / ln(1 + degree * p_forward)`.
pub fn latency_bound(n_nodes: u64, max_degree: u32, p_forward: f64) -> f64 {
    (n_nodes as f64).ln() / (1.0 + f64::from(max_degree) * p_forward).ln()
}

/// `n * p * ln n`.
pub fn redundancy_bound(n_nodes: u64, p_forward: f64) -> f64 {
    let n = n_nodes as f64;
    n * p_forward * n.ln()
}

/// Shape of the cost to suppress a message, `rho * n * beta` (uncalibrated).
pub fn suppression_cost_shape(rho: f64, n_nodes: u64, beta: f64) -> f64 {
    rho * n_nodes as f64 * beta
}

/// Shape of the delivery guarantee, `1 - exp(-ln n) = 1 - 1/n` (uncalibrated).
pub fn delivery_guarantee_shape(n_nodes: u64) -> f64 {
    clamp01(1.0 - (-(n_nodes as f64).ln()).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub alpha: f64,
    pub z: u32,
    pub fraud_bound: f64,
    pub race_prob: f64,
    /// Empty when the tail diverges.
    pub reorg_tail: Option<f64>,
}

/// One row per `(alpha, z)` pair, alpha-major.
pub fn probability_table(alphas: &[f64], zs: &[u32]) -> Vec<TableRow> {
    alphas
        .iter()
        .flat_map(|&alpha| {
            zs.iter().map(move |&z| TableRow {
                alpha,
                z,
                fraud_bound: fraud_bound(alpha, z),
                race_prob: race_success_prob(alpha, z),
                reorg_tail: reorg_tail_bound(alpha, z).ok(),
            })
        })
        .collect()
}
