use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BalanceError, RoutingTrace, TokenRoute};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxLevel {
    Sequence,
    MicroBatch,
    EpGroup,
    DpGroup,
}

impl AuxLevel {
    pub const ALL: [AuxLevel; 4] = [
        AuxLevel::Sequence,
        AuxLevel::MicroBatch,
        AuxLevel::EpGroup,
        AuxLevel::DpGroup,
    ];
}

/// Batch geometry the aux-loss levels are defined over. An EP (DP) group is
/// `ep` (`dp`) consecutive micro-batch ids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxScope {
    pub seq_len: u64,
    pub micro_batch_size: u64,
    pub ep: u64,
    pub dp: u64,
}

pub fn balance_bsz(level: AuxLevel, s: &AuxScope) -> u64 {
    let mb = s.micro_batch_size * s.seq_len;
    match level {
        AuxLevel::Sequence => s.seq_len,
        AuxLevel::MicroBatch => mb,
        AuxLevel::EpGroup => s.ep * mb,
        AuxLevel::DpGroup => s.dp * mb,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxLossResult {
    pub level: AuxLevel,
    pub alpha: f64,
    /// `alpha * sum_i f_i p_i`, averaged over groups.
    pub loss: f64,
    /// `sum_i f_i p_i`, averaged over groups.
    pub unscaled: f64,
    pub f: Vec<f64>,
    pub p: Vec<f64>,
    pub balance_bsz: u64,
    pub groups: usize,
}

fn group_key(t: &TokenRoute, level: AuxLevel, s: &AuxScope) -> u64 {
    match level {
        AuxLevel::Sequence => t.seq_id,
        AuxLevel::MicroBatch => t.micro_batch_id,
        AuxLevel::EpGroup => t.micro_batch_id / s.ep.max(1),
        AuxLevel::DpGroup => t.micro_batch_id / s.dp.max(1),
    }
}

/// Frequency and mean score per expert over one group.
///
/// Traces keep only the selected experts' scores; the remaining probability
/// mass `1 - sum(selected)` is spread evenly over the unselected experts.
fn group_fp(tokens: &[&TokenRoute], n: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
    let t = tokens.len() as f64;
    let mut count = vec![0.0; n];
    let mut score = vec![0.0; n];
    let mut residual_total = 0.0;
    for tok in tokens {
        let sel: f64 = tok.scores.iter().sum();
        let r = if n > k {
            (1.0 - sel).max(0.0) / (n - k) as f64
        } else {
            0.0
        };
        residual_total += r;
        for (&e, &s) in tok.selected.iter().zip(&tok.scores) {
            count[e as usize] += 1.0;
            score[e as usize] += s - r;
        }
    }
    let f = count.iter().map(|c| n as f64 / (k as f64 * t) * c).collect();
    let p = score.iter().map(|s| (s + residual_total) / t).collect();
    (f, p)
}

/// Load-balancing auxiliary loss at `level`.
///
/// `f_i = N / (K T_w) * |{t : i selected}|`, `p_i = mean_t s_{i,t}`, loss
/// `alpha * sum_i f_i p_i`, computed per group of the level and averaged.
pub fn aux_loss(
    trace: &RoutingTrace,
    window: &[TokenRoute],
    level: AuxLevel,
    alpha: f64,
    scope: &AuxScope,
) -> Result<AuxLossResult, BalanceError> {
    if window.is_empty() {
        return Err(BalanceError::EmptyWindow);
    }
    let n = trace.num_experts as usize;
    let k = trace.top_k as usize;
    let mut groups: BTreeMap<u64, Vec<&TokenRoute>> = BTreeMap::new();
    for t in window {
        groups.entry(group_key(t, level, scope)).or_default().push(t);
    }
    let g = groups.len() as f64;
    let mut f = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut unscaled = 0.0;
    for toks in groups.values() {
        let (fg, pg) = group_fp(toks, n, k);
        unscaled += fg.iter().zip(&pg).map(|(a, b)| a * b).sum::<f64>() / g;
        for i in 0..n {
            f[i] += fg[i] / g;
            p[i] += pg[i] / g;
        }
    }
    Ok(AuxLossResult {
        level,
        alpha,
        loss: alpha * unscaled,
        unscaled,
        f,
        p,
        balance_bsz: balance_bsz(level, scope),
        groups: groups.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropStats {
    pub capacity_factor: f64,
    /// Token slots per expert; infinite for an infinite factor.
    pub capacity: f64,
    pub dropped: u64,
    pub drop_rate: f64,
    pub per_expert_drops: Vec<u64>,
}

/// Drop-and-pad with per-expert capacity `ceil(C * T * K / N)`; tokens past
/// capacity are dropped in arrival order.
pub fn capacity_drop_stats(trace: &RoutingTrace, capacity_factor: f64) -> Result<DropStats, BalanceError> {
    if !(capacity_factor > 0.0) {
        return Err(BalanceError::Invalid(format!(
            "capacity factor must be positive, got {capacity_factor}"
        )));
    }
    let n = trace.num_experts as usize;
    let k = trace.top_k as f64;
    let t = trace.tokens.len() as f64;
    let capacity = (capacity_factor * t * k / n as f64).ceil();
    let mut used = vec![0u64; n];
    let mut drops = vec![0u64; n];
    for tok in &trace.tokens {
        for &e in &tok.selected {
            let e = e as usize;
            if (used[e] as f64) < capacity {
                used[e] += 1;
            } else {
                drops[e] += 1;
            }
        }
    }
    let dropped: u64 = drops.iter().sum();
    let slots = t * k;
    Ok(DropStats {
        capacity_factor,
        capacity,
        dropped,
        drop_rate: if slots > 0.0 { dropped as f64 / slots } else { 0.0 },
        per_expert_drops: drops,
    })
}
