use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BalanceError, RoutingTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    /// `coactivation[i][j] = P(j selected | i selected)`; rows of experts that
    /// never fire are zero.
    pub coactivation: Vec<Vec<f64>>,
    /// Per task, the share of its tokens routed to each expert.
    pub specialization: BTreeMap<String, Vec<f64>>,
    /// Share every expert would get under uniform routing, `K / N`.
    pub uniform_share: f64,
}

pub fn trace_statistics(trace: &RoutingTrace) -> Result<TraceStats, BalanceError> {
    if trace.tokens.is_empty() {
        return Err(BalanceError::EmptyWindow);
    }
    trace.validate()?;
    let n = trace.num_experts as usize;
    let mut pair = vec![vec![0u64; n]; n];
    let mut per_task: BTreeMap<String, (u64, Vec<u64>)> = BTreeMap::new();
    for t in &trace.tokens {
        for &i in &t.selected {
            for &j in &t.selected {
                pair[i as usize][j as usize] += 1;
            }
        }
        let e = per_task
            .entry(t.task_label.clone())
            .or_insert_with(|| (0, vec![0; n]));
        e.0 += 1;
        for &i in &t.selected {
            e.1[i as usize] += 1;
        }
    }
    let coactivation = pair
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let own = row[i];
            row.iter()
                .map(|&c| if own > 0 { c as f64 / own as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    let specialization = per_task
        .into_iter()
        .map(|(task, (tokens, counts))| {
            (
                task,
                counts.iter().map(|&c| c as f64 / tokens as f64).collect(),
            )
        })
        .collect();
    Ok(TraceStats {
        coactivation,
        specialization,
        uniform_share: trace.top_k as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::TokenRoute;

    #[test]
    fn toy_counts() {
        let tok = |sel: [u32; 2], task: &str| TokenRoute {
            seq_id: 0,
            micro_batch_id: 0,
            task_label: task.into(),
            selected: sel.to_vec(),
            scores: vec![0.3, 0.2],
        };
        let tr = RoutingTrace {
            num_experts: 4,
            top_k: 2,
            seq_len: 3,
            tokens: vec![tok([0, 1], "a"), tok([0, 2], "a"), tok([1, 2], "b")],
        };
        let s = trace_statistics(&tr).unwrap();
        // expert 0 fires twice, once with 1 and once with 2
        assert_eq!(s.coactivation[0], vec![1.0, 0.5, 0.5, 0.0]);
        assert_eq!(s.coactivation[3], vec![0.0; 4]);
        assert_eq!(s.specialization["a"], vec![1.0, 0.5, 0.5, 0.0]);
        assert_eq!(s.specialization["b"], vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(s.uniform_share, 0.5);
    }
}
