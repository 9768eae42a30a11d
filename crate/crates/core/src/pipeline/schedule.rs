use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScheduleSlot {
    pub pp_stage: u64,
    pub vpp_stage: u64,
    pub micro_batch: u64,
    pub phase: Phase,
}

impl ScheduleSlot {
    /// Global chunk index: virtual stage major, pipeline stage minor.
    pub fn chunk(&self, p: u64) -> u64 {
        self.vpp_stage * p + self.pp_stage
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub p: u64,
    pub m: u64,
    pub v: u64,
    /// Execution order of each pipeline stage.
    pub stages: Vec<Vec<ScheduleSlot>>,
    /// Forward passes each stage runs before its first backward.
    pub warmup: Vec<u64>,
}

/// Micro-batch group sizes: as many groups of at least `p` as fit, with the
/// remainder spread over the leading groups. Fewer than `p` micro-batches
/// form a single group.
fn group_sizes(p: u64, m: u64) -> Vec<u64> {
    let n = (m / p).max(1);
    let base = m / n;
    let extra = m % n;
    (0..n).map(|i| base + u64::from(i < extra)).collect()
}

/// `(vpp_stage, micro_batch)` in the order a stage consumes them.
///
/// A group of micro-batches walks all virtual stages before the next group
/// starts. Backward walks virtual stages in reverse.
fn chunk_order(p: u64, m: u64, v: u64, phase: Phase) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity((m * v) as usize);
    let mut g = 0;
    for size in group_sizes(p, m) {
        let end = g + size;
        let chunks: Vec<u64> = match phase {
            Phase::Forward => (0..v).collect(),
            Phase::Backward => (0..v).rev().collect(),
        };
        for c in chunks {
            for mb in g..end {
                out.push((c, mb));
            }
        }
        g = end;
    }
    out
}

fn default_warmup(p: u64, m: u64, v: u64, s: u64) -> u64 {
    let total = m * v;
    if v == 1 {
        (p - s - 1).min(total)
    } else {
        let g = group_sizes(p, m)[0];
        ((p - s - 1) * 2 + (v - 1) * g).min(total)
    }
}

fn stage_slots(p: u64, m: u64, v: u64, s: u64, warmup: u64) -> Vec<ScheduleSlot> {
    let fwd = chunk_order(p, m, v, Phase::Forward);
    let bwd = chunk_order(p, m, v, Phase::Backward);
    let slot = |(c, mb): (u64, u64), phase| ScheduleSlot {
        pp_stage: s,
        vpp_stage: c,
        micro_batch: mb,
        phase,
    };
    let total = fwd.len();
    let w = warmup as usize;
    let mut out = Vec::with_capacity(2 * total);
    out.extend(fwd[..w].iter().map(|&x| slot(x, Phase::Forward)));
    for i in 0..total - w {
        out.push(slot(fwd[w + i], Phase::Forward));
        out.push(slot(bwd[i], Phase::Backward));
    }
    out.extend(bwd[total - w..].iter().map(|&x| slot(x, Phase::Backward)));
    out
}

/// Slot that must finish before `slot` can start, if any (cross-stage or
/// cross-chunk data dependency).
pub fn producer(slot: &ScheduleSlot, p: u64, v: u64) -> Option<ScheduleSlot> {
    let ScheduleSlot {
        pp_stage: s,
        vpp_stage: c,
        micro_batch: mb,
        phase,
    } = *slot;
    let at = |s, c, phase| {
        Some(ScheduleSlot {
            pp_stage: s,
            vpp_stage: c,
            micro_batch: mb,
            phase,
        })
    };
    match phase {
        Phase::Forward if s > 0 => at(s - 1, c, Phase::Forward),
        Phase::Forward if c > 0 => at(p - 1, c - 1, Phase::Forward),
        Phase::Forward => None,
        Phase::Backward if s + 1 < p => at(s + 1, c, Phase::Backward),
        Phase::Backward if c + 1 < v => at(0, c + 1, Phase::Backward),
        Phase::Backward => at(p - 1, c, Phase::Forward),
    }
}

/// Runs the per-stage orders against their data dependencies with unit
/// costs. Returns the stages that are stuck when progress stops.
fn stuck_stages(p: u64, v: u64, stages: &[Vec<ScheduleSlot>]) -> Vec<usize> {
    use std::collections::HashSet;
    let mut done: HashSet<ScheduleSlot> = HashSet::new();
    let mut pos = vec![0usize; stages.len()];
    loop {
        let mut progressed = false;
        for (s, order) in stages.iter().enumerate() {
            while pos[s] < order.len() {
                let slot = order[pos[s]];
                match producer(&slot, p, v) {
                    Some(dep) if !done.contains(&dep) => break,
                    _ => {
                        done.insert(slot);
                        pos[s] += 1;
                        progressed = true;
                    }
                }
            }
        }
        if !progressed {
            break;
        }
    }
    (0..stages.len())
        .filter(|&s| pos[s] < stages[s].len())
        .collect()
}

/// Interleaved one-forward-one-backward schedule.
///
/// Each stage runs a warmup of forwards, then alternates forward and
/// backward, then drains the remaining backwards. With `v == 1` this is
/// plain 1F1B. Warmup depth follows the usual interleaved rule; if some
/// (p, m, v) combination would deadlock, the stuck stages' warmup is deepened
/// until it does not.
pub fn build_1f1b_schedule(p: u64, m: u64, v: u64) -> Result<Schedule, PipelineError> {
    if p == 0 || m == 0 || v == 0 {
        return Err(PipelineError::Invalid(format!(
            "schedule needs p, m, v >= 1 (got p={p}, m={m}, v={v})"
        )));
    }
    let mut warmup: Vec<u64> = (0..p).map(|s| default_warmup(p, m, v, s)).collect();
    loop {
        let stages: Vec<Vec<ScheduleSlot>> = (0..p)
            .map(|s| stage_slots(p, m, v, s, warmup[s as usize]))
            .collect();
        let stuck = stuck_stages(p, v, &stages);
        if stuck.is_empty() {
            return Ok(Schedule {
                p,
                m,
                v,
                stages,
                warmup,
            });
        }
        let mut bumped = false;
        for s in stuck {
            if warmup[s] < m * v {
                warmup[s] += 1;
                bumped = true;
            }
        }
        if !bumped {
            return Err(PipelineError::DeadlockDetected);
        }
    }
}
