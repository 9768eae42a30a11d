//! Expert-parallel token dispatch volumes, hierarchical two-phase collective
//! events and communication-over-computation tiling.

use serde::{Deserialize, Serialize};

use crate::cluster::{collective_time, Collective, HardwareDescription};
use crate::model::ModelConfig;
use crate::plan::ParallelPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchMechanism {
    Allgather,
    Alltoall,
    Hierarchical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchVolumes {
    pub inter_node_bytes: f64,
    pub intra_node_bytes: f64,
    pub mechanism: DispatchMechanism,
}

/// Token-unit volumes `(inter, intra)` per device per micro-batch.
///
/// `tokens` is the number of tokens resident on one device.
pub fn dispatch_token_units(
    mechanism: DispatchMechanism,
    tokens: u64,
    topk: u64,
    tp: u64,
    ep: u64,
) -> (u64, u64) {
    match mechanism {
        DispatchMechanism::Allgather => (tokens * tp * ep, 0),
        DispatchMechanism::Alltoall => (tokens * topk, 0),
        DispatchMechanism::Hierarchical => (tokens * ep.saturating_sub(1), tokens * topk),
    }
}

pub fn dispatch_volumes(
    mechanism: DispatchMechanism,
    tokens: u64,
    hidden: u64,
    dtype_bytes: u64,
    topk: u64,
    tp: u64,
    ep: u64,
) -> DispatchVolumes {
    let (inter, intra) = dispatch_token_units(mechanism, tokens, topk, tp, ep);
    let unit = (hidden * dtype_bytes) as f64;
    DispatchVolumes {
        inter_node_bytes: inter as f64 * unit,
        intra_node_bytes: intra as f64 * unit,
        mechanism,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    InterLink,
    IntraLink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommPhase {
    Dispatch,
    Combine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommEvent {
    pub id: usize,
    pub label: String,
    pub kind: Collective,
    pub resource: Link,
    /// Bytes received per device.
    pub bytes: f64,
    pub group_size: u64,
    pub direction: Direction,
    pub phase: CommPhase,
    pub dependencies: Vec<usize>,
}

impl CommEvent {
    /// Alpha-beta duration on `hw`.
    pub fn duration(&self, hw: &HardwareDescription) -> f64 {
        let group = match self.resource {
            Link::InterLink => hw.inter_group(self.group_size),
            Link::IntraLink => hw.intra_group(self.group_size),
        };
        let g = self.group_size as f64;
        // ring collectives take the full gathered buffer
        let volume = match self.kind {
            Collective::Allgather | Collective::Reducescatter if g > 1.0 => {
                self.bytes * g / (g - 1.0)
            }
            _ => self.bytes,
        };
        collective_time(self.kind, volume, &group)
    }
}

/// Number of nodes the TP-extended expert group `tp * ep` spreads over.
pub fn ep_nodes_spanned(plan: &ParallelPlan, hw: &HardwareDescription) -> u64 {
    let devices = plan.tp * plan.ep;
    let nodes = devices.div_ceil(hw.devices_per_node.max(1));
    nodes.clamp(1, hw.num_nodes.max(1)).min(plan.ep.max(1))
}

/// Two-phase expert-parallel exchange for one micro-batch on one device.
///
/// Each direction runs dispatch (inter-node allgather among same-rank devices,
/// then intra-node all-to-all) followed by combine (intra-node all-to-all,
/// then inter-node reduce-scatter). Forward and backward chains share no
/// dependencies, so forward inter-node traffic may overlap backward
/// intra-node traffic. When the expert group fits on one node the inter-node
/// phase disappears.
pub fn hierarchical_events(
    tokens: u64,
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    hw: &HardwareDescription,
) -> Vec<CommEvent> {
    let nodes = ep_nodes_spanned(plan, hw);
    let unit = (cfg.hidden_size * cfg.dtype_bytes) as f64;
    let inter_bytes = (tokens * nodes.saturating_sub(1)) as f64 * unit;
    let intra_bytes = (tokens * cfg.top_k) as f64 * unit;
    let intra_size = (plan.tp * plan.ep / nodes).max(1);
    let mut events: Vec<CommEvent> = Vec::new();
    for direction in [Direction::Forward, Direction::Backward] {
        let tag = match direction {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
        };
        let mut last: Option<usize> = None;
        let mut push = |events: &mut Vec<CommEvent>,
                        label: &str,
                        kind: Collective,
                        resource: Link,
                        bytes: f64,
                        group_size: u64,
                        phase: CommPhase| {
            let id = events.len();
            events.push(CommEvent {
                id,
                label: format!("{tag}_{label}"),
                kind,
                resource,
                bytes,
                group_size,
                direction,
                phase,
                dependencies: last.into_iter().collect(),
            });
            last = Some(id);
        };
        if nodes > 1 {
            push(
                &mut events,
                "dispatch_inter_allgather",
                Collective::Allgather,
                Link::InterLink,
                inter_bytes,
                nodes,
                CommPhase::Dispatch,
            );
        }
        push(
            &mut events,
            "dispatch_intra_alltoall",
            Collective::Alltoall,
            Link::IntraLink,
            intra_bytes,
            intra_size,
            CommPhase::Dispatch,
        );
        push(
            &mut events,
            "combine_intra_alltoall",
            Collective::Alltoall,
            Link::IntraLink,
            intra_bytes,
            intra_size,
            CommPhase::Combine,
        );
        if nodes > 1 {
            push(
                &mut events,
                "combine_inter_reducescatter",
                Collective::Reducescatter,
                Link::InterLink,
                inter_bytes,
                nodes,
                CommPhase::Combine,
            );
        }
    }
    events
}

/// Exposed part of a TP collective split into `tiles` pipelined tiles.
pub fn tp_exposed_time(comm_time: f64, tiles: u64) -> f64 {
    comm_time / tiles.max(1) as f64
}
