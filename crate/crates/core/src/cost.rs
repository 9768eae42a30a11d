//! Per-operator durations of one micro-batch on one device.
//!
//! Every matmul runs `1/tp` of the micro-batch's tokens (sequence-parallel
//! attention, experts sharded whole across `tp * ep` devices with balanced
//! routing), so per-device FLOPs are the per-token FLOPs times
//! `tokens_dev = mbs * seq_len / (cp * tp)`.

use serde::{Deserialize, Serialize};

use crate::cluster::{collective_time, kernel_time, Collective, HardwareDescription};
use crate::comm::{hierarchical_events, CommPhase, Direction, DispatchMechanism, Link};
use crate::model::{attention_core_flops, ModelConfig};
use crate::pipeline::Resource;
use crate::plan::ParallelPlan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostOptions {
    pub coc_tiles: u64,
    pub dispatcher: DispatchMechanism,
}

impl Default for CostOptions {
    fn default() -> Self {
        CostOptions {
            coc_tiles: 4,
            dispatcher: DispatchMechanism::Hierarchical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpTransfer {
    pub label: String,
    pub resource: Resource,
    pub phase: CommPhase,
    pub duration: f64,
}

/// Forward durations in seconds; backward matmuls cost twice as much.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpCosts {
    pub tokens_dev: f64,
    pub attn: f64,
    /// Query and key/value up-projections from the latents.
    pub qkv_up: f64,
    pub kv_up: f64,
    pub router: f64,
    pub permute: f64,
    /// Routed-expert fc1 and fc2 grouped matmuls.
    pub gmm: f64,
    pub swiglu: f64,
    pub shared: f64,
    pub shared_swiglu: f64,
    pub unpermute: f64,
    pub dense_ffn: f64,
    pub dense_swiglu: f64,
    pub head: f64,
    pub mtp_proj: f64,
    /// Exposed time of one tensor-parallel collective after tiling.
    pub tp_comm: f64,
    /// Forward dispatch and combine transfers of one MoE layer, in order.
    pub ep: Vec<EpTransfer>,
    pub p2p: f64,
    /// One-way host transfer of the swappable unpermute input of a layer.
    pub swap_transfer: f64,
    pub swap_bytes: f64,
}

impl OpCosts {
    pub fn moe_layer_fwd(&self) -> f64 {
        self.attn + self.router + self.permute + self.gmm + self.swiglu + self.shared
            + self.shared_swiglu
            + self.unpermute
    }

    pub fn dense_layer_fwd(&self) -> f64 {
        self.attn + self.dense_ffn + self.dense_swiglu
    }

    pub fn ep_dispatch_time(&self, link: Resource) -> f64 {
        self.ep
            .iter()
            .filter(|e| e.phase == CommPhase::Dispatch && e.resource == link)
            .map(|e| e.duration)
            .sum()
    }
}

pub fn op_costs(
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    hw: &HardwareDescription,
    opts: &CostOptions,
) -> OpCosts {
    let tp = plan.tp as f64;
    let tokens_seq = (plan.micro_batch_size * cfg.seq_len) as f64 / plan.cp as f64;
    let t = tokens_seq / tp;
    let dt = cfg.dtype_bytes as f64;
    let h = cfg.hidden_size as f64;
    let k = cfg.top_k as f64;
    let i_e = cfg.expert_intermediate_size as f64;
    let i_d = cfg.dense_ffn_intermediate_size as f64;
    let n = cfg.num_routed_experts as f64;
    let s = cfg.num_shared_experts as f64;
    let v = cfg.vocab_size as f64;
    let m = &cfg.mla_dims;
    let a = cfg.num_attention_heads as f64;
    let mm = |flops: f64, weight_bytes: f64, act_bytes: f64| {
        kernel_time(flops, weight_bytes + act_bytes, hw, hw.matmul_efficiency)
    };
    let vec_op = |flops: f64, bytes: f64| kernel_time(flops, bytes, hw, hw.vector_efficiency);

    let attn_w = cfg.attention_matmul_params() as f64;
    let attn = mm(
        t * (2.0 * attn_w + attention_core_flops(cfg, cfg.seq_len)),
        attn_w * dt / tp,
        t * 4.0 * h * dt,
    );
    let q_up_w = if m.q_rank > 0 {
        (m.q_rank * cfg.num_attention_heads * (m.head_dim + m.rope_dim)) as f64
    } else {
        h * a * (m.head_dim + m.rope_dim) as f64
    };
    let kv_up_w = (m.kv_rank * cfg.num_attention_heads * 2 * m.head_dim) as f64;
    let qkv_up = mm(t * 2.0 * (q_up_w + kv_up_w), (q_up_w + kv_up_w) * dt / tp, 0.0);
    let kv_up = mm(t * 2.0 * kv_up_w, kv_up_w * dt / tp, 0.0);
    let router = mm(t * 2.0 * h * n, h * n * dt, t * n * 4.0);
    let permute = vec_op(0.0, 2.0 * t * k * h * dt);
    let local_experts = n / (tp * plan.ep as f64);
    let gmm = mm(
        t * k * 6.0 * h * i_e,
        local_experts * 3.0 * h * i_e * dt,
        t * k * (2.0 * h + 3.0 * i_e) * dt,
    );
    let swiglu = vec_op(t * k * 5.0 * i_e, t * k * 3.0 * i_e * dt);
    let shared = mm(t * s * 6.0 * h * i_e, s * 3.0 * h * i_e * dt, t * 2.0 * h * dt);
    let shared_swiglu = vec_op(t * s * 5.0 * i_e, t * s * 3.0 * i_e * dt);
    let unpermute = vec_op(t * k * h, 2.0 * t * k * h * dt);
    let dense_ffn = mm(t * 6.0 * h * i_d, 3.0 * h * i_d * dt / tp, t * 2.0 * h * dt);
    let dense_swiglu = vec_op(t * 5.0 * i_d, t * 3.0 * i_d * dt);
    let head = mm(t * 2.0 * h * v, h * v * dt / tp, t * v * 4.0);
    let mtp_proj = mm(t * 4.0 * h * h, 2.0 * h * h * dt / tp, 0.0);

    let tp_group = hw.intra_group(plan.tp.min(hw.devices_per_node));
    let tp_full = collective_time(Collective::Allgather, tokens_seq * h * dt, &tp_group);
    let tp_comm = crate::comm::tp_exposed_time(tp_full, opts.coc_tiles);

    let tokens_u = t.round() as u64;
    let ep = match opts.dispatcher {
        DispatchMechanism::Hierarchical => hierarchical_events(tokens_u, cfg, plan, hw)
            .into_iter()
            .filter(|e| e.direction == Direction::Forward)
            .map(|e| EpTransfer {
                label: e.label.trim_start_matches("fwd_").to_string(),
                resource: e.resource.into(),
                phase: e.phase,
                duration: e.duration(hw),
            })
            .collect(),
        mech => {
            let nodes = crate::comm::ep_nodes_spanned(plan, hw);
            let (link, group) = if nodes > 1 {
                (Link::InterLink, hw.inter_group(plan.tp * plan.ep))
            } else {
                (Link::IntraLink, hw.intra_group(plan.tp * plan.ep))
            };
            let (units, _) =
                crate::comm::dispatch_token_units(mech, tokens_u, cfg.top_k, plan.tp, plan.ep);
            let bytes = units as f64 * h * dt;
            let kind = match mech {
                DispatchMechanism::Allgather => Collective::Allgather,
                _ => Collective::Alltoall,
            };
            // both token-unit counts already describe the whole exchanged buffer
            let d = collective_time(kind, bytes, &group);
            vec![
                EpTransfer {
                    label: "dispatch".into(),
                    resource: link.into(),
                    phase: CommPhase::Dispatch,
                    duration: d,
                },
                EpTransfer {
                    label: "combine".into(),
                    resource: link.into(),
                    phase: CommPhase::Combine,
                    duration: d,
                },
            ]
        }
    };

    let mut p2p_bytes = t * h * dt;
    if cfg.num_mtp_layers > 0 {
        p2p_bytes *= 2.0;
    }
    let p2p = if plan.pp > 1 {
        collective_time(Collective::P2p, p2p_bytes, &hw.inter_group(2))
    } else {
        0.0
    };
    let swap_bytes = t * k * h * dt;
    OpCosts {
        tokens_dev: t,
        attn,
        qkv_up,
        kv_up,
        router,
        permute,
        gmm,
        swiglu,
        shared,
        shared_swiglu,
        unpermute,
        dense_ffn,
        dense_swiglu,
        head,
        mtp_proj,
        tp_comm: if plan.tp > 1 { tp_comm } else { 0.0 },
        ep,
        p2p,
        swap_transfer: swap_bytes / hw.host_to_device_bandwidth,
        swap_bytes,
    }
}
