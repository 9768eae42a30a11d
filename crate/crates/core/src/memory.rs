//! Static and activation memory per device, fine-grained recomputation and
//! swap options, and memory plan selection.
//!
//! Static memory uses the usual mixed-precision layout: 2-byte weights and
//! 2-byte gradients held in full, plus a 4-byte master copy and two 4-byte
//! Adam moments sharded by the distributed optimizer across data-parallel
//! replicas. Activations are tallied per stored tensor and multiplied by the
//! number of micro-batches a stage keeps in flight under interleaved 1F1B.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::HardwareDescription;
use crate::cost::{op_costs, CostOptions, OpCosts};
use crate::model::ModelConfig;
use crate::pipeline::build_1f1b_schedule;
use crate::plan::{assign_chunks, micro_batch_count, ChunkWeights, ItemKind, ParallelPlan, PlanError, StageAssignment};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MemoryError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("no recompute/swap combination fits: needs {needed:.3e} B, device has {capacity:.3e} B")]
    Infeasible { needed: f64, capacity: f64 },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecomputeOption {
    MlaQkv,
    MlaKvOnly,
    Permute,
    SwigluActivation,
    /// Whole-layer recomputation; a baseline, never chosen by the planner.
    FullLayer,
}

impl RecomputeOption {
    pub const FINE_GRAINED: [RecomputeOption; 4] = [
        RecomputeOption::MlaQkv,
        RecomputeOption::MlaKvOnly,
        RecomputeOption::Permute,
        RecomputeOption::SwigluActivation,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapOption {
    Probs,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OptionCost {
    pub bytes_saved: f64,
    pub time_added: f64,
    pub transfer_bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MemoryPlan {
    pub recompute: BTreeSet<RecomputeOption>,
    pub swap: BTreeSet<SwapOption>,
    pub per_option: BTreeMap<String, OptionCost>,
}

impl MemoryPlan {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with(recompute: &[RecomputeOption], swap: &[SwapOption]) -> Self {
        MemoryPlan {
            recompute: recompute.iter().copied().collect(),
            swap: swap.iter().copied().collect(),
            per_option: BTreeMap::new(),
        }
    }

    pub fn full_layer() -> Self {
        Self::with(&[RecomputeOption::FullLayer], &[])
    }

    pub fn validate(&self) -> Result<(), MemoryError> {
        if self.recompute.contains(&RecomputeOption::MlaQkv)
            && self.recompute.contains(&RecomputeOption::MlaKvOnly)
        {
            return Err(MemoryError::Invalid(
                "mla_qkv and mla_kv_only are mutually exclusive".into(),
            ));
        }
        Ok(())
    }

    pub fn has(&self, o: RecomputeOption) -> bool {
        self.recompute.contains(&o)
    }

    pub fn swaps_probs(&self) -> bool {
        self.swap.contains(&SwapOption::Probs)
    }

    pub fn option_count(&self) -> usize {
        self.recompute.len() + self.swap.len()
    }

    fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.recompute.iter().map(|o| option_name(*o)).collect();
        v.extend(self.swap.iter().map(|_| "probs_swap".to_string()));
        v
    }
}

pub fn option_name(o: RecomputeOption) -> String {
    serde_json::to_value(o)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub static_bytes: f64,
    pub activation_peak_bytes: f64,
    pub headroom: f64,
    pub feasible: bool,
}

/// What frees a stored tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Freed {
    Never,
    Q,
    Kv,
    Permute,
    Swiglu,
    ProbsSwap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub name: &'static str,
    pub bytes_per_token: f64,
    freed: Freed,
    boundary: bool,
}

fn tensor(name: &'static str, bytes: f64, freed: Freed) -> StoredTensor {
    StoredTensor {
        name,
        bytes_per_token: bytes,
        freed,
        boundary: false,
    }
}

/// Tensors a layer keeps for its backward pass, per token.
pub fn stored_tensors(cfg: &ModelConfig, kind: ItemKind) -> Vec<StoredTensor> {
    let dt = cfg.dtype_bytes as f64;
    let h = cfg.hidden_size as f64;
    let m = &cfg.mla_dims;
    let a = cfg.num_attention_heads as f64;
    let k = cfg.top_k as f64;
    let i_e = cfg.expert_intermediate_size as f64;
    let s = cfg.num_shared_experts as f64;
    let mut out = vec![
        StoredTensor {
            name: "layer_input",
            bytes_per_token: h * dt,
            freed: Freed::Never,
            boundary: true,
        },
        tensor(
            "mla_latent",
            (m.q_rank + m.kv_rank + m.rope_dim) as f64 * dt,
            Freed::Never,
        ),
        tensor("q", a * (m.head_dim + m.rope_dim) as f64 * dt, Freed::Q),
        tensor("k", a * (m.head_dim + m.rope_dim) as f64 * dt, Freed::Kv),
        tensor("v", a * m.head_dim as f64 * dt, Freed::Kv),
        tensor("context", a * m.head_dim as f64 * dt, Freed::Never),
    ];
    match kind {
        ItemKind::Dense => {
            let i_d = cfg.dense_ffn_intermediate_size as f64;
            out.push(tensor("ffn_input", h * dt, Freed::Never));
            out.push(tensor("ffn_fc1_out", 2.0 * i_d * dt, Freed::Never));
            out.push(tensor("ffn_swiglu_out", i_d * dt, Freed::Swiglu));
        }
        ItemKind::Moe | ItemKind::MtpBody => {
            if kind == ItemKind::MtpBody {
                out.push(tensor("mtp_concat", 2.0 * h * dt, Freed::Never));
            }
            out.push(tensor("moe_input", h * dt, Freed::Never));
            out.push(tensor(
                "router_probs",
                cfg.num_routed_experts as f64 * 4.0,
                Freed::Never,
            ));
            out.push(tensor("permute_buffers", 2.0 * k * h * dt, Freed::Permute));
            out.push(tensor("expert_fc1_out", k * 2.0 * i_e * dt, Freed::Never));
            out.push(tensor("expert_swiglu_out", k * i_e * dt, Freed::Swiglu));
            out.push(tensor("unpermute_input", k * h * dt, Freed::ProbsSwap));
            out.push(tensor("shared_fc1_out", s * 2.0 * i_e * dt, Freed::Never));
            out.push(tensor("shared_swiglu_out", s * i_e * dt, Freed::Swiglu));
        }
        ItemKind::Head => {
            // final norm input only; logits are counted separately
            return vec![StoredTensor {
                name: "head_input",
                bytes_per_token: h * dt,
                freed: Freed::Never,
                boundary: true,
            }];
        }
    }
    out
}

fn kept(t: &StoredTensor, plan: &MemoryPlan) -> bool {
    if plan.has(RecomputeOption::FullLayer) {
        return t.boundary;
    }
    match t.freed {
        Freed::Never => true,
        Freed::Q => !plan.has(RecomputeOption::MlaQkv),
        Freed::Kv => {
            !(plan.has(RecomputeOption::MlaQkv) || plan.has(RecomputeOption::MlaKvOnly))
        }
        Freed::Permute => !plan.has(RecomputeOption::Permute),
        Freed::Swiglu => !plan.has(RecomputeOption::SwigluActivation),
        Freed::ProbsSwap => !plan.swaps_probs(),
    }
}

/// Stored bytes per token of one item under `plan`.
pub fn item_bytes_per_token(cfg: &ModelConfig, kind: ItemKind, plan: &MemoryPlan) -> f64 {
    stored_tensors(cfg, kind)
        .iter()
        .filter(|t| kept(t, plan))
        .map(|t| t.bytes_per_token)
        .sum()
}

/// Parameters of one pipeline item split into (non-expert, routed-expert).
pub fn item_params(cfg: &ModelConfig, kind: ItemKind) -> (f64, f64) {
    let h = cfg.hidden_size;
    let attn = cfg.attention_matmul_params() + cfg.attention_norm_params() + 2 * h;
    let moe_ne = cfg.router_params() + cfg.num_shared_experts * cfg.expert_params();
    let routed = cfg.num_routed_experts * cfg.expert_params();
    match kind {
        ItemKind::Dense => ((attn + cfg.dense_ffn_params()) as f64, 0.0),
        ItemKind::Moe => ((attn + moe_ne) as f64, routed as f64),
        ItemKind::MtpBody => ((attn + moe_ne + 2 * h * h + 2 * h) as f64, routed as f64),
        ItemKind::Head => ((cfg.vocab_size * h + h) as f64, 0.0),
    }
}

fn assignment(cfg: &ModelConfig, plan: &ParallelPlan) -> Result<StageAssignment, MemoryError> {
    Ok(assign_chunks(cfg, plan, &ChunkWeights::default())?)
}

/// Bytes per device for `(non_expert, expert)` parameters it owns.
pub fn static_bytes_for(non_expert: f64, expert: f64, plan: &ParallelPlan) -> f64 {
    let dp = plan.dp.max(1) as f64;
    let edp = (plan.dp as f64 / plan.ep.max(1) as f64).max(1.0);
    non_expert * (4.0 + 12.0 / dp) + expert * (4.0 + 12.0 / edp)
}

fn stage_static(cfg: &ModelConfig, plan: &ParallelPlan, a: &StageAssignment) -> Vec<f64> {
    let mut ne = vec![0.0; plan.pp as usize];
    let mut ex = vec![0.0; plan.pp as usize];
    for c in &a.chunks {
        for it in &c.items {
            let (n, e) = item_params(cfg, it.kind);
            ne[c.pp_stage as usize] += n;
            ex[c.pp_stage as usize] += e;
        }
    }
    // input embedding lives on the first stage
    ne[0] += (cfg.vocab_size * cfg.hidden_size) as f64;
    let tp = plan.tp as f64;
    let tpep = (plan.tp * plan.ep) as f64;
    ne.iter()
        .zip(&ex)
        .map(|(n, e)| static_bytes_for(n / tp, e / tpep, plan))
        .collect()
}

/// Largest per-device weight, gradient and optimizer footprint over stages.
pub fn static_memory(
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    _hw: &HardwareDescription,
) -> Result<f64, MemoryError> {
    let a = assignment(cfg, plan)?;
    Ok(stage_static(cfg, plan, &a).into_iter().fold(0.0, f64::max))
}

fn in_flight(plan: &ParallelPlan) -> Result<Vec<f64>, MemoryError> {
    let m = micro_batch_count(plan)?;
    let sch = build_1f1b_schedule(plan.pp, m, plan.vpp)
        .map_err(|e| MemoryError::Invalid(e.to_string()))?;
    Ok(sch
        .warmup
        .iter()
        .map(|w| ((w + 1).min(m * plan.vpp)) as f64 / plan.vpp as f64)
        .collect())
}

fn stage_activation(
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    a: &StageAssignment,
    inflight: &[f64],
    mem: &MemoryPlan,
) -> Vec<f64> {
    let tokens = (plan.micro_batch_size * cfg.seq_len) as f64 / (plan.cp * plan.tp) as f64;
    let mut per_mb = vec![0.0; plan.pp as usize];
    let mut has_head = vec![false; plan.pp as usize];
    for c in &a.chunks {
        for it in &c.items {
            per_mb[c.pp_stage as usize] += item_bytes_per_token(cfg, it.kind, mem) * tokens;
            if it.kind == ItemKind::Head {
                has_head[c.pp_stage as usize] = true;
            }
        }
    }
    let logits = tokens * cfg.vocab_size as f64 * 4.0;
    per_mb
        .iter()
        .zip(inflight)
        .zip(&has_head)
        .map(|((b, f), head)| b * f + if *head { logits } else { 0.0 })
        .collect()
}

/// Peak activation bytes over pipeline stages.
pub fn activation_peak(
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    mem: &MemoryPlan,
) -> Result<f64, MemoryError> {
    mem.validate()?;
    let a = assignment(cfg, plan)?;
    let inflight = in_flight(plan)?;
    Ok(stage_activation(cfg, plan, &a, &inflight, mem)
        .into_iter()
        .fold(0.0, f64::max))
}

/// Per-stage static + activation, reduced to the worst stage of each.
pub fn memory_report(
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    hw: &HardwareDescription,
    mem: &MemoryPlan,
) -> Result<MemoryReport, MemoryError> {
    let s = static_memory(cfg, plan, hw)?;
    let act = activation_peak(cfg, plan, mem)?;
    let headroom = hw.hbm_bytes_per_device - s - act;
    Ok(MemoryReport {
        static_bytes: s,
        activation_peak_bytes: act,
        headroom,
        feasible: headroom >= 0.0,
    })
}

/// Layers of each kind on the busiest stage (by compute weight).
fn heaviest_stage_counts(plan: &ParallelPlan, a: &StageAssignment) -> BTreeMap<ItemKind, f64> {
    let w = a.stage_weights(plan.pp);
    let mut best = 0usize;
    for (i, x) in w.iter().enumerate() {
        if *x > w[best] + 1e-12 {
            best = i;
        }
    }
    let mut out = BTreeMap::new();
    for c in a.chunks.iter().filter(|c| c.pp_stage as usize == best) {
        for it in &c.items {
            *out.entry(it.kind).or_insert(0.0) += 1.0;
        }
    }
    out
}

/// Recompute seconds added to one backward pass of a layer of `kind`.
pub fn recompute_compute_time(c: &OpCosts, kind: ItemKind, mem: &MemoryPlan) -> f64 {
    if kind == ItemKind::Head {
        return if mem.has(RecomputeOption::FullLayer) {
            c.head
        } else {
            0.0
        };
    }
    if mem.has(RecomputeOption::FullLayer) {
        return match kind {
            ItemKind::Dense => c.dense_layer_fwd(),
            ItemKind::MtpBody => c.moe_layer_fwd() + c.mtp_proj,
            _ => c.moe_layer_fwd(),
        };
    }
    let mut t = 0.0;
    if mem.has(RecomputeOption::MlaQkv) {
        t += c.qkv_up;
    } else if mem.has(RecomputeOption::MlaKvOnly) {
        t += c.kv_up;
    }
    if mem.has(RecomputeOption::SwigluActivation) {
        t += match kind {
            ItemKind::Dense => c.dense_swiglu,
            _ => c.swiglu + c.shared_swiglu,
        };
    }
    if mem.has(RecomputeOption::Permute) && kind != ItemKind::Dense {
        t += c.permute;
    }
    t
}

/// Dispatch transfers a layer replays during recomputation, as
/// `(inter-node, intra-node)` seconds. Permute recompute replays the
/// intra-node exchange; whole-layer recompute replays both.
pub fn recompute_comm(c: &OpCosts, kind: ItemKind, mem: &MemoryPlan) -> (f64, f64) {
    use crate::pipeline::Resource;
    if !matches!(kind, ItemKind::Moe | ItemKind::MtpBody) {
        return (0.0, 0.0);
    }
    if mem.has(RecomputeOption::FullLayer) {
        (
            c.ep_dispatch_time(Resource::InterLink),
            c.ep_dispatch_time(Resource::IntraLink),
        )
    } else if mem.has(RecomputeOption::Permute) {
        (0.0, c.ep_dispatch_time(Resource::IntraLink))
    } else {
        (0.0, 0.0)
    }
}

pub fn recompute_comm_time(c: &OpCosts, kind: ItemKind, mem: &MemoryPlan) -> f64 {
    let (a, b) = recompute_comm(c, kind, mem);
    a + b
}

/// Whether one layer's swap transfer fits under that layer's forward compute,
/// so prefetch completes before the backward needs it.
pub fn swap_hidden(c: &OpCosts) -> bool {
    c.swap_transfer <= c.moe_layer_fwd()
}

fn step_time_added(
    c: &OpCosts,
    counts: &BTreeMap<ItemKind, f64>,
    m: f64,
    mem: &MemoryPlan,
) -> f64 {
    counts
        .iter()
        .map(|(kind, n)| {
            n * (recompute_compute_time(c, *kind, mem) + recompute_comm_time(c, *kind, mem))
        })
        .sum::<f64>()
        * m
}

/// All plans on the fine-grained option lattice, in canonical order.
pub fn option_lattice() -> Vec<MemoryPlan> {
    use RecomputeOption::*;
    let mut out = Vec::new();
    for mla in [None, Some(MlaKvOnly), Some(MlaQkv)] {
        for permute in [false, true] {
            for swiglu in [false, true] {
                for probs in [false, true] {
                    let mut r = Vec::new();
                    r.extend(mla);
                    if permute {
                        r.push(Permute);
                    }
                    if swiglu {
                        r.push(SwigluActivation);
                    }
                    let s: &[SwapOption] = if probs { &[SwapOption::Probs] } else { &[] };
                    out.push(MemoryPlan::with(&r, s));
                }
            }
        }
    }
    out
}

/// Fills `per_option` with each option's individual effect.
pub fn annotate(
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    hw: &HardwareDescription,
    mem: &mut MemoryPlan,
) -> Result<(), MemoryError> {
    let a = assignment(cfg, plan)?;
    let inflight = in_flight(plan)?;
    let c = op_costs(cfg, plan, hw, &CostOptions::default());
    let counts = heaviest_stage_counts(plan, &a);
    let m = micro_batch_count(plan)? as f64;
    let peak = |p: &MemoryPlan| {
        stage_activation(cfg, plan, &a, &inflight, p)
            .into_iter()
            .fold(0.0, f64::max)
    };
    let base = peak(&MemoryPlan::empty());
    let moe_layers: f64 = counts
        .iter()
        .filter(|(k, _)| matches!(k, ItemKind::Moe | ItemKind::MtpBody))
        .map(|(_, n)| n)
        .sum();
    let mut per = BTreeMap::new();
    for o in mem.recompute.clone() {
        let single = MemoryPlan::with(&[o], &[]);
        per.insert(
            option_name(o),
            OptionCost {
                bytes_saved: base - peak(&single),
                time_added: step_time_added(&c, &counts, m, &single),
                transfer_bytes: 0.0,
            },
        );
    }
    if mem.swaps_probs() {
        let single = MemoryPlan::with(&[], &[SwapOption::Probs]);
        per.insert(
            "probs_swap".to_string(),
            OptionCost {
                bytes_saved: base - peak(&single),
                time_added: 0.0,
                transfer_bytes: 2.0 * c.swap_bytes * moe_layers * m,
            },
        );
    }
    mem.per_option = per;
    Ok(())
}

/// Cheapest feasible plan on the fine-grained lattice.
///
/// Ranks feasible plans by added recompute time, then by option count, then
/// by lattice order. Probs swap is only eligible when its transfer hides under
/// a layer's forward compute, in which case it adds no time.
pub fn select_memory_plan(
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    hw: &HardwareDescription,
) -> Result<MemoryPlan, MemoryError> {
    let a = assignment(cfg, plan)?;
    let inflight = in_flight(plan)?;
    let statics = stage_static(cfg, plan, &a);
    let static_max = statics.iter().cloned().fold(0.0, f64::max);
    let c = op_costs(cfg, plan, hw, &CostOptions::default());
    let counts = heaviest_stage_counts(plan, &a);
    let m = micro_batch_count(plan)? as f64;
    let swap_ok = swap_hidden(&c);

    let mut best: Option<(f64, usize, usize, MemoryPlan)> = None;
    let mut min_needed = f64::INFINITY;
    for (idx, cand) in option_lattice().into_iter().enumerate() {
        if cand.swaps_probs() && !swap_ok {
            continue;
        }
        let act = stage_activation(cfg, plan, &a, &inflight, &cand)
            .into_iter()
            .fold(0.0, f64::max);
        let needed = static_max + act;
        min_needed = min_needed.min(needed);
        if needed > hw.hbm_bytes_per_device {
            continue;
        }
        let t = step_time_added(&c, &counts, m, &cand);
        let key = (t, cand.option_count(), idx);
        let better = match &best {
            None => true,
            Some((bt, bn, bi, _)) => {
                let tol = 1e-12 * (1.0 + bt.abs());
                t < bt - tol || ((t - bt).abs() <= tol && (key.1, key.2) < (*bn, *bi))
            }
        };
        if better {
            best = Some((t, key.1, idx, cand));
        }
    }
    match best {
        Some((_, _, _, mut p)) => {
            annotate(cfg, plan, hw, &mut p)?;
            Ok(p)
        }
        None => Err(MemoryError::Infeasible {
            needed: min_needed,
            capacity: hw.hbm_bytes_per_device,
        }),
    }
}

impl MemoryPlan {
    pub fn describe(&self) -> String {
        let n = self.names();
        if n.is_empty() {
            "none".into()
        } else {
            n.join("+")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::tests::sheet;
    use crate::model::MlaDims;

    fn tiny() -> ModelConfig {
        ModelConfig {
            num_layers: 2,
            num_dense_layers: 1,
            hidden_size: 64,
            num_attention_heads: 4,
            mla_dims: MlaDims {
                q_rank: 32,
                kv_rank: 16,
                head_dim: 16,
                rope_dim: 8,
            },
            num_routed_experts: 4,
            num_shared_experts: 1,
            top_k: 2,
            expert_intermediate_size: 128,
            dense_ffn_intermediate_size: 256,
            num_mtp_layers: 0,
            vocab_size: 100,
            seq_len: 16,
            dtype_bytes: 2,
        }
    }

    fn single(dp: u64, ep: u64) -> (ParallelPlan, HardwareDescription) {
        let plan = ParallelPlan {
            tp: 1,
            pp: 1,
            vpp: 1,
            ep,
            dp,
            cp: 1,
            micro_batch_size: 1,
            global_batch_size: dp,
        };
        let mut hw = sheet();
        hw.num_nodes = 1;
        hw.devices_per_node = dp;
        (plan, hw)
    }

    #[test]
    fn one_device_is_sixteen_bytes_per_param() {
        let cfg = tiny();
        let (plan, hw) = single(1, 1);
        let total = crate::model::count_parameters(&cfg).total as f64;
        let s = static_memory(&cfg, &plan, &hw).unwrap();
        assert!((s - 16.0 * total).abs() < 1e-6, "{s} vs {}", 16.0 * total);
    }

    #[test]
    fn dp_four_is_seven_bytes_per_param() {
        let cfg = tiny();
        let (plan, hw) = single(4, 1);
        let total = crate::model::count_parameters(&cfg).total as f64;
        let s = static_memory(&cfg, &plan, &hw).unwrap();
        assert!((s - 7.0 * total).abs() < 1e-6);
    }

    #[test]
    fn tp_halves_non_expert_weights() {
        let (ne, _) = item_params(&tiny(), ItemKind::Dense);
        let mut p = single(1, 1).0;
        let a = static_bytes_for(ne / p.tp as f64, 0.0, &p);
        p.tp = 2;
        let b = static_bytes_for(ne / p.tp as f64, 0.0, &p);
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_activation_matches_tensor_list() {
        let cfg = tiny();
        let (plan, _) = single(1, 1);
        // dense: h, latent, q, k, v, ctx, ffn_in, fc1, swiglu (elements)
        let attn = 64 + (32 + 16 + 8) + 4 * 24 + 4 * 24 + 4 * 16 + 4 * 16;
        let dense = attn + 64 + 2 * 256 + 256;
        // moe: attn + moe_in + permute 2Kh + fc1 K*2I + swiglu K*I + unpermute K*h + shared fc1 + swiglu
        let moe = attn + 64 + 2 * 2 * 64 + 2 * 2 * 128 + 2 * 128 + 2 * 64 + 2 * 128 + 128;
        let head = 64;
        let per_token = 2.0 * (dense + moe + head) as f64 + 4.0 * 4.0; // router probs in fp32
        let logits = 16.0 * 100.0 * 4.0;
        let expect = per_token * 16.0 + logits;
        let got = activation_peak(&cfg, &plan, &MemoryPlan::empty()).unwrap();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }

    #[test]
    fn full_layer_keeps_only_boundaries() {
        let cfg = tiny();
        let (plan, _) = single(1, 1);
        let got = activation_peak(&cfg, &plan, &MemoryPlan::full_layer()).unwrap();
        let expect = 16.0 * 2.0 * 64.0 * 3.0 + 16.0 * 100.0 * 4.0;
        assert!((got - expect).abs() < 1e-9);
    }

    #[test]
    fn kv_only_saves_less_than_qkv() {
        let cfg = ModelConfig::pangu_ultra_moe();
        let plan = ParallelPlan::pangu_6k();
        let none = activation_peak(&cfg, &plan, &MemoryPlan::empty()).unwrap();
        let kv = activation_peak(&cfg, &plan, &MemoryPlan::with(&[RecomputeOption::MlaKvOnly], &[])).unwrap();
        let qkv = activation_peak(&cfg, &plan, &MemoryPlan::with(&[RecomputeOption::MlaQkv], &[])).unwrap();
        assert!(none - kv < none - qkv);
        assert!(kv < none);
    }

    #[test]
    fn exclusive_mla_options() {
        let p = MemoryPlan::with(&[RecomputeOption::MlaQkv, RecomputeOption::MlaKvOnly], &[]);
        assert!(p.validate().is_err());
        assert_eq!(option_lattice().len(), 24);
    }
}
