//! End-to-end scoring of (model, plan) pairs and ranked design-space search.
//!
//! Training mode expands every pipeline chunk into per-operator steps and
//! runs the pipeline simulator under the selected memory plan. Inference mode
//! is a decode-step roofline over activated weights, the latent KV cache and
//! activation traffic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{kernel_time, HardwareDescription};
use crate::cost::{op_costs, CostOptions, EpTransfer, OpCosts};
use crate::memory::{
    item_bytes_per_token, memory_report, recompute_comm, recompute_compute_time,
    select_memory_plan, MemoryError, MemoryPlan, MemoryReport,
};
use crate::model::{count_parameters, enumerate_design_space, flops_per_token, DesignSpace, ModelConfig, ModelError};
use crate::pipeline::{
    build_1f1b_schedule, simulate_workload, summarize, OverlapPolicy, PassTemplate, PipelineError,
    Resource, Step, StepClass, StepReport, Timeline, Workload,
};
use crate::plan::{
    assign_chunks, validate_plan, ChunkWeights, ItemKind, ParallelPlan, PlanError, PlanViolation,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("plan violates {} constraint(s): {}", .0.len(), join(.0))]
    Violations(Vec<PlanViolation>),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("no (model, plan) pair survives validation")]
    EmptySpace,
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error("worker pool: {0}")]
    Workers(String),
}

fn join(v: &[PlanViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl SearchError {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, SearchError::Memory(MemoryError::Infeasible { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    Training,
    Inference,
}

/// How the training memory plan is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryStrategy {
    /// Cheapest feasible fine-grained recompute/swap set.
    FineGrained,
    /// Whole-layer recomputation everywhere.
    FullLayer,
    Fixed(MemoryPlan),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankWeights {
    pub training: f64,
    pub inference: f64,
}

impl Default for RankWeights {
    fn default() -> Self {
        RankWeights {
            training: 0.5,
            inference: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub policy: OverlapPolicy,
    pub memory: MemoryStrategy,
    pub cost: CostOptions,
    pub weights: RankWeights,
    /// Threads for search; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            policy: OverlapPolicy::full(),
            memory: MemoryStrategy::FineGrained,
            cost: CostOptions::default(),
            weights: RankWeights::default(),
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub model_id: String,
    pub plan: ParallelPlan,
    pub step_report: StepReport,
    pub memory_report: MemoryReport,
    pub memory_plan: MemoryPlan,
    /// Decode tokens per second over the whole cluster.
    pub inference_throughput: f64,
    /// Training tokens per second over the whole cluster.
    pub training_throughput: f64,
}

// ---------------------------------------------------------------------------
// pass templates

struct LayerTpl {
    steps: Vec<Step>,
    outputs: Vec<usize>,
    /// Step whose end marks the layer having started; prefetches of the next
    /// layer in the pass wait on it.
    anchor: usize,
}

impl LayerTpl {
    fn new() -> Self {
        LayerTpl {
            steps: Vec::new(),
            outputs: Vec::new(),
            anchor: 0,
        }
    }

    fn push(&mut self, s: Step) -> usize {
        self.steps.push(s);
        self.steps.len() - 1
    }
}

fn chain(t: &mut LayerTpl, transfers: &[&EpTransfer], mut last: usize, early: bool, suffix: &str) -> usize {
    for e in transfers {
        let mut s = Step::comm(format!("{}{suffix}", e.label), e.resource, e.duration).after(&[last]);
        if early {
            s = s.early();
        }
        last = t.push(s);
    }
    last
}

/// Transfers split by where they sit around permute / unpermute.
struct EpSplit<'a> {
    dispatch_pre: Vec<&'a EpTransfer>,
    dispatch_post: Vec<&'a EpTransfer>,
    combine_pre: Vec<&'a EpTransfer>,
    combine_post: Vec<&'a EpTransfer>,
}

fn split_ep(c: &OpCosts) -> EpSplit<'_> {
    use crate::comm::CommPhase;
    let mut s = EpSplit {
        dispatch_pre: Vec::new(),
        dispatch_post: Vec::new(),
        combine_pre: Vec::new(),
        combine_post: Vec::new(),
    };
    for e in &c.ep {
        match e.phase {
            CommPhase::Dispatch if e.label.contains("allgather") => s.dispatch_pre.push(e),
            CommPhase::Dispatch => s.dispatch_post.push(e),
            CommPhase::Combine if e.label.contains("reducescatter") => s.combine_post.push(e),
            CommPhase::Combine => s.combine_pre.push(e),
        }
    }
    s
}

fn tp(label: &str, c: &OpCosts) -> Step {
    Step::comm(label, Resource::IntraLink, c.tp_comm)
}

fn moe_forward(c: &OpCosts, mem: &MemoryPlan, mtp: bool) -> LayerTpl {
    let ep = split_ep(c);
    let mut t = LayerTpl::new();
    let ag = if mtp {
        let proj = t.push(Step::compute("mtp_proj", c.mtp_proj).host(2));
        t.push(tp("tp_allgather", c).after(&[proj]))
    } else {
        t.push(tp("tp_allgather", c))
    };
    let attn = t.push(Step::compute("attention", c.attn).after(&[ag]).host(8));
    let rs = t.push(tp("tp_reducescatter", c).after(&[attn]));
    let router = t.push(Step::compute("router", c.router).after(&[rs]).host(4).synced());
    let last = chain(&mut t, &ep.dispatch_pre, router, true, "");
    let permute = t.push(
        Step::compute("permute", c.permute)
            .after(&[last])
            .host(12)
            .class(StepClass::Permute),
    );
    let shared = t.push(
        Step::compute("shared_expert", c.shared + c.shared_swiglu)
            .after(&[rs])
            .host(3),
    );
    let last = chain(&mut t, &ep.dispatch_post, permute, false, "");
    let gmm = t.push(
        Step::compute("gmm", c.gmm + c.swiglu)
            .after(&[last])
            .host(2)
            .class(StepClass::Gmm),
    );
    let last = chain(&mut t, &ep.combine_pre, gmm, false, "");
    let swap = if mem.swaps_probs() { c.swap_transfer } else { 0.0 };
    t.push(Step::comm("swap_out", Resource::DeviceToHost, swap).after(&[last]));
    let unpermute = t.push(Step::compute("unpermute", c.unpermute).after(&[last]).host(4));
    let out = chain(&mut t, &ep.combine_post, unpermute, false, "");
    t.outputs = vec![shared, out];
    t
}

fn moe_backward(c: &OpCosts, mem: &MemoryPlan, kind: ItemKind) -> LayerTpl {
    let ep = split_ep(c);
    let mut t = LayerTpl::new();
    let rc = t.push(
        Step::compute("recompute", recompute_compute_time(c, kind, mem)).class(StepClass::Recompute),
    );
    let swap = if mem.swaps_probs() { c.swap_transfer } else { 0.0 };
    let swap_in = t.push(Step::comm("swap_in", Resource::HostToDevice, swap).detached());
    let (rc_inter, rc_intra) = recompute_comm(c, kind, mem);
    let r1 = t.push(Step::comm("recompute_allgather", Resource::InterLink, rc_inter).after(&[rc]));
    let r2 = t.push(Step::comm("recompute_alltoall", Resource::IntraLink, rc_intra).after(&[r1]));
    // gradient of the combine reduce-scatter is an allgather on the same link
    let mut last = rc;
    for e in ep.combine_post.iter().rev() {
        let s = Step::comm(format!("{}_bwd", e.label), e.resource, e.duration);
        last = t.push(if last == rc { s } else { s.after(&[last]) });
    }
    let combine_in = if ep.combine_post.is_empty() { rc } else { last };
    let shared = t.push(Step::compute("shared_expert_bwd", 2.0 * (c.shared + c.shared_swiglu)).host(3));
    let unpermute = t.push(
        Step::compute("unpermute_bwd", 2.0 * c.unpermute)
            .after(&[combine_in, swap_in, r2])
            .host(4),
    );
    let mut last = unpermute;
    for e in ep.combine_pre.iter().rev() {
        last = t.push(Step::comm(format!("{}_bwd", e.label), e.resource, e.duration).after(&[last]));
    }
    let dx = t.push(
        Step::compute("gmm_dx", c.gmm + 2.0 * c.swiglu)
            .after(&[last, r2])
            .host(2)
            .class(StepClass::Gmm),
    );
    t.push(
        Step::compute("gmm_dw", c.gmm)
            .after(&[dx])
            .host(2)
            .class(StepClass::WeightGrad),
    );
    let mut last = dx;
    for e in ep.dispatch_post.iter().rev() {
        last = t.push(Step::comm(format!("{}_bwd", e.label), e.resource, e.duration).after(&[last]));
    }
    let permute = t.push(Step::compute("permute_bwd", c.permute).after(&[last]).host(12));
    let mut last = permute;
    for e in ep.dispatch_pre.iter().rev() {
        last = t.push(Step::comm(format!("{}_bwd", e.label), e.resource, e.duration).after(&[last]));
    }
    let router = t.push(Step::compute("router_bwd", 2.0 * c.router).after(&[last, shared]).host(4));
    let ag = t.push(tp("tp_allgather_bwd", c).after(&[router]));
    let attn = t.push(Step::compute("attention_bwd", 2.0 * c.attn).after(&[ag, rc]).host(8));
    let mut out = t.push(tp("tp_reducescatter_bwd", c).after(&[attn]));
    if kind == ItemKind::MtpBody {
        out = t.push(Step::compute("mtp_proj_bwd", 2.0 * c.mtp_proj).after(&[out]).host(2));
    }
    t.outputs = vec![out];
    t.anchor = rc;
    t
}

fn dense_forward(c: &OpCosts) -> LayerTpl {
    let mut t = LayerTpl::new();
    let ag = t.push(tp("tp_allgather", c));
    let attn = t.push(Step::compute("attention", c.attn).after(&[ag]).host(8));
    let rs = t.push(tp("tp_reducescatter", c).after(&[attn]));
    let ag2 = t.push(tp("tp_allgather_ffn", c).after(&[rs]));
    let ffn = t.push(Step::compute("dense_ffn", c.dense_ffn + c.dense_swiglu).after(&[ag2]).host(3));
    let out = t.push(tp("tp_reducescatter_ffn", c).after(&[ffn]));
    t.outputs = vec![out];
    t
}

fn dense_backward(c: &OpCosts, mem: &MemoryPlan) -> LayerTpl {
    let mut t = LayerTpl::new();
    let rc = t.push(
        Step::compute("recompute", recompute_compute_time(c, ItemKind::Dense, mem))
            .class(StepClass::Recompute),
    );
    let ag = t.push(tp("tp_allgather_ffn_bwd", c).after(&[rc]));
    let ffn = t.push(
        Step::compute("dense_ffn_bwd", 2.0 * (c.dense_ffn + c.dense_swiglu))
            .after(&[ag])
            .host(3),
    );
    let rs = t.push(tp("tp_reducescatter_ffn_bwd", c).after(&[ffn]));
    let ag2 = t.push(tp("tp_allgather_bwd", c).after(&[rs]));
    let attn = t.push(Step::compute("attention_bwd", 2.0 * c.attn).after(&[ag2]).host(8));
    let out = t.push(tp("tp_reducescatter_bwd", c).after(&[attn]));
    t.outputs = vec![out];
    t
}

fn head_forward(c: &OpCosts) -> LayerTpl {
    let mut t = LayerTpl::new();
    let ag = t.push(tp("tp_allgather", c));
    let head = t.push(Step::compute("head", c.head).after(&[ag]).host(3));
    t.outputs = vec![head];
    t
}

fn head_backward(c: &OpCosts, mem: &MemoryPlan) -> LayerTpl {
    let mut t = LayerTpl::new();
    let rc = t.push(
        Step::compute("recompute", recompute_compute_time(c, ItemKind::Head, mem))
            .class(StepClass::Recompute),
    );
    let head = t.push(Step::compute("head_bwd", 2.0 * c.head).after(&[rc]).host(3));
    let out = t.push(tp("tp_reducescatter_bwd", c).after(&[head]));
    t.outputs = vec![out];
    t
}

/// Concatenates layer templates; first steps of each layer wait on the
/// previous layer's outputs, prefetches on its anchor.
fn compose(layers: Vec<LayerTpl>) -> PassTemplate {
    let mut out = PassTemplate::default();
    let mut prev: Option<(Vec<usize>, usize)> = None;
    for l in layers {
        let base = out.steps.len();
        for mut s in l.steps {
            if s.deps.is_empty() {
                if let Some((outs, anchor)) = &prev {
                    s.deps = if s.detached { vec![*anchor] } else { outs.clone() };
                }
            } else {
                for d in &mut s.deps {
                    *d += base;
                }
            }
            out.push(s);
        }
        prev = Some((
            l.outputs.iter().map(|o| o + base).collect(),
            l.anchor + base,
        ));
    }
    out
}

/// Per-chunk forward and backward templates for `cfg` under `plan`.
pub fn build_workload(
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    hw: &HardwareDescription,
    mem: &MemoryPlan,
    cost: &CostOptions,
) -> Result<Workload, SearchError> {
    let a = assign_chunks(cfg, plan, &ChunkWeights::default())?;
    let c = op_costs(cfg, plan, hw, cost);
    let mut forward = Vec::with_capacity(a.chunks.len());
    let mut backward = Vec::with_capacity(a.chunks.len());
    for ch in &a.chunks {
        let fwd: Vec<LayerTpl> = ch
            .items
            .iter()
            .map(|it| match it.kind {
                ItemKind::Dense => dense_forward(&c),
                ItemKind::Moe => moe_forward(&c, mem, false),
                ItemKind::MtpBody => moe_forward(&c, mem, true),
                ItemKind::Head => head_forward(&c),
            })
            .collect();
        let bwd: Vec<LayerTpl> = ch
            .items
            .iter()
            .rev()
            .map(|it| match it.kind {
                ItemKind::Dense => dense_backward(&c, mem),
                ItemKind::Moe | ItemKind::MtpBody => moe_backward(&c, mem, it.kind),
                ItemKind::Head => head_backward(&c, mem),
            })
            .collect();
        forward.push(compose(fwd));
        backward.push(compose(bwd));
    }
    Ok(Workload {
        forward,
        backward,
        p2p_time: c.p2p,
        host_dispatch_time: hw.host_dispatch_time,
    })
}

// ---------------------------------------------------------------------------
// scoring

fn check_plan(cfg: &ModelConfig, plan: &ParallelPlan, hw: &HardwareDescription) -> Result<(), SearchError> {
    cfg.validate()?;
    validate_plan(plan, cfg, hw).map_err(SearchError::Violations)
}

/// Memory plan chosen under `strategy`, or `Infeasible`.
pub fn choose_memory_plan(
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    hw: &HardwareDescription,
    strategy: &MemoryStrategy,
) -> Result<(MemoryPlan, MemoryReport), SearchError> {
    let mp = match strategy {
        MemoryStrategy::FineGrained => select_memory_plan(cfg, plan, hw)?,
        MemoryStrategy::FullLayer => MemoryPlan::full_layer(),
        MemoryStrategy::Fixed(p) => p.clone(),
    };
    let rep = memory_report(cfg, plan, hw, &mp)?;
    if !rep.feasible {
        return Err(MemoryError::Infeasible {
            needed: rep.static_bytes + rep.activation_peak_bytes,
            capacity: hw.hbm_bytes_per_device,
        }
        .into());
    }
    Ok((mp, rep))
}

/// Full training simulation; also returns the timeline for inspection.
pub fn simulate_training(
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    hw: &HardwareDescription,
    opts: &ScoreOptions,
) -> Result<(CostReport, Timeline), SearchError> {
    check_plan(cfg, plan, hw)?;
    let (mp, mrep) = choose_memory_plan(cfg, plan, hw, &opts.memory)?;
    let w = build_workload(cfg, plan, hw, &mp, &opts.cost)?;
    let m = crate::plan::micro_batch_count(plan)?;
    let sch = build_1f1b_schedule(plan.pp, m, plan.vpp)?;
    let mut tl = simulate_workload(&sch, &w, &opts.policy)?;
    let th = summarize(tl.report.step_time, cfg, plan, hw)?;
    tl.report.mfu = th.mfu;
    tl.report.tps = th.tps;
    let report = CostReport {
        model_id: cfg.model_id(),
        plan: *plan,
        step_report: tl.report,
        memory_report: mrep,
        memory_plan: mp,
        inference_throughput: 0.0,
        training_throughput: th.tps,
    };
    Ok((report, tl))
}

/// Decode-step roofline: the cluster decodes `global_batch_size` sequences
/// with `seq_len` tokens of context, one new token each. Every data-parallel
/// replica reads its activated weights once per step; each sequence reads its
/// latent KV cache and moves its activations.
pub fn inference_estimate(
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    hw: &HardwareDescription,
) -> Result<(f64, MemoryReport), SearchError> {
    let dt = cfg.dtype_bytes as f64;
    let batch = plan.global_batch_size as f64;
    let world = hw.world_size() as f64;
    let pc = count_parameters(cfg);
    let attn_layers = (cfg.num_layers + cfg.num_mtp_layers) as f64;
    let kv_per_seq =
        attn_layers * cfg.kv_cache_elems_per_token_layer() as f64 * cfg.seq_len as f64 * dt;
    let empty = MemoryPlan::empty();
    let mut act_per_token = 0.0;
    for (kind, n) in [
        (ItemKind::Dense, cfg.num_dense_layers.min(cfg.num_layers)),
        (ItemKind::Moe, cfg.num_moe_layers()),
        (ItemKind::MtpBody, cfg.num_mtp_layers),
        (ItemKind::Head, 1),
    ] {
        act_per_token += n as f64 * item_bytes_per_token(cfg, kind, &empty);
    }
    let weight_bytes = pc.activated as f64 * dt * plan.dp as f64;
    let bytes = weight_bytes + batch * (kv_per_seq + act_per_token);
    let flops = batch * flops_per_token(cfg, cfg.seq_len)?.forward_per_token;
    let t = kernel_time(flops / world, bytes / world, hw, hw.matmul_efficiency);
    let static_bytes = pc.total as f64 * dt * plan.dp as f64 / world;
    let cache = batch * kv_per_seq / world;
    let headroom = hw.hbm_bytes_per_device - static_bytes - cache;
    Ok((
        batch / t,
        MemoryReport {
            static_bytes,
            activation_peak_bytes: cache,
            headroom,
            feasible: headroom >= 0.0,
        },
    ))
}

pub fn score_config(
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    hw: &HardwareDescription,
    mode: ScoreMode,
    opts: &ScoreOptions,
) -> Result<CostReport, SearchError> {
    match mode {
        ScoreMode::Training => simulate_training(cfg, plan, hw, opts).map(|(r, _)| r),
        ScoreMode::Inference => {
            check_plan(cfg, plan, hw)?;
            let (tps, mrep) = inference_estimate(cfg, plan, hw)?;
            Ok(CostReport {
                model_id: cfg.model_id(),
                plan: *plan,
                step_report: StepReport::default(),
                memory_report: mrep,
                memory_plan: MemoryPlan::empty(),
                inference_throughput: tps,
                training_throughput: 0.0,
            })
        }
    }
}

/// Training simulation plus inference estimate in one report.
pub fn score_both(
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    hw: &HardwareDescription,
    opts: &ScoreOptions,
) -> Result<CostReport, SearchError> {
    let mut r = score_config(cfg, plan, hw, ScoreMode::Training, opts)?;
    r.inference_throughput = inference_estimate(cfg, plan, hw)?.0;
    Ok(r)
}

// ---------------------------------------------------------------------------
// search

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedReport {
    pub rank: usize,
    pub score: f64,
    pub report: CostReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub model_id: String,
    pub plan: ParallelPlan,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub ranked: Vec<RankedReport>,
    pub excluded: Vec<Excluded>,
    pub evaluated: usize,
}

/// Weighted score of each report, throughputs normalised by the best in the
/// set. Empty input gives an empty vector.
pub fn rank_scores(reports: &[CostReport], w: &RankWeights) -> Vec<f64> {
    let tmax = reports.iter().map(|r| r.training_throughput).fold(0.0, f64::max);
    let imax = reports.iter().map(|r| r.inference_throughput).fold(0.0, f64::max);
    let norm = |x: f64, m: f64| if m > 0.0 { x / m } else { 0.0 };
    reports
        .iter()
        .map(|r| {
            w.training * norm(r.training_throughput, tmax)
                + w.inference * norm(r.inference_throughput, imax)
        })
        .collect()
}

/// Sorts by score (descending), then model id, then input order.
pub fn rank(reports: Vec<CostReport>, w: &RankWeights) -> Vec<RankedReport> {
    let scores = rank_scores(&reports, w);
    let mut idx: Vec<usize> = (0..reports.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| reports[a].model_id.cmp(&reports[b].model_id))
            .then(a.cmp(&b))
    });
    let mut slots: Vec<Option<CostReport>> = reports.into_iter().map(Some).collect();
    idx.into_iter()
        .enumerate()
        .map(|(r, i)| RankedReport {
            rank: r + 1,
            score: scores[i],
            report: slots[i].take().expect("each index once"),
        })
        .collect()
}

/// Scores every valid (model, plan) pair and returns the best `top_k`.
///
/// Pairs that fail plan validation are skipped; pairs whose memory cannot be
/// made to fit are listed in `excluded`.
pub fn search_space(
    space: &DesignSpace,
    plans: &[ParallelPlan],
    hw: &HardwareDescription,
    top_k: usize,
    opts: &ScoreOptions,
) -> Result<SearchResult, SearchError> {
    if top_k == 0 {
        return Err(SearchError::ZeroTopK);
    }
    let models: Vec<ModelConfig> = enumerate_design_space(space)?.collect();
    let mut pairs = Vec::new();
    for cfg in &models {
        for plan in plans {
            if validate_plan(plan, cfg, hw).is_ok() {
                pairs.push((cfg, plan));
            }
        }
    }
    if pairs.is_empty() {
        return Err(SearchError::EmptySpace);
    }
    let eval = || -> Vec<Result<CostReport, SearchError>> {
        pairs
            .par_iter()
            .map(|(c, p)| score_both(c, p, hw, opts))
            .collect()
    };
    let results = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| SearchError::Workers(e.to_string()))?
            .install(eval),
        None => eval(),
    };
    let mut ok = Vec::new();
    let mut excluded = Vec::new();
    for ((cfg, plan), r) in pairs.iter().zip(results) {
        match r {
            Ok(rep) => ok.push(rep),
            Err(e) if e.is_infeasible() => excluded.push(Excluded {
                model_id: cfg.model_id(),
                plan: **plan,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    let evaluated = pairs.len();
    let mut ranked = rank(ok, &opts.weights);
    ranked.truncate(top_k);
    Ok(SearchResult {
        ranked,
        excluded,
        evaluated,
    })
}
