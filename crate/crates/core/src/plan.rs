//! 5D parallelism plans: validation, micro-batching and contiguous pipeline
//! chunk balancing.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::HardwareDescription;
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelPlan {
    pub tp: u64,
    pub pp: u64,
    pub vpp: u64,
    pub ep: u64,
    pub dp: u64,
    pub cp: u64,
    pub micro_batch_size: u64,
    pub global_batch_size: u64,
}

impl ParallelPlan {
    /// TP8 / PP16 / VPP2 / EP4 on 6144 devices with MBS 2. The global batch
    /// of 6144 sequences gives 64 micro-batches per step.
    pub fn pangu_6k() -> Self {
        ParallelPlan {
            tp: 8,
            pp: 16,
            vpp: 2,
            ep: 4,
            dp: 48,
            cp: 1,
            micro_batch_size: 2,
            global_batch_size: 6144,
        }
    }

    pub fn world_size(&self) -> u64 {
        self.tp * self.pp * self.dp * self.cp
    }

    pub fn num_chunks(&self) -> u64 {
        self.pp * self.vpp
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanViolation {
    ZeroFactor { field: String },
    WorldSize { product: u64, world_size: u64 },
    DpBelowEp { dp: u64, ep: u64 },
    ExpertDivisibility { experts: u64, tp: u64, ep: u64 },
    TooFewItems { items: u64, chunks: u64 },
    BatchDivisibility { gbs: u64, dp: u64, mbs: u64 },
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanViolation::ZeroFactor { field } => write!(f, "{field} must be >= 1"),
            PlanViolation::WorldSize { product, world_size } => write!(
                f,
                "tp*pp*dp*cp = {product} does not match world size {world_size}"
            ),
            PlanViolation::DpBelowEp { dp, ep } => write!(f, "dp={dp} is smaller than ep={ep}"),
            PlanViolation::ExpertDivisibility { experts, tp, ep } => write!(
                f,
                "{experts} routed experts not divisible by tp*ep = {}*{} = {}",
                tp,
                ep,
                tp * ep
            ),
            PlanViolation::TooFewItems { items, chunks } => write!(
                f,
                "{items} pipeline items cannot fill pp*vpp = {chunks} chunks"
            ),
            PlanViolation::BatchDivisibility { gbs, dp, mbs } => write!(
                f,
                "global batch {gbs} not divisible by dp*mbs = {dp}*{mbs}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("invalid plan: {}", join(.0))]
    Violations(Vec<PlanViolation>),
    #[error("{items} items cannot be split into {chunks} non-empty chunks")]
    InfeasibleChunking { items: u64, chunks: u64 },
    #[error("global batch {gbs} not divisible by dp*mbs = {dp}*{mbs}")]
    NonDivisible { gbs: u64, dp: u64, mbs: u64 },
}

fn join(v: &[PlanViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Number of pipeline items (layers, MTP bodies and the head) of `cfg`.
pub fn pipeline_items(cfg: &ModelConfig) -> u64 {
    cfg.num_layers + cfg.num_mtp_layers + 1
}

/// Zero parallelism factors or batch sizes; checkable without a model or
/// cluster.
pub fn zero_factors(plan: &ParallelPlan) -> Vec<PlanViolation> {
    [
        ("tp", plan.tp),
        ("pp", plan.pp),
        ("vpp", plan.vpp),
        ("ep", plan.ep),
        ("dp", plan.dp),
        ("cp", plan.cp),
        ("micro_batch_size", plan.micro_batch_size),
        ("global_batch_size", plan.global_batch_size),
    ]
    .into_iter()
    .filter(|(_, v)| *v == 0)
    .map(|(name, _)| PlanViolation::ZeroFactor { field: name.into() })
    .collect()
}

pub fn validate_plan(
    plan: &ParallelPlan,
    cfg: &ModelConfig,
    hw: &HardwareDescription,
) -> Result<(), Vec<PlanViolation>> {
    let mut out = zero_factors(plan);
    if !out.is_empty() {
        return Err(out);
    }
    if plan.world_size() != hw.world_size() {
        out.push(PlanViolation::WorldSize {
            product: plan.world_size(),
            world_size: hw.world_size(),
        });
    }
    if plan.dp < plan.ep {
        out.push(PlanViolation::DpBelowEp {
            dp: plan.dp,
            ep: plan.ep,
        });
    }
    if cfg.num_routed_experts % (plan.tp * plan.ep) != 0 {
        out.push(PlanViolation::ExpertDivisibility {
            experts: cfg.num_routed_experts,
            tp: plan.tp,
            ep: plan.ep,
        });
    }
    let items = pipeline_items(cfg);
    if items < plan.num_chunks() {
        out.push(PlanViolation::TooFewItems {
            items,
            chunks: plan.num_chunks(),
        });
    }
    if plan.global_batch_size % (plan.dp * plan.micro_batch_size) != 0 {
        out.push(PlanViolation::BatchDivisibility {
            gbs: plan.global_batch_size,
            dp: plan.dp,
            mbs: plan.micro_batch_size,
        });
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

pub fn micro_batch_count(plan: &ParallelPlan) -> Result<u64, PlanError> {
    let per = plan.dp * plan.micro_batch_size;
    if per == 0 || plan.global_batch_size == 0 || plan.global_batch_size % per != 0 {
        return Err(PlanError::NonDivisible {
            gbs: plan.global_batch_size,
            dp: plan.dp,
            mbs: plan.micro_batch_size,
        });
    }
    Ok(plan.global_batch_size / per)
}

/// Relative cost of pipeline items in MoE-layer equivalents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkWeights {
    pub moe: f64,
    pub dense: f64,
    pub mtp_body: f64,
    pub head_loss: f64,
}

impl Default for ChunkWeights {
    fn default() -> Self {
        ChunkWeights {
            moe: 1.0,
            dense: 0.6,
            mtp_body: 1.05,
            head_loss: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Dense,
    Moe,
    MtpBody,
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkItem {
    pub name: String,
    pub kind: ItemKind,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub pp_stage: u64,
    pub vpp_stage: u64,
    pub items: Vec<ChunkItem>,
}

impl Chunk {
    pub fn weight(&self) -> f64 {
        self.items.iter().map(|i| i.weight).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAssignment {
    /// Chunks in model order; chunk `c` lives on stage `c % pp`, virtual
    /// stage `c / pp`.
    pub chunks: Vec<Chunk>,
    pub max_chunk_weight: f64,
    /// Best max chunk weight of the layers alone, without MTP and head.
    pub baseline_weight: f64,
}

impl StageAssignment {
    pub fn overflow_ratio(&self) -> f64 {
        if self.baseline_weight > 0.0 {
            self.max_chunk_weight / self.baseline_weight
        } else {
            1.0
        }
    }

    /// Sum of chunk weights hosted by each pipeline stage.
    pub fn stage_weights(&self, pp: u64) -> Vec<f64> {
        let mut w = vec![0.0; pp as usize];
        for c in &self.chunks {
            w[c.pp_stage as usize] += c.weight();
        }
        w
    }
}

const EPS: f64 = 1e-9;

/// Splits `w` into `k` non-empty contiguous runs.
///
/// Minimises the heaviest run first. Among optimal splittings it prefers
/// the one with the smallest sum of squared run weights (evener chunks),
/// then the earliest split positions. Returns the run lengths.
pub fn partition_contiguous(w: &[f64], k: usize) -> Result<Vec<usize>, PlanError> {
    let n = w.len();
    if k == 0 || n < k {
        return Err(PlanError::InfeasibleChunking {
            items: n as u64,
            chunks: k as u64,
        });
    }
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + w[i];
    }
    let seg = |a: usize, b: usize| prefix[b] - prefix[a];

    // mm[j][i]: min over splittings of items i.. into j runs of the max run.
    let inf = f64::INFINITY;
    let mut mm = vec![vec![inf; n + 1]; k + 1];
    mm[0][n] = 0.0;
    for j in 1..=k {
        for i in (0..n).rev() {
            if n - i < j {
                continue;
            }
            let mut best = inf;
            for e in i + 1..=n - (j - 1) {
                let v = seg(i, e).max(mm[j - 1][e]);
                if v < best {
                    best = v;
                }
            }
            mm[j][i] = best;
        }
    }
    let cap = mm[k][0] + EPS * (1.0 + mm[k][0].abs());

    // sq[j][i]: min sum of squares with every run under `cap`.
    let mut sq = vec![vec![inf; n + 1]; k + 1];
    sq[0][n] = 0.0;
    for j in 1..=k {
        for i in (0..n).rev() {
            if n - i < j {
                continue;
            }
            let mut best = inf;
            for e in i + 1..=n - (j - 1) {
                let s = seg(i, e);
                if s > cap || sq[j - 1][e] == inf {
                    continue;
                }
                let v = s * s + sq[j - 1][e];
                if v < best {
                    best = v;
                }
            }
            sq[j][i] = best;
        }
    }

    let mut lens = Vec::with_capacity(k);
    let mut i = 0;
    for j in (1..=k).rev() {
        let target = sq[j][i];
        let tol = EPS * (1.0 + target.abs());
        let mut chosen = None;
        for e in i + 1..=n - (j - 1) {
            let s = seg(i, e);
            if s > cap || sq[j - 1][e] == inf {
                continue;
            }
            if s * s + sq[j - 1][e] <= target + tol {
                chosen = Some(e);
                break;
            }
        }
        let e = chosen.expect("dp reconstruction");
        lens.push(e - i);
        i = e;
    }
    Ok(lens)
}

/// Lays `items` out over `pp * vpp` chunks with the generic min-max
/// partition and no placement constraints.
pub fn partition_items(
    items: &[ChunkItem],
    pp: u64,
    vpp: u64,
) -> Result<StageAssignment, PlanError> {
    let k = (pp * vpp) as usize;
    let w: Vec<f64> = items.iter().map(|i| i.weight).collect();
    let lens = partition_contiguous(&w, k)?;
    let groups = split_by(items, &lens);
    let max = groups.iter().map(|g| sum(g)).fold(0.0, f64::max);
    Ok(StageAssignment {
        chunks: to_chunks(groups, pp),
        max_chunk_weight: max,
        baseline_weight: max,
    })
}

fn sum(items: &[ChunkItem]) -> f64 {
    items.iter().map(|i| i.weight).sum()
}

fn split_by(items: &[ChunkItem], lens: &[usize]) -> Vec<Vec<ChunkItem>> {
    let mut out = Vec::with_capacity(lens.len());
    let mut at = 0;
    for &l in lens {
        out.push(items[at..at + l].to_vec());
        at += l;
    }
    out
}

fn to_chunks(groups: Vec<Vec<ChunkItem>>, pp: u64) -> Vec<Chunk> {
    groups
        .into_iter()
        .enumerate()
        .map(|(c, items)| Chunk {
            pp_stage: c as u64 % pp,
            vpp_stage: c as u64 / pp,
            items,
        })
        .collect()
}

/// Model items in layer order: dense layers, MoE layers, MTP bodies, head.
pub fn model_items(cfg: &ModelConfig, weights: &ChunkWeights) -> Vec<ChunkItem> {
    let mut items = Vec::new();
    for i in 0..cfg.num_layers {
        let dense = i < cfg.num_dense_layers;
        items.push(ChunkItem {
            name: format!("layer{i}"),
            kind: if dense { ItemKind::Dense } else { ItemKind::Moe },
            weight: if dense { weights.dense } else { weights.moe },
        });
    }
    for k in 0..cfg.num_mtp_layers {
        items.push(ChunkItem {
            name: format!("mtp{k}"),
            kind: ItemKind::MtpBody,
            weight: weights.mtp_body,
        });
    }
    items.push(ChunkItem {
        name: "head".into(),
        kind: ItemKind::Head,
        weight: weights.head_loss,
    });
    items
}

/// Balances the model over `pp * vpp` chunks.
///
/// The head and loss occupy the last chunk alone. MTP bodies share the
/// penultimate chunk with at most one preceding layer; whichever of zero or
/// one gives the lighter maximum wins (zero on ties). The remaining layers are
/// partitioned with [`partition_contiguous`]. Too few chunks for this layout
/// fall back to the unconstrained partition.
pub fn assign_chunks(
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    weights: &ChunkWeights,
) -> Result<StageAssignment, PlanError> {
    let items = model_items(cfg, weights);
    let k = plan.num_chunks() as usize;
    if items.len() < k {
        return Err(PlanError::InfeasibleChunking {
            items: items.len() as u64,
            chunks: k as u64,
        });
    }
    let layers = cfg.num_layers as usize;
    let mtp = cfg.num_mtp_layers as usize;
    let layer_w: Vec<f64> = items[..layers].iter().map(|i| i.weight).collect();
    let baseline = if layers >= k && k > 0 {
        let lens = partition_contiguous(&layer_w, k)?;
        split_by(&items[..layers], &lens)
            .iter()
            .map(|g| sum(g))
            .fold(0.0, f64::max)
    } else {
        0.0
    };

    let tail_chunks = if mtp > 0 { 2 } else { 1 };
    let mut best: Option<(f64, Vec<Vec<ChunkItem>>)> = None;
    if k > tail_chunks {
        let prefix_chunks = k - tail_chunks;
        let shares: &[usize] = if mtp > 0 { &[0, 1] } else { &[0] };
        for &share in shares {
            if share > layers {
                continue;
            }
            let prefix_len = layers - share;
            if prefix_len < prefix_chunks {
                continue;
            }
            let lens = partition_contiguous(&layer_w[..prefix_len], prefix_chunks)?;
            let mut groups = split_by(&items[..prefix_len], &lens);
            if mtp > 0 {
                groups.push(items[prefix_len..layers + mtp].to_vec());
            }
            groups.push(items[layers + mtp..].to_vec());
            let max = groups.iter().map(|g| sum(g)).fold(0.0, f64::max);
            if best.as_ref().map_or(true, |(b, _)| max < b - EPS) {
                best = Some((max, groups));
            }
        }
    }
    let (max, groups) = match best {
        Some(b) => b,
        None => {
            let w: Vec<f64> = items.iter().map(|i| i.weight).collect();
            let lens = partition_contiguous(&w, k)?;
            let groups = split_by(&items, &lens);
            (groups.iter().map(|g| sum(g)).fold(0.0, f64::max), groups)
        }
    };
    Ok(StageAssignment {
        chunks: to_chunks(groups, plan.pp),
        max_chunk_weight: max,
        baseline_weight: baseline,
    })
}
