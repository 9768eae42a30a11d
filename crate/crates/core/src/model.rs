//! Model architecture description, parameter and FLOP accounting, and the
//! pruned architecture design space.
//!
//! The layer stack is `num_dense_layers` dense transformer blocks followed by
//! MoE blocks, then `num_mtp_layers` multi-token-prediction blocks. Attention
//! is always multi-head latent attention (MLA). Input and output embeddings
//! are untied; MTP blocks share both with the main model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Invalid(String),
    #[error("design space is empty after pruning")]
    EmptySpace,
    #[error("sequence length must be positive")]
    ZeroSeqLen,
}

/// Multi-head latent attention dimensions.
///
/// `q_rank == 0` means queries are projected directly from the hidden state
/// without a low-rank bottleneck.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlaDims {
    pub q_rank: u64,
    pub kv_rank: u64,
    pub head_dim: u64,
    pub rope_dim: u64,
}

impl Default for MlaDims {
    fn default() -> Self {
        MlaDims {
            q_rank: 1536,
            kv_rank: 512,
            head_dim: 128,
            rope_dim: 64,
        }
    }
}

fn default_dense_layers() -> u64 {
    3
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub num_layers: u64,
    #[serde(default = "default_dense_layers")]
    pub num_dense_layers: u64,
    pub hidden_size: u64,
    pub num_attention_heads: u64,
    #[serde(default)]
    pub mla_dims: MlaDims,
    pub num_routed_experts: u64,
    pub num_shared_experts: u64,
    pub top_k: u64,
    pub expert_intermediate_size: u64,
    pub dense_ffn_intermediate_size: u64,
    pub num_mtp_layers: u64,
    pub vocab_size: u64,
    pub seq_len: u64,
    pub dtype_bytes: u64,
}

impl ModelConfig {
    /// The 718B-class configuration: 61 layers plus one MTP block, hidden 7680,
    /// 256 routed experts of width 2048 with one shared expert and top-8
    /// routing. Vocabulary size and dense FFN width are assumptions.
    pub fn pangu_ultra_moe() -> Self {
        ModelConfig {
            num_layers: 61,
            num_dense_layers: 3,
            hidden_size: 7680,
            num_attention_heads: 128,
            mla_dims: MlaDims::default(),
            num_routed_experts: 256,
            num_shared_experts: 1,
            top_k: 8,
            expert_intermediate_size: 2048,
            dense_ffn_intermediate_size: 18432,
            num_mtp_layers: 1,
            vocab_size: 153_600,
            seq_len: 4096,
            dtype_bytes: 2,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::Invalid(msg));
        if self.top_k > self.num_routed_experts {
            return fail(format!(
                "top_k ({}) exceeds num_routed_experts ({})",
                self.top_k, self.num_routed_experts
            ));
        }
        if self.num_dense_layers > self.num_layers {
            return fail(format!(
                "num_dense_layers ({}) exceeds num_layers ({})",
                self.num_dense_layers, self.num_layers
            ));
        }
        if self.mla_dims.head_dim == 0 {
            return fail("mla_dims.head_dim must be positive".into());
        }
        for (name, v) in [
            ("hidden_size", self.hidden_size),
            ("num_attention_heads", self.num_attention_heads),
            ("vocab_size", self.vocab_size),
            ("seq_len", self.seq_len),
            ("dtype_bytes", self.dtype_bytes),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    pub fn num_moe_layers(&self) -> u64 {
        self.num_layers - self.num_dense_layers.min(self.num_layers)
    }

    /// Compact identifier used for ranking tie-breaks and report rows.
    pub fn model_id(&self) -> String {
        let m = &self.mla_dims;
        format!(
            "L{}d{}-h{}-a{}-q{}kv{}hd{}r{}-e{}s{}k{}-i{}-f{}-mtp{}-v{}-t{}-b{}",
            self.num_layers,
            self.num_dense_layers,
            self.hidden_size,
            self.num_attention_heads,
            m.q_rank,
            m.kv_rank,
            m.head_dim,
            m.rope_dim,
            self.num_routed_experts,
            self.num_shared_experts,
            self.top_k,
            self.expert_intermediate_size,
            self.dense_ffn_intermediate_size,
            self.num_mtp_layers,
            self.vocab_size,
            self.seq_len,
            self.dtype_bytes
        )
    }

    /// Matmul weights of one MLA block (excludes the latent norms).
    pub fn attention_matmul_params(&self) -> u64 {
        let h = self.hidden_size;
        let a = self.num_attention_heads;
        let m = &self.mla_dims;
        let q = if m.q_rank > 0 {
            h * m.q_rank + m.q_rank * a * (m.head_dim + m.rope_dim)
        } else {
            h * a * (m.head_dim + m.rope_dim)
        };
        let kv = h * (m.kv_rank + m.rope_dim) + m.kv_rank * a * (2 * m.head_dim);
        let o = a * m.head_dim * h;
        q + kv + o
    }

    /// RMSNorm vectors on the q/kv latents.
    pub fn attention_norm_params(&self) -> u64 {
        self.mla_dims.q_rank + self.mla_dims.kv_rank
    }

    /// One SwiGLU expert (gate, up, down).
    pub fn expert_params(&self) -> u64 {
        3 * self.hidden_size * self.expert_intermediate_size
    }

    pub fn dense_ffn_params(&self) -> u64 {
        3 * self.hidden_size * self.dense_ffn_intermediate_size
    }

    pub fn router_params(&self) -> u64 {
        self.hidden_size * self.num_routed_experts
    }

    /// Per-token MLA cache entries per layer at inference time.
    pub fn kv_cache_elems_per_token_layer(&self) -> u64 {
        self.mla_dims.kv_rank + self.mla_dims.rope_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterCount {
    pub total: u64,
    /// Matmul weights a single token passes through (top-k plus shared
    /// experts, router, attention, dense FFNs, MTP projection, output head).
    /// Embedding tables and norm vectors are excluded.
    pub activated: u64,
    pub per_component: BTreeMap<String, u64>,
    pub activated_per_component: BTreeMap<String, u64>,
}

pub fn count_parameters(cfg: &ModelConfig) -> ParameterCount {
    let h = cfg.hidden_size;
    let moe_layers = cfg.num_moe_layers();
    let mtp = cfg.num_mtp_layers;
    // every MTP block carries a full MoE transformer block
    let attn_blocks = cfg.num_layers + mtp;
    let moe_blocks = moe_layers + mtp;

    let final_norm = if cfg.num_layers > 0 { h } else { 0 };
    let mut total = BTreeMap::new();
    total.insert("embedding".to_string(), cfg.vocab_size * h);
    total.insert("output_head".to_string(), cfg.vocab_size * h);
    total.insert(
        "attention".to_string(),
        attn_blocks * cfg.attention_matmul_params(),
    );
    total.insert(
        "norms".to_string(),
        attn_blocks * (2 * h + cfg.attention_norm_params()) + final_norm + mtp * 2 * h,
    );
    total.insert("dense_ffn".to_string(), cfg.num_dense_layers * cfg.dense_ffn_params());
    total.insert("router".to_string(), moe_blocks * cfg.router_params());
    total.insert(
        "routed_experts".to_string(),
        moe_blocks * cfg.num_routed_experts * cfg.expert_params(),
    );
    total.insert(
        "shared_experts".to_string(),
        moe_blocks * cfg.num_shared_experts * cfg.expert_params(),
    );
    total.insert("mtp_projection".to_string(), mtp * 2 * h * h);

    let mut act = total.clone();
    act.insert("embedding".to_string(), 0);
    act.insert("norms".to_string(), 0);
    act.insert(
        "routed_experts".to_string(),
        moe_blocks * cfg.top_k * cfg.expert_params(),
    );

    ParameterCount {
        total: total.values().sum(),
        activated: act.values().sum(),
        per_component: total,
        activated_per_component: act,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFlops {
    pub name: String,
    pub forward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopProfile {
    pub forward_per_token: f64,
    pub backward_per_token: f64,
    pub per_layer_breakdown: Vec<LayerFlops>,
}

impl FlopProfile {
    pub fn total_per_token(&self) -> f64 {
        self.forward_per_token + self.backward_per_token
    }
}

/// Score and context FLOPs of one attention block for one query token that
/// attends to `seq_len` keys (no causal discount).
pub fn attention_core_flops(cfg: &ModelConfig, seq_len: u64) -> f64 {
    let m = &cfg.mla_dims;
    let a = cfg.num_attention_heads as f64;
    let t = seq_len as f64;
    2.0 * a * (m.head_dim + m.rope_dim) as f64 * t + 2.0 * a * m.head_dim as f64 * t
}

pub fn flops_per_token(cfg: &ModelConfig, seq_len: u64) -> Result<FlopProfile, ModelError> {
    if seq_len == 0 {
        return Err(ModelError::ZeroSeqLen);
    }
    let h = cfg.hidden_size as f64;
    let attn = 2.0 * cfg.attention_matmul_params() as f64 + attention_core_flops(cfg, seq_len);
    let moe_ffn = 2.0
        * (cfg.router_params() + (cfg.top_k + cfg.num_shared_experts) * cfg.expert_params())
            as f64;
    let dense_ffn = 2.0 * cfg.dense_ffn_params() as f64;
    let head = 2.0 * h * cfg.vocab_size as f64;

    let mut layers = Vec::new();
    for i in 0..cfg.num_layers {
        let ffn = if i < cfg.num_dense_layers { dense_ffn } else { moe_ffn };
        layers.push(LayerFlops {
            name: format!("layer{i}"),
            forward: attn + ffn,
        });
    }
    for k in 0..cfg.num_mtp_layers {
        // projection of [embedding; hidden] plus a MoE block plus its own logits
        layers.push(LayerFlops {
            name: format!("mtp{k}"),
            forward: 2.0 * 2.0 * h * h + attn + moe_ffn + head,
        });
    }
    layers.push(LayerFlops {
        name: "head".to_string(),
        forward: head,
    });
    let forward: f64 = layers.iter().map(|l| l.forward).sum();
    Ok(FlopProfile {
        forward_per_token: forward,
        backward_per_token: 2.0 * forward,
        per_layer_breakdown: layers,
    })
}

/// Hidden size recommended for `layers` transformer blocks by the empirical
/// depth-to-width fit `ln(d) = 5.039 + 0.0555 L`.
pub fn depth_width_hidden(layers: u64) -> f64 {
    (5.039 + 5.55e-2 * layers as f64).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruningRules {
    #[serde(default = "default_shape_multiple")]
    pub shape_multiple: u64,
    #[serde(default)]
    pub expert_count_power_of_two: bool,
    /// Maximum relative distance of `hidden_size` from the depth-width
    /// recommendation. `None` disables the band.
    #[serde(default)]
    pub depth_width_band: Option<f64>,
}

fn default_shape_multiple() -> u64 {
    256
}

impl Default for PruningRules {
    fn default() -> Self {
        PruningRules {
            shape_multiple: default_shape_multiple(),
            expert_count_power_of_two: false,
            depth_width_band: None,
        }
    }
}

impl PruningRules {
    pub fn none() -> Self {
        PruningRules {
            shape_multiple: 1,
            expert_count_power_of_two: false,
            depth_width_band: None,
        }
    }

    pub fn admits(&self, cfg: &ModelConfig) -> bool {
        let m = self.shape_multiple.max(1);
        let shaped = |v: u64| v % m == 0;
        if !shaped(cfg.hidden_size)
            || !shaped(cfg.expert_intermediate_size)
            || !shaped(cfg.dense_ffn_intermediate_size)
        {
            return false;
        }
        if self.expert_count_power_of_two && !cfg.num_routed_experts.is_power_of_two() {
            return false;
        }
        if let Some(band) = self.depth_width_band {
            let target = depth_width_hidden(cfg.num_layers);
            if ((cfg.hidden_size as f64 - target) / target).abs() > band {
                return false;
            }
        }
        true
    }
}

/// Discrete candidate lists for every `ModelConfig` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpace {
    pub num_layers: Vec<u64>,
    pub num_dense_layers: Vec<u64>,
    pub hidden_size: Vec<u64>,
    pub num_attention_heads: Vec<u64>,
    pub mla_dims: Vec<MlaDims>,
    pub num_routed_experts: Vec<u64>,
    pub num_shared_experts: Vec<u64>,
    pub top_k: Vec<u64>,
    pub expert_intermediate_size: Vec<u64>,
    pub dense_ffn_intermediate_size: Vec<u64>,
    pub num_mtp_layers: Vec<u64>,
    pub vocab_size: Vec<u64>,
    pub seq_len: Vec<u64>,
    pub dtype_bytes: Vec<u64>,
    #[serde(default)]
    pub pruning_rules: PruningRules,
}

impl DesignSpace {
    /// Single-point space around `cfg`.
    pub fn around(cfg: &ModelConfig) -> Self {
        DesignSpace {
            num_layers: vec![cfg.num_layers],
            num_dense_layers: vec![cfg.num_dense_layers],
            hidden_size: vec![cfg.hidden_size],
            num_attention_heads: vec![cfg.num_attention_heads],
            mla_dims: vec![cfg.mla_dims],
            num_routed_experts: vec![cfg.num_routed_experts],
            num_shared_experts: vec![cfg.num_shared_experts],
            top_k: vec![cfg.top_k],
            expert_intermediate_size: vec![cfg.expert_intermediate_size],
            dense_ffn_intermediate_size: vec![cfg.dense_ffn_intermediate_size],
            num_mtp_layers: vec![cfg.num_mtp_layers],
            vocab_size: vec![cfg.vocab_size],
            seq_len: vec![cfg.seq_len],
            dtype_bytes: vec![cfg.dtype_bytes],
            pruning_rules: PruningRules::none(),
        }
    }
}

fn dedup(v: &[u64]) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(v.len());
    for x in v {
        if !out.contains(x) {
            out.push(*x);
        }
    }
    out
}

/// Lazily walks the Cartesian product in field order (first field slowest).
#[derive(Debug, Clone)]
pub struct DesignIter {
    axes: Vec<Vec<u64>>,
    mla: Vec<MlaDims>,
    rules: PruningRules,
    cursor: Vec<usize>,
    done: bool,
}

impl DesignIter {
    fn new(space: &DesignSpace) -> Self {
        let mut mla: Vec<MlaDims> = Vec::new();
        for m in &space.mla_dims {
            if !mla.contains(m) {
                mla.push(*m);
            }
        }
        let axes = vec![
            dedup(&space.num_layers),
            dedup(&space.num_dense_layers),
            dedup(&space.hidden_size),
            dedup(&space.num_attention_heads),
            (0..mla.len() as u64).collect(),
            dedup(&space.num_routed_experts),
            dedup(&space.num_shared_experts),
            dedup(&space.top_k),
            dedup(&space.expert_intermediate_size),
            dedup(&space.dense_ffn_intermediate_size),
            dedup(&space.num_mtp_layers),
            dedup(&space.vocab_size),
            dedup(&space.seq_len),
            dedup(&space.dtype_bytes),
        ];
        let done = axes.iter().any(|a| a.is_empty());
        DesignIter {
            cursor: vec![0; axes.len()],
            axes,
            mla,
            rules: space.pruning_rules.clone(),
            done,
        }
    }

    fn current(&self) -> ModelConfig {
        let v = |i: usize| self.axes[i][self.cursor[i]];
        ModelConfig {
            num_layers: v(0),
            num_dense_layers: v(1),
            hidden_size: v(2),
            num_attention_heads: v(3),
            mla_dims: self.mla[v(4) as usize],
            num_routed_experts: v(5),
            num_shared_experts: v(6),
            top_k: v(7),
            expert_intermediate_size: v(8),
            dense_ffn_intermediate_size: v(9),
            num_mtp_layers: v(10),
            vocab_size: v(11),
            seq_len: v(12),
            dtype_bytes: v(13),
        }
    }

    fn advance(&mut self) {
        for i in (0..self.axes.len()).rev() {
            self.cursor[i] += 1;
            if self.cursor[i] < self.axes[i].len() {
                return;
            }
            self.cursor[i] = 0;
        }
        self.done = true;
    }
}

impl Iterator for DesignIter {
    type Item = ModelConfig;

    fn next(&mut self) -> Option<ModelConfig> {
        while !self.done {
            let cfg = self.current();
            self.advance();
            if cfg.validate().is_ok() && self.rules.admits(&cfg) {
                return Some(cfg);
            }
        }
        None
    }
}

/// Enumerates the pruned design space in a deterministic order.
///
/// Candidates that violate `ModelConfig` invariants (e.g. `top_k` larger than
/// the expert count) are dropped along with those rejected by the pruning
/// rules.
pub fn enumerate_design_space(
    space: &DesignSpace,
) -> Result<std::iter::Peekable<DesignIter>, ModelError> {
    if space.pruning_rules.shape_multiple == 0 {
        return Err(ModelError::Invalid("shape_multiple must be positive".into()));
    }
    let mut it = DesignIter::new(space).peekable();
    if it.peek().is_none() {
        return Err(ModelError::EmptySpace);
    }
    Ok(it)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> ModelConfig {
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

    /// Every weight matrix and vector of the tiny model, written out by hand.
    fn tiny_matrices() -> Vec<(&'static str, u64, u64, bool)> {
        // (name, rows, cols, activated?)
        let mut m = vec![
            ("embed", 100, 64, false),
            ("head", 64, 100, true),
            ("final_norm", 1, 64, false),
        ];
        for _layer in 0..2 {
            m.extend([
                ("attn_norm", 1, 64, false),
                ("ffn_norm", 1, 64, false),
                ("q_down", 64, 32, true),
                ("q_norm", 1, 32, false),
                ("q_up", 32, 4 * (16 + 8), true),
                ("kv_down", 64, 16 + 8, true),
                ("kv_norm", 1, 16, false),
                ("kv_up", 16, 4 * (16 + 16), true),
                ("o_proj", 4 * 16, 64, true),
            ]);
        }
        // layer 0 dense
        m.extend([
            ("dense_gate", 64, 256, true),
            ("dense_up", 64, 256, true),
            ("dense_down", 256, 64, true),
        ]);
        // layer 1 moe: router + 4 routed + 1 shared; 2 routed activated
        m.push(("router", 64, 4, true));
        for e in 0..5 {
            let act = e < 2 || e == 4;
            m.extend([
                ("expert_gate", 64, 128, act),
                ("expert_up", 64, 128, act),
                ("expert_down", 128, 64, act),
            ]);
        }
        m
    }

    #[test]
    fn tiny_parameter_count_matches_matrix_enumeration() {
        let cfg = tiny();
        let pc = count_parameters(&cfg);
        let mats = tiny_matrices();
        let total: u64 = mats.iter().map(|(_, r, c, _)| r * c).sum();
        let act: u64 = mats.iter().filter(|m| m.3).map(|(_, r, c, _)| r * c).sum();
        assert_eq!(pc.total, total);
        assert_eq!(pc.activated, act);
        assert_eq!(pc.per_component.values().sum::<u64>(), pc.total);
    }

    #[test]
    fn embedding_only_model() {
        let mut cfg = tiny();
        cfg.num_layers = 0;
        cfg.num_dense_layers = 0;
        cfg.num_mtp_layers = 0;
        let pc = count_parameters(&cfg);
        assert_eq!(pc.total, 2 * cfg.vocab_size * cfg.hidden_size);
        let fl = flops_per_token(&cfg, 16).unwrap();
        assert_eq!(fl.forward_per_token, 2.0 * 64.0 * 100.0);
    }

    #[test]
    fn tiny_flops_match_matmul_enumeration() {
        let cfg = tiny();
        let t = 16.0;
        // per-matmul 2*m*n*k with m = 1 token; only activated weights
        let mm: f64 = tiny_matrices()
            .iter()
            .filter(|m| m.3 && !m.0.ends_with("norm"))
            .map(|(_, r, c, _)| 2.0 * (*r as f64) * (*c as f64))
            .sum();
        // QK^T over (nope + rope) dims, then P.V over head_dim, per head, per layer
        let core = 2.0 * (2.0 * 4.0 * 24.0 * t + 2.0 * 4.0 * 16.0 * t);
        let fl = flops_per_token(&cfg, 16).unwrap();
        assert!((fl.forward_per_token - (mm + core)).abs() < 1e-6);
        assert_eq!(fl.backward_per_token, 2.0 * fl.forward_per_token);
    }

    #[test]
    fn zero_seq_len_rejected() {
        assert_eq!(flops_per_token(&tiny(), 0), Err(ModelError::ZeroSeqLen));
    }

    #[test]
    fn depth_width_values() {
        assert!((depth_width_hidden(0) - 5.039f64.exp()).abs() < 1e-12);
        assert!((depth_width_hidden(0) - 154.3).abs() < 0.05);
        let l70 = depth_width_hidden(70);
        assert!((l70 / 7.50e3 - 1.0).abs() < 0.005, "{l70}");
        let l61 = depth_width_hidden(61);
        assert!((l61 / 4.56e3 - 1.0).abs() < 0.005, "{l61}");
    }

    #[test]
    fn pangu_counts_land_in_reported_range() {
        let pc = count_parameters(&ModelConfig::pangu_ultra_moe());
        assert!((682e9..=754e9).contains(&(pc.total as f64)), "{}", pc.total);
        assert!((37e9..=41e9).contains(&(pc.activated as f64)), "{}", pc.activated);
    }

    #[test]
    fn validate_rejects_bad_configs() {
        let mut cfg = tiny();
        cfg.top_k = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny();
        cfg.num_dense_layers = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny();
        cfg.mla_dims.head_dim = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_axis_is_empty_space() {
        let mut space = DesignSpace::around(&tiny());
        space.hidden_size.clear();
        assert_eq!(
            enumerate_design_space(&space).err(),
            Some(ModelError::EmptySpace)
        );
    }

    #[test]
    fn small_product_without_pruning() {
        let mut space = DesignSpace::around(&tiny());
        space.hidden_size = vec![64, 128, 192];
        space.num_layers = vec![2, 3];
        space.top_k = vec![1, 2];
        let got: Vec<_> = enumerate_design_space(&space).unwrap().collect();
        // brute-force product
        let mut expect = Vec::new();
        for l in [2, 3] {
            for h in [64, 128, 192] {
                for k in [1, 2] {
                    expect.push((l, h, k));
                }
            }
        }
        assert_eq!(got.len(), 12);
        let seen: Vec<_> = got
            .iter()
            .map(|c| (c.num_layers, c.hidden_size, c.top_k))
            .collect();
        assert_eq!(seen, expect);
    }

    #[test]
    fn shape_and_power_of_two_rules() {
        let rules = PruningRules {
            shape_multiple: 256,
            expert_count_power_of_two: true,
            depth_width_band: None,
        };
        let mut cfg = ModelConfig::pangu_ultra_moe();
        assert!(rules.admits(&cfg));
        cfg.num_routed_experts = 240;
        assert!(!rules.admits(&cfg));
        cfg.num_routed_experts = 256;
        cfg.hidden_size = 7000;
        assert!(!rules.admits(&cfg));
    }

    #[test]
    fn depth_width_band_filters() {
        let rules = PruningRules {
            shape_multiple: 1,
            expert_count_power_of_two: false,
            depth_width_band: Some(0.1),
        };
        let mut cfg = ModelConfig::pangu_ultra_moe();
        cfg.num_layers = 70;
        cfg.hidden_size = 7168; // 4.5% below the 70-layer recommendation
        assert!(rules.admits(&cfg));
        cfg.hidden_size = 6144;
        assert!(!rules.admits(&cfg));
    }
}
