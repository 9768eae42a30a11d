use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::BalanceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenRoute {
    pub seq_id: u64,
    pub micro_batch_id: u64,
    pub task_label: String,
    pub selected: Vec<u32>,
    /// Gating scores of the selected experts, same order.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingTrace {
    pub num_experts: u32,
    pub top_k: u32,
    pub seq_len: u64,
    pub tokens: Vec<TokenRoute>,
}

impl RoutingTrace {
    pub fn validate(&self) -> Result<(), BalanceError> {
        let n = self.num_experts;
        let k = self.top_k as usize;
        if n == 0 || k == 0 || k > n as usize {
            return Err(BalanceError::InvalidTrace(format!(
                "need 1 <= top_k <= num_experts (got K={k}, N={n})"
            )));
        }
        for (i, t) in self.tokens.iter().enumerate() {
            if t.selected.len() != k || t.scores.len() != k {
                return Err(BalanceError::InvalidTrace(format!(
                    "token {i}: expected {k} experts and scores"
                )));
            }
            let mut seen = t.selected.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != k || seen.last().is_some_and(|&e| e >= n) {
                return Err(BalanceError::InvalidTrace(format!(
                    "token {i}: expert ids must be distinct and < {n}"
                )));
            }
            if t.scores.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
                return Err(BalanceError::InvalidTrace(format!(
                    "token {i}: scores must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub num_tokens: u64,
    pub num_experts: u32,
    pub top_k: u32,
    pub skew_concentration: f64,
    /// Weight of the previous preference vector at each step.
    pub temporal_autocorrelation: f64,
    pub seed: u64,
    /// Tokens per sequence; the preference vector evolves once per sequence.
    #[serde(default = "default_seq_len")]
    pub seq_len: u64,
    #[serde(default = "one")]
    pub sequences_per_micro_batch: u64,
    /// Tasks cycle over sequences; each keeps its own preference process.
    #[serde(default = "one")]
    pub num_tasks: u64,
}

fn default_seq_len() -> u64 {
    1024
}

fn one() -> u64 {
    1
}

impl TraceSpec {
    pub fn new(num_tokens: u64, n: u32, k: u32, concentration: f64, autocorr: f64, seed: u64) -> Self {
        TraceSpec {
            num_tokens,
            num_experts: n,
            top_k: k,
            skew_concentration: concentration,
            temporal_autocorrelation: autocorr,
            seed,
            seq_len: default_seq_len(),
            sequences_per_micro_batch: 1,
            num_tasks: 1,
        }
    }

    pub fn validate(&self) -> Result<(), BalanceError> {
        let bad = |m: &str| Err(BalanceError::InvalidSpec(m.into()));
        if self.num_experts == 0 || self.top_k == 0 || self.top_k > self.num_experts {
            return bad("need 1 <= top_k <= num_experts");
        }
        if !(self.skew_concentration > 0.0) || !self.skew_concentration.is_finite() {
            return bad("skew_concentration must be positive and finite");
        }
        if !(0.0..1.0).contains(&self.temporal_autocorrelation) {
            return bad("temporal_autocorrelation must be in [0, 1)");
        }
        if self.seq_len == 0 || self.sequences_per_micro_batch == 0 || self.num_tasks == 0 {
            return bad("seq_len, sequences_per_micro_batch and num_tasks must be positive");
        }
        Ok(())
    }
}

fn dirichlet(rng: &mut ChaCha8Rng, n: usize, alpha: f64) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).expect("validated concentration");
    let mut v: Vec<f64> = (0..n).map(|_| g.sample(rng)).collect();
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        // every draw underflowed; fall back to one-hot on a random expert
        let hot = rng.random_range(0..n);
        v.iter_mut().enumerate().for_each(|(i, x)| *x = f64::from(u8::from(i == hot)));
    }
    v
}

/// Weighted sampling of `k` distinct indices (exponential-key method).
fn sample_top_k(rng: &mut ChaCha8Rng, w: &[f64], k: usize) -> Vec<u32> {
    let mut keys: Vec<(f64, u32)> = w
        .iter()
        .enumerate()
        .map(|(i, &wi)| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let key = if wi > 0.0 { u.ln() / wi } else { f64::NEG_INFINITY };
            (key, i as u32)
        })
        .collect();
    keys.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    keys.truncate(k);
    keys.into_iter().map(|(_, i)| i).collect()
}

/// Synthetic routing: each task keeps a Dirichlet preference vector that is
/// mixed with a fresh draw at every sequence, and every token samples `K`
/// distinct experts in proportion to it. Scores are the preference weights
/// of the chosen experts.
pub fn generate_trace(spec: &TraceSpec) -> Result<RoutingTrace, BalanceError> {
    spec.validate()?;
    let n = spec.num_experts as usize;
    let k = spec.top_k as usize;
    let rho = spec.temporal_autocorrelation;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut prefs: Vec<Vec<f64>> = (0..spec.num_tasks)
        .map(|_| dirichlet(&mut rng, n, spec.skew_concentration))
        .collect();
    let mut tokens = Vec::with_capacity(spec.num_tokens as usize);
    let mut seq = 0u64;
    while (tokens.len() as u64) < spec.num_tokens {
        let task = (seq % spec.num_tasks) as usize;
        if seq >= spec.num_tasks {
            let fresh = dirichlet(&mut rng, n, spec.skew_concentration);
            for (p, f) in prefs[task].iter_mut().zip(fresh) {
                *p = rho * *p + (1.0 - rho) * f;
            }
        }
        let pref = &prefs[task];
        let left = spec.num_tokens - tokens.len() as u64;
        for _ in 0..spec.seq_len.min(left) {
            let selected = sample_top_k(&mut rng, pref, k);
            let scores = selected.iter().map(|&e| pref[e as usize]).collect();
            tokens.push(TokenRoute {
                seq_id: seq,
                micro_batch_id: seq / spec.sequences_per_micro_batch,
                task_label: format!("task{task}"),
                selected,
                scores,
            });
        }
        seq += 1;
    }
    Ok(RoutingTrace {
        num_experts: spec.num_experts,
        top_k: spec.top_k,
        seq_len: spec.seq_len,
        tokens,
    })
}

/// Token count per expert over `tokens`.
pub fn expert_loads(tokens: &[TokenRoute], num_experts: u32) -> Vec<f64> {
    let mut out = vec![0.0; num_experts as usize];
    for t in tokens {
        for &e in &t.selected {
            out[e as usize] += 1.0;
        }
    }
    out
}

/// Expert loads per micro-batch (one placement step each), in trace order.
pub fn step_loads(trace: &RoutingTrace) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut start = 0;
    while start < trace.tokens.len() {
        let id = trace.tokens[start].micro_batch_id;
        let mut end = start;
        while end < trace.tokens.len() && trace.tokens[end].micro_batch_id == id {
            end += 1;
        }
        out.push(expert_loads(&trace.tokens[start..end], trace.num_experts));
        start = end;
    }
    out
}
