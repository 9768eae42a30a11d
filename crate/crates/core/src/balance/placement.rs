use serde::{Deserialize, Serialize};

use super::{expert_loads, BalanceError, TokenRoute};

/// Bytes moved per migrated expert parameter: bf16 weight, fp32 master copy
/// and two fp32 Adam moments.
const MIGRATION_BYTES_PER_PARAM: f64 = 2.0 + 4.0 + 8.0;

/// Search nodes the exact refinement may visit after the greedy pass.
const REFINE_BUDGET: usize = 50_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    /// `(device, slot)` for each expert id.
    pub expert_to_slot: Vec<(u32, u32)>,
    pub predicted_loads: Vec<f64>,
    /// Device-load CV of the id-order placement under the predicted loads.
    pub cv_before: f64,
    pub cv_after: f64,
    pub moved_experts: u64,
    pub swap_bytes: f64,
}

impl PlacementPlan {
    pub fn num_devices(&self) -> usize {
        self.expert_to_slot
            .iter()
            .map(|&(d, _)| d as usize + 1)
            .max()
            .unwrap_or(0)
    }

    /// Recomputes migration cost relative to `prev`.
    pub fn migrate_from(&mut self, prev: &[(u32, u32)], expert_param_count: u64) {
        self.moved_experts = self
            .expert_to_slot
            .iter()
            .zip(prev)
            .filter(|(a, b)| a.0 != b.0)
            .count() as u64;
        self.swap_bytes =
            self.moved_experts as f64 * expert_param_count as f64 * MIGRATION_BYTES_PER_PARAM;
    }
}

/// Population standard deviation over mean.
pub fn cv(values: &[f64]) -> Result<f64, BalanceError> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.is_empty() || !(mean.abs() > 0.0) {
        return Err(BalanceError::ZeroMean);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

pub fn id_order_placement(n: usize, slots_per_device: usize) -> Vec<(u32, u32)> {
    (0..n)
        .map(|e| ((e / slots_per_device) as u32, (e % slots_per_device) as u32))
        .collect()
}

pub fn device_loads(loads: &[f64], placement: &[(u32, u32)]) -> Vec<f64> {
    let d = placement.iter().map(|&(d, _)| d as usize + 1).max().unwrap_or(0);
    let mut out = vec![0.0; d];
    for (l, &(dev, _)) in loads.iter().zip(placement) {
        out[dev as usize] += l;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceLoadStats {
    pub per_device_loads: Vec<f64>,
    pub cv: f64,
}

pub fn device_load_stats(
    window: &[TokenRoute],
    num_experts: u32,
    placement: &PlacementPlan,
) -> Result<DeviceLoadStats, BalanceError> {
    if placement.expert_to_slot.len() != num_experts as usize {
        return Err(BalanceError::Invalid(format!(
            "placement covers {} experts, trace has {num_experts}",
            placement.expert_to_slot.len()
        )));
    }
    let loads = expert_loads(window, num_experts);
    let per = device_loads(&loads, &placement.expert_to_slot);
    Ok(DeviceLoadStats {
        cv: cv(&per)?,
        per_device_loads: per,
    })
}

/// Sliding-window mean of the last `window` load vectors; an empty history
/// gives the uniform prior `expected_tokens / N`.
pub fn predict_loads(history: &[Vec<f64>], window: usize, num_experts: usize, expected_tokens: f64) -> Vec<f64> {
    if history.is_empty() {
        return vec![expected_tokens / num_experts as f64; num_experts];
    }
    let w = window.max(1).min(history.len());
    let recent = &history[history.len() - w..];
    let mut out = vec![0.0; recent[0].len()];
    for h in recent {
        for (o, x) in out.iter_mut().zip(h) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o /= w as f64);
    out
}

fn check_slots(n: usize, devices: usize, slots: usize) -> Result<(), BalanceError> {
    if devices == 0 || slots == 0 || devices * slots != n {
        return Err(BalanceError::SlotMismatch {
            devices,
            slots,
            experts: n,
        });
    }
    Ok(())
}

fn by_load_desc(loads: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..loads.len()).collect();
    order.sort_by(|&a, &b| loads[b].partial_cmp(&loads[a]).unwrap().then(a.cmp(&b)));
    order
}

/// Longest-processing-time greedy: experts by descending load, each onto the
/// least-loaded device that still has a free slot (lower device index, then
/// lower expert id, on ties). Returns the device of every expert.
pub fn lpt_place(loads: &[f64], devices: usize, slots: usize) -> Result<Vec<usize>, BalanceError> {
    check_slots(loads.len(), devices, slots)?;
    let mut dev_load = vec![0.0; devices];
    let mut free = vec![slots; devices];
    let mut out = vec![0; loads.len()];
    for e in by_load_desc(loads) {
        let mut best = usize::MAX;
        for d in 0..devices {
            if free[d] > 0 && (best == usize::MAX || dev_load[d] < dev_load[best]) {
                best = d;
            }
        }
        out[e] = best;
        dev_load[best] += loads[e];
        free[best] -= 1;
    }
    Ok(out)
}

struct Refine<'a> {
    loads: &'a [f64],
    order: Vec<usize>,
    suffix: Vec<f64>,
    dev_load: Vec<f64>,
    free: Vec<usize>,
    cur: Vec<usize>,
    best: Vec<usize>,
    best_max: f64,
    lower: f64,
    nodes: usize,
}

impl Refine<'_> {
    fn go(&mut self, i: usize, cur_max: f64) {
        if self.nodes >= REFINE_BUDGET || self.best_max <= self.lower {
            return;
        }
        self.nodes += 1;
        if i == self.order.len() {
            if cur_max < self.best_max {
                self.best_max = cur_max;
                self.best = self.cur.clone();
            }
            return;
        }
        // remaining work must land somewhere: bound by the fill-up average
        let total: f64 = self.dev_load.iter().sum::<f64>() + self.suffix[i];
        if (total / self.dev_load.len() as f64).max(cur_max) >= self.best_max {
            return;
        }
        let e = self.order[i];
        let mut tried: Vec<(f64, usize)> = Vec::new();
        let mut cands: Vec<usize> = (0..self.dev_load.len()).filter(|&d| self.free[d] > 0).collect();
        cands.sort_by(|&a, &b| self.dev_load[a].partial_cmp(&self.dev_load[b]).unwrap().then(a.cmp(&b)));
        for d in cands {
            let key = (self.dev_load[d], self.free[d]);
            if tried.iter().any(|t| *t == key) {
                continue;
            }
            tried.push(key);
            let old = self.dev_load[d];
            let nl = old + self.loads[e];
            if nl >= self.best_max {
                continue;
            }
            self.dev_load[d] = nl;
            self.free[d] -= 1;
            self.cur[e] = d;
            self.go(i + 1, cur_max.max(nl));
            self.dev_load[d] = old;
            self.free[d] += 1;
        }
    }
}

fn max_load(loads: &[f64], dev: &[usize], devices: usize) -> f64 {
    let mut dl = vec![0.0; devices];
    for (e, &d) in dev.iter().enumerate() {
        dl[d] += loads[e];
    }
    dl.into_iter().fold(0.0, f64::max)
}

/// Balanced placement of experts onto `devices x slots` slots.
///
/// Starts from [`lpt_place`] and then runs a bounded branch-and-bound over
/// slot-respecting assignments, keeping the greedy result unless a strictly
/// lower maximum device load is found. Small instances are solved exactly.
pub fn greedy_place(loads: &[f64], devices: usize, slots: usize) -> Result<PlacementPlan, BalanceError> {
    let greedy = lpt_place(loads, devices, slots)?;
    let order = by_load_desc(loads);
    let mut suffix = vec![0.0; loads.len() + 1];
    for i in (0..order.len()).rev() {
        suffix[i] = suffix[i + 1] + loads[order[i]];
    }
    let total: f64 = loads.iter().sum();
    let biggest = loads.iter().cloned().fold(0.0, f64::max);
    let mut r = Refine {
        loads,
        order,
        suffix,
        dev_load: vec![0.0; devices],
        free: vec![slots; devices],
        cur: vec![0; loads.len()],
        best_max: max_load(loads, &greedy, devices),
        best: greedy,
        lower: (total / devices as f64).max(biggest),
        nodes: 0,
    };
    r.go(0, 0.0);
    let dev = r.best;

    let mut next_slot = vec![0u32; devices];
    let expert_to_slot: Vec<(u32, u32)> = dev
        .iter()
        .map(|&d| {
            let s = next_slot[d];
            next_slot[d] += 1;
            (d as u32, s)
        })
        .collect();
    let id = id_order_placement(loads.len(), slots);
    let cv_or_zero = |p: &[(u32, u32)]| cv(&device_loads(loads, p)).unwrap_or(0.0);
    let mut plan = PlacementPlan {
        cv_before: cv_or_zero(&id),
        cv_after: cv_or_zero(&expert_to_slot),
        expert_to_slot,
        predicted_loads: loads.to_vec(),
        moved_experts: 0,
        swap_bytes: 0.0,
    };
    plan.migrate_from(&id, 0);
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingPhase {
    Pretrain,
    Sft,
}

/// CV-triggered replanning for one layer.
///
/// The first observation always places. In pretraining a later step replans
/// when its CV exceeds the CV seen right after the last placement by more
/// than `threshold`; in SFT nothing is replanned.
#[derive(Debug, Clone, PartialEq)]
pub struct RebalanceController {
    pub threshold: f64,
    pub phase: TrainingPhase,
    reference: Option<f64>,
    placed: bool,
}

impl RebalanceController {
    pub fn new(threshold: f64, phase: TrainingPhase) -> Result<Self, BalanceError> {
        if !(threshold > 0.0) {
            return Err(BalanceError::Invalid(format!(
                "threshold must be positive, got {threshold}"
            )));
        }
        Ok(RebalanceController {
            threshold,
            phase,
            reference: None,
            placed: false,
        })
    }

    /// Feeds the CV of the current step; returns whether to replan now.
    pub fn observe(&mut self, cv: f64) -> bool {
        if !self.placed {
            self.placed = true;
            self.reference = None;
            return true;
        }
        if self.phase == TrainingPhase::Sft {
            return false;
        }
        match self.reference {
            None => {
                self.reference = Some(cv);
                false
            }
            Some(r) if cv - r > self.threshold => {
                self.reference = None;
                true
            }
            Some(_) => false,
        }
    }
}

/// Replan decision for every step of a CV series.
pub fn rebalance_controller(
    cv_history: &[f64],
    threshold: f64,
    phase: TrainingPhase,
) -> Result<Vec<bool>, BalanceError> {
    let mut c = RebalanceController::new(threshold, phase)?;
    Ok(cv_history.iter().map(|&x| c.observe(x)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanPolicy {
    Static,
    Periodic { interval: usize },
    Triggered { threshold: f64, phase: TrainingPhase },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSimConfig {
    pub num_devices: usize,
    pub window: usize,
    pub policy: ReplanPolicy,
    pub expert_param_count: u64,
}

impl PlacementSimConfig {
    pub fn periodic(num_devices: usize) -> Self {
        PlacementSimConfig {
            num_devices,
            window: 5,
            policy: ReplanPolicy::Periodic { interval: 1 },
            expert_param_count: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementTimeline {
    /// Per-step device CV under the evolving placement.
    pub cv: Vec<f64>,
    /// Per-step device CV under the static id-order placement.
    pub static_cv: Vec<f64>,
    /// Steps after which a new placement was computed.
    pub replans: Vec<usize>,
    pub moved_experts: u64,
    pub swap_bytes: f64,
    pub mean_cv: f64,
    pub mean_static_cv: f64,
    /// `1 - mean_cv / mean_static_cv`.
    pub reduction: f64,
}

/// Replays per-step expert loads. Each step is measured under the placement
/// planned from the steps before it.
pub fn simulate_placement(
    steps: &[Vec<f64>],
    cfg: &PlacementSimConfig,
) -> Result<PlacementTimeline, BalanceError> {
    let n = steps.first().map_or(0, Vec::len);
    if n == 0 || cfg.num_devices == 0 || n % cfg.num_devices != 0 {
        return Err(BalanceError::SlotMismatch {
            devices: cfg.num_devices,
            slots: if cfg.num_devices > 0 { n / cfg.num_devices } else { 0 },
            experts: n,
        });
    }
    let slots = n / cfg.num_devices;
    let id = id_order_placement(n, slots);
    let mut placement = id.clone();
    let mut controller = match &cfg.policy {
        ReplanPolicy::Triggered { threshold, phase } => Some(RebalanceController::new(*threshold, *phase)?),
        _ => None,
    };
    if let ReplanPolicy::Periodic { interval: 0 } = cfg.policy {
        return Err(BalanceError::Invalid("replan interval must be positive".into()));
    }
    let mut out = PlacementTimeline {
        cv: Vec::with_capacity(steps.len()),
        static_cv: Vec::with_capacity(steps.len()),
        replans: Vec::new(),
        moved_experts: 0,
        swap_bytes: 0.0,
        mean_cv: 0.0,
        mean_static_cv: 0.0,
        reduction: 0.0,
    };
    for (t, loads) in steps.iter().enumerate() {
        if loads.len() != n {
            return Err(BalanceError::Invalid(format!("step {t} has {} experts, expected {n}", loads.len())));
        }
        let cur = cv(&device_loads(loads, &placement)).unwrap_or(0.0);
        out.cv.push(cur);
        out.static_cv.push(cv(&device_loads(loads, &id)).unwrap_or(0.0));
        let replan = match &cfg.policy {
            ReplanPolicy::Static => false,
            ReplanPolicy::Periodic { interval } => (t + 1) % interval == 0,
            ReplanPolicy::Triggered { .. } => controller.as_mut().is_some_and(|c| c.observe(cur)),
        };
        if replan {
            let hist = &steps[..=t];
            let pred = predict_loads(hist, cfg.window, n, 0.0);
            let mut plan = greedy_place(&pred, cfg.num_devices, slots)?;
            plan.migrate_from(&placement, cfg.expert_param_count);
            out.moved_experts += plan.moved_experts;
            out.swap_bytes += plan.swap_bytes;
            placement = plan.expert_to_slot;
            out.replans.push(t);
        }
    }
    let len = steps.len().max(1) as f64;
    out.mean_cv = out.cv.iter().sum::<f64>() / len;
    out.mean_static_cv = out.static_cv.iter().sum::<f64>() / len;
    out.reduction = if out.mean_static_cv > 0.0 {
        1.0 - out.mean_cv / out.mean_static_cv
    } else {
        0.0
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cv_example() {
        let plan = PlacementPlan {
            expert_to_slot: vec![(0, 0), (0, 1), (1, 0), (1, 1)],
            predicted_loads: vec![],
            cv_before: 0.0,
            cv_after: 0.0,
            moved_experts: 0,
            swap_bytes: 0.0,
        };
        let per = device_loads(&[10.0, 1.0, 5.0, 4.0], &plan.expert_to_slot);
        assert_eq!(per, vec![11.0, 9.0]);
        assert!((cv(&per).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(cv(&[0.0, 0.0]).unwrap_err(), BalanceError::ZeroMean);
    }

    #[test]
    fn greedy_example() {
        let p = greedy_place(&[10.0, 5.0, 4.0, 1.0], 2, 2).unwrap();
        let d: Vec<u32> = p.expert_to_slot.iter().map(|x| x.0).collect();
        assert_eq!(d, vec![0, 1, 1, 0]);
        assert_eq!(device_loads(&p.predicted_loads, &p.expert_to_slot), vec![11.0, 9.0]);
        assert!(greedy_place(&[1.0, 2.0, 3.0], 2, 2).is_err());
    }

    #[test]
    fn refinement_beats_plain_greedy() {
        let loads = [3.0, 3.0, 2.0, 2.0, 2.0, 0.0];
        let lpt = lpt_place(&loads, 2, 3).unwrap();
        assert_eq!(max_load(&loads, &lpt, 2), 7.0);
        let p = greedy_place(&loads, 2, 3).unwrap();
        let dl = device_loads(&loads, &p.expert_to_slot);
        assert_eq!(dl.iter().cloned().fold(0.0, f64::max), 6.0);
    }

    #[test]
    fn predictions() {
        let h = vec![vec![4.0, 6.0], vec![6.0, 4.0], vec![5.0, 5.0]];
        assert_eq!(predict_loads(&h, 3, 2, 0.0), vec![5.0, 5.0]);
        assert_eq!(predict_loads(&h, 1, 2, 0.0), vec![5.0, 5.0]);
        assert_eq!(predict_loads(&h[..2], 1, 2, 0.0), vec![6.0, 4.0]);
        assert_eq!(predict_loads(&[], 5, 4, 100.0), vec![25.0; 4]);
    }

    #[test]
    fn controller_rules() {
        let r = rebalance_controller(&[0.1, 0.1, 0.25], 0.1, TrainingPhase::Pretrain).unwrap();
        assert_eq!(r, vec![true, false, true]);
        let flat = rebalance_controller(&[0.2; 10], 0.05, TrainingPhase::Pretrain).unwrap();
        assert_eq!(flat.iter().filter(|x| **x).count(), 1);
        let sft = rebalance_controller(&[0.1, 0.9, 2.0], 0.05, TrainingPhase::Sft).unwrap();
        assert_eq!(sft, vec![true, false, false]);
        assert!(RebalanceController::new(0.0, TrainingPhase::Sft).is_err());
    }

    #[test]
    fn migration_bytes() {
        let mut p = greedy_place(&[10.0, 5.0, 4.0, 1.0], 2, 2).unwrap();
        p.migrate_from(&id_order_placement(4, 2), 1000);
        assert_eq!(p.moved_experts, 2);
        assert_eq!(p.swap_bytes, 2.0 * 1000.0 * 14.0);
    }
}
