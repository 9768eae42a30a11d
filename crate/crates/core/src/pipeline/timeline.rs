//! Fixed-order list scheduling of pipeline passes.
//!
//! Every stage is one representative device with five resources (compute,
//! inter-node link, intra-node link, and one host link per direction) and a
//! host that dispatches
//! work in program order. Each resource executes its tasks in program order;
//! a task starts once it has been dispatched, its dependencies have ended and
//! the previous task on each resource it occupies has ended. Because the
//! orders are fixed, start times are monotone in every duration and in every
//! removed constraint, which is what makes overlap and host optimisations
//! provably non-harmful.
//!
//! Decoupled expert weight-gradient steps are the exception: nothing waits
//! on them, so they leave the fixed order and are packed preemptively into
//! idle compute time, first released first served.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::schedule::{producer, Phase, Schedule, ScheduleSlot};
use super::{PipelineError, StepReport};
use crate::cluster::HardwareDescription;
use crate::comm::{CommEvent, Direction, Link};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    Compute,
    InterLink,
    IntraLink,
    HostToDevice,
    DeviceToHost,
}

impl From<Link> for Resource {
    fn from(l: Link) -> Self {
        match l {
            Link::InterLink => Resource::InterLink,
            Link::IntraLink => Resource::IntraLink,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepClass {
    Plain,
    Permute,
    Gmm,
    WeightGrad,
    Recompute,
    Comm,
    P2p,
    Swap,
}

impl StepClass {
    fn is_transfer(self) -> bool {
        matches!(self, StepClass::Comm | StepClass::P2p | StepClass::Swap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub label: String,
    pub resource: Resource,
    pub duration: f64,
    /// Indices of earlier steps of the same pass. A step without
    /// dependencies waits for the pass input instead.
    pub deps: Vec<usize>,
    pub host_ops: u32,
    /// The host blocks after dispatching this step until it completes.
    pub sync: bool,
    pub class: StepClass,
    /// Under the host rule, may be dispatched before a pending sync completes.
    #[serde(default)]
    pub early_dispatch: bool,
    /// Has no implicit dependency on the pass input (prefetches).
    #[serde(default)]
    pub detached: bool,
}

impl Step {
    pub fn compute(label: impl Into<String>, duration: f64) -> Self {
        Step {
            label: label.into(),
            resource: Resource::Compute,
            duration,
            deps: Vec::new(),
            host_ops: 1,
            sync: false,
            class: StepClass::Plain,
            early_dispatch: false,
            detached: false,
        }
    }

    pub fn comm(label: impl Into<String>, link: Resource, duration: f64) -> Self {
        Step {
            label: label.into(),
            resource: link,
            duration,
            deps: Vec::new(),
            host_ops: 1,
            sync: false,
            class: if matches!(link, Resource::HostToDevice | Resource::DeviceToHost) {
                StepClass::Swap
            } else {
                StepClass::Comm
            },
            early_dispatch: false,
            detached: false,
        }
    }

    pub fn after(mut self, deps: &[usize]) -> Self {
        self.deps = deps.to_vec();
        self
    }

    pub fn host(mut self, ops: u32) -> Self {
        self.host_ops = ops;
        self
    }

    pub fn synced(mut self) -> Self {
        self.sync = true;
        self
    }

    pub fn class(mut self, class: StepClass) -> Self {
        self.class = class;
        self
    }

    pub fn early(mut self) -> Self {
        self.early_dispatch = true;
        self
    }

    pub fn detached(mut self) -> Self {
        self.detached = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PassTemplate {
    pub steps: Vec<Step>,
}

impl PassTemplate {
    pub fn single(duration: f64) -> Self {
        PassTemplate {
            steps: vec![Step::compute("pass", duration)],
        }
    }

    /// Appends `step` and returns its index.
    pub fn push(&mut self, step: Step) -> usize {
        self.steps.push(step);
        self.steps.len() - 1
    }

    pub fn compute_time(&self) -> f64 {
        self.steps
            .iter()
            .filter(|s| s.resource == Resource::Compute)
            .map(|s| s.duration)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkCost {
    pub fwd: f64,
    pub bwd: f64,
}

/// Pass templates for every global chunk (`vpp_stage * p + pp_stage`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub forward: Vec<PassTemplate>,
    pub backward: Vec<PassTemplate>,
    /// Inter-stage activation / gradient transfer per pass.
    pub p2p_time: f64,
    pub host_dispatch_time: f64,
}

impl Workload {
    pub fn uniform(chunks: usize, cost: ChunkCost) -> Self {
        Workload {
            forward: vec![PassTemplate::single(cost.fwd); chunks],
            backward: vec![PassTemplate::single(cost.bwd); chunks],
            p2p_time: 0.0,
            host_dispatch_time: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapPolicy {
    /// Transfers run on their links only; otherwise they also hold compute.
    pub overlap_comm: bool,
    /// Expert weight-gradient steps become preemptive filler work.
    pub decouple_weight_grad: bool,
    /// The host no longer waits for a synchronising step before dispatching
    /// the permute work (and steps marked early) behind it; the wait moves
    /// to the next step that needs the synchronised result.
    pub host_rule: bool,
}

impl OverlapPolicy {
    pub fn serialized() -> Self {
        OverlapPolicy {
            overlap_comm: false,
            decouple_weight_grad: false,
            host_rule: false,
        }
    }

    pub fn full() -> Self {
        OverlapPolicy {
            overlap_comm: true,
            decouple_weight_grad: true,
            host_rule: true,
        }
    }
}

impl Default for OverlapPolicy {
    fn default() -> Self {
        Self::full()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: usize,
    pub stage: u64,
    pub slot: ScheduleSlot,
    pub label: String,
    pub class: StepClass,
    pub resources: Vec<Resource>,
    pub duration: f64,
    pub deps: Vec<usize>,
    /// Busy intervals; more than one only for preempted filler work.
    pub intervals: Vec<(f64, f64)>,
    /// When the host finished dispatching this task.
    pub dispatched: f64,
    pub filler: bool,
}

impl TaskRecord {
    pub fn start(&self) -> f64 {
        self.intervals.first().map_or(0.0, |i| i.0)
    }

    pub fn end(&self) -> f64 {
        self.intervals.last().map_or(0.0, |i| i.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub p: u64,
    pub tasks: Vec<TaskRecord>,
    pub report: StepReport,
}

impl Timeline {
    /// Every `(stage, resource, start, end, task)` occupancy interval.
    pub fn occupancy(&self) -> Vec<(u64, Resource, f64, f64, usize)> {
        let mut out = Vec::new();
        for t in &self.tasks {
            for r in &t.resources {
                for &(a, b) in &t.intervals {
                    out.push((t.stage, *r, a, b, t.id));
                }
            }
        }
        out
    }
}

struct Proto {
    stage: u64,
    slot: ScheduleSlot,
    step: Step,
    resources: Vec<Resource>,
    deps: Vec<usize>,
    filler: bool,
}

struct PassIds {
    steps: std::ops::Range<usize>,
    p2p: Option<usize>,
}

fn consumer_on_other_stage(slot: &ScheduleSlot, p: u64, v: u64) -> bool {
    let s = slot.pp_stage;
    let c = slot.vpp_stage;
    match slot.phase {
        Phase::Forward if s + 1 < p => true,
        Phase::Forward => c + 1 < v && p > 1,
        Phase::Backward if s > 0 => true,
        Phase::Backward => c > 0 && p > 1,
    }
}

/// Plays `workload` out under `schedule`.
pub fn simulate_workload(
    schedule: &Schedule,
    workload: &Workload,
    policy: &OverlapPolicy,
) -> Result<Timeline, PipelineError> {
    let p = schedule.p;
    let v = schedule.v;
    let chunks = (p * v) as usize;
    if workload.forward.len() != chunks || workload.backward.len() != chunks {
        return Err(PipelineError::Invalid(format!(
            "workload has {}/{} pass templates, schedule needs {chunks}",
            workload.forward.len(),
            workload.backward.len()
        )));
    }
    for t in workload.forward.iter().chain(&workload.backward) {
        check_template(t, policy)?;
    }
    if workload.p2p_time < 0.0 || workload.host_dispatch_time < 0.0 {
        return Err(PipelineError::Invalid("negative p2p or host time".into()));
    }

    // Pass 1: lay out task ids in program order.
    let mut protos: Vec<Proto> = Vec::new();
    let mut pass_ids: std::collections::HashMap<ScheduleSlot, PassIds> =
        std::collections::HashMap::new();
    let empty = PassTemplate {
        steps: vec![Step::compute("noop", 0.0).host(0)],
    };
    for (s, order) in schedule.stages.iter().enumerate() {
        for slot in order {
            let c = slot.chunk(p) as usize;
            let mut tpl = match slot.phase {
                Phase::Forward => &workload.forward[c],
                Phase::Backward => &workload.backward[c],
            };
            if tpl.steps.is_empty() {
                tpl = &empty;
            }
            let base = protos.len();
            for st in &tpl.steps {
                let filler = policy.decouple_weight_grad && st.class == StepClass::WeightGrad;
                let mut resources = vec![st.resource];
                if !policy.overlap_comm && st.resource != Resource::Compute {
                    resources.push(Resource::Compute);
                }
                protos.push(Proto {
                    stage: s as u64,
                    slot: *slot,
                    step: st.clone(),
                    resources,
                    deps: st.deps.iter().map(|d| base + d).collect(),
                    filler,
                });
            }
            let steps = base..protos.len();
            let p2p = if workload.p2p_time > 0.0 && consumer_on_other_stage(slot, p, v) {
                let mut resources = vec![Resource::InterLink];
                if !policy.overlap_comm {
                    resources.push(Resource::Compute);
                }
                let deps = steps.clone().filter(|&i| !protos[i].filler).collect();
                protos.push(Proto {
                    stage: s as u64,
                    slot: *slot,
                    step: Step::comm("p2p", Resource::InterLink, workload.p2p_time)
                        .class(StepClass::P2p),
                    resources,
                    deps,
                    filler: false,
                });
                Some(protos.len() - 1)
            } else {
                None
            };
            pass_ids.insert(*slot, PassIds { steps, p2p });
        }
    }

    // Pass 2: wire pass inputs.
    for (_, order) in schedule.stages.iter().enumerate() {
        for slot in order {
            let Some(prod) = producer(slot, p, v) else {
                continue;
            };
            let pi = &pass_ids[&prod];
            let input: Vec<usize> = match pi.p2p {
                Some(id) => vec![id],
                None => pi.steps.clone().filter(|&i| !protos[i].filler).collect(),
            };
            let own = pass_ids[slot].steps.clone();
            for i in own {
                if protos[i].step.deps.is_empty() && !protos[i].step.detached {
                    protos[i].deps.extend(input.iter().copied());
                }
            }
        }
    }

    let n = protos.len();
    // Queue predecessors per resource and host order, per stage.
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut host_prev: Vec<Option<usize>> = vec![None; n];
    let mut host_wait: Vec<Vec<usize>> = vec![Vec::new(); n];
    {
        let mut last: std::collections::HashMap<(u64, Resource), usize> =
            std::collections::HashMap::new();
        let mut last_host: std::collections::HashMap<u64, usize> = std::collections::HashMap::new();
        let mut pending_sync: std::collections::HashMap<u64, Vec<usize>> =
            std::collections::HashMap::new();
        for i in 0..n {
            let pr = &protos[i];
            if pr.filler {
                continue;
            }
            for r in &pr.resources {
                if let Some(&j) = last.get(&(pr.stage, *r)) {
                    preds[i].push(j);
                }
                last.insert((pr.stage, *r), i);
            }
            host_prev[i] = last_host.insert(pr.stage, i);
            let pend = pending_sync.entry(pr.stage).or_default();
            let defer =
                policy.host_rule && (pr.step.class == StepClass::Permute || pr.step.early_dispatch);
            if !pend.is_empty() && !defer {
                host_wait[i] = std::mem::take(pend);
            }
            if pr.step.sync {
                pend.push(i);
            }
        }
    }

    // Kahn over main tasks.
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for i in 0..n {
        if protos[i].filler {
            continue;
        }
        let mut all: Vec<usize> = protos[i].deps.clone();
        all.extend(&preds[i]);
        all.extend(host_prev[i]);
        all.extend(&host_wait[i]);
        for j in all {
            succ[j].push(i);
            indeg[i] += 1;
        }
    }
    let hd = workload.host_dispatch_time;
    let mut h_end = vec![0.0f64; n];
    let mut start = vec![0.0f64; n];
    let mut end = vec![0.0f64; n];
    let mut host_delay = vec![0.0f64; n];
    let mut queue: VecDeque<usize> = (0..n)
        .filter(|&i| !protos[i].filler && indeg[i] == 0)
        .collect();
    let mut done = 0usize;
    let main_count = protos.iter().filter(|p| !p.filler).count();
    while let Some(i) = queue.pop_front() {
        done += 1;
        let pr = &protos[i];
        let mut hs = host_prev[i].map_or(0.0, |j| h_end[j]);
        for &j in &host_wait[i] {
            hs = hs.max(end[j]);
        }
        h_end[i] = hs + pr.step.host_ops as f64 * hd;
        let mut ready = 0.0f64;
        for &j in pr.deps.iter().chain(&preds[i]) {
            ready = ready.max(end[j]);
        }
        start[i] = ready.max(h_end[i]);
        if pr.resources.contains(&Resource::Compute) {
            host_delay[i] = (h_end[i] - ready).max(0.0);
        }
        end[i] = start[i] + pr.step.duration;
        for &k in &succ[i] {
            indeg[k] -= 1;
            if indeg[k] == 0 {
                queue.push_back(k);
            }
        }
    }
    if done != main_count {
        return Err(PipelineError::DeadlockDetected);
    }

    let mut intervals: Vec<Vec<(f64, f64)>> = (0..n)
        .map(|i| {
            if protos[i].filler {
                Vec::new()
            } else {
                vec![(start[i], end[i])]
            }
        })
        .collect();

    // Filler packing per stage.
    for s in 0..p {
        let mut busy: Vec<(f64, f64)> = (0..n)
            .filter(|&i| {
                !protos[i].filler
                    && protos[i].stage == s
                    && protos[i].resources.contains(&Resource::Compute)
                    && end[i] > start[i]
            })
            .map(|i| (start[i], end[i]))
            .collect();
        busy.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let busy = merge(busy);
        let mut fillers: Vec<(f64, usize)> = (0..n)
            .filter(|&i| protos[i].filler && protos[i].stage == s)
            .map(|i| {
                let rel = protos[i].deps.iter().map(|&j| end[j]).fold(0.0, f64::max);
                (rel, i)
            })
            .collect();
        fillers.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut t = 0.0f64;
        let mut bi = 0usize;
        for (rel, i) in fillers {
            t = t.max(rel);
            let mut remaining = protos[i].step.duration;
            let mut pieces = Vec::new();
            loop {
                while bi < busy.len() && busy[bi].1 <= t {
                    bi += 1;
                }
                if bi < busy.len() && busy[bi].0 <= t {
                    t = busy[bi].1;
                    bi += 1;
                    continue;
                }
                let gap_end = if bi < busy.len() { busy[bi].0 } else { f64::INFINITY };
                if gap_end - t >= remaining {
                    pieces.push((t, t + remaining));
                    t += remaining;
                    break;
                }
                pieces.push((t, gap_end));
                remaining -= gap_end - t;
                t = gap_end;
            }
            start[i] = pieces[0].0;
            end[i] = pieces.last().unwrap().1;
            intervals[i] = pieces;
        }
    }

    let tasks: Vec<TaskRecord> = protos
        .into_iter()
        .enumerate()
        .map(|(i, pr)| TaskRecord {
            id: i,
            stage: pr.stage,
            slot: pr.slot,
            label: pr.step.label,
            class: pr.step.class,
            resources: pr.resources,
            duration: pr.step.duration,
            deps: pr.deps,
            intervals: std::mem::take(&mut intervals[i]),
            dispatched: h_end[i],
            filler: pr.filler,
        })
        .collect();
    let report = measure(p, &tasks, &host_delay);
    Ok(Timeline { p, tasks, report })
}

fn check_template(t: &PassTemplate, policy: &OverlapPolicy) -> Result<(), PipelineError> {
    for (i, st) in t.steps.iter().enumerate() {
        if !(st.duration >= 0.0) || !st.duration.is_finite() {
            return Err(PipelineError::Invalid(format!(
                "step {} has invalid duration {}",
                st.label, st.duration
            )));
        }
        for &d in &st.deps {
            if d >= i {
                return Err(PipelineError::DeadlockDetected);
            }
            if policy.decouple_weight_grad && t.steps[d].class == StepClass::WeightGrad {
                return Err(PipelineError::Invalid(format!(
                    "step {} depends on decoupled weight-gradient step {}",
                    st.label, t.steps[d].label
                )));
            }
        }
    }
    Ok(())
}

fn merge(sorted: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (a, b) in sorted {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn covered(merged: &[(f64, f64)], a: f64, b: f64) -> f64 {
    let mut k = merged.partition_point(|iv| iv.1 <= a);
    let mut total = 0.0;
    while k < merged.len() && merged[k].0 < b {
        total += merged[k].1.min(b) - merged[k].0.max(a);
        k += 1;
    }
    total.max(0.0)
}

fn measure(p: u64, tasks: &[TaskRecord], host_delay: &[f64]) -> StepReport {
    let step_time = tasks.iter().map(|t| t.end()).fold(0.0, f64::max);
    let mut busy = 0.0;
    let mut comm_total = 0.0;
    let mut overlapped = 0.0;
    for s in 0..p {
        let mut work: Vec<(f64, f64)> = Vec::new();
        for t in tasks.iter().filter(|t| t.stage == s) {
            if t.resources[0] == Resource::Compute && !t.class.is_transfer() {
                busy += t.duration;
                work.extend(t.intervals.iter().filter(|iv| iv.1 > iv.0));
            }
        }
        work.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let work = merge(work);
        for t in tasks.iter().filter(|t| t.stage == s && t.class.is_transfer()) {
            comm_total += t.duration;
            overlapped += covered(&work, t.start(), t.end());
        }
    }
    let pf = p as f64;
    StepReport {
        step_time,
        bubble_ratio: if step_time > 0.0 {
            (1.0 - busy / (pf * step_time)).max(0.0)
        } else {
            0.0
        },
        comm_overlap_rate: if comm_total > 0.0 {
            (overlapped / comm_total).clamp(0.0, 1.0)
        } else {
            1.0
        },
        exposed_comm: (comm_total - overlapped).max(0.0) / pf,
        host_idle: host_delay.iter().sum::<f64>() / pf,
        mfu: 0.0,
        tps: 0.0,
    }
}

/// Simulates per-chunk compute costs with the given collective events
/// attached to every pass of the matching direction.
pub fn simulate_timeline(
    schedule: &Schedule,
    chunk_costs: &[ChunkCost],
    comm_events: &[CommEvent],
    policy: &OverlapPolicy,
    hw: &HardwareDescription,
) -> Result<Timeline, PipelineError> {
    let build = |cost: f64, dir: Direction| -> Result<PassTemplate, PipelineError> {
        let mut t = PassTemplate::single(cost);
        let events: Vec<&CommEvent> = comm_events.iter().filter(|e| e.direction == dir).collect();
        let index = |id: usize| events.iter().position(|e| e.id == id);
        for e in &events {
            let mut deps = Vec::new();
            for &d in &e.dependencies {
                match index(d) {
                    Some(k) => deps.push(k + 1),
                    None => {
                        return Err(PipelineError::Invalid(format!(
                            "event {} depends on unknown or cross-direction event {d}",
                            e.id
                        )))
                    }
                }
            }
            t.push(Step::comm(e.label.clone(), e.resource.into(), e.duration(hw)).after(&deps));
        }
        Ok(t)
    };
    let mut forward = Vec::new();
    let mut backward = Vec::new();
    for c in chunk_costs {
        forward.push(build(c.fwd, Direction::Forward)?);
        backward.push(build(c.bwd, Direction::Backward)?);
    }
    let w = Workload {
        forward,
        backward,
        p2p_time: 0.0,
        host_dispatch_time: hw.host_dispatch_time,
    };
    simulate_workload(schedule, &w, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{analytic_bubble_ratio, build_1f1b_schedule};

    fn uniform(p: u64, m: u64, v: u64, tf: f64, tb: f64) -> Timeline {
        let sch = build_1f1b_schedule(p, m, v).unwrap();
        let cost = ChunkCost {
            fwd: tf / v as f64,
            bwd: tb / v as f64,
        };
        let w = Workload::uniform((p * v) as usize, cost);
        simulate_workload(&sch, &w, &OverlapPolicy::full()).unwrap()
    }

    #[test]
    fn single_pass() {
        let tl = uniform(1, 1, 1, 2.0, 3.0);
        assert_eq!(tl.report.step_time, 5.0);
        assert_eq!(tl.report.bubble_ratio, 0.0);
    }

    #[test]
    fn closed_form_reference_points() {
        for v in [1, 2] {
            let (tf, tb) = (1.0, 2.0);
            let tl = uniform(16, 64, v, tf, tb);
            let expect = (v as f64 * 64.0 + 15.0) * (tf + tb) / v as f64;
            assert!((tl.report.step_time / expect - 1.0).abs() < 1e-9);
            let b = analytic_bubble_ratio(16, 64, v);
            assert!((tl.report.bubble_ratio / b - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn overlap_example() {
        let sch = build_1f1b_schedule(1, 1, 1).unwrap();
        let mut fwd = PassTemplate::single(3e-3);
        fwd.push(Step::comm("a2a", Resource::IntraLink, 2e-3));
        let w = Workload {
            forward: vec![fwd],
            backward: vec![PassTemplate::single(0.0)],
            p2p_time: 0.0,
            host_dispatch_time: 0.0,
        };
        let tl = simulate_workload(&sch, &w, &OverlapPolicy::full()).unwrap();
        assert_eq!(tl.report.comm_overlap_rate, 1.0);
        assert_eq!(tl.report.exposed_comm, 0.0);
        let ser = simulate_workload(&sch, &w, &OverlapPolicy::serialized()).unwrap();
        assert!((ser.report.step_time - 5e-3).abs() < 1e-15);
        assert_eq!(ser.report.comm_overlap_rate, 0.0);
    }

    #[test]
    fn filler_fills_comm_gap() {
        let sch = build_1f1b_schedule(1, 1, 1).unwrap();
        let mut bwd = PassTemplate::default();
        let dx = bwd.push(Step::compute("dx", 1.0).class(StepClass::Gmm));
        bwd.push(Step::compute("dw", 1.0).after(&[dx]).class(StepClass::WeightGrad));
        let a2a = bwd.push(Step::comm("a2a", Resource::IntraLink, 1.0).after(&[dx]));
        bwd.push(Step::compute("tail", 1.0).after(&[a2a]));
        let w = Workload {
            forward: vec![PassTemplate::single(1.0)],
            backward: vec![bwd],
            p2p_time: 0.0,
            host_dispatch_time: 0.0,
        };
        let full = simulate_workload(&sch, &w, &OverlapPolicy::full()).unwrap();
        // fwd 1, dx 1, dw hides under a2a, tail 1
        assert_eq!(full.report.step_time, 4.0);
        let ser = simulate_workload(&sch, &w, &OverlapPolicy::serialized()).unwrap();
        assert_eq!(ser.report.step_time, 5.0);
    }

    #[test]
    fn host_rule_hides_permute_dispatch() {
        let sch = build_1f1b_schedule(1, 1, 1).unwrap();
        let mut fwd = PassTemplate::default();
        let pre = fwd.push(Step::compute("preprocess", 1.0).synced());
        let perm = fwd.push(
            Step::compute("permute", 0.5)
                .after(&[pre])
                .host(10)
                .class(StepClass::Permute),
        );
        fwd.push(Step::compute("gmm", 1.0).after(&[perm]).class(StepClass::Gmm));
        let w = Workload {
            forward: vec![fwd],
            backward: vec![PassTemplate::single(0.0)],
            p2p_time: 0.0,
            host_dispatch_time: 0.1,
        };
        let mut pol = OverlapPolicy::full();
        pol.host_rule = false;
        let off = simulate_workload(&sch, &w, &pol).unwrap();
        pol.host_rule = true;
        let on = simulate_workload(&sch, &w, &pol).unwrap();
        assert!(on.report.step_time < off.report.step_time);
        assert!(on.report.host_idle < off.report.host_idle);
    }

    #[test]
    fn backward_dependency_cycle_is_deadlock() {
        let sch = build_1f1b_schedule(1, 1, 1).unwrap();
        let mut t = PassTemplate::single(1.0);
        t.steps[0].deps = vec![0];
        let w = Workload {
            forward: vec![t],
            backward: vec![PassTemplate::single(1.0)],
            p2p_time: 0.0,
            host_dispatch_time: 0.0,
        };
        assert_eq!(
            simulate_workload(&sch, &w, &OverlapPolicy::full()).unwrap_err(),
            PipelineError::DeadlockDetected
        );
    }
}
