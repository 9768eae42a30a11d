//! Pipeline schedules and the step-time simulator.
//!
//! [`build_1f1b_schedule`] fixes the order in which each stage runs its
//! forward and backward passes. [`simulate_workload`] expands every pass into
//! compute and communication steps and plays them out on per-stage
//! resources. [`summarize`] turns a step time into throughput and MFU.

mod schedule;
mod summary;
mod timeline;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use schedule::{build_1f1b_schedule, producer, Phase, Schedule, ScheduleSlot};
pub use summary::{summarize, summarize_raw, Throughput};
pub use timeline::{
    simulate_timeline, simulate_workload, ChunkCost, OverlapPolicy, PassTemplate, Resource,
    Step, StepClass, TaskRecord, Timeline, Workload,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("pipeline dependencies form a cycle; schedule cannot make progress")]
    DeadlockDetected,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepReport {
    pub step_time: f64,
    pub bubble_ratio: f64,
    pub comm_overlap_rate: f64,
    /// Communication time not hidden under computation, per stage device.
    pub exposed_comm: f64,
    /// Device time spent waiting on host dispatch, per stage device.
    pub host_idle: f64,
    pub mfu: f64,
    pub tps: f64,
}

/// Idle fraction of an interleaved 1F1B pipeline with uniform stages.
pub fn analytic_bubble_ratio(p: u64, m: u64, v: u64) -> f64 {
    let p = p as f64;
    (p - 1.0) / (v as f64 * m as f64 + p - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_bubbles() {
        let b1 = analytic_bubble_ratio(16, 64, 1);
        let b2 = analytic_bubble_ratio(16, 64, 2);
        assert!((b1 - 15.0 / 79.0).abs() < 1e-15);
        assert!((b2 - 15.0 / 143.0).abs() < 1e-15);
        assert!((b1 - 0.1898).abs() < 5e-4);
        assert!((b2 - 0.1049).abs() < 5e-4);
        assert_eq!(analytic_bubble_ratio(1, 7, 3), 0.0);
    }
}
