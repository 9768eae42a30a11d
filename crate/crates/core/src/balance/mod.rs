//! Routing traces, auxiliary losses, capacity drops, device load metrics and
//! dynamic expert placement.

mod loss;
mod placement;
mod stats;
mod trace;

use thiserror::Error;

pub use loss::{aux_loss, balance_bsz, capacity_drop_stats, AuxLevel, AuxLossResult, AuxScope, DropStats};
pub use placement::{
    cv, device_load_stats, device_loads, greedy_place, id_order_placement,
    lpt_place, predict_loads, rebalance_controller, simulate_placement, DeviceLoadStats,
    PlacementPlan, PlacementSimConfig, PlacementTimeline, RebalanceController, ReplanPolicy,
    TrainingPhase,
};
pub use stats::{trace_statistics, TraceStats};
pub use trace::{expert_loads, generate_trace, step_loads, RoutingTrace, TokenRoute, TraceSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BalanceError {
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("invalid trace spec: {0}")]
    InvalidSpec(String),
    #[error("aux-loss window is empty")]
    EmptyWindow,
    #[error("{devices} devices x {slots} slots != {experts} experts")]
    SlotMismatch {
        devices: usize,
        slots: usize,
        experts: usize,
    },
    #[error("device loads have zero mean")]
    ZeroMean,
    #[error("{0}")]
    Invalid(String),
}
