//! Step-time, memory and load-balance simulator for large sparse
//! Mixture-of-Experts training.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] describes architectures and counts parameters and FLOPs.
//! * [`cluster`] holds the hardware sheet and alpha-beta / roofline timing.
//! * [`plan`] validates parallelism plans and balances pipeline chunks.
//! * [`comm`] computes expert-parallel dispatch volumes and events.
//! * [`pipeline`] builds interleaved 1F1B schedules and simulates them.
//! * [`memory`] accounts static and activation memory and picks a
//!   recompute/swap plan.
//! * [`search`] scores configurations end to end and ranks design spaces.
//! * [`balance`] covers routing traces, auxiliary losses, capacity drops and
//!   expert placement.
//! * [`io`] does strict JSON loading and trace persistence.
//!
//! ```
//! use moesim::model::{count_parameters, ModelConfig};
//!
//! let pc = count_parameters(&ModelConfig::pangu_ultra_moe());
//! assert!(pc.activated < pc.total);
//! ```

pub mod balance;
pub mod cluster;
pub mod comm;
pub mod cost;
pub mod io;
pub mod memory;
pub mod model;
pub mod pipeline;
pub mod plan;
pub mod search;

pub use cluster::{collective_time, kernel_time, Collective, CommGroup, HardwareDescription};
pub use model::{count_parameters, flops_per_token, ModelConfig};
pub use plan::ParallelPlan;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/plans.md")]
    mod plans {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/communication.md")]
    mod communication {}
    #[doc = include_str!("../../../book/src/memory.md")]
    mod memory {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/balance.md")]
    mod balance {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
