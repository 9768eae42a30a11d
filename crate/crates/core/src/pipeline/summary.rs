use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::cluster::HardwareDescription;
use crate::model::{flops_per_token, ModelConfig};
use crate::plan::ParallelPlan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub mfu: f64,
    pub tps: f64,
}

/// `flops_per_token` counts forward and backward together.
pub fn summarize_raw(
    tokens_per_step: f64,
    step_time: f64,
    flops_per_token: f64,
    world_size: u64,
    peak_flops_per_device: f64,
) -> Throughput {
    let tps = tokens_per_step / step_time;
    Throughput {
        tps,
        mfu: tps * flops_per_token / (world_size as f64 * peak_flops_per_device),
    }
}

pub fn summarize(
    step_time: f64,
    cfg: &ModelConfig,
    plan: &ParallelPlan,
    hw: &HardwareDescription,
) -> Result<Throughput, PipelineError> {
    if !(step_time > 0.0) {
        return Err(PipelineError::Invalid(format!(
            "step time must be positive, got {step_time}"
        )));
    }
    let fwd = flops_per_token(cfg, cfg.seq_len)
        .map_err(|e| PipelineError::Invalid(e.to_string()))?
        .forward_per_token;
    let tokens = (plan.global_batch_size * cfg.seq_len) as f64;
    Ok(summarize_raw(
        tokens,
        step_time,
        3.0 * fwd,
        hw.world_size(),
        hw.peak_flops_per_device,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let t = summarize_raw(524288.0, 1.0, 3e11, 64, 4e14);
        assert_eq!(t.tps, 524288.0);
        assert!((t.mfu - 6.144).abs() < 1e-12);
    }

    #[test]
    fn doubling_step_halves_both() {
        let a = summarize_raw(1e6, 2.0, 1e9, 8, 1e14);
        let b = summarize_raw(1e6, 4.0, 1e9, 8, 1e14);
        assert!((a.tps / b.tps - 2.0).abs() < 1e-12);
        assert!((a.mfu / b.mfu - 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_positive_step_rejected() {
        let cfg = ModelConfig::pangu_ultra_moe();
        let plan = ParallelPlan::pangu_6k();
        let hw = crate::cluster::tests::sheet();
        assert!(summarize(0.0, &cfg, &plan, &hw).is_err());
    }
}
