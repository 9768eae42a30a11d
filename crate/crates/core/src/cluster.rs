//! Hardware capability sheet plus alpha-beta collective and roofline kernel
//! timing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("invalid hardware description: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareDescription {
    pub num_nodes: u64,
    pub devices_per_node: u64,
    pub peak_flops_per_device: f64,
    pub matmul_efficiency: f64,
    pub vector_efficiency: f64,
    pub hbm_bytes_per_device: f64,
    pub hbm_bandwidth: f64,
    pub intra_node_bandwidth: f64,
    pub inter_node_bandwidth: f64,
    pub link_latency_intra: f64,
    pub link_latency_inter: f64,
    pub host_dispatch_time: f64,
    pub host_to_device_bandwidth: f64,
}

impl HardwareDescription {
    pub fn world_size(&self) -> u64 {
        self.num_nodes * self.devices_per_node
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |m: String| Err(ClusterError::Invalid(m));
        if self.num_nodes == 0 || self.devices_per_node == 0 {
            return bad("num_nodes and devices_per_node must be >= 1".into());
        }
        for (name, v) in [
            ("peak_flops_per_device", self.peak_flops_per_device),
            ("hbm_bytes_per_device", self.hbm_bytes_per_device),
            ("hbm_bandwidth", self.hbm_bandwidth),
            ("intra_node_bandwidth", self.intra_node_bandwidth),
            ("inter_node_bandwidth", self.inter_node_bandwidth),
            ("host_to_device_bandwidth", self.host_to_device_bandwidth),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be a positive rate, got {v}"));
            }
        }
        for (name, v) in [
            ("matmul_efficiency", self.matmul_efficiency),
            ("vector_efficiency", self.vector_efficiency),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} must be in (0, 1], got {v}"));
            }
        }
        for (name, v) in [
            ("link_latency_intra", self.link_latency_intra),
            ("link_latency_inter", self.link_latency_inter),
            ("host_dispatch_time", self.host_dispatch_time),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        Ok(())
    }

    /// Group of `size` devices confined to one node.
    pub fn intra_group(&self, size: u64) -> CommGroup {
        CommGroup {
            size,
            spans_nodes: false,
            latency: self.link_latency_intra,
            bandwidth: self.intra_node_bandwidth,
        }
    }

    /// Group of `size` devices on distinct nodes.
    pub fn inter_group(&self, size: u64) -> CommGroup {
        CommGroup {
            size,
            spans_nodes: true,
            latency: self.link_latency_inter,
            bandwidth: self.inter_node_bandwidth,
        }
    }

    /// Same machine with every rate multiplied by `factor` and every fixed
    /// delay divided by it. All simulated durations shrink by exactly
    /// `1/factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        HardwareDescription {
            peak_flops_per_device: self.peak_flops_per_device * factor,
            hbm_bandwidth: self.hbm_bandwidth * factor,
            intra_node_bandwidth: self.intra_node_bandwidth * factor,
            inter_node_bandwidth: self.inter_node_bandwidth * factor,
            host_to_device_bandwidth: self.host_to_device_bandwidth * factor,
            link_latency_intra: self.link_latency_intra / factor,
            link_latency_inter: self.link_latency_inter / factor,
            host_dispatch_time: self.host_dispatch_time / factor,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommGroup {
    pub size: u64,
    pub spans_nodes: bool,
    pub latency: f64,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collective {
    Allgather,
    Alltoall,
    Reducescatter,
    Allreduce,
    P2p,
}

/// Alpha-beta time of one collective moving `volume` bytes (the full
/// gathered / exchanged buffer per rank) over `group`.
pub fn collective_time(kind: Collective, volume: f64, group: &CommGroup) -> f64 {
    if group.size <= 1 {
        return 0.0;
    }
    let g = group.size as f64;
    let frac = (g - 1.0) / g;
    let ring = (g - 1.0) * group.latency + frac * volume / group.bandwidth;
    match kind {
        Collective::Allgather | Collective::Reducescatter => ring,
        Collective::Alltoall => group.latency + frac * volume / group.bandwidth,
        Collective::Allreduce => 2.0 * ring,
        Collective::P2p => group.latency + volume / group.bandwidth,
    }
}

/// Roofline time: the slower of the compute and HBM traffic terms.
pub fn kernel_time(flops: f64, bytes_moved: f64, hw: &HardwareDescription, efficiency: f64) -> f64 {
    let compute = if flops > 0.0 {
        flops / (hw.peak_flops_per_device * efficiency)
    } else {
        0.0
    };
    let memory = bytes_moved / hw.hbm_bandwidth;
    compute.max(memory)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn sheet() -> HardwareDescription {
        HardwareDescription {
            num_nodes: 8,
            devices_per_node: 8,
            peak_flops_per_device: 4e14,
            matmul_efficiency: 0.5,
            vector_efficiency: 0.3,
            hbm_bytes_per_device: 64e9,
            hbm_bandwidth: 1e12,
            intra_node_bandwidth: 1e11,
            inter_node_bandwidth: 2.5e10,
            link_latency_intra: 1e-5,
            link_latency_inter: 2e-5,
            host_dispatch_time: 1e-6,
            host_to_device_bandwidth: 2.5e10,
        }
    }

    fn group(size: u64) -> CommGroup {
        CommGroup {
            size,
            spans_nodes: false,
            latency: 1e-5,
            bandwidth: 1e11,
        }
    }

    #[test]
    fn latency_only_allgather() {
        let t = collective_time(Collective::Allgather, 0.0, &group(8));
        assert!((t - 7.0e-5).abs() < 1e-15);
    }

    #[test]
    fn allgather_hand_value() {
        let t = collective_time(Collective::Allgather, 1e9, &group(8));
        assert!((t - 8.82e-3).abs() < 1e-12, "{t}");
    }

    #[test]
    fn singleton_group_is_free() {
        for k in [
            Collective::Allgather,
            Collective::Alltoall,
            Collective::Reducescatter,
            Collective::Allreduce,
            Collective::P2p,
        ] {
            assert_eq!(collective_time(k, 1e9, &group(1)), 0.0);
        }
    }

    #[test]
    fn roofline_examples() {
        let mut hw = sheet();
        hw.peak_flops_per_device = 4e14;
        hw.hbm_bandwidth = 1e12;
        assert_eq!(kernel_time(0.0, 0.0, &hw, 0.5), 0.0);
        assert!((kernel_time(2e12, 1e9, &hw, 0.5) - 1e-2).abs() < 1e-15);
        assert!((kernel_time(2e10, 1e9, &hw, 0.5) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(sheet().validate().is_ok());
        let mut hw = sheet();
        hw.matmul_efficiency = 1.5;
        assert!(hw.validate().is_err());
        let mut hw = sheet();
        hw.inter_node_bandwidth = 0.0;
        assert!(hw.validate().is_err());
        assert_eq!(sheet().world_size(), 64);
    }

    #[test]
    fn scaling_shrinks_collectives_uniformly() {
        let hw = sheet();
        let s = hw.scaled(4.0);
        let a = collective_time(Collective::Alltoall, 3e8, &hw.inter_group(4));
        let b = collective_time(Collective::Alltoall, 3e8, &s.inter_group(4));
        assert!((a / b - 4.0).abs() < 1e-12);
    }
}
