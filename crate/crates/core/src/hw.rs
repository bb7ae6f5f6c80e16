//! Per-multiprocessor hardware limits and the occupancy estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardwareDescriptor {
    pub name: String,
    pub multiprocessors: usize,
    pub shared_bytes_per_sm: usize,
    pub max_threads_per_sm: usize,
    pub max_blocks_per_sm: usize,
    pub max_warps_per_sm: usize,
    pub registers_per_sm: usize,
    pub max_threads_per_block: usize,
    pub max_registers_per_thread: usize,
    pub warp_size: usize,
    pub cache_line_bytes: usize,
    /// Alignment of every modeled array base address.
    pub base_alignment: usize,
    /// Warps per block are rounded up to a multiple of this before
    /// registers are charged.
    pub warp_allocation_granularity: usize,
    /// Registers per warp are rounded up to a multiple of this.
    pub register_allocation_unit: usize,
    /// Bytes per lane of one wide load.
    pub wide_transfer_bytes: usize,
}

impl HardwareDescriptor {
    pub fn p100() -> Self {
        HardwareDescriptor {
            name: "p100".into(),
            multiprocessors: 56,
            shared_bytes_per_sm: 64 * 1024,
            max_threads_per_sm: 2048,
            max_blocks_per_sm: 32,
            max_warps_per_sm: 64,
            registers_per_sm: 65536,
            max_threads_per_block: 1024,
            max_registers_per_thread: 255,
            warp_size: 32,
            cache_line_bytes: 32,
            base_alignment: 128,
            warp_allocation_granularity: 2,
            register_allocation_unit: 256,
            wide_transfer_bytes: 16,
        }
    }

    pub fn v100() -> Self {
        HardwareDescriptor {
            name: "v100".into(),
            multiprocessors: 80,
            ..Self::p100()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "p100" => Some(Self::p100()),
            "v100" => Some(Self::v100()),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let hw: HardwareDescriptor = serde_json::from_str(text)?;
        hw.validate()?;
        Ok(hw)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("multiprocessors", self.multiprocessors),
            ("shared_bytes_per_sm", self.shared_bytes_per_sm),
            ("max_threads_per_sm", self.max_threads_per_sm),
            ("max_blocks_per_sm", self.max_blocks_per_sm),
            ("max_warps_per_sm", self.max_warps_per_sm),
            ("registers_per_sm", self.registers_per_sm),
            ("max_threads_per_block", self.max_threads_per_block),
            ("max_registers_per_thread", self.max_registers_per_thread),
            ("warp_size", self.warp_size),
            ("cache_line_bytes", self.cache_line_bytes),
            ("base_alignment", self.base_alignment),
            (
                "warp_allocation_granularity",
                self.warp_allocation_granularity,
            ),
            ("register_allocation_unit", self.register_allocation_unit),
            ("wide_transfer_bytes", self.wide_transfer_bytes),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(Error::validation(format!(
                "hardware field `{name}` must be positive"
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occupancy {
    pub blocks_per_sm: usize,
    /// Resident threads (whole warps) over the thread limit.
    pub fraction: f64,
    /// Which limit bound the block count.
    pub limited_by: String,
    /// Set when a single block already exceeds a limit.
    pub fault: Option<String>,
}

/// Resident blocks per multiprocessor for blocks of `threads` threads using
/// `shared_bytes` of shared storage and `regs` registers per thread.
pub fn estimate_occupancy(
    threads: usize,
    shared_bytes: usize,
    regs: usize,
    hw: &HardwareDescriptor,
) -> Occupancy {
    let zero = |why: String| Occupancy {
        blocks_per_sm: 0,
        fraction: 0.0,
        limited_by: "fault".into(),
        fault: Some(why),
    };
    if threads == 0 {
        return zero("block has no threads".into());
    }
    if threads > hw.max_threads_per_block {
        return zero(format!(
            "{threads} threads exceed the block limit {}",
            hw.max_threads_per_block
        ));
    }
    if regs > hw.max_registers_per_thread {
        return zero(format!(
            "{regs} registers per thread exceed the limit {}",
            hw.max_registers_per_thread
        ));
    }
    if shared_bytes > hw.shared_bytes_per_sm {
        return zero(format!(
            "{shared_bytes} bytes of shared storage exceed the limit {}",
            hw.shared_bytes_per_sm
        ));
    }
    let warps = threads.div_ceil(hw.warp_size);
    let alloc_warps =
        warps.div_ceil(hw.warp_allocation_granularity) * hw.warp_allocation_granularity;
    let regs_per_warp =
        (regs * hw.warp_size).div_ceil(hw.register_allocation_unit) * hw.register_allocation_unit;
    let regs_per_block = alloc_warps * regs_per_warp;
    if regs_per_block > hw.registers_per_sm {
        return zero(format!(
            "{regs_per_block} registers per block exceed the limit {}",
            hw.registers_per_sm
        ));
    }
    let mut limits = vec![
        ("blocks", hw.max_blocks_per_sm),
        ("threads", hw.max_threads_per_sm / threads),
        ("warps", hw.max_warps_per_sm / warps),
    ];
    if let Some(b) = hw.registers_per_sm.checked_div(regs_per_block) {
        limits.push(("registers", b));
    }
    if let Some(b) = hw.shared_bytes_per_sm.checked_div(shared_bytes) {
        limits.push(("shared", b));
    }
    let (limited_by, blocks) = limits
        .into_iter()
        .min_by_key(|&(_, b)| b)
        .expect("non-empty limits");
    let resident = blocks * warps * hw.warp_size;
    Occupancy {
        blocks_per_sm: blocks,
        fraction: resident.min(hw.max_threads_per_sm) as f64 / hw.max_threads_per_sm as f64,
        limited_by: limited_by.into(),
        fault: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_bound_two_blocks() {
        let o = estimate_occupancy(320, 0, 96, &HardwareDescriptor::p100());
        assert_eq!(o.blocks_per_sm, 2);
        assert_eq!(o.limited_by, "registers");
        assert!((o.fraction - 640.0 / 2048.0).abs() < 1e-12);
    }

    #[test]
    fn coarser_warp_allocation_leaves_one_block() {
        let hw = HardwareDescriptor {
            warp_allocation_granularity: 4,
            ..HardwareDescriptor::p100()
        };
        let o = estimate_occupancy(320, 0, 96, &hw);
        assert_eq!(o.blocks_per_sm, 1);
        assert!((o.fraction - 0.15625).abs() < 1e-12);
    }

    #[test]
    fn shared_storage_limits_blocks() {
        let o = estimate_occupancy(128, 33 * 1024, 32, &HardwareDescriptor::p100());
        assert_eq!(o.blocks_per_sm, 1);
        assert_eq!(o.limited_by, "shared");
    }

    #[test]
    fn oversized_block_faults() {
        let o = estimate_occupancy(128, 65 * 1024, 32, &HardwareDescriptor::p100());
        assert_eq!(o.blocks_per_sm, 0);
        assert!(o.fault.is_some());
        assert!(estimate_occupancy(2048, 0, 16, &HardwareDescriptor::p100())
            .fault
            .is_some());
    }

    #[test]
    fn json_round_trip() {
        let hw = HardwareDescriptor::v100();
        let text = serde_json::to_string(&hw).unwrap();
        assert_eq!(HardwareDescriptor::from_json(&text).unwrap(), hw);
        assert!(HardwareDescriptor::from_json(
            &text.replace("\"warp_size\":32", "\"warp_size\":0")
        )
        .is_err());
    }
}
