//! Execution plans: everything needed to run one kernel loop in parallel.
//!
//! A plan stores permutations of the iteration set and of the indirectly
//! accessed set, colours and (for hierarchical plans) block structure and
//! staging lists, all in the reordered numbering. It does not hold the mesh;
//! the executor applies the permutations to the original mesh itself.
//!
//! File format: the line `meshplan-plan 1` followed by one JSON object. The
//! JSON fields are the ones of [`Plan`], tagged by `"strategy"`:
//!
//! * `common.element_perm` / `common.point_perm`: forward arrays,
//!   `perm[old] = new`.
//! * `colour_offsets` (global): colour `c` covers elements
//!   `colour_offsets[c]..colour_offsets[c + 1]`.
//! * `block_offsets` (hierarchical): block `b` covers elements
//!   `block_offsets[b]..block_offsets[b + 1]`; `block_colour_offsets` does the
//!   same for block colours over blocks.
//! * `thread_colours`: per element, colour inside its block.
//! * `stage_offsets` / `stage_points`: per block, the ascending list of
//!   staged points.
//! * `local_map`: slot-major, `local_map[slot * n + e]` is the position of
//!   element `e`'s point in its block's staging list (`u32::MAX` for slots
//!   that are not staged).

mod build;

pub(crate) use build::kernel_precision;
pub use build::{build_global_plan, build_hierarchical_plan, build_plan};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{ElemType, Layout, Mapping};
use crate::partition::PartitionConfig;
use crate::perm::Permutation;

pub const MAGIC: &str = "meshplan-plan 1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Global,
    Hierarchical,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Global => "global",
            Strategy::Hierarchical => "hier",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        match s {
            "global" => Some(Strategy::Global),
            "hier" | "hierarchical" => Some(Strategy::Hierarchical),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReorderMode {
    None,
    Gps,
    Partition,
    /// Handcrafted boxes of `[bx, by, bz]` cells on a generated hex mesh.
    Structured([usize; 3]),
}

impl ReorderMode {
    pub fn name(self) -> String {
        match self {
            ReorderMode::None => "none".into(),
            ReorderMode::Gps => "gps".into(),
            ReorderMode::Partition => "partition".into(),
            ReorderMode::Structured([x, y, z]) => format!("structured:{x},{y},{z}"),
        }
    }

    pub fn parse(s: &str) -> Option<ReorderMode> {
        match s {
            "none" => Some(ReorderMode::None),
            "gps" => Some(ReorderMode::Gps),
            "partition" => Some(ReorderMode::Partition),
            _ => {
                let dims: Vec<usize> = s
                    .strip_prefix("structured:")?
                    .split(',')
                    .map(|t| t.trim().parse().ok())
                    .collect::<Option<_>>()?;
                Some(ReorderMode::Structured(dims.try_into().ok()?))
            }
        }
    }
}

/// Which indirect arrays are copied into shared storage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StagingPolicy {
    /// Every indirectly accessed array.
    #[default]
    All,
    /// Only incremented arrays; reads go to global memory.
    IncrementOnly,
}

impl StagingPolicy {
    pub fn name(self) -> &'static str {
        match self {
            StagingPolicy::All => "all",
            StagingPolicy::IncrementOnly => "increment",
        }
    }

    pub fn parse(s: &str) -> Option<StagingPolicy> {
        match s {
            "all" => Some(StagingPolicy::All),
            "increment" | "increment-only" => Some(StagingPolicy::IncrementOnly),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub strategy: Strategy,
    pub reorder: ReorderMode,
    /// Block size, tolerance and partitioner knobs. The block size is also
    /// the thread count of every launched block.
    pub partition: PartitionConfig,
    /// Layout of indirectly accessed arrays; direct arrays are always SoA.
    pub layout: Layout,
    pub staging: StagingPolicy,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            strategy: Strategy::Hierarchical,
            reorder: ReorderMode::None,
            partition: PartitionConfig::default(),
            layout: Layout::Aos,
            staging: StagingPolicy::All,
        }
    }
}

/// Fields shared by both plan kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanCommon {
    pub kernel: String,
    pub precision: ElemType,
    pub mapping: String,
    pub arity: usize,
    pub from_size: usize,
    pub to_size: usize,
    /// FNV-1a hash of the original mapping table.
    pub mapping_hash: u64,
    pub reorder: ReorderMode,
    pub layout: Layout,
    pub block_size: usize,
    pub element_perm: Permutation,
    pub point_perm: Permutation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalPlan {
    pub common: PlanCommon,
    pub colour_offsets: Vec<usize>,
}

impl GlobalPlan {
    pub fn num_colours(&self) -> usize {
        self.colour_offsets.len() - 1
    }

    pub fn colour_range(&self, c: usize) -> std::ops::Range<usize> {
        self.colour_offsets[c]..self.colour_offsets[c + 1]
    }

    /// Colour of every element in the reordered numbering.
    pub fn colours(&self) -> Vec<usize> {
        let mut out = vec![0; self.common.from_size];
        for c in 0..self.num_colours() {
            out[self.colour_range(c)].fill(c);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalPlan {
    pub common: PlanCommon,
    pub staging: StagingPolicy,
    pub over_tolerance: bool,
    pub block_offsets: Vec<usize>,
    pub block_colours: Vec<usize>,
    pub block_colour_offsets: Vec<usize>,
    pub thread_colours: Vec<usize>,
    pub num_thread_colours: Vec<usize>,
    /// Arrays held in shared storage, in signature order.
    pub staged_arrays: Vec<String>,
    pub staged_slots: Vec<bool>,
    pub stage_offsets: Vec<usize>,
    pub stage_points: Vec<u32>,
    pub local_map: Vec<u32>,
    pub shared_bytes: Vec<usize>,
}

impl HierarchicalPlan {
    pub fn num_blocks(&self) -> usize {
        self.block_offsets.len() - 1
    }

    pub fn block_range(&self, b: usize) -> std::ops::Range<usize> {
        self.block_offsets[b]..self.block_offsets[b + 1]
    }

    pub fn stage_list(&self, b: usize) -> &[u32] {
        &self.stage_points[self.stage_offsets[b]..self.stage_offsets[b + 1]]
    }

    pub fn num_block_colours(&self) -> usize {
        self.block_colour_offsets.len() - 1
    }

    pub fn local(&self, slot: usize, e: usize) -> u32 {
        self.local_map[slot * self.common.from_size + e]
    }

    /// Indirect references through staged slots per distinct staged point,
    /// summed over blocks; 1 when nothing is staged.
    pub fn reuse_factor(&self) -> f64 {
        let slots = self.staged_slots.iter().filter(|&&s| s).count();
        let refs = self.common.from_size * slots;
        let points = self.stage_points.len();
        if points == 0 {
            1.0
        } else {
            refs as f64 / points as f64
        }
    }

    pub fn max_shared_bytes(&self) -> usize {
        self.shared_bytes.iter().copied().max().unwrap_or(0)
    }
}

/// Free-function form of [`HierarchicalPlan::reuse_factor`].
pub fn reuse_factor(plan: &HierarchicalPlan) -> f64 {
    plan.reuse_factor()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum Plan {
    Global(GlobalPlan),
    Hierarchical(HierarchicalPlan),
}

impl Plan {
    pub fn common(&self) -> &PlanCommon {
        match self {
            Plan::Global(p) => &p.common,
            Plan::Hierarchical(p) => &p.common,
        }
    }

    pub fn strategy(&self) -> Strategy {
        match self {
            Plan::Global(_) => Strategy::Global,
            Plan::Hierarchical(_) => Strategy::Hierarchical,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(MAGIC);
        out.push('\n');
        out.push_str(&serde_json::to_string(self).expect("plans serialize"));
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Plan> {
        let (head, body) = text.split_once('\n').unwrap_or((text, ""));
        if head.trim() != MAGIC {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected `{MAGIC}`"),
            });
        }
        let plan: Plan = serde_json::from_str(body).map_err(|e| Error::Parse {
            line: e.line() + 1,
            message: e.to_string(),
        })?;
        plan.check_shape()?;
        Ok(plan)
    }

    /// Structural consistency of the stored arrays (not of the colouring,
    /// which the executor checks against the mesh).
    pub fn check_shape(&self) -> Result<()> {
        let c = self.common();
        let bad = |what: &str| Err(Error::validation(format!("malformed plan: {what}")));
        if c.element_perm.len() != c.from_size || c.point_perm.len() != c.to_size {
            return bad("permutation sizes");
        }
        if c.block_size == 0 {
            return bad("zero block size");
        }
        let offsets_ok = |o: &[usize], end: usize| {
            o.first() == Some(&0) && o.last() == Some(&end) && o.windows(2).all(|w| w[0] <= w[1])
        };
        match self {
            Plan::Global(p) => {
                if !offsets_ok(&p.colour_offsets, c.from_size) {
                    return bad("colour offsets");
                }
            }
            Plan::Hierarchical(p) => {
                let nb = p.block_offsets.len().saturating_sub(1);
                if !offsets_ok(&p.block_offsets, c.from_size)
                    || p.block_offsets.windows(2).any(|w| w[0] == w[1])
                {
                    return bad("block offsets");
                }
                if p.block_colours.len() != nb
                    || p.num_thread_colours.len() != nb
                    || p.shared_bytes.len() != nb
                    || !offsets_ok(&p.block_colour_offsets, nb)
                    || !offsets_ok(&p.stage_offsets, p.stage_points.len())
                    || p.stage_offsets.len() != nb + 1
                {
                    return bad("per-block arrays");
                }
                if p.thread_colours.len() != c.from_size
                    || p.local_map.len() != c.arity * c.from_size
                    || p.staged_slots.len() != c.arity
                {
                    return bad("per-element arrays");
                }
                if p.stage_points.iter().any(|&x| x as usize >= c.to_size) {
                    return bad("staged point out of range");
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn mapping_hash(m: &Mapping) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for v in std::iter::once(m.arity as u32).chain(m.table.iter().copied()) {
        for b in v.to_le_bytes() {
            h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}
