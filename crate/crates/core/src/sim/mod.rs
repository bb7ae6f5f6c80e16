//! Lockstep execution of plans on a modeled device.
//!
//! Every run does three things. A pre-pass checks the plan against the mesh
//! (colouring races, staging coverage, shared capacity) before any value is
//! written. The values are then computed, with elements of one colour (or
//! blocks of one block colour) evaluated on worker threads and merged in a
//! fixed order. Separately, a cost pass replays the schedule warp by warp and
//! counts the 32-byte lines each warp-wide access touches.
//!
//! The executor takes the mesh in its original numbering, renumbers it as the
//! plan prescribes, runs, and returns the result in the original numbering.

mod check;
mod cost;
mod lines;
mod values;

use serde::{Deserialize, Serialize};

pub use lines::{count_cache_lines, TraceEntry};

use crate::error::{Error, Result};
use crate::hw::{estimate_occupancy, HardwareDescriptor};
use crate::kernel::{Access, KernelSpec};
use crate::mesh::{index_of, ElemType, Layout, Mesh, Values};
use crate::perm::Permutation;
use crate::plan::{mapping_hash, GlobalPlan, HierarchicalPlan, Plan, PlanCommon};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimOptions {
    /// Model 16-byte staging loads where the layout allows them.
    pub wide: bool,
    /// Also run the serial oracle and compare.
    pub verify: bool,
    /// Record every warp access (memory heavy; meant for small meshes).
    pub trace: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            wide: false,
            verify: true,
            trace: false,
        }
    }
}

/// Per-block record of a hierarchical run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockRecord {
    pub threads: usize,
    pub thread_colours: usize,
    pub syncs: usize,
    pub shared_bytes: usize,
    pub cache_lines: usize,
}

/// Counters of one kernel invocation. Field order matches the CSV columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub kernel: String,
    pub strategy: String,
    pub reorder: String,
    pub layout: String,
    /// `-` for global plans.
    pub staging: String,
    pub precision: String,
    pub elements: usize,
    /// Launched blocks (hierarchical: plan blocks; global: per-colour chunks).
    pub blocks: usize,
    /// Block colours, or kernel launches for a global plan.
    pub block_colours: usize,
    /// 0 for global plans.
    pub thread_colours_max: usize,
    pub thread_colours_mean: f64,
    pub read_transactions: u64,
    pub write_transactions: u64,
    pub reuse_factor: f64,
    /// Mean distinct lines of indirect data touched per block.
    pub cache_lines_per_block: f64,
    pub sync_count: usize,
    /// Mean active fraction of working lanes over the issued colour steps.
    pub warp_efficiency: f64,
    /// Warp load instructions spent staging.
    pub staging_instructions: u64,
    pub shared_bytes_max: usize,
    pub occupancy: f64,
    pub blocks_per_sm: usize,
    pub occupancy_limited_by: String,
    /// Useful bytes moved over bytes transferred in whole lines.
    pub bandwidth_proxy: f64,
    /// Estimated transactions with unordered atomic increments instead.
    pub atomics_transactions: u64,
    /// Estimated transactions with a per-element temporary array and a
    /// gather pass instead.
    pub temp_array_transactions: u64,
    #[serde(skip)]
    pub per_block: Vec<BlockRecord>,
}

pub const CSV_MAGIC: &str = "# meshplan-metrics v1";

pub const CSV_COLUMNS: [&str; 26] = [
    "kernel",
    "strategy",
    "reorder",
    "layout",
    "staging",
    "precision",
    "elements",
    "blocks",
    "block_colours",
    "thread_colours_max",
    "thread_colours_mean",
    "read_transactions",
    "write_transactions",
    "reuse_factor",
    "cache_lines_per_block",
    "sync_count",
    "warp_efficiency",
    "staging_instructions",
    "shared_bytes_max",
    "occupancy",
    "blocks_per_sm",
    "occupancy_limited_by",
    "bandwidth_proxy",
    "atomics_transactions",
    "temp_array_transactions",
    "total_transactions",
];

impl MetricsReport {
    pub fn total_transactions(&self) -> u64 {
        self.read_transactions + self.write_transactions
    }

    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    /// One CSV row; reals are printed with six decimals.
    pub fn csv_row(&self) -> String {
        let f = |v: f64| format!("{v:.6}");
        [
            self.kernel.clone(),
            self.strategy.clone(),
            self.reorder.clone(),
            self.layout.clone(),
            self.staging.clone(),
            self.precision.clone(),
            self.elements.to_string(),
            self.blocks.to_string(),
            self.block_colours.to_string(),
            self.thread_colours_max.to_string(),
            f(self.thread_colours_mean),
            self.read_transactions.to_string(),
            self.write_transactions.to_string(),
            f(self.reuse_factor),
            f(self.cache_lines_per_block),
            self.sync_count.to_string(),
            f(self.warp_efficiency),
            self.staging_instructions.to_string(),
            self.shared_bytes_max.to_string(),
            f(self.occupancy),
            self.blocks_per_sm.to_string(),
            self.occupancy_limited_by.clone(),
            f(self.bandwidth_proxy),
            self.atomics_transactions.to_string(),
            self.temp_array_transactions.to_string(),
            self.total_transactions().to_string(),
        ]
        .join(",")
    }

    /// Metrics file: magic line, header, one row.
    pub fn to_csv(&self) -> String {
        format!("{CSV_MAGIC}\n{}\n{}\n", Self::csv_header(), self.csv_row())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize") + "\n"
    }
}

/// Outcome of comparing a run against the serial oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub passed: bool,
    pub compared_values: usize,
    pub mismatches: usize,
    /// Largest `|a - b| / max(|a|, |b|, 1)` seen.
    pub max_relative_error: f64,
    /// First mismatching array, if any.
    pub first_mismatch: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Execution {
    /// Output mesh in the original numbering and layouts.
    pub mesh: Mesh,
    pub metrics: MetricsReport,
    pub verification: Option<Verification>,
    pub trace: Option<Vec<TraceEntry>>,
}

/// Relative tolerance used when comparing floating-point outputs.
pub fn tolerance(ty: ElemType) -> f64 {
    match ty {
        ElemType::F64 => 1e-12,
        ElemType::F32 => 1e-5,
        ElemType::I64 | ElemType::I32 => 0.0,
    }
}

/// Compares two value vectors of the same type: integers must match exactly,
/// floats within [`tolerance`] relative to `max(|a|, |b|, 1)`.
pub fn compare_values(a: &Values, b: &Values) -> (usize, f64) {
    fn go<T: Copy>(x: &[T], y: &[T], f: impl Fn(T) -> f64, tol: f64) -> (usize, f64) {
        let mut bad = 0;
        let mut worst = 0.0f64;
        for (&p, &q) in x.iter().zip(y) {
            let (p, q) = (f(p), f(q));
            let rel = if p == q {
                0.0
            } else {
                (p - q).abs() / p.abs().max(q.abs()).max(1.0)
            };
            if rel.is_nan() || rel > tol {
                bad += 1;
            }
            if rel.is_nan() {
                worst = f64::INFINITY;
            } else {
                worst = worst.max(rel);
            }
        }
        (bad + x.len().abs_diff(y.len()), worst)
    }
    let tol = tolerance(a.elem_type());
    match (a, b) {
        (Values::F64(x), Values::F64(y)) => go(x, y, |v| v, tol),
        (Values::F32(x), Values::F32(y)) => go(x, y, |v| v as f64, tol),
        (Values::I64(x), Values::I64(y)) => {
            let bad = x.iter().zip(y).filter(|(p, q)| p != q).count();
            (
                bad + x.len().abs_diff(y.len()),
                if bad > 0 { f64::INFINITY } else { 0.0 },
            )
        }
        (Values::I32(x), Values::I32(y)) => {
            let bad = x.iter().zip(y).filter(|(p, q)| p != q).count();
            (
                bad + x.len().abs_diff(y.len()),
                if bad > 0 { f64::INFINITY } else { 0.0 },
            )
        }
        _ => (a.len().max(b.len()), f64::INFINITY),
    }
}

/// Compares the arrays `kernel` modifies in two meshes of the same shape.
pub fn verify_outputs(result: &Mesh, oracle: &Mesh, kernel: &KernelSpec) -> Verification {
    let mut v = Verification {
        passed: true,
        compared_values: 0,
        mismatches: 0,
        max_relative_error: 0.0,
        first_mismatch: None,
    };
    for u in kernel.sig.arrays() {
        if u.access == Access::Read {
            continue;
        }
        let (Some(a), Some(b)) = (result.array(&u.array), oracle.array(&u.array)) else {
            v.passed = false;
            v.first_mismatch.get_or_insert(u.array.clone());
            continue;
        };
        let (bad, worst) = if a.layout == b.layout {
            compare_values(&a.values, &b.values)
        } else {
            compare_values(
                &crate::mesh::transform_layout(a, b.layout).values,
                &b.values,
            )
        };
        v.compared_values += a.values.len();
        v.mismatches += bad;
        v.max_relative_error = v.max_relative_error.max(worst);
        if bad > 0 {
            v.passed = false;
            v.first_mismatch.get_or_insert(u.array.clone());
        }
    }
    v
}

/// Kernel array as seen by the executor.
#[derive(Clone, Debug)]
pub(crate) struct ArrayInfo {
    pub name: String,
    pub indirect: bool,
    pub access: Access,
    pub comps: usize,
    pub size: usize,
    /// Layout while executing.
    pub layout: Layout,
    /// Layout in the caller's mesh.
    pub orig_layout: Layout,
    pub slots: Vec<usize>,
}

/// Kernel argument resolved against [`ArrayInfo`].
#[derive(Clone, Debug)]
pub(crate) struct ArgInfo {
    pub array: usize,
    pub slot: Option<usize>,
    pub access: Access,
    pub comps: usize,
    pub write: bool,
    pub offset: usize,
}

/// Renumbered mapping and array metadata shared by every pass.
#[derive(Clone, Debug)]
pub(crate) struct Working {
    pub n: usize,
    pub to_size: usize,
    pub arity: usize,
    /// Row-major, element and point numbering of the run.
    pub table: Vec<u32>,
    pub arrays: Vec<ArrayInfo>,
    pub args: Vec<ArgInfo>,
    /// Buffer offset of every argument, in signature order.
    pub offsets: Vec<usize>,
    pub buffer_len: usize,
    pub precision: ElemType,
    pub es: usize,
    pub element_perm: Permutation,
    pub point_perm: Permutation,
}

impl Working {
    /// `indirect_layout = None` keeps every array in the caller's layout;
    /// otherwise direct arrays run as SoA and indirect arrays in the given
    /// layout.
    fn new(
        mesh: &Mesh,
        kernel: &KernelSpec,
        element_perm: Permutation,
        point_perm: Permutation,
        indirect_layout: Option<Layout>,
    ) -> Result<Working> {
        let precision = crate::plan::kernel_precision(mesh, kernel)?;
        let m = mesh.mapping(&kernel.sig.mapping).ok_or_else(|| {
            Error::validation(format!("unknown mapping `{}`", kernel.sig.mapping))
        })?;
        if m.from.id == m.to.id {
            return Err(Error::validation(format!(
                "mapping `{}` must connect two distinct sets",
                m.name
            )));
        }
        let (n, arity) = (m.from.size, m.arity);
        if element_perm.len() != n || point_perm.len() != m.to.size {
            return Err(Error::validation("plan permutations do not fit the mesh"));
        }
        let mut table = vec![0u32; m.table.len()];
        for new in 0..n {
            let old = element_perm.old_of(new);
            for s in 0..arity {
                table[new * arity + s] = point_perm.new_of(m.get(old, s)) as u32;
            }
        }
        let uses = kernel.sig.arrays();
        let arrays: Vec<ArrayInfo> = uses
            .iter()
            .map(|u| {
                let d = mesh.array(&u.array).expect("validated");
                let layout = match indirect_layout {
                    None => d.layout,
                    Some(l) if u.indirect => l,
                    Some(_) => Layout::Soa,
                };
                ArrayInfo {
                    name: u.array.clone(),
                    indirect: u.indirect,
                    access: u.access,
                    comps: u.components,
                    size: d.set.size,
                    layout,
                    orig_layout: d.layout,
                    slots: u.slots.clone(),
                }
            })
            .collect();
        let (offsets, buffer_len) = kernel.sig.buffer_offsets();
        let args = kernel
            .sig
            .args
            .iter()
            .zip(&offsets)
            .map(|(a, &offset)| ArgInfo {
                array: uses.iter().position(|u| u.array == a.array).unwrap(),
                slot: a.slot(),
                access: a.access,
                comps: a.components,
                write: a.access != Access::Read,
                offset,
            })
            .collect();
        Ok(Working {
            n,
            to_size: m.to.size,
            arity,
            table,
            arrays,
            args,
            offsets,
            buffer_len,
            precision,
            es: precision.size_bytes(),
            element_perm,
            point_perm,
        })
    }

    #[inline]
    pub fn point(&self, e: usize, s: usize) -> usize {
        self.table[e * self.arity + s] as usize
    }

    /// Set index an argument touches for element `e`.
    #[inline]
    pub fn target(&self, arg: usize, e: usize) -> usize {
        match self.args[arg].slot {
            Some(s) => self.point(e, s),
            None => e,
        }
    }

    #[inline]
    pub fn index(&self, a: usize, i: usize, c: usize) -> usize {
        let arr = &self.arrays[a];
        index_of(arr.layout, arr.size, arr.comps, i, c)
    }

    pub fn orig_elem(&self, e: usize) -> usize {
        self.element_perm.old_of(e)
    }

    pub fn orig_point(&self, p: usize) -> usize {
        self.point_perm.old_of(p)
    }

    fn perm_for(&self, a: usize) -> &Permutation {
        if self.arrays[a].indirect {
            &self.point_perm
        } else {
            &self.element_perm
        }
    }

    /// Kernel arrays of `mesh` renumbered and laid out for the run.
    fn load(&self, mesh: &Mesh) -> Vec<Values> {
        (0..self.arrays.len())
            .map(|a| {
                let arr = &self.arrays[a];
                let d = mesh.array(&arr.name).expect("validated");
                let perm = self.perm_for(a);
                d.values.scatter(|k| {
                    let (i, c) = match arr.orig_layout {
                        Layout::Aos => (k / arr.comps, k % arr.comps),
                        Layout::Soa => (k % arr.size, k / arr.size),
                    };
                    self.index(a, perm.new_of(i), c)
                })
            })
            .collect()
    }

    /// Writes modified arrays back into `mesh` in its own numbering.
    fn store(&self, mesh: &mut Mesh, data: &[Values]) {
        for (a, arr) in self.arrays.iter().enumerate() {
            if arr.access == Access::Read {
                continue;
            }
            let perm = self.perm_for(a);
            let restored = data[a].scatter(|k| {
                let (i, c) = match arr.layout {
                    Layout::Aos => (k / arr.comps, k % arr.comps),
                    Layout::Soa => (k % arr.size, k / arr.size),
                };
                index_of(arr.orig_layout, arr.size, arr.comps, perm.old_of(i), c)
            });
            mesh.array_mut(&arr.name).expect("validated").values = restored;
        }
    }

    /// Bytes the kernel needs to move at least once: every array once,
    /// modified arrays twice.
    fn useful_bytes(&self) -> u64 {
        self.arrays
            .iter()
            .map(|a| {
                let w = if a.access == Access::Inc { 2 } else { 1 };
                (w * a.size * a.comps * self.es) as u64
            })
            .sum()
    }
}

/// Runs elements one at a time in index order, applying each element's
/// increments before the next starts.
pub fn execute_serial(mesh: &Mesh, kernel: &KernelSpec) -> Result<Mesh> {
    crate::mesh::validate_mesh(mesh).into_result()?;
    let m = mesh
        .mapping(&kernel.sig.mapping)
        .ok_or_else(|| Error::validation(format!("unknown mapping `{}`", kernel.sig.mapping)))?;
    let w = Working::new(
        mesh,
        kernel,
        Permutation::identity(m.from.size),
        Permutation::identity(m.to.size),
        None,
    )?;
    let mut data = w.load(mesh);
    values::serial(&w, kernel, &mut data)?;
    let mut out = mesh.clone();
    w.store(&mut out, &data);
    Ok(out)
}

fn check_plan(mesh: &Mesh, kernel: &KernelSpec, common: &PlanCommon) -> Result<()> {
    crate::mesh::validate_mesh(mesh).into_result()?;
    if common.kernel != kernel.name() || common.mapping != kernel.sig.mapping {
        return Err(Error::validation(format!(
            "plan was built for kernel `{}` over `{}`, not `{}` over `{}`",
            common.kernel,
            common.mapping,
            kernel.name(),
            kernel.sig.mapping
        )));
    }
    let m = mesh
        .mapping(&common.mapping)
        .ok_or_else(|| Error::validation(format!("unknown mapping `{}`", common.mapping)))?;
    if m.arity != common.arity
        || m.from.size != common.from_size
        || m.to.size != common.to_size
        || mapping_hash(m) != common.mapping_hash
    {
        return Err(Error::validation(format!(
            "plan does not match mapping `{}` of this mesh",
            common.mapping
        )));
    }
    let precision = crate::plan::kernel_precision(mesh, kernel)?;
    if precision != common.precision {
        return Err(Error::validation(format!(
            "plan was built for {} data, mesh holds {}",
            common.precision.name(),
            precision.name()
        )));
    }
    Ok(())
}

fn working_for(mesh: &Mesh, kernel: &KernelSpec, common: &PlanCommon) -> Result<Working> {
    check_plan(mesh, kernel, common)?;
    Working::new(
        mesh,
        kernel,
        common.element_perm.clone(),
        common.point_perm.clone(),
        Some(common.layout),
    )
}

fn finish(
    mesh: &Mesh,
    kernel: &KernelSpec,
    w: &Working,
    data: &[Values],
    mut metrics: MetricsReport,
    trace: Option<Vec<TraceEntry>>,
    hw: &HardwareDescriptor,
    opts: &SimOptions,
) -> Result<Execution> {
    let mut out = mesh.clone();
    w.store(&mut out, data);
    let verification = if opts.verify {
        Some(verify_outputs(&out, &execute_serial(mesh, kernel)?, kernel))
    } else {
        None
    };
    let moved = metrics.total_transactions() * hw.cache_line_bytes as u64;
    metrics.bandwidth_proxy = if moved == 0 {
        0.0
    } else {
        w.useful_bytes() as f64 / moved as f64
    };
    Ok(Execution {
        mesh: out,
        metrics,
        verification,
        trace,
    })
}

fn base_metrics(kernel: &KernelSpec, common: &PlanCommon, strategy: &str) -> MetricsReport {
    MetricsReport {
        kernel: kernel.name().to_string(),
        strategy: strategy.to_string(),
        reorder: common.reorder.name(),
        layout: common.layout.name().to_string(),
        staging: "-".into(),
        precision: common.precision.name().to_string(),
        elements: common.from_size,
        blocks: 0,
        block_colours: 0,
        thread_colours_max: 0,
        thread_colours_mean: 0.0,
        read_transactions: 0,
        write_transactions: 0,
        reuse_factor: 1.0,
        cache_lines_per_block: 0.0,
        sync_count: 0,
        warp_efficiency: 1.0,
        staging_instructions: 0,
        shared_bytes_max: 0,
        occupancy: 0.0,
        blocks_per_sm: 0,
        occupancy_limited_by: String::new(),
        bandwidth_proxy: 0.0,
        atomics_transactions: 0,
        temp_array_transactions: 0,
        per_block: Vec::new(),
    }
}

fn set_occupancy(
    m: &mut MetricsReport,
    threads: usize,
    shared: usize,
    kernel: &KernelSpec,
    hw: &HardwareDescriptor,
) {
    let o = estimate_occupancy(threads, shared, kernel.registers() as usize, hw);
    m.occupancy = o.fraction;
    m.blocks_per_sm = o.blocks_per_sm;
    m.occupancy_limited_by = o.limited_by;
}

/// Runs a global-colouring plan: one launch per colour.
pub fn execute_global(
    mesh: &Mesh,
    plan: &GlobalPlan,
    kernel: &KernelSpec,
    hw: &HardwareDescriptor,
    opts: &SimOptions,
) -> Result<Execution> {
    hw.validate()?;
    Plan::Global(plan.clone()).check_shape()?;
    let w = working_for(mesh, kernel, &plan.common)?;
    check::global(&w, plan)?;
    let mut data = w.load(mesh);
    values::global(&w, kernel, plan, &mut data)?;

    let c = cost::global(&w, plan, hw, opts.trace);
    let mut metrics = base_metrics(kernel, &plan.common, "global");
    metrics.blocks = c.blocks;
    metrics.block_colours = plan.num_colours();
    metrics.read_transactions = c.tally.reads;
    metrics.write_transactions = c.tally.writes;
    metrics.reuse_factor = c.reuse;
    metrics.cache_lines_per_block = c.lines_per_block;
    set_occupancy(&mut metrics, plan.common.block_size, 0, kernel, hw);
    let (atomics, temp) = cost::baselines(&w, plan.common.block_size, hw);
    metrics.atomics_transactions = atomics;
    metrics.temp_array_transactions = temp;
    finish(mesh, kernel, &w, &data, metrics, c.tally.trace, hw, opts)
}

/// Runs a hierarchical plan: blocks of one block colour side by side, each
/// staging its points, looping over its thread colours and writing back.
pub fn execute_hierarchical(
    mesh: &Mesh,
    plan: &HierarchicalPlan,
    kernel: &KernelSpec,
    hw: &HardwareDescriptor,
    opts: &SimOptions,
) -> Result<Execution> {
    hw.validate()?;
    Plan::Hierarchical(plan.clone()).check_shape()?;
    let w = working_for(mesh, kernel, &plan.common)?;
    let layout = check::hierarchical(&w, plan, hw)?;
    let mut data = w.load(mesh);
    values::hierarchical(&w, kernel, plan, &layout, &mut data)?;

    let c = cost::hierarchical(&w, plan, &layout, hw, opts.wide, opts.trace);
    let mut metrics = base_metrics(kernel, &plan.common, "hier");
    metrics.staging = plan.staging.name().to_string();
    metrics.blocks = plan.num_blocks();
    metrics.block_colours = plan.num_block_colours();
    metrics.thread_colours_max = plan.num_thread_colours.iter().copied().max().unwrap_or(0);
    metrics.thread_colours_mean = mean(plan.num_thread_colours.iter().map(|&c| c as f64));
    metrics.read_transactions = c.tally.reads;
    metrics.write_transactions = c.tally.writes;
    metrics.reuse_factor = plan.reuse_factor();
    metrics.cache_lines_per_block = mean(c.block_lines.iter().map(|&l| l as f64));
    metrics.warp_efficiency = c.warp_efficiency;
    metrics.staging_instructions = c.staging_instructions;
    metrics.shared_bytes_max = plan.max_shared_bytes();
    metrics.per_block = (0..plan.num_blocks())
        .map(|b| BlockRecord {
            threads: plan.block_range(b).len(),
            thread_colours: plan.num_thread_colours[b],
            syncs: c.syncs[b],
            shared_bytes: plan.shared_bytes[b],
            cache_lines: c.block_lines[b],
        })
        .collect();
    metrics.sync_count = c.syncs.iter().sum();
    set_occupancy(
        &mut metrics,
        plan.common.block_size,
        plan.max_shared_bytes(),
        kernel,
        hw,
    );
    let (atomics, temp) = cost::baselines(&w, plan.common.block_size, hw);
    metrics.atomics_transactions = atomics;
    metrics.temp_array_transactions = temp;
    finish(mesh, kernel, &w, &data, metrics, c.tally.trace, hw, opts)
}

pub fn execute(
    mesh: &Mesh,
    plan: &Plan,
    kernel: &KernelSpec,
    hw: &HardwareDescriptor,
    opts: &SimOptions,
) -> Result<Execution> {
    match plan {
        Plan::Global(p) => execute_global(mesh, p, kernel, hw, opts),
        Plan::Hierarchical(p) => execute_hierarchical(mesh, p, kernel, hw, opts),
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = it.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
