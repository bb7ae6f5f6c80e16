//! Warp-by-warp replay of a schedule, counting lines per warp access.
//!
//! One access is one argument of one warp: the lanes' addresses over all
//! components of that argument. Nothing is cached between accesses.

use rayon::prelude::*;

use super::check::HierLayout;
use super::lines::{AddressSpace, Tally};
use super::Working;
use crate::hw::HardwareDescriptor;
use crate::kernel::Access;
use crate::mesh::Layout;
use crate::plan::{GlobalPlan, HierarchicalPlan};

const WARP: usize = 32;

/// Accumulates one block's accesses and the lines of indirect data it
/// touches.
struct Recorder<'a> {
    w: &'a Working,
    space: &'a AddressSpace,
    tally: Tally,
    indirect_lines: Vec<u64>,
    addrs: Vec<u64>,
}

impl<'a> Recorder<'a> {
    fn new(w: &'a Working, space: &'a AddressSpace, trace: bool) -> Self {
        Recorder {
            w,
            space,
            tally: Tally::new(trace),
            indirect_lines: Vec::new(),
            addrs: Vec::new(),
        }
    }

    fn flush(&mut self, write: bool, width: u64, indirect: bool) {
        if indirect {
            self.indirect_lines
                .extend(self.addrs.iter().map(|&a| a / self.space.line));
        }
        self.tally
            .access(write, width, &self.addrs, self.space.line);
        self.addrs.clear();
    }

    /// u32 entries read by the lanes.
    fn index_read(&mut self, addrs: impl Iterator<Item = u64>) {
        self.addrs.extend(addrs);
        self.flush(false, 4, false);
    }

    /// All components of array `a` at set index `idx(lane)` for each lane;
    /// a read, a write, or a read followed by a write.
    fn data(&mut self, a: usize, targets: &[usize], read: bool, write: bool) {
        let (w, space) = (self.w, self.space);
        let comps = w.arrays[a].comps;
        let indirect = w.arrays[a].indirect;
        for pass in [false, true] {
            if (pass && !write) || (!pass && !read) {
                continue;
            }
            for &t in targets {
                self.addrs
                    .extend((0..comps).map(|c| space.data(w, a, t, c)));
            }
            self.flush(pass, space.es, indirect);
        }
    }

    fn distinct_indirect_lines(&mut self) -> usize {
        self.indirect_lines.sort_unstable();
        self.indirect_lines.dedup();
        self.indirect_lines.len()
    }
}

/// Global accesses of one warp's compute phase. Arrays marked in `staged`
/// are served from shared storage; slots marked in `staged_slots` are
/// resolved through the local map.
fn warp_compute(rec: &mut Recorder, lanes: &[usize], staged: &[bool], staged_slots: &[bool]) {
    let w = rec.w;
    let space = rec.space;
    let mut via_mapping = vec![false; w.arity];
    for a in &w.args {
        if let Some(s) = a.slot {
            if !staged[a.array] {
                via_mapping[s] = true;
            }
        }
    }
    for s in 0..w.arity {
        if staged_slots[s] {
            rec.index_read(lanes.iter().map(|&e| space.local_map(w, s, e)));
        }
        if via_mapping[s] {
            rec.index_read(lanes.iter().map(|&e| space.mapping(w, s, e)));
        }
    }
    let mut targets = Vec::with_capacity(lanes.len());
    for (i, a) in w.args.iter().enumerate() {
        if a.slot.is_some() && staged[a.array] {
            continue;
        }
        targets.clear();
        targets.extend(lanes.iter().map(|&e| w.target(i, e)));
        let read = a.access != Access::Write;
        rec.data(a.array, &targets, read, a.write);
    }
}

fn chunks(
    range: std::ops::Range<usize>,
    size: usize,
) -> impl Iterator<Item = std::ops::Range<usize>> {
    let size = size.max(1);
    (range.start..range.end)
        .step_by(size)
        .map(move |lo| lo..(lo + size).min(range.end))
}

pub(crate) struct GlobalCost {
    pub tally: Tally,
    pub blocks: usize,
    pub reuse: f64,
    pub lines_per_block: f64,
}

pub(crate) fn global(
    w: &Working,
    plan: &GlobalPlan,
    hw: &HardwareDescriptor,
    trace: bool,
) -> GlobalCost {
    let space = AddressSpace::new(w, 0, hw.base_alignment, hw.cache_line_bytes);
    let blocks: Vec<_> = (0..plan.num_colours())
        .flat_map(|c| chunks(plan.colour_range(c), plan.common.block_size))
        .collect();
    let staged = vec![false; w.arrays.len()];
    let staged_slots = vec![false; w.arity];
    let mut used_slots = vec![false; w.arity];
    for a in &w.args {
        if let Some(s) = a.slot {
            used_slots[s] = true;
        }
    }
    let outs: Vec<(Tally, usize, usize, usize)> = blocks
        .par_iter()
        .map(|r| {
            let mut rec = Recorder::new(w, &space, trace);
            for warp in chunks(r.clone(), WARP) {
                let lanes: Vec<usize> = warp.collect();
                warp_compute(&mut rec, &lanes, &staged, &staged_slots);
            }
            let mut points: Vec<usize> = r
                .clone()
                .flat_map(|e| {
                    (0..w.arity)
                        .filter(|&s| used_slots[s])
                        .map(move |s| w.point(e, s))
                })
                .collect();
            let refs = points.len();
            points.sort_unstable();
            points.dedup();
            let lines = rec.distinct_indirect_lines();
            (rec.tally, lines, refs, points.len())
        })
        .collect();
    let mut tally = Tally::new(trace);
    let (mut lines, mut refs, mut distinct) = (0, 0, 0);
    for (t, l, r, d) in outs {
        tally.merge(t);
        lines += l;
        refs += r;
        distinct += d;
    }
    GlobalCost {
        tally,
        blocks: blocks.len(),
        reuse: if distinct == 0 {
            1.0
        } else {
            refs as f64 / distinct as f64
        },
        lines_per_block: if blocks.is_empty() {
            0.0
        } else {
            lines as f64 / blocks.len() as f64
        },
    }
}

pub(crate) struct HierCost {
    pub tally: Tally,
    pub block_lines: Vec<usize>,
    pub syncs: Vec<usize>,
    pub staging_instructions: u64,
    pub warp_efficiency: f64,
}

struct BlockCost {
    tally: Tally,
    lines: usize,
    syncs: usize,
    staging_instructions: u64,
    efficiency: (f64, usize),
}

/// Lanes each wide load serves per element of `es` bytes, if `comps`
/// components split evenly into wide loads.
fn wide_factor(comps: usize, es: usize, hw: &HardwareDescriptor) -> Option<usize> {
    let k = hw.wide_transfer_bytes / es;
    (k >= 2 && hw.wide_transfer_bytes.is_multiple_of(es) && comps.is_multiple_of(k)).then_some(k)
}

/// Global side of moving staged points between global and shared storage:
/// `positions` of the block's stage list, every component of array `a`.
fn transfer(
    rec: &mut Recorder,
    plan: &HierarchicalPlan,
    b: usize,
    a: usize,
    positions: &[u32],
    read: bool,
    write: bool,
) {
    let (w, space) = (rec.w, rec.space);
    let list = plan.stage_list(b);
    let so = plan.stage_offsets[b] as u64;
    let index_addr = |l: u32| space.stage_points + 4 * (so + l as u64);
    let arr = &w.arrays[a];
    match arr.layout {
        Layout::Soa => {
            for chunk in positions.chunks(WARP) {
                rec.index_read(chunk.iter().map(|&l| index_addr(l)));
                for c in 0..arr.comps {
                    for pass in [false, true] {
                        if (pass && !write) || (!pass && !read) {
                            continue;
                        }
                        rec.addrs.extend(
                            chunk
                                .iter()
                                .map(|&l| space.data(w, a, list[l as usize] as usize, c)),
                        );
                        rec.flush(pass, space.es, true);
                    }
                }
            }
        }
        Layout::Aos => {
            let flat: Vec<(u32, usize)> = positions
                .iter()
                .flat_map(|&l| (0..arr.comps).map(move |c| (l, c)))
                .collect();
            for chunk in flat.chunks(WARP) {
                rec.index_read(chunk.iter().map(|&(l, _)| index_addr(l)));
                for pass in [false, true] {
                    if (pass && !write) || (!pass && !read) {
                        continue;
                    }
                    rec.addrs.extend(
                        chunk
                            .iter()
                            .map(|&(l, c)| space.data(w, a, list[l as usize] as usize, c)),
                    );
                    rec.flush(pass, space.es, true);
                }
            }
        }
    }
}

fn staging_instructions(
    points: usize,
    comps: usize,
    layout: Layout,
    es: usize,
    wide: bool,
    hw: &HardwareDescriptor,
) -> u64 {
    let n = match layout {
        Layout::Soa => points.div_ceil(WARP) * comps,
        Layout::Aos => match wide_factor(comps, es, hw).filter(|_| wide) {
            Some(k) => (points * comps / k).div_ceil(WARP),
            None => (points * comps).div_ceil(WARP),
        },
    };
    n as u64
}

fn hier_block(
    w: &Working,
    plan: &HierarchicalPlan,
    layout: &HierLayout,
    space: &AddressSpace,
    hw: &HardwareDescriptor,
    b: usize,
    wide: bool,
    trace: bool,
) -> BlockCost {
    let mut rec = Recorder::new(w, space, trace);
    let np = plan.stage_list(b).len();
    let all: Vec<u32> = (0..np as u32).collect();
    let mut instructions = 0;
    for (a, arr) in w.arrays.iter().enumerate() {
        if layout.staged[a] && arr.access == Access::Read {
            transfer(&mut rec, plan, b, a, &all, true, false);
            instructions += staging_instructions(np, arr.comps, arr.layout, w.es, wide, hw);
        }
    }

    let range = plan.block_range(b);
    let colours = plan.num_thread_colours[b];
    let (mut eff_sum, mut eff_count) = (0.0, 0);
    for warp in chunks(range.clone(), WARP) {
        let lanes: Vec<usize> = warp.collect();
        rec.index_read(lanes.iter().map(|&e| space.thread_colours + 4 * e as u64));
        warp_compute(&mut rec, &lanes, &layout.staged, &plan.staged_slots);
        for c in 0..colours {
            let active = lanes
                .iter()
                .filter(|&&e| plan.thread_colours[e] == c)
                .count();
            if active > 0 {
                eff_sum += active as f64 / lanes.len() as f64;
                eff_count += 1;
            }
        }
    }

    for (a, arr) in w.arrays.iter().enumerate() {
        if layout.staged[a] && arr.access == Access::Inc {
            transfer(&mut rec, plan, b, a, &layout.written[b], true, true);
        }
    }
    let lines = rec.distinct_indirect_lines();
    BlockCost {
        tally: rec.tally,
        lines,
        syncs: colours + 2,
        staging_instructions: instructions,
        efficiency: (eff_sum, eff_count),
    }
}

pub(crate) fn hierarchical(
    w: &Working,
    plan: &HierarchicalPlan,
    layout: &HierLayout,
    hw: &HardwareDescriptor,
    wide: bool,
    trace: bool,
) -> HierCost {
    let space = AddressSpace::new(
        w,
        plan.stage_points.len(),
        hw.base_alignment,
        hw.cache_line_bytes,
    );
    let order: Vec<usize> = layout.by_colour.iter().flatten().copied().collect();
    let outs: Vec<BlockCost> = order
        .par_iter()
        .map(|&b| hier_block(w, plan, layout, &space, hw, b, wide, trace))
        .collect();
    let nb = plan.num_blocks();
    let mut cost = HierCost {
        tally: Tally::new(trace),
        block_lines: vec![0; nb],
        syncs: vec![0; nb],
        staging_instructions: 0,
        warp_efficiency: 1.0,
    };
    let (mut sum, mut count) = (0.0, 0);
    for (&b, out) in order.iter().zip(outs) {
        cost.tally.merge(out.tally);
        cost.block_lines[b] = out.lines;
        cost.syncs[b] = out.syncs;
        cost.staging_instructions += out.staging_instructions;
        sum += out.efficiency.0;
        count += out.efficiency.1;
    }
    if count > 0 {
        cost.warp_efficiency = sum / count as f64;
    }
    cost
}

/// Estimated transactions of the two colouring-free alternatives, in the
/// run's element order: atomic increments straight to global data, and a
/// temporary per-element array followed by a per-point gather.
pub(crate) fn baselines(w: &Working, block_size: usize, hw: &HardwareDescriptor) -> (u64, u64) {
    let space = AddressSpace::new(w, 0, hw.base_alignment, hw.cache_line_bytes);
    let blocks: Vec<_> = chunks(0..w.n, block_size).collect();
    let none = vec![false; w.arrays.len()];
    let no_slots = vec![false; w.arity];
    let atomics: u64 = blocks
        .par_iter()
        .map(|r| {
            let mut rec = Recorder::new(w, &space, false);
            for warp in chunks(r.clone(), WARP) {
                let lanes: Vec<usize> = warp.collect();
                warp_compute(&mut rec, &lanes, &none, &no_slots);
            }
            rec.tally.reads + rec.tally.writes
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();

    let inc_args: Vec<usize> = (0..w.args.len())
        .filter(|&i| w.args[i].access == Access::Inc)
        .collect();
    if inc_args.is_empty() {
        return (atomics, atomics);
    }
    // Temporary array: SoA over (increment argument, component), one row
    // per element.
    let mut temp_col = Vec::with_capacity(inc_args.len());
    let mut cols = 0;
    for &i in &inc_args {
        temp_col.push(cols);
        cols += w.args[i].comps;
    }
    let temp_addr =
        |j: usize, c: usize, e: usize| space.temp + ((temp_col[j] + c) * w.n + e) as u64 * space.es;
    let main: u64 = blocks
        .par_iter()
        .map(|r| {
            let mut rec = Recorder::new(w, &space, false);
            let mut staged = vec![false; w.arrays.len()];
            for &i in &inc_args {
                staged[w.args[i].array] = true;
            }
            for warp in chunks(r.clone(), WARP) {
                let lanes: Vec<usize> = warp.collect();
                warp_compute(&mut rec, &lanes, &staged, &no_slots);
                for (j, &i) in inc_args.iter().enumerate() {
                    for c in 0..w.args[i].comps {
                        rec.addrs.extend(lanes.iter().map(|&e| temp_addr(j, c, e)));
                    }
                    rec.flush(true, space.es, false);
                }
            }
            rec.tally.reads + rec.tally.writes
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();

    // Gather: every point walks its (element, slot) references.
    let mut written = vec![false; w.arity];
    for &i in &inc_args {
        written[w.args[i].slot.expect("increments are indirect")] = true;
    }
    let mut offsets = vec![0usize; w.to_size + 1];
    for e in 0..w.n {
        for s in (0..w.arity).filter(|&s| written[s]) {
            offsets[w.point(e, s) + 1] += 1;
        }
    }
    for p in 0..w.to_size {
        offsets[p + 1] += offsets[p];
    }
    let mut fill = offsets.clone();
    let mut refs = vec![(0usize, 0usize); offsets[w.to_size]];
    for e in 0..w.n {
        for s in (0..w.arity).filter(|&s| written[s]) {
            let p = w.point(e, s);
            refs[fill[p]] = (e, s);
            fill[p] += 1;
        }
    }
    let inc_arrays: Vec<usize> = {
        let mut v: Vec<usize> = inc_args.iter().map(|&i| w.args[i].array).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let point_warps: Vec<_> = chunks(0..w.to_size, WARP).collect();
    let gather: u64 = point_warps
        .par_iter()
        .map(|r| {
            let mut rec = Recorder::new(w, &space, false);
            let lanes: Vec<usize> = r.clone().collect();
            rec.addrs.extend(
                lanes
                    .iter()
                    .flat_map(|&p| [p, p + 1])
                    .map(|q| space.inverse_offsets + 4 * q as u64),
            );
            rec.flush(false, 4, false);
            let most = lanes
                .iter()
                .map(|&p| offsets[p + 1] - offsets[p])
                .max()
                .unwrap_or(0);
            for k in 0..most {
                let active: Vec<usize> = lanes
                    .iter()
                    .copied()
                    .filter(|&p| offsets[p] + k < offsets[p + 1])
                    .collect();
                rec.addrs.extend(
                    active
                        .iter()
                        .map(|&p| space.inverse_pairs + 8 * (offsets[p] + k) as u64),
                );
                rec.flush(false, 8, false);
                for (j, &i) in inc_args.iter().enumerate() {
                    let slot = w.args[i].slot;
                    for &p in &active {
                        let (e, s) = refs[offsets[p] + k];
                        if Some(s) == slot {
                            rec.addrs
                                .extend((0..w.args[i].comps).map(|c| temp_addr(j, c, e)));
                        }
                    }
                    rec.flush(false, space.es, false);
                }
            }
            for &a in &inc_arrays {
                rec.data(a, &lanes, true, true);
            }
            rec.tally.reads + rec.tally.writes
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    (atomics, main + gather)
}
