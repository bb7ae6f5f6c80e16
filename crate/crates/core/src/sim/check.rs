//! Pre-pass run before any value is written: colouring races, staging
//! coverage and shared capacity.

use super::Working;
use crate::error::{Error, Result};
use crate::hw::HardwareDescriptor;
use crate::kernel::Access;
use crate::plan::{GlobalPlan, HierarchicalPlan};

/// Written points of one colour class must be pairwise disjoint.
pub(crate) fn global(w: &Working, plan: &GlobalPlan) -> Result<()> {
    let written = written_slots(w);
    // owner[p] = (colour + 1, element)
    let mut owner = vec![(0usize, 0usize); w.to_size];
    for c in 0..plan.num_colours() {
        for e in plan.colour_range(c) {
            for s in (0..w.arity).filter(|&s| written[s]) {
                let p = w.point(e, s);
                let (tag, other) = owner[p];
                if tag == c + 1 && other != e {
                    return Err(Error::Race {
                        scope: format!("colour {c}"),
                        first: w.orig_elem(other),
                        second: w.orig_elem(e),
                        point: w.orig_point(p),
                    });
                }
                owner[p] = (c + 1, e);
            }
        }
    }
    Ok(())
}

fn written_slots(w: &Working) -> Vec<bool> {
    let mut out = vec![false; w.arity];
    for a in &w.args {
        if let (Some(s), true) = (a.slot, a.write) {
            out[s] = true;
        }
    }
    out
}

/// What the executor derives from a checked hierarchical plan.
#[derive(Clone, Debug)]
pub(crate) struct HierLayout {
    /// Per kernel array: held in shared storage.
    pub staged: Vec<bool>,
    /// Per block: stage-list positions written through some slot, ascending.
    pub written: Vec<Vec<u32>>,
    /// Blocks of each block colour, ascending.
    pub by_colour: Vec<Vec<usize>>,
}

pub(crate) fn hierarchical(
    w: &Working,
    plan: &HierarchicalPlan,
    hw: &HardwareDescriptor,
) -> Result<HierLayout> {
    let bad = |msg: String| Err(Error::validation(msg));
    let mut staged = vec![false; w.arrays.len()];
    for name in &plan.staged_arrays {
        match w.arrays.iter().position(|a| &a.name == name) {
            Some(a) if w.arrays[a].indirect => staged[a] = true,
            _ => {
                return bad(format!(
                    "staged array `{name}` is not an indirect kernel argument"
                ))
            }
        }
    }
    for (a, arr) in w.arrays.iter().enumerate() {
        if arr.indirect && arr.access == Access::Inc && !staged[a] {
            return bad(format!("incremented array `{}` is not staged", arr.name));
        }
        if staged[a] && arr.slots.iter().any(|&s| !plan.staged_slots[s]) {
            return bad(format!(
                "staged array `{}` is used through an unstaged slot",
                arr.name
            ));
        }
    }
    let nbc = plan.num_block_colours();
    let mut by_colour = vec![Vec::new(); nbc];
    for (b, &c) in plan.block_colours.iter().enumerate() {
        if c >= nbc {
            return bad(format!("block {b} has colour {c} of {nbc}"));
        }
        by_colour[c].push(b);
    }

    let written = written_slots(w);
    let staged_comps: usize = w
        .arrays
        .iter()
        .zip(&staged)
        .filter(|(_, &s)| s)
        .map(|(a, _)| a.comps)
        .sum();
    let mut block_written = Vec::with_capacity(plan.num_blocks());
    for b in 0..plan.num_blocks() {
        let list = plan.stage_list(b);
        if list.windows(2).any(|p| p[0] >= p[1]) || list.iter().any(|&p| p as usize >= w.to_size) {
            return bad(format!(
                "stage list of block {b} is not strictly increasing within the set"
            ));
        }
        let needed = list.len() * staged_comps * w.es;
        let claimed = plan.shared_bytes[b];
        if needed > hw.shared_bytes_per_sm || needed > claimed {
            return Err(Error::Capacity {
                block: b,
                needed,
                limit: claimed.min(hw.shared_bytes_per_sm),
            });
        }
        if needed != claimed {
            return bad(format!(
                "block {b} claims {claimed} shared bytes but stages {needed}"
            ));
        }
        let range = plan.block_range(b);
        let colours = plan.num_thread_colours[b];
        let mut marks = vec![false; list.len()];
        for e in range.clone() {
            let tc = plan.thread_colours[e];
            if tc >= colours {
                return bad(format!(
                    "element {} has thread colour {tc} of {colours}",
                    w.orig_elem(e)
                ));
            }
            for s in (0..w.arity).filter(|&s| plan.staged_slots[s]) {
                let l = plan.local(s, e) as usize;
                if l >= list.len() || list[l] as usize != w.point(e, s) {
                    return bad(format!(
                        "staged miss: element {} slot {s} does not resolve to its point in block {b}",
                        w.orig_elem(e)
                    ));
                }
                if written[s] {
                    marks[l] = true;
                }
            }
        }
        // Shared increments within one thread colour must not collide.
        // Visiting threads grouped by colour keeps the owner tags valid even
        // when the plan does not store them sorted.
        let mut by_thread_colour: Vec<usize> = range.collect();
        by_thread_colour.sort_by_key(|&e| plan.thread_colours[e]);
        let mut owner = vec![(0usize, 0usize); list.len()];
        for e in by_thread_colour {
            let tag = plan.thread_colours[e] + 1;
            for s in (0..w.arity).filter(|&s| written[s]) {
                let l = plan.local(s, e) as usize;
                let (t, other) = owner[l];
                if t == tag && other != e {
                    return Err(Error::Race {
                        scope: format!("block {b} thread colour {}", tag - 1),
                        first: w.orig_elem(other),
                        second: w.orig_elem(e),
                        point: w.orig_point(list[l] as usize),
                    });
                }
                owner[l] = (tag, e);
            }
        }
        block_written.push(
            (0..list.len() as u32)
                .filter(|&l| marks[l as usize])
                .collect::<Vec<u32>>(),
        );
    }

    // Write-back of blocks sharing a block colour must not collide.
    let mut owner = vec![(0usize, 0usize); w.to_size];
    for (c, blocks) in by_colour.iter().enumerate() {
        for &b in blocks {
            let list = plan.stage_list(b);
            for &l in &block_written[b] {
                let p = list[l as usize] as usize;
                let (tag, other) = owner[p];
                if tag == c + 1 && other != b {
                    let writer = |blk: usize| {
                        plan.block_range(blk)
                            .find(|&e| (0..w.arity).any(|s| written[s] && w.point(e, s) == p))
                            .expect("written point has a writer")
                    };
                    return Err(Error::Race {
                        scope: format!("block colour {c}"),
                        first: w.orig_elem(writer(other)),
                        second: w.orig_elem(writer(b)),
                        point: w.orig_point(p),
                    });
                }
                owner[p] = (c + 1, b);
            }
        }
    }
    Ok(HierLayout {
        staged,
        written: block_written,
        by_colour,
    })
}
