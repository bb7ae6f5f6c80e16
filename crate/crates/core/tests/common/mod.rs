#![allow(dead_code)]

use std::collections::HashSet;

use meshplan_core::colouring::written_points;
use meshplan_core::kernel::KernelSpec;
use meshplan_core::sim::TraceEntry;
use meshplan_core::{Mapping, Mesh};

/// Materialises every byte of every recorded access and counts the distinct
/// `line`-byte windows, split into reads and writes.
pub fn brute_force_lines(trace: &[TraceEntry], line: u64) -> (u64, u64) {
    let (mut reads, mut writes) = (0, 0);
    for t in trace {
        let lines: HashSet<u64> = t
            .addresses
            .iter()
            .flat_map(|&a| (a..a + t.width).map(|b| b / line))
            .collect();
        if t.write {
            writes += lines.len() as u64;
        } else {
            reads += lines.len() as u64;
        }
    }
    (reads, writes)
}

/// Written-point lists of the given elements, in the order given.
pub fn write_lists(
    m: &Mapping,
    written: &[bool],
    elems: impl IntoIterator<Item = usize>,
) -> Vec<Vec<usize>> {
    let mut buf = Vec::new();
    elems
        .into_iter()
        .map(|e| {
            written_points(m, written, e, &mut buf);
            buf.clone()
        })
        .collect()
}

/// Largest number of items among `lists` that write one point.
pub fn max_writers(lists: &[Vec<usize>]) -> usize {
    let mut count = std::collections::HashMap::<usize, usize>::new();
    for l in lists {
        for &p in l {
            *count.entry(p).or_default() += 1;
        }
    }
    count.values().copied().max().unwrap_or(0)
}

/// Largest number of other items sharing a written point with one item.
pub fn max_conflict_degree(lists: &[Vec<usize>]) -> usize {
    let mut writers = std::collections::HashMap::<usize, Vec<usize>>::new();
    for (i, l) in lists.iter().enumerate() {
        for &p in l {
            writers.entry(p).or_default().push(i);
        }
    }
    (0..lists.len())
        .map(|i| {
            let mut nb: HashSet<usize> = HashSet::new();
            for p in &lists[i] {
                nb.extend(writers[p].iter().copied().filter(|&j| j != i));
            }
            nb.len()
        })
        .max()
        .unwrap_or(0)
}

pub fn iteration_mapping<'a>(mesh: &'a Mesh, kernel: &KernelSpec) -> &'a Mapping {
    mesh.mapping(&kernel.sig.mapping).unwrap()
}
