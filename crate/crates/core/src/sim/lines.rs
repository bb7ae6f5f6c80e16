//! Byte addresses of the modeled arrays and 32-byte line counting.

use serde::{Deserialize, Serialize};

use super::Working;
use crate::mesh::index_of;

/// Distinct `line_bytes`-aligned windows touched when every lane reads or
/// writes `width` bytes starting at its address.
pub fn count_cache_lines(addresses: &[u64], width: u64, line_bytes: u64) -> usize {
    if width == 0 || line_bytes == 0 {
        return 0;
    }
    let mut lines = Vec::with_capacity(addresses.len());
    for &a in addresses {
        lines.extend(a / line_bytes..=(a + width - 1) / line_bytes);
    }
    lines.sort_unstable();
    lines.dedup();
    lines.len()
}

/// One warp-wide global access as recorded by a traced run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub write: bool,
    /// Bytes accessed per address.
    pub width: u64,
    pub addresses: Vec<u64>,
    /// Lines charged by the simulator for this access.
    pub lines: usize,
}

/// Read and write line counts, optionally with every access recorded.
#[derive(Clone, Debug, Default)]
pub(crate) struct Tally {
    pub reads: u64,
    pub writes: u64,
    pub trace: Option<Vec<TraceEntry>>,
}

impl Tally {
    pub fn new(trace: bool) -> Self {
        Tally {
            reads: 0,
            writes: 0,
            trace: trace.then(Vec::new),
        }
    }

    pub fn access(&mut self, write: bool, width: u64, addresses: &[u64], line: u64) -> usize {
        if addresses.is_empty() {
            return 0;
        }
        let lines = count_cache_lines(addresses, width, line);
        if write {
            self.writes += lines as u64;
        } else {
            self.reads += lines as u64;
        }
        if let Some(t) = &mut self.trace {
            t.push(TraceEntry {
                write,
                width,
                addresses: addresses.to_vec(),
                lines,
            });
        }
        lines
    }

    pub fn merge(&mut self, other: Tally) {
        self.reads += other.reads;
        self.writes += other.writes;
        if let (Some(t), Some(o)) = (&mut self.trace, other.trace) {
            t.extend(o);
        }
    }
}

/// Base addresses of everything the modeled device reads or writes.
///
/// Regions are laid out back to back in a fixed order, each base rounded up
/// to the alignment: kernel data arrays, the mapping (one u32 row per slot),
/// the local slot map, the staging lists, the thread colours, then the
/// scratch regions used only by the baselines.
#[derive(Clone, Debug)]
pub(crate) struct AddressSpace {
    pub data: Vec<u64>,
    pub mapping: u64,
    pub local_map: u64,
    pub stage_points: u64,
    pub thread_colours: u64,
    pub temp: u64,
    pub inverse_offsets: u64,
    pub inverse_pairs: u64,
    pub line: u64,
    pub es: u64,
}

impl AddressSpace {
    pub fn new(w: &Working, stage_len: usize, align: usize, line: usize) -> Self {
        let align = align.max(1) as u64;
        let mut next = 0u64;
        let mut alloc = |bytes: u64| {
            let base = next.div_ceil(align) * align;
            next = base + bytes;
            base
        };
        let es = w.es as u64;
        let data = w
            .arrays
            .iter()
            .map(|a| alloc((a.size * a.comps) as u64 * es))
            .collect();
        let n = w.n as u64;
        let slots = w.arity as u64;
        let mapping = alloc(4 * n * slots);
        let local_map = alloc(4 * n * slots);
        let stage_points = alloc(4 * stage_len as u64);
        let thread_colours = alloc(4 * n);
        let inc_comps: usize = w
            .args
            .iter()
            .filter(|a| a.slot.is_some() && a.write)
            .map(|a| a.comps)
            .sum();
        let temp = alloc(n * inc_comps as u64 * es);
        let inverse_offsets = alloc(4 * (w.to_size as u64 + 1));
        let inverse_pairs = alloc(8 * n * slots);
        AddressSpace {
            data,
            mapping,
            local_map,
            stage_points,
            thread_colours,
            temp,
            inverse_offsets,
            inverse_pairs,
            line: line as u64,
            es,
        }
    }

    pub fn data(&self, w: &Working, a: usize, i: usize, c: usize) -> u64 {
        let arr = &w.arrays[a];
        self.data[a] + index_of(arr.layout, arr.size, arr.comps, i, c) as u64 * self.es
    }

    /// Slot-major mapping entry.
    pub fn mapping(&self, w: &Working, s: usize, e: usize) -> u64 {
        self.mapping + 4 * (s * w.n + e) as u64
    }

    pub fn local_map(&self, w: &Working, s: usize, e: usize) -> u64 {
        self.local_map + 4 * (s * w.n + e) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consecutive_f32_is_four_lines() {
        let a: Vec<u64> = (0..32).map(|i| i * 4).collect();
        assert_eq!(count_cache_lines(&a, 4, 32), 4);
    }

    #[test]
    fn same_address_is_one_line() {
        assert_eq!(count_cache_lines(&[96; 32], 8, 32), 1);
    }

    #[test]
    fn ten_f64_is_three_lines() {
        let a: Vec<u64> = (0..10).map(|i| 128 + i * 8).collect();
        assert_eq!(count_cache_lines(&a, 8, 32), 3);
    }

    #[test]
    fn straddling_access_counts_both_lines() {
        assert_eq!(count_cache_lines(&[28], 8, 32), 2);
        assert_eq!(count_cache_lines(&[], 8, 32), 0);
    }
}
