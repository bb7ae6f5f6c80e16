//! Thread-block partitioning of the iteration set.

mod graph;
mod kway;
mod structured;

pub use graph::{build_thread_graph, ThreadGraph};
pub use kway::{partition_kway, partition_kway_with_stats, KwayStats};
pub use structured::{hex_internal_faces, partition_structured_hex, FaceDir};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &str = "meshplan-partition 1";

/// Partitioner knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    /// Requested block size `S`; no block may exceed it.
    pub block_size: usize,
    /// Load-imbalance tolerance `l >= 1`.
    pub imbalance: f64,
    /// Margin `epsilon >= 0` added when deriving the effective tolerance.
    pub epsilon: f64,
    pub seed: u64,
    /// Ignore shared-point counts and cut unit-weight edges.
    pub unweighted: bool,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            block_size: 128,
            imbalance: 1.001,
            epsilon: 0.5,
            seed: 0,
            unweighted: false,
        }
    }
}

impl PartitionConfig {
    pub fn with_block_size(block_size: usize) -> Self {
        PartitionConfig {
            block_size,
            ..Default::default()
        }
    }
}

/// Returns the working block size `S' = floor(S / l)` and the adjusted
/// tolerance `l' = (S + epsilon) / S'`.
pub fn compute_effective_block_size(cfg: &PartitionConfig) -> Result<(usize, f64)> {
    if cfg.block_size == 0 {
        return Err(Error::Unsatisfiable("block size must be positive".into()));
    }
    if cfg.imbalance.is_nan() || cfg.imbalance < 1.0 || cfg.epsilon.is_nan() || cfg.epsilon < 0.0 {
        return Err(Error::Unsatisfiable(format!(
            "tolerance {} must be >= 1 and epsilon {} >= 0",
            cfg.imbalance, cfg.epsilon
        )));
    }
    let s_eff = (cfg.block_size as f64 / cfg.imbalance).floor() as usize;
    if s_eff == 0 {
        return Err(Error::Unsatisfiable(format!(
            "block size {} with tolerance {} leaves no room for threads",
            cfg.block_size, cfg.imbalance
        )));
    }
    let l_eff = (cfg.block_size as f64 + cfg.epsilon) / s_eff as f64;
    Ok((s_eff, l_eff))
}

/// Assignment of every element to exactly one block; block ids are dense.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: Vec<usize>,
    pub num_blocks: usize,
    /// Set when the partitioner could not meet the balance target.
    pub over_tolerance: bool,
}

impl Partition {
    /// Wraps an assignment whose block ids are already dense.
    pub fn from_assignment(assignment: Vec<usize>) -> Self {
        let num_blocks = assignment.iter().map(|&b| b + 1).max().unwrap_or(0);
        Partition {
            assignment,
            num_blocks,
            over_tolerance: false,
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_blocks];
        for &b in &self.assignment {
            sizes[b] += 1;
        }
        sizes
    }

    /// Element lists per block, each in ascending element order.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_blocks];
        for (e, &b) in self.assignment.iter().enumerate() {
            out[b].push(e);
        }
        out
    }

    /// `n * max size(B_j) / sum size(B_j)`; 1 for an empty partition.
    pub fn imbalance(&self) -> f64 {
        let sizes = self.block_sizes();
        let total: usize = sizes.iter().sum();
        if total == 0 {
            return 1.0;
        }
        let max = sizes.iter().copied().max().unwrap_or(0);
        self.num_blocks as f64 * max as f64 / total as f64
    }

    /// Total weight of graph edges whose endpoints lie in different blocks.
    pub fn cut_weight(&self, g: &ThreadGraph) -> u64 {
        let mut cut = 0;
        for u in 0..g.len() {
            for (v, w) in g.neighbours(u) {
                if u < v && self.assignment[u] != self.assignment[v] {
                    cut += w;
                }
            }
        }
        cut
    }

    /// Newline-separated block ids with a leading magic line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.len() * 5 + 24);
        out.push_str(MAGIC);
        out.push('\n');
        for b in &self.assignment {
            out.push_str(&b.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected `{MAGIC}`"),
                })
            }
        }
        let mut assignment = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            assignment.push(line.parse::<usize>().map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        let p = Partition::from_assignment(assignment);
        if p.block_sizes().contains(&0) {
            return Err(Error::validation("partition block ids are not dense"));
        }
        Ok(p)
    }

    /// Chunks `n` elements in their current order into blocks of `size`.
    pub fn chunked(n: usize, size: usize) -> Self {
        assert!(size > 0);
        Partition::from_assignment((0..n).map(|e| e / size).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_block_size_examples() {
        let cfg = PartitionConfig {
            block_size: 480,
            imbalance: 1.001,
            epsilon: 0.5,
            ..Default::default()
        };
        let (s, l) = compute_effective_block_size(&cfg).unwrap();
        assert_eq!(s, 479);
        assert!((l - 480.5 / 479.0).abs() < 1e-15);
        assert!((l - 1.00313).abs() < 1e-5);

        let cfg = PartitionConfig {
            block_size: 128,
            imbalance: 1.0,
            epsilon: 0.0,
            ..Default::default()
        };
        assert_eq!(compute_effective_block_size(&cfg).unwrap(), (128, 1.0));

        let cfg = PartitionConfig {
            block_size: 100,
            imbalance: 200.0,
            ..Default::default()
        };
        assert!(matches!(
            compute_effective_block_size(&cfg),
            Err(Error::Unsatisfiable(_))
        ));
    }

    #[test]
    fn imbalance_of_uneven_blocks() {
        let p = Partition::from_assignment(vec![0, 0, 0, 1]);
        assert!((p.imbalance() - 1.5).abs() < 1e-12);
        assert_eq!(p.blocks(), vec![vec![0, 1, 2], vec![3]]);
    }

    #[test]
    fn text_round_trip() {
        let p = Partition::from_assignment(vec![1, 0, 1, 2]);
        assert_eq!(Partition::from_text(&p.to_text()).unwrap(), p);
        let gap = format!("{MAGIC}\n0\n2\n");
        assert!(Partition::from_text(&gap).is_err());
    }
}
