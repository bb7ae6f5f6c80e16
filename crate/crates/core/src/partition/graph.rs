use crate::mesh::{invert_mapping, Mapping};

/// Graph on the iteration set: `u` and `v` are adjacent iff they access a
/// common data point; the weight is the number of distinct shared points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThreadGraph {
    pub(crate) offsets: Vec<usize>,
    pub(crate) adj: Vec<usize>,
    pub(crate) weights: Vec<u64>,
}

impl ThreadGraph {
    pub fn from_lists(lists: Vec<Vec<(usize, u64)>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut adj = Vec::new();
        let mut weights = Vec::new();
        for list in lists {
            for (v, w) in list {
                adj.push(v);
                weights.push(w);
            }
            offsets.push(adj.len());
        }
        ThreadGraph {
            offsets,
            adj,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn neighbours(&self, u: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        let r = self.offsets[u]..self.offsets[u + 1];
        self.adj[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    pub fn edge_count(&self) -> usize {
        self.adj.len() / 2
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<u64> {
        self.neighbours(u).find(|&(x, _)| x == v).map(|(_, w)| w)
    }

    /// Same adjacency with every weight set to 1.
    pub fn unweighted(&self) -> ThreadGraph {
        ThreadGraph {
            weights: vec![1; self.weights.len()],
            ..self.clone()
        }
    }
}

/// Builds the thread graph over the common from-set of `mappings`. Points of
/// different mappings are distinct data points.
pub fn build_thread_graph(mappings: &[&Mapping]) -> ThreadGraph {
    let n = mappings.first().map_or(0, |m| m.from.size);
    assert!(
        mappings.iter().all(|m| m.from.id == mappings[0].from.id),
        "thread graph mappings must share their from-set"
    );
    let inverses: Vec<_> = mappings.iter().map(|m| invert_mapping(m)).collect();
    let mut count = vec![0u64; n];
    let mut touched = Vec::new();
    let mut lists = Vec::with_capacity(n);
    let mut points = Vec::new();
    for u in 0..n {
        for (m, inv) in mappings.iter().zip(&inverses) {
            points.clear();
            points.extend_from_slice(m.row(u));
            points.sort_unstable();
            points.dedup();
            for &p in &points {
                let refs = inv.refs(p as usize);
                let mut last = usize::MAX;
                // refs are sorted by element, so duplicates are adjacent
                for &(v, _) in refs {
                    let v = v as usize;
                    if v == u || v == last {
                        continue;
                    }
                    last = v;
                    if count[v] == 0 {
                        touched.push(v);
                    }
                    count[v] += 1;
                }
            }
        }
        touched.sort_unstable();
        let list: Vec<(usize, u64)> = touched.iter().map(|&v| (v, count[v])).collect();
        for &v in &touched {
            count[v] = 0;
        }
        touched.clear();
        lists.push(list);
    }
    ThreadGraph::from_lists(lists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    #[test]
    fn two_edges_sharing_a_cell() {
        let mut mesh = Mesh::new();
        let c = mesh.add_set("cells", 3).unwrap();
        let e = mesh.add_set("edges", 2).unwrap();
        mesh.add_mapping("m", e, c, 2, vec![0, 1, 1, 2]).unwrap();
        let g = build_thread_graph(&[mesh.mapping("m").unwrap()]);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.weight(0, 1), Some(1));
    }

    #[test]
    fn duplicate_entries_count_once() {
        let mut mesh = Mesh::new();
        let c = mesh.add_set("cells", 2).unwrap();
        let e = mesh.add_set("edges", 2).unwrap();
        mesh.add_mapping("m", e, c, 3, vec![0, 0, 1, 0, 1, 1])
            .unwrap();
        let g = build_thread_graph(&[mesh.mapping("m").unwrap()]);
        assert_eq!(g.weight(0, 1), Some(2));
        assert_eq!(g.weight(1, 0), Some(2));
    }
}
