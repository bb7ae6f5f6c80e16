//! Element and data-point renumbering.

mod gps;

pub use gps::{gps_levels, gps_renumber};

use crate::mesh::Mapping;
use crate::partition::Partition;
use crate::perm::Permutation;

/// Undirected simple graph in compressed adjacency form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointGraph {
    offsets: Vec<usize>,
    neighbours: Vec<u32>,
}

impl PointGraph {
    /// Builds a symmetric graph from an edge list; self-loops and duplicates
    /// are dropped.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (u, v) in edges {
            if u != v {
                adj[u].push(v as u32);
                adj[v].push(u as u32);
            }
        }
        Self::from_lists(adj)
    }

    fn from_lists(mut adj: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        offsets.push(0);
        let mut neighbours = Vec::new();
        for list in adj.iter_mut() {
            list.sort_unstable();
            list.dedup();
            neighbours.extend_from_slice(list);
            offsets.push(neighbours.len());
        }
        PointGraph {
            offsets,
            neighbours,
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn neighbours(&self, u: usize) -> &[u32] {
        &self.neighbours[self.offsets[u]..self.offsets[u + 1]]
    }

    #[inline]
    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbours.len() / 2
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |u| {
            self.neighbours(u)
                .iter()
                .map(move |&v| (u, v as usize))
                .filter(|&(u, v)| u < v)
        })
    }

    /// `max |perm(u) - perm(v)|` over edges; 0 for an edgeless graph.
    pub fn bandwidth(&self, perm: &Permutation) -> usize {
        self.edges()
            .map(|(u, v)| perm.new_of(u).abs_diff(perm.new_of(v)))
            .max()
            .unwrap_or(0)
    }
}

/// Union over elements of the complete graph on each element's points.
pub fn mesh_to_graph(m: &Mapping) -> PointGraph {
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); m.to.size];
    for row in m.rows() {
        for (a, &u) in row.iter().enumerate() {
            for &v in &row[a + 1..] {
                if u != v {
                    adj[u as usize].push(v);
                    adj[v as usize].push(u);
                }
            }
        }
    }
    PointGraph::from_lists(adj)
}

/// Orders elements by the sorted tuple of their renumbered points.
/// Equal keys keep their original relative order.
pub fn lex_sort_elements(m: &Mapping, point_perm: &Permutation) -> Permutation {
    let keys: Vec<Vec<usize>> = m
        .rows()
        .map(|row| {
            let mut k: Vec<usize> = row.iter().map(|&p| point_perm.new_of(p as usize)).collect();
            k.sort_unstable();
            k
        })
        .collect();
    let mut order: Vec<usize> = (0..m.from.size).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    Permutation::from_order(order).expect("sorted index list is a bijection")
}

/// Groups points referenced by the same set of blocks: sort key is
/// (number of distinct blocks, sorted block ids, original index).
pub fn reorder_points_by_writer_sets(m: &Mapping, part: &Partition) -> Permutation {
    let mut blocks_of: Vec<Vec<u32>> = vec![Vec::new(); m.to.size];
    for (e, row) in m.rows().enumerate() {
        let b = part.assignment[e] as u32;
        for &p in row {
            blocks_of[p as usize].push(b);
        }
    }
    for list in blocks_of.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    let mut order: Vec<usize> = (0..m.to.size).collect();
    order.sort_by(|&a, &b| {
        (blocks_of[a].len(), &blocks_of[a]).cmp(&(blocks_of[b].len(), &blocks_of[b]))
    });
    Permutation::from_order(order).expect("sorted index list is a bijection")
}

/// Numbers the points of a secondary mapping in order of first appearance
/// when its elements are visited in `element_perm` order. Unreferenced
/// points follow in original order.
pub fn first_touch_points(m: &Mapping, element_perm: &Permutation) -> Permutation {
    let mut forward = vec![usize::MAX; m.to.size];
    let mut next = 0;
    for new_e in 0..m.from.size {
        for &p in m.row(element_perm.old_of(new_e)) {
            let p = p as usize;
            if forward[p] == usize::MAX {
                forward[p] = next;
                next += 1;
            }
        }
    }
    for f in forward.iter_mut() {
        if *f == usize::MAX {
            *f = next;
            next += 1;
        }
    }
    Permutation::from_forward(forward).expect("first-touch numbering is a bijection")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    fn mapping(to: usize, arity: usize, table: Vec<u32>) -> Mapping {
        let mut mesh = Mesh::new();
        let t = mesh.add_set("to", to).unwrap();
        let f = mesh.add_set("from", table.len() / arity).unwrap();
        mesh.add_mapping("m", f, t, arity, table).unwrap();
        mesh.mapping("m").unwrap().clone()
    }

    #[test]
    fn quad_element_becomes_clique() {
        let g = mesh_to_graph(&mapping(4, 4, vec![0, 1, 2, 3]));
        assert_eq!(g.edge_count(), 6);
    }

    #[test]
    fn two_point_element_is_single_edge() {
        let g = mesh_to_graph(&mapping(2, 2, vec![0, 1]));
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn adjacent_quads_share_an_edge() {
        // points 0 1 2 / 3 4 5, quads (0,1,4,3) and (1,2,5,4)
        let m = mapping(6, 4, vec![0, 1, 4, 3, 1, 2, 5, 4]);
        let g = mesh_to_graph(&m);
        let mut brute = std::collections::BTreeSet::new();
        for row in m.rows() {
            for &a in row {
                for &b in row {
                    if a < b {
                        brute.insert((a, b));
                    }
                }
            }
        }
        assert_eq!(brute.len(), 11);
        assert_eq!(g.edge_count(), brute.len());
    }

    #[test]
    fn lex_sort_compares_sorted_tuples() {
        let m = mapping(6, 2, vec![5, 1, 0, 2]);
        let p = lex_sort_elements(&m, &Permutation::identity(6));
        assert_eq!(p.inverse(), &[1, 0]);
    }

    #[test]
    fn lex_sort_is_stable() {
        let m = mapping(2, 2, vec![0, 1, 1, 0, 0, 1]);
        assert!(lex_sort_elements(&m, &Permutation::identity(2)).is_identity());
    }

    #[test]
    fn single_writer_points_grouped_by_block() {
        // elements 0,1 in block 1; element 2 in block 0; points disjoint
        let m = mapping(6, 2, vec![0, 1, 2, 3, 4, 5]);
        let part = Partition::from_assignment(vec![1, 1, 0]);
        let p = reorder_points_by_writer_sets(&m, &part);
        assert_eq!(p.inverse(), &[4, 5, 0, 1, 2, 3]);
    }

    #[test]
    fn shared_points_sort_after_private_ones() {
        let m = mapping(3, 2, vec![0, 1, 1, 2]);
        let part = Partition::from_assignment(vec![0, 1]);
        let p = reorder_points_by_writer_sets(&m, &part);
        assert_eq!(p.new_of(1), 2);
    }

    #[test]
    fn first_touch_follows_element_order() {
        let m = mapping(4, 2, vec![3, 2, 0, 3]);
        let p = first_touch_points(&m, &Permutation::from_order(vec![1, 0]).unwrap());
        assert_eq!(p.inverse(), &[0, 3, 2, 1]);
    }
}
