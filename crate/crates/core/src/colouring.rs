//! Greedy colourings for race-free parallel increments.
//!
//! Two items conflict when they write a common point. Colour ids are
//! relabelled at the end so that colour 0 is the most used one, ties going to
//! the colour opened first.

use serde::{Deserialize, Serialize};

use crate::mesh::Mapping;
use crate::partition::Partition;
use crate::perm::Permutation;

/// How the greedy pass picks among admissible colours.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chooser {
    /// The admissible colour with the fewest items so far.
    #[default]
    LeastLoaded,
    /// The lowest admissible colour id.
    FirstFit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColourAssignment {
    pub colours: Vec<usize>,
    pub num_colours: usize,
    pub counts: Vec<usize>,
}

impl ColourAssignment {
    /// Relabels colours by descending use; ties keep their relative order.
    fn canonical(mut colours: Vec<usize>, num_colours: usize) -> Self {
        let mut counts = vec![0usize; num_colours];
        for &c in &colours {
            counts[c] += 1;
        }
        let mut order: Vec<usize> = (0..num_colours).collect();
        order.sort_by_key(|&c| std::cmp::Reverse(counts[c]));
        let mut relabel = vec![0; num_colours];
        for (new, &old) in order.iter().enumerate() {
            relabel[old] = new;
        }
        for c in colours.iter_mut() {
            *c = relabel[*c];
        }
        let counts = order.iter().map(|&c| counts[c]).collect();
        ColourAssignment {
            colours,
            num_colours,
            counts,
        }
    }

    pub fn len(&self) -> usize {
        self.colours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colours.is_empty()
    }
}

/// Distinct written points of element `e`.
pub fn written_points(m: &Mapping, written: &[bool], e: usize, out: &mut Vec<usize>) {
    out.clear();
    for (slot, &p) in m.row(e).iter().enumerate() {
        if written[slot] {
            out.push(p as usize);
        }
    }
    out.sort_unstable();
    out.dedup();
}

/// Greedy colouring of items given by their written-point lists, visited in
/// index order.
fn greedy(lists: &[Vec<usize>], num_points: usize, chooser: Chooser) -> ColourAssignment {
    // colours already used at each point
    let mut used: Vec<Vec<usize>> = vec![Vec::new(); num_points];
    let mut stamp: Vec<usize> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut colours = Vec::with_capacity(lists.len());
    for (item, points) in lists.iter().enumerate() {
        let tag = item + 1;
        for &p in points {
            for &c in &used[p] {
                stamp[c] = tag;
            }
        }
        let admissible = (0..counts.len()).filter(|&c| stamp[c] != tag);
        let choice = match chooser {
            Chooser::LeastLoaded => admissible.min_by_key(|&c| (counts[c], c)),
            Chooser::FirstFit => admissible.min(),
        };
        let c = choice.unwrap_or_else(|| {
            counts.push(0);
            stamp.push(0);
            counts.len() - 1
        });
        counts[c] += 1;
        for &p in points {
            used[p].push(c);
        }
        colours.push(c);
    }
    ColourAssignment::canonical(colours, counts.len())
}

/// Colours the from-set of `m` in its current order.
pub fn colour_global(m: &Mapping, written: &[bool], chooser: Chooser) -> ColourAssignment {
    let mut lists = Vec::with_capacity(m.from.size);
    let mut buf = Vec::new();
    for e in 0..m.from.size {
        written_points(m, written, e, &mut buf);
        lists.push(buf.clone());
    }
    greedy(&lists, m.to.size, chooser)
}

/// Colours whole blocks: two blocks conflict when any of their elements write
/// a common point.
pub fn colour_blocks(part: &Partition, m: &Mapping, written: &[bool]) -> ColourAssignment {
    let mut lists = vec![Vec::new(); part.num_blocks];
    let mut buf = Vec::new();
    for e in 0..m.from.size {
        written_points(m, written, e, &mut buf);
        lists[part.assignment[e]].extend_from_slice(&buf);
    }
    for l in lists.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    greedy(&lists, m.to.size, Chooser::LeastLoaded)
}

/// Conflict graph among the elements of one block, indexed by position in
/// `block`. Neighbour lists are sorted.
pub fn block_conflict_graph(block: &[usize], m: &Mapping, written: &[bool]) -> Vec<Vec<usize>> {
    let mut writers: std::collections::HashMap<usize, Vec<usize>> = Default::default();
    let mut buf = Vec::new();
    for (t, &e) in block.iter().enumerate() {
        written_points(m, written, e, &mut buf);
        for &p in &buf {
            writers.entry(p).or_default().push(t);
        }
    }
    let mut adj = vec![Vec::new(); block.len()];
    for ts in writers.values() {
        for &a in ts {
            for &b in ts {
                if a != b {
                    adj[a].push(b);
                }
            }
        }
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Smallest-last order: repeatedly take the node of minimum remaining degree
/// (lowest index on ties) and put it at the back.
pub fn smallest_last_order(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut removed = vec![false; n];
    let mut order = vec![0; n];
    for pos in (0..n).rev() {
        let u = (0..n)
            .filter(|&u| !removed[u])
            .min_by_key(|&u| (degree[u], u))
            .expect("nodes remain");
        removed[u] = true;
        order[pos] = u;
        for &v in &adj[u] {
            if !removed[v] {
                degree[v] -= 1;
            }
        }
    }
    order
}

/// Thread colours within one block: first-fit greedy in smallest-last order.
/// The result is indexed by position in `block`.
pub fn colour_threads_in_block(block: &[usize], m: &Mapping, written: &[bool]) -> ColourAssignment {
    let adj = block_conflict_graph(block, m, written);
    let order = smallest_last_order(&adj);
    let mut colours = vec![usize::MAX; block.len()];
    let mut num_colours = 0;
    let mut taken = Vec::new();
    for &u in &order {
        taken.clear();
        taken.resize(num_colours + 1, false);
        for &v in &adj[u] {
            if colours[v] != usize::MAX {
                taken[colours[v]] = true;
            }
        }
        let c = taken.iter().position(|&t| !t).unwrap();
        colours[u] = c;
        num_colours = num_colours.max(c + 1);
    }
    ColourAssignment::canonical(colours, num_colours)
}

/// Stable sort of block positions by colour; `inverse()[new] = old`.
pub fn sort_threads_by_colour(colours: &ColourAssignment) -> Permutation {
    let mut order: Vec<usize> = (0..colours.len()).collect();
    order.sort_by_key(|&t| colours.colours[t]);
    Permutation::from_order(order).expect("sorted positions form a bijection")
}

/// Brute-force check that equal-coloured items write disjoint points.
pub fn is_valid_colouring(lists: &[Vec<usize>], colours: &[usize]) -> bool {
    let mut owner: std::collections::HashMap<(usize, usize), usize> = Default::default();
    for (i, points) in lists.iter().enumerate() {
        for &p in points {
            if let Some(&j) = owner.get(&(colours[i], p)) {
                if j != i {
                    return false;
                }
            }
            owner.insert((colours[i], p), i);
        }
    }
    true
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
    fn shared_cell_forces_two_colours() {
        let m = mapping(3, 2, vec![0, 1, 1, 2]);
        let c = colour_global(&m, &[true, true], Chooser::LeastLoaded);
        assert_eq!(c.num_colours, 2);
        assert_ne!(c.colours[0], c.colours[1]);
    }

    #[test]
    fn independent_elements_share_a_colour() {
        let m = mapping(4, 2, vec![0, 1, 2, 3]);
        assert_eq!(
            colour_global(&m, &[true, true], Chooser::FirstFit).num_colours,
            1
        );
    }

    #[test]
    fn read_only_slots_never_conflict() {
        let m = mapping(3, 2, vec![0, 1, 2, 1]);
        assert_eq!(
            colour_global(&m, &[true, false], Chooser::LeastLoaded).num_colours,
            1
        );
    }

    #[test]
    fn star_block_needs_four_colours() {
        let m = mapping(5, 2, vec![0, 1, 0, 2, 0, 3, 0, 4]);
        let c = colour_threads_in_block(&[0, 1, 2, 3], &m, &[true, true]);
        assert_eq!(c.num_colours, 4);
    }

    #[test]
    fn independent_threads_one_colour() {
        let m = mapping(8, 2, vec![0, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(
            colour_threads_in_block(&[0, 1, 2, 3], &m, &[true, true]).num_colours,
            1
        );
    }

    #[test]
    fn blocks_with_disjoint_writes() {
        let m = mapping(4, 2, vec![0, 1, 2, 3]);
        let p = Partition::from_assignment(vec![0, 1]);
        assert_eq!(colour_blocks(&p, &m, &[true, true]).num_colours, 1);
        let one = Partition::from_assignment(vec![0, 0]);
        assert_eq!(colour_blocks(&one, &m, &[true, true]).num_colours, 1);
    }

    #[test]
    fn stable_sort_example() {
        let c = ColourAssignment {
            colours: vec![1, 0, 1, 0],
            num_colours: 2,
            counts: vec![2, 2],
        };
        assert_eq!(sort_threads_by_colour(&c).inverse(), &[1, 3, 0, 2]);
        let same = ColourAssignment {
            colours: vec![0; 5],
            num_colours: 1,
            counts: vec![5],
        };
        assert!(sort_threads_by_colour(&same).is_identity());
    }

    #[test]
    fn counts_non_increasing() {
        let m = mapping(6, 2, vec![0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 0, 0, 3]);
        let c = colour_global(&m, &[true, true], Chooser::LeastLoaded);
        assert!(c.counts.windows(2).all(|w| w[0] >= w[1]));
        let lists: Vec<Vec<usize>> = m
            .rows()
            .map(|r| r.iter().map(|&p| p as usize).collect())
            .collect();
        assert!(is_valid_colouring(&lists, &c.colours));
    }

    #[test]
    fn smallest_last_puts_min_degree_last() {
        // path 0-1-2 plus isolated 3
        let adj = vec![vec![1], vec![0, 2], vec![1], vec![]];
        let order = smallest_last_order(&adj);
        assert_eq!(order[3], 3);
    }
}
