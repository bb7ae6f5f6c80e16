//! Gibbs-Poole-Stockmeyer renumbering.
//!
//! For every connected component a pseudo-peripheral pair `(v, u)` is found,
//! the two rooted level structures are merged into one of minimal width, and
//! nodes are numbered level by level. Inside a level, nodes are ordered by
//! (degree, original index).

use super::PointGraph;
use crate::perm::Permutation;

const UNSET: usize = usize::MAX;

/// Rooted level structure restricted to one component.
struct Levels {
    levels: Vec<Vec<usize>>,
}

impl Levels {
    fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    fn width(&self) -> usize {
        self.levels.iter().map(Vec::len).max().unwrap_or(0)
    }
}

fn bfs(g: &PointGraph, root: usize, level_of: &mut [usize]) -> Levels {
    let mut levels = vec![vec![root]];
    level_of[root] = 0;
    let mut touched = vec![root];
    loop {
        let mut next = Vec::new();
        for &u in levels.last().unwrap() {
            for &v in g.neighbours(u) {
                let v = v as usize;
                if level_of[v] == UNSET {
                    level_of[v] = levels.len();
                    next.push(v);
                    touched.push(v);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        levels.push(next);
    }
    for t in touched {
        level_of[t] = UNSET;
    }
    Levels { levels }
}

/// Start from a minimum-degree node and move to the far end while the
/// eccentricity keeps growing. Returns `(v, u)` with their level structures.
fn pseudo_peripheral(
    g: &PointGraph,
    start: usize,
    scratch: &mut [usize],
) -> (Levels, Option<Levels>) {
    let mut lv = bfs(g, start, scratch);
    loop {
        if lv.depth() == 0 {
            return (lv, None);
        }
        let mut last = lv.levels.last().unwrap().clone();
        last.sort_by_key(|&w| (g.degree(w), w));
        // one candidate per distinct degree
        last.dedup_by_key(|w| g.degree(*w));
        let mut best: Option<Levels> = None;
        let mut deeper = None;
        for w in last {
            let lw = bfs(g, w, scratch);
            if lw.depth() > lv.depth() {
                deeper = Some(lw);
                break;
            }
            if best.as_ref().is_none_or(|b| lw.width() < b.width()) {
                best = Some(lw);
            }
        }
        match deeper {
            Some(lw) => lv = lw,
            None => return (lv, best),
        }
    }
}

/// Numbers one component; writes global level ids into `level_out`.
fn number_component(
    g: &PointGraph,
    start: usize,
    scratch: &mut [usize],
    level_base: usize,
    level_out: &mut [usize],
    order: &mut Vec<usize>,
) -> usize {
    let (lv, lu) = pseudo_peripheral(g, start, scratch);
    let nodes: Vec<usize> = lv.levels.iter().flatten().copied().collect();
    let k = lv.depth();

    match lu {
        None => {
            for (i, level) in lv.levels.iter().enumerate() {
                for &w in level {
                    level_out[w] = level_base + i;
                }
            }
        }
        Some(lu) => {
            // i = distance from v, j = k - distance from u
            let mut li = std::collections::HashMap::with_capacity(nodes.len());
            let mut lj = std::collections::HashMap::with_capacity(nodes.len());
            for (i, level) in lv.levels.iter().enumerate() {
                for &w in level {
                    li.insert(w, i);
                }
            }
            for (d, level) in lu.levels.iter().enumerate() {
                for &w in level {
                    lj.insert(w, k - d.min(k));
                }
            }
            let mut counts = vec![0usize; k + 1];
            let mut pending = Vec::new();
            for &w in &nodes {
                if li[&w] == lj[&w] {
                    level_out[w] = level_base + li[&w];
                    counts[li[&w]] += 1;
                } else {
                    level_out[w] = UNSET;
                    pending.push(w);
                }
            }
            // connected pieces of the unresolved nodes, largest first
            let mut pieces: Vec<Vec<usize>> = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for &w in &pending {
                if !seen.insert(w) {
                    continue;
                }
                let mut piece = vec![w];
                let mut head = 0;
                while head < piece.len() {
                    let x = piece[head];
                    head += 1;
                    for &y in g.neighbours(x) {
                        let y = y as usize;
                        if level_out[y] == UNSET && seen.insert(y) {
                            piece.push(y);
                        }
                    }
                }
                piece.sort_unstable();
                pieces.push(piece);
            }
            pieces.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
            let prefer_v = lv.width() <= lu.width();
            for piece in pieces {
                let mut hi = vec![0usize; k + 1];
                let mut hj = vec![0usize; k + 1];
                for &w in &piece {
                    hi[li[&w]] += 1;
                    hj[lj[&w]] += 1;
                }
                let peak = |h: &[usize]| {
                    (0..=k)
                        .filter(|&l| h[l] > 0)
                        .map(|l| counts[l] + h[l])
                        .max()
                        .unwrap_or(0)
                };
                let (pi, pj) = (peak(&hi), peak(&hj));
                let use_i = pi < pj || (pi == pj && prefer_v);
                for &w in &piece {
                    let l = if use_i { li[&w] } else { lj[&w] };
                    counts[l] += 1;
                    level_out[w] = level_base + l;
                }
            }
        }
    }

    let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); k + 1];
    for &w in &nodes {
        by_level[level_out[w] - level_base].push(w);
    }
    for level in by_level.iter_mut() {
        level.sort_by_key(|&w| (g.degree(w), w));
        order.extend_from_slice(level);
    }
    k + 1
}

/// GPS renumbering plus the level id of every node. Levels are numbered
/// consecutively across components, and each level occupies a contiguous
/// index range of the result.
pub fn gps_levels(g: &PointGraph) -> (Permutation, Vec<usize>) {
    let n = g.len();
    let mut level_out = vec![UNSET; n];
    let mut scratch = vec![UNSET; n];
    let mut order = Vec::with_capacity(n);
    let mut component = vec![false; n];
    let mut level_base = 0;

    for root in 0..n {
        if component[root] {
            continue;
        }
        // collect the component to find its minimum-degree node
        let mut members = vec![root];
        component[root] = true;
        let mut head = 0;
        while head < members.len() {
            let x = members[head];
            head += 1;
            for &y in g.neighbours(x) {
                let y = y as usize;
                if !component[y] {
                    component[y] = true;
                    members.push(y);
                }
            }
        }
        let start = *members.iter().min_by_key(|&&w| (g.degree(w), w)).unwrap();
        level_base += number_component(
            g,
            start,
            &mut scratch,
            level_base,
            &mut level_out,
            &mut order,
        );
    }
    let perm = Permutation::from_order(order).expect("every node numbered once");
    (perm, level_out)
}

pub fn gps_renumber(g: &PointGraph) -> Permutation {
    gps_levels(g).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(nx: usize, ny: usize) -> PointGraph {
        let mut edges = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let u = j * nx + i;
                if i + 1 < nx {
                    edges.push((u, u + 1));
                }
                if j + 1 < ny {
                    edges.push((u, u + nx));
                }
            }
        }
        PointGraph::from_edges(nx * ny, edges)
    }

    fn relabel(g: &PointGraph, p: &Permutation) -> PointGraph {
        PointGraph::from_edges(g.len(), g.edges().map(|(u, v)| (p.new_of(u), p.new_of(v))))
    }

    #[test]
    fn path_gets_bandwidth_one() {
        let g = PointGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]);
        let p = gps_renumber(&g);
        assert_eq!(g.bandwidth(&p), 1);
    }

    #[test]
    fn edgeless_graph() {
        let g = PointGraph::from_edges(5, []);
        let p = gps_renumber(&g);
        assert_eq!(p.len(), 5);
        assert_eq!(g.bandwidth(&p), 0);
    }

    #[test]
    fn shuffled_grid_bandwidth_does_not_grow() {
        let base = grid(8, 8);
        let mut order: Vec<usize> = (0..64).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(7));
        let shuffled = relabel(&base, &Permutation::from_forward(order).unwrap());
        let before = shuffled.bandwidth(&Permutation::identity(64));
        let after = shuffled.bandwidth(&gps_renumber(&shuffled));
        assert!(after <= before, "{after} > {before}");
        assert!(after <= 15);
    }

    #[test]
    fn levels_are_contiguous_and_edges_span_at_most_one_level() {
        let g = grid(7, 5);
        let (p, level) = gps_levels(&g);
        for (u, v) in g.edges() {
            assert!(level[u].abs_diff(level[v]) <= 1);
        }
        for a in 0..g.len() {
            for b in 0..g.len() {
                if level[a] < level[b] {
                    assert!(p.new_of(a) < p.new_of(b));
                }
            }
        }
    }

    #[test]
    fn components_numbered_consecutively() {
        // component {0,3} and {1,2}
        let g = PointGraph::from_edges(4, [(0, 3), (1, 2)]);
        let p = gps_renumber(&g);
        assert!(p.new_of(0) < 2 && p.new_of(3) < 2);
        assert!(p.new_of(1) >= 2 && p.new_of(2) >= 2);
    }
}
