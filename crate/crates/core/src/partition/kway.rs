//! Multilevel k-way partitioner: heavy-edge coarsening, recursive-bisection
//! initial partition, boundary refinement on the way back up.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{compute_effective_block_size, Partition, PartitionConfig, ThreadGraph};
use crate::error::Result;

const MAX_REFINE_PASSES: usize = 8;

/// Ranking of a balance move: adjacent target first, then gain, then lowest node.
type MoveKey = (bool, i64, Reverse<usize>);

/// Diagnostics from one partitioner run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KwayStats {
    /// Node count per level, finest first.
    pub level_sizes: Vec<usize>,
    /// Cut weight before and after every refinement pass, in execution order.
    pub refinement_passes: Vec<(u64, u64)>,
    pub initial_cut: u64,
    pub final_cut: u64,
    pub target_blocks: usize,
    /// Largest block weight allowed by the balance constraint.
    pub max_block: usize,
}

#[derive(Clone, Debug)]
struct Level {
    vwgt: Vec<u64>,
    xadj: Vec<usize>,
    adj: Vec<usize>,
    ewgt: Vec<u64>,
}

impl Level {
    fn from_graph(g: &ThreadGraph, unweighted: bool) -> Self {
        Level {
            vwgt: vec![1; g.len()],
            xadj: g.offsets.clone(),
            adj: g.adj.clone(),
            ewgt: if unweighted {
                vec![1; g.adj.len()]
            } else {
                g.weights.clone()
            },
        }
    }

    fn len(&self) -> usize {
        self.vwgt.len()
    }

    fn edges(&self, u: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        let r = self.xadj[u]..self.xadj[u + 1];
        self.adj[r.clone()]
            .iter()
            .copied()
            .zip(self.ewgt[r].iter().copied())
    }

    fn cut(&self, part: &[usize]) -> u64 {
        let mut cut = 0;
        for u in 0..self.len() {
            for (v, w) in self.edges(u) {
                if u < v && part[u] != part[v] {
                    cut += w;
                }
            }
        }
        cut
    }
}

/// Heavy-edge matching in a random visiting order. Returns the coarse graph
/// and the fine-to-coarse map.
fn coarsen(g: &Level, max_vwgt: u64, rng: &mut ChaCha8Rng) -> (Level, Vec<usize>) {
    let n = g.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut mate = vec![usize::MAX; n];
    for &u in &order {
        if mate[u] != usize::MAX {
            continue;
        }
        let mut best: Option<(u64, Reverse<u64>, Reverse<usize>)> = None;
        for (v, w) in g.edges(u) {
            if mate[v] != usize::MAX || g.vwgt[u] + g.vwgt[v] > max_vwgt {
                continue;
            }
            let key = (w, Reverse(g.vwgt[v]), Reverse(v));
            if best.is_none_or(|b| key > b) {
                best = Some(key);
            }
        }
        match best {
            Some((_, _, Reverse(v))) => {
                mate[u] = v;
                mate[v] = u;
            }
            None => mate[u] = u,
        }
    }

    let mut cmap = vec![usize::MAX; n];
    let mut nc = 0;
    for u in 0..n {
        if cmap[u] == usize::MAX {
            cmap[u] = nc;
            cmap[mate[u]] = nc;
            nc += 1;
        }
    }
    let mut members = vec![Vec::with_capacity(2); nc];
    for u in 0..n {
        members[cmap[u]].push(u);
    }

    let mut vwgt = vec![0; nc];
    let mut xadj = Vec::with_capacity(nc + 1);
    xadj.push(0);
    let mut adj = Vec::new();
    let mut ewgt = Vec::new();
    let mut slot = vec![usize::MAX; nc];
    for c in 0..nc {
        let start = adj.len();
        for &u in &members[c] {
            vwgt[c] += g.vwgt[u];
            for (v, w) in g.edges(u) {
                let cv = cmap[v];
                if cv == c {
                    continue;
                }
                if slot[cv] == usize::MAX {
                    slot[cv] = adj.len();
                    adj.push(cv);
                    ewgt.push(w);
                } else {
                    ewgt[slot[cv]] += w;
                }
            }
        }
        for &cv in &adj[start..] {
            slot[cv] = usize::MAX;
        }
        xadj.push(adj.len());
    }
    (
        Level {
            vwgt,
            xadj,
            adj,
            ewgt,
        },
        cmap,
    )
}

/// Grows a region from a far-away seed until it holds about `target`
/// weight; returns membership flags indexed like `nodes`.
fn grow_region(g: &Level, nodes: &[usize], local: &[usize], target: u64) -> Vec<bool> {
    let m = nodes.len();
    let mut in_region = vec![false; m];
    if m == 0 {
        return in_region;
    }
    // farthest node from nodes[0] inside the subgraph
    let mut dist = vec![usize::MAX; m];
    let mut queue = VecDeque::from([0usize]);
    dist[0] = 0;
    let mut seed = 0;
    while let Some(i) = queue.pop_front() {
        seed = i;
        for (v, _) in g.edges(nodes[i]) {
            let j = local[v];
            if j != usize::MAX && dist[j] == usize::MAX {
                dist[j] = dist[i] + 1;
                queue.push_back(j);
            }
        }
    }

    let mut conn = vec![0u64; m];
    let mut heap = BinaryHeap::new();
    heap.push((0u64, Reverse(seed)));
    let mut weight = 0u64;
    let mut next_unvisited = 0;
    loop {
        let i = match heap.pop() {
            Some((c, Reverse(i))) => {
                if in_region[i] || c != conn[i] {
                    continue;
                }
                i
            }
            None => {
                while next_unvisited < m && in_region[next_unvisited] {
                    next_unvisited += 1;
                }
                if next_unvisited == m {
                    break;
                }
                next_unvisited
            }
        };
        let w = g.vwgt[nodes[i]];
        if weight > 0 && weight + w > target && weight + w - target > target - weight {
            break;
        }
        in_region[i] = true;
        weight += w;
        if weight >= target {
            break;
        }
        for (v, ew) in g.edges(nodes[i]) {
            let j = local[v];
            if j != usize::MAX && !in_region[j] {
                conn[j] += ew;
                heap.push((conn[j], Reverse(j)));
            }
        }
    }
    in_region
}

/// Positive-gain boundary moves between the two sides of a bisection that
/// keep each side within `slack` of its target.
fn refine_bisection(
    g: &Level,
    nodes: &[usize],
    local: &[usize],
    side: &mut [bool],
    targets: [u64; 2],
    slack: u64,
) {
    let mut weight = [0u64; 2];
    for (i, &u) in nodes.iter().enumerate() {
        weight[side[i] as usize] += g.vwgt[u];
    }
    for _ in 0..MAX_REFINE_PASSES {
        let mut moved = false;
        for (i, &u) in nodes.iter().enumerate() {
            let from = side[i] as usize;
            let to = 1 - from;
            let (mut internal, mut external) = (0u64, 0u64);
            for (v, w) in g.edges(u) {
                let j = local[v];
                if j == usize::MAX {
                    continue;
                }
                if side[j] as usize == from {
                    internal += w;
                } else {
                    external += w;
                }
            }
            let vw = g.vwgt[u];
            if external > internal && weight[to] + vw <= targets[to] + slack {
                side[i] = !side[i];
                weight[from] -= vw;
                weight[to] += vw;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

fn recursive_bisection(
    g: &Level,
    nodes: Vec<usize>,
    first: usize,
    k: usize,
    local: &mut [usize],
    part: &mut [usize],
) {
    if k == 1 || nodes.len() <= 1 {
        for u in nodes {
            part[u] = first;
        }
        return;
    }
    let k1 = k / 2;
    let total: u64 = nodes.iter().map(|&u| g.vwgt[u]).sum();
    let target = (total as u128 * k1 as u128 / k as u128) as u64;
    for (i, &u) in nodes.iter().enumerate() {
        local[u] = i;
    }
    let mut side = grow_region(g, &nodes, local, target);
    let max_w = nodes.iter().map(|&u| g.vwgt[u]).max().unwrap_or(1);
    refine_bisection(
        g,
        &nodes,
        local,
        &mut side,
        [total - target, target],
        max_w / 2,
    );
    for &u in &nodes {
        local[u] = usize::MAX;
    }
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (i, u) in nodes.into_iter().enumerate() {
        if side[i] {
            left.push(u);
        } else {
            right.push(u);
        }
    }
    recursive_bisection(g, left, first, k1, local, part);
    recursive_bisection(g, right, first + k1, k - k1, local, part);
}

/// Connection weight of `u` to every adjacent part, accumulated in `conn`
/// with the touched parts listed in `touched`.
fn connections(g: &Level, part: &[usize], u: usize, conn: &mut [u64], touched: &mut Vec<usize>) {
    for &p in touched.iter() {
        conn[p] = 0;
    }
    touched.clear();
    for (v, w) in g.edges(u) {
        let p = part[v];
        if conn[p] == 0 {
            touched.push(p);
        }
        conn[p] += w;
    }
}

/// One boundary pass: move a node to the adjacent part it is most connected
/// to when that lowers the cut, or keeps it and improves balance. Returns
/// whether anything moved.
fn refine_pass(g: &Level, part: &mut [usize], pw: &mut [u64], cap: u64) -> bool {
    let mut conn = vec![0u64; pw.len()];
    let mut touched = Vec::new();
    let mut moved = false;
    for u in 0..g.len() {
        let a = part[u];
        connections(g, part, u, &mut conn, &mut touched);
        if touched.iter().all(|&p| p == a) {
            continue;
        }
        let vw = g.vwgt[u];
        let internal = conn[a];
        let mut best: Option<(u64, Reverse<u64>, Reverse<usize>)> = None;
        for &b in &touched {
            if b == a || pw[b] + vw > cap {
                continue;
            }
            let key = (conn[b], Reverse(pw[b]), Reverse(b));
            if best.is_none_or(|k| key > k) {
                best = Some(key);
            }
        }
        let Some((external, _, Reverse(b))) = best else {
            continue;
        };
        let accept = external > internal || (external == internal && pw[a] > pw[b] + vw);
        if accept {
            part[u] = b;
            pw[a] -= vw;
            pw[b] += vw;
            moved = true;
        }
    }
    for &p in &touched {
        conn[p] = 0;
    }
    moved
}

/// Moves nodes out of parts heavier than `cap`, preferring adjacent parts
/// and the smallest cut increase. Best effort when nodes are too heavy.
fn balance_pass(g: &Level, part: &mut [usize], pw: &mut [u64], cap: u64) {
    let k = pw.len();
    if pw.iter().all(|&w| w <= cap) {
        return;
    }
    let mut members = vec![Vec::new(); k];
    for (u, &p) in part.iter().enumerate() {
        members[p].push(u);
    }
    let mut conn = vec![0u64; k];
    let mut touched = Vec::new();
    for a in 0..k {
        while pw[a] > cap {
            // ((adjacent, gain, -index), node, target) for the best move out of `a`
            let mut best: Option<(MoveKey, usize, usize)> = None;
            for &u in &members[a] {
                connections(g, part, u, &mut conn, &mut touched);
                let vw = g.vwgt[u];
                for &b in &touched {
                    if b == a || pw[b] + vw > cap {
                        continue;
                    }
                    let key = (true, conn[b] as i64 - conn[a] as i64, Reverse(u));
                    if best.as_ref().is_none_or(|(k, _, _)| key > *k) {
                        best = Some((key, u, b));
                    }
                }
            }
            if best.is_none() {
                // nothing fits next door: send the loosest node to the lightest part
                let lightest = (0..k).filter(|&b| b != a).min_by_key(|&b| (pw[b], b));
                if let Some(b) = lightest {
                    for &u in &members[a] {
                        if pw[b] + g.vwgt[u] > cap {
                            continue;
                        }
                        connections(g, part, u, &mut conn, &mut touched);
                        let key = (false, -(conn[a] as i64), Reverse(u));
                        if best.as_ref().is_none_or(|(k, _, _)| key > *k) {
                            best = Some((key, u, b));
                        }
                    }
                }
            }
            let Some((_, u, b)) = best else {
                break;
            };
            part[u] = b;
            pw[a] -= g.vwgt[u];
            pw[b] += g.vwgt[u];
            members[a].retain(|&x| x != u);
            members[b].push(u);
        }
    }
    for &p in &touched {
        conn[p] = 0;
    }
}

fn refine(g: &Level, part: &mut [usize], pw: &mut [u64], cap: u64, stats: &mut KwayStats) {
    for _ in 0..MAX_REFINE_PASSES {
        let before = g.cut(part);
        let moved = refine_pass(g, part, pw, cap);
        let after = g.cut(part);
        assert!(after <= before, "refinement pass raised the cut");
        stats.refinement_passes.push((before, after));
        if !moved || after == before && pw.iter().all(|&w| w <= cap) {
            break;
        }
    }
}

pub fn partition_kway(g: &ThreadGraph, cfg: &PartitionConfig) -> Result<Partition> {
    partition_kway_with_stats(g, cfg).map(|(p, _)| p)
}

/// Partitions `g` into `ceil(n / S')` blocks of at most
/// `max(ceil(n / k), min(S, floor(l' n / k)))` elements.
pub fn partition_kway_with_stats(
    g: &ThreadGraph,
    cfg: &PartitionConfig,
) -> Result<(Partition, KwayStats)> {
    let (s_eff, l_eff) = compute_effective_block_size(cfg)?;
    let n = g.len();
    let mut stats = KwayStats::default();
    if n == 0 {
        return Ok((Partition::from_assignment(Vec::new()), stats));
    }
    let k = n.div_ceil(s_eff);
    let ideal = n as f64 / k as f64;
    let cap = ((l_eff * ideal).floor() as usize)
        .min(cfg.block_size)
        .max(n.div_ceil(k));
    stats.target_blocks = k;
    stats.max_block = cap;
    if k == 1 {
        return Ok((Partition::from_assignment(vec![0; n]), stats));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let coarsen_to = (2 * k).max(64);
    let max_vwgt = ((3 * n).div_ceil(2 * coarsen_to) as u64).max(1);
    let mut levels = vec![Level::from_graph(g, cfg.unweighted)];
    let mut maps: Vec<Vec<usize>> = Vec::new();
    stats.level_sizes.push(n);
    while levels.last().unwrap().len() > coarsen_to {
        let (coarse, cmap) = coarsen(levels.last().unwrap(), max_vwgt, &mut rng);
        let fine_len = levels.last().unwrap().len();
        // stop when matching no longer shrinks the graph noticeably
        if coarse.len() * 20 > fine_len * 19 {
            break;
        }
        stats.level_sizes.push(coarse.len());
        levels.push(coarse);
        maps.push(cmap);
    }

    let coarsest = levels.last().unwrap();
    let mut part = vec![0usize; coarsest.len()];
    let mut local = vec![usize::MAX; coarsest.len()];
    recursive_bisection(
        coarsest,
        (0..coarsest.len()).collect(),
        0,
        k,
        &mut local,
        &mut part,
    );
    stats.initial_cut = coarsest.cut(&part);

    let cap_w = cap as u64;
    for depth in (0..levels.len()).rev() {
        let level = &levels[depth];
        if depth + 1 < levels.len() {
            let cmap = &maps[depth];
            part = cmap.iter().map(|&c| part[c]).collect();
        }
        let mut pw = vec![0u64; k];
        for (u, &p) in part.iter().enumerate() {
            pw[p] += level.vwgt[u];
        }
        balance_pass(level, &mut part, &mut pw, cap_w);
        refine(level, &mut part, &mut pw, cap_w, &mut stats);
    }

    // drop empty blocks and renumber densely in order of first appearance
    let mut remap = vec![usize::MAX; k];
    let mut next = 0;
    for p in part.iter_mut() {
        if remap[*p] == usize::MAX {
            remap[*p] = next;
            next += 1;
        }
        *p = remap[*p];
    }
    let mut result = Partition::from_assignment(part);
    let max_size = result.block_sizes().into_iter().max().unwrap_or(0);
    result.over_tolerance = max_size > cfg.block_size || result.imbalance() > l_eff;
    stats.final_cut = result.cut_weight(&if cfg.unweighted {
        g.unweighted()
    } else {
        g.clone()
    });
    Ok((result, stats))
}
