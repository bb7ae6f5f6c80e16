mod common;

use std::collections::HashSet;

use proptest::prelude::*;

use common::{brute_force_lines, max_conflict_degree, max_writers, write_lists};
use meshplan_core::colouring::{
    colour_global, colour_threads_in_block, is_valid_colouring, sort_threads_by_colour, Chooser,
};
use meshplan_core::hw::HardwareDescriptor;
use meshplan_core::kernel::KernelKind;
use meshplan_core::kernels::bind_kernel_data;
use meshplan_core::mesh::{apply_permutation, invert_mapping, transform_layout};
use meshplan_core::partition::{
    build_thread_graph, compute_effective_block_size, partition_kway_with_stats, PartitionConfig,
};
use meshplan_core::plan::{build_plan, Plan, PlanConfig, ReorderMode, Strategy as Scheme};
use meshplan_core::reorder::{gps_levels, mesh_to_graph};
use meshplan_core::sim::{execute, execute_serial, SimOptions};
use meshplan_core::{ElemType, Layout, Mesh, Permutation, Values};

const FLUX: KernelKind = KernelKind::Flux {
    no_indirect_read: false,
};

fn permutation(max: usize) -> impl Strategy<Value = Vec<usize>> {
    (0..=max).prop_flat_map(|n| Just((0..n).collect::<Vec<_>>()).prop_shuffle())
}

/// Random edge-like mesh: `n` elements of `arity` arbitrary points (repeats
/// allowed) over `t` points, with seeded flux data.
fn random_mesh(precision: ElemType) -> impl Strategy<Value = Mesh> {
    (1usize..40, 1usize..=4, 0usize..160, any::<u64>()).prop_flat_map(move |(t, arity, n, seed)| {
        prop::collection::vec(0..t as u32, n * arity).prop_map(move |table| {
            let mut mesh = Mesh::new();
            let cells = mesh.add_set("cells", t).unwrap();
            let edges = mesh.add_set("edges", n).unwrap();
            mesh.add_mapping("edge2cell", edges, cells, arity, table)
                .unwrap();
            bind_kernel_data(&mut mesh, FLUX, precision, seed).unwrap();
            mesh
        })
    })
}

fn shuffled(n: usize, seed: u64) -> Permutation {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| {
        (i as u64 ^ seed)
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .rotate_left(17)
    });
    Permutation::from_order(order).unwrap()
}

fn values(ty: ElemType, len: usize) -> Values {
    match ty {
        ElemType::F64 => Values::F64((0..len).map(|i| i as f64 * 0.5).collect()),
        ElemType::F32 => Values::F32((0..len).map(|i| i as f32).collect()),
        ElemType::I64 => Values::I64((0..len as i64).collect()),
        ElemType::I32 => Values::I32((0..len as i32).collect()),
    }
}

fn plan_config(strategy: Scheme, reorder: ReorderMode, layout: Layout, block: usize) -> PlanConfig {
    PlanConfig {
        strategy,
        reorder,
        layout,
        partition: PartitionConfig::with_block_size(block),
        ..PlanConfig::default()
    }
}

fn any_config() -> impl Strategy<Value = PlanConfig> {
    (
        prop_oneof![Just(Scheme::Global), Just(Scheme::Hierarchical)],
        prop_oneof![
            Just(ReorderMode::None),
            Just(ReorderMode::Gps),
            Just(ReorderMode::Partition)
        ],
        prop_oneof![Just(Layout::Aos), Just(Layout::Soa)],
        // S = 1 leaves S' = 0 under the default tolerance
        2usize..=64,
    )
        .prop_map(|(s, r, l, b)| plan_config(s, r, l, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn permutation_round_trips(forward in permutation(300)) {
        let p = Permutation::from_forward(forward.clone()).unwrap();
        for (old, &new) in forward.iter().enumerate() {
            prop_assert_eq!(p.old_of(new), old);
        }
        prop_assert!(p.then(&p.inverted()).is_identity());
        prop_assert_eq!(Permutation::from_text(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn layout_round_trip_is_identity(
        size in 0usize..=64,
        comps in 1usize..=16,
        ty in prop_oneof![Just(ElemType::F64), Just(ElemType::F32), Just(ElemType::I64), Just(ElemType::I32)],
    ) {
        let mut mesh = Mesh::new();
        let set = mesh.add_set("s", size).unwrap();
        mesh.add_data("d", set, comps, Layout::Aos, values(ty, size * comps)).unwrap();
        let d = mesh.array("d").unwrap();
        let soa = transform_layout(d, Layout::Soa);
        for i in 0..size {
            for c in 0..comps {
                prop_assert_eq!(soa.values.format_entry(soa.index(i, c)), d.values.format_entry(d.index(i, c)));
            }
        }
        prop_assert_eq!(&transform_layout(&soa, Layout::Aos), d);
    }

    #[test]
    fn permutation_then_inverse_restores_mesh(mesh in random_mesh(ElemType::F64), seed in any::<u64>()) {
        for set in ["cells", "edges"] {
            let h = mesh.set(set).unwrap();
            let p = shuffled(h.size, seed);
            let there = apply_permutation(&mesh, h, &p).unwrap();
            prop_assert_eq!(&apply_permutation(&there, h, &p.inverted()).unwrap(), &mesh);
        }
    }

    #[test]
    fn serial_output_commutes_with_renumbering(mesh in random_mesh(ElemType::I64), seed in any::<u64>()) {
        let kernel = FLUX.bind(&mesh).unwrap();
        let cells = mesh.set("cells").unwrap();
        let p = shuffled(cells.size, seed);
        let direct = execute_serial(&mesh, &kernel).unwrap();
        let renumbered = execute_serial(&apply_permutation(&mesh, cells, &p).unwrap(), &kernel).unwrap();
        prop_assert_eq!(apply_permutation(&renumbered, cells, &p.inverted()).unwrap(), direct);
    }

    #[test]
    fn inverse_index_holds_every_entry_once(mesh in random_mesh(ElemType::F64)) {
        let m = mesh.mapping("edge2cell").unwrap();
        let inv = invert_mapping(m);
        let mut pairs = Vec::new();
        for t in 0..m.to.size {
            for &(e, s) in inv.refs(t) {
                prop_assert_eq!(m.get(e as usize, s as usize), t);
                pairs.push((e, s));
            }
        }
        pairs.sort_unstable();
        let expected: Vec<(u32, u32)> = (0..m.from.size)
            .flat_map(|e| (0..m.arity).map(move |s| (e as u32, s as u32)))
            .collect();
        prop_assert_eq!(pairs, expected);
    }

    #[test]
    fn gps_is_level_contiguous_bijection(mesh in random_mesh(ElemType::F64)) {
        let m = mesh.mapping("edge2cell").unwrap();
        let g = mesh_to_graph(m);
        let bound: usize = m.rows().map(|r| {
            let k = r.iter().collect::<HashSet<_>>().len();
            k * (k - 1) / 2
        }).sum();
        prop_assert!(g.edge_count() <= bound);
        let (perm, levels) = gps_levels(&g);
        prop_assert_eq!(perm.len(), g.len());
        let mut seen = vec![false; g.len()];
        for u in 0..g.len() {
            prop_assert!(!std::mem::replace(&mut seen[perm.new_of(u)], true));
        }
        let mut by_new: Vec<usize> = (0..g.len()).map(|i| levels[perm.old_of(i)]).collect();
        let sorted = { let mut s = by_new.clone(); s.sort_unstable(); s };
        prop_assert_eq!(&by_new, &sorted);
        by_new.dedup();
        prop_assert!(by_new.iter().enumerate().all(|(i, &l)| i == l));
    }

    #[test]
    fn global_colouring_is_valid_and_bounded(
        mesh in random_mesh(ElemType::F64),
        chooser in prop_oneof![Just(Chooser::LeastLoaded), Just(Chooser::FirstFit)],
    ) {
        let m = mesh.mapping("edge2cell").unwrap();
        let written = vec![true; m.arity];
        let lists = write_lists(m, &written, 0..m.from.size);
        let col = colour_global(m, &written, chooser);
        prop_assert!(is_valid_colouring(&lists, &col.colours));
        prop_assert!(col.num_colours >= max_writers(&lists));
        prop_assert!(col.num_colours <= max_conflict_degree(&lists) + 1);
        prop_assert!(col.counts.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn thread_colouring_bounds_and_sorting(mesh in random_mesh(ElemType::F64), block in 1usize..=128) {
        let m = mesh.mapping("edge2cell").unwrap();
        let written = vec![true; m.arity];
        let elems: Vec<usize> = (0..m.from.size).collect();
        for chunk in elems.chunks(block) {
            let lists = write_lists(m, &written, chunk.iter().copied());
            let col = colour_threads_in_block(chunk, m, &written);
            prop_assert!(is_valid_colouring(&lists, &col.colours));
            prop_assert!(col.num_colours >= max_writers(&lists));
            prop_assert!(col.num_colours <= max_conflict_degree(&lists) + 1);
            let sort = sort_threads_by_colour(&col);
            let sorted: Vec<usize> = (0..chunk.len()).map(|i| col.colours[sort.old_of(i)]).collect();
            prop_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn partitions_respect_size_and_balance(
        mesh in random_mesh(ElemType::F64),
        s in 1usize..=64,
        l in 1.0f64..2.0,
        eps in 0.0f64..2.0,
    ) {
        let m = mesh.mapping("edge2cell").unwrap();
        let cfg = PartitionConfig { block_size: s, imbalance: l, epsilon: eps, ..PartitionConfig::default() };
        let Ok((_, l_eff)) = compute_effective_block_size(&cfg) else {
            prop_assert!((s as f64 / l).floor() < 1.0);
            return Ok(());
        };
        let g = build_thread_graph(&[m]);
        let (part, stats) = partition_kway_with_stats(&g, &cfg).unwrap();
        prop_assert_eq!(part.len(), m.from.size);
        let sizes = part.block_sizes();
        prop_assert!(sizes.iter().all(|&z| z >= 1 && z <= s));
        prop_assert_eq!(sizes.iter().sum::<usize>(), m.from.size);
        if !part.over_tolerance {
            prop_assert!(part.imbalance() <= l_eff + 1e-12);
        }
        prop_assert!(stats.refinement_passes.iter().all(|&(a, b)| b <= a));
    }

    #[test]
    fn hierarchical_plans_are_well_formed(mesh in random_mesh(ElemType::F64), cfg in any_config()) {
        let kernel = FLUX.bind(&mesh).unwrap();
        let cfg = PlanConfig { strategy: Scheme::Hierarchical, ..cfg };
        let Plan::Hierarchical(p) = build_plan(&mesh, &kernel, &cfg, &HardwareDescriptor::p100()).unwrap() else {
            unreachable!()
        };
        prop_assert!(p.reuse_factor() >= 1.0);
        let m = mesh.mapping("edge2cell").unwrap();
        let n = p.common.from_size;
        for b in 0..p.num_blocks() {
            let range = p.block_range(b);
            prop_assert!(!range.is_empty() && range.len() <= cfg.partition.block_size);
            let list = p.stage_list(b);
            prop_assert!(list.windows(2).all(|w| w[0] < w[1]));
            let mut used = vec![false; list.len()];
            for new_e in range {
                let old_e = p.common.element_perm.old_of(new_e);
                for s in (0..m.arity).filter(|&s| p.staged_slots[s]) {
                    let l = p.local(s, new_e) as usize;
                    prop_assert!(l < list.len());
                    let point = p.common.point_perm.new_of(m.get(old_e, s));
                    prop_assert_eq!(list[l] as usize, point);
                    used[l] = true;
                }
            }
            // every staged point is referenced by the block
            prop_assert!(used.iter().all(|&u| u));
        }
        prop_assert_eq!(p.thread_colours.len(), n);
    }

    #[test]
    fn parallel_runs_match_serial_exactly(mesh in random_mesh(ElemType::I64), cfg in any_config()) {
        let kernel = FLUX.bind(&mesh).unwrap();
        let hw = HardwareDescriptor::p100();
        let plan = build_plan(&mesh, &kernel, &cfg, &hw).unwrap();
        let run = execute(&mesh, &plan, &kernel, &hw, &SimOptions::default()).unwrap();
        prop_assert_eq!(run.mesh, execute_serial(&mesh, &kernel).unwrap());
        if let Plan::Hierarchical(p) = &plan {
            prop_assert_eq!(run.metrics.per_block.len(), p.num_blocks());
            for (b, rec) in run.metrics.per_block.iter().enumerate() {
                prop_assert_eq!(rec.thread_colours, p.num_thread_colours[b]);
                prop_assert_eq!(rec.syncs, rec.thread_colours + 2);
            }
            prop_assert!(run.metrics.warp_efficiency > 0.0 && run.metrics.warp_efficiency <= 1.0);
        }
    }

    #[test]
    fn float_runs_match_serial_within_tolerance(mesh in random_mesh(ElemType::F64), cfg in any_config()) {
        let kernel = FLUX.bind(&mesh).unwrap();
        let hw = HardwareDescriptor::p100();
        let plan = build_plan(&mesh, &kernel, &cfg, &hw).unwrap();
        let run = execute(&mesh, &plan, &kernel, &hw, &SimOptions::default()).unwrap();
        let v = run.verification.unwrap();
        prop_assert!(v.passed, "{:?}", v);
    }

    #[test]
    fn traced_lines_match_brute_force(mesh in random_mesh(ElemType::F32), cfg in any_config(), wide in any::<bool>()) {
        let kernel = FLUX.bind(&mesh).unwrap();
        let hw = HardwareDescriptor::p100();
        let plan = build_plan(&mesh, &kernel, &cfg, &hw).unwrap();
        let opts = SimOptions { trace: true, wide, ..SimOptions::default() };
        let run = execute(&mesh, &plan, &kernel, &hw, &opts).unwrap();
        let trace = run.trace.unwrap();
        prop_assert_eq!(
            brute_force_lines(&trace, hw.cache_line_bytes as u64),
            (run.metrics.read_transactions, run.metrics.write_transactions)
        );
    }
}

/// Sorting threads by colour never raises the number of distinct colours
/// summed over the warps of a block. Checked on generated meshes only.
#[test]
fn sorting_does_not_add_warp_colours_on_generated_meshes() {
    use meshplan_core::kernels::quasi_uniform_suite;
    let distinct = |colours: &[usize]| -> usize {
        colours
            .chunks(32)
            .map(|w| w.iter().collect::<HashSet<_>>().len())
            .sum()
    };
    for (label, mesh) in quasi_uniform_suite(8, 11) {
        let m = &mesh.mappings()[0];
        let written = vec![true; m.arity];
        let elems: Vec<usize> = (0..m.from.size).collect();
        for chunk in elems.chunks(128) {
            let col = colour_threads_in_block(chunk, m, &written);
            let sort = sort_threads_by_colour(&col);
            let sorted: Vec<usize> = (0..chunk.len())
                .map(|i| col.colours[sort.old_of(i)])
                .collect();
            assert!(distinct(&sorted) <= distinct(&col.colours), "{label}");
        }
    }
}
