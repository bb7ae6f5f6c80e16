use super::{
    mapping_hash, GlobalPlan, HierarchicalPlan, Plan, PlanCommon, PlanConfig, ReorderMode,
    StagingPolicy, Strategy,
};
use crate::colouring::{
    colour_blocks, colour_global, colour_threads_in_block, sort_threads_by_colour, Chooser,
};
use crate::error::{Error, Result};
use crate::hw::HardwareDescriptor;
use crate::kernel::{Access, KernelSpec};
use crate::mesh::{validate_mesh, ElemType, Mapping, Mesh};
use crate::partition::{build_thread_graph, partition_kway, partition_structured_hex, Partition};
use crate::perm::Permutation;
use crate::reorder::{
    gps_renumber, lex_sort_elements, mesh_to_graph, reorder_points_by_writer_sets,
};

pub fn build_plan(
    mesh: &Mesh,
    kernel: &KernelSpec,
    cfg: &PlanConfig,
    hw: &HardwareDescriptor,
) -> Result<Plan> {
    match cfg.strategy {
        Strategy::Global => build_global_plan(mesh, kernel, cfg).map(Plan::Global),
        Strategy::Hierarchical => {
            build_hierarchical_plan(mesh, kernel, cfg, hw).map(Plan::Hierarchical)
        }
    }
}

/// Element type shared by every array the kernel touches.
pub(crate) fn kernel_precision(mesh: &Mesh, kernel: &KernelSpec) -> Result<ElemType> {
    let first = kernel
        .sig
        .arrays()
        .into_iter()
        .next()
        .ok_or_else(|| Error::validation("kernel has no arguments"))?;
    let d = mesh
        .array(&first.array)
        .ok_or_else(|| Error::validation(format!("unknown data array `{}`", first.array)))?;
    let ty = d.elem_type();
    kernel.sig.validate(mesh, ty)?;
    Ok(ty)
}

/// Result of the reordering stage, in original numbering.
struct Ordering {
    /// `order[new] = old` for the iteration set.
    order: Vec<usize>,
    /// Block id of every position of `order` (non-decreasing), if the
    /// reordering produced blocks.
    blocks: Option<Vec<usize>>,
    point_perm: Option<Permutation>,
    over_tolerance: bool,
}

fn group_by_partition(part: &Partition) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..part.len()).collect();
    order.sort_by_key(|&e| part.assignment[e]);
    let blocks = order.iter().map(|&e| part.assignment[e]).collect();
    (order, blocks)
}

fn reorder(mesh: &Mesh, m: &Mapping, cfg: &PlanConfig) -> Result<Ordering> {
    let n = m.from.size;
    Ok(match cfg.reorder {
        ReorderMode::None => Ordering {
            order: (0..n).collect(),
            blocks: None,
            point_perm: None,
            over_tolerance: false,
        },
        ReorderMode::Gps => {
            let pp = gps_renumber(&mesh_to_graph(m));
            let ep = lex_sort_elements(m, &pp);
            Ordering {
                order: ep.inverse().to_vec(),
                blocks: None,
                point_perm: Some(pp),
                over_tolerance: false,
            }
        }
        ReorderMode::Partition => {
            let maps: Vec<&Mapping> = mesh
                .mappings()
                .iter()
                .filter(|x| x.from == m.from)
                .collect();
            let g = build_thread_graph(&maps);
            let part = partition_kway(&g, &cfg.partition)?;
            let (order, blocks) = group_by_partition(&part);
            Ordering {
                order,
                blocks: Some(blocks),
                point_perm: None,
                over_tolerance: part.over_tolerance,
            }
        }
        ReorderMode::Structured(shape) => {
            let info = mesh
                .structured()
                .filter(|s| s.mapping == m.name)
                .ok_or_else(|| {
                    Error::validation(format!(
                        "structured reordering needs a generated hex mesh iterating over `{}`",
                        m.name
                    ))
                })?;
            let part = partition_structured_hex(info.dims, shape, info.target)?;
            let (order, blocks) = group_by_partition(&part);
            Ordering {
                order,
                blocks: Some(blocks),
                point_perm: Some(Permutation::identity(m.to.size)),
                over_tolerance: false,
            }
        }
    })
}

fn common(
    mesh: &Mesh,
    kernel: &KernelSpec,
    cfg: &PlanConfig,
) -> Result<(Mapping, ElemType, Vec<bool>)> {
    validate_mesh(mesh).into_result()?;
    let precision = kernel_precision(mesh, kernel)?;
    if cfg.partition.block_size == 0 {
        return Err(Error::validation("block size must be positive"));
    }
    let m = mesh.mapping(&kernel.sig.mapping).unwrap().clone();
    Ok((m, precision, kernel.sig.written_slots()))
}

fn plan_common(
    kernel: &KernelSpec,
    cfg: &PlanConfig,
    m: &Mapping,
    precision: ElemType,
    order: Vec<usize>,
    point_perm: Permutation,
) -> Result<PlanCommon> {
    Ok(PlanCommon {
        kernel: kernel.name().to_string(),
        precision,
        mapping: m.name.clone(),
        arity: m.arity,
        from_size: m.from.size,
        to_size: m.to.size,
        mapping_hash: mapping_hash(m),
        reorder: cfg.reorder,
        layout: cfg.layout,
        block_size: cfg.partition.block_size,
        element_perm: Permutation::from_order(order)?,
        point_perm,
    })
}

/// Mapping rows listed in `order` (points keep their numbering).
fn rows_in_order(m: &Mapping, order: &[usize]) -> Mapping {
    let mut table = Vec::with_capacity(m.table.len());
    for &e in order {
        table.extend_from_slice(m.row(e));
    }
    Mapping { table, ..m.clone() }
}

pub fn build_global_plan(mesh: &Mesh, kernel: &KernelSpec, cfg: &PlanConfig) -> Result<GlobalPlan> {
    let (m, precision, written) = common(mesh, kernel, cfg)?;
    let ord = reorder(mesh, &m, cfg)?;
    let point_perm = match (&ord.point_perm, &ord.blocks) {
        (Some(p), _) => p.clone(),
        (None, Some(blocks)) => {
            let mut assignment = vec![0; m.from.size];
            for (pos, &e) in ord.order.iter().enumerate() {
                assignment[e] = blocks[pos];
            }
            reorder_points_by_writer_sets(&m, &Partition::from_assignment(assignment))
        }
        (None, None) => Permutation::identity(m.to.size),
    };
    let colours = colour_global(
        &rows_in_order(&m, &ord.order),
        &written,
        Chooser::LeastLoaded,
    );
    let mut positions: Vec<usize> = (0..ord.order.len()).collect();
    positions.sort_by_key(|&p| colours.colours[p]);
    let order: Vec<usize> = positions.iter().map(|&p| ord.order[p]).collect();
    let mut colour_offsets = vec![0];
    for &count in &colours.counts {
        colour_offsets.push(colour_offsets.last().unwrap() + count);
    }
    if colour_offsets.len() == 1 {
        colour_offsets.push(0);
    }
    Ok(GlobalPlan {
        common: plan_common(kernel, cfg, &m, precision, order, point_perm)?,
        colour_offsets,
    })
}

/// Halves every block larger than `limit` at its midpoint until all fit.
fn split_blocks(blocks: Vec<Vec<usize>>, limit: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(blocks.len());
    let mut stack: Vec<Vec<usize>> = Vec::new();
    for b in blocks {
        stack.push(b);
        while let Some(b) = stack.pop() {
            if b.len() <= limit {
                if !b.is_empty() {
                    out.push(b);
                }
            } else {
                let mid = b.len() / 2;
                let right = b[mid..].to_vec();
                let mut left = b;
                left.truncate(mid);
                stack.push(right);
                stack.push(left);
            }
        }
    }
    out
}

pub fn build_hierarchical_plan(
    mesh: &Mesh,
    kernel: &KernelSpec,
    cfg: &PlanConfig,
    hw: &HardwareDescriptor,
) -> Result<HierarchicalPlan> {
    let (m, precision, written) = common(mesh, kernel, cfg)?;
    let n = m.from.size;
    let limit = cfg.partition.block_size;
    let ord = reorder(mesh, &m, cfg)?;

    let blocks: Vec<Vec<usize>> = match &ord.blocks {
        None => ord.order.chunks(limit).map(<[usize]>::to_vec).collect(),
        Some(ids) => {
            let mut out: Vec<Vec<usize>> = Vec::new();
            for (pos, &e) in ord.order.iter().enumerate() {
                if pos == 0 || ids[pos] != ids[pos - 1] {
                    out.push(Vec::new());
                }
                out.last_mut().unwrap().push(e);
            }
            out
        }
    };
    let blocks = split_blocks(blocks, limit);

    let mut assignment = vec![0; n];
    for (b, elems) in blocks.iter().enumerate() {
        for &e in elems {
            assignment[e] = b;
        }
    }
    let block_colouring = colour_blocks(&Partition::from_assignment(assignment), &m, &written);
    let mut block_order: Vec<usize> = (0..blocks.len()).collect();
    block_order.sort_by_key(|&b| block_colouring.colours[b]);

    let mut order = Vec::with_capacity(n);
    let mut block_offsets = vec![0];
    let mut block_colours = Vec::with_capacity(blocks.len());
    let mut thread_colours = Vec::with_capacity(n);
    let mut num_thread_colours = Vec::with_capacity(blocks.len());
    let mut final_block = vec![0; n];
    for (fb, &b) in block_order.iter().enumerate() {
        let elems = &blocks[b];
        let tc = colour_threads_in_block(elems, &m, &written);
        let sorted = sort_threads_by_colour(&tc);
        for &t in sorted.inverse() {
            order.push(elems[t]);
            thread_colours.push(tc.colours[t]);
            final_block[elems[t]] = fb;
        }
        block_offsets.push(order.len());
        block_colours.push(block_colouring.colours[b]);
        num_thread_colours.push(tc.num_colours);
    }
    let mut block_colour_offsets = vec![0];
    for &count in &block_colouring.counts {
        block_colour_offsets.push(block_colour_offsets.last().unwrap() + count);
    }
    if block_colour_offsets.len() == 1 {
        block_colour_offsets.push(0);
    }

    let point_perm = match (cfg.reorder, ord.point_perm) {
        (_, Some(p)) => p,
        (ReorderMode::Partition, None) => {
            reorder_points_by_writer_sets(&m, &Partition::from_assignment(final_block))
        }
        _ => Permutation::identity(m.to.size),
    };

    let staged: Vec<_> = kernel
        .sig
        .arrays()
        .into_iter()
        .filter(|u| u.indirect && (cfg.staging == StagingPolicy::All || u.access == Access::Inc))
        .collect();
    let mut staged_slots = vec![false; m.arity];
    for u in &staged {
        for &s in &u.slots {
            staged_slots[s] = true;
        }
    }
    let point_bytes: usize =
        staged.iter().map(|u| u.components).sum::<usize>() * precision.size_bytes();

    let mut stage_offsets = vec![0];
    let mut stage_points: Vec<u32> = Vec::new();
    let mut local_map = vec![u32::MAX; m.arity * n];
    let mut shared_bytes = Vec::with_capacity(blocks.len());
    for b in 0..block_offsets.len() - 1 {
        let range = block_offsets[b]..block_offsets[b + 1];
        let mut points: Vec<u32> = Vec::new();
        for &e in &order[range.clone()] {
            for (s, &p) in m.row(e).iter().enumerate() {
                if staged_slots[s] {
                    points.push(point_perm.new_of(p as usize) as u32);
                }
            }
        }
        points.sort_unstable();
        points.dedup();
        for (new_e, &e) in range.clone().zip(&order[range]) {
            for (s, &p) in m.row(e).iter().enumerate() {
                if staged_slots[s] {
                    let np = point_perm.new_of(p as usize) as u32;
                    let at = points.binary_search(&np).expect("point staged") as u32;
                    local_map[s * n + new_e] = at;
                }
            }
        }
        let bytes = points.len() * point_bytes;
        if bytes > hw.shared_bytes_per_sm {
            return Err(Error::Capacity {
                block: b,
                needed: bytes,
                limit: hw.shared_bytes_per_sm,
            });
        }
        shared_bytes.push(bytes);
        stage_points.extend_from_slice(&points);
        stage_offsets.push(stage_points.len());
    }

    Ok(HierarchicalPlan {
        common: plan_common(kernel, cfg, &m, precision, order, point_perm)?,
        staging: cfg.staging,
        over_tolerance: ord.over_tolerance,
        block_offsets,
        block_colours,
        block_colour_offsets,
        thread_colours,
        num_thread_colours,
        staged_arrays: staged.into_iter().map(|u| u.array).collect(),
        staged_slots,
        stage_offsets,
        stage_points,
        local_map,
        shared_bytes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelKind;
    use crate::kernels::{gen_hex3d, gen_quad2d};
    use crate::mesh::{HexTarget, Layout, Values};
    use crate::partition::PartitionConfig;

    fn toy(shared: bool) -> Mesh {
        let mut mesh = Mesh::new();
        let c = mesh.add_set("cells", 4).unwrap();
        let e = mesh.add_set("edges", 2).unwrap();
        let table = if shared {
            vec![0, 1, 1, 2]
        } else {
            vec![0, 1, 2, 3]
        };
        mesh.add_mapping("edge2cell", e, c, 2, table).unwrap();
        crate::kernels::bind_kernel_data(
            &mut mesh,
            KernelKind::Flux {
                no_indirect_read: false,
            },
            ElemType::F64,
            1,
        )
        .unwrap();
        mesh
    }

    fn flux(mesh: &Mesh) -> KernelSpec {
        KernelKind::Flux {
            no_indirect_read: false,
        }
        .bind(mesh)
        .unwrap()
    }

    #[test]
    fn toy_global_ranges() {
        for (shared, colours) in [(true, 2), (false, 1)] {
            let mesh = toy(shared);
            let p = build_global_plan(&mesh, &flux(&mesh), &PlanConfig::default()).unwrap();
            assert_eq!(p.num_colours(), colours);
        }
    }

    #[test]
    fn no_written_slots_one_colour() {
        let mut mesh = toy(true);
        mesh.add_data(
            "out",
            mesh.set("edges").unwrap(),
            1,
            Layout::Soa,
            Values::F64(vec![0.0; 2]),
        )
        .unwrap();
        let spec = KernelSpec {
            kind: KernelKind::Scatter8,
            sig: crate::kernel::KernelSig {
                mapping: "edge2cell".into(),
                arity: 2,
                args: vec![crate::kernel::Arg {
                    array: "q".into(),
                    kind: crate::kernel::ArgKind::Indirect { slot: 0 },
                    access: Access::Read,
                    components: 4,
                }],
            },
        };
        let p = build_global_plan(&mesh, &spec, &PlanConfig::default()).unwrap();
        assert_eq!(p.num_colours(), 1);
    }

    #[test]
    fn single_block_plan() {
        let mesh = toy(false);
        let cfg = PlanConfig::default();
        let p = build_hierarchical_plan(&mesh, &flux(&mesh), &cfg, &HardwareDescriptor::p100())
            .unwrap();
        assert_eq!(p.num_blocks(), 1);
        assert_eq!(p.num_block_colours(), 1);
        assert_eq!(p.num_thread_colours, vec![1]);
        assert_eq!(p.stage_list(0), &[0, 1, 2, 3]);
        assert_eq!(p.shared_bytes[0], 4 * 8 * 8);
    }

    #[test]
    fn structured_blocks_stage_225_nodes() {
        let mesh = gen_hex3d([8, 8, 16], HexTarget::CellsToNodes, 1).unwrap();
        let kernel = KernelKind::Scatter8.bind(&mesh).unwrap();
        let cfg = PlanConfig {
            reorder: ReorderMode::Structured([4, 4, 8]),
            ..PlanConfig::default()
        };
        let p = build_hierarchical_plan(&mesh, &kernel, &cfg, &HardwareDescriptor::p100()).unwrap();
        assert_eq!(p.num_blocks(), 8);
        for b in 0..8 {
            assert_eq!(p.stage_list(b).len(), 225);
        }
        assert!((p.reuse_factor() - 1024.0 / 225.0).abs() < 1e-9);
    }

    #[test]
    fn increment_only_stages_five_values() {
        let mesh = gen_hex3d([4, 4, 4], HexTarget::FacesToCells, 1).unwrap();
        let kernel = KernelKind::FaceFlux { heavy: false }.bind(&mesh).unwrap();
        let cfg = PlanConfig {
            staging: StagingPolicy::IncrementOnly,
            ..PlanConfig::default()
        };
        let p = build_hierarchical_plan(&mesh, &kernel, &cfg, &HardwareDescriptor::p100()).unwrap();
        assert_eq!(p.staged_arrays, vec!["flux".to_string()]);
        for b in 0..p.num_blocks() {
            assert_eq!(p.shared_bytes[b], p.stage_list(b).len() * 5 * 8);
        }
    }

    #[test]
    fn capacity_error_names_block() {
        let mesh = gen_hex3d([8, 8, 8], HexTarget::FacesToCells, 1).unwrap();
        let kernel = KernelKind::FaceFlux { heavy: false }.bind(&mesh).unwrap();
        let cfg = PlanConfig {
            partition: PartitionConfig::with_block_size(1024),
            ..PlanConfig::default()
        };
        let err =
            build_hierarchical_plan(&mesh, &kernel, &cfg, &HardwareDescriptor::p100()).unwrap_err();
        assert!(matches!(err, Error::Capacity { block: 0, .. }), "{err:?}");
    }

    #[test]
    fn partition_plan_blocks_fit() {
        let mesh = gen_quad2d(16, 16, 2).unwrap();
        let kernel = flux(&mesh);
        let cfg = PlanConfig {
            reorder: ReorderMode::Partition,
            partition: PartitionConfig::with_block_size(64),
            ..PlanConfig::default()
        };
        let p = build_hierarchical_plan(&mesh, &kernel, &cfg, &HardwareDescriptor::p100()).unwrap();
        for b in 0..p.num_blocks() {
            assert!(p.block_range(b).len() <= 64);
        }
        let text = Plan::Hierarchical(p.clone()).to_text();
        assert_eq!(Plan::from_text(&text).unwrap(), Plan::Hierarchical(p));
    }

    #[test]
    fn split_halves_oversized_blocks() {
        let out = split_blocks(vec![(0..10).collect(), vec![10]], 3);
        assert_eq!(
            out,
            vec![
                vec![0, 1],
                vec![2, 3, 4],
                vec![5, 6],
                vec![7, 8, 9],
                vec![10]
            ]
        );
    }

    #[test]
    fn structured_on_unstructured_mesh_rejected() {
        let mesh = gen_quad2d(4, 4, 0).unwrap();
        let cfg = PlanConfig {
            reorder: ReorderMode::Structured([1, 1, 1]),
            ..PlanConfig::default()
        };
        assert!(matches!(
            build_global_plan(&mesh, &flux(&mesh), &cfg),
            Err(Error::Validation(_))
        ));
    }
}
