//! Mesh generators and seeded kernel data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::{Access, KernelKind};
use crate::mesh::{ElemType, HexTarget, Layout, Mesh, StructuredInfo, Values};
use crate::partition::hex_internal_faces;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Quad2d,
    Tri2d,
    HexCells,
    HexFaces,
}

pub const FAMILIES: [Family; 4] = [
    Family::Quad2d,
    Family::Tri2d,
    Family::HexCells,
    Family::HexFaces,
];

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Quad2d => "quad2d",
            Family::Tri2d => "tri2d",
            Family::HexCells => "hex-cells",
            Family::HexFaces => "hex-faces",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        FAMILIES.into_iter().find(|f| f.name() == s)
    }

    pub fn dimensions(self) -> usize {
        match self {
            Family::Quad2d | Family::Tri2d => 2,
            Family::HexCells | Family::HexFaces => 3,
        }
    }

    /// Kernel whose data the generator attaches by default.
    pub fn default_kernel(self) -> KernelKind {
        match self {
            Family::Quad2d | Family::Tri2d => KernelKind::Flux {
                no_indirect_read: false,
            },
            Family::HexCells => KernelKind::Scatter8,
            Family::HexFaces => KernelKind::FaceFlux { heavy: false },
        }
    }
}

/// Generates a mesh of `family` with f64 data for its default kernel.
pub fn generate(family: Family, dims: &[usize], seed: u64) -> Result<Mesh> {
    if dims.len() != family.dimensions() || dims.contains(&0) {
        return Err(Error::validation(format!(
            "{} needs {} positive dimensions, got {dims:?}",
            family.name(),
            family.dimensions()
        )));
    }
    let mut mesh = match family {
        Family::Quad2d => quad2d_topology(dims[0], dims[1]),
        Family::Tri2d => tri2d_topology(dims[0], dims[1]),
        Family::HexCells => hex3d_topology([dims[0], dims[1], dims[2]], HexTarget::CellsToNodes),
        Family::HexFaces => hex3d_topology([dims[0], dims[1], dims[2]], HexTarget::FacesToCells),
    }?;
    bind_kernel_data(&mut mesh, family.default_kernel(), ElemType::F64, seed)?;
    Ok(mesh)
}

pub fn gen_quad2d(nx: usize, ny: usize, seed: u64) -> Result<Mesh> {
    generate(Family::Quad2d, &[nx, ny], seed)
}

pub fn gen_tri2d(nx: usize, ny: usize, seed: u64) -> Result<Mesh> {
    generate(Family::Tri2d, &[nx, ny], seed)
}

pub fn gen_hex3d(dims: [usize; 3], target: HexTarget, seed: u64) -> Result<Mesh> {
    let family = match target {
        HexTarget::CellsToNodes => Family::HexCells,
        HexTarget::FacesToCells => Family::HexFaces,
    };
    generate(family, &dims, seed)
}

fn edge_mesh(cells: usize, table: Vec<u32>) -> Result<Mesh> {
    let mut mesh = Mesh::new();
    let c = mesh.add_set("cells", cells)?;
    let e = mesh.add_set("edges", table.len() / 2)?;
    mesh.add_mapping("edge2cell", e, c, 2, table)?;
    Ok(mesh)
}

/// Interior edges of an `nx x ny` quad grid: all x-edges row by row, then
/// all y-edges.
pub fn quad2d_topology(nx: usize, ny: usize) -> Result<Mesh> {
    let cell = |i: usize, j: usize| (j * nx + i) as u32;
    let mut table = Vec::with_capacity(2 * (nx * (ny - 1) + ny * (nx - 1)));
    for j in 0..ny {
        for i in 0..nx - 1 {
            table.extend([cell(i, j), cell(i + 1, j)]);
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            table.extend([cell(i, j), cell(i, j + 1)]);
        }
    }
    edge_mesh(nx * ny, table)
}

/// Each quad split along its bottom-left to top-right diagonal into a lower
/// triangle `2q` and an upper triangle `2q + 1`. Edges: diagonals, then
/// horizontal, then vertical neighbours.
pub fn tri2d_topology(nx: usize, ny: usize) -> Result<Mesh> {
    let lower = |i: usize, j: usize| (2 * (j * nx + i)) as u32;
    let upper = |i: usize, j: usize| (2 * (j * nx + i) + 1) as u32;
    let mut table = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            table.extend([lower(i, j), upper(i, j)]);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            table.extend([lower(i, j), upper(i, j - 1)]);
        }
    }
    for j in 0..ny {
        for i in 0..nx - 1 {
            table.extend([lower(i, j), upper(i + 1, j)]);
        }
    }
    // number edges in the order a sweep over triangles first meets them
    let mut pairs: Vec<[u32; 2]> = table.chunks(2).map(|p| [p[0], p[1]]).collect();
    pairs.sort_by_key(|p| (p[0].min(p[1]), p[0].max(p[1])));
    edge_mesh(2 * nx * ny, pairs.concat())
}

pub fn hex3d_topology(dims: [usize; 3], target: HexTarget) -> Result<Mesh> {
    let [nx, ny, nz] = dims;
    let mut mesh = Mesh::new();
    let cells = mesh.add_set("cells", nx * ny * nz)?;
    let mapping = match target {
        HexTarget::CellsToNodes => {
            let nodes = mesh.add_set("nodes", (nx + 1) * (ny + 1) * (nz + 1))?;
            let node = |i: usize, j: usize, k: usize| ((i * (ny + 1) + j) * (nz + 1) + k) as u32;
            let mut table = Vec::with_capacity(8 * cells.size);
            for i in 0..nx {
                for j in 0..ny {
                    for k in 0..nz {
                        for d in 0..8 {
                            table.push(node(i + (d >> 2), j + ((d >> 1) & 1), k + (d & 1)));
                        }
                    }
                }
            }
            mesh.add_mapping("cell2node", cells, nodes, 8, table)?;
            "cell2node"
        }
        HexTarget::FacesToCells => {
            let faces = hex_internal_faces(dims);
            let set = mesh.add_set("faces", faces.len())?;
            let mut table = Vec::with_capacity(2 * faces.len());
            for (c, dir) in faces {
                let other = match dir {
                    crate::partition::FaceDir::X => c + ny * nz,
                    crate::partition::FaceDir::Y => c + nz,
                    crate::partition::FaceDir::Z => c + 1,
                };
                table.extend([c as u32, other as u32]);
            }
            mesh.add_mapping("face2cell", set, cells, 2, table)?;
            "face2cell"
        }
    };
    mesh.set_structured(Some(StructuredInfo {
        dims,
        target,
        mapping: mapping.to_string(),
    }));
    Ok(mesh)
}

fn name_hash(name: &str) -> u64 {
    // FNV-1a
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Seeded values: uniform in (-1, 1) for floats, -3..=3 for integers.
pub fn random_values(ty: ElemType, len: usize, seed: u64, name: &str) -> Values {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ name_hash(name));
    match ty {
        ElemType::F64 => Values::F64((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()),
        ElemType::F32 => Values::F32((0..len).map(|_| rng.gen_range(-1.0f32..1.0)).collect()),
        ElemType::I64 => Values::I64((0..len).map(|_| rng.gen_range(-3..=3)).collect()),
        ElemType::I32 => Values::I32((0..len).map(|_| rng.gen_range(-3..=3)).collect()),
    }
}

/// Makes sure `mesh` carries every array `kind` needs in `precision`.
/// Arrays that already match are kept; missing or mismatching ones are
/// (re)generated from `seed`. Indirect arrays use SoA, like direct ones.
pub fn bind_kernel_data(
    mesh: &mut Mesh,
    kind: KernelKind,
    precision: ElemType,
    seed: u64,
) -> Result<()> {
    let spec = kind.bind(mesh)?;
    let m = mesh.mapping(&spec.sig.mapping).unwrap();
    let (from, to) = (m.from, m.to);
    for (name, indirect, comps, _) in kind.arrays() {
        let set = if indirect { to } else { from };
        let ok = mesh
            .array(name)
            .is_some_and(|d| d.set == set && d.components == comps && d.elem_type() == precision);
        if ok {
            continue;
        }
        let values = random_values(precision, set.size * comps, seed, name);
        mesh.add_data(name, set, comps, Layout::Soa, values)?;
    }
    Ok(())
}

/// Sets every direct read array of `kind` to a constant so that each
/// increment equals one (flux, scatter8) and zeroes the increment targets.
pub fn unit_data(mesh: &mut Mesh, kind: KernelKind, precision: ElemType) -> Result<()> {
    bind_kernel_data(mesh, kind, precision, 0)?;
    for (name, _, comps, access) in kind.arrays() {
        let d = mesh.array(name).unwrap();
        let (set, len) = (d.set, d.values.len());
        let values: Vec<i64> = match (name, access) {
            (_, Access::Inc) => vec![0; len],
            ("edge_w", _) => (0..len).map(|i| if i < set.size { 1 } else { 0 }).collect(),
            ("stress", _) | ("vol", _) => vec![1; len],
            _ => vec![0; len],
        };
        let values = match precision {
            ElemType::F64 => Values::F64(values.iter().map(|&v| v as f64).collect()),
            ElemType::F32 => Values::F32(values.iter().map(|&v| v as f32).collect()),
            ElemType::I64 => Values::I64(values),
            ElemType::I32 => Values::I32(values.iter().map(|&v| v as i32).collect()),
        };
        mesh.add_data(name, set, comps, Layout::Soa, values)?;
    }
    Ok(())
}

/// Seeded suite of small quasi-uniform meshes across all families, each in
/// its natural numbering.
pub fn quasi_uniform_suite(count: usize, seed: u64) -> Vec<(String, Mesh)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let family = FAMILIES[i % FAMILIES.len()];
            let dims: Vec<usize> = match family.dimensions() {
                2 => vec![rng.gen_range(20..=40), rng.gen_range(20..=40)],
                _ => vec![
                    rng.gen_range(6..=10),
                    rng.gen_range(6..=10),
                    rng.gen_range(6..=12),
                ],
            };
            let label = format!(
                "{}-{}",
                family.name(),
                dims.iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join("x")
            );
            let mesh = generate(family, &dims, seed.wrapping_add(i as u64)).expect("valid dims");
            (label, mesh)
        })
        .collect()
}
