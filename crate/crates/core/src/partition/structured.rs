use serde::{Deserialize, Serialize};

use super::Partition;
use crate::error::{Error, Result};
use crate::mesh::HexTarget;

/// Axis of an internal face, named after the cell side it sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaceDir {
    X,
    Y,
    Z,
}

#[inline]
fn cell_id(dims: [usize; 3], i: usize, j: usize, k: usize) -> usize {
    (i * dims[1] + j) * dims[2] + k
}

/// Internal faces of an `nx x ny x nz` hex grid as `(owner cell, direction)`.
/// A cell owns the faces on its +x, +y and +z sides that touch another cell;
/// faces are listed by owner cell, then x, y, z.
pub fn hex_internal_faces(dims: [usize; 3]) -> Vec<(usize, FaceDir)> {
    let [nx, ny, nz] = dims;
    let mut out = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let c = cell_id(dims, i, j, k);
                if i + 1 < nx {
                    out.push((c, FaceDir::X));
                }
                if j + 1 < ny {
                    out.push((c, FaceDir::Y));
                }
                if k + 1 < nz {
                    out.push((c, FaceDir::Z));
                }
            }
        }
    }
    out
}

/// Tiles the grid with `shape` cell boxes numbered in row-major box order.
/// For faces-to-cells loops each face joins the box of its owner cell.
pub fn partition_structured_hex(
    dims: [usize; 3],
    shape: [usize; 3],
    target: HexTarget,
) -> Result<Partition> {
    for a in 0..3 {
        if shape[a] == 0 || dims[a] == 0 || !dims[a].is_multiple_of(shape[a]) {
            return Err(Error::validation(format!(
                "block shape {shape:?} does not tile mesh dims {dims:?}"
            )));
        }
    }
    let nb = [dims[0] / shape[0], dims[1] / shape[1], dims[2] / shape[2]];
    let block_of_cell = |c: usize| {
        let k = c % dims[2];
        let j = (c / dims[2]) % dims[1];
        let i = c / (dims[1] * dims[2]);
        ((i / shape[0]) * nb[1] + j / shape[1]) * nb[2] + k / shape[2]
    };
    let assignment: Vec<usize> = match target {
        HexTarget::CellsToNodes => (0..dims.iter().product()).map(block_of_cell).collect(),
        HexTarget::FacesToCells => hex_internal_faces(dims)
            .into_iter()
            .map(|(c, _)| block_of_cell(c))
            .collect(),
    };
    let mut p = Partition::from_assignment(assignment);
    // a 1-thick grid has no internal faces in some boxes; keep ids dense
    if p.block_sizes().contains(&0) {
        let mut remap = vec![usize::MAX; p.num_blocks];
        let mut next = 0;
        for b in p.assignment.iter_mut() {
            if remap[*b] == usize::MAX {
                remap[*b] = next;
                next += 1;
            }
            *b = remap[*b];
        }
        p = Partition::from_assignment(std::mem::take(&mut p.assignment));
    }
    Ok(p)
}
