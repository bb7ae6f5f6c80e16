use super::{index_of, DataArray, Layout, Mapping, Mesh, SetHandle, MAX_SET_SIZE};
use crate::error::{Error, Result};
use crate::perm::Permutation;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FindingKind {
    OutOfRange,
    SizeMismatch,
    ZeroArity,
    ZeroComponents,
    UnknownSet,
    SetTooLarge,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Finding {
    pub kind: FindingKind,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }

    /// Converts findings into an error, listing the first few.
    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            return Ok(());
        }
        let shown: Vec<&str> = self
            .findings
            .iter()
            .take(5)
            .map(|f| f.message.as_str())
            .collect();
        let mut msg = shown.join("; ");
        if self.findings.len() > 5 {
            msg.push_str(&format!(" (and {} more)", self.findings.len() - 5));
        }
        Err(Error::Validation(msg))
    }

    fn push(&mut self, kind: FindingKind, message: String) {
        self.findings.push(Finding { kind, message });
    }
}

/// Reports every out-of-range mapping entry and every size mismatch.
pub fn validate_mesh(mesh: &Mesh) -> ValidationReport {
    let mut report = ValidationReport::default();
    let set_ok = |h: SetHandle| mesh.sets().get(h.id).is_some_and(|s| s.size == h.size);

    for s in mesh.sets() {
        if s.size > MAX_SET_SIZE {
            report.push(
                FindingKind::SetTooLarge,
                format!("set `{}` exceeds {MAX_SET_SIZE} elements", s.name),
            );
        }
    }

    for m in mesh.mappings() {
        if !set_ok(m.from) || !set_ok(m.to) {
            report.push(
                FindingKind::UnknownSet,
                format!("mapping `{}` references an unregistered set", m.name),
            );
            continue;
        }
        if m.arity == 0 {
            report.push(
                FindingKind::ZeroArity,
                format!("mapping `{}` has arity 0", m.name),
            );
            continue;
        }
        let expected = m.from.size * m.arity;
        if m.table.len() != expected {
            report.push(
                FindingKind::SizeMismatch,
                format!(
                    "mapping `{}` table has {} entries, expected {expected}",
                    m.name,
                    m.table.len()
                ),
            );
        }
        for (k, &v) in m.table.iter().enumerate() {
            if v as usize >= m.to.size {
                report.push(
                    FindingKind::OutOfRange,
                    format!(
                        "mapping `{}` element {} slot {}: entry {v} out of range for size {}",
                        m.name,
                        k / m.arity,
                        k % m.arity,
                        m.to.size
                    ),
                );
            }
        }
    }

    for d in mesh.data() {
        if !set_ok(d.set) {
            report.push(
                FindingKind::UnknownSet,
                format!("data `{}` references an unregistered set", d.name),
            );
            continue;
        }
        if d.components == 0 {
            report.push(
                FindingKind::ZeroComponents,
                format!("data `{}` has zero components", d.name),
            );
            continue;
        }
        let expected = d.set.size * d.components;
        if d.values.len() != expected {
            report.push(
                FindingKind::SizeMismatch,
                format!(
                    "data `{}` has {} values, expected {expected}",
                    d.name,
                    d.values.len()
                ),
            );
        }
    }
    report
}

/// Rewrites `arr` in `target` layout; element/component values are unchanged.
pub fn transform_layout(arr: &DataArray, target: Layout) -> DataArray {
    if arr.layout == target {
        return arr.clone();
    }
    let (n, comps, from) = (arr.set.size, arr.components, arr.layout);
    let values = arr.values.scatter(|k| {
        let (i, c) = match from {
            Layout::Aos => (k / comps, k % comps),
            Layout::Soa => (k % n, k / n),
        };
        index_of(target, n, comps, i, c)
    });
    DataArray {
        layout: target,
        values,
        ..arr.clone()
    }
}

/// For every to-set element, the (from-element, slot) pairs referencing it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InverseIndex {
    pub offsets: Vec<usize>,
    pub pairs: Vec<(u32, u32)>,
}

impl InverseIndex {
    pub fn refs(&self, t: usize) -> &[(u32, u32)] {
        &self.pairs[self.offsets[t]..self.offsets[t + 1]]
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Counting-sort inversion; pairs come out sorted by (element, slot).
pub fn invert_mapping(m: &Mapping) -> InverseIndex {
    let mut offsets = vec![0usize; m.to.size + 1];
    for &t in &m.table {
        offsets[t as usize + 1] += 1;
    }
    for i in 0..m.to.size {
        offsets[i + 1] += offsets[i];
    }
    let mut fill = offsets.clone();
    let mut pairs = vec![(0u32, 0u32); m.table.len()];
    for (k, &t) in m.table.iter().enumerate() {
        let t = t as usize;
        pairs[fill[t]] = ((k / m.arity) as u32, (k % m.arity) as u32);
        fill[t] += 1;
    }
    InverseIndex { offsets, pairs }
}

/// Renumbers `set` everywhere in the mesh: rows of mappings from it, entries
/// of mappings into it, and data arrays on it.
pub fn apply_permutation(mesh: &Mesh, set: SetHandle, perm: &Permutation) -> Result<Mesh> {
    if perm.len() != set.size {
        return Err(Error::InvalidPermutation(format!(
            "permutation of size {} applied to set of size {}",
            perm.len(),
            set.size
        )));
    }
    if mesh.sets().get(set.id).map(|s| s.size) != Some(set.size) {
        return Err(Error::validation(format!("unknown set handle {set:?}")));
    }
    let mut out = mesh.clone();
    if perm.is_identity() {
        return Ok(out);
    }
    for m in out.mappings_mut().iter_mut() {
        if m.from.id == set.id {
            let mut table = vec![0u32; m.table.len()];
            for old in 0..m.from.size {
                let new = perm.new_of(old);
                table[new * m.arity..(new + 1) * m.arity]
                    .copy_from_slice(&m.table[old * m.arity..(old + 1) * m.arity]);
            }
            m.table = table;
        }
        if m.to.id == set.id {
            for v in m.table.iter_mut() {
                *v = perm.new_of(*v as usize) as u32;
            }
        }
    }
    for d in out.data_mut().iter_mut() {
        if d.set.id == set.id {
            let (n, comps, layout) = (d.set.size, d.components, d.layout);
            d.values = d.values.scatter(|k| {
                let (i, c) = match layout {
                    Layout::Aos => (k / comps, k % comps),
                    Layout::Soa => (k % n, k / n),
                };
                index_of(layout, n, comps, perm.new_of(i), c)
            });
        }
    }
    out.set_structured(None);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Values;

    fn toy() -> Mesh {
        let mut mesh = Mesh::new();
        let cells = mesh.add_set("cells", 3).unwrap();
        let edges = mesh.add_set("edges", 2).unwrap();
        mesh.add_mapping("e2c", edges, cells, 2, vec![0, 1, 1, 2])
            .unwrap();
        mesh.add_data("q", cells, 1, Layout::Aos, Values::I64(vec![10, 11, 12]))
            .unwrap();
        mesh
    }

    #[test]
    fn figure_style_mapping_is_valid() {
        assert!(validate_mesh(&toy()).is_valid());
    }

    #[test]
    fn empty_mesh_is_valid() {
        assert!(validate_mesh(&Mesh::new()).is_valid());
    }

    #[test]
    fn out_of_range_entry_reported() {
        let mut mesh = Mesh::new();
        let to = mesh.add_set("to", 4).unwrap();
        let from = mesh.add_set("from", 1).unwrap();
        mesh.add_mapping("m", from, to, 2, vec![1, 7]).unwrap();
        let r = validate_mesh(&mesh);
        assert_eq!(r.findings.len(), 1);
        assert_eq!(r.findings[0].kind, FindingKind::OutOfRange);
        assert!(r.findings[0].message.contains("out of range"));
    }

    #[test]
    fn size_mismatches_reported() {
        let mut mesh = Mesh::new();
        let to = mesh.add_set("to", 4).unwrap();
        let from = mesh.add_set("from", 2).unwrap();
        mesh.add_mapping("m", from, to, 2, vec![1, 2, 3]).unwrap();
        mesh.add_data("d", to, 2, Layout::Soa, Values::F64(vec![0.0; 7]))
            .unwrap();
        let r = validate_mesh(&mesh);
        assert_eq!(
            r.findings
                .iter()
                .filter(|f| f.kind == FindingKind::SizeMismatch)
                .count(),
            2
        );
    }

    #[test]
    fn aos_to_soa_example() {
        let mut mesh = Mesh::new();
        let s = mesh.add_set("s", 2).unwrap();
        let arr = DataArray {
            name: "a".into(),
            set: s,
            components: 2,
            layout: Layout::Aos,
            // a0 a1 b0 b1
            values: Values::I32(vec![0, 1, 10, 11]),
        };
        let soa = transform_layout(&arr, Layout::Soa);
        assert_eq!(soa.values, Values::I32(vec![0, 10, 1, 11]));
        assert_eq!(soa.stride(), 2);
        assert_eq!(arr.stride(), 1);
        assert_eq!(transform_layout(&arr, Layout::Aos), arr);
    }

    #[test]
    fn inversion_of_toy_mapping() {
        let mesh = toy();
        let inv = invert_mapping(mesh.mapping("e2c").unwrap());
        assert_eq!(inv.refs(1), &[(0, 1), (1, 0)]);
        assert_eq!(inv.refs(0), &[(0, 0)]);
        assert_eq!(inv.pairs.len(), 4);
    }

    #[test]
    fn inversion_of_single_octet() {
        let mut mesh = Mesh::new();
        let to = mesh.add_set("nodes", 8).unwrap();
        let from = mesh.add_set("cells", 1).unwrap();
        mesh.add_mapping("c2n", from, to, 8, (0..8).rev().collect())
            .unwrap();
        let inv = invert_mapping(mesh.mapping("c2n").unwrap());
        for t in 0..8 {
            assert_eq!(inv.refs(t), &[(0, 7 - t as u32)]);
        }
    }

    #[test]
    fn identity_permutation_is_noop() {
        let mesh = toy();
        let cells = mesh.set("cells").unwrap();
        let out = apply_permutation(&mesh, cells, &Permutation::identity(3)).unwrap();
        assert_eq!(out, mesh);
    }

    #[test]
    fn swapping_cells_updates_entries_and_data() {
        let mesh = toy();
        let cells = mesh.set("cells").unwrap();
        let swap = Permutation::from_forward(vec![1, 0, 2]).unwrap();
        let out = apply_permutation(&mesh, cells, &swap).unwrap();
        assert_eq!(out.mapping("e2c").unwrap().table, vec![1, 0, 0, 2]);
        assert_eq!(
            out.array("q").unwrap().values,
            Values::I64(vec![11, 10, 12])
        );
    }

    #[test]
    fn wrong_size_permutation_rejected() {
        let mesh = toy();
        let cells = mesh.set("cells").unwrap();
        assert!(apply_permutation(&mesh, cells, &Permutation::identity(2)).is_err());
    }
}
