//! Sets, mappings and data arrays of an unstructured mesh.
//!
//! A [`Mesh`] is a collection of sets (index ranges `0..size`), fixed-arity
//! mapping tables between sets and data arrays bound to sets. Kernels iterate
//! over the from-set of one mapping and access to-set data through at most
//! one level of indirection.

mod ops;
mod scalar;
pub mod text;

pub use ops::{
    apply_permutation, invert_mapping, transform_layout, validate_mesh, Finding, FindingKind,
    InverseIndex, ValidationReport,
};
pub use scalar::{ElemType, Scalar, Values};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible set size; indices must fit a signed 32-bit integer.
pub const MAX_SET_SIZE: usize = (1 << 31) - 1;

/// Opaque reference to a registered set plus its size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SetHandle {
    pub id: usize,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamedSet {
    pub name: String,
    pub size: usize,
}

/// Fixed-arity table from every element of `from` to `arity` elements of
/// `to`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Mapping {
    pub name: String,
    pub from: SetHandle,
    pub to: SetHandle,
    pub arity: usize,
    pub table: Vec<u32>,
}

impl Mapping {
    #[inline]
    pub fn row(&self, e: usize) -> &[u32] {
        &self.table[e * self.arity..(e + 1) * self.arity]
    }

    #[inline]
    pub fn get(&self, e: usize, slot: usize) -> usize {
        self.table[e * self.arity + slot] as usize
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.table.chunks(self.arity.max(1))
    }
}

/// Memory layout of a multi-component data array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Components of one element are contiguous.
    Aos,
    /// Component `c` of every element is contiguous.
    Soa,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::Aos => "aos",
            Layout::Soa => "soa",
        }
    }

    pub fn parse(s: &str) -> Option<Layout> {
        match s {
            "aos" => Some(Layout::Aos),
            "soa" => Some(Layout::Soa),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataArray {
    pub name: String,
    pub set: SetHandle,
    pub components: usize,
    pub layout: Layout,
    pub values: Values,
}

impl DataArray {
    pub fn elem_type(&self) -> ElemType {
        self.values.elem_type()
    }

    /// Distance between consecutive components of one element.
    pub fn stride(&self) -> usize {
        match self.layout {
            Layout::Aos => 1,
            Layout::Soa => self.set.size,
        }
    }

    /// Position of the first component of element `i`.
    #[inline]
    pub fn base(&self, i: usize) -> usize {
        match self.layout {
            Layout::Aos => i * self.components,
            Layout::Soa => i,
        }
    }

    #[inline]
    pub fn index(&self, i: usize, c: usize) -> usize {
        index_of(self.layout, self.set.size, self.components, i, c)
    }

    pub fn bytes(&self) -> usize {
        self.values.len() * self.elem_type().size_bytes()
    }
}

#[inline]
pub(crate) fn index_of(layout: Layout, size: usize, comps: usize, i: usize, c: usize) -> usize {
    match layout {
        Layout::Aos => i * comps + c,
        Layout::Soa => c * size + i,
    }
}

/// Which structured hex connectivity a generated mesh carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HexTarget {
    CellsToNodes,
    FacesToCells,
}

impl HexTarget {
    pub fn name(self) -> &'static str {
        match self {
            HexTarget::CellsToNodes => "cells-nodes",
            HexTarget::FacesToCells => "faces-cells",
        }
    }

    pub fn parse(s: &str) -> Option<HexTarget> {
        match s {
            "cells-nodes" => Some(HexTarget::CellsToNodes),
            "faces-cells" => Some(HexTarget::FacesToCells),
            _ => None,
        }
    }
}

/// Generator metadata kept while the mesh is in its generated numbering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuredInfo {
    pub dims: [usize; 3],
    pub target: HexTarget,
    pub mapping: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    sets: Vec<NamedSet>,
    mappings: Vec<Mapping>,
    data: Vec<DataArray>,
    structured: Option<StructuredInfo>,
}

impl Mesh {
    pub fn new() -> Self {
        Mesh::default()
    }

    pub fn add_set(&mut self, name: &str, size: usize) -> Result<SetHandle> {
        if self.sets.iter().any(|s| s.name == name) {
            return Err(Error::validation(format!("duplicate set `{name}`")));
        }
        if size > MAX_SET_SIZE {
            return Err(Error::validation(format!(
                "set `{name}` has {size} elements, limit is {MAX_SET_SIZE}"
            )));
        }
        self.sets.push(NamedSet {
            name: name.to_string(),
            size,
        });
        Ok(SetHandle {
            id: self.sets.len() - 1,
            size,
        })
    }

    /// Registers a mapping. Entry ranges and table length are checked by
    /// [`validate_mesh`], not here.
    pub fn add_mapping(
        &mut self,
        name: &str,
        from: SetHandle,
        to: SetHandle,
        arity: usize,
        table: Vec<u32>,
    ) -> Result<()> {
        self.check_handle(from)?;
        self.check_handle(to)?;
        if self.mappings.iter().any(|m| m.name == name) {
            return Err(Error::validation(format!("duplicate mapping `{name}`")));
        }
        self.mappings.push(Mapping {
            name: name.to_string(),
            from,
            to,
            arity,
            table,
        });
        Ok(())
    }

    /// Registers (or replaces) a data array.
    pub fn add_data(
        &mut self,
        name: &str,
        set: SetHandle,
        components: usize,
        layout: Layout,
        values: Values,
    ) -> Result<()> {
        self.check_handle(set)?;
        let arr = DataArray {
            name: name.to_string(),
            set,
            components,
            layout,
            values,
        };
        match self.data.iter_mut().find(|d| d.name == name) {
            Some(slot) => *slot = arr,
            None => self.data.push(arr),
        }
        Ok(())
    }

    pub fn remove_data(&mut self, name: &str) -> Option<DataArray> {
        let pos = self.data.iter().position(|d| d.name == name)?;
        Some(self.data.remove(pos))
    }

    fn check_handle(&self, h: SetHandle) -> Result<()> {
        match self.sets.get(h.id) {
            Some(s) if s.size == h.size => Ok(()),
            _ => Err(Error::validation(format!("unknown set handle {h:?}"))),
        }
    }

    pub fn sets(&self) -> &[NamedSet] {
        &self.sets
    }

    pub fn set(&self, name: &str) -> Option<SetHandle> {
        self.sets
            .iter()
            .position(|s| s.name == name)
            .map(|id| SetHandle {
                id,
                size: self.sets[id].size,
            })
    }

    pub fn set_name(&self, h: SetHandle) -> &str {
        &self.sets[h.id].name
    }

    pub fn mappings(&self) -> &[Mapping] {
        &self.mappings
    }

    pub fn mapping(&self, name: &str) -> Option<&Mapping> {
        self.mappings.iter().find(|m| m.name == name)
    }

    pub fn data(&self) -> &[DataArray] {
        &self.data
    }

    pub fn array(&self, name: &str) -> Option<&DataArray> {
        self.data.iter().find(|d| d.name == name)
    }

    pub fn array_mut(&mut self, name: &str) -> Option<&mut DataArray> {
        self.data.iter_mut().find(|d| d.name == name)
    }

    pub fn structured(&self) -> Option<&StructuredInfo> {
        self.structured.as_ref()
    }

    pub fn set_structured(&mut self, info: Option<StructuredInfo>) {
        self.structured = info;
    }

    pub(crate) fn mappings_mut(&mut self) -> &mut Vec<Mapping> {
        &mut self.mappings
    }

    pub(crate) fn data_mut(&mut self) -> &mut Vec<DataArray> {
        &mut self.data
    }
}
