//! Kernel signatures and the per-element calling convention.
//!
//! A kernel iterates over the from-set of one mapping. Each argument names a
//! data array and is either direct (on the from-set) or indirect through one
//! slot of the mapping (on the to-set). The element function only sees a
//! local buffer: read arguments are gathered before the call, increments
//! start at zero and are scattered by the executor afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{ElemType, Mesh, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Read,
    Write,
    Inc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgKind {
    Direct,
    Indirect { slot: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arg {
    pub array: String,
    pub kind: ArgKind,
    pub access: Access,
    pub components: usize,
}

impl Arg {
    fn new(array: &str, kind: ArgKind, access: Access, components: usize) -> Self {
        Arg {
            array: array.to_string(),
            kind,
            access,
            components,
        }
    }

    pub fn slot(&self) -> Option<usize> {
        match self.kind {
            ArgKind::Indirect { slot } => Some(slot),
            ArgKind::Direct => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSig {
    pub mapping: String,
    pub arity: usize,
    pub args: Vec<Arg>,
}

/// One data array touched by a kernel, with how it is touched.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArrayUse {
    pub array: String,
    pub access: Access,
    pub indirect: bool,
    pub components: usize,
    /// Mapping slots through which the array is accessed (empty for direct).
    pub slots: Vec<usize>,
}

impl KernelSig {
    /// Slots through which some argument is incremented.
    pub fn written_slots(&self) -> Vec<bool> {
        let mut w = vec![false; self.arity];
        for a in &self.args {
            if let (ArgKind::Indirect { slot }, Access::Inc) = (a.kind, a.access) {
                w[slot] = true;
            }
        }
        w
    }

    /// Arrays in order of first appearance among the arguments.
    pub fn arrays(&self) -> Vec<ArrayUse> {
        let mut out: Vec<ArrayUse> = Vec::new();
        for a in &self.args {
            let pos = match out.iter().position(|u| u.array == a.array) {
                Some(p) => p,
                None => {
                    out.push(ArrayUse {
                        array: a.array.clone(),
                        access: a.access,
                        indirect: a.slot().is_some(),
                        components: a.components,
                        slots: Vec::new(),
                    });
                    out.len() - 1
                }
            };
            if let Some(s) = a.slot() {
                if !out[pos].slots.contains(&s) {
                    out[pos].slots.push(s);
                }
            }
        }
        out
    }

    /// Buffer offset of every argument, plus the total buffer length.
    pub fn buffer_offsets(&self) -> (Vec<usize>, usize) {
        let mut offsets = Vec::with_capacity(self.args.len());
        let mut total = 0;
        for a in &self.args {
            offsets.push(total);
            total += a.components;
        }
        (offsets, total)
    }

    /// Checks the signature rules and that `mesh` provides every array with
    /// matching set, components and element type.
    pub fn validate(&self, mesh: &Mesh, precision: ElemType) -> Result<()> {
        let m = mesh
            .mapping(&self.mapping)
            .ok_or_else(|| Error::validation(format!("unknown mapping `{}`", self.mapping)))?;
        if m.arity != self.arity {
            return Err(Error::validation(format!(
                "mapping `{}` has arity {}, kernel expects {}",
                self.mapping, m.arity, self.arity
            )));
        }
        for u in self.arrays() {
            let modes: Vec<Access> = self
                .args
                .iter()
                .filter(|a| a.array == u.array)
                .map(|a| a.access)
                .collect();
            if modes.iter().any(|&x| x != modes[0]) {
                return Err(Error::validation(format!(
                    "array `{}` is both read and modified by the kernel",
                    u.array
                )));
            }
            if self
                .args
                .iter()
                .any(|a| a.array == u.array && a.slot().is_some() != u.indirect)
            {
                return Err(Error::validation(format!(
                    "array `{}` is accessed both directly and indirectly",
                    u.array
                )));
            }
            match (u.access, u.indirect) {
                (Access::Inc, false) => {
                    return Err(Error::validation(format!(
                        "increment of `{}` must go through the mapping",
                        u.array
                    )))
                }
                (Access::Write, true) => {
                    return Err(Error::validation(format!(
                        "indirect write of `{}` is not allowed; use an increment",
                        u.array
                    )))
                }
                _ => {}
            }
            let d = mesh
                .array(&u.array)
                .ok_or_else(|| Error::validation(format!("unknown data array `{}`", u.array)))?;
            let want_set = if u.indirect { m.to } else { m.from };
            if d.set != want_set {
                return Err(Error::validation(format!(
                    "array `{}` lives on `{}`, kernel expects `{}`",
                    u.array,
                    mesh.set_name(d.set),
                    mesh.set_name(want_set)
                )));
            }
            if d.components != u.components {
                return Err(Error::validation(format!(
                    "array `{}` has {} components, kernel expects {}",
                    u.array, d.components, u.components
                )));
            }
            if d.elem_type() != precision {
                return Err(Error::validation(format!(
                    "array `{}` holds {}, kernel runs in {}",
                    u.array,
                    d.elem_type().name(),
                    precision.name()
                )));
            }
        }
        for a in &self.args {
            if let Some(s) = a.slot() {
                if s >= self.arity {
                    return Err(Error::validation(format!(
                        "argument on `{}` uses slot {s} of an arity-{} mapping",
                        a.array, self.arity
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Local view handed to an element function.
pub struct ElemCtx<'a, T> {
    args: &'a [Arg],
    offsets: &'a [usize],
    vals: &'a mut [T],
    fault: Option<String>,
}

impl<'a, T: Scalar> ElemCtx<'a, T> {
    pub fn new(args: &'a [Arg], offsets: &'a [usize], vals: &'a mut [T]) -> Self {
        ElemCtx {
            args,
            offsets,
            vals,
            fault: None,
        }
    }

    fn locate(&mut self, arg: usize, comp: usize, want: Access, what: &str) -> Option<usize> {
        match self.args.get(arg) {
            Some(a) if a.access == want && comp < a.components => Some(self.offsets[arg] + comp),
            Some(a) => {
                self.fault.get_or_insert_with(|| {
                    format!(
                        "{what} of argument {arg} (`{}`, component {comp}) not allowed by its {:?} descriptor",
                        a.array, a.access
                    )
                });
                None
            }
            None => {
                self.fault
                    .get_or_insert_with(|| format!("{what} of undeclared argument {arg}"));
                None
            }
        }
    }

    pub fn read(&mut self, arg: usize, comp: usize) -> T {
        match self.locate(arg, comp, Access::Read, "read") {
            Some(i) => self.vals[i],
            None => T::default(),
        }
    }

    pub fn add(&mut self, arg: usize, comp: usize, v: T) {
        if let Some(i) = self.locate(arg, comp, Access::Inc, "increment") {
            self.vals[i] += v;
        }
    }

    pub fn set(&mut self, arg: usize, comp: usize, v: T) {
        if let Some(i) = self.locate(arg, comp, Access::Write, "write") {
            self.vals[i] = v;
        }
    }

    pub fn take_fault(&mut self) -> Option<String> {
        self.fault.take()
    }
}

/// Built-in element functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// Edge flux: reads `q` (4 values) at every slot and direct `edge_w`
    /// (2 values), increments `res` (4 values) at every slot.
    Flux { no_indirect_read: bool },
    /// Reads direct `stress` (3) and `vol` (1), increments `force` (3) at
    /// every slot.
    Scatter8,
    /// Reads `state` (28) at every slot and direct `normal` (3), increments
    /// `flux` (5) antisymmetrically.
    FaceFlux { heavy: bool },
}

pub const KERNEL_NAMES: [&str; 5] = [
    "flux",
    "flux-noread",
    "scatter8",
    "face-flux",
    "face-flux-heavy",
];

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Flux {
                no_indirect_read: false,
            } => "flux",
            KernelKind::Flux {
                no_indirect_read: true,
            } => "flux-noread",
            KernelKind::Scatter8 => "scatter8",
            KernelKind::FaceFlux { heavy: false } => "face-flux",
            KernelKind::FaceFlux { heavy: true } => "face-flux-heavy",
        }
    }

    pub fn parse(s: &str) -> Option<KernelKind> {
        Some(match s {
            "flux" => KernelKind::Flux {
                no_indirect_read: false,
            },
            "flux-noread" => KernelKind::Flux {
                no_indirect_read: true,
            },
            "scatter8" => KernelKind::Scatter8,
            "face-flux" => KernelKind::FaceFlux { heavy: false },
            "face-flux-heavy" => KernelKind::FaceFlux { heavy: true },
            _ => return None,
        })
    }

    /// Registers per thread assumed by the occupancy estimate.
    pub fn registers(self) -> u32 {
        match self {
            KernelKind::Flux { .. } => 48,
            KernelKind::Scatter8 => 96,
            KernelKind::FaceFlux { .. } => 165,
        }
    }

    /// `(array, on to-set, components, access)` for every array the kernel
    /// touches.
    pub fn arrays(self) -> Vec<(&'static str, bool, usize, Access)> {
        match self {
            KernelKind::Flux { no_indirect_read } => {
                let mut v = vec![
                    ("res", true, 4, Access::Inc),
                    ("edge_w", false, 2, Access::Read),
                ];
                if !no_indirect_read {
                    v.insert(0, ("q", true, 4, Access::Read));
                }
                v
            }
            KernelKind::Scatter8 => vec![
                ("force", true, 3, Access::Inc),
                ("stress", false, 3, Access::Read),
                ("vol", false, 1, Access::Read),
            ],
            KernelKind::FaceFlux { .. } => vec![
                ("state", true, 28, Access::Read),
                ("flux", true, 5, Access::Inc),
                ("normal", false, 3, Access::Read),
            ],
        }
    }

    /// Builds the signature for a mapping of the given arity: indirect arrays
    /// get one argument per slot, in array order then slot order.
    pub fn signature(self, mapping: &str, arity: usize) -> KernelSig {
        let mut args = Vec::new();
        for (name, indirect, comps, access) in self.arrays() {
            if indirect {
                for slot in 0..arity {
                    args.push(Arg::new(name, ArgKind::Indirect { slot }, access, comps));
                }
            } else {
                args.push(Arg::new(name, ArgKind::Direct, access, comps));
            }
        }
        KernelSig {
            mapping: mapping.to_string(),
            arity,
            args,
        }
    }

    /// Signature bound to the iteration mapping of `mesh` (the structured
    /// mapping if present, otherwise the first one).
    pub fn bind(self, mesh: &Mesh) -> Result<KernelSpec> {
        let m = iteration_mapping(mesh)?;
        Ok(KernelSpec {
            kind: self,
            sig: self.signature(&m, mesh.mapping(&m).unwrap().arity),
        })
    }
}

/// Name of the mapping kernels iterate over by default.
pub fn iteration_mapping(mesh: &Mesh) -> Result<String> {
    if let Some(info) = mesh.structured() {
        return Ok(info.mapping.clone());
    }
    mesh.mappings()
        .first()
        .map(|m| m.name.clone())
        .ok_or_else(|| Error::validation("mesh has no mapping to iterate over"))
}

/// Slot pairs `(a, b)` the flux-style kernels couple: the single pair for
/// arity 2, otherwise every slot with its cyclic successor.
fn slot_pairs(arity: usize) -> Vec<(usize, usize)> {
    match arity {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => (0..arity).map(|s| (s, (s + 1) % arity)).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub sig: KernelSig,
}

impl KernelSpec {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn registers(&self) -> u32 {
        self.kind.registers()
    }

    pub fn apply<T: Scalar>(&self, ctx: &mut ElemCtx<T>) {
        let arity = self.sig.arity;
        let one = T::from_i64(1);
        match self.kind {
            KernelKind::Flux { no_indirect_read } => {
                let (res, w) = if no_indirect_read {
                    (0, arity)
                } else {
                    (arity, 2 * arity)
                };
                let w0 = ctx.read(w, 0);
                let w1 = ctx.read(w, 1);
                if no_indirect_read {
                    for s in 0..arity {
                        for c in 0..4 {
                            ctx.add(res + s, c, w0 + w1 * T::from_i64(c as i64));
                        }
                    }
                    return;
                }
                let pairs: Vec<(usize, usize)> = if arity == 2 {
                    vec![(0, 1), (1, 0)]
                } else {
                    slot_pairs(arity)
                };
                for (s, t) in pairs {
                    for c in 0..4 {
                        let qs = ctx.read(s, c);
                        let qt = ctx.read(t, c);
                        let v = w0 + w1 * (qt - qs) * (one + (qs * qt).root());
                        ctx.add(res + s, c, v);
                    }
                }
                if arity == 1 {
                    for c in 0..4 {
                        ctx.add(res, c, w0);
                    }
                }
            }
            KernelKind::Scatter8 => {
                let force = 0;
                let stress = arity;
                let vol = ctx.read(arity + 1, 0);
                let v: Vec<T> = (0..3).map(|c| ctx.read(stress, c) * vol).collect();
                for s in 0..arity {
                    for (c, &x) in v.iter().enumerate() {
                        ctx.add(force + s, c, x);
                    }
                }
            }
            KernelKind::FaceFlux { heavy } => {
                let (state, flux, normal) = (0, arity, 2 * arity);
                let n: Vec<T> = (0..3).map(|m| ctx.read(normal, m)).collect();
                for (a, b) in slot_pairs(arity) {
                    let sa: Vec<T> = (0..28).map(|j| ctx.read(state + a, j)).collect();
                    let sb: Vec<T> = (0..28).map(|j| ctx.read(state + b, j)).collect();
                    let delta: Vec<T> = sa.iter().zip(&sb).map(|(&x, &y)| y - x).collect();
                    let scale = if heavy {
                        let mut g = T::default();
                        for j in 0..28 {
                            g += (sa[j] * sa[j] + sb[j] * sb[j]).root();
                        }
                        one + g.root()
                    } else {
                        one
                    };
                    for c in 0..5 {
                        let mut f = T::default();
                        for m in 0..6 {
                            f += n[m % 3] * delta[(c + 5 * m) % 28];
                        }
                        let f = f * scale;
                        ctx.add(flux + a, c, f);
                        ctx.add(flux + b, c, T::default() - f);
                    }
                }
            }
        }
    }
}
