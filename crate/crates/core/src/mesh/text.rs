//! Plain-text mesh format.
//!
//! ```text
//! meshplan-mesh 1
//! sets <k>
//! <name> <size>                                  (k lines)
//! structured <nx> <ny> <nz> <cells-nodes|faces-cells> <mapping>   (optional)
//! mapping <name> <from-set> <to-set> <arity>
//! <arity integers>                               (one line per from-element)
//! data <name> <set> <components> <f64|f32|i64|i32> <aos|soa>
//! <components values>                            (one line per element)
//! ```
//!
//! Tokens are separated by ASCII whitespace. Blank lines and lines starting
//! with `#` are ignored anywhere. Data values are always written one element
//! per line with components in order; the layout keyword only records how the
//! array is held in memory. Floats are written in shortest round-trip form, so
//! parse(write(mesh)) reproduces every value bit for bit.

use std::fmt::Write as _;

use super::{ElemType, HexTarget, Layout, Mesh, StructuredInfo, Values};
use crate::error::{Error, Result};

pub const MAGIC: &str = "meshplan-mesh 1";

pub fn write_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(out, "sets {}", mesh.sets().len());
    for s in mesh.sets() {
        let _ = writeln!(out, "{} {}", s.name, s.size);
    }
    if let Some(info) = mesh.structured() {
        let _ = writeln!(
            out,
            "structured {} {} {} {} {}",
            info.dims[0],
            info.dims[1],
            info.dims[2],
            info.target.name(),
            info.mapping
        );
    }
    for m in mesh.mappings() {
        let _ = writeln!(
            out,
            "mapping {} {} {} {}",
            m.name,
            mesh.set_name(m.from),
            mesh.set_name(m.to),
            m.arity
        );
        for row in m.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    for d in mesh.data() {
        let _ = writeln!(
            out,
            "data {} {} {} {} {}",
            d.name,
            mesh.set_name(d.set),
            d.components,
            d.elem_type().name(),
            d.layout.name()
        );
        for i in 0..d.set.size {
            let line: Vec<String> = (0..d.components)
                .map(|c| d.values.format_entry(d.index(i, c)))
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            self.last = i + 1;
            return Some((i + 1, t.split_ascii_whitespace().collect()));
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        let last = self.last;
        self.next_tokens().ok_or_else(|| Error::Parse {
            line: last + 1,
            message: format!("unexpected end of file, expected {what}"),
        })
    }
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(line: usize, tok: &str) -> Result<T> {
    tok.parse::<T>()
        .map_err(|_| perr(line, format!("cannot parse `{tok}`")))
}

pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (ln, head) = lines.expect("magic line")?;
    if head.join(" ") != MAGIC {
        return Err(perr(ln, format!("expected `{MAGIC}`")));
    }
    let (ln, toks) = lines.expect("`sets k`")?;
    if toks.len() != 2 || toks[0] != "sets" {
        return Err(perr(ln, "expected `sets <k>`"));
    }
    let k: usize = num(ln, toks[1])?;
    let mut mesh = Mesh::new();
    for _ in 0..k {
        let (ln, toks) = lines.expect("set line")?;
        if toks.len() != 2 {
            return Err(perr(ln, "expected `<name> <size>`"));
        }
        mesh.add_set(toks[0], num(ln, toks[1])?)
            .map_err(|e| perr(ln, e.to_string()))?;
    }

    let set_of = |mesh: &Mesh, ln: usize, name: &str| {
        mesh.set(name)
            .ok_or_else(|| perr(ln, format!("unknown set `{name}`")))
    };

    while let Some((ln, toks)) = lines.next_tokens() {
        match toks[0] {
            "structured" => {
                if toks.len() != 6 {
                    return Err(perr(
                        ln,
                        "expected `structured <nx> <ny> <nz> <target> <mapping>`",
                    ));
                }
                let target = HexTarget::parse(toks[4])
                    .ok_or_else(|| perr(ln, format!("unknown hex target `{}`", toks[4])))?;
                mesh.set_structured(Some(StructuredInfo {
                    dims: [num(ln, toks[1])?, num(ln, toks[2])?, num(ln, toks[3])?],
                    target,
                    mapping: toks[5].to_string(),
                }));
            }
            "mapping" => {
                if toks.len() != 5 {
                    return Err(perr(ln, "expected `mapping <name> <from> <to> <arity>`"));
                }
                let from = set_of(&mesh, ln, toks[2])?;
                let to = set_of(&mesh, ln, toks[3])?;
                let arity: usize = num(ln, toks[4])?;
                let mut table = Vec::with_capacity(from.size * arity);
                for _ in 0..from.size {
                    let (rl, row) = lines.expect("mapping row")?;
                    if row.len() != arity {
                        return Err(perr(rl, format!("expected {arity} entries")));
                    }
                    for t in row {
                        table.push(num::<u32>(rl, t)?);
                    }
                }
                mesh.add_mapping(toks[1], from, to, arity, table)
                    .map_err(|e| perr(ln, e.to_string()))?;
            }
            "data" => {
                if toks.len() != 6 {
                    return Err(perr(
                        ln,
                        "expected `data <name> <set> <components> <type> <layout>`",
                    ));
                }
                let set = set_of(&mesh, ln, toks[2])?;
                let comps: usize = num(ln, toks[3])?;
                let ty = ElemType::parse(toks[4])
                    .ok_or_else(|| perr(ln, format!("unknown element type `{}`", toks[4])))?;
                let layout = Layout::parse(toks[5])
                    .ok_or_else(|| perr(ln, format!("unknown layout `{}`", toks[5])))?;
                let mut values = Values::zeros(ty, set.size * comps);
                for i in 0..set.size {
                    let (rl, row) = lines.expect("data row")?;
                    if row.len() != comps {
                        return Err(perr(rl, format!("expected {comps} values")));
                    }
                    for (c, tok) in row.iter().enumerate() {
                        let at = super::index_of(layout, set.size, comps, i, c);
                        match &mut values {
                            Values::F64(v) => v[at] = num(rl, tok)?,
                            Values::F32(v) => v[at] = num(rl, tok)?,
                            Values::I64(v) => v[at] = num(rl, tok)?,
                            Values::I32(v) => v[at] = num(rl, tok)?,
                        }
                    }
                }
                mesh.add_data(toks[1], set, comps, layout, values)
                    .map_err(|e| perr(ln, e.to_string()))?;
            }
            other => return Err(perr(ln, format!("unknown section `{other}`"))),
        }
    }
    Ok(mesh)
}
