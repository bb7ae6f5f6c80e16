//! Value execution for the serial oracle and both plan kinds.

use rayon::prelude::*;

use super::check::HierLayout;
use super::Working;
use crate::error::{Error, Result};
use crate::kernel::{Access, ElemCtx, KernelSpec};
use crate::mesh::{ElemType, Scalar, Values};
use crate::plan::{GlobalPlan, HierarchicalPlan};

macro_rules! typed {
    ($w:expr, $data:expr, $f:ident ( $($arg:expr),* )) => {
        match $w.precision {
            ElemType::F64 => run::<f64, _>($data, |d| $f::<f64>($($arg,)* d)),
            ElemType::F32 => run::<f32, _>($data, |d| $f::<f32>($($arg,)* d)),
            ElemType::I64 => run::<i64, _>($data, |d| $f::<i64>($($arg,)* d)),
            ElemType::I32 => run::<i32, _>($data, |d| $f::<i32>($($arg,)* d)),
        }
    };
}

/// Unwraps `data` into typed vectors, runs `f`, and wraps them back.
fn run<T: Scalar, F>(data: &mut [Values], f: F) -> Result<()>
where
    F: FnOnce(&mut [Vec<T>]) -> Result<()>,
{
    let mut typed: Vec<Vec<T>> = data
        .iter_mut()
        .map(|v| std::mem::take(T::slice_mut(v).expect("arrays share the kernel precision")))
        .collect();
    let out = f(&mut typed);
    for (v, t) in data.iter_mut().zip(typed) {
        *v = T::wrap(t);
    }
    out
}

/// Gathers the inputs of element `e` through `read(arg, comp)` and applies
/// the kernel; the returned buffer holds increments and writes.
fn compute<T: Scalar>(
    w: &Working,
    k: &KernelSpec,
    e: usize,
    read: impl Fn(usize, usize) -> T,
) -> Result<Vec<T>> {
    let mut buf = vec![T::default(); w.buffer_len];
    for (i, a) in w.args.iter().enumerate() {
        if a.access == Access::Read {
            for c in 0..a.comps {
                buf[a.offset + c] = read(i, c);
            }
        }
    }
    let mut ctx = ElemCtx::new(&k.sig.args, &w.offsets, &mut buf);
    k.apply(&mut ctx);
    if let Some(message) = ctx.take_fault() {
        return Err(Error::KernelFault {
            element: w.orig_elem(e),
            message,
        });
    }
    Ok(buf)
}

fn read_global<'a, T: Scalar>(
    w: &'a Working,
    data: &'a [Vec<T>],
    e: usize,
) -> impl Fn(usize, usize) -> T + 'a {
    move |i, c| {
        let a = w.args[i].array;
        data[a][w.index(a, w.target(i, e), c)]
    }
}

/// Applies increments and writes of element `e` straight to global data,
/// restricted to arguments accepted by `which`.
fn scatter<T: Scalar>(
    w: &Working,
    data: &mut [Vec<T>],
    e: usize,
    buf: &[T],
    which: impl Fn(usize) -> bool,
) {
    for (i, a) in w.args.iter().enumerate() {
        if !a.write || !which(i) {
            continue;
        }
        let t = w.target(i, e);
        for c in 0..a.comps {
            let idx = w.index(a.array, t, c);
            let v = buf[a.offset + c];
            match a.access {
                Access::Inc => data[a.array][idx] += v,
                Access::Write => data[a.array][idx] = v,
                Access::Read => {}
            }
        }
    }
}

pub(crate) fn serial(w: &Working, k: &KernelSpec, data: &mut [Values]) -> Result<()> {
    typed!(w, data, serial_t(w, k))
}

fn serial_t<T: Scalar>(w: &Working, k: &KernelSpec, data: &mut [Vec<T>]) -> Result<()> {
    for e in 0..w.n {
        let buf = compute(w, k, e, read_global(w, data, e))?;
        scatter(w, data, e, &buf, |_| true);
    }
    Ok(())
}

pub(crate) fn global(
    w: &Working,
    k: &KernelSpec,
    plan: &GlobalPlan,
    data: &mut [Values],
) -> Result<()> {
    typed!(w, data, global_t(w, k, plan))
}

fn global_t<T: Scalar>(
    w: &Working,
    k: &KernelSpec,
    plan: &GlobalPlan,
    data: &mut [Vec<T>],
) -> Result<()> {
    for c in 0..plan.num_colours() {
        let range = plan.colour_range(c);
        let frozen: &[Vec<T>] = data;
        let bufs: Vec<Result<Vec<T>>> = range
            .clone()
            .into_par_iter()
            .map(|e| compute(w, k, e, read_global(w, frozen, e)))
            .collect();
        for (e, buf) in range.zip(bufs) {
            scatter(w, data, e, &buf?, |_| true);
        }
    }
    Ok(())
}

pub(crate) fn hierarchical(
    w: &Working,
    k: &KernelSpec,
    plan: &HierarchicalPlan,
    layout: &HierLayout,
    data: &mut [Values],
) -> Result<()> {
    typed!(w, data, hierarchical_t(w, k, plan, layout))
}

/// Shared increment regions (SoA, one per kernel array) and the element
/// buffers of direct writes.
struct BlockOut<T> {
    shared: Vec<Vec<T>>,
    direct: Vec<(usize, Vec<T>)>,
}

fn block_t<T: Scalar>(
    w: &Working,
    k: &KernelSpec,
    plan: &HierarchicalPlan,
    layout: &HierLayout,
    data: &[Vec<T>],
    b: usize,
) -> Result<BlockOut<T>> {
    let list = plan.stage_list(b);
    let np = list.len();
    let mut shared: Vec<Vec<T>> = vec![Vec::new(); w.arrays.len()];
    for (a, arr) in w.arrays.iter().enumerate() {
        if !layout.staged[a] {
            continue;
        }
        shared[a] = if arr.access == Access::Read {
            let mut v = Vec::with_capacity(np * arr.comps);
            for c in 0..arr.comps {
                v.extend(list.iter().map(|&p| data[a][w.index(a, p as usize, c)]));
            }
            v
        } else {
            vec![T::default(); np * arr.comps]
        };
    }
    let range = plan.block_range(b);
    let mut bufs = Vec::with_capacity(range.len());
    for e in range.clone() {
        let staged = &shared;
        let read = |i: usize, c: usize| {
            let arg = &w.args[i];
            match arg.slot {
                Some(s) if layout.staged[arg.array] => {
                    staged[arg.array][c * np + plan.local(s, e) as usize]
                }
                _ => data[arg.array][w.index(arg.array, w.target(i, e), c)],
            }
        };
        bufs.push(compute(w, k, e, read)?);
    }
    for colour in 0..plan.num_thread_colours[b] {
        for (t, e) in range.clone().enumerate() {
            if plan.thread_colours[e] != colour {
                continue;
            }
            for arg in w.args.iter().filter(|a| a.access == Access::Inc) {
                let l = plan.local(arg.slot.expect("increments are indirect"), e) as usize;
                for c in 0..arg.comps {
                    shared[arg.array][c * np + l] += bufs[t][arg.offset + c];
                }
            }
        }
    }
    let has_direct_write = w.args.iter().any(|a| a.access == Access::Write);
    let direct = if has_direct_write {
        range.zip(bufs).collect()
    } else {
        Vec::new()
    };
    for (a, arr) in w.arrays.iter().enumerate() {
        if arr.access == Access::Read {
            shared[a] = Vec::new();
        }
    }
    Ok(BlockOut { shared, direct })
}

fn hierarchical_t<T: Scalar>(
    w: &Working,
    k: &KernelSpec,
    plan: &HierarchicalPlan,
    layout: &HierLayout,
    data: &mut [Vec<T>],
) -> Result<()> {
    for blocks in &layout.by_colour {
        let frozen: &[Vec<T>] = data;
        let outs: Vec<Result<BlockOut<T>>> = blocks
            .par_iter()
            .map(|&b| block_t(w, k, plan, layout, frozen, b))
            .collect();
        for (&b, out) in blocks.iter().zip(outs) {
            let out = out?;
            let list = plan.stage_list(b);
            let np = list.len();
            for (a, arr) in w.arrays.iter().enumerate() {
                if arr.access != Access::Inc {
                    continue;
                }
                for &l in &layout.written[b] {
                    let p = list[l as usize] as usize;
                    for c in 0..arr.comps {
                        data[a][w.index(a, p, c)] += out.shared[a][c * np + l as usize];
                    }
                }
            }
            for (e, buf) in &out.direct {
                scatter(w, data, *e, buf, |i| w.args[i].slot.is_none());
            }
        }
    }
    Ok(())
}
