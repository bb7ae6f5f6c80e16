//! `meshplan`: generate meshes, build plans, run them on the cost model and
//! compare configurations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use meshplan_core::compare::{self, config_matrix, run_compare};
use meshplan_core::hw::HardwareDescriptor;
use meshplan_core::kernel::{KernelKind, KernelSpec, KERNEL_NAMES};
use meshplan_core::kernels::{bind_kernel_data, generate, Family};
use meshplan_core::mesh::text::{parse_mesh, write_mesh};
use meshplan_core::partition::PartitionConfig;
use meshplan_core::plan::{build_plan, Plan, PlanConfig, ReorderMode, StagingPolicy, Strategy};
use meshplan_core::sim::{execute, SimOptions};
use meshplan_core::{ElemType, Error, Layout, Mesh, Result};

#[derive(Parser)]
#[command(
    name = "meshplan",
    version,
    about = "Locality-optimised execution planning for unstructured meshes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a mesh with kernel data attached.
    Gen(GenArgs),
    /// Build an execution plan for a kernel on a mesh.
    Plan(PlanArgs),
    /// Execute a plan, report metrics and check against the serial run.
    Run(RunArgs),
    /// Run a matrix of configurations and tabulate the metrics.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenArgs {
    /// quad2d, tri2d, hex-cells or hex-faces.
    #[arg(long)]
    family: String,
    /// Comma-separated extents, e.g. `32,32` or `8,8,16`.
    #[arg(long)]
    dims: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Clone)]
struct KernelArgs {
    /// Kernel name; defaults to the natural kernel of the mesh.
    #[arg(long)]
    kernel: Option<String>,
    /// f64, f32, i64 or i32. Kernel arrays of another type are regenerated.
    #[arg(long)]
    precision: Option<String>,
    /// Seed for generated kernel data.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct PlanFlags {
    #[arg(long, default_value = "128")]
    block_size: usize,
    /// Load-imbalance tolerance.
    #[arg(long, default_value = "1.001")]
    tolerance: f64,
    #[arg(long, default_value = "0.5")]
    epsilon: f64,
    /// Cut every shared point equally instead of weighting by count.
    #[arg(long)]
    unweighted_cut: bool,
    /// all or increment.
    #[arg(long, default_value = "all")]
    staging: String,
    /// p100, v100 or a JSON descriptor file.
    #[arg(long, default_value = "p100")]
    hw: String,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    /// global or hier.
    #[arg(long, default_value = "hier")]
    strategy: String,
    /// none, gps, partition or structured:bx,by,bz.
    #[arg(long, default_value = "none")]
    reorder: String,
    /// aos or soa (indirect data).
    #[arg(long, default_value = "aos")]
    layout: String,
    #[command(flatten)]
    flags: PlanFlags,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    /// p100, v100 or a JSON descriptor file.
    #[arg(long, default_value = "p100")]
    hw: String,
    /// Model 16-byte staging loads.
    #[arg(long)]
    wide: bool,
    /// Skip the serial oracle.
    #[arg(long)]
    no_verify: bool,
    /// Write the output mesh here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    metrics_json: Option<PathBuf>,
    #[arg(long)]
    metrics_csv: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Mesh file; alternatively give --family and --dims.
    #[arg(long, conflicts_with = "family")]
    mesh: Option<PathBuf>,
    #[arg(long, requires = "dims")]
    family: Option<String>,
    #[arg(long)]
    dims: Option<String>,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value = "global,hier")]
    strategies: String,
    /// Comma-separated reorderings.
    #[arg(long, default_value = "none,gps,partition")]
    reorders: String,
    #[arg(long, default_value = "aos")]
    layouts: String,
    #[command(flatten)]
    flags: PlanFlags,
    #[arg(long)]
    wide: bool,
    #[arg(long)]
    no_verify: bool,
    /// CSV output file (the text table always goes to stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write a bar chart of the transactions.
    #[arg(long)]
    svg: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Race { .. } => 3,
        Error::Capacity { .. } => 4,
        Error::Io(_) => 5,
        _ => 2,
    }
}

fn error_json(e: &Error) -> serde_json::Value {
    let mut v = json!({ "error": e.kind(), "message": e.to_string() });
    match e {
        Error::Race {
            scope,
            first,
            second,
            point,
        } => {
            v["scope"] = json!(scope);
            v["elements"] = json!([first, second]);
            v["point"] = json!(point);
        }
        Error::Capacity {
            block,
            needed,
            limit,
        } => {
            v["block"] = json!(block);
            v["needed"] = json!(needed);
            v["limit"] = json!(limit);
        }
        Error::Parse { line, .. } => v["line"] = json!(line),
        Error::KernelFault { element, .. } => v["element"] = json!(element),
        _ => {}
    }
    v
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::validation(msg)
}

fn parse_list<T>(s: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| f(t.trim()).ok_or_else(|| bad(format!("unknown {what} `{t}`"))))
        .collect()
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    parse_list(s, "dimension", |t| t.parse().ok())
}

fn load_hw(spec: &str) -> Result<HardwareDescriptor> {
    match HardwareDescriptor::preset(spec) {
        Some(hw) => Ok(hw),
        None => HardwareDescriptor::from_json(&read(Path::new(spec))?),
    }
}

fn natural_kernel(mesh: &Mesh) -> Result<KernelKind> {
    let m = meshplan_core::kernel::iteration_mapping(mesh)?;
    let map = mesh.mapping(&m).expect("iteration mapping exists");
    Ok(match (map.arity, mesh.set_name(map.to)) {
        (8, _) => KernelKind::Scatter8,
        (_, "cells") if mesh.set_name(map.from) == "faces" => KernelKind::FaceFlux { heavy: false },
        _ => KernelKind::Flux {
            no_indirect_read: false,
        },
    })
}

/// Resolves the kernel and makes sure the mesh carries its arrays in the
/// requested precision, generating seeded data where they are missing or do
/// not fit.
fn prepare(mut mesh: Mesh, args: &KernelArgs, planned: Option<&str>) -> Result<(Mesh, KernelSpec)> {
    let name = match (&args.kernel, planned) {
        (Some(k), Some(p)) if k != p => {
            return Err(bad(format!("plan was built for kernel `{p}`, not `{k}`")));
        }
        (Some(k), _) => Some(k.as_str()),
        (None, p) => p,
    };
    let kind = match name {
        Some(n) => KernelKind::parse(n).ok_or_else(|| {
            bad(format!(
                "unknown kernel `{n}` (expected one of {})",
                KERNEL_NAMES.join(", ")
            ))
        })?,
        None => natural_kernel(&mesh)?,
    };
    let precision = match &args.precision {
        Some(p) => Some(ElemType::parse(p).ok_or_else(|| bad(format!("unknown precision `{p}`")))?),
        None => None,
    };
    let spec = kind.bind(&mesh)?;
    let fits = |mesh: &Mesh, ty: ElemType| spec.sig.validate(mesh, ty).is_ok();
    let present = spec
        .sig
        .args
        .first()
        .and_then(|a| mesh.array(&a.array))
        .map(|d| d.elem_type());
    match (precision, present) {
        (Some(ty), _) if !fits(&mesh, ty) => bind_kernel_data(&mut mesh, kind, ty, args.seed)?,
        (None, Some(ty)) if fits(&mesh, ty) => {}
        (None, _) => bind_kernel_data(&mut mesh, kind, ElemType::F64, args.seed)?,
        _ => {}
    }
    Ok((mesh, spec))
}

fn plan_config(
    strategy: Strategy,
    reorder: ReorderMode,
    layout: Layout,
    flags: &PlanFlags,
    seed: u64,
) -> Result<PlanConfig> {
    Ok(PlanConfig {
        strategy,
        reorder,
        partition: PartitionConfig {
            block_size: flags.block_size,
            imbalance: flags.tolerance,
            epsilon: flags.epsilon,
            seed,
            unweighted: flags.unweighted_cut,
        },
        layout,
        staging: StagingPolicy::parse(&flags.staging)
            .ok_or_else(|| bad(format!("unknown staging policy `{}`", flags.staging)))?,
    })
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let family =
        Family::parse(&a.family).ok_or_else(|| bad(format!("unknown family `{}`", a.family)))?;
    let mesh = generate(family, &parse_dims(&a.dims)?, a.seed)?;
    write(&a.output, &write_mesh(&mesh))
}

fn cmd_plan(a: &PlanArgs) -> Result<()> {
    let (mesh, kernel) = prepare(parse_mesh(&read(&a.mesh)?)?, &a.kernel, None)?;
    let strategy = Strategy::parse(&a.strategy)
        .ok_or_else(|| bad(format!("unknown strategy `{}`", a.strategy)))?;
    let reorder = ReorderMode::parse(&a.reorder)
        .ok_or_else(|| bad(format!("unknown reordering `{}`", a.reorder)))?;
    let layout =
        Layout::parse(&a.layout).ok_or_else(|| bad(format!("unknown layout `{}`", a.layout)))?;
    let cfg = plan_config(strategy, reorder, layout, &a.flags, a.kernel.seed)?;
    let plan = build_plan(&mesh, &kernel, &cfg, &load_hw(&a.flags.hw)?)?;
    write(&a.output, &plan.to_text())?;
    let summary = match &plan {
        Plan::Global(p) => json!({ "strategy": "global", "colours": p.num_colours() }),
        Plan::Hierarchical(p) => json!({
            "strategy": "hier",
            "blocks": p.num_blocks(),
            "block_colours": p.num_block_colours(),
            "max_thread_colours": p.num_thread_colours.iter().max(),
            "reuse_factor": p.reuse_factor(),
            "max_shared_bytes": p.max_shared_bytes(),
            "over_tolerance": p.over_tolerance,
        }),
    };
    println!("{summary}");
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let plan = Plan::from_text(&read(&a.plan)?)?;
    let precision = a
        .kernel
        .precision
        .clone()
        .or(Some(plan.common().precision.name().to_string()));
    let args = KernelArgs {
        precision,
        ..a.kernel.clone()
    };
    let (mesh, kernel) = prepare(
        parse_mesh(&read(&a.mesh)?)?,
        &args,
        Some(&plan.common().kernel),
    )?;
    let opts = SimOptions {
        wide: a.wide,
        verify: !a.no_verify,
        trace: false,
    };
    let run = execute(&mesh, &plan, &kernel, &load_hw(&a.hw)?, &opts)?;
    if let Some(p) = &a.out {
        write(p, &write_mesh(&run.mesh))?;
    }
    if let Some(p) = &a.metrics_json {
        write(p, &run.metrics.to_json())?;
    }
    if let Some(p) = &a.metrics_csv {
        write(p, &run.metrics.to_csv())?;
    }
    if a.metrics_json.is_none() && a.metrics_csv.is_none() {
        print!("{}", run.metrics.to_json());
    }
    match run.verification {
        Some(v) if !v.passed => Err(bad(format!(
            "result differs from the serial run in `{}`: {} of {} values, max relative error {:e}",
            v.first_mismatch.unwrap_or_default(),
            v.mismatches,
            v.compared_values,
            v.max_relative_error
        ))),
        _ => Ok(()),
    }
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let mesh = match (&a.mesh, &a.family, &a.dims) {
        (Some(p), _, _) => parse_mesh(&read(p)?)?,
        (None, Some(f), Some(d)) => {
            let family = Family::parse(f).ok_or_else(|| bad(format!("unknown family `{f}`")))?;
            generate(family, &parse_dims(d)?, a.kernel.seed)?
        }
        _ => return Err(bad("compare needs --mesh or --family with --dims")),
    };
    let (mesh, kernel) = prepare(mesh, &a.kernel, None)?;
    let base = plan_config(
        Strategy::Hierarchical,
        ReorderMode::None,
        Layout::Aos,
        &a.flags,
        a.kernel.seed,
    )?;
    let configs = config_matrix(
        &base,
        &parse_list(&a.strategies, "strategy", Strategy::parse)?,
        &parse_list(&a.reorders, "reordering", ReorderMode::parse)?,
        &parse_list(&a.layouts, "layout", Layout::parse)?,
    );
    let opts = SimOptions {
        wide: a.wide,
        verify: !a.no_verify,
        trace: false,
    };
    let rows = run_compare(&mesh, &kernel, &configs, &load_hw(&a.flags.hw)?, &opts)?;
    if let Some(p) = &a.output {
        write(p, &compare::to_csv(&rows))?;
    }
    if let Some(p) = &a.svg {
        write(p, &compare::to_svg(&rows))?;
    }
    print!("{}", compare::to_text(&rows));
    if let Some(r) = rows.iter().find(|r| r.verified == Some(false)) {
        return Err(bad(format!(
            "configuration {} differs from the serial run",
            r.label
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
