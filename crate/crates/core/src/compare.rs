//! Runs one kernel under several plan configurations and tabulates the
//! metrics side by side.

use std::fmt::Write as _;

use crate::error::Result;
use crate::hw::HardwareDescriptor;
use crate::kernel::KernelSpec;
use crate::mesh::{Layout, Mesh};
use crate::plan::{build_plan, PlanConfig, ReorderMode, Strategy};
use crate::sim::{execute, MetricsReport, SimOptions, CSV_COLUMNS};

pub const MAGIC: &str = "# meshplan-compare v1";

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub label: String,
    pub metrics: MetricsReport,
    /// `None` when verification was skipped.
    pub verified: Option<bool>,
}

/// Label used for a configuration in tables, e.g. `hier/partition/aos`.
pub fn config_label(cfg: &PlanConfig) -> String {
    format!(
        "{}/{}/{}",
        cfg.strategy.name(),
        cfg.reorder.name(),
        cfg.layout.name()
    )
}

/// Every combination of the given strategies, reorderings and layouts, with
/// the remaining settings taken from `base`.
pub fn config_matrix(
    base: &PlanConfig,
    strategies: &[Strategy],
    reorders: &[ReorderMode],
    layouts: &[Layout],
) -> Vec<PlanConfig> {
    let mut out = Vec::new();
    for &strategy in strategies {
        for &reorder in reorders {
            for &layout in layouts {
                out.push(PlanConfig {
                    strategy,
                    reorder,
                    layout,
                    ..base.clone()
                });
            }
        }
    }
    out
}

pub fn run_compare(
    mesh: &Mesh,
    kernel: &KernelSpec,
    configs: &[PlanConfig],
    hw: &HardwareDescriptor,
    opts: &SimOptions,
) -> Result<Vec<CompareRow>> {
    configs
        .iter()
        .map(|cfg| {
            let plan = build_plan(mesh, kernel, cfg, hw)?;
            let run = execute(mesh, &plan, kernel, hw, opts)?;
            Ok(CompareRow {
                label: config_label(cfg),
                metrics: run.metrics,
                verified: run.verification.map(|v| v.passed),
            })
        })
        .collect()
}

fn verified_cell(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "yes",
        Some(false) => "no",
        None => "-",
    }
}

/// Magic line, header, one row per configuration.
pub fn to_csv(rows: &[CompareRow]) -> String {
    let mut out = format!("{MAGIC}\nconfig,verified,{}\n", CSV_COLUMNS.join(","));
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{}",
            r.label,
            verified_cell(r.verified),
            r.metrics.csv_row()
        );
    }
    out
}

/// Columns shown in the text table.
const TEXT_COLUMNS: [&str; 10] = [
    "config",
    "bw-proxy",
    "occupancy",
    "reads",
    "writes",
    "blk-col",
    "thr-col",
    "reuse",
    "lines/blk",
    "verified",
];

/// Fixed-width table of the headline metrics.
pub fn to_text(rows: &[CompareRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let m = &r.metrics;
            vec![
                r.label.clone(),
                format!("{:.3}", m.bandwidth_proxy),
                format!("{:.3}", m.occupancy),
                m.read_transactions.to_string(),
                m.write_transactions.to_string(),
                m.block_colours.to_string(),
                if m.strategy == "global" {
                    "-".to_string()
                } else {
                    format!("{:.2}", m.thread_colours_mean)
                },
                format!("{:.3}", m.reuse_factor),
                format!("{:.1}", m.cache_lines_per_block),
                verified_cell(r.verified).to_string(),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = TEXT_COLUMNS.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |row: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in row.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "  {c:>w$}");
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(TEXT_COLUMNS.to_vec());
    for row in &cells {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

/// Grouped bar chart of read and write transactions per configuration.
pub fn to_svg(rows: &[CompareRow]) -> String {
    let (bar, gap, left, top, height) = (18.0, 14.0, 60.0, 30.0, 220.0);
    let max = rows
        .iter()
        .map(|r| {
            r.metrics
                .read_transactions
                .max(r.metrics.write_transactions)
        })
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let width = left + rows.len() as f64 * (2.0 * bar + gap) + gap;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{:.0}" font-family="monospace" font-size="10">"#,
        top + height + 120.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{left}" y="16">line transactions (dark: reads, light: writes)</text>"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="{left}" y1="{0}" x2="{width:.0}" y2="{0}" stroke="black"/>"#,
        top + height
    );
    let _ = writeln!(out, r#"<text x="4" y="{:.0}">{max:.0}</text>"#, top + 4.0);
    for (i, r) in rows.iter().enumerate() {
        let x = left + gap + i as f64 * (2.0 * bar + gap);
        for (j, (v, colour)) in [
            (r.metrics.read_transactions, "#335"),
            (r.metrics.write_transactions, "#99c"),
        ]
        .into_iter()
        .enumerate()
        {
            let h = v as f64 / max * height;
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="{bar}" height="{h:.1}" fill="{colour}"><title>{v}</title></rect>"#,
                x + j as f64 * bar,
                top + height - h
            );
        }
        let _ = writeln!(
            out,
            r#"<text transform="translate({:.1},{:.0}) rotate(60)">{}</text>"#,
            x + 4.0,
            top + height + 8.0,
            r.label
        );
    }
    out.push_str("</svg>\n");
    out
}
