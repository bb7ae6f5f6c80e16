use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use meshplan_core::plan::Plan;
use tempfile::TempDir;

fn meshplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshplan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = meshplan(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], code: i32) -> serde_json::Value {
    let out = meshplan(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stderr).expect("error is JSON")
}

struct Files(TempDir);

impl Files {
    fn new() -> Self {
        Files(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn gen_plan_run_pipeline() {
    let f = Files::new();
    ok(&[
        "gen",
        "--family",
        "quad2d",
        "--dims",
        "16,16",
        "--seed",
        "2",
        "-o",
        &f.s("m.txt"),
    ]);
    assert!(read(&f.path("m.txt")).starts_with("meshplan-mesh 1"));
    for (strategy, reorder) in [("global", "gps"), ("hier", "partition"), ("hier", "none")] {
        ok(&[
            "plan",
            "--mesh",
            &f.s("m.txt"),
            "--strategy",
            strategy,
            "--reorder",
            reorder,
            "--block-size",
            "64",
            "-o",
            &f.s("p.txt"),
        ]);
        ok(&[
            "run",
            "--mesh",
            &f.s("m.txt"),
            "--plan",
            &f.s("p.txt"),
            "--metrics-json",
            &f.s("m.json"),
            "--metrics-csv",
            &f.s("m.csv"),
            "--out",
            &f.s("o.txt"),
        ]);
        let csv = read(&f.path("m.csv"));
        assert!(csv.starts_with("# meshplan-metrics v1\nkernel,"));
        assert_eq!(csv.lines().count(), 3);
        let json: serde_json::Value = serde_json::from_str(&read(&f.path("m.json"))).unwrap();
        assert_eq!(json["strategy"], strategy);
        assert!(read(&f.path("o.txt")).starts_with("meshplan-mesh 1"));
    }
}

#[test]
fn no_verify_keeps_metrics() {
    let f = Files::new();
    ok(&[
        "gen",
        "--family",
        "hex-cells",
        "--dims",
        "4,4,8",
        "-o",
        &f.s("m.txt"),
    ]);
    ok(&[
        "plan",
        "--mesh",
        &f.s("m.txt"),
        "--reorder",
        "structured:2,2,4",
        "-o",
        &f.s("p.txt"),
    ]);
    let base = ["run", "--mesh", &f.s("m.txt"), "--plan", &f.s("p.txt")];
    let a = ok(&base);
    let b = ok(&[&base[..], &["--no-verify"]].concat());
    assert_eq!(a, b);
}

#[test]
fn structured_reorder_on_unstructured_mesh_is_a_validation_error() {
    let f = Files::new();
    ok(&[
        "gen",
        "--family",
        "tri2d",
        "--dims",
        "8,8",
        "-o",
        &f.s("m.txt"),
    ]);
    let err = fails(
        &[
            "plan",
            "--mesh",
            &f.s("m.txt"),
            "--reorder",
            "structured:1,1,1",
            "-o",
            &f.s("p.txt"),
        ],
        2,
    );
    assert_eq!(err["error"], "validation");
}

#[test]
fn oversized_staging_is_a_capacity_error() {
    let f = Files::new();
    ok(&[
        "gen",
        "--family",
        "hex-faces",
        "--dims",
        "8,8,8",
        "-o",
        &f.s("m.txt"),
    ]);
    let err = fails(
        &[
            "plan",
            "--mesh",
            &f.s("m.txt"),
            "--block-size",
            "1024",
            "-o",
            &f.s("p.txt"),
        ],
        4,
    );
    assert_eq!(err["error"], "capacity");
    assert!(err["needed"].as_u64().unwrap() > err["limit"].as_u64().unwrap());
}

#[test]
fn tampered_plan_is_a_race() {
    let f = Files::new();
    ok(&[
        "gen",
        "--family",
        "quad2d",
        "--dims",
        "8,8",
        "-o",
        &f.s("m.txt"),
    ]);
    ok(&[
        "plan",
        "--mesh",
        &f.s("m.txt"),
        "--strategy",
        "global",
        "-o",
        &f.s("p.txt"),
    ]);
    let Plan::Global(mut plan) = Plan::from_text(&read(&f.path("p.txt"))).unwrap() else {
        panic!("global plan expected");
    };
    let n = plan.common.from_size;
    plan.colour_offsets = vec![0, n];
    std::fs::write(f.path("p.txt"), Plan::Global(plan).to_text()).unwrap();
    let err = fails(
        &["run", "--mesh", &f.s("m.txt"), "--plan", &f.s("p.txt")],
        3,
    );
    assert_eq!(err["error"], "race");
    assert_eq!(err["elements"].as_array().unwrap().len(), 2);
}

#[test]
fn missing_file_is_an_io_error() {
    let f = Files::new();
    let err = fails(
        &["plan", "--mesh", &f.s("absent.txt"), "-o", &f.s("p.txt")],
        5,
    );
    assert_eq!(err["error"], "io");
}

#[test]
fn malformed_mesh_is_a_parse_error() {
    let f = Files::new();
    std::fs::write(f.path("m.txt"), "meshplan-mesh 1\nsets x\n").unwrap();
    let err = fails(&["plan", "--mesh", &f.s("m.txt"), "-o", &f.s("p.txt")], 2);
    assert_eq!(err["error"], "parse");
    assert_eq!(err["line"], 2);
}

#[test]
fn plan_kernel_mismatch_rejected() {
    let f = Files::new();
    ok(&[
        "gen",
        "--family",
        "quad2d",
        "--dims",
        "6,6",
        "-o",
        &f.s("m.txt"),
    ]);
    ok(&["plan", "--mesh", &f.s("m.txt"), "-o", &f.s("p.txt")]);
    fails(
        &[
            "run",
            "--mesh",
            &f.s("m.txt"),
            "--plan",
            &f.s("p.txt"),
            "--kernel",
            "flux-noread",
        ],
        2,
    );
}

#[test]
fn compare_is_deterministic_and_partition_reuses_most() {
    let f = Files::new();
    let run = |csv: &str| {
        ok(&[
            "compare",
            "--family",
            "quad2d",
            "--dims",
            "32,32",
            "--seed",
            "7",
            "--strategies",
            "hier",
            "-o",
            &f.s(csv),
            "--svg",
            &f.s("c.svg"),
        ])
    };
    let text = run("a.csv");
    run("b.csv");
    let a = read(&f.path("a.csv"));
    assert_eq!(a, read(&f.path("b.csv")));
    assert_eq!(text.lines().count(), 4);
    let rows: Vec<Vec<&str>> = a.lines().skip(2).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let reuse_col = 2 + meshplan_core::sim::CSV_COLUMNS
        .iter()
        .position(|&c| c == "reuse_factor")
        .unwrap();
    let best = rows
        .iter()
        .max_by(|x, y| {
            x[reuse_col]
                .parse::<f64>()
                .unwrap()
                .total_cmp(&y[reuse_col].parse().unwrap())
        })
        .unwrap();
    assert_eq!(best[0], "hier/partition/aos");
    assert!(read(&f.path("c.svg")).starts_with("<svg"));
}

#[test]
fn precision_override_regenerates_data() {
    let f = Files::new();
    ok(&[
        "gen",
        "--family",
        "quad2d",
        "--dims",
        "6,6",
        "-o",
        &f.s("m.txt"),
    ]);
    ok(&[
        "plan",
        "--mesh",
        &f.s("m.txt"),
        "--precision",
        "i32",
        "-o",
        &f.s("p.txt"),
    ]);
    let out = ok(&["run", "--mesh", &f.s("m.txt"), "--plan", &f.s("p.txt")]);
    let json: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(json["precision"], "i32");
}
