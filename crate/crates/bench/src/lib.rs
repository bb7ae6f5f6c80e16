//! Shared fixtures for the pipeline benchmarks.

use meshplan_core::hw::HardwareDescriptor;
use meshplan_core::kernel::KernelSpec;
use meshplan_core::kernels::{generate, Family};
use meshplan_core::plan::{build_plan, Plan, PlanConfig};
use meshplan_core::Mesh;

/// A generated mesh with the natural kernel of its family bound.
pub struct Fixture {
    pub name: String,
    pub mesh: Mesh,
    pub kernel: KernelSpec,
}

pub fn fixture(family: Family, dims: &[usize]) -> Fixture {
    let mesh = generate(family, dims, 1).expect("fixture dims are valid");
    let kernel = family
        .default_kernel()
        .bind(&mesh)
        .expect("generated data fits");
    let dims: Vec<String> = dims.iter().map(usize::to_string).collect();
    Fixture {
        name: format!("{}-{}", family.name(), dims.join("x")),
        mesh,
        kernel,
    }
}

/// One mid-sized mesh per family.
pub fn fixtures() -> Vec<Fixture> {
    vec![
        fixture(Family::Quad2d, &[64, 64]),
        fixture(Family::Tri2d, &[48, 48]),
        fixture(Family::HexCells, &[16, 16, 16]),
        fixture(Family::HexFaces, &[12, 12, 12]),
    ]
}

pub fn plan(f: &Fixture, cfg: &PlanConfig) -> Plan {
    build_plan(&f.mesh, &f.kernel, cfg, &HardwareDescriptor::p100()).expect("fixture plans build")
}
