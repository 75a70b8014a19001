//! Shipped cases, selected by name.

use crate::config::{MeshSpec, OutputSpec, ParticleSpec, RunConfig, RuntimeSpec};
use crate::geom::{BoundingBox, Vec3};
use crate::partitioning::{DiameterSpec, InitSpec, PlacementKind};
use crate::physics::{particle_mass, stokes_time, FluidProperties};
use crate::registry::Registry;
use crate::solver::{BoundarySpec, Buoyancy, FaceBoundary, SolverConfig};

pub fn case_registry() -> Registry<RunConfig> {
    let mut r = Registry::new("case");
    r.register("analytical-momentum", analytical_momentum);
    r.register("mini-chamber", mini_chamber);
    r.register("overlap-bench", overlap_bench);
    r
}

pub fn case_names() -> Vec<String> {
    case_registry().names().into_iter().map(String::from).collect()
}

pub fn builtin(name: &str) -> Result<RunConfig, crate::error::ConfigError> {
    case_registry().create(name)
}

/// Mass ratio of the particle phase to the fluid in the analytical case.
pub const ANALYTICAL_MASS_RATIO: f64 = 0.25;
/// Time step of the analytical case in units of the Stokes time.
pub const ANALYTICAL_DT_OVER_TAU: f64 = 0.1;

/// One parcel moving at 1 m/s through a single quiescent cell of a very
/// viscous fluid, so drag stays in the Stokes regime.
fn analytical_momentum() -> RunConfig {
    let fluid = FluidProperties {
        nu_f: 1.0,
        ..FluidProperties::air()
    };
    let side = 0.01;
    let d = 1e-5;
    let m_f = fluid.rho_f * side * side * side;
    let multiplicity = ANALYTICAL_MASS_RATIO * m_f / particle_mass(d, fluid.rho_p);
    let centre = Vec3::splat(side / 2.0);
    RunConfig {
        case: "analytical-momentum".into(),
        seed: 0,
        n_steps: 100,
        dt: ANALYTICAL_DT_OVER_TAU * stokes_time(d, &fluid),
        n_substeps: 10,
        coupling: "synchronous".into(),
        mesh: MeshSpec {
            origin: Vec3::ZERO,
            extent: Vec3::splat(side),
            dims: [1, 1, 1],
            partition_grid: [1, 1, 1],
        },
        particles: ParticleSpec {
            n_chunks: 1,
            chunks_per_worker: 1,
            s_vp: 1.0,
            init: InitSpec {
                count: 1,
                region: BoundingBox::new(centre, centre),
                placement: PlacementKind::Uniform,
                diameter: DiameterSpec::Constant { value: d },
                multiplicity,
                temperature: 293.0,
                velocity: Vec3::new(1.0, 0.0, 0.0),
                bbox_margin_cells: 1.0,
            },
        },
        fluid,
        solver: SolverConfig {
            backend: "box0d".into(),
            momentum_advection: "upwind".into(),
            alpha_f: 0.0,
            d_f: 0.0,
            buoyancy: None,
            initial_temperature: 293.0,
            initial_saturation: 1.0,
            initial_velocity: Vec3::ZERO,
            poisson_tolerance: 1e-8,
            poisson_max_iterations: 500,
            boundary: BoundarySpec::uniform(FaceBoundary::adiabatic_wall()),
        },
        runtime: RuntimeSpec::default(),
        output: OutputSpec::default(),
    }
}

fn chamber_solver() -> SolverConfig {
    let warm = FaceBoundary::saturated_wall(293.0);
    let cold = FaceBoundary::saturated_wall(283.0);
    SolverConfig {
        backend: "incompressible3d".into(),
        momentum_advection: "upwind".into(),
        alpha_f: 2.1e-5,
        d_f: 2.5e-5,
        buoyancy: Some(Buoyancy {
            g: Vec3::new(0.0, 0.0, -9.81),
            t_ref: 288.0,
            beta: 1.0 / 288.0,
        }),
        initial_temperature: 288.0,
        initial_saturation: 1.0,
        initial_velocity: Vec3::ZERO,
        poisson_tolerance: 1e-8,
        poisson_max_iterations: 500,
        boundary: BoundarySpec {
            x_lo: warm,
            x_hi: cold,
            y_lo: warm,
            y_hi: cold,
            z_lo: warm,
            z_hi: cold,
        },
    }
}

/// The 3 m x 3 m x 9 m convection chamber on a coarse grid: warm floor and
/// two warm side walls, cold ceiling and two cold side walls, all saturated.
fn mini_chamber() -> RunConfig {
    let mut c = RunConfig {
        case: "mini-chamber".into(),
        seed: 0,
        n_steps: 100,
        dt: 0.005,
        n_substeps: 10,
        coupling: "constant".into(),
        mesh: MeshSpec {
            origin: Vec3::ZERO,
            extent: Vec3::new(3.0, 3.0, 9.0),
            dims: [16, 16, 48],
            partition_grid: [2, 2, 1],
        },
        particles: ParticleSpec {
            n_chunks: 16,
            chunks_per_worker: 4,
            s_vp: 1.0,
            init: InitSpec {
                count: 10_000,
                region: BoundingBox::new(Vec3::ZERO, Vec3::ZERO),
                placement: PlacementKind::Uniform,
                diameter: DiameterSpec::Uniform { min: 8e-6, max: 12e-6 },
                multiplicity: 50.0,
                temperature: 288.0,
                velocity: Vec3::new(0.0, 0.0, -0.2),
                bbox_margin_cells: 1.0,
            },
        },
        fluid: FluidProperties::air(),
        solver: chamber_solver(),
        runtime: RuntimeSpec::default(),
        output: OutputSpec {
            dir: None,
            snapshot_every: 0,
            snapshot_stride: 10,
        },
    };
    c.particles.init.region = c.inset_region(0.05);
    c
}

/// A chamber sized so that the fluid step and the particle step cost about
/// the same on one core each.
fn overlap_bench() -> RunConfig {
    let mut c = mini_chamber();
    c.case = "overlap-bench".into();
    c.n_steps = 20;
    c.mesh.extent = Vec3::new(3.0, 3.0, 6.0);
    c.mesh.dims = [24, 24, 48];
    c.particles.init.count = 40_000;
    c.particles.init.region = c.inset_region(0.05);
    c.output.snapshot_stride = 0;
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_case_builds() {
        for name in case_names() {
            let c = builtin(&name).unwrap();
            assert_eq!(c.case, name);
            let s = c.build().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.chunks.iter().map(|c| c.count()).sum::<usize>(), c.particles.init.count);
        }
        assert!(builtin("nope").is_err());
    }

    #[test]
    fn analytical_ratios() {
        let c = builtin("analytical-momentum").unwrap();
        let s = c.build().unwrap();
        let m_p: f64 = s.chunks[0].multiplicity[0] * particle_mass(s.chunks[0].diameter[0], c.fluid.rho_p);
        let m_f = c.fluid.rho_f * s.mesh.cell_volume();
        assert!((m_p / m_f - ANALYTICAL_MASS_RATIO).abs() < 1e-12);
        assert!((c.dt / stokes_time(1e-5, &c.fluid) - ANALYTICAL_DT_OVER_TAU).abs() < 1e-12);
    }
}
