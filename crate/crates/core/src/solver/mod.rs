//! Continuous-phase backends behind a common trait.

mod box0d;
mod incompressible;
pub mod poisson;

use serde::{Deserialize, Serialize};

pub use box0d::Box0d;
pub use incompressible::Incompressible3d;

use crate::error::{SolverError, PhysicsError};
use crate::fields::{EulerianState, SourceFields};
use crate::geom::Vec3;
use crate::mesh::StructuredMesh;
use crate::physics::{saturation_vapor_density, FluidProperties};
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Buoyancy {
    pub g: Vec3,
    pub t_ref: f64,
    pub beta: f64,
}

/// Condition on one of the six domain faces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FaceBoundary {
    /// No-slip wall moving tangentially with `velocity`. `temperature` absent
    /// means adiabatic; `saturated` pins the wall vapour density to its
    /// saturation value at the wall temperature.
    Wall {
        #[serde(default)]
        velocity: Vec3,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        temperature: Option<f64>,
        #[serde(default)]
        saturated: bool,
    },
    Periodic,
}

impl FaceBoundary {
    pub fn adiabatic_wall() -> Self {
        FaceBoundary::Wall {
            velocity: Vec3::ZERO,
            temperature: None,
            saturated: false,
        }
    }

    pub fn saturated_wall(t: f64) -> Self {
        FaceBoundary::Wall {
            velocity: Vec3::ZERO,
            temperature: Some(t),
            saturated: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub x_lo: FaceBoundary,
    pub x_hi: FaceBoundary,
    pub y_lo: FaceBoundary,
    pub y_hi: FaceBoundary,
    pub z_lo: FaceBoundary,
    pub z_hi: FaceBoundary,
}

impl BoundarySpec {
    pub fn uniform(b: FaceBoundary) -> Self {
        BoundarySpec {
            x_lo: b,
            x_hi: b,
            y_lo: b,
            y_hi: b,
            z_lo: b,
            z_hi: b,
        }
    }

    /// Faces ordered x_lo, x_hi, y_lo, y_hi, z_lo, z_hi.
    pub fn faces(&self) -> [FaceBoundary; 6] {
        [self.x_lo, self.x_hi, self.y_lo, self.y_hi, self.z_lo, self.z_hi]
    }
}

fn default_advection() -> String {
    "upwind".into()
}
fn default_tol() -> f64 {
    1e-8
}
fn default_iters() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub backend: String,
    #[serde(default = "default_advection")]
    pub momentum_advection: String,
    /// Thermal diffusivity [m^2/s].
    pub alpha_f: f64,
    /// Vapour diffusivity [m^2/s].
    pub d_f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buoyancy: Option<Buoyancy>,
    pub initial_temperature: f64,
    /// Initial vapour density as a fraction of saturation.
    pub initial_saturation: f64,
    #[serde(default)]
    pub initial_velocity: Vec3,
    #[serde(default = "default_tol")]
    pub poisson_tolerance: f64,
    #[serde(default = "default_iters")]
    pub poisson_max_iterations: usize,
    pub boundary: BoundarySpec,
}

impl SolverConfig {
    pub fn initial_state(&self, mesh: &StructuredMesh) -> Result<EulerianState, PhysicsError> {
        let t = self.initial_temperature;
        let rv = self.initial_saturation * saturation_vapor_density(t)?;
        Ok(EulerianState::uniform(mesh.cell_box(), self.initial_velocity, t, rv))
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha_f >= 0.0 && self.d_f >= 0.0) {
            return Err("diffusivities must be >= 0".into());
        }
        if !(self.initial_saturation >= 0.0) {
            return Err("initial_saturation must be >= 0".into());
        }
        let f = self.boundary.faces();
        for a in 0..3 {
            let lo = matches!(f[2 * a], FaceBoundary::Periodic);
            let hi = matches!(f[2 * a + 1], FaceBoundary::Periodic);
            if lo != hi {
                return Err(format!("axis {a}: periodic must be set on both faces"));
            }
        }
        for (side, b) in f.iter().enumerate() {
            if let FaceBoundary::Wall {
                velocity,
                temperature,
                saturated,
            } = b
            {
                if velocity[side / 2] != 0.0 {
                    return Err(format!("face {side}: wall velocity must be tangential"));
                }
                if *saturated && temperature.is_none() {
                    return Err(format!("face {side}: a saturated wall needs a temperature"));
                }
            }
        }
        Ok(())
    }
}

/// Diagnostics of one fluid step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepReport {
    pub poisson_iterations: usize,
    pub poisson_residual: f64,
    pub max_divergence: f64,
    /// Vapour mass that entered through walls during the step [kg].
    pub wall_vapor_flux: f64,
}

pub trait EulerianBackend: Send {
    fn name(&self) -> &'static str;

    fn initialize(
        &mut self,
        mesh: &StructuredMesh,
        cfg: &SolverConfig,
        props: &FluidProperties,
    ) -> Result<(), SolverError>;

    fn state(&self) -> &EulerianState;

    /// One time step with `sources` as the Lagrangian forcing.
    fn step(&mut self, sources: &SourceFields, dt: f64) -> Result<StepReport, SolverError>;

    /// Adds `dt * sources` without advancing time.
    fn incorporate(&mut self, sources: &SourceFields, dt: f64) -> Result<(), SolverError>;
}

/// Face value for a flux with advecting velocity `adv` between a lower and
/// an upper neighbour.
pub trait AdvectionScheme: Send + Sync {
    fn name(&self) -> &'static str;
    fn face_value(&self, adv: f64, lower: f64, upper: f64) -> f64;
}

pub struct Upwind;
pub struct Central;

impl AdvectionScheme for Upwind {
    fn name(&self) -> &'static str {
        "upwind"
    }
    #[inline]
    fn face_value(&self, adv: f64, lower: f64, upper: f64) -> f64 {
        if adv >= 0.0 {
            lower
        } else {
            upper
        }
    }
}

impl AdvectionScheme for Central {
    fn name(&self) -> &'static str {
        "central"
    }
    #[inline]
    fn face_value(&self, _adv: f64, lower: f64, upper: f64) -> f64 {
        0.5 * (lower + upper)
    }
}

pub fn advection_registry() -> Registry<Box<dyn AdvectionScheme>> {
    let mut r: Registry<Box<dyn AdvectionScheme>> = Registry::new("advection scheme");
    r.register("upwind", || Box::new(Upwind));
    r.register("central", || Box::new(Central));
    r
}

pub fn backend_registry() -> Registry<Box<dyn EulerianBackend>> {
    let mut r: Registry<Box<dyn EulerianBackend>> = Registry::new("eulerian backend");
    r.register("box0d", || Box::new(Box0d::default()));
    r.register("incompressible3d", || Box::new(Incompressible3d::default()));
    r
}

/// Scalar summaries of a fluid state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FluidStats {
    pub t_min: f64,
    pub t_max: f64,
    /// Volume integral of T [K m^3].
    pub t_integral: f64,
    pub rho_v_min: f64,
    pub rho_v_max: f64,
    /// Total vapour mass [kg].
    pub vapor_mass: f64,
    /// rho_f * sum u V [kg m/s].
    pub momentum: Vec3,
}

pub fn fluid_stats(state: &EulerianState, mesh: &StructuredMesh, props: &FluidProperties) -> FluidStats {
    let v = mesh.cell_volume();
    let mut s = FluidStats {
        t_min: f64::INFINITY,
        t_max: f64::NEG_INFINITY,
        rho_v_min: f64::INFINITY,
        rho_v_max: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut t_sum = 0.0;
    let mut rv_sum = 0.0;
    let mut u_sum = Vec3::ZERO;
    for i in 0..state.len() {
        let t = state.temperature[i];
        let rv = state.vapor_density[i];
        s.t_min = s.t_min.min(t);
        s.t_max = s.t_max.max(t);
        s.rho_v_min = s.rho_v_min.min(rv);
        s.rho_v_max = s.rho_v_max.max(rv);
        t_sum += t;
        rv_sum += rv;
        u_sum += state.velocity[i];
    }
    s.t_integral = t_sum * v;
    s.vapor_mass = rv_sum * v;
    s.momentum = u_sum * (props.rho_f * v);
    s
}
