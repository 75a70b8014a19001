//! Run configuration: a TOML tree with dot-path overrides, resolved into a
//! [`CoupledSetup`].

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::estimator::extrapolator_registry;
use crate::geom::{BoundingBox, Vec3};
use crate::lagrangian::TrackingParams;
use crate::mesh::StructuredMesh;
use crate::partitioning::{initialize_chunks, DiameterSpec, InitSpec};
use crate::physics::{saturation_vapor_density, FluidProperties};
use crate::runtime::transport::{scheduler_registry, TransportOptions};
use crate::runtime::{CoupledSetup, CouplingMode, RunOptions, SnapshotSpec};
use crate::solver::{backend_registry, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub origin: Vec3,
    /// Domain size [m]; the cell size is extent / dims.
    pub extent: Vec3,
    pub dims: [usize; 3],
    pub partition_grid: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    pub n_chunks: usize,
    pub chunks_per_worker: usize,
    /// Droplet surface saturation.
    #[serde(default = "one")]
    pub s_vp: f64,
    pub init: InitSpec,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuntimeSpec {
    pub scheduler: String,
    /// Seconds without progress before a run is declared deadlocked.
    pub timeout_s: f64,
    /// Random extra delay per message (deterministic scheduler).
    pub max_delay_ticks: u64,
    pub trace: bool,
}

impl Default for RuntimeSpec {
    fn default() -> Self {
        RuntimeSpec {
            scheduler: "live".into(),
            timeout_s: 60.0,
            max_delay_ticks: 0,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Particle snapshot cadence in steps; 0 writes only the final step.
    pub snapshot_every: u64,
    /// Every n-th parcel per chunk goes into snapshots; 0 disables them.
    pub snapshot_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: String,
    #[serde(default)]
    pub seed: u64,
    pub n_steps: u64,
    pub dt: f64,
    pub n_substeps: u32,
    /// `synchronous`, or the extrapolator used by asynchronous coupling.
    pub coupling: String,
    pub mesh: MeshSpec,
    pub particles: ParticleSpec,
    pub fluid: FluidProperties,
    pub solver: SolverConfig,
    #[serde(default)]
    pub runtime: RuntimeSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

/// Coupling names accepted besides the extrapolator names.
pub const SYNCHRONOUS: &str = "synchronous";

pub fn coupling_names() -> Vec<String> {
    let mut v = vec![SYNCHRONOUS.to_string()];
    v.extend(extrapolator_registry().names().into_iter().map(String::from));
    v
}

/// Splits a coupling name into the runtime mode and the extrapolator.
pub fn parse_coupling(name: &str) -> Result<(CouplingMode, String), ConfigError> {
    if name == SYNCHRONOUS || name == "sync" {
        return Ok((CouplingMode::Synchronous, "constant".into()));
    }
    if extrapolator_registry().contains(name) {
        return Ok((CouplingMode::Asynchronous, name.into()));
    }
    Err(ConfigError::UnknownStrategy {
        kind: "coupling",
        name: name.into(),
        known: coupling_names().join(", "),
    })
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config types serialize to TOML")
    }

    /// Applies `key.path=value` overrides. Values are read as TOML and fall
    /// back to plain strings.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, ConfigError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut tree = toml::Value::try_from(self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| invalid(o, "override must look like key.path=value"))?;
            set_path(&mut tree, path.trim(), parse_value(raw.trim()))?;
        }
        RunConfig::deserialize(tree).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn mesh(&self) -> Result<StructuredMesh, ConfigError> {
        let m = &self.mesh;
        let dims = Vec3::new(m.dims[0] as f64, m.dims[1] as f64, m.dims[2] as f64);
        let cell = Vec3::new(m.extent[0] / dims[0], m.extent[1] / dims[1], m.extent[2] / dims[2]);
        StructuredMesh::new(m.origin, cell, m.dims, m.partition_grid).map_err(|e| invalid("mesh", e.to_string()))
    }

    pub fn n_workers(&self) -> usize {
        self.particles.n_chunks.div_ceil(self.particles.chunks_per_worker.max(1))
    }

    /// Checks every section and names the first offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        // TOML integers are signed 64-bit, and configs must round-trip
        if i64::try_from(self.seed).is_err() {
            return Err(invalid("seed", "must be <= 9223372036854775807"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "must be > 0"));
        }
        if self.n_substeps < 1 {
            return Err(invalid("n_substeps", "must be >= 1"));
        }
        parse_coupling(&self.coupling)?;
        let mesh = self.mesh()?;
        self.fluid.validate().map_err(|r| invalid("fluid", r))?;
        backend_registry().create(&self.solver.backend)?;
        self.solver.validate().map_err(|r| invalid("solver", r))?;
        if !(self.solver.poisson_tolerance > 0.0) {
            return Err(invalid("solver.poisson_tolerance", "must be > 0"));
        }
        saturation_vapor_density(self.solver.initial_temperature)
            .map_err(|e| invalid("solver.initial_temperature", e.to_string()))?;
        let p = &self.particles;
        if p.n_chunks < 1 {
            return Err(invalid("particles.n_chunks", "must be >= 1"));
        }
        if p.chunks_per_worker < 1 {
            return Err(invalid("particles.chunks_per_worker", "must be >= 1"));
        }
        if self.n_workers() > mesh.n_partitions() {
            return Err(invalid(
                "particles.chunks_per_worker",
                format!(
                    "{} workers need as many Eulerian ranks, the partition grid has {}",
                    self.n_workers(),
                    mesh.n_partitions()
                ),
            ));
        }
        if !(p.s_vp > 0.0) {
            return Err(invalid("particles.s_vp", "must be > 0"));
        }
        let init = &p.init;
        if !(init.multiplicity >= 1.0) {
            return Err(invalid("particles.init.multiplicity", "must be >= 1"));
        }
        saturation_vapor_density(init.temperature).map_err(|e| invalid("particles.init.temperature", e.to_string()))?;
        let domain = mesh.domain_box();
        let r = &init.region;
        if !(domain.contains(r.lo) && domain.contains(r.hi)) || (0..3).any(|a| r.lo[a] > r.hi[a]) {
            return Err(invalid("particles.init.region", "must be a box inside the domain"));
        }
        let ok = match init.diameter {
            DiameterSpec::Constant { value } => value > 0.0,
            DiameterSpec::Uniform { min, max } => min > 0.0 && max >= min,
        };
        if !ok {
            return Err(invalid("particles.init.diameter", "diameters must be > 0"));
        }
        if !(init.bbox_margin_cells >= 0.0) {
            return Err(invalid("particles.init.bbox_margin_cells", "must be >= 0"));
        }
        scheduler_registry().create(&self.runtime.scheduler)?;
        if !(self.runtime.timeout_s > 0.0) {
            return Err(invalid("runtime.timeout_s", "must be > 0"));
        }
        Ok(())
    }

    /// Validates and builds the coupled problem with Hilbert-ordered chunks.
    pub fn build(&self) -> Result<CoupledSetup, ConfigError> {
        self.validate()?;
        let mesh = self.mesh()?;
        let (mode, extrapolator) = parse_coupling(&self.coupling)?;
        let p = &self.particles;
        let (chunks, placements) = initialize_chunks(&p.init, p.n_chunks, p.chunks_per_worker, &mesh, self.seed);
        let n_workers = self.n_workers();
        Ok(CoupledSetup {
            tracking: TrackingParams {
                dt: self.dt,
                n_substeps: self.n_substeps,
                s_vp: p.s_vp,
                bbox_margin: p.init.margin(&mesh),
            },
            host_map: CoupledSetup::spread_hosts(n_workers, mesh.n_partitions()),
            mesh,
            props: self.fluid,
            solver: self.solver.clone(),
            n_steps: self.n_steps,
            mode,
            extrapolator,
            chunks,
            placements,
            snapshot: SnapshotSpec {
                every: self.output.snapshot_every,
                stride: self.output.snapshot_stride,
            },
        })
    }

    pub fn run_options(&self) -> RunOptions {
        let rt = &self.runtime;
        RunOptions {
            scheduler: rt.scheduler.clone(),
            transport: TransportOptions {
                seed: self.seed,
                max_delay_ticks: rt.max_delay_ticks,
                timeout: Duration::from_secs_f64(rt.timeout_s),
                trace: rt.trace,
            },
            zero_timings: rt.scheduler == "deterministic",
        }
    }

    /// Parcel region covering the whole domain shrunk by `inset` [m].
    pub fn inset_region(&self, inset: f64) -> BoundingBox {
        let lo = self.mesh.origin + Vec3::splat(inset);
        let hi = self.mesh.origin + self.mesh.extent - Vec3::splat(inset);
        BoundingBox::new(lo, hi)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    // a value is parsed as the right-hand side of a one-key document
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(tree: &mut toml::Value, path: &str, value: toml::Value) -> Result<(), ConfigError> {
    let mut node = tree;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let here = parts[..=i].join(".");
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), value);
                    return Ok(());
                }
                t.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| invalid(&here, "expected an array index"))?;
                let slot = a.get_mut(idx).ok_or_else(|| invalid(&here, "array index out of range"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(invalid(&here, "is not a table")),
        };
    }
    Err(invalid(path, "empty key"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::builtin;

    #[test]
    fn overrides_follow_dot_paths() {
        let c = builtin("mini-chamber").unwrap();
        let o = c
            .with_overrides(&[
                "n_steps=3".into(),
                "mesh.dims=[16,16,16]".into(),
                "particles.init.count=100".into(),
                "coupling=zero".into(),
                "mesh.extent.2=3.0".into(),
            ])
            .unwrap();
        assert_eq!(o.n_steps, 3);
        assert_eq!(o.mesh.dims, [16, 16, 16]);
        assert_eq!(o.mesh.extent[2], 3.0);
        assert_eq!(o.particles.init.count, 100);
        assert_eq!(o.coupling, "zero");
    }

    #[test]
    fn errors_name_the_key() {
        let c = builtin("mini-chamber").unwrap();
        let e = c.with_overrides(&["n_stepz=3".into()]).unwrap_err();
        assert!(e.to_string().contains("n_stepz"), "{e}");
        let e = c.with_overrides(&["n_substeps=0".into()]).unwrap().validate().unwrap_err();
        assert!(e.to_string().contains("n_substeps"), "{e}");
        let e = c.with_overrides(&["coupling=quadratic".into()]).unwrap().validate().unwrap_err();
        assert!(e.to_string().contains("quadratic"), "{e}");
        let e = c
            .with_overrides(&["particles.chunks_per_worker=1".into()])
            .unwrap()
            .validate()
            .unwrap_err();
        assert!(e.to_string().contains("particles.chunks_per_worker"), "{e}");
        assert!(matches!(
            c.with_overrides(&["dt".into()]),
            Err(ConfigError::Invalid { .. })
        ));
    }

    #[test]
    fn toml_round_trip() {
        for name in crate::cases::case_names() {
            let c = builtin(&name).unwrap();
            let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
            assert_eq!(back, c, "{name}");
        }
    }
}
