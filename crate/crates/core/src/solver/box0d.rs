use crate::error::SolverError;
use crate::fields::{apply_sources, EulerianState, SourceFields};
use crate::mesh::StructuredMesh;
use crate::physics::FluidProperties;

use super::{EulerianBackend, SolverConfig, StepReport};

/// A single well-mixed cell: only the bulk budgets evolve.
#[derive(Default)]
pub struct Box0d {
    state: Option<EulerianState>,
    props: Option<FluidProperties>,
}

impl EulerianBackend for Box0d {
    fn name(&self) -> &'static str {
        "box0d"
    }

    fn initialize(
        &mut self,
        mesh: &StructuredMesh,
        cfg: &SolverConfig,
        props: &FluidProperties,
    ) -> Result<(), SolverError> {
        if mesh.n_cells() != 1 {
            return Err(SolverError::Config(format!(
                "box0d needs a single-cell mesh, got dims {:?}",
                mesh.dims
            )));
        }
        self.state = Some(cfg.initial_state(mesh)?);
        self.props = Some(*props);
        Ok(())
    }

    fn state(&self) -> &EulerianState {
        self.state.as_ref().expect("box0d used before initialize")
    }

    fn step(&mut self, sources: &SourceFields, dt: f64) -> Result<StepReport, SolverError> {
        self.incorporate(sources, dt)?;
        let state = self.state.as_mut().expect("initialized");
        state.step_index += 1;
        Ok(StepReport::default())
    }

    fn incorporate(&mut self, sources: &SourceFields, dt: f64) -> Result<(), SolverError> {
        let props = self.props.expect("box0d used before initialize");
        let state = self.state.as_mut().expect("box0d used before initialize");
        apply_sources(state, sources, dt, &props)?;
        Ok(())
    }
}
