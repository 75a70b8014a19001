//! Asynchronous two-way Euler-Lagrange coupling engine.
//!
//! The fluid lives on a structured grid split into partitions; droplets live
//! in chunks whose bounding boxes decide which partitions they need. The two
//! phases advance concurrently with at most one step of skew, and the fluid
//! uses extrapolated-and-corrected sources while the true ones are in flight.

pub mod cases;
pub mod config;
pub mod error;
pub mod estimator;
pub mod fields;
pub mod geom;
pub mod lagrangian;
pub mod mesh;
pub mod partitioning;
pub mod output;
pub mod physics;
pub mod registry;
pub mod runtime;
pub mod solver;
pub mod validation;

pub use error::*;
pub use fields::{apply_sources, EulerianState, SourceFields, SourceTotals};
pub use geom::{BoundingBox, Vec3};
pub use mesh::{CellBox, EulerianPartition, StructuredMesh};
pub use physics::{FluidProperties, FluidSample};
