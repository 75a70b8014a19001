//! CSV and JSON emission. Rows are serialized by the producer; a single
//! writer thread owns the files.

use std::path::{Path, PathBuf};
use std::thread::JoinHandle;

use crossbeam_channel::{unbounded, Sender};
use serde::Serialize;

use crate::error::OutputError;
use crate::estimator::LedgerRecord;
use crate::lagrangian::ParticleChunk;
use crate::runtime::worker::snapshot_rows;
use crate::runtime::{RunArtifacts, SnapshotRow};
use crate::solver::FluidStats;
use crate::validation::StudySeries;
use crate::Vec3;

fn io_err(path: &Path, e: impl std::fmt::Display) -> OutputError {
    OutputError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, OutputError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| OutputError::Serialize(e.to_string()))?;
    }
    w.into_inner().map_err(|e| OutputError::Serialize(e.to_string()))
}

/// Line-delimited JSON.
pub fn jsonl_bytes<T: Serialize>(items: &[T]) -> Result<Vec<u8>, OutputError> {
    let mut out = Vec::new();
    for i in items {
        serde_json::to_writer(&mut out, i).map_err(|e| OutputError::Serialize(e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}

enum Job {
    File(PathBuf, Vec<u8>),
}

/// Owns the output directory; files are handed over as finished byte
/// buffers and written in submission order.
pub struct OutputWriter {
    dir: PathBuf,
    tx: Option<Sender<Job>>,
    handle: Option<JoinHandle<Result<Vec<PathBuf>, OutputError>>>,
}

impl OutputWriter {
    pub fn new(dir: &Path) -> Result<Self, OutputError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let (tx, rx) = unbounded::<Job>();
        let handle = std::thread::spawn(move || {
            let mut written = Vec::new();
            let mut first_error = None;
            for Job::File(path, bytes) in rx {
                if first_error.is_some() {
                    continue;
                }
                match std::fs::write(&path, bytes) {
                    Ok(()) => written.push(path),
                    Err(e) => first_error = Some(io_err(&path, e)),
                }
            }
            match first_error {
                Some(e) => Err(e),
                None => Ok(written),
            }
        });
        Ok(OutputWriter {
            dir: dir.to_path_buf(),
            tx: Some(tx),
            handle: Some(handle),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn submit(&self, name: &str, bytes: Vec<u8>) {
        if let Some(tx) = &self.tx {
            // a send only fails once the writer is gone; finish() reports why
            let _ = tx.send(Job::File(self.dir.join(name), bytes));
        }
    }

    pub fn submit_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), OutputError> {
        self.submit(name, csv_bytes(rows)?);
        Ok(())
    }

    /// Waits for every submitted file; returns their paths in order.
    pub fn finish(mut self) -> Result<Vec<PathBuf>, OutputError> {
        self.tx.take();
        let h = self.handle.take().expect("finish runs once");
        h.join()
            .map_err(|_| OutputError::Invalid("output writer panicked".into()))?
    }
}

impl Drop for OutputWriter {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeseriesRow {
    pub step: u64,
    pub time_s: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub t_integral: f64,
    pub rho_v_min: f64,
    pub rho_v_max: f64,
    pub vapor_mass: f64,
    pub fluid_momentum_x: f64,
    pub fluid_momentum_y: f64,
    pub fluid_momentum_z: f64,
    pub particle_momentum_x: f64,
    pub particle_momentum_y: f64,
    pub particle_momentum_z: f64,
    pub droplet_water: f64,
    pub vapor_budget_residual: f64,
    pub momentum_drift_x: f64,
    pub momentum_drift_y: f64,
    pub momentum_drift_z: f64,
    pub wall_vapor_flux: f64,
    pub poisson_iterations: usize,
    pub max_divergence: f64,
    pub wall_hits: u64,
    pub mass_clamps: u64,
}

pub fn timeseries_rows(art: &RunArtifacts) -> Vec<TimeseriesRow> {
    art.records
        .iter()
        .map(|r| {
            let FluidStats {
                t_min,
                t_max,
                t_integral,
                rho_v_min,
                rho_v_max,
                vapor_mass,
                momentum,
            } = r.fluid;
            let Vec3([px, py, pz]) = r.particle_momentum;
            let Vec3([dx, dy, dz]) = r.momentum_drift;
            TimeseriesRow {
                step: r.step,
                time_s: r.time,
                t_min,
                t_max,
                t_integral,
                rho_v_min,
                rho_v_max,
                vapor_mass,
                fluid_momentum_x: momentum[0],
                fluid_momentum_y: momentum[1],
                fluid_momentum_z: momentum[2],
                particle_momentum_x: px,
                particle_momentum_y: py,
                particle_momentum_z: pz,
                droplet_water: r.particle_water,
                vapor_budget_residual: r.vapor_budget_residual,
                momentum_drift_x: dx,
                momentum_drift_y: dy,
                momentum_drift_z: dz,
                wall_vapor_flux: r.solver.wall_vapor_flux,
                poisson_iterations: r.solver.poisson_iterations,
                max_divergence: r.solver.max_divergence,
                wall_hits: r.tracking.wall_hits,
                mass_clamps: r.tracking.mass_clamps,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub step: u64,
    pub euler_compute_s: f64,
    pub lagrange_compute_s: f64,
    pub wall_s: f64,
    pub backlog_steps: usize,
    pub partners_count: usize,
}

pub fn timing_rows(art: &RunArtifacts) -> Vec<TimingRow> {
    art.records
        .iter()
        .map(|r| TimingRow {
            step: r.step,
            euler_compute_s: r.euler_compute_s,
            lagrange_compute_s: r.lagrange_compute_s,
            wall_s: r.wall_s,
            backlog_steps: r.backlog_steps,
            partners_count: r.partners,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    pub step: u64,
    pub rank: usize,
    pub true_momentum_x: f64,
    pub true_momentum_y: f64,
    pub true_momentum_z: f64,
    pub true_energy: f64,
    pub true_vapor: f64,
    pub estimated_momentum_x: f64,
    pub estimated_momentum_y: f64,
    pub estimated_momentum_z: f64,
    pub estimated_energy: f64,
    pub estimated_vapor: f64,
    pub max_cell_difference: f64,
    pub backlog_steps: usize,
}

fn ledger_row(step: u64, rank: usize, l: &LedgerRecord) -> LedgerRow {
    let t = &l.cumulative_true;
    let e = &l.cumulative_estimated;
    LedgerRow {
        step,
        rank,
        true_momentum_x: t.momentum[0],
        true_momentum_y: t.momentum[1],
        true_momentum_z: t.momentum[2],
        true_energy: t.energy,
        true_vapor: t.vapor,
        estimated_momentum_x: e.momentum[0],
        estimated_momentum_y: e.momentum[1],
        estimated_momentum_z: e.momentum[2],
        estimated_energy: e.energy,
        estimated_vapor: e.vapor,
        max_cell_difference: l.max_cell_difference,
        backlog_steps: l.backlog_steps,
    }
}

/// Cumulative per-rank ledger after every fluid input, plus one final row
/// per rank (step = n_steps) after the catch-up.
pub fn ledger_rows(art: &RunArtifacts) -> Vec<LedgerRow> {
    let mut rows = Vec::new();
    let n = art.records.len() as u64;
    for (rank, hist) in art.ledger_history.iter().enumerate() {
        for (step, l) in hist {
            rows.push(ledger_row(*step, rank, l));
        }
    }
    for (rank, l) in art.ledgers.iter().enumerate() {
        rows.push(ledger_row(n, rank, l));
    }
    rows.sort_by_key(|r| (r.step, r.rank));
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotCsvRow {
    pub step: u64,
    pub chunk_id: usize,
    pub index: usize,
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub diameter: f64,
    pub temperature: f64,
}

pub fn snapshot_csv_rows(rows: &[SnapshotRow]) -> Vec<SnapshotCsvRow> {
    rows.iter()
        .map(|r| SnapshotCsvRow {
            step: r.step,
            chunk_id: r.chunk_id,
            index: r.index,
            id: r.id,
            x: r.position[0],
            y: r.position[1],
            z: r.position[2],
            diameter: r.diameter,
            temperature: r.temperature,
        })
        .collect()
}

/// Writes every `stride`-th parcel of each chunk, ordered by chunk id and
/// in-chunk index.
pub fn snapshot_particles(chunks: &[ParticleChunk], path: &Path, stride: usize, step: u64) -> Result<usize, OutputError> {
    if stride == 0 {
        return Err(OutputError::Invalid("snapshot stride must be >= 1".into()));
    }
    let mut sorted: Vec<&ParticleChunk> = chunks.iter().collect();
    sorted.sort_by_key(|c| c.chunk_id);
    let rows: Vec<SnapshotRow> = sorted
        .into_iter()
        .flat_map(|c| snapshot_rows(step, std::slice::from_ref(c), stride))
        .collect();
    std::fs::write(path, csv_bytes(&snapshot_csv_rows(&rows))?).map_err(|e| io_err(path, e))?;
    Ok(rows.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub case: String,
    pub coupling: String,
    pub n_steps: u64,
    pub initial_fluid: FluidStats,
    pub final_fluid: FluidStats,
    pub initial_particle_momentum: Vec3,
    pub initial_droplet_water: f64,
    pub final_momentum_drift: Vec3,
    pub max_vapor_budget_residual: f64,
    pub max_skew: u64,
    pub skew_observations: u64,
    pub ledgers: Vec<LedgerRecord>,
}

pub fn run_summary(case: &str, coupling: &str, art: &RunArtifacts) -> RunSummary {
    RunSummary {
        case: case.into(),
        coupling: coupling.into(),
        n_steps: art.records.len() as u64,
        initial_fluid: art.initial_fluid,
        final_fluid: art.final_fluid,
        initial_particle_momentum: art.initial_particle_momentum,
        initial_droplet_water: art.initial_particle_water,
        final_momentum_drift: art.final_momentum_drift,
        max_vapor_budget_residual: art.max_vapor_residual(),
        max_skew: art.max_skew,
        skew_observations: art.skew_observations,
        ledgers: art.ledgers.clone(),
    }
}

/// Queues the standard file set of a coupled run.
pub fn submit_run(w: &OutputWriter, case: &str, coupling: &str, art: &RunArtifacts) -> Result<(), OutputError> {
    w.submit_csv("timeseries.csv", &timeseries_rows(art))?;
    w.submit_csv("timing.csv", &timing_rows(art))?;
    w.submit_csv("conservativity.csv", &ledger_rows(art))?;
    if !art.snapshots.is_empty() {
        w.submit_csv("snapshots.csv", &snapshot_csv_rows(&art.snapshots))?;
    }
    if !art.trace.is_empty() {
        w.submit("trace.jsonl", jsonl_bytes(&art.trace)?);
    }
    let summary = serde_json::to_vec_pretty(&run_summary(case, coupling, art))
        .map_err(|e| OutputError::Serialize(e.to_string()))?;
    w.submit("summary.json", summary);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ValidationCsvRow<'a> {
    step: u64,
    time_s: f64,
    mode: &'a str,
    e_rel_euler: f64,
    e_rel_lagrange: f64,
}

/// One `validation_<mode>.csv` per series plus `validation_plot.dat`, a
/// whitespace table with one column pair per mode.
pub fn submit_validation(w: &OutputWriter, series: &[StudySeries]) -> Result<(), OutputError> {
    for s in series {
        let rows: Vec<ValidationCsvRow> = s
            .rows
            .iter()
            .map(|r| ValidationCsvRow {
                step: r.step,
                time_s: r.time_s,
                mode: &s.mode,
                e_rel_euler: r.e_rel_euler,
                e_rel_lagrange: r.e_rel_lagrange,
            })
            .collect();
        w.submit_csv(&format!("validation_{}.csv", s.mode), &rows)?;
    }
    let mut plot = String::from("# step time_s");
    for s in series {
        plot.push_str(&format!(" euler_{0} lagrange_{0}", s.mode));
    }
    plot.push('\n');
    let n = series.iter().map(|s| s.rows.len()).max().unwrap_or(0);
    for i in 0..n {
        let first = series.iter().find_map(|s| s.rows.get(i)).expect("some series has row i");
        plot.push_str(&format!("{} {:e}", first.step, first.time_s));
        for s in series {
            match s.rows.get(i) {
                Some(r) => plot.push_str(&format!(" {:e} {:e}", r.e_rel_euler, r.e_rel_lagrange)),
                None => plot.push_str(" nan nan"),
            }
        }
        plot.push('\n');
    }
    w.submit("validation_plot.dat", plot.into_bytes());
    Ok(())
}
