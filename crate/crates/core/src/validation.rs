//! Two-body momentum relaxation: closed form, error metric and the
//! extrapolator comparison run through the coupled runtime.

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::ValidationError;
use crate::lagrangian::chunk_momentum;
use crate::physics::{particle_mass, stokes_time};
use crate::runtime::{run_coupled, CoupledSetup, RunArtifacts, RunOptions};

/// A particle phase relaxing against a finite fluid mass under Stokes drag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoPhaseMomentumCase {
    pub u_p0: f64,
    pub u_f0: f64,
    pub m_p: f64,
    pub m_f: f64,
    pub tau_p: f64,
    pub dt: f64,
    pub n_steps: u64,
}

impl TwoPhaseMomentumCase {
    /// Reads the case off a single-cell setup whose parcels share one
    /// diameter and move along x.
    pub fn from_setup(setup: &CoupledSetup) -> Result<Self, ValidationError> {
        let bad = |s: &str| ValidationError::NotAnalytical(s.into());
        if setup.mesh.n_cells() != 1 {
            return Err(bad("the fluid must be a single cell"));
        }
        let props = &setup.props;
        let mut m_p = 0.0;
        let mut d = None;
        for c in &setup.chunks {
            for i in 0..c.count() {
                m_p += c.multiplicity[i] * particle_mass(c.diameter[i], props.rho_p);
                match d {
                    None => d = Some(c.diameter[i]),
                    Some(d0) if d0 != c.diameter[i] => return Err(bad("parcel diameters differ")),
                    _ => {}
                }
            }
        }
        let d = d.ok_or_else(|| bad("no parcels"))?;
        let p: f64 = setup.chunks.iter().map(|c| chunk_momentum(c, props)[0]).sum();
        Ok(TwoPhaseMomentumCase {
            u_p0: p / m_p,
            u_f0: setup.solver.initial_velocity[0],
            m_p,
            m_f: props.rho_f * setup.mesh.cell_volume(),
            tau_p: stokes_time(d, props),
            dt: setup.tracking.dt,
            n_steps: setup.n_steps,
        })
    }

    pub fn total_momentum(&self) -> f64 {
        self.m_p * self.u_p0 + self.m_f * self.u_f0
    }
}

/// Exact (u_p, u_f) at time `t`: the slip decays with rate (1 + m_p/m_f)/tau_p
/// while the total momentum stays fixed.
pub fn analytical_solution(case: &TwoPhaseMomentumCase, t: f64) -> (f64, f64) {
    let w = (case.u_p0 - case.u_f0) * (-t * (1.0 + case.m_p / case.m_f) / case.tau_p).exp();
    let u_f = (case.total_momentum() - case.m_p * w) / (case.m_p + case.m_f);
    (u_f + w, u_f)
}

pub fn relative_error(p_num: f64, p_exact: f64, p_exact_total: f64) -> Result<f64, ValidationError> {
    if p_exact_total == 0.0 || !p_exact_total.is_finite() {
        return Err(ValidationError::ZeroDenominator(p_exact_total));
    }
    Ok((p_num - p_exact) / p_exact_total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRow {
    pub step: u64,
    pub time_s: f64,
    pub e_rel_euler: f64,
    pub e_rel_lagrange: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySeries {
    pub mode: String,
    pub rows: Vec<ErrorRow>,
}

/// Leading fraction of the run counted as the early transient.
pub const EARLY_FRACTION: f64 = 0.2;
/// Start of the tail window as a fraction of the run.
pub const TAIL_FROM: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesMetrics {
    pub max_euler: f64,
    pub max_lagrange: f64,
    pub early_peak_euler: f64,
    pub tail_peak_euler: f64,
    /// Share of consecutive step pairs in the first half whose Eulerian
    /// error changes sign.
    pub sign_change_fraction: f64,
}

impl StudySeries {
    pub fn metrics(&self) -> SeriesMetrics {
        let n = self.rows.len();
        let peak = |rows: &[ErrorRow]| rows.iter().map(|r| r.e_rel_euler.abs()).fold(0.0, f64::max);
        let early = ((n as f64 * EARLY_FRACTION).ceil() as usize).clamp(1.min(n), n);
        let tail = ((n as f64 * TAIL_FROM) as usize).min(n);
        let half = &self.rows[..n / 2];
        let pairs = half.len().saturating_sub(1);
        let changes = half
            .windows(2)
            .filter(|w| w[0].e_rel_euler * w[1].e_rel_euler < 0.0)
            .count();
        SeriesMetrics {
            max_euler: peak(&self.rows),
            max_lagrange: self.rows.iter().map(|r| r.e_rel_lagrange.abs()).fold(0.0, f64::max),
            early_peak_euler: peak(&self.rows[..early]),
            tail_peak_euler: peak(&self.rows[tail..]),
            sign_change_fraction: if pairs == 0 { 0.0 } else { changes as f64 / pairs as f64 },
        }
    }
}

/// Relative momentum errors of both phases after every step.
pub fn error_series(case: &TwoPhaseMomentumCase, art: &RunArtifacts) -> Result<Vec<ErrorRow>, ValidationError> {
    let total = case.total_momentum();
    art.records
        .iter()
        .map(|r| {
            let (up, uf) = analytical_solution(case, r.time);
            Ok(ErrorRow {
                step: r.step,
                time_s: r.time,
                e_rel_euler: relative_error(r.fluid.momentum[0], case.m_f * uf, total)?,
                e_rel_lagrange: relative_error(r.particle_momentum[0], case.m_p * up, total)?,
            })
        })
        .collect()
}

/// Runs the case once per coupling mode. Asynchronous modes receive every
/// true source one step late.
pub fn run_extrapolator_study(
    cfg: &RunConfig,
    modes: &[String],
    opts: &RunOptions,
) -> Result<Vec<StudySeries>, ValidationError> {
    let mut out = Vec::with_capacity(modes.len());
    for mode in modes {
        let mut c = cfg.clone();
        c.coupling = mode.clone();
        let setup = c.build()?;
        let case = TwoPhaseMomentumCase::from_setup(&setup)?;
        let art = run_coupled(&setup, opts)?;
        out.push(StudySeries {
            mode: mode.clone(),
            rows: error_series(&case, &art)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub dt: f64,
    pub max_euler: f64,
    pub max_lagrange: f64,
}

/// Repeats a run over the same physical time with dt halved `halvings`
/// times.
pub fn dt_sweep(cfg: &RunConfig, halvings: u32, opts: &RunOptions) -> Result<Vec<ConvergencePoint>, ValidationError> {
    let mut out = Vec::new();
    for k in 0..=halvings {
        let mut c = cfg.clone();
        c.dt = cfg.dt / f64::from(1u32 << k);
        c.n_steps = cfg.n_steps << k;
        let s = &run_extrapolator_study(&c, &[c.coupling.clone()], opts)?[0];
        let m = s.metrics();
        out.push(ConvergencePoint {
            dt: c.dt,
            max_euler: m.max_euler,
            max_lagrange: m.max_lagrange,
        });
    }
    Ok(out)
}

/// log2 of successive error ratios.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
