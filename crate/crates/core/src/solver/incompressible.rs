//! Staggered (MAC) incompressible solver with Boussinesq buoyancy and two
//! transported scalars. Explicit Euler in time, projection onto discretely
//! divergence-free face velocities every step.

use crate::error::SolverError;
use crate::fields::{EulerianState, SourceFields};
use crate::geom::Vec3;
use crate::mesh::StructuredMesh;
use crate::physics::{saturation_vapor_density, FluidProperties};

use super::poisson::PoissonOperator;
use super::{advection_registry, AdvectionScheme, Buoyancy, EulerianBackend, FaceBoundary, SolverConfig, StepReport};

/// Absolute divergence target: the solve keeps iterating until
/// `dt * max|residual|` is below this (or the iteration cap).
const DIVERGENCE_FLOOR: f64 = 1e-8;

#[derive(Default)]
pub struct Incompressible3d {
    inner: Option<Box<Inner>>,
}

struct Inner {
    n: [usize; 3],
    h: [f64; 3],
    periodic: [bool; 3],
    /// Face-array dims per velocity component.
    fd: [[usize; 3]; 3],
    u: [Vec<f64>; 3],
    phi: Vec<f64>,
    t: Vec<f64>,
    rv: Vec<f64>,
    wall_u: [Vec3; 6],
    wall_t: [Option<f64>; 6],
    wall_rv: [Option<f64>; 6],
    nu: f64,
    alpha: f64,
    d_f: f64,
    buoyancy: Option<Buoyancy>,
    props: FluidProperties,
    scheme: Box<dyn AdvectionScheme>,
    op: PoissonOperator,
    tol: f64,
    max_iter: usize,
    state: EulerianState,
}

fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

impl Inner {
    #[inline]
    fn cell(&self, q: [usize; 3]) -> usize {
        q[0] + self.n[0] * (q[1] + self.n[1] * q[2])
    }

    #[inline]
    fn face(&self, c: usize, p: [usize; 3]) -> usize {
        let d = &self.fd[c];
        p[0] + d[0] * (p[1] + d[1] * p[2])
    }

    #[inline]
    fn fixed(&self, c: usize, p: [usize; 3]) -> bool {
        !self.periodic[c] && (p[c] == 0 || p[c] == self.n[c])
    }

    /// Cells below and above face `p` of component `c` (the face must not be
    /// a wall face).
    #[inline]
    fn face_cells(&self, c: usize, p: [usize; 3]) -> (usize, usize) {
        let mut lo = p;
        lo[c] = wrap(p[c] as isize - 1, self.n[c]);
        let mut hi = p;
        hi[c] = p[c] % self.n[c];
        (self.cell(lo), self.cell(hi))
    }

    fn faces(&self, c: usize) -> impl Iterator<Item = [usize; 3]> {
        let d = self.fd[c];
        (0..d[2]).flat_map(move |k| (0..d[1]).flat_map(move |j| (0..d[0]).map(move |i| [i, j, k])))
    }

    fn cells(&self) -> impl Iterator<Item = [usize; 3]> {
        let n = self.n;
        (0..n[2]).flat_map(move |k| (0..n[1]).flat_map(move |j| (0..n[0]).map(move |i| [i, j, k])))
    }

    /// Face index along `c` of the upper face of cell coordinate `q`.
    #[inline]
    fn upper_face_coord(&self, c: usize, qc: usize) -> usize {
        if self.periodic[c] {
            (qc + 1) % self.n[c]
        } else {
            qc + 1
        }
    }

    fn momentum_tendency(&self, c: usize) -> Vec<f64> {
        let uc = &self.u[c];
        let mut out = vec![0.0; uc.len()];
        for p in self.faces(c) {
            if self.fixed(c, p) {
                continue;
            }
            let f = self.face(c, p);
            let mut acc = 0.0;
            for d in 0..3 {
                let hd = self.h[d];
                if d == c {
                    // Control-volume faces sit at the centres of the two
                    // adjacent cells.
                    let flux_at_cell = |qc: usize| {
                        let mut a = p;
                        a[c] = qc;
                        let mut b = p;
                        b[c] = self.upper_face_coord(c, qc);
                        let ua = uc[self.face(c, a)];
                        let ub = uc[self.face(c, b)];
                        let adv = 0.5 * (ua + ub);
                        adv * self.scheme.face_value(adv, ua, ub)
                    };
                    let lo = wrap(p[c] as isize - 1, self.n[c]);
                    let hi = p[c] % self.n[c];
                    acc -= (flux_at_cell(hi) - flux_at_cell(lo)) / hd;
                    let mut a = p;
                    a[c] = wrap(p[c] as isize - 1, self.fd[c][c]);
                    let mut b = p;
                    b[c] = (p[c] + 1) % self.fd[c][c];
                    let lap = uc[self.face(c, a)] - 2.0 * uc[f] + uc[self.face(c, b)];
                    acc += self.nu * lap / (hd * hd);
                    continue;
                }
                // Edges between this face's cell row and its d-neighbours.
                let ud = &self.u[d];
                let cl = wrap(p[c] as isize - 1, self.n[c]);
                let ch = p[c] % self.n[c];
                let adv_at = |dface: usize| {
                    let mut a = p;
                    a[c] = cl;
                    a[d] = dface;
                    let mut b = p;
                    b[c] = ch;
                    b[d] = dface;
                    0.5 * (ud[self.face(d, a)] + ud[self.face(d, b)])
                };
                let here = uc[f];
                let up_wall = !self.periodic[d] && p[d] + 1 == self.n[d];
                let lo_wall = !self.periodic[d] && p[d] == 0;
                let (f_up, v_up) = if up_wall {
                    (0.0, 2.0 * self.wall_u[2 * d + 1][c] - here)
                } else {
                    let mut q = p;
                    q[d] = (p[d] + 1) % self.n[d];
                    let v = uc[self.face(c, q)];
                    let adv = adv_at(self.upper_face_coord(d, p[d]));
                    (adv * self.scheme.face_value(adv, here, v), v)
                };
                let (f_lo, v_lo) = if lo_wall {
                    (0.0, 2.0 * self.wall_u[2 * d][c] - here)
                } else {
                    let mut q = p;
                    q[d] = wrap(p[d] as isize - 1, self.n[d]);
                    let v = uc[self.face(c, q)];
                    let adv = adv_at(p[d]);
                    (adv * self.scheme.face_value(adv, v, here), v)
                };
                acc -= (f_up - f_lo) / hd;
                acc += self.nu * (v_up - 2.0 * here + v_lo) / (hd * hd);
            }
            out[f] = acc;
        }
        out
    }

    fn add_face_sources(&mut self, sources: &SourceFields, dt: f64) {
        let k = dt / self.props.rho_f;
        for c in 0..3 {
            for p in self.faces(c).collect::<Vec<_>>() {
                if self.fixed(c, p) {
                    continue;
                }
                let (l, h) = self.face_cells(c, p);
                let s = 0.5 * (sources.momentum[l][c] + sources.momentum[h][c]);
                let f = self.face(c, p);
                self.u[c][f] += k * s;
            }
        }
    }

    fn divergence(&self) -> Vec<f64> {
        let mut div = vec![0.0; self.phi.len()];
        for q in self.cells() {
            let mut s = 0.0;
            for c in 0..3 {
                let mut a = q;
                let mut b = q;
                b[c] = self.upper_face_coord(c, q[c]);
                a[c] = q[c];
                s += (self.u[c][self.face(c, b)] - self.u[c][self.face(c, a)]) / self.h[c];
            }
            div[self.cell(q)] = s;
        }
        div
    }

    fn project(&mut self, dt: f64, report: &mut StepReport) -> Result<(), SolverError> {
        let div = self.divergence();
        let b: Vec<f64> = div.iter().map(|d| -d / dt).collect();
        let out = self
            .op
            .solve(&b, &mut self.phi, self.tol, DIVERGENCE_FLOOR / dt, self.max_iter)?;
        report.poisson_iterations = out.iterations;
        report.poisson_residual = out.relative_residual;
        for c in 0..3 {
            for p in self.faces(c).collect::<Vec<_>>() {
                if self.fixed(c, p) {
                    continue;
                }
                let (l, h) = self.face_cells(c, p);
                let f = self.face(c, p);
                self.u[c][f] -= dt * (self.phi[h] - self.phi[l]) / self.h[c];
            }
        }
        report.max_divergence = self.divergence().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(())
    }

    /// Upwind advection plus diffusion of a cell scalar. Returns the mass
    /// that entered through Dirichlet walls.
    fn transport_scalar(&self, phi: &[f64], kappa: f64, walls: &[Option<f64>; 6], dt: f64) -> (Vec<f64>, f64) {
        let mut next = phi.to_vec();
        let vol = self.h[0] * self.h[1] * self.h[2];
        let mut wall_in = 0.0;
        for c in 0..3 {
            let hc = self.h[c];
            let area = vol / hc;
            for p in self.faces(c) {
                if self.fixed(c, p) {
                    let side = if p[c] == 0 { 2 * c } else { 2 * c + 1 };
                    if let Some(w) = walls[side] {
                        let mut q = p;
                        if p[c] == self.n[c] {
                            q[c] -= 1;
                        }
                        let i = self.cell(q);
                        let flux = kappa * (w - phi[i]) / (0.5 * hc);
                        next[i] += dt * flux / hc;
                        wall_in += dt * flux * area;
                    }
                    continue;
                }
                let (l, h) = self.face_cells(c, p);
                if l == h {
                    continue;
                }
                let a = self.u[c][self.face(c, p)];
                let up = if a >= 0.0 { phi[l] } else { phi[h] };
                let flux = a * up - kappa * (phi[h] - phi[l]) / hc;
                next[l] -= dt * flux / hc;
                next[h] += dt * flux / hc;
            }
        }
        (next, wall_in)
    }

    fn refresh_state(&mut self) {
        for q in self.cells().collect::<Vec<_>>() {
            let i = self.cell(q);
            let mut v = Vec3::ZERO;
            for c in 0..3 {
                let mut a = q;
                let mut b = q;
                a[c] = q[c];
                b[c] = self.upper_face_coord(c, q[c]);
                v[c] = 0.5 * (self.u[c][self.face(c, a)] + self.u[c][self.face(c, b)]);
            }
            self.state.velocity[i] = v;
        }
        self.state.pressure.copy_from_slice(&self.phi);
        self.state.temperature.copy_from_slice(&self.t);
        self.state.vapor_density.copy_from_slice(&self.rv);
    }

    fn check_sources(&self, sources: &SourceFields) -> Result<(), SolverError> {
        if sources.cells != self.state.cells || sources.len() != self.phi.len() {
            return Err(SolverError::Field(crate::error::FieldError::SizeMismatch(format!(
                "sources on {:?}, solver on {:?}",
                sources.cells, self.state.cells
            ))));
        }
        Ok(())
    }

    fn add_scalar_sources(&mut self, sources: &SourceFields, dt: f64) {
        let kt = dt / (self.props.rho_f * self.props.c_p_f);
        for i in 0..self.t.len() {
            self.t[i] += kt * sources.energy[i];
            self.rv[i] += dt * sources.vapor[i];
        }
    }
}

impl Incompressible3d {
    fn inner(&self) -> &Inner {
        self.inner.as_ref().expect("incompressible3d used before initialize")
    }

    fn inner_mut(&mut self) -> &mut Inner {
        self.inner.as_mut().expect("incompressible3d used before initialize")
    }

    /// Face-normal velocities of component `c` and their array dims.
    pub fn face_velocity(&self, c: usize) -> (&[f64], [usize; 3]) {
        let s = self.inner();
        (&s.u[c], s.fd[c])
    }
}

impl EulerianBackend for Incompressible3d {
    fn name(&self) -> &'static str {
        "incompressible3d"
    }

    fn initialize(
        &mut self,
        mesh: &StructuredMesh,
        cfg: &SolverConfig,
        props: &FluidProperties,
    ) -> Result<(), SolverError> {
        cfg.validate().map_err(SolverError::Config)?;
        let scheme = advection_registry()
            .create(&cfg.momentum_advection)
            .map_err(|e| SolverError::Config(e.to_string()))?;
        let n = mesh.dims;
        let h = mesh.cell_size.0;
        let faces = cfg.boundary.faces();
        let periodic = [0, 1, 2].map(|a| matches!(faces[2 * a], FaceBoundary::Periodic));
        let mut fd = [n; 3];
        for c in 0..3 {
            if !periodic[c] {
                fd[c][c] += 1;
            }
        }
        let mut wall_u = [Vec3::ZERO; 6];
        let mut wall_t = [None; 6];
        let mut wall_rv = [None; 6];
        for (side, f) in faces.iter().enumerate() {
            if let FaceBoundary::Wall {
                velocity,
                temperature,
                saturated,
            } = *f
            {
                wall_u[side] = velocity;
                wall_t[side] = temperature;
                if saturated {
                    let t = temperature.expect("validated");
                    wall_rv[side] = Some(saturation_vapor_density(t)?);
                }
            }
        }
        let state = cfg.initial_state(mesh)?;
        let mut u: [Vec<f64>; 3] = Default::default();
        for c in 0..3 {
            u[c] = vec![cfg.initial_velocity[c]; fd[c].iter().product()];
        }
        let mut inner = Inner {
            n,
            h,
            periodic,
            fd,
            u,
            phi: vec![0.0; mesh.n_cells()],
            t: state.temperature.clone(),
            rv: state.vapor_density.clone(),
            wall_u,
            wall_t,
            wall_rv,
            nu: props.nu_f,
            alpha: cfg.alpha_f,
            d_f: cfg.d_f,
            buoyancy: cfg.buoyancy,
            props: *props,
            scheme,
            op: PoissonOperator::new(n, h, periodic),
            tol: cfg.poisson_tolerance,
            max_iter: cfg.poisson_max_iterations,
            state,
        };
        for c in 0..3 {
            for p in inner.faces(c).collect::<Vec<_>>() {
                if inner.fixed(c, p) {
                    let f = inner.face(c, p);
                    inner.u[c][f] = 0.0;
                }
            }
        }
        let mut report = StepReport::default();
        inner.project(1.0, &mut report)?;
        inner.phi.iter_mut().for_each(|v| *v = 0.0);
        inner.refresh_state();
        self.inner = Some(Box::new(inner));
        Ok(())
    }

    fn state(&self) -> &EulerianState {
        &self.inner().state
    }

    fn step(&mut self, sources: &SourceFields, dt: f64) -> Result<StepReport, SolverError> {
        let s = self.inner_mut();
        s.check_sources(sources)?;
        let mut report = StepReport::default();
        let tend: Vec<Vec<f64>> = (0..3).map(|c| s.momentum_tendency(c)).collect();
        for c in 0..3 {
            for (u, t) in s.u[c].iter_mut().zip(&tend[c]) {
                *u += dt * t;
            }
        }
        if let Some(b) = s.buoyancy {
            for c in 0..3 {
                if b.g[c] == 0.0 {
                    continue;
                }
                for p in s.faces(c).collect::<Vec<_>>() {
                    if s.fixed(c, p) {
                        continue;
                    }
                    let (l, h) = s.face_cells(c, p);
                    let tf = 0.5 * (s.t[l] + s.t[h]);
                    let f = s.face(c, p);
                    s.u[c][f] -= dt * b.beta * (tf - b.t_ref) * b.g[c];
                }
            }
        }
        s.add_face_sources(sources, dt);
        s.project(dt, &mut report)?;

        let (t, _) = s.transport_scalar(&s.t, s.alpha, &s.wall_t, dt);
        let (rv, wall_in) = s.transport_scalar(&s.rv, s.d_f, &s.wall_rv, dt);
        s.t = t;
        s.rv = rv;
        report.wall_vapor_flux = wall_in;
        s.add_scalar_sources(sources, dt);
        s.refresh_state();
        s.state.step_index += 1;
        Ok(report)
    }

    fn incorporate(&mut self, sources: &SourceFields, dt: f64) -> Result<(), SolverError> {
        let s = self.inner_mut();
        s.check_sources(sources)?;
        if sources.is_zero() {
            // a projection of an already solenoidal field only adds rounding
            return Ok(());
        }
        s.add_face_sources(sources, dt);
        let mut report = StepReport::default();
        s.project(dt, &mut report)?;
        s.add_scalar_sources(sources, dt);
        s.refresh_state();
        Ok(())
    }
}
