//! Jacobi-preconditioned conjugate gradients for the pressure equation on a
//! box with zero-flux walls and optional periodic axes.

use crate::error::SolverError;

const NONE: u32 = u32::MAX;

/// The operator `-L`, with `L` the 7-point Laplacian. Positive
/// semi-definite; its null space is the constants.
pub struct PoissonOperator {
    nb: Vec<[u32; 6]>,
    w: [f64; 3],
    diag: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub max_residual: f64,
}

impl PoissonOperator {
    pub fn new(n: [usize; 3], h: [f64; 3], periodic: [bool; 3]) -> Self {
        let count = n[0] * n[1] * n[2];
        let w = [1.0 / (h[0] * h[0]), 1.0 / (h[1] * h[1]), 1.0 / (h[2] * h[2])];
        let mut nb = vec![[NONE; 6]; count];
        let mut diag = vec![0.0; count];
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let c = [i, j, k];
                    let id = i + n[0] * (j + n[1] * k);
                    for a in 0..3 {
                        if n[a] == 1 {
                            continue;
                        }
                        for (s, dir) in [(0usize, -1i64), (1, 1)] {
                            let m = c[a] as i64 + dir;
                            let m = if m < 0 || m >= n[a] as i64 {
                                if !periodic[a] {
                                    continue;
                                }
                                m.rem_euclid(n[a] as i64)
                            } else {
                                m
                            } as usize;
                            let mut q = c;
                            q[a] = m;
                            nb[id][2 * a + s] = (q[0] + n[0] * (q[1] + n[1] * q[2])) as u32;
                            diag[id] += w[a];
                        }
                    }
                }
            }
        }
        PoissonOperator { nb, w, diag }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `y = -L x`
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (id, yi) in y.iter_mut().enumerate() {
            let xi = x[id];
            let nbs = &self.nb[id];
            let mut acc = self.diag[id] * xi;
            for (s, &m) in nbs.iter().enumerate() {
                if m != NONE {
                    acc -= self.w[s / 2] * x[m as usize];
                }
            }
            *yi = acc;
        }
    }

    /// Solves `-L x = b` from the initial guess in `x`. `b` is projected
    /// onto the mean-zero subspace first. Stops when the relative residual
    /// is below `tol` and the max-norm residual is below `max_abs`; fails
    /// only if the relative criterion is unmet after `max_iter` iterations.
    pub fn solve(
        &self,
        b: &[f64],
        x: &mut [f64],
        tol: f64,
        max_abs: f64,
        max_iter: usize,
    ) -> Result<CgOutcome, SolverError> {
        let n = self.len();
        let mean = b.iter().sum::<f64>() / n as f64;
        let b: Vec<f64> = b.iter().map(|v| v - mean).collect();
        let b_norm = dot(&b, &b).sqrt();
        if b_norm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(CgOutcome {
                iterations: 0,
                relative_residual: 0.0,
                max_residual: 0.0,
            });
        }
        let mut r = vec![0.0; n];
        self.apply(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let precond = |r: &[f64], z: &mut [f64]| {
            for i in 0..n {
                z[i] = if self.diag[i] > 0.0 { r[i] / self.diag[i] } else { r[i] };
            }
        };
        let mut z = vec![0.0; n];
        precond(&r, &mut z);
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let mut it = 0;
        loop {
            let rel = dot(&r, &r).sqrt() / b_norm;
            let max_r = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if (rel <= tol && max_r <= max_abs) || it >= max_iter {
                if rel > tol {
                    return Err(SolverError::PoissonNotConverged {
                        iterations: it,
                        residual: rel,
                    });
                }
                let xm = x.iter().sum::<f64>() / n as f64;
                x.iter_mut().for_each(|v| *v -= xm);
                return Ok(CgOutcome {
                    iterations: it,
                    relative_residual: rel,
                    max_residual: max_r,
                });
            }
            self.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                return Err(SolverError::PoissonNotConverged {
                    iterations: it,
                    residual: rel,
                });
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            precond(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            it += 1;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
