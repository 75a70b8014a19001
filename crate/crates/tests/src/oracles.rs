use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use asyncel::estimator::{extrapolator_registry, Estimator};
use asyncel::lagrangian::ParticleChunk;
use asyncel::partitioning::{build_chunks, hilbert_index, ChunkPlacement, InitSpec};
use asyncel::{BoundingBox, CellBox, SourceFields, StructuredMesh, Vec3};

/// Particle and fluid velocity of the two-way drag problem
/// `du_p/dt = (u_f - u_p)/tau`, `m_f du_f/dt = m_p (u_p - u_f)/tau`,
/// integrated with classical Runge-Kutta.
pub fn two_phase_rk4(u_p0: f64, u_f0: f64, mass_ratio: f64, tau: f64, t: f64, steps: usize) -> (f64, f64) {
    let rhs = |up: f64, uf: f64| ((uf - up) / tau, mass_ratio * (up - uf) / tau);
    let h = t / steps as f64;
    let (mut up, mut uf) = (u_p0, u_f0);
    for _ in 0..steps {
        let k1 = rhs(up, uf);
        let k2 = rhs(up + 0.5 * h * k1.0, uf + 0.5 * h * k1.1);
        let k3 = rhs(up + 0.5 * h * k2.0, uf + 0.5 * h * k2.1);
        let k4 = rhs(up + h * k3.0, uf + h * k3.1);
        up += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        uf += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    (up, uf)
}

/// A particle relaxing toward a fixed fluid velocity.
pub fn stokes_relaxation(u0: f64, u_f: f64, tau: f64, t: f64) -> f64 {
    u_f + (u0 - u_f) * (-t / tau).exp()
}

pub fn sphere_mass(d: f64, rho: f64) -> f64 {
    rho * std::f64::consts::PI * d * d * d / 6.0
}

pub fn stokes_tau(d: f64, rho_p: f64, rho_f: f64, nu_f: f64) -> f64 {
    rho_p * d * d / (18.0 * rho_f * nu_f)
}

/// log2 of successive error ratios.
pub fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Share of consecutive pairs whose signs differ.
pub fn alternation(values: &[f64]) -> f64 {
    let pairs = values.len().saturating_sub(1);
    if pairs == 0 {
        return 0.0;
    }
    values.windows(2).filter(|w| w[0] * w[1] < 0.0).count() as f64 / pairs as f64
}

pub fn peak_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Partner sets by brute force over every cell: partition `p` is needed by
/// worker `w` when any cell of `p` touches the worker's box. Returns, per
/// rank, (workers it sends states to, partitions its hosted worker reads).
pub fn brute_force_partners(
    mesh: &StructuredMesh,
    worker_boxes: &[Vec<BoundingBox>],
    host_map: &[usize],
) -> Vec<(BTreeSet<usize>, BTreeSet<usize>)> {
    let n = mesh.n_partitions();
    let mut out = vec![(BTreeSet::new(), BTreeSet::new()); n];
    for (w, boxes) in worker_boxes.iter().enumerate() {
        let mut needed = BTreeSet::new();
        for k in 0..mesh.dims[2] {
            for j in 0..mesh.dims[1] {
                for i in 0..mesh.dims[0] {
                    let lo = [
                        mesh.origin[0] + i as f64 * mesh.cell_size[0],
                        mesh.origin[1] + j as f64 * mesh.cell_size[1],
                        mesh.origin[2] + k as f64 * mesh.cell_size[2],
                    ];
                    let hi = [lo[0] + mesh.cell_size[0], lo[1] + mesh.cell_size[1], lo[2] + mesh.cell_size[2]];
                    let touches = boxes
                        .iter()
                        .any(|b| (0..3).all(|a| lo[a] <= b.hi[a] && b.lo[a] <= hi[a]));
                    if touches {
                        needed.insert(mesh.partition_of_cell([i, j, k]));
                    }
                }
            }
        }
        for &p in &needed {
            out[p].0.insert(w);
        }
        out[host_map[w]].1 = needed;
    }
    out
}

/// Visits every cell of the `2^order` cube in curve order and checks that
/// the index is a bijection onto `0..8^order` and that successive cells are
/// face neighbours.
pub fn check_hilbert_curve(order: u32) -> Result<(), String> {
    let side = 1u64 << order;
    let total = (side * side * side) as usize;
    let mut by_index: Vec<Option<[u64; 3]>> = vec![None; total];
    for z in 0..side {
        for y in 0..side {
            for x in 0..side {
                let h = hilbert_index([x, y, z], order).map_err(|e| e.to_string())? as usize;
                if h >= total {
                    return Err(format!("index {h} of {:?} exceeds {total}", [x, y, z]));
                }
                if let Some(prev) = by_index[h] {
                    return Err(format!("index {h} shared by {prev:?} and {:?}", [x, y, z]));
                }
                by_index[h] = Some([x, y, z]);
            }
        }
    }
    let cells: Vec<[u64; 3]> = by_index.into_iter().map(|c| c.expect("bijective")).collect();
    for (h, w) in cells.windows(2).enumerate() {
        let dist: u64 = (0..3).map(|a| w[0][a].abs_diff(w[1][a])).sum();
        if dist != 1 {
            return Err(format!("indices {h} and {} are {dist} steps apart", h + 1));
        }
    }
    Ok(())
}

/// The same parcels as `chunks`, dealt to chunks in a random order.
pub fn random_assignment(
    chunks: &[ParticleChunk],
    init: &InitSpec,
    n_chunks: usize,
    chunks_per_worker: usize,
    mesh: &StructuredMesh,
    seed: u64,
) -> (Vec<ParticleChunk>, Vec<ChunkPlacement>) {
    let mut positions = Vec::new();
    let mut diameters = Vec::new();
    for c in chunks {
        positions.extend_from_slice(&c.position);
        diameters.extend_from_slice(&c.diameter);
    }
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    build_chunks(init, &order, &positions, &diameters, n_chunks, chunks_per_worker, mesh, init.margin(mesh))
}

pub fn mean_required(placements: &[ChunkPlacement]) -> f64 {
    placements.iter().map(|p| p.required_partitions.len() as f64).sum::<f64>() / placements.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayTrial {
    pub mode: String,
    pub n_steps: u64,
    pub delays: Vec<u64>,
    /// Worst |sum of applied impulses - sum of true impulses| over every
    /// cell and component, relative to the summed true magnitudes.
    pub worst_relative: f64,
}

fn random_fields(cells: CellBox, rng: &mut ChaCha8Rng) -> SourceFields {
    let mut f = SourceFields::zeros(cells, 0);
    let draw = |rng: &mut ChaCha8Rng| rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-3..3));
    for i in 0..f.len() {
        f.momentum[i] = Vec3::new(draw(rng), draw(rng), draw(rng));
        f.energy[i] = draw(rng);
        f.vapor[i] = draw(rng);
    }
    f
}

fn components(f: &SourceFields) -> Vec<f64> {
    let mut v = Vec::with_capacity(5 * f.len());
    for i in 0..f.len() {
        v.extend([f.momentum[i][0], f.momentum[i][1], f.momentum[i][2], f.energy[i], f.vapor[i]]);
    }
    v
}

/// Feeds an estimator random sources whose truths arrive 0 to `max_delay`
/// steps late, flushes, and compares the impulse it handed out with the
/// true impulse. The sums are kept here, not read back from the estimator.
pub fn delay_trial(seed: u64, max_delay: u64) -> DelayTrial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = ["zero", "constant", "linear"];
    let mode = modes[rng.gen_range(0..modes.len())];
    let cells = CellBox::new([0, 0, 0], [1, 2, 0]);
    let mut est = Estimator::new(extrapolator_registry().create(mode).expect("registered"), cells);
    let n_steps: u64 = rng.gen_range(1..=40);
    let delays: Vec<u64> = (0..n_steps).map(|_| rng.gen_range(0..=max_delay)).collect();
    let n = 5 * cells.len();
    let mut applied = vec![0.0; n];
    let mut truth = vec![0.0; n];
    let mut scale = vec![0.0; n];
    // truths due before the estimate of a given step
    let mut due: BTreeMap<u64, Vec<(u64, f64, SourceFields)>> = BTreeMap::new();
    let mut pending = Vec::new();
    for step in 0..n_steps {
        for (k, dt, s) in due.remove(&step).unwrap_or_default() {
            est.receive(k, dt, s).expect("stand-in exists");
        }
        let dt = rng.gen_range(0.5..2.0);
        let e = est.estimate_step(step, dt).expect("steps in order");
        for (a, v) in applied.iter_mut().zip(components(&e)) {
            *a += dt * v;
        }
        let s = random_fields(cells, &mut rng);
        for ((t, sc), v) in truth.iter_mut().zip(scale.iter_mut()).zip(components(&s)) {
            *t += dt * v;
            *sc += (dt * v).abs();
        }
        let arrive = step + 1 + delays[step as usize];
        if arrive < n_steps {
            due.entry(arrive).or_default().push((step, dt, s));
        } else {
            pending.push((step, dt, s));
        }
    }
    for (k, dt, s) in due.into_values().flatten().chain(pending) {
        est.receive(k, dt, s).expect("stand-in exists");
    }
    let flush_dt = rng.gen_range(0.5..2.0);
    let f = est.flush(flush_dt).expect("flush");
    for (a, v) in applied.iter_mut().zip(components(&f)) {
        *a += flush_dt * v;
    }
    let worst_relative = (0..n)
        .map(|i| (applied[i] - truth[i]).abs() / scale[i].max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    DelayTrial {
        mode: mode.to_string(),
        n_steps,
        delays,
        worst_relative,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_conserves_momentum_and_reaches_equilibrium() {
        let (up, uf) = two_phase_rk4(1.0, 0.0, 0.5, 1.0, 50.0, 5000);
        assert!((up - uf).abs() < 1e-12);
        // m_p u_p + m_f u_f with m_p = 0.5 m_f
        assert!((0.5 * up + uf - 0.5).abs() < 1e-12);
        let (up, _) = two_phase_rk4(1.0, 0.0, 1e-12, 2.0, 1.0, 1000);
        assert!((up - stokes_relaxation(1.0, 0.0, 2.0, 1.0)).abs() < 1e-10);
    }

    #[test]
    fn alternation_and_orders() {
        assert_eq!(alternation(&[1.0, -1.0, 1.0, -1.0]), 1.0);
        assert_eq!(alternation(&[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(orders(&[4.0, 2.0, 1.0]), vec![1.0, 1.0]);
        assert_eq!(peak_abs(&[0.5, -2.0, 1.0]), 2.0);
    }

    #[test]
    fn brute_force_partners_on_a_split_box() {
        let mesh = StructuredMesh::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0), [4, 2, 2], [2, 1, 1]).unwrap();
        let left = BoundingBox {
            lo: Vec3::new(0.2, 0.2, 0.2),
            hi: Vec3::new(1.5, 1.0, 1.0),
        };
        let both = BoundingBox {
            lo: Vec3::new(1.5, 0.2, 0.2),
            hi: Vec3::new(2.5, 1.0, 1.0),
        };
        let p = brute_force_partners(&mesh, &[vec![left], vec![both]], &[1, 0]);
        assert_eq!(p[0].0, BTreeSet::from([0, 1]));
        assert_eq!(p[1].0, BTreeSet::from([1]));
        assert_eq!(p[1].1, BTreeSet::from([0]));
        assert_eq!(p[0].1, BTreeSet::from([0, 1]));
    }

    #[test]
    fn hilbert_curve_checks_pass_at_small_orders() {
        for order in 1..=2 {
            check_hilbert_curve(order).unwrap();
        }
    }

    #[test]
    fn delay_trial_without_delays_is_exact_enough() {
        let t = delay_trial(1, 0);
        assert!(t.worst_relative < 1e-12, "{t:?}");
    }
}
