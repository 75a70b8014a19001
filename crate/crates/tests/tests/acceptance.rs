//! Acceptance suite. Prints one `ACCEPTANCE n: PASS|FAIL ...` line per
//! criterion and exits nonzero if any criterion fails.
//!
//! Run a subset with `cargo test -p asyncel-tests --test acceptance -- 3 5`.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use asyncel::cases::{builtin, case_names};
use asyncel::config::RunConfig;
use asyncel::lagrangian::{advance_chunk, ParticleChunk, TrackingParams};
use asyncel::partitioning::{initialize_chunks, overlap_query};
use asyncel::physics::saturation_vapor_density;
use asyncel::runtime::consensus::discover_partners;
use asyncel::runtime::transport::TransportOptions;
use asyncel::runtime::{run_coupled, CoupledSetup, RunArtifacts, RunOptions};
use asyncel::{BoundingBox, EulerianState, StructuredMesh, Vec3};
use asyncel_tests::oracles::*;
use asyncel_tests::tolerances as tol;

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- 1 and 2

struct TwoPhase {
    u_p0: f64,
    u_f0: f64,
    m_p: f64,
    m_f: f64,
    tau: f64,
}

impl TwoPhase {
    fn from_setup(setup: &CoupledSetup) -> TwoPhase {
        let props = &setup.props;
        let mut m_p = 0.0;
        let mut p = 0.0;
        let mut d = 0.0;
        for c in &setup.chunks {
            for i in 0..c.count() {
                let m = c.multiplicity[i] * sphere_mass(c.diameter[i], props.rho_p);
                m_p += m;
                p += m * c.velocity[i][0];
                d = c.diameter[i];
            }
        }
        TwoPhase {
            u_p0: p / m_p,
            u_f0: setup.solver.initial_velocity[0],
            m_p,
            m_f: props.rho_f * setup.mesh.cell_volume(),
            tau: stokes_tau(d, props.rho_p, props.rho_f, props.nu_f),
        }
    }
}

/// Relative momentum errors (fluid, particles) after every step.
fn momentum_errors(cfg: &RunConfig) -> (Vec<f64>, Vec<f64>) {
    let setup = cfg.build().expect("case builds");
    let tp = TwoPhase::from_setup(&setup);
    let art = run_coupled(&setup, &cfg.run_options()).expect("run completes");
    let total = tp.m_p * tp.u_p0 + tp.m_f * tp.u_f0;
    let (mut up, mut uf, mut t) = (tp.u_p0, tp.u_f0, 0.0);
    let mut euler = Vec::new();
    let mut lagrange = Vec::new();
    for r in &art.records {
        (up, uf) = two_phase_rk4(up, uf, tp.m_p / tp.m_f, tp.tau, r.time - t, 64);
        t = r.time;
        euler.push((r.fluid.momentum[0] - tp.m_f * uf) / total);
        lagrange.push((r.particle_momentum[0] - tp.m_p * up) / total);
    }
    (euler, lagrange)
}

fn analytical_case(coupling: &str) -> RunConfig {
    let mut cfg = builtin("analytical-momentum").expect("shipped case");
    cfg.coupling = coupling.into();
    cfg
}

fn criterion_1() -> Outcome {
    let base = analytical_case("synchronous");
    let mut maxima = Vec::new();
    for k in 0..=tol::ANALYTICAL_HALVINGS {
        let mut cfg = base.clone();
        cfg.dt = base.dt / f64::from(1u32 << k);
        cfg.n_steps = base.n_steps << k;
        let (e, l) = momentum_errors(&cfg);
        maxima.push(peak_abs(&e).max(peak_abs(&l)));
    }
    let ords = orders(&maxima);
    let (lo, hi) = tol::ANALYTICAL_ORDER;
    let pass = maxima[0] <= tol::ANALYTICAL_MAX_ERROR && ords.iter().all(|o| (lo..=hi).contains(o));
    verdict(
        pass,
        format!(
            "max |e_rel| {:.3e} (limit {:.0e}); orders under dt halving {:?} (band {lo}..{hi})",
            maxima[0],
            tol::ANALYTICAL_MAX_ERROR,
            ords.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_2() -> Outcome {
    let run = |m: &str| momentum_errors(&analytical_case(m)).0;
    let sync = run("synchronous");
    let zero = run("zero");
    let constant = run("constant");
    let linear = run("linear");
    let n = sync.len();
    let early = ((n as f64 * tol::EARLY_FRACTION).ceil() as usize).max(1);
    let tail = (n as f64 * tol::TAIL_FROM) as usize;
    let zero_early = peak_abs(&zero[..early]);
    let const_early = peak_abs(&constant[..early]);
    let lin_early = peak_abs(&linear[..early]);
    let const_tail = peak_abs(&constant[tail..]);
    let sync_tail = peak_abs(&sync[tail..]);
    let alt = alternation(&zero[..early]);
    let checks = [
        ("zero >= 5x constant early", zero_early >= tol::ZERO_OVER_CONSTANT_EARLY * const_early),
        ("constant tail <= 2x sync tail", const_tail <= tol::CONSTANT_TAIL_OVER_SYNC * sync_tail),
        ("linear early > constant early", lin_early > const_early),
        ("zero-mode sign alternation", alt >= tol::ZERO_MODE_ALTERNATION),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    verdict(
        failed.is_empty(),
        format!(
            "early peaks zero {zero_early:.3e} constant {const_early:.3e} linear {lin_early:.3e}; \
             tails constant {const_tail:.3e} sync {sync_tail:.3e}; zero-mode alternation {:.0}% (need {:.0}%){}",
            100.0 * alt,
            100.0 * tol::ZERO_MODE_ALTERNATION,
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    let mut failures = 0;
    let mut max_delay_seen = 0;
    for seed in 0..tol::DELAY_TRIALS {
        let t = delay_trial(seed, tol::MAX_DELAY_STEPS);
        worst = worst.max(t.worst_relative);
        max_delay_seen = max_delay_seen.max(t.delays.iter().copied().max().unwrap_or(0));
        if !(t.worst_relative <= tol::LEDGER_RELATIVE) {
            failures += 1;
        }
    }
    verdict(
        failures == 0,
        format!(
            "{} trials, delays 0..={max_delay_seen} steps, worst relative ledger gap {worst:.2e} (limit {:.0e}), {failures} failing",
            tol::DELAY_TRIALS,
            tol::LEDGER_RELATIVE
        ),
    )
}

// ---------------------------------------------------------------- 4

fn chamber_16(coupling: &str) -> RunArtifacts {
    let mut cfg = builtin("mini-chamber")
        .expect("shipped case")
        .with_overrides(&[
            "mesh.dims=[16,16,16]".into(),
            "mesh.extent=[3.0,3.0,3.0]".into(),
            format!("coupling={coupling}"),
        ])
        .expect("overrides apply");
    cfg.particles.init.region = cfg.inset_region(0.05);
    let setup = cfg.build().expect("chamber builds");
    assert_eq!(setup.mesh.n_cells(), 4096);
    assert_eq!(setup.chunks.iter().map(|c| c.count()).sum::<usize>(), 10_000);
    run_coupled(&setup, &RunOptions::default()).expect("run completes")
}

fn step_drift(art: &RunArtifacts) -> f64 {
    art.records.iter().map(|r| r.momentum_drift.norm()).fold(0.0, f64::max) / art.initial_particle_momentum.norm()
}

// Asynchronous coupling conserves over time, not per step: until a truth
// arrives the fluid holds an estimate. So the asynchronous run is judged
// after the final catch-up and the per-step bound is applied to the
// synchronous run.
fn criterion_4() -> Outcome {
    let asynchronous = chamber_16("constant");
    let synchronous = chamber_16("synchronous");
    let final_drift = asynchronous.final_momentum_drift.norm() / asynchronous.initial_particle_momentum.norm();
    let sync_drift = step_drift(&synchronous);
    let lag = step_drift(&asynchronous);
    let vapor = asynchronous.max_vapor_residual().max(synchronous.max_vapor_residual());
    let steps = asynchronous.records.len().min(synchronous.records.len());
    verdict(
        steps == 100
            && final_drift < tol::CHAMBER_MOMENTUM_DRIFT
            && sync_drift < tol::CHAMBER_MOMENTUM_DRIFT
            && vapor <= tol::CHAMBER_VAPOR_RESIDUAL,
        format!(
            "16^3 cells, 10000 parcels, {steps} steps; momentum drift after catch-up {final_drift:.2e}, synchronous per-step max \
             {sync_drift:.2e} (limit {:.0e}; asynchronous one-step lag peaks at {lag:.2e}); vapor residual per step {vapor:.2e} (limit {:.0e})",
            tol::CHAMBER_MOMENTUM_DRIFT,
            tol::CHAMBER_VAPOR_RESIDUAL
        ),
    )
}

// ---------------------------------------------------------------- 5

fn fuzz_config(seed: u64) -> RunConfig {
    let couplings = ["constant", "linear", "zero", "synchronous"];
    builtin("mini-chamber")
        .expect("shipped case")
        .with_overrides(&[
            format!("coupling={}", couplings[seed as usize % couplings.len()]),
            "n_steps=8".into(),
            "dt=0.02".into(),
            "mesh.dims=[8,8,8]".into(),
            "mesh.extent=[3.0,3.0,3.0]".into(),
            "particles.n_chunks=8".into(),
            "particles.chunks_per_worker=2".into(),
            "particles.init.count=400".into(),
            "particles.init.region={lo=[0.1,0.1,0.1], hi=[2.9,2.9,2.9]}".into(),
            "particles.init.velocity=[1.5,-1.0,2.0]".into(),
            "output.snapshot_stride=0".into(),
        ])
        .expect("overrides apply")
}

fn criterion_5() -> Outcome {
    let mut max_skew = 0;
    let mut observations = 0;
    let mut errors = Vec::new();
    for seed in 0..tol::SKEW_SEEDS {
        let setup = fuzz_config(seed).build().expect("fuzz case builds");
        let mut opts = RunOptions::deterministic(seed);
        opts.transport.max_delay_ticks = 1 + seed % 8;
        match run_coupled(&setup, &opts) {
            Ok(art) => {
                max_skew = max_skew.max(art.max_skew);
                observations += art.skew_observations;
            }
            Err(e) => errors.push(format!("seed {seed}: {e}")),
        }
    }
    verdict(
        errors.is_empty() && max_skew <= tol::SKEW_BOUND && observations > 0,
        format!(
            "{} seeds with 1..8 ticks of injected delay: max observed skew {max_skew} over {observations} observations; {} failed runs{}",
            tol::SKEW_SEEDS,
            errors.len(),
            errors.first().map(|e| format!(" (first: {e})")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- 6

fn random_box(rng: &mut ChaCha8Rng, domain: &BoundingBox) -> BoundingBox {
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..3 {
        let ext = domain.hi[a] - domain.lo[a];
        let c = domain.lo[a] + rng.gen_range(-0.1..1.1) * ext;
        let h = rng.gen_range(0.0..0.4) * ext;
        lo[a] = c - h;
        hi[a] = c + h;
    }
    BoundingBox {
        lo: Vec3(lo),
        hi: Vec3(hi),
    }
}

fn criterion_6() -> Outcome {
    let mut mismatches = Vec::new();
    let mut partner_links = 0;
    for seed in 0..tol::PARTNER_CONFIGS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let grid = [rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=2)];
        let dims = [grid[0] * rng.gen_range(1..=3), grid[1] * rng.gen_range(1..=3), grid[2] * rng.gen_range(1..=3)];
        let mesh = StructuredMesh::new(
            Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            Vec3::new(rng.gen_range(0.3..2.0), rng.gen_range(0.3..2.0), rng.gen_range(0.3..2.0)),
            dims,
            grid,
        )
        .expect("valid mesh");
        let n_ranks = mesh.n_partitions();
        let mut ranks: Vec<usize> = (0..n_ranks).collect();
        ranks.shuffle(&mut rng);
        let n_workers = rng.gen_range(1..=n_ranks);
        let host_map = ranks[..n_workers].to_vec();
        let domain = mesh.domain_box();
        let partitions = mesh.partitions();
        let boxes: Vec<Vec<BoundingBox>> = (0..n_workers)
            .map(|_| (0..rng.gen_range(1..=3)).map(|_| random_box(&mut rng, &domain)).collect())
            .collect();
        let required: Vec<BTreeSet<usize>> = boxes
            .iter()
            .map(|bs| bs.iter().flat_map(|b| overlap_query(b, &partitions)).collect())
            .collect();
        let (scheduler, delay) = if seed % 2 == 0 { ("deterministic", seed % 5) } else { ("live", 0) };
        let opts = TransportOptions {
            seed,
            max_delay_ticks: delay,
            ..Default::default()
        };
        let oracle = brute_force_partners(&mesh, &boxes, &host_map);
        match discover_partners(&required, &host_map, n_ranks, scheduler, &opts) {
            Ok(found) => {
                partner_links += found.iter().map(|p| p.state_to.len()).sum::<usize>();
                let same = found
                    .iter()
                    .zip(&oracle)
                    .all(|(f, o)| f.state_to == o.0 && f.states_from == o.1);
                if !same {
                    mismatches.push(seed);
                }
            }
            Err(e) => {
                eprintln!("configuration {seed}: {e}");
                mismatches.push(seed);
            }
        }
    }
    verdict(
        mismatches.is_empty(),
        format!(
            "{} randomized configurations ({partner_links} rank-to-worker links), {} differ from the brute-force oracle{}",
            tol::PARTNER_CONFIGS,
            mismatches.len(),
            if mismatches.is_empty() { String::new() } else { format!(": {mismatches:?}") }
        ),
    )
}

// ---------------------------------------------------------------- 7

fn locality(cfg: &RunConfig, seeds: u64) -> (Vec<f64>, Vec<f64>) {
    let mesh = cfg.mesh().expect("mesh");
    let (n_chunks, cpw) = (cfg.particles.n_chunks, cfg.particles.chunks_per_worker);
    let mut hilbert = Vec::new();
    let mut random = Vec::new();
    for seed in 0..seeds {
        let (chunks, placements) = initialize_chunks(&cfg.particles.init, n_chunks, cpw, &mesh, seed);
        let (_, shuffled) = random_assignment(&chunks, &cfg.particles.init, n_chunks, cpw, &mesh, seed);
        hilbert.push(mean_required(&placements));
        random.push(mean_required(&shuffled));
    }
    (hilbert, random)
}

// Measured on a cubic mesh. On the chamber's 16x16x48 mesh every partition
// column borders both others, so any chunk whose bbox carries the one-cell
// interpolation margin touches all four partitions however it is ordered;
// that figure is printed alongside.
fn criterion_7() -> Outcome {
    let chamber = builtin("mini-chamber").expect("shipped case");
    let mut cube = chamber
        .with_overrides(&["mesh.dims=[32,32,32]".into(), "mesh.extent=[3.0,3.0,3.0]".into()])
        .expect("overrides apply");
    cube.particles.init.region = cube.inset_region(0.05);
    let (hilbert, random) = locality(&cube, tol::LOCALITY_SEEDS);
    let (ch, cr) = locality(&chamber, 1);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let wins = hilbert.iter().zip(&random).filter(|(h, r)| h < r).count();
    let curve: Vec<String> = tol::HILBERT_ORDERS
        .filter_map(|o| check_hilbert_curve(o).err().map(|e| format!("order {o}: {e}")))
        .collect();
    verdict(
        cube.mesh.partition_grid == [2, 2, 1]
            && cube.particles.n_chunks == 16
            && mean(&hilbert) < mean(&random)
            && curve.is_empty(),
        format!(
            "32^3 mesh, {:?} grid, {} chunks, {} seeds: mean partitions per chunk Hilbert {:.3} vs random {:.3} \
             (lower on {wins} of {} seeds; chamber mesh {:.2} vs {:.2}); curve bijective and face-adjacent at orders {:?}: {}",
            cube.mesh.partition_grid,
            cube.particles.n_chunks,
            tol::LOCALITY_SEEDS,
            mean(&hilbert),
            mean(&random),
            tol::LOCALITY_SEEDS,
            ch[0],
            cr[0],
            tol::HILBERT_ORDERS,
            if curve.is_empty() { "yes".to_string() } else { curve.join("; ") }
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let started = Instant::now();
    let cfg = builtin("overlap-bench").expect("shipped case");
    let setup = cfg.build().expect("bench builds");
    let art = run_coupled(&setup, &RunOptions::default()).expect("bench completes");
    let elapsed = started.elapsed().as_secs_f64();
    // step 0 is coupled synchronously and carries start-up costs
    let recs = &art.records[1.min(art.records.len())..];
    let n = recs.len().max(1) as f64;
    let euler = recs.iter().map(|r| r.euler_compute_s).sum::<f64>() / n;
    let lagrange = recs.iter().map(|r| r.lagrange_compute_s).sum::<f64>() / n;
    let wall = recs.iter().map(|r| r.wall_s).sum::<f64>() / n;
    let ratio = wall / (euler + lagrange);
    let mut unmet = Vec::new();
    if threads < tol::OVERLAP_MIN_THREADS {
        unmet.push(format!("needs >= {} hardware threads, found {threads}", tol::OVERLAP_MIN_THREADS));
    }
    if euler.min(lagrange) < tol::OVERLAP_MIN_PHASE_S {
        unmet.push("a phase is below the minimum per-step load".to_string());
    }
    if !(ratio < tol::OVERLAP_RATIO) {
        unmet.push("no overlap".to_string());
    }
    if elapsed >= tol::OVERLAP_BUDGET_S {
        unmet.push("over the time budget".to_string());
    }
    verdict(
        unmet.is_empty(),
        format!(
            "per step: euler {euler:.3} s, lagrange {lagrange:.3} s, wall {wall:.3} s, wall/(euler+lagrange) {ratio:.3} \
             (limit {}); {elapsed:.1} s total{}",
            tol::OVERLAP_RATIO,
            if unmet.is_empty() { String::new() } else { format!("; {}", unmet.join("; ")) }
        ),
    )
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let setup = builtin("analytical-momentum").expect("shipped case").build().expect("builds");
    let props = setup.props;
    let mesh = &setup.mesh;
    let d = 1e-5;
    let t = 293.0;
    let tau = stokes_tau(d, props.rho_p, props.rho_f, props.nu_f);
    // a small slip keeps the drag in the Stokes limit
    let (u_f, u0) = (0.0, 1e-3);
    let state = EulerianState::uniform(
        mesh.cell_box(),
        Vec3::new(u_f, 0.0, 0.0),
        t,
        saturation_vapor_density(t).expect("in range"),
    );
    let mut chunk = ParticleChunk::empty(0);
    chunk.push(0, mesh.cell_center([0, 0, 0]), Vec3::new(u0, 0.0, 0.0), d, t, 1.0);
    let dt = 0.1 * tau;
    let exact = stokes_relaxation(u0, u_f, tau, dt);
    let mut errors = Vec::new();
    for k in 0..=tol::SUBSTEP_DOUBLINGS {
        let params = TrackingParams {
            dt,
            n_substeps: 1 << k,
            s_vp: 1.0,
            bbox_margin: Vec3::ZERO,
        };
        let adv = advance_chunk(&chunk, &[&state], mesh, &params, &props).expect("advance");
        errors.push((adv.chunk.velocity[0][0] - exact).abs() / (u0 - u_f).abs());
    }
    let rates = orders(&errors);
    let (lo, hi) = tol::SUBSTEP_RATE;
    verdict(
        rates.iter().all(|r| (lo..=hi).contains(r)),
        format!(
            "dt = 0.1 tau, substeps 1..{}: errors {:?}, rates {:?} (band {lo}..{hi})",
            1 << tol::SUBSTEP_DOUBLINGS,
            errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
            rates.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()
        ),
    )
}

// ---------------------------------------------------------------- 10

fn shipped_config(case: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{case}.toml"))
}

fn run_cli(case: &str, out: &Path) -> Vec<(String, Vec<u8>)> {
    let args = [
        "asyncel".to_string(),
        "run".into(),
        "--config".into(),
        shipped_config(case).display().to_string(),
        "--deterministic".into(),
        "--seed".into(),
        tol::DETERMINISM_SEED.to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    let mut console = Vec::new();
    asyncel_cli::run(args, &mut console).expect("cli run succeeds");
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
        .expect("output dir")
        .map(|e| {
            let e = e.expect("dir entry");
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).expect("readable"))
        })
        .collect();
    files.sort();
    files
}

fn criterion_10() -> Outcome {
    let mut differing = Vec::new();
    let mut summary = Vec::new();
    for case in case_names() {
        let a = tempfile::tempdir().expect("tempdir");
        let b = tempfile::tempdir().expect("tempdir");
        let fa = run_cli(&case, a.path());
        let fb = run_cli(&case, b.path());
        let bytes: usize = fa.iter().map(|f| f.1.len()).sum();
        summary.push(format!("{case}: {} files, {bytes} bytes", fa.len()));
        if fa != fb {
            differing.push(case);
        }
    }
    verdict(
        differing.is_empty(),
        format!(
            "two runs per shipped case with --deterministic --seed {}: {}{}",
            tol::DETERMINISM_SEED,
            summary.join("; "),
            if differing.is_empty() { String::new() } else { format!("; differing: {differing:?}") }
        ),
    )
}

// ----------------------------------------------------------------

type Criterion = fn() -> Outcome;

const CRITERIA: [(u32, &str, Criterion); 10] = [
    (1, "analytical validation", criterion_1),
    (2, "extrapolator ordering", criterion_2),
    (3, "conservativity under delays", criterion_3),
    (4, "coupled conservation", criterion_4),
    (5, "skew bound", criterion_5),
    (6, "partner discovery", criterion_6),
    (7, "Hilbert locality", criterion_7),
    (8, "asynchronous overlap", criterion_8),
    (9, "tracking kernel convergence", criterion_9),
    (10, "determinism", criterion_10),
];

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (n, name, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        println!(
            "ACCEPTANCE {n}: {} {name} [{:.1} s] {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            outcome.detail
        );
        if !outcome.pass {
            failed.push(n);
        }
    }
    println!("acceptance: {} passed, {} failed {:?}", ran - failed.len(), failed.len(), failed);
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
