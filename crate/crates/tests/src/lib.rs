//! Pinned tolerances and independent reference computations for the
//! acceptance suite.
//!
//! Nothing in [`oracles`] calls the engine routine it is used to check.

pub mod oracles;

/// Thresholds of the acceptance criteria. Changing one of these changes
/// what the suite accepts, so each is pinned here and nowhere else.
pub mod tolerances {
    /// Largest relative momentum error of either phase, synchronous mode.
    pub const ANALYTICAL_MAX_ERROR: f64 = 5e-3;
    /// Observed order under dt halving must fall in this band.
    pub const ANALYTICAL_ORDER: (f64, f64) = (0.8, 1.2);
    pub const ANALYTICAL_HALVINGS: u32 = 3;

    /// Leading share of the run treated as the early transient.
    pub const EARLY_FRACTION: f64 = 0.2;
    /// The tail window starts at this share of the run.
    pub const TAIL_FROM: f64 = 0.5;
    pub const ZERO_OVER_CONSTANT_EARLY: f64 = 5.0;
    pub const CONSTANT_TAIL_OVER_SYNC: f64 = 2.0;
    /// Share of consecutive early step pairs whose error flips sign.
    pub const ZERO_MODE_ALTERNATION: f64 = 0.25;

    pub const DELAY_TRIALS: u64 = 200;
    pub const MAX_DELAY_STEPS: u64 = 4;
    pub const LEDGER_RELATIVE: f64 = 1e-12;

    pub const CHAMBER_MOMENTUM_DRIFT: f64 = 1e-3;
    pub const CHAMBER_VAPOR_RESIDUAL: f64 = 1e-6;

    pub const SKEW_SEEDS: u64 = 50;
    pub const SKEW_BOUND: u64 = 1;

    pub const PARTNER_CONFIGS: u64 = 100;

    pub const LOCALITY_SEEDS: u64 = 20;
    pub const HILBERT_ORDERS: std::ops::RangeInclusive<u32> = 1..=3;

    pub const OVERLAP_MIN_PHASE_S: f64 = 0.05;
    pub const OVERLAP_RATIO: f64 = 0.9;
    pub const OVERLAP_MIN_THREADS: usize = 2;
    pub const OVERLAP_BUDGET_S: f64 = 60.0;

    pub const SUBSTEP_RATE: (f64, f64) = (0.8, 1.2);
    pub const SUBSTEP_DOUBLINGS: u32 = 3;

    pub const DETERMINISM_SEED: u64 = 7;
}
