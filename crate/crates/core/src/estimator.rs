//! Extrapolator-corrector estimation of lagging Lagrangian sources.
//!
//! Sources are rates. The estimator keeps its ledger on an impulse basis
//! (rate times the step's dt), so for steps of unequal length the corrector
//! is `sum_k dt_k (S_k - X_k) / dt_n`, where `X_k` is the extrapolated stand-in
//! that was emitted for step `k`. With constant dt this is the plain
//! "arrived truths minus stand-ins" sum, and the emitted estimate is
//! `corrector + extrapolation`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::EstimatorError;
use crate::fields::{SourceFields, SourceTotals};
use crate::mesh::CellBox;
use crate::registry::Registry;

pub trait Extrapolator: Send + Sync {
    fn name(&self) -> &'static str;

    /// `last` is the newest known true source, `prev` the one before it.
    fn extrapolate(
        &self,
        cells: CellBox,
        last: Option<&SourceFields>,
        prev: Option<&SourceFields>,
    ) -> SourceFields;
}

pub struct ZeroExtrapolator;
pub struct ConstantExtrapolator;
pub struct LinearExtrapolator;

impl Extrapolator for ZeroExtrapolator {
    fn name(&self) -> &'static str {
        "zero"
    }

    fn extrapolate(&self, cells: CellBox, _: Option<&SourceFields>, _: Option<&SourceFields>) -> SourceFields {
        SourceFields::zeros(cells, 0)
    }
}

impl Extrapolator for ConstantExtrapolator {
    fn name(&self) -> &'static str {
        "constant"
    }

    fn extrapolate(&self, cells: CellBox, last: Option<&SourceFields>, _: Option<&SourceFields>) -> SourceFields {
        last.cloned().unwrap_or_else(|| SourceFields::zeros(cells, 0))
    }
}

impl Extrapolator for LinearExtrapolator {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn extrapolate(
        &self,
        cells: CellBox,
        last: Option<&SourceFields>,
        prev: Option<&SourceFields>,
    ) -> SourceFields {
        match (last, prev) {
            (Some(l), Some(p)) => {
                let mut out = l.scaled(2.0);
                out.sub_assign_checked(p).expect("history shares one cell box");
                out
            }
            (Some(l), None) => l.clone(),
            _ => SourceFields::zeros(cells, 0),
        }
    }
}

pub fn extrapolator_registry() -> Registry<Box<dyn Extrapolator>> {
    let mut r: Registry<Box<dyn Extrapolator>> = Registry::new("extrapolator");
    r.register("zero", || Box::new(ZeroExtrapolator));
    r.register("constant", || Box::new(ConstantExtrapolator));
    r.register("linear", || Box::new(LinearExtrapolator));
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub cumulative_true: SourceTotals,
    pub cumulative_estimated: SourceTotals,
    pub difference: SourceTotals,
    /// Largest cell-wise |estimated - true| over all fields.
    pub max_cell_difference: f64,
    pub backlog_steps: usize,
}

struct Stamped {
    dt: f64,
    fields: SourceFields,
}

/// Per-partition estimator history and conservativity ledger.
pub struct Estimator {
    extrapolator: Box<dyn Extrapolator>,
    cells: CellBox,
    last_true: Option<(i64, SourceFields)>,
    prev_true: Option<(i64, SourceFields)>,
    /// Sum of dt_k S_k over received truths.
    cumulative_true: SourceFields,
    /// Sum of dt_n S_est^n over emitted estimates.
    cumulative_estimated: SourceFields,
    /// Extrapolated stand-ins whose truth has not been incorporated yet.
    stand_ins: BTreeMap<u64, Stamped>,
    /// Truths received but not yet folded into an estimate.
    arrived: BTreeMap<u64, Stamped>,
    incorporated: u64,
    next_step: u64,
}

impl Estimator {
    pub fn new(extrapolator: Box<dyn Extrapolator>, cells: CellBox) -> Self {
        Estimator {
            extrapolator,
            cells,
            last_true: None,
            prev_true: None,
            cumulative_true: SourceFields::zeros(cells, 0),
            cumulative_estimated: SourceFields::zeros(cells, 0),
            stand_ins: BTreeMap::new(),
            arrived: BTreeMap::new(),
            incorporated: 0,
            next_step: 0,
        }
    }

    pub fn mode(&self) -> &'static str {
        self.extrapolator.name()
    }

    pub fn next_step(&self) -> u64 {
        self.next_step
    }

    /// Emitted estimates whose true source has not been incorporated.
    pub fn backlog_steps(&self) -> usize {
        self.stand_ins.len()
    }

    /// Installs a known source for a step before the first one, without
    /// touching the ledger. Used to state that no source existed before
    /// the particles did.
    pub fn seed_history(&mut self, truth: SourceFields) -> Result<(), EstimatorError> {
        self.check_cells(&truth)?;
        self.prev_true = self.last_true.take();
        self.last_true = Some((-1, truth));
        Ok(())
    }

    fn check_cells(&self, f: &SourceFields) -> Result<(), EstimatorError> {
        if f.cells != self.cells {
            return Err(EstimatorError::Field(crate::error::FieldError::SizeMismatch(format!(
                "estimator box {:?} vs {:?}",
                self.cells, f.cells
            ))));
        }
        Ok(())
    }

    pub fn extrapolate(&self) -> SourceFields {
        self.extrapolator.extrapolate(
            self.cells,
            self.last_true.as_ref().map(|(_, f)| f),
            self.prev_true.as_ref().map(|(_, f)| f),
        )
    }

    /// Records the true source of an already estimated step.
    pub fn receive(&mut self, step: u64, dt: f64, truth: SourceFields) -> Result<(), EstimatorError> {
        self.check_cells(&truth)?;
        if !self.stand_ins.contains_key(&step) {
            let why = if step >= self.next_step {
                "has not been estimated yet"
            } else {
                "was already corrected"
            };
            return Err(EstimatorError::ProtocolViolation(format!(
                "true source for step {step} {why}"
            )));
        }
        if self.arrived.contains_key(&step) {
            return Err(EstimatorError::ProtocolViolation(format!(
                "duplicate true source for step {step}"
            )));
        }
        self.cumulative_true.axpy(dt, &truth)?;
        self.arrived.insert(step, Stamped { dt, fields: truth });
        Ok(())
    }

    /// Folds all arrived truths in; returns the corrector as an impulse.
    fn take_corrector(&mut self) -> Result<SourceFields, EstimatorError> {
        let mut corr = SourceFields::zeros(self.cells, 0);
        let arrived = std::mem::take(&mut self.arrived);
        for (step, truth) in arrived {
            let stand_in = self
                .stand_ins
                .remove(&step)
                .expect("receive checked the stand-in exists");
            corr.axpy(truth.dt, &truth.fields)?;
            corr.axpy(-stand_in.dt, &stand_in.fields)?;
            self.push_history(step as i64, truth.fields);
            self.incorporated += 1;
        }
        Ok(corr)
    }

    fn push_history(&mut self, step: i64, truth: SourceFields) {
        match &self.last_true {
            Some((s, _)) if *s > step => {
                if self.prev_true.as_ref().is_none_or(|(p, _)| *p < step) {
                    self.prev_true = Some((step, truth));
                }
            }
            _ => {
                self.prev_true = self.last_true.take();
                self.last_true = Some((step, truth));
            }
        }
    }

    /// Emits the estimate for `step`: corrector over all newly arrived steps
    /// plus the extrapolation from the newest known truths.
    pub fn estimate_step(&mut self, step: u64, dt: f64) -> Result<SourceFields, EstimatorError> {
        if step != self.next_step {
            return Err(EstimatorError::ProtocolViolation(format!(
                "estimate requested for step {step}, expected {}",
                self.next_step
            )));
        }
        if !(dt > 0.0) {
            return Err(EstimatorError::ProtocolViolation(format!("dt must be > 0, got {dt}")));
        }
        let corr = self.take_corrector()?;
        let ext = self.extrapolate();
        let mut est = ext.clone();
        est.axpy(1.0 / dt, &corr)?;
        est.step_index = step;
        self.cumulative_estimated.axpy(dt, &est)?;
        self.stand_ins.insert(step, Stamped { dt, fields: ext });
        self.next_step = step + 1;
        Ok(est)
    }

    /// Same estimate in the per-step amount form `S_est = dS_corr + r S_ext`
    /// where `r` is the ratio of this step's dt to the previous one.
    pub fn estimate_step_scaled(
        &mut self,
        step: u64,
        dt_prev: f64,
        dt_ratio: f64,
    ) -> Result<SourceFields, EstimatorError> {
        self.estimate_step(step, dt_prev * dt_ratio)
    }

    /// A step coupled synchronously: the truth is used as its own estimate.
    pub fn record_synchronous(
        &mut self,
        step: u64,
        dt: f64,
        truth: SourceFields,
    ) -> Result<SourceFields, EstimatorError> {
        self.check_cells(&truth)?;
        if step != self.next_step {
            return Err(EstimatorError::ProtocolViolation(format!(
                "synchronous step {step}, expected {}",
                self.next_step
            )));
        }
        if !self.stand_ins.is_empty() || !self.arrived.is_empty() {
            return Err(EstimatorError::ProtocolViolation(
                "synchronous step while estimates are outstanding".into(),
            ));
        }
        self.cumulative_true.axpy(dt, &truth)?;
        self.cumulative_estimated.axpy(dt, &truth)?;
        self.push_history(step as i64, truth.clone());
        self.incorporated += 1;
        self.next_step = step + 1;
        Ok(truth)
    }

    /// Final catch-up after the last step: the corrector alone, as a rate
    /// over `dt`.
    pub fn flush(&mut self, dt: f64) -> Result<SourceFields, EstimatorError> {
        let mut corr = self.take_corrector()?;
        self.cumulative_estimated.add_assign_checked(&corr)?;
        corr.scale(1.0 / dt);
        corr.step_index = self.next_step;
        Ok(corr)
    }

    pub fn cumulative_true(&self) -> &SourceFields {
        &self.cumulative_true
    }

    pub fn cumulative_estimated(&self) -> &SourceFields {
        &self.cumulative_estimated
    }

    pub fn conservativity_report(&self) -> LedgerRecord {
        let t = self.cumulative_true.totals();
        let e = self.cumulative_estimated.totals();
        let mut diff = self.cumulative_estimated.clone();
        diff.sub_assign_checked(&self.cumulative_true)
            .expect("ledger fields share one box");
        LedgerRecord {
            cumulative_true: t,
            cumulative_estimated: e,
            difference: diff.totals(),
            max_cell_difference: diff.max_abs(),
            backlog_steps: self.backlog_steps(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    fn cells() -> CellBox {
        CellBox::new([0; 3], [1, 0, 0])
    }

    fn uniform(v: f64) -> SourceFields {
        let mut s = SourceFields::zeros(cells(), 0);
        for m in &mut s.momentum {
            *m = Vec3::new(v, 0.0, 0.0);
        }
        s.energy.iter_mut().for_each(|e| *e = v);
        s.vapor.iter_mut().for_each(|e| *e = v);
        s
    }

    fn est(mode: &str) -> Estimator {
        Estimator::new(extrapolator_registry().create(mode).unwrap(), cells())
    }

    fn val(s: &SourceFields) -> f64 {
        s.energy[0]
    }

    #[test]
    fn extrapolator_examples() {
        let reg = extrapolator_registry();
        let five = uniform(5.0);
        let three = uniform(3.0);
        let z = reg.create("zero").unwrap().extrapolate(cells(), Some(&five), Some(&three));
        assert!(z.is_zero());
        let c = reg.create("constant").unwrap().extrapolate(cells(), Some(&five), Some(&three));
        assert_eq!(val(&c), 5.0);
        let l = reg.create("linear").unwrap();
        assert_eq!(val(&l.extrapolate(cells(), Some(&five), Some(&three))), 7.0);
        assert_eq!(val(&l.extrapolate(cells(), Some(&five), None)), 5.0);
        assert!(l.extrapolate(cells(), None, None).is_zero());
    }

    #[test]
    fn corrector_example_six() {
        let mut e = est("constant");
        e.seed_history(uniform(4.0)).unwrap();
        let s0 = e.estimate_step(0, 1.0).unwrap();
        assert_eq!(val(&s0), 4.0);
        e.receive(0, 1.0, uniform(5.0)).unwrap();
        let s1 = e.estimate_step(1, 1.0).unwrap();
        assert_eq!(val(&s1), 6.0);
    }

    #[test]
    fn zero_mode_three_step_delay() {
        let mut e = est("zero");
        let s = 2.5;
        let mut emitted = Vec::new();
        for n in 0..3 {
            emitted.push(val(&e.estimate_step(n, 1.0).unwrap()));
        }
        for n in 0..3 {
            e.receive(n, 1.0, uniform(s)).unwrap();
        }
        // two steps behind in the ledger sense: received, not yet folded in
        emitted.push(val(&e.estimate_step(3, 1.0).unwrap()));
        assert_eq!(emitted, vec![0.0, 0.0, 0.0, 3.0 * s]);
    }

    #[test]
    fn ledger_mid_backlog() {
        let s = 1.5;
        let mut z = est("zero");
        z.estimate_step(0, 1.0).unwrap();
        z.estimate_step(1, 1.0).unwrap();
        z.receive(0, 1.0, uniform(s)).unwrap();
        z.receive(1, 1.0, uniform(s)).unwrap();
        assert_eq!(z.conservativity_report().difference.energy, -2.0 * s * 2.0);
        assert_eq!(z.conservativity_report().max_cell_difference, 2.0 * s);

        let mut c = est("constant");
        c.record_synchronous(0, 1.0, uniform(s)).unwrap();
        c.estimate_step(1, 1.0).unwrap();
        c.estimate_step(2, 1.0).unwrap();
        c.receive(1, 1.0, uniform(s)).unwrap();
        c.receive(2, 1.0, uniform(s)).unwrap();
        assert_eq!(c.conservativity_report().backlog_steps, 2);
        assert_eq!(c.conservativity_report().max_cell_difference, 0.0);
    }

    #[test]
    fn synchronous_fixed_point() {
        let mut e = est("constant");
        e.record_synchronous(0, 1.0, uniform(2.0)).unwrap();
        for n in 1..10 {
            let s = e.estimate_step(n, 1.0).unwrap();
            assert_eq!(val(&s), 2.0);
            e.receive(n, 1.0, uniform(2.0)).unwrap();
        }
        e.flush(1.0).unwrap();
        assert_eq!(e.backlog_steps(), 0);
        assert_eq!(e.conservativity_report().max_cell_difference, 0.0);
    }

    #[test]
    fn protocol_violations() {
        let mut e = est("constant");
        assert!(e.receive(0, 1.0, uniform(1.0)).is_err());
        e.estimate_step(0, 1.0).unwrap();
        e.receive(0, 1.0, uniform(1.0)).unwrap();
        assert!(e.receive(0, 1.0, uniform(1.0)).is_err());
        e.estimate_step(1, 1.0).unwrap();
        assert!(e.receive(0, 1.0, uniform(1.0)).is_err());
        assert!(e.estimate_step(5, 1.0).is_err());
    }

    #[test]
    fn linear_ramp_exact_from_step_three() {
        let mut e = est("linear");
        let truth = |n: u64| uniform(1.0 + 0.5 * n as f64);
        let mut out = Vec::new();
        for n in 0..10u64 {
            out.push(val(&e.estimate_step(n, 1.0).unwrap()));
            e.receive(n, 1.0, truth(n)).unwrap();
        }
        for n in 3..10 {
            assert!((out[n] - val(&truth(n as u64))).abs() < 1e-12, "{out:?}");
        }
    }

    #[test]
    fn variable_dt_scaling_matches_amount_form() {
        let mut a = est("constant");
        a.record_synchronous(0, 0.1, uniform(3.0)).unwrap();
        let s1 = a.estimate_step(1, 0.2).unwrap();
        a.receive(1, 0.2, uniform(4.0)).unwrap();
        let s2 = a.estimate_step(2, 0.05).unwrap();
        // amount form: corrector 0.2*(4-3) spread over dt=0.05, plus S_ext=4
        assert!((val(&s1) - 3.0).abs() < 1e-12);
        assert!((val(&s2) - (0.2 * 1.0 / 0.05 + 4.0)).abs() < 1e-12);
        a.receive(2, 0.05, uniform(4.0)).unwrap();
        a.flush(0.05).unwrap();
        assert!(a.conservativity_report().max_cell_difference < 1e-15);
    }
}
