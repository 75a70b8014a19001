use std::sync::{Arc, Mutex};

use crate::error::RuntimeError;

/// Completed-step counters of every Eulerian rank and Lagrangian worker.
/// Every update checks the bound against the partner on the other side.
#[derive(Debug, Clone)]
pub struct SkewClock {
    euler: Vec<u64>,
    lagrange: Vec<u64>,
    host_map: Vec<usize>,
    max_observed: u64,
    observations: u64,
}

pub type SharedSkew = Arc<Mutex<SkewClock>>;

pub const MAX_SKEW: u64 = 1;

impl SkewClock {
    pub fn new(n_ranks: usize, host_map: &[usize]) -> Self {
        SkewClock {
            euler: vec![0; n_ranks],
            lagrange: vec![0; host_map.len()],
            host_map: host_map.to_vec(),
            max_observed: 0,
            observations: 0,
        }
    }

    pub fn shared(n_ranks: usize, host_map: &[usize]) -> SharedSkew {
        Arc::new(Mutex::new(Self::new(n_ranks, host_map)))
    }

    pub fn max_observed(&self) -> u64 {
        self.max_observed
    }

    pub fn observations(&self) -> u64 {
        self.observations
    }

    fn check(&mut self, worker: usize) -> Result<(), RuntimeError> {
        let rank = self.host_map[worker];
        let (e, l) = (self.euler[rank], self.lagrange[worker]);
        let skew = e.abs_diff(l);
        self.max_observed = self.max_observed.max(skew);
        self.observations += 1;
        if skew > MAX_SKEW {
            return Err(RuntimeError::SkewViolation {
                rank,
                worker,
                euler: e,
                lagrange: l,
            });
        }
        Ok(())
    }

    pub fn set_euler(&mut self, rank: usize, steps: u64) -> Result<(), RuntimeError> {
        self.euler[rank] = steps;
        for w in 0..self.host_map.len() {
            if self.host_map[w] == rank {
                self.check(w)?;
            }
        }
        Ok(())
    }

    pub fn set_lagrange(&mut self, worker: usize, steps: u64) -> Result<(), RuntimeError> {
        self.lagrange[worker] = steps;
        self.check(worker)
    }
}

pub(crate) fn lock(s: &SharedSkew) -> std::sync::MutexGuard<'_, SkewClock> {
    s.lock().unwrap_or_else(|e| e.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_two_step_gap() {
        let mut c = SkewClock::new(2, &[1]);
        c.set_euler(1, 1).unwrap();
        c.set_lagrange(0, 1).unwrap();
        c.set_lagrange(0, 2).unwrap();
        // rank 0 hosts nobody
        c.set_euler(0, 7).unwrap();
        assert!(matches!(
            c.set_lagrange(0, 3),
            Err(RuntimeError::SkewViolation { rank: 1, worker: 0, euler: 1, lagrange: 3 })
        ));
        assert_eq!(c.max_observed(), 2);
    }
}
