//! Seeded scheduling perturbation injected at instrumentation points.
//!
//! Each activity draws from its own ChaCha stream seeded by the plan seed
//! and the activity id, so one seed always yields the same delay sequence
//! for a given activity regardless of how activities interleave.

use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activity::{fmix64, ActivityId};

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationPlan {
    pub seed: u64,
    /// Upper bound of one injected sleep.
    pub max_delay: Duration,
    /// Chance that an instrumentation point sleeps at all; the remaining
    /// points yield the processor with the same chance.
    pub probability: f64,
}

impl PerturbationPlan {
    pub fn new(seed: u64) -> Self {
        PerturbationPlan {
            seed,
            max_delay: Duration::from_micros(200),
            probability: 0.1,
        }
    }

    pub fn with_max_delay(mut self, max_delay: Duration) -> Self {
        self.max_delay = max_delay;
        self
    }

    pub fn with_probability(mut self, probability: f64) -> Self {
        self.probability = probability.clamp(0.0, 1.0);
        self
    }

    pub(crate) fn for_activity(&self, id: ActivityId) -> Perturber {
        Perturber {
            rng: ChaCha8Rng::seed_from_u64(fmix64(self.seed ^ fmix64(id.0))),
            plan: self.clone(),
        }
    }
}

/// What an instrumentation point should do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Injection {
    None,
    Yield,
    Sleep(Duration),
}

impl Injection {
    pub(crate) fn apply(self) {
        match self {
            Injection::None => {}
            Injection::Yield => thread::yield_now(),
            Injection::Sleep(d) => thread::sleep(d),
        }
    }
}

#[derive(Debug)]
pub(crate) struct Perturber {
    rng: ChaCha8Rng,
    plan: PerturbationPlan,
}

impl Perturber {
    pub(crate) fn next(&mut self) -> Injection {
        if self.rng.gen_bool(self.plan.probability) {
            let max = self.plan.max_delay.as_nanos() as u64;
            Injection::Sleep(Duration::from_nanos(self.rng.gen_range(0..=max)))
        } else if self.rng.gen_bool(self.plan.probability) {
            Injection::Yield
        } else {
            Injection::None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence_per_activity() {
        let plan = PerturbationPlan::new(42).with_probability(0.5);
        let a: Vec<_> = {
            let mut p = plan.for_activity(ActivityId(7));
            (0..200).map(|_| p.next()).collect()
        };
        let b: Vec<_> = {
            let mut p = plan.for_activity(ActivityId(7));
            (0..200).map(|_| p.next()).collect()
        };
        assert_eq!(a, b);
        let other: Vec<_> = {
            let mut p = plan.for_activity(ActivityId(8));
            (0..200).map(|_| p.next()).collect()
        };
        assert_ne!(a, other);
        assert!(a.iter().any(|i| matches!(i, Injection::Sleep(_))));
        for i in &a {
            if let Injection::Sleep(d) = i {
                assert!(*d <= plan.max_delay);
            }
        }
    }
}
