//! Node-failure process.
//!
//! Failures are re-drawn on a fixed cadence: at every slot whose index is a
//! positive multiple of the update interval, a fresh batch of
//! `Poisson(lambda)` distinct nodes is sampled from the eligible layers and
//! *replaces* the previous failed set — nodes not re-drawn recover. Slot 0
//! never has failures. The draw uses its own random stream and depends only
//! on the node population, never on traffic, so every policy run under the
//! same seed sees the identical failure history.
//!
//! A fixed schedule variant supports hand-built instances: it maps slot
//! indexes to failed sets that stay in force until the next listed slot.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::scenario::{seeded_stream, FailureConfig, Geometry};
use crate::topology::{Layer, PhysId};

/// One Poisson draw, as a count. `lambda == 0` always yields 0.
pub fn poisson_draw(rng: &mut impl Rng, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(lambda).expect("lambda is positive and finite");
    dist.sample(rng) as u32
}

/// How failures unfold over a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailurePlan {
    /// Random batches, re-drawn every `update_interval_slots`.
    Sampled {
        lambda: f64,
        update_interval_slots: u32,
        eligible_layers: Vec<Layer>,
    },
    /// Explicit step schedule: the set listed at slot `t` is the failed set
    /// from `t` until the next listed slot. Empty before the first entry.
    Fixed { schedule: BTreeMap<u32, BTreeSet<PhysId>> },
}

impl FailurePlan {
    pub fn from_config(config: &FailureConfig) -> FailurePlan {
        FailurePlan::Sampled {
            lambda: config.lambda,
            update_interval_slots: config.update_interval_slots,
            eligible_layers: config.eligible_layers.clone(),
        }
    }
}

/// All nodes of the given layers present in the geometry, in id order.
pub fn eligible_pool(geometry: &Geometry, layers: &[Layer]) -> Vec<PhysId> {
    let mut pool = Vec::new();
    if layers.contains(&Layer::Ground) {
        pool.extend((0..geometry.ground_stations.len()).map(|i| PhysId::ground(i as u32)));
    }
    if layers.contains(&Layer::Uav) {
        pool.extend((0..geometry.uav_count).map(PhysId::uav));
    }
    if layers.contains(&Layer::Satellite) {
        pool.extend((0..geometry.satellites.len()).map(|i| PhysId::satellite(i as u32)));
    }
    pool
}

/// The evolving failed set. Call [`FailureProcess::update_for_slot`] once
/// per slot, in order.
#[derive(Debug)]
pub struct FailureProcess {
    plan: FailurePlan,
    rng: ChaCha12Rng,
    pool: Vec<PhysId>,
    current: BTreeSet<PhysId>,
}

impl FailureProcess {
    pub fn new(plan: FailurePlan, geometry: &Geometry, seed: u64) -> FailureProcess {
        let pool = match &plan {
            FailurePlan::Sampled { eligible_layers, .. } => eligible_pool(geometry, eligible_layers),
            FailurePlan::Fixed { .. } => Vec::new(),
        };
        FailureProcess { plan, rng: seeded_stream(seed, "failures"), pool, current: BTreeSet::new() }
    }

    pub fn failed(&self) -> &BTreeSet<PhysId> {
        &self.current
    }

    /// Advance the process to `slot`. Returns `true` when the failed set
    /// was re-drawn (even if the new set happens to equal the old one).
    pub fn update_for_slot(&mut self, slot: u32) -> bool {
        match &self.plan {
            FailurePlan::Sampled { lambda, update_interval_slots, .. } => {
                if slot == 0 || slot % update_interval_slots != 0 {
                    return false;
                }
                let k = (poisson_draw(&mut self.rng, *lambda) as usize).min(self.pool.len());
                // Partial Fisher-Yates over pool indexes: k distinct picks.
                let mut idx: Vec<usize> = (0..self.pool.len()).collect();
                for i in 0..k {
                    let j = self.rng.gen_range(i..idx.len());
                    idx.swap(i, j);
                }
                self.current = idx[..k].iter().map(|&i| self.pool[i]).collect();
                true
            }
            FailurePlan::Fixed { schedule } => {
                let active = schedule
                    .range(..=slot)
                    .next_back()
                    .map(|(_, set)| set.clone())
                    .unwrap_or_default();
                let changed = active != self.current;
                self.current = active;
                changed
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn sampled_plan() -> FailurePlan {
        FailurePlan::Sampled {
            lambda: 2.0,
            update_interval_slots: 3,
            eligible_layers: vec![Layer::Uav, Layer::Satellite],
        }
    }

    #[test]
    fn fixed_schedule_is_a_step_function() {
        let fail_at_2: BTreeSet<PhysId> = [PhysId::uav(1)].into();
        let fail_at_5: BTreeSet<PhysId> = [PhysId::uav(2), PhysId::satellite(0)].into();
        let schedule = BTreeMap::from([(2u32, fail_at_2.clone()), (5u32, fail_at_5.clone())]);
        let geometry = Geometry::default();
        let mut process = FailureProcess::new(FailurePlan::Fixed { schedule }, &geometry, 0);
        let mut seen = Vec::new();
        for slot in 0..8 {
            process.update_for_slot(slot);
            seen.push(process.failed().clone());
        }
        assert!(seen[0].is_empty() && seen[1].is_empty());
        assert_eq!(seen[2], fail_at_2);
        assert_eq!(seen[4], fail_at_2);
        assert_eq!(seen[5], fail_at_5);
        assert_eq!(seen[7], fail_at_5);
    }

    #[test]
    fn sampled_redraws_only_at_interval_multiples() {
        let sc = Scenario::default();
        let mut process = FailureProcess::new(sampled_plan(), &sc.geometry, 9);
        for slot in 0..12 {
            let changed = process.update_for_slot(slot);
            assert_eq!(changed, slot > 0 && slot % 3 == 0, "slot {slot}");
            if slot < 3 {
                assert!(process.failed().is_empty());
            }
        }
    }

    #[test]
    fn sampled_history_replays_exactly_per_seed() {
        let sc = Scenario::default();
        let run = |seed| {
            let mut process = FailureProcess::new(sampled_plan(), &sc.geometry, seed);
            (0..30)
                .map(|slot| {
                    process.update_for_slot(slot);
                    process.failed().clone()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn sampled_sets_stay_within_eligible_layers() {
        let sc = Scenario::default();
        let plan = FailurePlan::Sampled {
            lambda: 8.0,
            update_interval_slots: 1,
            eligible_layers: vec![Layer::Uav],
        };
        let mut process = FailureProcess::new(plan, &sc.geometry, 100);
        let mut recovered_at_least_once = false;
        let mut previous: BTreeSet<PhysId> = BTreeSet::new();
        for slot in 0..40 {
            process.update_for_slot(slot);
            for id in process.failed() {
                assert_eq!(id.layer, Layer::Uav);
                assert!(id.index < sc.geometry.uav_count);
            }
            if previous.difference(process.failed()).next().is_some() {
                recovered_at_least_once = true;
            }
            previous = process.failed().clone();
        }
        assert!(recovered_at_least_once, "fresh batches must let old failures recover");
    }

    #[test]
    fn zero_lambda_never_fails_anything() {
        let sc = Scenario::default();
        let plan = FailurePlan::Sampled {
            lambda: 0.0,
            update_interval_slots: 1,
            eligible_layers: vec![Layer::Uav],
        };
        let mut process = FailureProcess::new(plan, &sc.geometry, 5);
        for slot in 0..20 {
            process.update_for_slot(slot);
            assert!(process.failed().is_empty());
        }
    }

    #[test]
    fn draw_count_tracks_lambda() {
        let mut rng = seeded_stream(77, "failures");
        let n = 20_000;
        let sum: u64 = (0..n).map(|_| poisson_draw(&mut rng, 2.0) as u64).sum();
        let mean = sum as f64 / n as f64;
        assert!((mean - 2.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn batch_size_is_capped_by_the_pool() {
        let mut geometry = Geometry::default();
        geometry.uav_count = 2;
        geometry.satellites.clear();
        let plan = FailurePlan::Sampled {
            lambda: 50.0,
            update_interval_slots: 1,
            eligible_layers: vec![Layer::Uav, Layer::Satellite],
        };
        let mut process = FailureProcess::new(plan, &geometry, 1);
        for slot in 1..10 {
            process.update_for_slot(slot);
            assert!(process.failed().len() <= 2);
        }
    }
}
