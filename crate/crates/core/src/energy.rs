//! UAV and satellite energy models plus the per-node energy ledger.
//!
//! UAV flight power splits into a hover term (rotor momentum theory) and a
//! move term that interpolates between hover and the configured max-speed
//! draw. Communication energy on every layer is transmit (or receive) power
//! times time-on-air, `P * bits / rate`. Satellites additionally accrue a
//! constant operation power per slot.
//!
//! The ledger records six categories per node. Only `compute + operation`
//! draw down the enforced budget: flight and communication costs are
//! reported but do not gate admission, mirroring how the energy constraint
//! is stated over compute and operation terms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::PhysId;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be nonnegative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("transmission on a zero-rate link cannot be accounted")]
    ZeroRate,
}

fn positive(name: &'static str, value: f64) -> Result<f64, EnergyError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(EnergyError::NonPositive { name, value })
    }
}

fn nonnegative(name: &'static str, value: f64) -> Result<f64, EnergyError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(EnergyError::Negative { name, value })
    }
}

/// Hover power from rotor momentum theory:
/// `sqrt((g m)^3 / (2 pi rho r^2 n))`, W.
pub fn hover_power(
    gravity: f64,
    mass_kg: f64,
    air_density: f64,
    rotor_radius_m: f64,
    rotor_count: f64,
) -> Result<f64, EnergyError> {
    positive("gravity", gravity)?;
    positive("mass_kg", mass_kg)?;
    positive("air_density", air_density)?;
    positive("rotor_radius_m", rotor_radius_m)?;
    positive("rotor_count", rotor_count)?;
    let weight = gravity * mass_kg;
    let denom = 2.0 * std::f64::consts::PI * air_density * rotor_radius_m.powi(2) * rotor_count;
    Ok((weight.powi(3) / denom).sqrt())
}

/// Incremental moving power `(v / v_max) * (P_max - P_hover)`, W.
///
/// Negative when the configured max-speed draw sits below hover power; the
/// per-slot flight energy [`path_energy`] stays positive because motion can
/// cover at most `v * tau` meters per slot.
pub fn move_power(
    speed_mps: f64,
    max_speed_mps: f64,
    max_speed_power_w: f64,
    hover_power_w: f64,
) -> Result<f64, EnergyError> {
    positive("speed_mps", speed_mps)?;
    positive("max_speed_mps", max_speed_mps)?;
    positive("max_speed_power_w", max_speed_power_w)?;
    positive("hover_power_w", hover_power_w)?;
    Ok((speed_mps / max_speed_mps) * (max_speed_power_w - hover_power_w))
}

/// Flight energy of one slot: move power over the travel time plus hover
/// power over the whole slot, J.
pub fn path_energy(
    dist_m: f64,
    speed_mps: f64,
    max_speed_mps: f64,
    max_speed_power_w: f64,
    hover_power_w: f64,
    slot_length_s: f64,
) -> Result<f64, EnergyError> {
    nonnegative("dist_m", dist_m)?;
    positive("slot_length_s", slot_length_s)?;
    let hover_term = hover_power_w * slot_length_s;
    if dist_m == 0.0 {
        return Ok(hover_term);
    }
    let p_move = move_power(speed_mps, max_speed_mps, max_speed_power_w, hover_power_w)?;
    Ok(p_move * (dist_m / speed_mps) + hover_term)
}

/// Time-on-air energy `P * bits / rate`, J. Used for transmit energy on all
/// layers and for satellite reception energy.
pub fn comm_energy(power_w: f64, bits: f64, rate_bps: f64) -> Result<f64, EnergyError> {
    nonnegative("power_w", power_w)?;
    nonnegative("bits", bits)?;
    if !(rate_bps.is_finite() && rate_bps > 0.0) {
        return Err(EnergyError::ZeroRate);
    }
    Ok(power_w * bits / rate_bps)
}

/// Idle operation energy of one slot, J.
pub fn operation_energy(operation_power_w: f64, slot_length_s: f64) -> f64 {
    operation_power_w * slot_length_s
}

/// Energy spent by one node, split by cause. All entries accumulate
/// monotonically; only `compute + operation` count against the budget.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeEnergy {
    pub path_j: f64,
    pub reception_j: f64,
    pub transmission_j: f64,
    pub operation_j: f64,
    pub compute_j: f64,
}

impl NodeEnergy {
    pub fn total_j(&self) -> f64 {
        self.path_j
            + self.reception_j
            + self.transmission_j
            + self.operation_j
            + self.compute_j
    }

    /// The budget-relevant share: compute plus operation.
    pub fn enforced_j(&self) -> f64 {
        self.compute_j + self.operation_j
    }
}

/// Per-node energy accounts with an enforced compute+operation budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyLedger {
    budget_j: f64,
    accounts: BTreeMap<PhysId, NodeEnergy>,
}

impl EnergyLedger {
    pub fn new(budget_j: f64) -> EnergyLedger {
        EnergyLedger { budget_j, accounts: BTreeMap::new() }
    }

    pub fn budget_j(&self) -> f64 {
        self.budget_j
    }

    pub fn node(&self, id: PhysId) -> NodeEnergy {
        self.accounts.get(&id).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PhysId, &NodeEnergy)> {
        self.accounts.iter()
    }

    fn entry(&mut self, id: PhysId) -> &mut NodeEnergy {
        self.accounts.entry(id).or_default()
    }

    pub fn add_path(&mut self, id: PhysId, joules: f64) {
        debug_assert!(joules >= 0.0);
        self.entry(id).path_j += joules;
    }

    pub fn add_reception(&mut self, id: PhysId, joules: f64) {
        debug_assert!(joules >= 0.0);
        self.entry(id).reception_j += joules;
    }

    pub fn add_transmission(&mut self, id: PhysId, joules: f64) {
        debug_assert!(joules >= 0.0);
        self.entry(id).transmission_j += joules;
    }

    pub fn add_operation(&mut self, id: PhysId, joules: f64) {
        debug_assert!(joules >= 0.0);
        self.entry(id).operation_j += joules;
    }

    /// Try to debit the energy for processing `sigma_units` of compute
    /// demand. Debits and returns true when the enforced total stays within
    /// budget; otherwise leaves the ledger untouched and returns false.
    pub fn charge_compute(&mut self, id: PhysId, sigma_units: f64, energy_per_unit_j: f64) -> bool {
        debug_assert!(sigma_units > 0.0 && energy_per_unit_j >= 0.0);
        let cost = sigma_units * energy_per_unit_j;
        let budget = self.budget_j;
        let account = self.entry(id);
        if account.enforced_j() + cost <= budget {
            account.compute_j += cost;
            true
        } else {
            false
        }
    }

    /// Whether a prospective compute charge would fit the enforced budget.
    pub fn can_charge_compute(&self, id: PhysId, sigma_units: f64, energy_per_unit_j: f64) -> bool {
        self.node(id).enforced_j() + sigma_units * energy_per_unit_j <= self.budget_j
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Layer;
    use proptest::prelude::*;

    fn uav(i: u32) -> PhysId {
        PhysId { layer: Layer::Uav, index: i }
    }

    #[test]
    fn hover_power_matches_reference_rotor() {
        let p = hover_power(9.8, 2.0, 1.225, 0.2, 4.0).unwrap();
        assert!((p - 78.192_686_958_680_81).abs() < 1e-9);
    }

    #[test]
    fn hover_power_grows_with_mass() {
        let light = hover_power(9.8, 1.0, 1.225, 0.2, 4.0).unwrap();
        let heavy = hover_power(9.8, 3.0, 1.225, 0.2, 4.0).unwrap();
        assert!(heavy > light);
    }

    #[test]
    fn move_power_endpoint_at_max_speed() {
        let hover = 78.0;
        let p = move_power(12.0, 12.0, 5.0, hover).unwrap();
        assert!((p - (5.0 - hover)).abs() < 1e-12);
    }

    #[test]
    fn full_speed_slot_energy_equals_max_power_times_slot() {
        // At v = v_max for a whole slot the hover and move terms collapse
        // to P_max * tau.
        let hover = hover_power(9.8, 2.0, 1.225, 0.2, 4.0).unwrap();
        let e = path_energy(60.0, 12.0, 12.0, 5.0, hover, 5.0).unwrap();
        assert!((e - 25.0).abs() < 1e-9);
    }

    #[test]
    fn slot_energy_is_positive_even_with_negative_move_power() {
        let hover = hover_power(9.8, 2.0, 1.225, 0.2, 4.0).unwrap();
        for dist in [0.0, 10.0, 30.0, 60.0] {
            let e = path_energy(dist, 12.0, 12.0, 5.0, hover, 5.0).unwrap();
            assert!(e > 0.0, "dist {dist}: {e}");
        }
    }

    #[test]
    fn comm_energy_scales_with_bits_over_rate() {
        assert_eq!(comm_energy(10.0, 4e8, 1e8).unwrap(), 40.0);
        assert_eq!(comm_energy(20.0, 8e8, 2e8).unwrap(), 80.0);
    }

    #[test]
    fn zero_rate_transmission_is_an_error() {
        assert_eq!(comm_energy(10.0, 1e8, 0.0).unwrap_err(), EnergyError::ZeroRate);
    }

    #[test]
    fn charge_accepts_exactly_to_budget_then_rejects() {
        let mut ledger = EnergyLedger::new(100.0);
        assert!(ledger.charge_compute(uav(0), 1.0, 50.0));
        assert!(ledger.charge_compute(uav(0), 1.0, 50.0));
        assert_eq!(ledger.node(uav(0)).compute_j, 100.0);
        assert!(!ledger.charge_compute(uav(0), 0.1, 50.0));
        assert_eq!(ledger.node(uav(0)).compute_j, 100.0, "rejection must not mutate");
    }

    #[test]
    fn operation_draws_down_the_same_budget_as_compute() {
        let mut ledger = EnergyLedger::new(100.0);
        ledger.add_operation(uav(1), 80.0);
        assert!(!ledger.charge_compute(uav(1), 1.0, 50.0));
        assert!(ledger.charge_compute(uav(1), 0.4, 50.0));
        assert_eq!(ledger.node(uav(1)).enforced_j(), 100.0);
    }

    #[test]
    fn path_and_transmission_do_not_gate_compute() {
        let mut ledger = EnergyLedger::new(100.0);
        ledger.add_path(uav(2), 1e6);
        ledger.add_transmission(uav(2), 1e6);
        assert!(ledger.charge_compute(uav(2), 2.0, 50.0));
    }

    proptest! {
        #[test]
        fn ledger_is_monotone_and_never_exceeds_budget(
            charges in proptest::collection::vec((0.1f64..3.0, 0.0f64..80.0), 1..60)
        ) {
            let budget = 500.0;
            let mut ledger = EnergyLedger::new(budget);
            let mut last_total = 0.0;
            for (sigma, op) in charges {
                ledger.add_operation(uav(0), op);
                let _ = ledger.charge_compute(uav(0), sigma, 50.0);
                let account = ledger.node(uav(0));
                let total = account.total_j();
                prop_assert!(total >= last_total, "ledger must be monotone");
                // Compute debits respect whatever headroom operation left.
                prop_assert!(
                    account.compute_j <= budget + 1e-9,
                    "accepted compute beyond budget"
                );
                last_total = total;
            }
        }
    }
}
