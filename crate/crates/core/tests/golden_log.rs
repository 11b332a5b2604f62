//! Frozen event log for a small two-chain run with one mid-run node failure.
//!
//! The expected text in `data/two_chains_one_failure.log` was verified line
//! by line against the model semantics by hand:
//! - slot 0: the smaller chain transmits first on the shared uplink
//!   (2e6 bits / 2e6 bps = 1 s), the larger queues behind it (2.5 s);
//! - slot 1: chain 0 completes at t=7; chain 1 finishes both functions on
//!   u1 and pushes 3e6 of 5e6 bits toward g1 before the slot ends;
//! - slot 2: u1 fails mid-hop, chain 1 rolls back to its origin (the only
//!   surviving node it visited), voiding both completed functions because
//!   the data must be retransmitted from there, and the matching round
//!   re-places function 0 on u0;
//! - slots 3-5: reprocess on u0 (1e6 bps uplink fills the whole slot),
//!   match function 1 onto the recovered u1, and finish the final hop
//!   across a slot boundary (1.667e6 bits, then 3.333e6 bits).
//!
//! Any engine change that alters scheduling, arithmetic, or log formatting
//! shows up here as a diff against the verified trace.

use sagin_core::audit::{audit_event_log, AuditConfig};
use sagin_core::engine::{run_with_source, EngineParams, EngineSfc, StaticWorld};
use sagin_core::scenario::{Policy, SfcId};
use sagin_core::topology::{LinkKind, PhysId};
use std::collections::{BTreeMap, BTreeSet};

const EXPECTED: &str = include_str!("data/two_chains_one_failure.log");

fn fixture() -> (EngineParams, Vec<EngineSfc>, StaticWorld) {
    let g = PhysId::ground;
    let u = PhysId::uav;
    let links = vec![
        (g(0), u(0), 1e6),
        (g(0), u(1), 2e6),
        (u(0), u(1), 3e6),
        (u(0), g(1), 1e6),
        (u(1), g(1), 2e6),
    ];
    let fail: BTreeSet<PhysId> = [u(1)].into();
    let schedule = vec![BTreeSet::new(), BTreeSet::new(), fail, BTreeSet::new()];
    let params = EngineParams {
        slot_length_s: 5.0,
        compute_capacity_units: 3.0,
        storage_capacity_bits: 1.6e9,
        energy_budget_j: 1e5,
        compute_units_per_slot: 1.0,
        compute_energy_per_unit_j: 50.0,
        operation_power_w: 5.0,
        tx_power_w: BTreeMap::from([
            (LinkKind::G2U, 0.5),
            (LinkKind::U2U, 10.0),
            (LinkKind::U2G, 10.0),
        ]),
        rx_power_w: BTreeMap::new(),
        propulsion: None,
    };
    let sfcs = vec![
        EngineSfc {
            id: SfcId(0),
            origin_index: 0,
            destination_index: 1,
            data_bits: 2e6,
            sigma: vec![1.0],
        },
        EngineSfc {
            id: SfcId(1),
            origin_index: 0,
            destination_index: 1,
            data_bits: 5e6,
            sigma: vec![0.5, 0.5],
        },
    ];
    (params, sfcs, StaticWorld::new(5.0, 10, links, schedule))
}

#[test]
fn event_log_matches_the_hand_verified_trace() {
    let (params, sfcs, mut world) = fixture();
    let out = run_with_source(&mut world, &params, &sfcs, Policy::Frmg, 7, "golden".into());
    assert_eq!(out.event_log, EXPECTED, "event log drifted from the verified trace");
    assert_eq!(out.report.completed, 2);
    // Chain 0: first bit at t=0, done at t=7. Chain 1: first bit at t=1,
    // done at t=80/3. Sum of spans = 7 + 77/3.
    assert!((out.report.total_delay_s - (7.0 + 77.0 / 3.0)).abs() < 1e-6);
}

#[test]
fn the_verified_trace_audits_clean() {
    let (params, sfcs, _) = fixture();
    let cfg = AuditConfig::from_parts(&params, &sfcs, 10);
    let violations = audit_event_log(EXPECTED, &cfg);
    assert!(violations.is_empty(), "violations in the verified trace: {violations:?}");
}
