//! The per-slot simulation loop.
//!
//! Time advances in slots, but work inside a slot runs in continuous time:
//! every service is always doing exactly one thing — transmitting a burst,
//! processing a function, or sitting idle — and a wake-up heap drives the
//! transitions. Network state (positions, failures, link rates) changes
//! only at slot boundaries, where the engine closes open bursts, applies
//! failures and rollbacks, runs the recovery policy, and then re-admits
//! work in policy order.
//!
//! Scheduling rules, all deterministic:
//! - A service's data moves hop by hop as one bundle; the sender holds the
//!   bundle until the receiving node has all of it.
//! - Links serialize: within a slot a link serves one burst at a time, in
//!   the order requests arrive (boundary batches ordered by the policy's
//!   admission comparator, id-tied).
//! - Compute capacity is slot-grained: units taken by a processing run stay
//!   taken until the next boundary even if the run ends mid-slot, so the
//!   per-slot capacity sum audit can never be violated by reuse.
//! - Storage is gated at hop commit: the receiving node must fit the whole
//!   bundle next to its residents and standing reservations.
//! - Node energy budgets gate processing admissions and per-slot operation;
//!   a node that cannot afford its next slot of operation powers off for
//!   the rest of the run.
//!
//! Delay accounting runs from the first transmission start to completion
//! (or the horizon). Transmission and processing buckets sum the surviving
//! work intervals; a full slot spent idle counts one slot of storage;
//! failure-voided work with a redeployed function counts as redeployment;
//! everything else lands in the residual bucket, which is nonnegative by
//! construction.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::LinkBudget;
use crate::energy::{self, EnergyLedger};
use crate::failure::{FailurePlan, FailureProcess};
use crate::pathing::{shortest_route, time_to_destination};
use crate::recovery::{
    match_recover, AffectClass, RecoveryRequest, RequestOrder,
};
use crate::report::{
    AuditVerdict, EnergyReport, FailureRecord, MatchingStats, RunReport, SfcOutcome, SlotStats,
};
use crate::scenario::{seeded_stream, Policy, Scenario, ScenarioError, SfcId};
use crate::topology::{
    build_slot_graph, init_uav_positions, step_uav_positions, Layer, Link, LinkKind, NodeId,
    PhysId, SlotGraph, SlotNode, SlotPositions, TopologyError,
};

const EPS: f64 = 1e-9;

/// Per-service delay, split by cause. `total_s` runs from the first
/// transmission start to completion (horizon end for unfinished services)
/// and equals the sum of the five buckets exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayBreakdown {
    pub transmission_s: f64,
    pub processing_s: f64,
    pub storage_s: f64,
    pub redeploy_s: f64,
    pub other_s: f64,
    pub total_s: f64,
}

/// A finished run: the structured report plus the raw event log.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub event_log: String,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// What one slot looks like to the engine.
pub struct SlotView {
    pub graph: SlotGraph,
    pub failed: BTreeSet<PhysId>,
    /// Whether this boundary re-drew the failure set.
    pub failure_update: bool,
    /// Distance each UAV covered entering this slot, for propulsion energy.
    pub moved_m: BTreeMap<PhysId, f64>,
}

/// Supplies per-slot world state. Implementations must be deterministic
/// functions of their construction inputs.
pub trait SlotSource {
    fn slot_count(&self) -> u32;
    /// Called once per slot, in ascending slot order.
    fn view(&mut self, slot: u32) -> SlotView;
    /// Digest over the mobility and failure history produced so far.
    fn trace_digest(&self) -> String;
}

/// The physical parameters the engine needs, decoupled from the scenario
/// schema so hand-built instances can drive the same loop.
#[derive(Debug, Clone)]
pub struct EngineParams {
    pub slot_length_s: f64,
    pub compute_capacity_units: f64,
    pub storage_capacity_bits: f64,
    pub energy_budget_j: f64,
    /// Processing speed, capacity units per slot.
    pub compute_units_per_slot: f64,
    pub compute_energy_per_unit_j: f64,
    pub operation_power_w: f64,
    pub tx_power_w: BTreeMap<LinkKind, f64>,
    pub rx_power_w: BTreeMap<LinkKind, f64>,
    pub propulsion: Option<Propulsion>,
}

#[derive(Debug, Clone, Copy)]
pub struct Propulsion {
    pub speed_mps: f64,
    pub max_speed_mps: f64,
    pub max_speed_power_w: f64,
    pub hover_power_w: f64,
}

impl EngineParams {
    pub fn from_scenario(sc: &Scenario) -> EngineParams {
        let p = &sc.params;
        let hover = energy::hover_power(
            p.gravity,
            p.uav_mass_kg,
            p.air_density,
            p.propeller_radius_m,
            p.propeller_count,
        )
        .expect("validated parameters");
        EngineParams {
            slot_length_s: sc.time.slot_length_s,
            compute_capacity_units: p.node_compute_capacity,
            storage_capacity_bits: p.node_storage_capacity_bits,
            energy_budget_j: p.node_energy_capacity_j,
            compute_units_per_slot: p.compute_ability_per_slot,
            compute_energy_per_unit_j: p.compute_energy_per_unit_j,
            operation_power_w: p.operation_power_w,
            tx_power_w: BTreeMap::from([
                (LinkKind::G2U, p.tx_power_ground_w),
                (LinkKind::U2U, p.tx_power_uu_w),
                (LinkKind::U2G, p.tx_power_uav_w),
                (LinkKind::U2S, p.tx_power_us_w),
                (LinkKind::S2S, p.tx_power_ss_w),
                (LinkKind::S2G, p.tx_power_sg_w),
            ]),
            rx_power_w: BTreeMap::from([
                (LinkKind::U2S, p.rx_power_us_w),
                (LinkKind::S2S, p.rx_power_ss_w),
            ]),
            propulsion: Some(Propulsion {
                speed_mps: p.uav_speed_mps,
                max_speed_mps: p.uav_max_speed_mps,
                max_speed_power_w: p.uav_max_speed_power_w,
                hover_power_w: hover,
            }),
        }
    }
}

/// One service chain as the engine consumes it.
#[derive(Debug, Clone)]
pub struct EngineSfc {
    pub id: SfcId,
    pub origin_index: usize,
    pub destination_index: usize,
    pub data_bits: f64,
    pub sigma: Vec<f64>,
}

/// Mobility- and failure-driven world built from a scenario.
pub struct ScenarioWorld {
    slot_count: u32,
    slot_length_s: f64,
    uav_altitude_m: f64,
    uav_speed_mps: f64,
    geometry: crate::scenario::Geometry,
    budget: LinkBudget,
    uav_xy: Vec<[f64; 2]>,
    move_rng: ChaCha12Rng,
    failures: FailureProcess,
    hasher: Sha256,
}

impl ScenarioWorld {
    pub fn new(sc: &Scenario) -> Result<ScenarioWorld, TopologyError> {
        let mut init_rng = seeded_stream(sc.seed, "uav-init");
        let uav_xy = init_uav_positions(&sc.geometry, &mut init_rng)?;
        Ok(ScenarioWorld {
            slot_count: sc.time.slot_count,
            slot_length_s: sc.time.slot_length_s,
            uav_altitude_m: sc.params.uav_altitude_m,
            uav_speed_mps: sc.params.uav_speed_mps,
            geometry: sc.geometry.clone(),
            budget: LinkBudget::new(&sc.params, &sc.geometry),
            uav_xy,
            move_rng: seeded_stream(sc.seed, "uav-move"),
            failures: FailureProcess::new(
                FailurePlan::from_config(&sc.failure),
                &sc.geometry,
                sc.seed,
            ),
            hasher: Sha256::new(),
        })
    }
}

impl SlotSource for ScenarioWorld {
    fn slot_count(&self) -> u32 {
        self.slot_count
    }

    fn view(&mut self, slot: u32) -> SlotView {
        let mut moved_m = BTreeMap::new();
        if slot > 0 {
            // Nodes failed during the previous slot did not move.
            let frozen: BTreeSet<u32> = self
                .failures
                .failed()
                .iter()
                .filter(|id| id.layer == Layer::Uav)
                .map(|id| id.index)
                .collect();
            let moved = step_uav_positions(
                &mut self.uav_xy,
                &self.geometry,
                self.uav_speed_mps,
                self.slot_length_s,
                &frozen,
                &mut self.move_rng,
            );
            for (i, d) in moved.iter().enumerate() {
                if !frozen.contains(&(i as u32)) {
                    moved_m.insert(PhysId::uav(i as u32), *d);
                }
            }
        } else {
            for i in 0..self.uav_xy.len() {
                moved_m.insert(PhysId::uav(i as u32), 0.0);
            }
        }
        let failure_update = self.failures.update_for_slot(slot);
        let failed = self.failures.failed().clone();
        let t = slot as f64 * self.slot_length_s;
        let positions =
            SlotPositions::compute(&self.geometry, &self.uav_xy, self.uav_altitude_m, t);
        let graph = build_slot_graph(slot, self.slot_count, &positions, &failed, &self.budget);

        self.hasher.update(slot.to_le_bytes());
        for xy in &self.uav_xy {
            self.hasher.update(xy[0].to_le_bytes());
            self.hasher.update(xy[1].to_le_bytes());
        }
        for id in &failed {
            self.hasher.update(id.to_string().as_bytes());
        }

        SlotView { graph, failed, failure_update, moved_m }
    }

    fn trace_digest(&self) -> String {
        let digest = self.hasher.clone().finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A hand-built world: static per-slot link lists and a fixed failure
/// schedule. Positions are irrelevant; rates are given directly.
pub struct StaticWorld {
    pub slot_length_s: f64,
    /// `(from, to, rate_bps)` transmission links available while both ends
    /// are live.
    pub links: Vec<(PhysId, PhysId, f64)>,
    /// Failed set per slot (index = slot); missing slots mean no failures.
    pub failed_by_slot: Vec<BTreeSet<PhysId>>,
    pub slot_count: u32,
    hasher: Sha256,
}

impl StaticWorld {
    pub fn new(
        slot_length_s: f64,
        slot_count: u32,
        links: Vec<(PhysId, PhysId, f64)>,
        failed_by_slot: Vec<BTreeSet<PhysId>>,
    ) -> StaticWorld {
        StaticWorld { slot_length_s, links, failed_by_slot, slot_count, hasher: Sha256::new() }
    }

    fn node_ids(&self) -> BTreeSet<PhysId> {
        self.links.iter().flat_map(|&(a, b, _)| [a, b]).collect()
    }
}

impl SlotSource for StaticWorld {
    fn slot_count(&self) -> u32 {
        self.slot_count
    }

    fn view(&mut self, slot: u32) -> SlotView {
        let failed = self.failed_by_slot.get(slot as usize).cloned().unwrap_or_default();
        let previous = if slot == 0 {
            BTreeSet::new()
        } else {
            self.failed_by_slot.get(slot as usize - 1).cloned().unwrap_or_default()
        };
        let nodes: Vec<SlotNode> = self
            .node_ids()
            .into_iter()
            .filter(|id| !failed.contains(id))
            .map(|phys| SlotNode { phys, position_m: [0.0; 3] })
            .collect();
        let mut links: Vec<Link> = Vec::new();
        for &(from, to, rate_bps) in &self.links {
            if failed.contains(&from) || failed.contains(&to) {
                continue;
            }
            let kind = LinkKind::between(from.layer, to.layer).expect("valid layer pair");
            links.push(Link {
                from: NodeId { phys: from, slot },
                to: NodeId { phys: to, slot },
                kind,
                rate_bps,
                distance_m: 0.0,
            });
        }
        if slot + 1 < self.slot_count {
            for node in &nodes {
                links.push(Link {
                    from: NodeId { phys: node.phys, slot },
                    to: NodeId { phys: node.phys, slot: slot + 1 },
                    kind: LinkKind::Storage,
                    rate_bps: 0.0,
                    distance_m: 0.0,
                });
            }
        }
        self.hasher.update(slot.to_le_bytes());
        for id in &failed {
            self.hasher.update(id.to_string().as_bytes());
        }
        SlotView {
            graph: SlotGraph::assemble(slot, nodes, links),
            failed: &failed | &BTreeSet::new(),
            failure_update: slot > 0 && failed != previous,
            moved_m: BTreeMap::new(),
        }
    }

    fn trace_digest(&self) -> String {
        let digest = self.hasher.clone().finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Heap key: total-ordered simulation time.
#[derive(PartialEq)]
struct TimeKey(f64);
impl Eq for TimeKey {}
impl PartialOrd for TimeKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for TimeKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Act {
    /// Bundle at `location`, nothing scheduled; retried at wake/boundary.
    Idle,
    /// Waiting for compute admission at its host (= location).
    Queued,
    Processing { vnf: usize, sigma: f64, start_s: f64, end_s: f64 },
    /// Mid-hop, no burst running (between bursts or awaiting the link).
    HopPending { to: PhysId, bits_left: f64, hop_start_s: f64 },
    /// A burst is on the air.
    Transmitting {
        to: PhysId,
        kind: LinkKind,
        rate_bps: f64,
        bits_left: f64,
        burst_start_s: f64,
        burst_end_s: f64,
        burst_bits: f64,
        hop_start_s: f64,
    },
    Done,
}

#[derive(Debug, Clone)]
struct Visit {
    node: PhysId,
    depart_s: Option<f64>,
}

#[derive(Debug)]
struct SfcRt {
    id: SfcId,
    origin: PhysId,
    destination: PhysId,
    origin_index: usize,
    destination_index: usize,
    data_bits: f64,
    sigma: Vec<f64>,
    host: Vec<Option<PhysId>>,
    /// Surviving completion (time, node) per function.
    done: Vec<Option<(f64, PhysId)>>,
    w_flag: Vec<bool>,
    location: PhysId,
    visits: Vec<Visit>,
    act: Act,
    active_this_slot: bool,
    first_tx_s: Option<f64>,
    completion_s: Option<f64>,
    completed: bool,
    tx_spans: Vec<(f64, f64)>,
    proc_spans: Vec<(f64, f64)>,
    store_slots: u32,
    redeploy_s: f64,
}

impl SfcRt {
    fn vnf_done(&self) -> usize {
        self.done.iter().take_while(|d| d.is_some()).count()
    }

    /// Remove surviving work spans starting at or after `t`; returns the
    /// voided duration.
    fn void_spans_since(&mut self, t: f64) -> f64 {
        let mut voided = 0.0;
        for spans in [&mut self.tx_spans, &mut self.proc_spans] {
            spans.retain(|&(s, e)| {
                if s >= t - EPS {
                    voided += e - s;
                    false
                } else {
                    true
                }
            });
        }
        voided
    }
}

struct Engine<'a> {
    p: &'a EngineParams,
    policy: Policy,
    seed: u64,
    scenario_digest: String,
    sfcs: Vec<SfcRt>,
    versions: Vec<u64>,
    heap: BinaryHeap<Reverse<(TimeKey, SfcId, u64)>>,
    // Slot-transient state.
    slot: u32,
    slot_start: f64,
    slot_end: f64,
    graph: SlotGraph,
    failed: BTreeSet<PhysId>,
    link_cursor: BTreeMap<(PhysId, PhysId), f64>,
    used_compute: BTreeMap<PhysId, f64>,
    closed_nodes: BTreeSet<PhysId>,
    // Persistent state.
    storage_reserved: BTreeMap<SfcId, (PhysId, f64)>,
    compute_reserved: BTreeMap<SfcId, (PhysId, f64)>,
    energy: EnergyLedger,
    energy_dead: BTreeSet<PhysId>,
    policy_rng: Option<ChaCha12Rng>,
    log: String,
    slot_stats: Vec<SlotStats>,
    failure_trace: Vec<FailureRecord>,
    matching: MatchingStats,
}

/// Run a scenario end to end.
pub fn run_scenario(sc: &Scenario) -> Result<RunOutput, EngineError> {
    sc.validate()?;
    let mut world = ScenarioWorld::new(sc)?;
    let params = EngineParams::from_scenario(sc);
    let sfcs: Vec<EngineSfc> = sc
        .realize_sfcs()
        .into_iter()
        .map(|r| EngineSfc {
            id: r.id,
            origin_index: r.origin,
            destination_index: r.destination,
            data_bits: r.data_bits,
            sigma: r.sigma,
        })
        .collect();
    Ok(run_with_source(&mut world, &params, &sfcs, sc.policy, sc.seed, sc.digest()))
}

/// Run the slot loop against any world. Public so hand-built instances and
/// the exact solver can drive the identical engine.
pub fn run_with_source(
    source: &mut dyn SlotSource,
    params: &EngineParams,
    sfcs: &[EngineSfc],
    policy: Policy,
    seed: u64,
    scenario_digest: String,
) -> RunOutput {
    let mut engine = Engine::new(params, sfcs, policy, seed, scenario_digest);
    engine.run(source)
}

impl<'a> Engine<'a> {
    fn new(
        p: &'a EngineParams,
        sfcs: &[EngineSfc],
        policy: Policy,
        seed: u64,
        scenario_digest: String,
    ) -> Engine<'a> {
        assert!(
            sfcs.iter().enumerate().all(|(i, s)| s.id.0 as usize == i),
            "service ids must be dense and zero-based"
        );
        let sfcs: Vec<SfcRt> = sfcs
            .iter()
            .map(|s| {
                let origin = PhysId::ground(s.origin_index as u32);
                SfcRt {
                    id: s.id,
                    origin,
                    destination: PhysId::ground(s.destination_index as u32),
                    origin_index: s.origin_index,
                    destination_index: s.destination_index,
                    data_bits: s.data_bits,
                    sigma: s.sigma.clone(),
                    host: vec![None; s.sigma.len()],
                    done: vec![None; s.sigma.len()],
                    w_flag: vec![false; s.sigma.len()],
                    location: origin,
                    visits: vec![Visit { node: origin, depart_s: None }],
                    act: Act::Idle,
                    active_this_slot: false,
                    first_tx_s: None,
                    completion_s: None,
                    completed: false,
                    tx_spans: Vec::new(),
                    proc_spans: Vec::new(),
                    store_slots: 0,
                    redeploy_s: 0.0,
                }
            })
            .collect();
        let policy_rng = match policy {
            Policy::Rssp => Some(seeded_stream(seed, "policy-rssp")),
            Policy::Rsnt => Some(seeded_stream(seed, "policy-rsnt")),
            _ => None,
        };
        let versions = vec![0; sfcs.len()];
        Engine {
            p,
            policy,
            seed,
            scenario_digest,
            sfcs,
            versions,
            heap: BinaryHeap::new(),
            slot: 0,
            slot_start: 0.0,
            slot_end: p.slot_length_s,
            graph: SlotGraph::assemble(0, Vec::new(), Vec::new()),
            failed: BTreeSet::new(),
            link_cursor: BTreeMap::new(),
            used_compute: BTreeMap::new(),
            closed_nodes: BTreeSet::new(),
            storage_reserved: BTreeMap::new(),
            compute_reserved: BTreeMap::new(),
            energy: EnergyLedger::new(p.energy_budget_j),
            energy_dead: BTreeSet::new(),
            policy_rng,
            log: String::new(),
            slot_stats: Vec::new(),
            failure_trace: Vec::new(),
            matching: MatchingStats::default(),
        }
    }

    fn emit(&mut self, t: f64, body: &str) {
        let _ = writeln!(self.log, "t={t:.9} slot={} ev={body}", self.slot);
    }

    fn bump(&mut self, i: usize) -> u64 {
        self.versions[i] += 1;
        self.versions[i]
    }

    fn schedule(&mut self, t: f64, i: usize) {
        let v = self.versions[i];
        self.heap.push(Reverse((TimeKey(t), self.sfcs[i].id, v)));
    }

    fn tau(&self) -> f64 {
        self.p.slot_length_s
    }

    fn resident_bits(&self, node: PhysId) -> f64 {
        self.sfcs
            .iter()
            .filter(|s| !s.completed && s.location == node)
            .map(|s| s.data_bits)
            .sum()
    }

    fn reserved_bits(&self, node: PhysId) -> f64 {
        self.storage_reserved.values().filter(|(n, _)| *n == node).map(|(_, b)| b).sum()
    }

    /// Whether `node` can take another whole bundle of `bits`.
    fn storage_fits(&self, node: PhysId, bits: f64) -> bool {
        node.layer == Layer::Ground
            || self.resident_bits(node) + self.reserved_bits(node) + bits
                <= self.p.storage_capacity_bits + EPS
    }

    fn policy_order_key(&mut self, i: usize) -> (f64, SfcId) {
        let delta = self.sfcs[i].data_bits;
        match self.policy {
            Policy::Frmg | Policy::Rsnt => (delta, self.sfcs[i].id),
            Policy::Flts => (-delta, self.sfcs[i].id),
            Policy::Rssp => {
                let r = self.policy_rng.as_mut().expect("rssp stream").gen::<u32>();
                (r as f64, self.sfcs[i].id)
            }
        }
    }

    // ------------------------------------------------------------------
    // Within-slot progression
    // ------------------------------------------------------------------

    /// Advance one service at time `t` until it blocks on something.
    fn progress(&mut self, i: usize, t: f64) {
        loop {
            if self.sfcs[i].completed {
                return;
            }
            let vnf_done = self.sfcs[i].vnf_done();
            let location = self.sfcs[i].location;
            let remaining = self.sfcs[i].sigma.len() - vnf_done;

            if remaining > 0 {
                match self.sfcs[i].host[vnf_done] {
                    Some(h) if h == location => {
                        self.try_admit(i, vnf_done, t);
                        return;
                    }
                    Some(_) => {}
                    None => {
                        // No host assigned; wait for the next recovery round.
                        self.sfcs[i].act = Act::Idle;
                        return;
                    }
                }
            }

            // Resume a hop in flight, if its link still exists.
            if let Act::HopPending { to, bits_left, hop_start_s } = self.sfcs[i].act {
                if self.graph.transmission_link(location, to).is_some()
                    && !self.failed.contains(&to)
                {
                    self.try_burst(i, to, bits_left, hop_start_s, t);
                    return;
                }
                // The link vanished: abandon the hop, keep the bundle here.
                self.abandon_hop(i, t);
                continue;
            }

            let milestone = if remaining > 0 {
                self.sfcs[i].host[vnf_done].expect("checked above")
            } else {
                self.sfcs[i].destination
            };
            debug_assert_ne!(milestone, location);
            let Some(route) =
                shortest_route(&self.graph, location, milestone, self.sfcs[i].data_bits)
            else {
                self.sfcs[i].act = Act::Idle;
                return;
            };
            let hop_to = route.nodes[1];
            if !self.storage_fits(hop_to, self.sfcs[i].data_bits) {
                self.sfcs[i].act = Act::Idle;
                return;
            }
            // Commit the hop: reserve the room and mark the departure.
            if hop_to.layer != Layer::Ground {
                self.storage_reserved.insert(self.sfcs[i].id, (hop_to, self.sfcs[i].data_bits));
            }
            let bits = self.sfcs[i].data_bits;
            self.try_burst(i, hop_to, bits, t, t);
            return;
        }
    }

    /// Start (or re-attempt) a burst of the hop toward `to`.
    fn try_burst(&mut self, i: usize, to: PhysId, bits_left: f64, hop_start_s: f64, t: f64) {
        let location = self.sfcs[i].location;
        let link = self
            .graph
            .transmission_link(location, to)
            .expect("caller verified the link");
        let (kind, rate) = (link.kind, link.rate_bps);
        let cursor = *self.link_cursor.get(&(location, to)).unwrap_or(&self.slot_start);
        let start = cursor.max(t);
        if start >= self.slot_end - EPS {
            // The link is saturated for this slot; continue next slot.
            self.sfcs[i].act = Act::HopPending { to, bits_left, hop_start_s };
            self.bump(i);
            return;
        }
        if start > t + EPS {
            // Wait for the link to free up, then retry.
            self.sfcs[i].act = Act::HopPending { to, bits_left, hop_start_s };
            self.bump(i);
            self.schedule(start, i);
            return;
        }
        let full_end = start + bits_left / rate;
        let (burst_end, burst_bits) = if full_end <= self.slot_end + EPS {
            (full_end, bits_left)
        } else {
            (self.slot_end, rate * (self.slot_end - start))
        };
        self.link_cursor.insert((location, to), burst_end);
        if self.sfcs[i].first_tx_s.is_none() {
            self.sfcs[i].first_tx_s = Some(start);
        }
        self.sfcs[i].active_this_slot = true;
        let hop_start_s = if bits_left == self.sfcs[i].data_bits && hop_start_s == t {
            start
        } else {
            hop_start_s
        };
        if let Some(v) = self.sfcs[i].visits.last_mut() {
            if v.depart_s.is_none() {
                v.depart_s = Some(hop_start_s);
            }
        }
        self.sfcs[i].act = Act::Transmitting {
            to,
            kind,
            rate_bps: rate,
            bits_left,
            burst_start_s: start,
            burst_end_s: burst_end,
            burst_bits,
            hop_start_s,
        };
        let id = self.sfcs[i].id.0;
        self.emit(
            start,
            &format!(
                "tx_start sfc={id} from={location} to={to} kind={kind} rate={rate} bits={burst_bits}"
            ),
        );
        // Communication energy is paid by the transmitter; satellite
        // uplinks and crosslinks also charge the receiver.
        let dur = burst_end - start;
        if let Some(&p_tx) = self.p.tx_power_w.get(&kind) {
            self.energy.add_transmission(location, p_tx * dur);
        }
        if let Some(&p_rx) = self.p.rx_power_w.get(&kind) {
            self.energy.add_reception(to, p_rx * dur);
        }
        self.bump(i);
        if burst_end < self.slot_end - EPS {
            self.schedule(burst_end, i);
        }
    }

    /// Close the active burst at `t` (mid-slot wake or slot boundary).
    /// Returns true when the hop completed and the bundle arrived.
    fn close_burst(&mut self, i: usize, t: f64) -> bool {
        let Act::Transmitting {
            to,
            bits_left,
            burst_start_s,
            burst_end_s,
            burst_bits,
            hop_start_s,
            ..
        } = self.sfcs[i].act
        else {
            return false;
        };
        debug_assert!((t - burst_end_s).abs() < 1e-6);
        let location = self.sfcs[i].location;
        let id = self.sfcs[i].id.0;
        self.emit(
            burst_end_s,
            &format!("tx_end sfc={id} from={location} to={to} bits={burst_bits}"),
        );
        self.sfcs[i].tx_spans.push((burst_start_s, burst_end_s));
        let left = bits_left - burst_bits;
        self.bump(i);
        if left <= EPS {
            // The whole bundle is at `to` now.
            self.storage_reserved.remove(&self.sfcs[i].id);
            self.sfcs[i].location = to;
            self.sfcs[i].visits.push(Visit { node: to, depart_s: None });
            self.sfcs[i].act = Act::Idle;
            let bits = self.sfcs[i].data_bits;
            self.emit(burst_end_s, &format!("arrive sfc={id} node={to} bits={bits}"));
            let _ = hop_start_s;
            if to == self.sfcs[i].destination && self.sfcs[i].vnf_done() == self.sfcs[i].sigma.len()
            {
                self.sfcs[i].completed = true;
                self.sfcs[i].completion_s = Some(burst_end_s);
                self.sfcs[i].act = Act::Done;
                self.emit(burst_end_s, &format!("complete sfc={id}"));
            }
            true
        } else {
            self.sfcs[i].act = Act::HopPending { to, bits_left: left, hop_start_s };
            false
        }
    }

    /// Drop an in-flight hop: partially moved bits are lost, the bundle
    /// stays at the sender, and the voided burst time falls into the
    /// residual delay bucket.
    fn abandon_hop(&mut self, i: usize, t: f64) {
        let (hop_start, to) = match self.sfcs[i].act {
            Act::HopPending { hop_start_s, to, .. } => (hop_start_s, to),
            Act::Transmitting { hop_start_s, to, .. } => (hop_start_s, to),
            _ => return,
        };
        self.sfcs[i].void_spans_since(hop_start);
        self.storage_reserved.remove(&self.sfcs[i].id);
        if let Some(v) = self.sfcs[i].visits.last_mut() {
            v.depart_s = None;
        }
        self.sfcs[i].act = Act::Idle;
        let id = self.sfcs[i].id.0;
        self.emit(t, &format!("abandon sfc={id} to={to}"));
        self.bump(i);
    }

    /// Attempt compute admission of function `vnf` at the service's
    /// location. Succeeds when the slot-grained capacity and the node's
    /// energy budget both allow it.
    fn try_admit(&mut self, i: usize, vnf: usize, t: f64) {
        let node = self.sfcs[i].location;
        let sigma = self.sfcs[i].sigma[vnf];
        if self.closed_nodes.contains(&node) {
            self.sfcs[i].act = Act::Queued;
            return;
        }
        let used = *self.used_compute.get(&node).unwrap_or(&0.0);
        let own_res = match self.compute_reserved.get(&self.sfcs[i].id) {
            Some(&(n, r)) if n == node => r,
            _ => 0.0,
        };
        let fits = (used - own_res) + sigma <= self.p.compute_capacity_units + EPS;
        let energy_ok = self.energy.can_charge_compute(node, sigma, self.p.compute_energy_per_unit_j);
        if !fits || !energy_ok {
            self.sfcs[i].act = Act::Queued;
            self.closed_nodes.insert(node);
            return;
        }
        let own_res_left = (own_res - sigma).max(0.0);
        self.used_compute.insert(node, (used - own_res) + sigma + own_res_left);
        if own_res > 0.0 {
            if own_res_left > 0.0 {
                self.compute_reserved.insert(self.sfcs[i].id, (node, own_res_left));
            } else {
                self.compute_reserved.remove(&self.sfcs[i].id);
            }
        }
        let charged =
            self.energy.charge_compute(node, sigma, self.p.compute_energy_per_unit_j);
        debug_assert!(charged);
        let end = t + sigma / self.p.compute_units_per_slot * self.tau();
        self.sfcs[i].act = Act::Processing { vnf, sigma, start_s: t, end_s: end };
        self.sfcs[i].active_this_slot = true;
        let id = self.sfcs[i].id.0;
        self.emit(t, &format!("process_start sfc={id} vnf={vnf} node={node} sigma={sigma}"));
        self.bump(i);
        self.schedule(end, i);
    }

    fn finish_processing(&mut self, i: usize, t: f64) {
        let Act::Processing { vnf, start_s, end_s, .. } = self.sfcs[i].act else { return };
        debug_assert!((t - end_s).abs() < 1e-6);
        let node = self.sfcs[i].location;
        self.sfcs[i].proc_spans.push((start_s, end_s));
        self.sfcs[i].done[vnf] = Some((end_s, node));
        self.sfcs[i].act = Act::Idle;
        let id = self.sfcs[i].id.0;
        self.emit(end_s, &format!("process_end sfc={id} vnf={vnf} node={node}"));
        self.bump(i);
        self.progress(i, end_s);
    }

    fn wake(&mut self, i: usize, t: f64) {
        match self.sfcs[i].act.clone() {
            Act::Transmitting { .. } => {
                if self.close_burst(i, t) && !self.sfcs[i].completed {
                    self.progress(i, t);
                }
            }
            Act::Processing { .. } => self.finish_processing(i, t),
            Act::HopPending { .. } | Act::Idle | Act::Queued => self.progress(i, t),
            Act::Done => {}
        }
    }

    // ------------------------------------------------------------------
    // Boundary work
    // ------------------------------------------------------------------

    /// Close every burst still on the air at the boundary `b`.
    fn close_open_bursts(&mut self, b: f64) {
        for i in 0..self.sfcs.len() {
            if let Act::Transmitting { burst_end_s, .. } = self.sfcs[i].act {
                debug_assert!((burst_end_s - b).abs() < 1e-6);
                self.close_burst(i, b);
            }
        }
    }

    /// Retrospective storage accounting for the slot that just ended.
    fn record_store_slots(&mut self, ended_slot: u32, b: f64) {
        for i in 0..self.sfcs.len() {
            let s = &self.sfcs[i];
            if s.first_tx_s.is_some() && !s.completed && !s.active_this_slot {
                let (id, node, bits) = (s.id.0, s.location, s.data_bits);
                self.sfcs[i].store_slots += 1;
                let _ = writeln!(
                    self.log,
                    "t={b:.9} slot={ended_slot} ev=store sfc={id} node={node} bits={bits}"
                );
            }
        }
    }

    /// Per-slot energy: operation power for live aerial/orbital nodes
    /// (nodes that cannot afford it power off permanently) and propulsion
    /// for UAVs.
    fn accrue_slot_energy(&mut self, view: &SlotView) {
        let op = energy::operation_energy(self.p.operation_power_w, self.tau());
        let nodes: Vec<PhysId> = view
            .graph
            .nodes
            .iter()
            .map(|n| n.phys)
            .filter(|id| id.layer != Layer::Ground && !self.energy_dead.contains(id))
            .collect();
        for id in nodes {
            let account = self.energy.node(id);
            if account.enforced_j() + op > self.p.energy_budget_j + EPS {
                self.energy_dead.insert(id);
                self.emit(self.slot_start, &format!("fail node={id}"));
            } else {
                self.energy.add_operation(id, op);
            }
        }
        if let Some(prop) = self.p.propulsion {
            for (&uav, &dist) in &view.moved_m {
                if view.failed.contains(&uav) || self.energy_dead.contains(&uav) {
                    continue;
                }
                let joules = energy::path_energy(
                    dist,
                    prop.speed_mps,
                    prop.max_speed_mps,
                    prop.max_speed_power_w,
                    prop.hover_power_w,
                    self.tau(),
                )
                .expect("validated propulsion parameters");
                self.energy.add_path(uav, joules);
            }
        }
    }

    /// Remove energy-dead nodes from the provided slot graph.
    fn filter_graph(&self, graph: SlotGraph) -> SlotGraph {
        if self.energy_dead.is_empty() {
            return graph;
        }
        let slot = graph.slot;
        let nodes: Vec<SlotNode> = graph
            .nodes
            .iter()
            .filter(|n| !self.energy_dead.contains(&n.phys))
            .copied()
            .collect();
        let links: Vec<Link> = graph
            .links
            .iter()
            .filter(|l| {
                !self.energy_dead.contains(&l.from.phys) && !self.energy_dead.contains(&l.to.phys)
            })
            .copied()
            .collect();
        SlotGraph::assemble(slot, nodes, links)
    }

    /// Roll a service back to its most recent surviving visited node with
    /// room for the bundle (its ground origin qualifies unconditionally).
    /// Voids all work since the departure from that node.
    fn rollback(&mut self, i: usize, b: f64) {
        let id = self.sfcs[i].id.0;
        let from = self.sfcs[i].location;
        // Find the rollback target.
        let mut target_idx = 0;
        for (k, v) in self.sfcs[i].visits.iter().enumerate().rev() {
            if v.node == from {
                continue;
            }
            if !self.failed.contains(&v.node) && self.storage_fits(v.node, self.sfcs[i].data_bits)
            {
                target_idx = k;
                break;
            }
        }
        let target = self.sfcs[i].visits[target_idx].node;
        let t_void = self.sfcs[i].visits[target_idx].depart_s.unwrap_or(b);
        // Truncate an interrupted processing run into its span list first,
        // so the void sweep below picks it up.
        if let Act::Processing { start_s, .. } = self.sfcs[i].act {
            self.sfcs[i].proc_spans.push((start_s, b));
        }
        let voided_time = self.sfcs[i].void_spans_since(t_void);
        // Void function completions that happened after the departure and
        // flag every not-yet-complete function whose host is gone.
        let mut voided_vnfs: Vec<usize> = Vec::new();
        for m in 0..self.sfcs[i].sigma.len() {
            let completed_after = matches!(self.sfcs[i].done[m], Some((t, _)) if t >= t_void - EPS);
            if completed_after {
                self.sfcs[i].done[m] = None;
            }
            if self.sfcs[i].done[m].is_none() {
                let host_dead = matches!(self.sfcs[i].host[m], Some(h) if self.failed.contains(&h));
                if completed_after || host_dead {
                    self.sfcs[i].host[m] = None;
                    self.sfcs[i].w_flag[m] = true;
                    voided_vnfs.push(m);
                }
            }
        }
        if self.sfcs[i].w_flag.iter().any(|&w| w) && !voided_vnfs.is_empty() {
            self.sfcs[i].redeploy_s += voided_time;
        }
        self.storage_reserved.remove(&self.sfcs[i].id);
        self.compute_reserved.remove(&self.sfcs[i].id);
        self.sfcs[i].location = target;
        self.sfcs[i].visits.truncate(target_idx + 1);
        self.sfcs[i].visits[target_idx].depart_s = None;
        self.sfcs[i].act = Act::Idle;
        self.bump(i);
        let voided = if voided_vnfs.is_empty() {
            "-".to_string()
        } else {
            voided_vnfs.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(",")
        };
        self.emit(b, &format!("rollback sfc={id} from={from} to={target} voided={voided}"));
    }

    /// Detect services hit by this boundary's failure state; roll back or
    /// void as needed. Returns (service index, class at impact).
    fn apply_failures(&mut self, b: f64) -> Vec<(usize, AffectClass)> {
        let mut affected = Vec::new();
        for i in 0..self.sfcs.len() {
            if self.sfcs[i].completed {
                continue;
            }
            let class = match self.sfcs[i].act {
                Act::Processing { .. } => AffectClass::Processing,
                Act::Transmitting { .. } | Act::HopPending { .. } => AffectClass::Other,
                _ => AffectClass::Stored,
            };
            let mut hit = false;
            if self.failed.contains(&self.sfcs[i].location) {
                self.rollback(i, b);
                hit = true;
            } else {
                // Transmission toward a now-dead node.
                let tx_target = match self.sfcs[i].act {
                    Act::Transmitting { to, .. } | Act::HopPending { to, .. } => Some(to),
                    _ => None,
                };
                if let Some(to) = tx_target {
                    if self.failed.contains(&to) {
                        self.abandon_hop(i, b);
                        hit = true;
                    }
                }
                // Assigned hosts that died (before their functions ran).
                let vnf_done = self.sfcs[i].vnf_done();
                for m in vnf_done..self.sfcs[i].sigma.len() {
                    if let Some(h) = self.sfcs[i].host[m] {
                        if self.failed.contains(&h) {
                            self.sfcs[i].host[m] = None;
                            self.sfcs[i].w_flag[m] = true;
                            hit = true;
                        }
                    }
                }
                if hit && matches!(self.sfcs[i].act, Act::Processing { .. }) {
                    // Keep processing the current function on its live
                    // host; only future hosts were voided.
                }
                if hit {
                    if let Some((node, _)) = self.compute_reserved.get(&self.sfcs[i].id) {
                        if self.failed.contains(node) {
                            self.compute_reserved.remove(&self.sfcs[i].id);
                        }
                    }
                }
            }
            if hit {
                affected.push((i, class));
            }
        }
        affected
    }

    /// Initial placement on the first slot's graph: the best route from
    /// origin to destination hosts one function per relay, with the
    /// remainder stacked on the last relay.
    fn assign_initial_hosts(&mut self) {
        for i in 0..self.sfcs.len() {
            let (origin, dest, bits) =
                (self.sfcs[i].origin, self.sfcs[i].destination, self.sfcs[i].data_bits);
            let Some(route) = shortest_route(&self.graph, origin, dest, bits) else {
                continue;
            };
            let relays: Vec<PhysId> = route.relay_nodes().collect();
            if relays.is_empty() {
                continue;
            }
            for m in 0..self.sfcs[i].sigma.len() {
                let r = relays[m.min(relays.len() - 1)];
                self.sfcs[i].host[m] = Some(r);
            }
        }
    }

    /// One recovery round: affected services (plus earlier unmatched ones
    /// and services whose live host became unroutable) propose; the policy
    /// decides where the next function goes.
    fn run_recovery(&mut self, affected: &[(usize, AffectClass)], b: f64) -> Vec<u32> {
        let classes: BTreeMap<usize, AffectClass> = affected.iter().copied().collect();
        let mut proposers: Vec<(usize, AffectClass)> = Vec::new();
        for i in 0..self.sfcs.len() {
            let s = &self.sfcs[i];
            if s.completed {
                continue;
            }
            let vnf_done = s.vnf_done();
            if vnf_done >= s.sigma.len() {
                continue;
            }
            let needs_host = match s.host[vnf_done] {
                None => true,
                // A host that is alive but unreachable in this slot's graph
                // would stall the chain; re-place its function instead.
                Some(h) => {
                    h != s.location
                        && matches!(s.act, Act::Idle)
                        && shortest_route(&self.graph, s.location, h, s.data_bits).is_none()
                }
            };
            if let Some(&class) = classes.get(&i) {
                if needs_host {
                    proposers.push((i, class));
                }
            } else if needs_host && matches!(s.act, Act::Idle | Act::Queued) {
                // Left over from an earlier round: retry as a stored service.
                proposers.push((i, AffectClass::Stored));
            }
        }
        if proposers.is_empty() {
            return Vec::new();
        }
        let affected_ids: Vec<u32> = proposers.iter().map(|&(i, _)| self.sfcs[i].id.0).collect();

        if self.policy == Policy::Rsnt {
            // Baseline: a uniformly random live neighbor, no negotiation.
            for &(i, _) in &proposers {
                let location = self.sfcs[i].location;
                let neighbors: Vec<PhysId> = self
                    .graph
                    .transmission_links_from(location)
                    .filter(|l| l.to.phys.layer != Layer::Ground)
                    .map(|l| l.to.phys)
                    .collect();
                if neighbors.is_empty() {
                    self.matching.unmatched_waits += 1;
                    continue;
                }
                let pick = self.policy_rng.as_mut().expect("rsnt stream").gen_range(0..neighbors.len());
                let target = neighbors[pick];
                self.assign_next(i, target, b);
                self.matching.matched += 1;
            }
            self.matching.rounds += 1;
            return affected_ids;
        }

        let mut requests: Vec<RecoveryRequest> = Vec::new();
        for &(i, class) in &proposers {
            let s = &self.sfcs[i];
            let location = s.location;
            let candidates: Vec<(PhysId, f64)> = self
                .graph
                .transmission_links_from(location)
                .filter(|l| l.to.phys.layer != Layer::Ground)
                .map(|l| {
                    let n = l.to.phys;
                    let transfer = s.data_bits / l.rate_bps;
                    let onward = time_to_destination(&self.graph, n, s.destination, s.data_bits)
                        .unwrap_or(f64::INFINITY);
                    (n, transfer + onward)
                })
                .collect();
            requests.push(RecoveryRequest {
                sfc: s.id,
                class,
                data_bits: s.data_bits,
                // The placement moves one function: the one in service (or
                // next due) when the disruption hit.
                sigma_units: s.sigma[s.vnf_done()],
                candidates,
            });
        }
        let mut offers: BTreeMap<PhysId, f64> = BTreeMap::new();
        for r in &requests {
            for &(n, _) in &r.candidates {
                let used = *self.used_compute.get(&n).unwrap_or(&0.0);
                offers.insert(n, (self.p.compute_capacity_units - used).max(0.0));
            }
        }
        let order = match self.policy {
            Policy::Flts => RequestOrder::OthersDescendingData,
            _ => RequestOrder::AscendingData,
        };
        let outcome = match_recover(&requests, &offers, order);
        self.matching.rounds += 1;
        self.matching.proposals += outcome.proposals_made;
        let _ = writeln!(
            self.log,
            "t={b:.9} slot={} ev=match_round proposers={} matched={} proposals={}",
            self.slot,
            requests.len(),
            outcome.assignment.len(),
            outcome.proposals_made
        );
        for &(i, _) in &proposers {
            match outcome.target_of(self.sfcs[i].id) {
                Some(target) => {
                    let sigma = self.sfcs[i].sigma[self.sfcs[i].vnf_done()];
                    self.assign_next(i, target, b);
                    self.compute_reserved.insert(self.sfcs[i].id, (target, sigma));
                    *self.used_compute.entry(target).or_insert(0.0) += sigma;
                    self.matching.matched += 1;
                }
                None => self.matching.unmatched_waits += 1,
            }
        }
        affected_ids
    }

    /// Point the next due function of service `i` at `target`. Later
    /// functions keep their hosts (re-placed themselves if lost).
    fn assign_next(&mut self, i: usize, target: PhysId, b: f64) {
        let id = self.sfcs[i].id.0;
        let vnf = self.sfcs[i].vnf_done();
        self.sfcs[i].host[vnf] = Some(target);
        self.emit(b, &format!("redeploy sfc={id} vnf={vnf} node={target}"));
    }

    // ------------------------------------------------------------------
    // Main loop
    // ------------------------------------------------------------------

    fn run(&mut self, source: &mut dyn SlotSource) -> RunOutput {
        let slot_count = source.slot_count();
        let tau = self.tau();
        for i in 0..self.sfcs.len() {
            let (id, origin, bits) =
                (self.sfcs[i].id.0, self.sfcs[i].origin, self.sfcs[i].data_bits);
            let _ = writeln!(self.log, "t=0.000000000 slot=0 ev=arrive sfc={id} node={origin} bits={bits}");
        }

        for slot in 0..slot_count {
            let b = slot as f64 * tau;
            self.slot = slot;
            self.slot_start = b;
            self.slot_end = b + tau;

            let view = source.view(slot);
            let previous_failed = self.failed.clone();

            // Energy first: nodes may power off and leave the graph.
            self.accrue_slot_energy(&view);
            self.graph = self.filter_graph(view.graph);
            self.failed = &view.failed | &self.energy_dead;
            for id in self.failed.difference(&previous_failed) {
                let _ = writeln!(self.log, "t={b:.9} slot={slot} ev=fail node={id}");
            }
            for id in previous_failed.difference(&self.failed) {
                let _ = writeln!(self.log, "t={b:.9} slot={slot} ev=recover node={id}");
            }

            // Failures, rollbacks, and recovery.
            let affected = if slot == 0 {
                self.assign_initial_hosts();
                Vec::new()
            } else {
                self.apply_failures(b)
            };
            let rolled_back: Vec<(u32, String)> = affected
                .iter()
                .map(|&(i, _)| (self.sfcs[i].id.0, self.sfcs[i].location.to_string()))
                .collect();
            let affected_ids = self.run_recovery(&affected, b);
            if view.failure_update || self.failed != previous_failed {
                self.failure_trace.push(FailureRecord {
                    slot,
                    failed: self.failed.iter().map(|f| f.to_string()).collect(),
                    affected_sfcs: affected_ids,
                    rolled_back,
                });
            }

            // Fresh slot bookkeeping: link budgets reset; compute usage
            // carries active runs and standing reservations.
            self.link_cursor.clear();
            self.closed_nodes.clear();
            self.used_compute.clear();
            for i in 0..self.sfcs.len() {
                if let Act::Processing { sigma, .. } = self.sfcs[i].act {
                    *self.used_compute.entry(self.sfcs[i].location).or_insert(0.0) += sigma;
                }
                self.sfcs[i].active_this_slot =
                    matches!(self.sfcs[i].act, Act::Processing { .. });
            }
            for (node, sigma) in self.compute_reserved.values() {
                *self.used_compute.entry(*node).or_insert(0.0) += sigma;
            }

            // Boundary batch, in policy order.
            let actionable: Vec<usize> = (0..self.sfcs.len())
                .filter(|&i| {
                    matches!(self.sfcs[i].act, Act::Idle | Act::Queued | Act::HopPending { .. })
                        && !self.sfcs[i].completed
                })
                .collect();
            let mut batch: Vec<(f64, SfcId, usize)> = Vec::with_capacity(actionable.len());
            for i in actionable {
                let (k, id) = self.policy_order_key(i);
                batch.push((k, id, i));
            }
            batch.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, _, i) in &batch {
                self.progress(i, b);
            }

            // Per-slot series sample, right after boundary work.
            let processing = self
                .sfcs
                .iter()
                .filter(|s| matches!(s.act, Act::Processing { .. }))
                .count() as u32;
            let unfinished = self.sfcs.iter().filter(|s| !s.completed).count() as u32;
            let completed_total = self.sfcs.len() as u32 - unfinished;
            self.slot_stats.push(SlotStats {
                slot,
                processing,
                unfinished,
                processed_ratio: if unfinished == 0 {
                    0.0
                } else {
                    processing as f64 / unfinished as f64
                },
                completed_total,
                failed_nodes: self.failed.len() as u32,
            });

            // Micro-simulation of this slot.
            while let Some(&Reverse((TimeKey(t), id, v))) = self.heap.peek() {
                if t > self.slot_end - EPS {
                    break;
                }
                self.heap.pop();
                let i = id.0 as usize;
                if self.versions[i] != v {
                    continue;
                }
                self.wake(i, t);
            }

            // Boundary close-out for the ending slot.
            let end = self.slot_end;
            self.close_open_bursts(end);
            self.record_store_slots(slot, end);
        }

        self.finalize(source, slot_count)
    }

    fn finalize(&mut self, source: &mut dyn SlotSource, slot_count: u32) -> RunOutput {
        let horizon = slot_count as f64 * self.tau();
        let tau = self.tau();
        let mut outcomes = Vec::new();
        let mut total = 0.0;
        let mut max_total = 0.0_f64;
        for s in &self.sfcs {
            let delay = match s.first_tx_s {
                Some(ft) => {
                    let end = s.completion_s.unwrap_or(horizon);
                    let total_s = end - ft;
                    debug_assert!(
                        s.tx_spans.iter().chain(&s.proc_spans).all(|&(a, b)| b >= a),
                        "negative work span: {:?} {:?}",
                        s.tx_spans,
                        s.proc_spans
                    );
                    let transmission_s: f64 = s.tx_spans.iter().map(|(a, b)| b - a).sum();
                    let processing_s: f64 = s.proc_spans.iter().map(|(a, b)| b - a).sum();
                    let storage_s = s.store_slots as f64 * tau;
                    let redeploy_s = s.redeploy_s;
                    let mut other_s =
                        total_s - transmission_s - processing_s - storage_s - redeploy_s;
                    debug_assert!(other_s > -1e-6, "residual bucket went negative: {other_s}");
                    if other_s < 0.0 {
                        other_s = 0.0;
                    }
                    DelayBreakdown {
                        transmission_s,
                        processing_s,
                        storage_s,
                        redeploy_s,
                        other_s,
                        total_s,
                    }
                }
                None => DelayBreakdown::default(),
            };
            total += delay.total_s;
            max_total = max_total.max(delay.total_s);
            outcomes.push(SfcOutcome {
                id: s.id.0,
                origin: s.origin_index,
                destination: s.destination_index,
                data_bits: s.data_bits,
                vnf_count: s.sigma.len(),
                completed: s.completed,
                first_tx_s: s.first_tx_s,
                completion_s: s.completion_s,
                delay,
            });
        }
        let completed = self.sfcs.iter().filter(|s| s.completed).count() as u32;
        let mean = if outcomes.is_empty() { 0.0 } else { total / outcomes.len() as f64 };

        let mut energy = EnergyReport::default();
        for (id, account) in self.energy.iter() {
            energy.path_j += account.path_j;
            energy.transmission_j += account.transmission_j;
            energy.reception_j += account.reception_j;
            energy.operation_j += account.operation_j;
            energy.compute_j += account.compute_j;
            energy.per_node.insert(id.to_string(), *account);
        }
        energy.total_j = energy.path_j
            + energy.transmission_j
            + energy.reception_j
            + energy.operation_j
            + energy.compute_j;

        let report = RunReport {
            scenario_digest: self.scenario_digest.clone(),
            policy: self.policy,
            seed: self.seed,
            trace_digest: source.trace_digest(),
            sfc: outcomes,
            total_delay_s: total,
            mean_delay_s: mean,
            max_completion_s: max_total,
            completed,
            slots: std::mem::take(&mut self.slot_stats),
            failures: std::mem::take(&mut self.failure_trace),
            energy,
            matching: std::mem::take(&mut self.matching),
            audit: AuditVerdict::Unchecked,
        };
        RunOutput { report, event_log: std::mem::take(&mut self.log) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(i: u32) -> PhysId {
        PhysId::ground(i)
    }

    fn u(i: u32) -> PhysId {
        PhysId::uav(i)
    }

    fn base_params(tau: f64) -> EngineParams {
        EngineParams {
            slot_length_s: tau,
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
        }
    }

    fn sfc(id: u32, bits: f64, sigma: &[f64]) -> EngineSfc {
        EngineSfc {
            id: SfcId(id),
            origin_index: 0,
            destination_index: 1,
            data_bits: bits,
            sigma: sigma.to_vec(),
        }
    }

    fn run(
        world: &mut StaticWorld,
        params: &EngineParams,
        sfcs: &[EngineSfc],
        policy: Policy,
    ) -> RunOutput {
        run_with_source(world, params, sfcs, policy, 7, "test".into())
    }

    #[test]
    fn lone_chain_time_is_exactly_transfer_plus_processing() {
        // g0 -> u0 (1e6 bps) -> g1 (2e6 bps), 1e6 bits, one sigma=1 function:
        // tx 1 s, process 5 s (crossing a boundary), tx 0.5 s.
        let mut world = StaticWorld::new(
            5.0,
            4,
            vec![(g(0), u(0), 1e6), (u(0), g(1), 2e6)],
            vec![],
        );
        let out = run(&mut world, &base_params(5.0), &[sfc(0, 1e6, &[1.0])], Policy::Frmg);
        let o = &out.report.sfc[0];
        assert!(o.completed);
        assert_eq!(o.first_tx_s, Some(0.0));
        assert!((o.delay.total_s - 6.5).abs() < 1e-9, "total {}", o.delay.total_s);
        assert!((o.delay.transmission_s - 1.5).abs() < 1e-9);
        assert!((o.delay.processing_s - 5.0).abs() < 1e-9);
        assert_eq!(o.delay.storage_s, 0.0);
        assert_eq!(o.delay.redeploy_s, 0.0);
        assert!(o.delay.other_s.abs() < 1e-9);
    }

    #[test]
    fn smaller_data_admits_first_and_largest_first_flips_it() {
        // Both chains contend for u0 (capacity 1 unit at a time) and the
        // shared g0->u0 link from the same boundary batch.
        let links = vec![(g(0), u(0), 1e6), (u(0), g(1), 1e7)];
        let mut params = base_params(5.0);
        params.compute_capacity_units = 1.0;
        let chains = [sfc(0, 2e6, &[1.0]), sfc(1, 1e6, &[1.0])];

        let mut world = StaticWorld::new(5.0, 12, links.clone(), vec![]);
        let frmg = run(&mut world, &params, &chains, Policy::Frmg);
        // Ascending data: chain 1 (1e6 bits) transmits and processes first.
        let c1 = frmg.report.sfc[1].completion_s.unwrap();
        let c0 = frmg.report.sfc[0].completion_s.unwrap();
        assert!(c1 < c0, "ascending-data order must finish the small chain first");

        let mut world = StaticWorld::new(5.0, 12, links, vec![]);
        let flts = run(&mut world, &params, &chains, Policy::Flts);
        let c1 = flts.report.sfc[1].completion_s.unwrap();
        let c0 = flts.report.sfc[0].completion_s.unwrap();
        assert!(c0 < c1, "largest-first order must finish the big chain first");
    }

    #[test]
    fn full_idle_slots_count_as_storage() {
        // Chain 1 arrives at u0 and must wait for chain 0's processing to
        // release capacity at a boundary; waited slots become storage time.
        let links = vec![(g(0), u(0), 1e7), (u(0), g(1), 1e7)];
        let mut params = base_params(5.0);
        params.compute_capacity_units = 2.0;
        let chains = [sfc(0, 1e6, &[2.0]), sfc(1, 2e6, &[1.0])];
        let mut world = StaticWorld::new(5.0, 16, links, vec![]);
        let out = run(&mut world, &params, &chains, Policy::Frmg);
        assert!(out.report.sfc[1].completed);
        assert!(
            out.report.sfc[1].delay.storage_s > 0.0,
            "blocked chain must accrue storage slots: {:?}",
            out.report.sfc[1].delay
        );
        assert_eq!(out.report.sfc[1].delay.storage_s % 5.0, 0.0);
    }

    #[test]
    fn host_failure_rolls_back_redeploys_and_recovers() {
        // u0 hosts the function but dies during slots 1-2 while processing;
        // the bundle rolls back to g0 and the matching sends it to u1.
        let links = vec![
            (g(0), u(0), 1e6),
            (g(0), u(1), 1e6),
            (u(0), g(1), 1e6),
            (u(1), g(1), 1e6),
        ];
        let fail: BTreeSet<PhysId> = [u(0)].into();
        let schedule = vec![BTreeSet::new(), fail.clone(), fail, BTreeSet::new()];
        let mut world = StaticWorld::new(5.0, 12, links, schedule);
        let out = run(&mut world, &base_params(5.0), &[sfc(0, 2e6, &[1.0])], Policy::Frmg);
        let o = &out.report.sfc[0];
        assert!(o.completed, "chain must recover via u1: {:?}", o);
        assert!(o.delay.redeploy_s > 0.0, "voided work must land in redeploy: {:?}", o.delay);
        assert!(out.event_log.contains("ev=rollback sfc=0 from=u0 to=g0"));
        assert!(out.event_log.contains("ev=redeploy sfc=0 vnf=0 node=u1"));
        assert!(out.report.matching.matched >= 1);
        let identity = o.delay.transmission_s
            + o.delay.processing_s
            + o.delay.storage_s
            + o.delay.redeploy_s
            + o.delay.other_s;
        assert!((identity - o.delay.total_s).abs() < 1e-9);
    }

    #[test]
    fn unfinished_chains_are_censored_at_the_horizon() {
        // No route ever exists to g1, so the chain processes and then waits.
        let links = vec![(g(0), u(0), 1e6)];
        let mut world = StaticWorld::new(5.0, 4, links, vec![]);
        let out = run(&mut world, &base_params(5.0), &[sfc(0, 1e6, &[1.0])], Policy::Frmg);
        let o = &out.report.sfc[0];
        assert!(!o.completed);
        assert_eq!(o.completion_s, None);
        assert!((o.delay.total_s - (20.0 - o.first_tx_s.unwrap())).abs() < 1e-9);
        let identity = o.delay.transmission_s
            + o.delay.processing_s
            + o.delay.storage_s
            + o.delay.redeploy_s
            + o.delay.other_s;
        assert!((identity - o.delay.total_s).abs() < 1e-9);
    }

    #[test]
    fn energy_budget_cuts_off_processing_admission() {
        let links = vec![(g(0), u(0), 1e7), (u(0), g(1), 1e7)];
        let mut params = base_params(5.0);
        // One slot of operation (25 J) plus one sigma=1 processing (50 J)
        // fits; the second function would exceed the budget.
        params.energy_budget_j = 110.0;
        let mut world = StaticWorld::new(5.0, 6, links, vec![]);
        let out = run(&mut world, &params, &[sfc(0, 1e6, &[1.0, 1.0])], Policy::Frmg);
        let o = &out.report.sfc[0];
        assert!(!o.completed, "second admission must be refused: {:?}", o);
        let u0 = &out.report.energy.per_node["u0"];
        assert!(u0.compute_j == 50.0);
        assert!(u0.operation_j + u0.compute_j <= 110.0 + 1e-9);
    }

    #[test]
    fn event_logs_replay_identically() {
        let links = vec![
            (g(0), u(0), 1e6),
            (g(0), u(1), 2e6),
            (u(0), u(1), 3e6),
            (u(0), g(1), 1e6),
            (u(1), g(1), 2e6),
        ];
        let fail: BTreeSet<PhysId> = [u(1)].into();
        let schedule = vec![BTreeSet::new(), BTreeSet::new(), fail, BTreeSet::new()];
        let chains = [sfc(0, 2e6, &[1.0]), sfc(1, 5e6, &[0.5, 0.5])];
        let mut runs = Vec::new();
        for _ in 0..2 {
            let mut world = StaticWorld::new(5.0, 10, links.clone(), schedule.clone());
            runs.push(run(&mut world, &base_params(5.0), &chains, Policy::Frmg));
        }
        assert_eq!(runs[0].event_log, runs[1].event_log);
        assert_eq!(runs[0].report, runs[1].report);
        assert!(!runs[0].event_log.is_empty());
    }

    #[test]
    fn scenario_runs_are_deterministic_and_share_traces_across_policies() {
        let mut sc = Scenario::default();
        sc.time.slot_count = 20;
        sc.sfc.count = 4;
        sc.seed = 11;
        let a = run_scenario(&sc).unwrap();
        let b = run_scenario(&sc).unwrap();
        assert_eq!(a.event_log, b.event_log);
        assert_eq!(a.report.trace_digest, b.report.trace_digest);

        sc.policy = Policy::Flts;
        let c = run_scenario(&sc).unwrap();
        assert_eq!(
            a.report.trace_digest, c.report.trace_digest,
            "policies must share mobility/failure traces at a fixed seed"
        );
        sc.seed = 12;
        let d = run_scenario(&sc).unwrap();
        assert_ne!(a.report.trace_digest, d.report.trace_digest);
    }

    #[test]
    fn delay_identity_holds_across_a_noisy_scenario() {
        let mut sc = Scenario::default();
        sc.time.slot_count = 40;
        sc.sfc.count = 8;
        sc.failure.lambda = 3.0;
        sc.seed = 5;
        let out = run_scenario(&sc).unwrap();
        for o in &out.report.sfc {
            let sum = o.delay.transmission_s
                + o.delay.processing_s
                + o.delay.storage_s
                + o.delay.redeploy_s
                + o.delay.other_s;
            assert!((sum - o.delay.total_s).abs() < 1e-6, "identity broke: {o:?}");
            assert!(o.delay.other_s >= 0.0);
            assert!(o.delay.storage_s >= 0.0);
        }
        assert!(out.report.slots.len() == 40);
    }
}
