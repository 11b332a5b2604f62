//! Node identities, UAV mobility, satellite orbits, and per-slot graphs.
//!
//! Positions are quasi-static: they change only at slot boundaries, so each
//! slot gets one immutable [`SlotGraph`] holding every feasible directed
//! transmission link (with its rate) plus a storage link per live node that
//! carries data into the next slot. Ground stations sit in the area plane,
//! UAVs fly at a fixed altitude inside the area square, and satellites move
//! on circular tracks parameterized by altitude, an in-plane direction, and
//! a phase angle.
//!
//! Construction order is deterministic: nodes sort by id, links are emitted
//! grouped by source node in id order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::LinkBudget;
use crate::scenario::{Geometry, OrbitSpec};

/// Mean Earth radius, m.
pub const EARTH_RADIUS_M: f64 = 6.371e6;
/// Standard gravitational parameter of Earth, m^3/s^2.
pub const EARTH_MU_M3_S2: f64 = 3.986_004_418e14;

/// Network layer a node lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Ground,
    Uav,
    Satellite,
}

impl Layer {
    fn prefix(&self) -> char {
        match self {
            Layer::Ground => 'g',
            Layer::Uav => 'u',
            Layer::Satellite => 's',
        }
    }
}

/// A physical node, stable across slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PhysId {
    pub layer: Layer,
    pub index: u32,
}

impl PhysId {
    pub fn ground(index: u32) -> PhysId {
        PhysId { layer: Layer::Ground, index }
    }

    pub fn uav(index: u32) -> PhysId {
        PhysId { layer: Layer::Uav, index }
    }

    pub fn satellite(index: u32) -> PhysId {
        PhysId { layer: Layer::Satellite, index }
    }

    /// Parse the compact form used in event logs: `g0`, `u12`, `s1`.
    pub fn parse(text: &str) -> Option<PhysId> {
        let (head, tail) = text.split_at(1);
        let index: u32 = tail.parse().ok()?;
        let layer = match head {
            "g" => Layer::Ground,
            "u" => Layer::Uav,
            "s" => Layer::Satellite,
            _ => return None,
        };
        Some(PhysId { layer, index })
    }
}

impl fmt::Display for PhysId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.layer.prefix(), self.index)
    }
}

/// A node replicated into one slot of the time expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub phys: PhysId,
    pub slot: u32,
}

/// Directed link kind. The first letter names the transmitting layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    G2U,
    U2U,
    U2G,
    U2S,
    S2S,
    S2G,
    /// `(i, t) -> (i, t+1)`: the node keeps the data through the boundary.
    Storage,
}

impl LinkKind {
    /// Transmission kind for an ordered layer pair, if one exists.
    pub fn between(from: Layer, to: Layer) -> Option<LinkKind> {
        match (from, to) {
            (Layer::Ground, Layer::Uav) => Some(LinkKind::G2U),
            (Layer::Uav, Layer::Uav) => Some(LinkKind::U2U),
            (Layer::Uav, Layer::Ground) => Some(LinkKind::U2G),
            (Layer::Uav, Layer::Satellite) => Some(LinkKind::U2S),
            (Layer::Satellite, Layer::Satellite) => Some(LinkKind::S2S),
            (Layer::Satellite, Layer::Ground) => Some(LinkKind::S2G),
            _ => None,
        }
    }
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LinkKind::G2U => "g2u",
            LinkKind::U2U => "u2u",
            LinkKind::U2G => "u2g",
            LinkKind::U2S => "u2s",
            LinkKind::S2S => "s2s",
            LinkKind::S2G => "s2g",
            LinkKind::Storage => "store",
        };
        f.write_str(s)
    }
}

/// One directed link within a slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: LinkKind,
    pub rate_bps: f64,
    pub distance_m: f64,
}

/// A node materialized in a slot graph, with its position for that slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotNode {
    pub phys: PhysId,
    pub position_m: [f64; 3],
}

/// The network as seen during one slot: live nodes, feasible transmission
/// links with their rates, and storage links into the next slot.
#[derive(Debug, Clone)]
pub struct SlotGraph {
    pub slot: u32,
    pub nodes: Vec<SlotNode>,
    pub links: Vec<Link>,
    index: BTreeMap<PhysId, usize>,
    out_links: BTreeMap<PhysId, Vec<usize>>,
}

impl SlotGraph {
    /// Assemble a graph from prepared nodes and links; callers guarantee the
    /// links reference member nodes of this slot.
    pub fn assemble(slot: u32, nodes: Vec<SlotNode>, links: Vec<Link>) -> SlotGraph {
        let index = nodes.iter().enumerate().map(|(i, n)| (n.phys, i)).collect();
        let mut out_links: BTreeMap<PhysId, Vec<usize>> = BTreeMap::new();
        for (li, link) in links.iter().enumerate() {
            debug_assert_eq!(link.from.slot, slot);
            out_links.entry(link.from.phys).or_default().push(li);
        }
        SlotGraph { slot, nodes, links, index, out_links }
    }

    pub fn contains(&self, id: PhysId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn node_position(&self, id: PhysId) -> Option<[f64; 3]> {
        self.index.get(&id).map(|&i| self.nodes[i].position_m)
    }

    /// Indices into `links` of the outgoing links of `id`, in insertion
    /// order (deterministic by construction).
    pub fn out_link_ids(&self, id: PhysId) -> &[usize] {
        self.out_links.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Outgoing transmission links only (storage links skipped).
    pub fn transmission_links_from(&self, id: PhysId) -> impl Iterator<Item = &Link> {
        self.out_link_ids(id)
            .iter()
            .map(|&li| &self.links[li])
            .filter(|l| l.kind != LinkKind::Storage)
    }

    /// The transmission link `from -> to` if it is feasible this slot.
    pub fn transmission_link(&self, from: PhysId, to: PhysId) -> Option<&Link> {
        self.transmission_links_from(from).find(|l| l.to.phys == to)
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error(
        "could not place {count} UAVs with {min_separation_m} m separation \
         in a {area_side_m} m square after {attempts} attempts"
    )]
    Placement { count: u32, min_separation_m: f64, area_side_m: f64, attempts: u32 },
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Draw initial UAV positions uniformly in the area square, rejecting draws
/// closer than the minimum separation to an already-placed UAV.
pub fn init_uav_positions(
    geometry: &Geometry,
    rng: &mut impl Rng,
) -> Result<Vec<[f64; 2]>, TopologyError> {
    const MAX_ATTEMPTS: u32 = 100_000;
    let side = geometry.area_side_m;
    let min_sep2 = geometry.min_uav_separation_m * geometry.min_uav_separation_m;
    let mut placed: Vec<[f64; 2]> = Vec::with_capacity(geometry.uav_count as usize);
    let mut attempts = 0;
    while placed.len() < geometry.uav_count as usize {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(TopologyError::Placement {
                count: geometry.uav_count,
                min_separation_m: geometry.min_uav_separation_m,
                area_side_m: side,
                attempts: MAX_ATTEMPTS,
            });
        }
        let candidate = [rng.gen_range(0.0..=side), rng.gen_range(0.0..=side)];
        if placed.iter().all(|p| dist2(*p, candidate) >= min_sep2) {
            placed.push(candidate);
        }
    }
    Ok(placed)
}

/// Advance every UAV by one slot: a uniform random heading and a fixed
/// travel distance `speed * tau`, re-drawn up to 32 times if the step would
/// leave the area or violate the separation minimum against the current
/// positions of all other UAVs. A UAV out of options hovers in place.
/// UAVs listed in `frozen` (failed this slot) do not move.
pub fn step_uav_positions(
    positions: &mut [[f64; 2]],
    geometry: &Geometry,
    speed_mps: f64,
    slot_length_s: f64,
    frozen: &BTreeSet<u32>,
    rng: &mut impl Rng,
) -> Vec<f64> {
    const HEADING_TRIES: u32 = 32;
    let side = geometry.area_side_m;
    let min_sep2 = geometry.min_uav_separation_m * geometry.min_uav_separation_m;
    let step = speed_mps * slot_length_s;
    let mut moved = vec![0.0; positions.len()];
    for i in 0..positions.len() {
        if frozen.contains(&(i as u32)) {
            continue;
        }
        for _ in 0..HEADING_TRIES {
            let heading = rng.gen_range(0.0..std::f64::consts::TAU);
            let candidate =
                [positions[i][0] + step * heading.cos(), positions[i][1] + step * heading.sin()];
            let inside = candidate.iter().all(|c| *c >= 0.0 && *c <= side);
            let separated = positions
                .iter()
                .enumerate()
                .all(|(j, p)| j == i || dist2(*p, candidate) >= min_sep2);
            if inside && separated {
                positions[i] = candidate;
                moved[i] = step;
                break;
            }
        }
    }
    moved
}

/// Position of a satellite at absolute time `t_s`, in area-plane
/// coordinates with `z` above the ground plane. The satellite flies a
/// circular track of radius `R_earth + altitude` centered on the Earth's
/// center directly below the area center; `inclination_rad` sets the ground
/// track direction and `phase_rad` the along-track offset at `t = 0`.
pub fn satellite_position(orbit: &OrbitSpec, area_center: [f64; 2], t_s: f64) -> [f64; 3] {
    let r = EARTH_RADIUS_M + orbit.altitude_m;
    let omega = (EARTH_MU_M3_S2 / (r * r * r)).sqrt();
    let theta = orbit.phase_rad + omega * t_s;
    let along = r * theta.sin();
    [
        area_center[0] + along * orbit.inclination_rad.cos(),
        area_center[1] + along * orbit.inclination_rad.sin(),
        r * theta.cos() - EARTH_RADIUS_M,
    ]
}

/// All node positions for one slot.
#[derive(Debug, Clone)]
pub struct SlotPositions {
    pub ground: Vec<[f64; 3]>,
    pub uav: Vec<[f64; 3]>,
    pub satellite: Vec<[f64; 3]>,
}

impl SlotPositions {
    pub fn compute(
        geometry: &Geometry,
        uav_xy: &[[f64; 2]],
        uav_altitude_m: f64,
        t_s: f64,
    ) -> SlotPositions {
        let center = [geometry.area_side_m / 2.0, geometry.area_side_m / 2.0];
        SlotPositions {
            ground: geometry.ground_stations.iter().map(|g| [g[0], g[1], 0.0]).collect(),
            uav: uav_xy.iter().map(|p| [p[0], p[1], uav_altitude_m]).collect(),
            satellite: geometry
                .satellites
                .iter()
                .map(|o| satellite_position(o, center, t_s))
                .collect(),
        }
    }

    fn position(&self, id: PhysId) -> [f64; 3] {
        match id.layer {
            Layer::Ground => self.ground[id.index as usize],
            Layer::Uav => self.uav[id.index as usize],
            Layer::Satellite => self.satellite[id.index as usize],
        }
    }
}

/// Build the slot graph for `slot`: every pairwise feasible transmission
/// link among live nodes (failed aerial/orbital nodes excluded along with
/// all incident links) plus one storage link per live node while a next
/// slot exists. Satellite links beyond the maximum slant range and
/// ground/UAV links beyond their access ranges get no link; in-range links
/// with nonpositive computed rate are dropped.
pub fn build_slot_graph(
    slot: u32,
    slot_count: u32,
    positions: &SlotPositions,
    failed: &BTreeSet<PhysId>,
    budget: &LinkBudget,
) -> SlotGraph {
    let mut ids: Vec<PhysId> = Vec::new();
    ids.extend((0..positions.ground.len()).map(|i| PhysId::ground(i as u32)));
    ids.extend((0..positions.uav.len()).map(|i| PhysId::uav(i as u32)));
    ids.extend((0..positions.satellite.len()).map(|i| PhysId::satellite(i as u32)));
    ids.retain(|id| !failed.contains(id));
    ids.sort_unstable();

    let nodes: Vec<SlotNode> =
        ids.iter().map(|&phys| SlotNode { phys, position_m: positions.position(phys) }).collect();

    let mut links: Vec<Link> = Vec::new();
    for &from in &ids {
        for &to in &ids {
            if from == to {
                continue;
            }
            let Some(kind) = LinkKind::between(from.layer, to.layer) else { continue };
            let d = dist3(positions.position(from), positions.position(to));
            let rate = budget.rate_bps(kind, d);
            if rate > 0.0 {
                links.push(Link {
                    from: NodeId { phys: from, slot },
                    to: NodeId { phys: to, slot },
                    kind,
                    rate_bps: rate,
                    distance_m: d,
                });
            }
        }
        if slot + 1 < slot_count {
            links.push(Link {
                from: NodeId { phys: from, slot },
                to: NodeId { phys: from, slot: slot + 1 },
                kind: LinkKind::Storage,
                rate_bps: 0.0,
                distance_m: 0.0,
            });
        }
    }
    SlotGraph::assemble(slot, nodes, links)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ParameterSet, Scenario};
    use crate::seeded_stream;

    fn default_graph(failed: &BTreeSet<PhysId>) -> (SlotGraph, SlotPositions) {
        let sc = Scenario::default();
        let budget = LinkBudget::new(&sc.params, &sc.geometry);
        let mut rng = seeded_stream(7, "uav-init");
        let xy = init_uav_positions(&sc.geometry, &mut rng).unwrap();
        let positions =
            SlotPositions::compute(&sc.geometry, &xy, sc.params.uav_altitude_m, 0.0);
        (build_slot_graph(0, 120, &positions, failed, &budget), positions)
    }

    #[test]
    fn phys_id_display_and_parse_round_trip() {
        for id in [PhysId::ground(0), PhysId::uav(12), PhysId::satellite(1)] {
            assert_eq!(PhysId::parse(&id.to_string()), Some(id));
        }
        assert_eq!(PhysId::parse("x3"), None);
        assert_eq!(PhysId::parse("u"), None);
    }

    #[test]
    fn init_positions_respect_separation_and_bounds() {
        let sc = Scenario::default();
        let mut rng = seeded_stream(3, "uav-init");
        let pos = init_uav_positions(&sc.geometry, &mut rng).unwrap();
        assert_eq!(pos.len(), 30);
        for (i, a) in pos.iter().enumerate() {
            assert!(a.iter().all(|c| *c >= 0.0 && *c <= 2000.0));
            for b in pos.iter().skip(i + 1) {
                assert!(dist2(*a, *b).sqrt() >= 20.0);
            }
        }
    }

    #[test]
    fn impossible_placement_is_reported() {
        let mut geometry = Geometry::default();
        geometry.area_side_m = 30.0;
        geometry.uav_count = 100;
        geometry.min_uav_separation_m = 20.0;
        let mut rng = seeded_stream(3, "uav-init");
        assert!(matches!(
            init_uav_positions(&geometry, &mut rng),
            Err(TopologyError::Placement { .. })
        ));
    }

    #[test]
    fn stepping_preserves_invariants_across_slots() {
        let sc = Scenario::default();
        let mut rng = seeded_stream(11, "uav-move");
        let mut pos = init_uav_positions(&sc.geometry, &mut seeded_stream(11, "uav-init")).unwrap();
        for _ in 0..40 {
            let moved = step_uav_positions(
                &mut pos,
                &sc.geometry,
                sc.params.uav_speed_mps,
                sc.time.slot_length_s,
                &BTreeSet::new(),
                &mut rng,
            );
            for (i, a) in pos.iter().enumerate() {
                assert!(a.iter().all(|c| *c >= 0.0 && *c <= 2000.0));
                for b in pos.iter().skip(i + 1) {
                    assert!(dist2(*a, *b).sqrt() >= 20.0 - 1e-9);
                }
                assert!(moved[i] == 0.0 || (moved[i] - 60.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn frozen_uavs_hold_position() {
        let sc = Scenario::default();
        let mut pos = init_uav_positions(&sc.geometry, &mut seeded_stream(5, "uav-init")).unwrap();
        let before = pos[4];
        let frozen: BTreeSet<u32> = [4u32].into_iter().collect();
        step_uav_positions(
            &mut pos,
            &sc.geometry,
            12.0,
            5.0,
            &frozen,
            &mut seeded_stream(5, "uav-move"),
        );
        assert_eq!(pos[4], before);
    }

    #[test]
    fn satellite_antipodal_points_are_a_diameter_apart() {
        let orbit = OrbitSpec { altitude_m: 550e3, inclination_rad: 0.3, phase_rad: 0.1 };
        let r = EARTH_RADIUS_M + 550e3;
        let omega = (EARTH_MU_M3_S2 / (r * r * r)).sqrt();
        let half_period = std::f64::consts::PI / omega;
        let a = satellite_position(&orbit, [1000.0, 1000.0], 100.0);
        let b = satellite_position(&orbit, [1000.0, 1000.0], 100.0 + half_period);
        let d = dist3(a, b);
        assert!((d - 2.0 * r).abs() / (2.0 * r) < 1e-6, "got {d}, want {}", 2.0 * r);
    }

    #[test]
    fn satellite_overhead_at_zero_phase() {
        let orbit = OrbitSpec { altitude_m: 550e3, inclination_rad: 0.0, phase_rad: 0.0 };
        let p = satellite_position(&orbit, [1000.0, 1000.0], 0.0);
        assert!((p[0] - 1000.0).abs() < 1e-9);
        assert!((p[1] - 1000.0).abs() < 1e-9);
        assert!((p[2] - 550e3).abs() < 1e-6);
    }

    #[test]
    fn default_satellite_pass_covers_the_first_eighty_slots() {
        // With the default phase the pass starts in range and drifts out
        // near slot 81 of 120; the graph must drop satellite links then.
        let sc = Scenario::default();
        let center = [1000.0, 1000.0];
        let in_range = |slot: u32| {
            let t = sc.time.slot_start_s(slot);
            sc.geometry.satellites.iter().all(|orbit| {
                let p = satellite_position(orbit, center, t);
                dist3(p, [center[0], center[1], 0.0]) <= sc.params.max_slant_range_m
            })
        };
        for slot in 0..=80 {
            assert!(in_range(slot), "slot {slot} should be within the pass");
        }
        assert!(!in_range(81), "the pass should end after slot 80");
    }

    #[test]
    fn slot_graph_has_only_feasible_links_and_sorted_nodes() {
        let (graph, positions) = default_graph(&BTreeSet::new());
        assert!(graph.nodes.windows(2).all(|w| w[0].phys < w[1].phys));
        let params = ParameterSet::default();
        for link in &graph.links {
            match link.kind {
                LinkKind::U2U => assert!(link.distance_m <= 500.0),
                LinkKind::G2U | LinkKind::U2G => assert!(link.distance_m <= 800.0),
                LinkKind::U2S | LinkKind::S2S | LinkKind::S2G => {
                    assert!(link.distance_m <= params.max_slant_range_m)
                }
                LinkKind::Storage => {
                    assert_eq!(link.from.phys, link.to.phys);
                    assert_eq!(link.to.slot, link.from.slot + 1);
                }
            }
            if link.kind != LinkKind::Storage {
                assert!(link.rate_bps > 0.0);
            }
        }
        // Every u2u link matches the pairwise distance rule exactly.
        let uu_links: BTreeSet<(u32, u32)> = graph
            .links
            .iter()
            .filter(|l| l.kind == LinkKind::U2U)
            .map(|l| (l.from.phys.index, l.to.phys.index))
            .collect();
        for i in 0..positions.uav.len() {
            for j in 0..positions.uav.len() {
                if i == j {
                    continue;
                }
                let d = dist3(positions.uav[i], positions.uav[j]);
                assert_eq!(
                    uu_links.contains(&(i as u32, j as u32)),
                    d <= 500.0,
                    "pair ({i},{j}) at {d}"
                );
            }
        }
    }

    #[test]
    fn failed_nodes_vanish_with_their_links() {
        let failed: BTreeSet<PhysId> = [PhysId::uav(3), PhysId::satellite(0)].into();
        let (graph, _) = default_graph(&failed);
        for f in &failed {
            assert!(!graph.contains(*f));
        }
        for link in &graph.links {
            assert!(!failed.contains(&link.from.phys));
            assert!(!failed.contains(&link.to.phys));
        }
    }

    #[test]
    fn last_slot_has_no_storage_links() {
        let sc = Scenario::default();
        let budget = LinkBudget::new(&sc.params, &sc.geometry);
        let xy = init_uav_positions(&sc.geometry, &mut seeded_stream(7, "uav-init")).unwrap();
        let positions = SlotPositions::compute(&sc.geometry, &xy, 100.0, 0.0);
        let graph = build_slot_graph(119, 120, &positions, &BTreeSet::new(), &budget);
        assert!(graph.links.iter().all(|l| l.kind != LinkKind::Storage));
        let earlier = build_slot_graph(5, 120, &positions, &BTreeSet::new(), &budget);
        let storage_count =
            earlier.links.iter().filter(|l| l.kind == LinkKind::Storage).count();
        assert_eq!(storage_count, earlier.nodes.len());
    }
}
