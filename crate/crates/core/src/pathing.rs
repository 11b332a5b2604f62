//! Deterministic shortest-route computation within one slot.
//!
//! Routes minimize total transfer time: each transmission link costs
//! `data_bits / rate_bps` seconds. Ground stations act only as endpoints —
//! a route never relays through an intermediate ground station, so every
//! interior node is a UAV or satellite and can host processing. Ties are
//! broken toward smaller node ids, which makes the returned route a pure
//! function of the graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::topology::{Layer, PhysId, SlotGraph};

/// A relay route within one slot, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<PhysId>,
    /// Total transfer time along the route, seconds.
    pub transfer_s: f64,
}

impl Path {
    /// Interior and terminal relay nodes, i.e. everything except ground
    /// endpoints. These are the nodes able to host processing.
    pub fn relay_nodes(&self) -> impl Iterator<Item = PhysId> + '_ {
        self.nodes.iter().copied().filter(|n| n.layer != Layer::Ground)
    }
}

#[derive(PartialEq)]
struct QueueEntry {
    cost: f64,
    node: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: invert so the cheapest (then smallest
        // id) entry pops first. Costs are finite by construction.
        other
            .cost
            .partial_cmp(&self.cost)
            .expect("path costs are finite")
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra on an adjacency-list digraph with nonnegative finite weights.
/// Returns the total weight and node sequence of a cheapest `from -> to`
/// path. Equal-cost alternatives resolve toward the path whose nodes were
/// settled first in (cost, index) order, so the result is deterministic.
pub fn dijkstra(adj: &[Vec<(usize, f64)>], from: usize, to: usize) -> Option<(f64, Vec<usize>)> {
    let n = adj.len();
    if from >= n || to >= n {
        return None;
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[from] = 0.0;
    heap.push(QueueEntry { cost: 0.0, node: from });
    while let Some(QueueEntry { cost, node }) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        if node == to {
            break;
        }
        for &(next, w) in &adj[node] {
            debug_assert!(w >= 0.0 && w.is_finite());
            let candidate = cost + w;
            if candidate < dist[next] {
                dist[next] = candidate;
                prev[next] = node;
                heap.push(QueueEntry { cost: candidate, node: next });
            }
        }
    }
    if dist[to].is_infinite() {
        return None;
    }
    let mut order = vec![to];
    while *order.last().unwrap() != from {
        order.push(prev[*order.last().unwrap()]);
    }
    order.reverse();
    Some((dist[to], order))
}

/// Cheapest relay route for `data_bits` from `from` to `to` in this slot's
/// graph, or `None` when no route exists. Intermediate ground stations are
/// excluded; `from` and `to` may be any live nodes.
pub fn shortest_route(
    graph: &SlotGraph,
    from: PhysId,
    to: PhysId,
    data_bits: f64,
) -> Option<Path> {
    if !graph.contains(from) || !graph.contains(to) {
        return None;
    }
    if from == to {
        return Some(Path { nodes: vec![from], transfer_s: 0.0 });
    }
    let ids: Vec<PhysId> = graph.nodes.iter().map(|n| n.phys).collect();
    let index_of = |id: PhysId| ids.binary_search(&id).expect("node is in graph");
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ids.len()];
    for (i, &id) in ids.iter().enumerate() {
        if id.layer == Layer::Ground && id != from {
            continue;
        }
        for link in graph.transmission_links_from(id) {
            let target = link.to.phys;
            if target.layer == Layer::Ground && target != to {
                continue;
            }
            adj[i].push((index_of(target), data_bits / link.rate_bps));
        }
    }
    let (transfer_s, order) = dijkstra(&adj, index_of(from), index_of(to))?;
    Some(Path { nodes: order.into_iter().map(|i| ids[i]).collect(), transfer_s })
}

/// Transfer time of `data_bits` from `from` to the ground destination along
/// the best route this slot, or `None` when unreachable.
pub fn time_to_destination(
    graph: &SlotGraph,
    from: PhysId,
    destination: PhysId,
    data_bits: f64,
) -> Option<f64> {
    shortest_route(graph, from, destination, data_bits).map(|p| p.transfer_s)
}
