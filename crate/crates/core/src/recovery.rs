//! Reassignment of failure-affected services via deferred acceptance.
//!
//! When failures strand services, each affected service ranks the nodes it
//! could continue from — its live-linked neighbors — by how quickly its
//! data could move there and then reach its destination. Nodes rank the
//! services competing for them by what the failure interrupted: services
//! caught mid-processing outrank services that sat stored, which outrank
//! everything else (services caught in transit); within a class, less data
//! is easier to absorb. Proposals proceed in rounds — the lowest-id free
//! service offers itself to its best untried node, nodes keep the best
//! proposals that fit their residual compute capacity and bounce the rest —
//! until no free service has nodes left to try. Each service proposes to
//! each node at most once, so the total proposal count is bounded by
//! `services x nodes`.
//!
//! With uniform per-service compute demands the outcome is stable: no
//! service and node both prefer each other over what they ended up with
//! ([`blocking_pairs`] checks this). With mixed demands a node admits a
//! better-ranked service only if it fits the residual capacity after
//! evicting the single worst-held service, which can in principle leave a
//! blocking pair.

use std::collections::{BTreeMap, BTreeSet};

use crate::scenario::SfcId;
use crate::topology::PhysId;

const CAPACITY_EPS: f64 = 1e-9;

/// What a service was doing when the failure hit it. Determines its rank
/// class in node preferences, best first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AffectClass {
    /// A processing run was interrupted (or its active host died).
    Processing,
    /// Its data sat stored, waiting.
    Stored,
    /// Anything else — typically caught mid-transmission.
    Other,
}

impl AffectClass {
    fn rank(&self) -> u8 {
        match self {
            AffectClass::Processing => 0,
            AffectClass::Stored => 1,
            AffectClass::Other => 2,
        }
    }
}

/// Weights of the scalar score a node assigns a competing service:
/// `processing_weight * [processing] + stored_weight * [stored] +
/// data_weight / data_bits`. With the defaults the class terms dominate
/// the data term for any data amount above a tenth of a bit, so the score
/// ordering reduces to: class first, then less data first. The matching
/// uses that structural comparator directly; these weights document and
/// test the equivalence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceWeights {
    pub processing_weight: f64,
    pub stored_weight: f64,
    pub data_weight: f64,
}

impl Default for PreferenceWeights {
    fn default() -> Self {
        PreferenceWeights { processing_weight: 100.0, stored_weight: 10.0, data_weight: 1.0 }
    }
}

impl PreferenceWeights {
    pub fn score(&self, class: AffectClass, data_bits: f64) -> f64 {
        let class_term = match class {
            AffectClass::Processing => self.processing_weight,
            AffectClass::Stored => self.stored_weight,
            AffectClass::Other => 0.0,
        };
        class_term + self.data_weight / data_bits
    }
}

/// How nodes rank competing services.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestOrder {
    /// Class rank, then less data first.
    AscendingData,
    /// Class rank, but the [`AffectClass::Other`] class prefers more data
    /// first (the largest-first baseline).
    OthersDescendingData,
}

impl RequestOrder {
    /// Ranking key; lexicographically smaller is better. Service id breaks
    /// exact ties so the outcome never depends on input order.
    fn key(&self, req: &RecoveryRequest) -> (u8, f64, SfcId) {
        let rank = req.class.rank();
        let data = match self {
            RequestOrder::AscendingData => req.data_bits,
            RequestOrder::OthersDescendingData if req.class == AffectClass::Other => {
                -req.data_bits
            }
            RequestOrder::OthersDescendingData => req.data_bits,
        };
        (rank, data, req.sfc)
    }

    fn prefers(&self, a: &RecoveryRequest, b: &RecoveryRequest) -> bool {
        let (ka, kb) = (self.key(a), self.key(b));
        ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.cmp(&kb.2)).is_lt()
    }
}

/// One service seeking a new processing host.
#[derive(Debug, Clone)]
pub struct RecoveryRequest {
    pub sfc: SfcId,
    pub class: AffectClass,
    /// Data still to be moved and processed, bits.
    pub data_bits: f64,
    /// Compute demand of the remaining processing, capacity units.
    pub sigma_units: f64,
    /// Nodes this service could continue from, each with the service's
    /// cost of going there (transfer time plus onward time to its
    /// destination, seconds; infinite when the destination is unreachable
    /// from there). Lower cost is preferred; ties break toward the smaller
    /// node id.
    pub candidates: Vec<(PhysId, f64)>,
}

/// Outcome of one recovery round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    pub assignment: BTreeMap<SfcId, PhysId>,
    pub proposals_made: usize,
}

impl Matching {
    pub fn target_of(&self, sfc: SfcId) -> Option<PhysId> {
        self.assignment.get(&sfc).copied()
    }
}

fn sorted_candidates(req: &RecoveryRequest) -> Vec<(f64, PhysId)> {
    let mut c: Vec<(f64, PhysId)> = req.candidates.iter().map(|&(n, cost)| (cost, n)).collect();
    c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    c
}

/// Run deferred acceptance. `offers` maps each node open for recovery to
/// its residual compute capacity; proposals to unlisted nodes are refused.
/// Services absent from the returned assignment exhausted their candidate
/// lists unmatched.
pub fn match_recover(
    requests: &[RecoveryRequest],
    offers: &BTreeMap<PhysId, f64>,
    order: RequestOrder,
) -> Matching {
    let mut reqs: Vec<&RecoveryRequest> = requests.iter().collect();
    reqs.sort_by_key(|r| r.sfc);
    debug_assert!(reqs.windows(2).all(|w| w[0].sfc != w[1].sfc), "one request per service");

    let prefs: Vec<Vec<(f64, PhysId)>> = reqs.iter().map(|r| sorted_candidates(r)).collect();
    let mut cursor = vec![0usize; reqs.len()];
    let mut held: BTreeMap<PhysId, Vec<usize>> = BTreeMap::new();
    let mut free: BTreeSet<usize> = (0..reqs.len()).collect();
    let mut proposals = 0usize;

    // Smallest-id free service proposes next; each proposal consumes a
    // preference entry permanently, so the loop makes at most
    // sum(|candidates|) proposals.
    while let Some(&i) = free.iter().next() {
        if cursor[i] >= prefs[i].len() {
            free.remove(&i);
            continue;
        }
        let (_, node) = prefs[i][cursor[i]];
        cursor[i] += 1;
        proposals += 1;

        let capacity = offers.get(&node).copied().unwrap_or(0.0);
        let holders = held.entry(node).or_default();
        let used: f64 = holders.iter().map(|&h| reqs[h].sigma_units).sum();
        if used + reqs[i].sigma_units <= capacity + CAPACITY_EPS {
            holders.push(i);
            free.remove(&i);
            continue;
        }
        // Full: admit only over the worst-held service, if the swap fits.
        // A node can refuse outright when its residual capacity is too
        // small even while holding nothing.
        let Some(worst) = holders.iter().copied().max_by(|&a, &b| {
            if order.prefers(reqs[a], reqs[b]) {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Greater
            }
        }) else {
            continue;
        };
        let fits_after_swap =
            used - reqs[worst].sigma_units + reqs[i].sigma_units <= capacity + CAPACITY_EPS;
        if order.prefers(reqs[i], reqs[worst]) && fits_after_swap {
            holders.retain(|&h| h != worst);
            holders.push(i);
            free.remove(&i);
            free.insert(worst);
        }
        // Otherwise the proposal is refused and i keeps proposing onward.
    }

    let mut assignment = BTreeMap::new();
    for (node, holders) in &held {
        for &h in holders {
            assignment.insert(reqs[h].sfc, *node);
        }
    }
    Matching { assignment, proposals_made: proposals }
}

/// Service/node pairs that would both rather have each other than their
/// outcome: the service strictly prefers the node to its assignment (or is
/// unmatched), and the node could take it — outright within residual
/// capacity, or by dropping one held service it ranks below the candidate.
pub fn blocking_pairs(
    requests: &[RecoveryRequest],
    offers: &BTreeMap<PhysId, f64>,
    order: RequestOrder,
    matching: &Matching,
) -> Vec<(SfcId, PhysId)> {
    let by_id: BTreeMap<SfcId, &RecoveryRequest> = requests.iter().map(|r| (r.sfc, r)).collect();
    let mut held: BTreeMap<PhysId, Vec<&RecoveryRequest>> = BTreeMap::new();
    for (&sfc, &node) in &matching.assignment {
        held.entry(node).or_default().push(by_id[&sfc]);
    }
    let mut blocking = Vec::new();
    for req in requests.iter() {
        let prefs = sorted_candidates(req);
        let matched_rank = matching
            .target_of(req.sfc)
            .and_then(|node| prefs.iter().position(|&(_, n)| n == node));
        for (rank, &(_, node)) in prefs.iter().enumerate() {
            if matched_rank.is_some_and(|m| rank >= m) {
                break;
            }
            let capacity = offers.get(&node).copied().unwrap_or(0.0);
            let holders = held.get(&node).map(Vec::as_slice).unwrap_or(&[]);
            let used: f64 = holders.iter().map(|h| h.sigma_units).sum();
            let fits = used + req.sigma_units <= capacity + CAPACITY_EPS;
            let fits_by_swap = holders.iter().any(|h| {
                order.prefers(req, h)
                    && used - h.sigma_units + req.sigma_units <= capacity + CAPACITY_EPS
            });
            if fits || fits_by_swap {
                blocking.push((req.sfc, node));
            }
        }
    }
    blocking
}

/// First blocking pair if any — `None` means the matching is stable.
pub fn stability_witness(
    requests: &[RecoveryRequest],
    offers: &BTreeMap<PhysId, f64>,
    order: RequestOrder,
    matching: &Matching,
) -> Option<(SfcId, PhysId)> {
    blocking_pairs(requests, offers, order, matching).into_iter().next()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn u(i: u32) -> PhysId {
        PhysId::uav(i)
    }

    fn req(
        id: u32,
        class: AffectClass,
        data_bits: f64,
        sigma: f64,
        candidates: &[(PhysId, f64)],
    ) -> RecoveryRequest {
        RecoveryRequest {
            sfc: SfcId(id),
            class,
            data_bits,
            sigma_units: sigma,
            candidates: candidates.to_vec(),
        }
    }

    fn offers(cap: &[(PhysId, f64)]) -> BTreeMap<PhysId, f64> {
        cap.iter().copied().collect()
    }

    const ORDER: RequestOrder = RequestOrder::AscendingData;

    #[test]
    fn lone_service_takes_its_best_node() {
        let r = [req(0, AffectClass::Other, 1e8, 1.0, &[(u(1), 5.0), (u(0), 2.0)])];
        let m = match_recover(&r, &offers(&[(u(0), 1.0), (u(1), 1.0)]), ORDER);
        assert_eq!(m.target_of(SfcId(0)), Some(u(0)));
        assert_eq!(m.proposals_made, 1);
    }

    #[test]
    fn classes_outrank_data_amounts() {
        // Interrupted-processing beats stored beats in-transit on the
        // contested node even with the largest data amount.
        let shared = [(u(0), 1.0), (u(1), 9.0), (u(2), 9.5)];
        let r = [
            req(0, AffectClass::Stored, 1e8, 1.0, &shared),
            req(1, AffectClass::Processing, 8e8, 1.0, &shared),
            req(2, AffectClass::Other, 1e7, 1.0, &shared),
        ];
        let m = match_recover(&r, &offers(&[(u(0), 1.0), (u(1), 1.0), (u(2), 1.0)]), ORDER);
        assert_eq!(m.target_of(SfcId(1)), Some(u(0)));
        assert_eq!(m.target_of(SfcId(0)), Some(u(1)));
        assert_eq!(m.target_of(SfcId(2)), Some(u(2)));
    }

    #[test]
    fn within_a_class_less_data_wins() {
        let shared = [(u(0), 1.0), (u(1), 9.0)];
        let r = [
            req(0, AffectClass::Stored, 9e8, 1.0, &shared),
            req(1, AffectClass::Stored, 1e8, 1.0, &shared),
        ];
        let m = match_recover(&r, &offers(&[(u(0), 1.0), (u(1), 1.0)]), ORDER);
        assert_eq!(m.target_of(SfcId(1)), Some(u(0)));
        assert_eq!(m.target_of(SfcId(0)), Some(u(1)));
    }

    #[test]
    fn largest_first_order_flips_only_the_other_class() {
        let shared = [(u(0), 1.0), (u(1), 9.0)];
        let other = [
            req(0, AffectClass::Other, 9e8, 1.0, &shared),
            req(1, AffectClass::Other, 1e8, 1.0, &shared),
        ];
        let m =
            match_recover(&other, &offers(&[(u(0), 1.0), (u(1), 1.0)]), RequestOrder::OthersDescendingData);
        assert_eq!(m.target_of(SfcId(0)), Some(u(0)), "more data wins in the other class");

        let stored = [
            req(0, AffectClass::Stored, 9e8, 1.0, &shared),
            req(1, AffectClass::Stored, 1e8, 1.0, &shared),
        ];
        let m = match_recover(&stored, &offers(&[(u(0), 1.0), (u(1), 1.0)]), RequestOrder::OthersDescendingData);
        assert_eq!(m.target_of(SfcId(1)), Some(u(0)), "stored class still prefers less data");
    }

    #[test]
    fn eviction_sends_the_loser_down_its_list() {
        // Service 0 grabs u0 first; service 1 (interrupted processing)
        // proposes later, evicts it, and 0 settles for u1.
        let r = [
            req(0, AffectClass::Other, 1e8, 1.0, &[(u(0), 1.0), (u(1), 2.0)]),
            req(1, AffectClass::Processing, 1e8, 1.0, &[(u(0), 1.0)]),
        ];
        let m = match_recover(&r, &offers(&[(u(0), 1.0), (u(1), 1.0)]), ORDER);
        assert_eq!(m.target_of(SfcId(1)), Some(u(0)));
        assert_eq!(m.target_of(SfcId(0)), Some(u(1)));
        assert_eq!(m.proposals_made, 3);
    }

    #[test]
    fn capacity_two_node_holds_two_services() {
        let r = [
            req(0, AffectClass::Stored, 1e8, 1.0, &[(u(0), 1.0)]),
            req(1, AffectClass::Stored, 2e8, 1.0, &[(u(0), 1.0)]),
        ];
        let m = match_recover(&r, &offers(&[(u(0), 2.0)]), ORDER);
        assert_eq!(m.target_of(SfcId(0)), Some(u(0)));
        assert_eq!(m.target_of(SfcId(1)), Some(u(0)));
    }

    #[test]
    fn demand_aware_acceptance_counts_units() {
        // Capacity 1.5 holding sigma=1.0; a better sigma=1.0 service fits
        // only via the swap, a sigma=2.0 one not at all.
        let r = [
            req(0, AffectClass::Stored, 5e8, 1.0, &[(u(0), 1.0)]),
            req(1, AffectClass::Processing, 1e8, 1.0, &[(u(0), 1.0)]),
            req(2, AffectClass::Processing, 1e7, 2.0, &[(u(0), 1.0)]),
        ];
        let m = match_recover(&r, &offers(&[(u(0), 1.5)]), ORDER);
        assert_eq!(m.target_of(SfcId(2)), None, "oversized demand never fits");
        assert_eq!(m.target_of(SfcId(1)), Some(u(0)));
        assert_eq!(m.target_of(SfcId(0)), None);
    }

    #[test]
    fn unreachable_destination_candidates_sort_last() {
        let r = [req(
            0,
            AffectClass::Other,
            1e8,
            1.0,
            &[(u(0), f64::INFINITY), (u(1), 50.0)],
        )];
        let m = match_recover(&r, &offers(&[(u(0), 1.0), (u(1), 1.0)]), ORDER);
        assert_eq!(m.target_of(SfcId(0)), Some(u(1)));
    }

    #[test]
    fn input_order_does_not_change_the_outcome() {
        let shared = [(u(0), 3.0), (u(1), 1.0), (u(2), 2.0)];
        let mut r = vec![
            req(2, AffectClass::Processing, 4e8, 1.0, &shared),
            req(0, AffectClass::Other, 2e8, 1.0, &shared),
            req(1, AffectClass::Stored, 1e8, 1.0, &shared),
        ];
        let caps = offers(&[(u(0), 1.0), (u(1), 1.0), (u(2), 1.0)]);
        let first = match_recover(&r, &caps, ORDER);
        r.reverse();
        assert_eq!(match_recover(&r, &caps, ORDER), first);
    }

    #[test]
    fn score_ordering_matches_the_structural_comparator() {
        let w = PreferenceWeights::default();
        let cases = [
            (AffectClass::Processing, 9.9e8),
            (AffectClass::Processing, 1e6),
            (AffectClass::Stored, 1.0),
            (AffectClass::Stored, 3e8),
            (AffectClass::Other, 5.0),
            (AffectClass::Other, 7e8),
        ];
        for (i, &(ca, da)) in cases.iter().enumerate() {
            for (j, &(cb, db)) in cases.iter().enumerate() {
                if i == j {
                    continue;
                }
                let a = req(0, ca, da, 1.0, &[]);
                let b = req(1, cb, db, 1.0, &[]);
                if w.score(ca, da) > w.score(cb, db) {
                    assert!(
                        RequestOrder::AscendingData.prefers(&a, &b),
                        "case {i} vs {j}: score order and comparator disagree"
                    );
                }
            }
        }
    }

    #[test]
    fn planted_blocking_pair_is_reported() {
        // Hand-built unstable outcome: service 0 sits on its second
        // choice while its first choice holds a worse-ranked service.
        let r = [
            req(0, AffectClass::Processing, 1e8, 1.0, &[(u(0), 1.0), (u(1), 2.0)]),
            req(1, AffectClass::Other, 9e8, 1.0, &[(u(0), 1.0)]),
        ];
        let caps = offers(&[(u(0), 1.0), (u(1), 1.0)]);
        let bad = Matching {
            assignment: BTreeMap::from([(SfcId(0), u(1)), (SfcId(1), u(0))]),
            proposals_made: 2,
        };
        assert_eq!(stability_witness(&r, &caps, ORDER, &bad), Some((SfcId(0), u(0))));
        let good = match_recover(&r, &caps, ORDER);
        assert_eq!(stability_witness(&r, &caps, ORDER, &good), None);
    }

    proptest! {
        #[test]
        fn uniform_demand_outcomes_have_no_blocking_pairs(
            caps in proptest::collection::vec(1u8..=2, 1..5),
            raw in proptest::collection::vec(
                (0u8..3, 1u32..1_000_000, proptest::collection::vec(proptest::option::of(0u32..100), 5)),
                1..7,
            ),
        ) {
            let offers: BTreeMap<PhysId, f64> =
                caps.iter().enumerate().map(|(i, &c)| (u(i as u32), c as f64)).collect();
            let requests: Vec<RecoveryRequest> = raw
                .iter()
                .enumerate()
                .map(|(i, (class, delta, cands))| {
                    let class = match class {
                        0 => AffectClass::Processing,
                        1 => AffectClass::Stored,
                        _ => AffectClass::Other,
                    };
                    let candidates: Vec<(PhysId, f64)> = cands
                        .iter()
                        .take(caps.len())
                        .enumerate()
                        .filter_map(|(n, c)| c.map(|cost| (u(n as u32), cost as f64)))
                        .collect();
                    req(i as u32, class, *delta as f64 * 1e3, 1.0, &candidates)
                })
                .collect();
            for order in [RequestOrder::AscendingData, RequestOrder::OthersDescendingData] {
                let m = match_recover(&requests, &offers, order);
                let blocks = blocking_pairs(&requests, &offers, order, &m);
                prop_assert!(blocks.is_empty(), "blocking pairs {blocks:?}");
                prop_assert!(m.proposals_made <= requests.len() * offers.len());
            }
        }
    }
}
