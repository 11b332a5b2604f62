//! Exact solver for tiny instances, plus a solver-ready text export.
//!
//! The solver enumerates complete schedules: for every pair of routes with
//! every in-order function placement, and every interleaving of the two
//! chains' actions, it computes the earliest-start timing under link
//! serialization, per-slot link capacity, per-slot compute capacity, node
//! liveness windows, and the horizon. Each improving candidate is converted
//! into an event log and replayed through the independent auditor before it
//! is accepted, so the reported optimum is feasible by construction.
//!
//! The measured value per chain is the span from its first transmitted bit
//! to its completion at the destination — the same accounting the simulator
//! reports — summed over chains.
//!
//! Timing within a fixed interleaving is earliest-start: every action runs
//! as soon as its chain and its resources allow. The simulator also never
//! idles a ready action, so its realized schedules all live inside this
//! search space and can never beat the reported optimum.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::Deserialize;

use crate::audit::{audit_event_log, AuditConfig, AuditSfc};
use crate::engine::{run_with_source, EngineParams, EngineSfc, RunOutput, StaticWorld};
use crate::scenario::{seeded_stream, Policy, SfcId};
use crate::topology::{Layer, LinkKind, PhysId};
use thiserror::Error;

pub const MAX_NODES: usize = 5;
pub const MAX_SLOTS: u32 = 4;
pub const MAX_SFCS: usize = 2;
pub const MAX_VNFS: usize = 2;
/// Enumeration refuses instances whose schedule count exceeds this.
pub const MAX_SCHEDULES: u64 = 10_000_000;

const EPS_T: f64 = 1e-9;

/// A fully static instance small enough for exhaustive search.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub slot_length_s: f64,
    pub slot_count: u32,
    pub compute_capacity_units: f64,
    pub storage_capacity_bits: f64,
    pub energy_budget_j: f64,
    pub compute_units_per_slot: f64,
    pub compute_energy_per_unit_j: f64,
    pub operation_power_w: f64,
    /// Directed links with static rates, live whenever both ends are live.
    pub links: Vec<(PhysId, PhysId, f64)>,
    /// Failed node set per slot index.
    pub failed_by_slot: Vec<BTreeSet<PhysId>>,
    pub sfcs: Vec<EngineSfc>,
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance outside enumeration bounds: {0}")]
    BoundExceeded(String),
    #[error("no feasible schedule exists for this instance")]
    Infeasible,
    #[error("instance parse error: {0}")]
    Parse(String),
}

/// Exact optimum with a feasibility witness.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub total_delay_s: f64,
    pub per_sfc_delay_s: Vec<f64>,
    /// Event log of the optimal schedule; replays clean under the auditor.
    pub witness_log: String,
    pub schedules_examined: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    slot_length_s: f64,
    slot_count: u32,
    compute_capacity_units: f64,
    storage_capacity_bits: f64,
    energy_budget_j: f64,
    compute_units_per_slot: f64,
    compute_energy_per_unit_j: f64,
    operation_power_w: f64,
    links: Vec<RawLink>,
    #[serde(default)]
    failures: Vec<RawFailure>,
    sfcs: Vec<RawSfc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    from: String,
    to: String,
    rate_bps: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFailure {
    slot: u32,
    nodes: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSfc {
    id: u32,
    origin: usize,
    destination: usize,
    data_bits: f64,
    sigma: Vec<f64>,
}

impl TinyInstance {
    pub fn from_toml(text: &str) -> Result<TinyInstance, OracleError> {
        let raw: RawInstance =
            toml::from_str(text).map_err(|e| OracleError::Parse(e.to_string()))?;
        let node = |s: &str| {
            PhysId::parse(s).ok_or_else(|| OracleError::Parse(format!("bad node id {s}")))
        };
        let mut links = Vec::new();
        for l in &raw.links {
            links.push((node(&l.from)?, node(&l.to)?, l.rate_bps));
        }
        let mut failed_by_slot = vec![BTreeSet::new(); raw.slot_count as usize];
        for f in &raw.failures {
            if f.slot >= raw.slot_count {
                return Err(OracleError::Parse(format!("failure slot {} out of range", f.slot)));
            }
            for n in &f.nodes {
                failed_by_slot[f.slot as usize].insert(node(n)?);
            }
        }
        let inst = TinyInstance {
            slot_length_s: raw.slot_length_s,
            slot_count: raw.slot_count,
            compute_capacity_units: raw.compute_capacity_units,
            storage_capacity_bits: raw.storage_capacity_bits,
            energy_budget_j: raw.energy_budget_j,
            compute_units_per_slot: raw.compute_units_per_slot,
            compute_energy_per_unit_j: raw.compute_energy_per_unit_j,
            operation_power_w: raw.operation_power_w,
            links,
            failed_by_slot,
            sfcs: raw
                .sfcs
                .iter()
                .map(|s| EngineSfc {
                    id: SfcId(s.id),
                    origin_index: s.origin,
                    destination_index: s.destination,
                    data_bits: s.data_bits,
                    sigma: s.sigma.clone(),
                })
                .collect(),
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn nodes(&self) -> BTreeSet<PhysId> {
        self.links.iter().flat_map(|&(a, b, _)| [a, b]).collect()
    }

    pub fn engine_params(&self) -> EngineParams {
        EngineParams {
            slot_length_s: self.slot_length_s,
            compute_capacity_units: self.compute_capacity_units,
            storage_capacity_bits: self.storage_capacity_bits,
            energy_budget_j: self.energy_budget_j,
            compute_units_per_slot: self.compute_units_per_slot,
            compute_energy_per_unit_j: self.compute_energy_per_unit_j,
            operation_power_w: self.operation_power_w,
            tx_power_w: BTreeMap::new(),
            rx_power_w: BTreeMap::new(),
            propulsion: None,
        }
    }

    pub fn audit_config(&self) -> AuditConfig {
        AuditConfig::from_parts(&self.engine_params(), &self.sfcs, self.slot_count)
    }

    pub fn static_world(&self) -> StaticWorld {
        StaticWorld::new(
            self.slot_length_s,
            self.slot_count,
            self.links.clone(),
            self.failed_by_slot.clone(),
        )
    }

    /// Run the simulator's heuristic on this instance for gap comparison.
    pub fn run_heuristic(&self, policy: Policy, seed: u64) -> RunOutput {
        let mut world = self.static_world();
        run_with_source(&mut world, &self.engine_params(), &self.sfcs, policy, seed, format!("tiny-{seed}"))
    }

    fn is_failed(&self, slot: u32, node: PhysId) -> bool {
        self.failed_by_slot
            .get(slot as usize)
            .map(|s| s.contains(&node))
            .unwrap_or(false)
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let nodes = self.nodes();
        if nodes.len() > MAX_NODES {
            return Err(OracleError::BoundExceeded(format!(
                "{} nodes exceed the {MAX_NODES}-node bound",
                nodes.len()
            )));
        }
        if self.slot_count == 0 || self.slot_count > MAX_SLOTS {
            return Err(OracleError::BoundExceeded(format!(
                "{} slots outside 1..={MAX_SLOTS}",
                self.slot_count
            )));
        }
        if self.sfcs.is_empty() || self.sfcs.len() > MAX_SFCS {
            return Err(OracleError::BoundExceeded(format!(
                "{} chains outside 1..={MAX_SFCS}",
                self.sfcs.len()
            )));
        }
        for s in &self.sfcs {
            if s.sigma.is_empty() || s.sigma.len() > MAX_VNFS {
                return Err(OracleError::BoundExceeded(format!(
                    "chain {} has {} functions, outside 1..={MAX_VNFS}",
                    s.id, s.sigma.len()
                )));
            }
            let (o, d) = (PhysId::ground(s.origin_index as u32), PhysId::ground(s.destination_index as u32));
            if !nodes.contains(&o) || !nodes.contains(&d) {
                return Err(OracleError::Parse(format!("chain {} endpoints not in the graph", s.id)));
            }
        }
        let estimate = self.schedule_estimate();
        if estimate > MAX_SCHEDULES {
            return Err(OracleError::BoundExceeded(format!(
                "approximately {estimate} schedules exceed the {MAX_SCHEDULES} bound"
            )));
        }
        Ok(())
    }

    /// Upper bound on the number of (plan pair, interleaving) schedules.
    pub fn schedule_estimate(&self) -> u64 {
        let plans: Vec<Vec<Plan>> = self.sfcs.iter().map(|s| self.plans_for(s)).collect();
        match plans.len() {
            1 => plans[0].len() as u64,
            _ => {
                let mut total: u64 = 0;
                for a in &plans[0] {
                    for b in &plans[1] {
                        total = total
                            .saturating_add(binomial(a.actions.len() + b.actions.len(), a.actions.len()));
                    }
                }
                total
            }
        }
    }

    fn rate_map(&self) -> BTreeMap<(PhysId, PhysId), f64> {
        self.links.iter().map(|&(a, b, r)| ((a, b), r)).collect()
    }

    /// All (simple path, in-order function placement) plans for one chain.
    fn plans_for(&self, sfc: &EngineSfc) -> Vec<Plan> {
        let origin = PhysId::ground(sfc.origin_index as u32);
        let destination = PhysId::ground(sfc.destination_index as u32);
        let mut adj: BTreeMap<PhysId, Vec<PhysId>> = BTreeMap::new();
        for &(a, b, _) in &self.links {
            adj.entry(a).or_default().push(b);
        }
        for v in adj.values_mut() {
            v.sort();
            v.dedup();
        }
        let rates = self.rate_map();
        let mut paths = Vec::new();
        let mut stack = vec![origin];
        simple_paths(&adj, destination, &mut stack, &mut paths);
        let mut plans = Vec::new();
        for path in paths {
            // Function hosts must be aerial or orbital nodes on the path.
            let hosts: Vec<usize> = (1..path.len() - 1)
                .filter(|&i| path[i].layer != Layer::Ground)
                .collect();
            for placement in placements(&hosts, sfc.sigma.len()) {
                let mut actions = Vec::new();
                for j in 1..path.len() {
                    actions.push(Action::Hop {
                        from: path[j - 1],
                        to: path[j],
                        rate: rates[&(path[j - 1], path[j])],
                    });
                    for (m, &pos) in placement.iter().enumerate() {
                        if pos == j {
                            actions.push(Action::Proc {
                                vnf: m,
                                node: path[j],
                                sigma: sfc.sigma[m],
                            });
                        }
                    }
                }
                plans.push(Plan { actions });
            }
        }
        plans
    }
}

fn binomial(n: usize, k: usize) -> u64 {
    let mut out: u64 = 1;
    for i in 0..k.min(n - k) {
        out = out.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    out
}

fn simple_paths(
    adj: &BTreeMap<PhysId, Vec<PhysId>>,
    goal: PhysId,
    stack: &mut Vec<PhysId>,
    out: &mut Vec<Vec<PhysId>>,
) {
    let here = *stack.last().unwrap();
    if here == goal {
        out.push(stack.clone());
        return;
    }
    let Some(next) = adj.get(&here) else { return };
    for &n in next {
        if stack.contains(&n) {
            continue;
        }
        stack.push(n);
        simple_paths(adj, goal, stack, out);
        stack.pop();
    }
}

/// All nondecreasing assignments of `count` functions to `hosts` positions.
fn placements(hosts: &[usize], count: usize) -> Vec<Vec<usize>> {
    if count == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(hosts: &[usize], count: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == count {
            out.push(cur.clone());
            return;
        }
        for (i, &h) in hosts.iter().enumerate().skip(from) {
            cur.push(h);
            rec(hosts, count, i, cur, out);
            cur.pop();
        }
    }
    rec(hosts, count, 0, &mut cur, &mut out);
    out
}

#[derive(Debug, Clone)]
enum Action {
    Hop { from: PhysId, to: PhysId, rate: f64 },
    Proc { vnf: usize, node: PhysId, sigma: f64 },
}

#[derive(Debug, Clone)]
struct Plan {
    actions: Vec<Action>,
}

/// Resource books for one candidate schedule.
#[derive(Default, Clone)]
struct Books {
    link_busy: BTreeMap<(PhysId, PhysId), Vec<(f64, f64)>>,
    node_runs: BTreeMap<PhysId, Vec<(f64, f64, f64)>>,
}

#[derive(Clone, Default)]
struct ChainSchedule {
    first_tx: Option<f64>,
    ready: f64,
    bursts: Vec<(u32, f64, f64, PhysId, PhysId, f64)>,
    procs: Vec<(usize, PhysId, f64, f64, f64)>,
    arrivals: Vec<(f64, PhysId)>,
    completion: f64,
}

fn free_intervals(busy: &[(f64, f64)], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut within: Vec<(f64, f64)> = busy
        .iter()
        .copied()
        .filter(|&(a, b)| b > lo + EPS_T && a < hi - EPS_T)
        .collect();
    within.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out = Vec::new();
    let mut cur = lo;
    for (a, b) in within {
        if a > cur + EPS_T {
            out.push((cur, a.min(hi)));
        }
        cur = cur.max(b);
        if cur >= hi - EPS_T {
            break;
        }
    }
    if cur < hi - EPS_T {
        out.push((cur, hi));
    }
    out
}

impl Books {
    /// Earliest transfer of `bits` over `from -> to`, pausing across dead or
    /// busy stretches. Returns per-slot bursts and the arrival time.
    fn schedule_hop(
        &mut self,
        inst: &TinyInstance,
        from: PhysId,
        to: PhysId,
        rate: f64,
        bits: f64,
        ready: f64,
    ) -> Option<(Vec<(u32, f64, f64)>, f64)> {
        let tau = inst.slot_length_s;
        let mut remaining = bits / rate;
        let mut bursts = Vec::new();
        let first_slot = (ready / tau).floor().max(0.0) as u32;
        'slots: for s in first_slot..inst.slot_count {
            if inst.is_failed(s, from) || inst.is_failed(s, to) {
                continue;
            }
            let lo = (s as f64 * tau).max(ready);
            let hi = (s as f64 + 1.0) * tau;
            if lo >= hi - EPS_T {
                continue;
            }
            let busy = self.link_busy.entry((from, to)).or_default().clone();
            for (a, b) in free_intervals(&busy, lo, hi) {
                let take = (b - a).min(remaining);
                if take > EPS_T {
                    bursts.push((s, a, a + take));
                    remaining -= take;
                    if remaining <= EPS_T {
                        break 'slots;
                    }
                }
            }
        }
        if remaining > EPS_T {
            return None;
        }
        let arrival = bursts.last().map(|&(_, _, b)| b)?;
        let list = self.link_busy.entry((from, to)).or_default();
        for &(_, a, b) in &bursts {
            list.push((a, b));
        }
        list.sort_by(|x, y| x.0.total_cmp(&y.0));
        Some((bursts, arrival))
    }

    /// Earliest contiguous run of `sigma` demand at `node`, entirely within
    /// live slots and within per-slot concurrent-demand capacity.
    fn schedule_proc(
        &mut self,
        inst: &TinyInstance,
        node: PhysId,
        sigma: f64,
        ready: f64,
    ) -> Option<(f64, f64)> {
        let tau = inst.slot_length_s;
        let d = sigma / inst.compute_units_per_slot * tau;
        let horizon = inst.slot_count as f64 * tau;
        let mut cands = vec![ready];
        if let Some(runs) = self.node_runs.get(&node) {
            for &(_, e, _) in runs {
                if e > ready - EPS_T {
                    cands.push(e);
                }
            }
        }
        for k in 1..=inst.slot_count {
            let b = k as f64 * tau;
            if b > ready {
                cands.push(b);
            }
        }
        cands.sort_by(|x, y| x.total_cmp(y));
        cands.dedup_by(|a, b| (*a - *b).abs() < EPS_T);
        'cand: for &t0 in &cands {
            let t1 = t0 + d;
            if t1 > horizon + EPS_T {
                return None;
            }
            let s_first = (t0 / tau).floor().max(0.0) as u32;
            let s_last = (((t1 - EPS_T) / tau).floor().max(0.0) as u32).min(inst.slot_count - 1);
            for s in s_first..=s_last {
                if inst.is_failed(s, node) {
                    continue 'cand;
                }
                let mut used = sigma;
                if let Some(runs) = self.node_runs.get(&node) {
                    for &(a, b, sg) in runs {
                        let r_first = (a / tau).floor().max(0.0) as u32;
                        let r_last = ((b - EPS_T) / tau).floor().max(0.0) as u32;
                        if r_first <= s && s <= r_last {
                            used += sg;
                        }
                    }
                }
                if used > inst.compute_capacity_units + 1e-9 {
                    continue 'cand;
                }
            }
            self.node_runs.entry(node).or_default().push((t0, t1, sigma));
            return Some((t0, t1));
        }
        None
    }
}

/// Build the event log for a complete schedule so the auditor can check it.
fn synthesize_log(inst: &TinyInstance, chains: &[ChainSchedule]) -> String {
    let tau = inst.slot_length_s;
    // (t, class, seq) ordering mirrors the simulator: closings before
    // failure flips, flips before openings.
    let mut events: Vec<(f64, u8, usize, u32, String)> = Vec::new();
    let mut seq = 0usize;
    let mut push = |events: &mut Vec<(f64, u8, usize, u32, String)>, t: f64, class: u8, slot: u32, body: String| {
        events.push((t, class, seq, slot, body));
        seq += 1;
    };
    for (k, s) in inst.sfcs.iter().enumerate() {
        let origin = PhysId::ground(s.origin_index as u32);
        let id = s.id.0;
        let bits = s.data_bits;
        push(&mut events, 0.0, 2, 0, format!("arrive sfc={id} node={origin} bits={bits}"));
        let ch = &chains[k];
        for &(slot, a, b, from, to, rate) in &ch.bursts {
            let kind = LinkKind::between(from.layer, to.layer).expect("layers link");
            let burst_bits = rate * (b - a);
            push(
                &mut events,
                a,
                6,
                slot,
                format!("tx_start sfc={id} from={from} to={to} kind={kind} rate={rate} bits={burst_bits}"),
            );
            push(&mut events, b, 0, slot, format!("tx_end sfc={id} from={from} to={to} bits={burst_bits}"));
        }
        for &(t, node) in &ch.arrivals {
            let slot = (((t - EPS_T) / tau).floor().max(0.0) as u32).min(inst.slot_count - 1);
            push(&mut events, t, 2, slot, format!("arrive sfc={id} node={node} bits={bits}"));
        }
        for &(vnf, node, sigma, t0, t1) in &ch.procs {
            let s0 = ((t0 + EPS_T) / tau).floor() as u32;
            let s1 = (((t1 - EPS_T) / tau).floor().max(0.0) as u32).min(inst.slot_count - 1);
            push(&mut events, t0, 7, s0.min(inst.slot_count - 1), format!("process_start sfc={id} vnf={vnf} node={node} sigma={sigma}"));
            push(&mut events, t1, 1, s1, format!("process_end sfc={id} vnf={vnf} node={node}"));
        }
        let t = ch.completion;
        let slot = (((t - EPS_T) / tau).floor().max(0.0) as u32).min(inst.slot_count - 1);
        push(&mut events, t, 3, slot, format!("complete sfc={id}"));
    }
    for s in 0..inst.slot_count {
        let cur = inst.failed_by_slot.get(s as usize).cloned().unwrap_or_default();
        let prev = if s == 0 {
            BTreeSet::new()
        } else {
            inst.failed_by_slot.get(s as usize - 1).cloned().unwrap_or_default()
        };
        let b = s as f64 * tau;
        for n in cur.difference(&prev) {
            push(&mut events, b, 4, s, format!("fail node={n}"));
        }
        for n in prev.difference(&cur) {
            push(&mut events, b, 5, s, format!("recover node={n}"));
        }
    }
    events.sort_by(|x, y| {
        x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2))
    });
    let mut log = String::new();
    for (t, _, _, slot, body) in events {
        log.push_str(&format!("t={t:.9} slot={slot} ev={body}\n"));
    }
    log
}

/// Exhaustive search over routes, placements, and action interleavings.
pub fn enumerate_optimal(inst: &TinyInstance) -> Result<OracleSolution, OracleError> {
    inst.validate()?;
    let cfg = inst.audit_config();
    let plan_sets: Vec<Vec<Plan>> = inst.sfcs.iter().map(|s| inst.plans_for(s)).collect();
    if plan_sets.iter().any(|p| p.is_empty()) {
        return Err(OracleError::Infeasible);
    }
    let mut best: Option<(f64, Vec<f64>, String)> = None;
    let mut examined: u64 = 0;

    let mut try_schedule = |plans: &[&Plan], order: &[usize]| {
        examined += 1;
        let mut books = Books::default();
        let mut chains: Vec<ChainSchedule> = inst
            .sfcs
            .iter()
            .map(|_| ChainSchedule::default())
            .collect();
        let mut cursor = vec![0usize; plans.len()];
        for &k in order {
            let plan = plans[k];
            let action = &plan.actions[cursor[k]];
            cursor[k] += 1;
            let ready = chains[k].ready;
            match *action {
                Action::Hop { from, to, rate } => {
                    let Some((bursts, arrival)) =
                        books.schedule_hop(inst, from, to, rate, inst.sfcs[k].data_bits, ready)
                    else {
                        return;
                    };
                    let ch = &mut chains[k];
                    if ch.first_tx.is_none() {
                        ch.first_tx = bursts.first().map(|&(_, a, _)| a);
                    }
                    for (s, a, b) in bursts {
                        ch.bursts.push((s, a, b, from, to, rate));
                    }
                    ch.arrivals.push((arrival, to));
                    ch.ready = arrival;
                }
                Action::Proc { vnf, node, sigma } => {
                    let Some((t0, t1)) = books.schedule_proc(inst, node, sigma, ready) else {
                        return;
                    };
                    let ch = &mut chains[k];
                    ch.procs.push((vnf, node, sigma, t0, t1));
                    ch.ready = t1;
                }
            }
        }
        let mut total = 0.0;
        let mut per = Vec::new();
        for ch in &mut chains {
            ch.completion = ch.ready;
            let Some(first) = ch.first_tx else { return };
            per.push(ch.completion - first);
            total += ch.completion - first;
        }
        if best.as_ref().is_some_and(|(b, _, _)| total >= *b - 1e-12) {
            return;
        }
        let log = synthesize_log(inst, &chains);
        if audit_event_log(&log, &cfg).is_empty() {
            best = Some((total, per, log));
        }
    };

    match plan_sets.len() {
        1 => {
            for plan in &plan_sets[0] {
                let order: Vec<usize> = vec![0; plan.actions.len()];
                try_schedule(&[plan], &order);
            }
        }
        _ => {
            for a in &plan_sets[0] {
                for b in &plan_sets[1] {
                    let (la, lb) = (a.actions.len(), b.actions.len());
                    let total_len = la + lb;
                    for mask in 0u32..(1 << total_len) {
                        if mask.count_ones() as usize != la {
                            continue;
                        }
                        let order: Vec<usize> = (0..total_len)
                            .map(|i| if mask >> i & 1 == 1 { 0 } else { 1 })
                            .collect();
                        try_schedule(&[a, b], &order);
                    }
                }
            }
        }
    }

    match best {
        Some((total, per, log)) => Ok(OracleSolution {
            total_delay_s: total,
            per_sfc_delay_s: per,
            witness_log: log,
            schedules_examined: examined,
        }),
        None => Err(OracleError::Infeasible),
    }
}

/// Emit the instance as a solver-ready LP-format text document.
///
/// The header lines document the measurement convention: the objective sums
/// completion variables counted from time zero, covering transmission,
/// processing, storage-wait, and retransmission time; the residual idle-gap
/// bucket of the simulator's report has no linear form and is omitted.
pub fn export_ilp(inst: &TinyInstance) -> String {
    use std::fmt::Write as _;
    let tau = inst.slot_length_s;
    let horizon = inst.slot_count as f64 * tau;
    let sum_proc: f64 = inst
        .sfcs
        .iter()
        .flat_map(|s| s.sigma.iter())
        .map(|sg| sg / inst.compute_units_per_slot * tau)
        .sum();
    let big_m = horizon + sum_proc;
    let nodes: Vec<PhysId> = inst.nodes().into_iter().collect();
    let hosts: Vec<PhysId> = nodes.iter().copied().filter(|n| n.layer != Layer::Ground).collect();
    let links = &inst.links;
    let mut s = String::new();
    let _ = writeln!(s, "\\ Tiny-instance deployment schedule as a mixed-integer program.");
    let _ = writeln!(s, "\\ Objective: sum of chain completion times measured from zero.");
    let _ = writeln!(s, "\\ The simulator's residual idle-gap delay bucket is not linear in");
    let _ = writeln!(s, "\\ these variables and is omitted; all other buckets are covered.");
    let _ = writeln!(s, "\\ big-M = horizon + total processing time = {big_m}");
    let _ = writeln!(s, "Minimize");
    let obj: Vec<String> = (0..inst.sfcs.len()).map(|k| format!("c_{k}")).collect();
    let _ = writeln!(s, " obj: {}", obj.join(" + "));
    let _ = writeln!(s, "Subject To");

    let x = |k: usize, l: usize, n: PhysId, t: u32| format!("x_{k}_{l}_{n}_{t}");
    let u = |k: usize, l: usize, n: PhysId| format!("u_{k}_{l}_{n}");
    let w = |k: usize, a: PhysId, b: PhysId| format!("w_{k}_{a}_{b}");
    let y = |k: usize, a: PhysId, b: PhysId, t: u32| format!("y_{k}_{a}_{b}_{t}");
    let z = |k: usize, n: PhysId, t: u32| format!("z_{k}_{n}_{t}");

    for (k, sfc) in inst.sfcs.iter().enumerate() {
        for l in 0..sfc.sigma.len() {
            let terms: Vec<String> = hosts.iter().map(|&n| u(k, l, n)).collect();
            let _ = writeln!(s, " assign_{k}_{l}: {} = 1", terms.join(" + "));
            let mut terms = Vec::new();
            for &n in &hosts {
                for t in 0..inst.slot_count {
                    terms.push(format!("{} {}", inst.compute_units_per_slot, x(k, l, n, t)));
                }
            }
            let _ = writeln!(
                s,
                " occupy_{k}_{l}: {} >= {}",
                terms.join(" + "),
                sfc.sigma[l]
            );
            for &n in &hosts {
                for t in 0..inst.slot_count {
                    let _ = writeln!(s, " locate_{k}_{l}_{n}_{t}: {} - {} <= 0", x(k, l, n, t), u(k, l, n));
                }
            }
        }
    }
    for &n in &hosts {
        for t in 0..inst.slot_count {
            let mut terms = Vec::new();
            for (k, sfc) in inst.sfcs.iter().enumerate() {
                for (l, &sg) in sfc.sigma.iter().enumerate() {
                    terms.push(format!("{sg} {}", x(k, l, n, t)));
                }
            }
            let _ = writeln!(s, " cap_{n}_{t}: {} <= {}", terms.join(" + "), inst.compute_capacity_units);
        }
    }
    for (k, sfc) in inst.sfcs.iter().enumerate() {
        let origin = PhysId::ground(sfc.origin_index as u32);
        let destination = PhysId::ground(sfc.destination_index as u32);
        for &n in &nodes {
            let outs: Vec<String> = links
                .iter()
                .filter(|&&(a, _, _)| a == n)
                .map(|&(a, b, _)| w(k, a, b))
                .collect();
            let ins: Vec<String> = links
                .iter()
                .filter(|&&(_, b, _)| b == n)
                .map(|&(a, b, _)| w(k, a, b))
                .collect();
            let mut lhs = String::new();
            for (i, o) in outs.iter().enumerate() {
                if i > 0 {
                    lhs.push_str(" + ");
                }
                lhs.push_str(o);
            }
            for i in &ins {
                if lhs.is_empty() {
                    lhs.push_str(&format!("- {i}"));
                } else {
                    lhs.push_str(&format!(" - {i}"));
                }
            }
            if lhs.is_empty() {
                continue;
            }
            let rhs = if n == origin {
                1
            } else if n == destination {
                -1
            } else {
                0
            };
            let _ = writeln!(s, " route_{k}_{n}: {lhs} = {rhs}");
            if n != destination && !outs.is_empty() {
                let _ = writeln!(s, " route_once_{k}_{n}: {} <= 1", outs.join(" + "));
            }
        }
        for l in 0..sfc.sigma.len() {
            for &n in &hosts {
                let ins: Vec<String> = links
                    .iter()
                    .filter(|&&(_, b, _)| b == n)
                    .map(|&(a, b, _)| w(k, a, b))
                    .collect();
                if ins.is_empty() {
                    let _ = writeln!(s, " host_{k}_{l}_{n}: {} = 0", u(k, l, n));
                } else {
                    let _ = writeln!(s, " host_{k}_{l}_{n}: {} - {} <= 0", u(k, l, n), ins.join(" - "));
                }
            }
        }
        for &(a, b, rate) in links {
            let terms: Vec<String> = (0..inst.slot_count)
                .map(|t| format!("{} {}", rate * tau, y(k, a, b, t)))
                .collect();
            let _ = writeln!(
                s,
                " move_{k}_{a}_{b}: {} - {} {} >= 0",
                terms.join(" + "),
                sfc.data_bits,
                w(k, a, b)
            );
        }
    }
    for &(a, b, _) in links {
        for t in 0..inst.slot_count {
            let terms: Vec<String> = (0..inst.sfcs.len()).map(|k| y(k, a, b, t)).collect();
            let _ = writeln!(s, " share_{a}_{b}_{t}: {} <= 1", terms.join(" + "));
        }
    }
    for &n in &hosts {
        for t in 0..inst.slot_count {
            let terms: Vec<String> = inst
                .sfcs
                .iter()
                .enumerate()
                .map(|(k, sfc)| format!("{} {}", sfc.data_bits, z(k, n, t)))
                .collect();
            let _ = writeln!(s, " store_{n}_{t}: {} <= {}", terms.join(" + "), inst.storage_capacity_bits);
        }
    }
    for &n in &hosts {
        let live = (0..inst.slot_count).filter(|&t| !inst.is_failed(t, n)).count() as f64;
        let op = live * inst.operation_power_w * tau;
        let mut terms = Vec::new();
        for (k, sfc) in inst.sfcs.iter().enumerate() {
            for (l, &sg) in sfc.sigma.iter().enumerate() {
                terms.push(format!("{} {}", sg * inst.compute_energy_per_unit_j, u(k, l, n)));
            }
        }
        let _ = writeln!(s, " energy_{n}: {} <= {}", terms.join(" + "), inst.energy_budget_j - op);
    }
    // Dead slots pin occupancy, movement, and storage to zero.
    let mut dead_rows: BTreeSet<String> = BTreeSet::new();
    for t in 0..inst.slot_count {
        for &n in &nodes {
            if !inst.is_failed(t, n) {
                continue;
            }
            for (k, sfc) in inst.sfcs.iter().enumerate() {
                if n.layer != Layer::Ground {
                    for l in 0..sfc.sigma.len() {
                        dead_rows.insert(format!(" dead_x_{k}_{l}_{n}_{t}: {} = 0", x(k, l, n, t)));
                    }
                    dead_rows.insert(format!(" dead_z_{k}_{n}_{t}: {} = 0", z(k, n, t)));
                }
                for &(a, b, _) in links {
                    if a == n || b == n {
                        dead_rows.insert(format!(" dead_y_{k}_{a}_{b}_{t}: {} = 0", y(k, a, b, t)));
                    }
                }
            }
        }
    }
    for row in &dead_rows {
        let _ = writeln!(s, "{row}");
    }
    // Sequencing: starts are ordered by processing durations; occupying a
    // slot confines the start near that slot via big-M windows.
    for (k, sfc) in inst.sfcs.iter().enumerate() {
        for l in 0..sfc.sigma.len() {
            let d = sfc.sigma[l] / inst.compute_units_per_slot * tau;
            if l + 1 < sfc.sigma.len() {
                let _ = writeln!(s, " order_{k}_{l}: s_{k}_{} - s_{k}_{l} >= {d}", l + 1);
            }
            let _ = writeln!(s, " finish_{k}_{l}: c_{k} - s_{k}_{l} >= {d}");
            for &n in &hosts {
                for t in 0..inst.slot_count {
                    let _ = writeln!(
                        s,
                        " win_lo_{k}_{l}_{n}_{t}: s_{k}_{l} - {big_m} {} >= {}",
                        x(k, l, n, t),
                        t as f64 * tau - d - big_m
                    );
                    let _ = writeln!(
                        s,
                        " win_hi_{k}_{l}_{n}_{t}: s_{k}_{l} + {big_m} {} <= {}",
                        x(k, l, n, t),
                        (t as f64 + 1.0) * tau + big_m
                    );
                }
            }
        }
        let _ = writeln!(s, " horizon_{k}: c_{k} <= {horizon}");
    }
    let _ = writeln!(s, "Bounds");
    for (k, sfc) in inst.sfcs.iter().enumerate() {
        for l in 0..sfc.sigma.len() {
            let _ = writeln!(s, " 0 <= s_{k}_{l} <= {horizon}");
        }
        let _ = writeln!(s, " 0 <= c_{k} <= {horizon}");
    }
    let _ = writeln!(s, "Binary");
    for (k, sfc) in inst.sfcs.iter().enumerate() {
        for l in 0..sfc.sigma.len() {
            for &n in &hosts {
                let _ = writeln!(s, " {}", u(k, l, n));
                for t in 0..inst.slot_count {
                    let _ = writeln!(s, " {}", x(k, l, n, t));
                }
            }
        }
        for &(a, b, _) in links {
            let _ = writeln!(s, " {}", w(k, a, b));
            for t in 0..inst.slot_count {
                let _ = writeln!(s, " {}", y(k, a, b, t));
            }
        }
        for &n in &hosts {
            for t in 0..inst.slot_count {
                let _ = writeln!(s, " {}", z(k, n, t));
            }
        }
    }
    let _ = writeln!(s, "End");
    s
}

/// Closed-form count of the variables `export_ilp` declares.
pub fn ilp_variable_count(inst: &TinyInstance) -> usize {
    let n_hosts = inst.nodes().iter().filter(|n| n.layer != Layer::Ground).count();
    let t = inst.slot_count as usize;
    let e = inst.links.len();
    let k = inst.sfcs.len();
    let total_vnfs: usize = inst.sfcs.iter().map(|s| s.sigma.len()).sum();
    // x + u per function, w + y per chain-link, z per chain-host-slot,
    // s per function, c per chain.
    total_vnfs * n_hosts * t + total_vnfs * n_hosts + k * e + k * e * t + k * n_hosts * t
        + total_vnfs
        + k
}

/// Deterministic random tiny instance for gap studies: two ground stations,
/// two or three relays, moderate data sizes, an optional one-slot failure.
pub fn random_instance(seed: u64) -> TinyInstance {
    let mut rng = seeded_stream(seed, "oracle-instance");
    let uav_count = rng.gen_range(2..=3u32);
    let g0 = PhysId::ground(0);
    let g1 = PhysId::ground(1);
    let mut links = Vec::new();
    let rate = |rng: &mut rand_chacha::ChaCha12Rng| rng.gen_range(1.5e6..4.0e6_f64);
    for i in 0..uav_count {
        let u = PhysId::uav(i);
        links.push((g0, u, rate(&mut rng)));
        links.push((u, g1, rate(&mut rng)));
        // Return directions let plans route around failures.
        links.push((g1, u, rate(&mut rng)));
        links.push((u, g0, rate(&mut rng)));
    }
    if uav_count >= 2 {
        let r = rate(&mut rng);
        links.push((PhysId::uav(0), PhysId::uav(1), r));
        links.push((PhysId::uav(1), PhysId::uav(0), r));
    }
    let slot_count = 4;
    let mut failed_by_slot = vec![BTreeSet::new(); slot_count as usize];
    if rng.gen_bool(0.5) {
        let victim = PhysId::uav(rng.gen_range(0..uav_count));
        let slot = rng.gen_range(1..=2usize);
        failed_by_slot[slot].insert(victim);
    }
    let sfcs = (0..2)
        .map(|i| {
            let vnfs = rng.gen_range(1..=2usize);
            EngineSfc {
                id: SfcId(i),
                origin_index: 0,
                destination_index: 1,
                data_bits: rng.gen_range(1.0e6..4.0e6),
                sigma: (0..vnfs).map(|_| rng.gen_range(1..=3) as f64 * 0.2).collect(),
            }
        })
        .collect();
    TinyInstance {
        slot_length_s: 5.0,
        slot_count,
        compute_capacity_units: 3.0,
        storage_capacity_bits: 1.6e9,
        energy_budget_j: 1e5,
        compute_units_per_slot: 1.0,
        compute_energy_per_unit_j: 50.0,
        operation_power_w: 5.0,
        links,
        failed_by_slot,
        sfcs,
    }
}

impl AuditSfc {
    /// Helper for tests building configs directly from tiny instances.
    pub fn from_engine(s: &EngineSfc) -> AuditSfc {
        AuditSfc {
            id: s.id.0,
            origin: PhysId::ground(s.origin_index as u32),
            destination: PhysId::ground(s.destination_index as u32),
            data_bits: s.data_bits,
            sigma: s.sigma.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lone_chain() -> TinyInstance {
        TinyInstance {
            slot_length_s: 5.0,
            slot_count: 4,
            compute_capacity_units: 3.0,
            storage_capacity_bits: 1.6e9,
            energy_budget_j: 1e5,
            compute_units_per_slot: 1.0,
            compute_energy_per_unit_j: 50.0,
            operation_power_w: 5.0,
            links: vec![
                (PhysId::ground(0), PhysId::uav(0), 1e6),
                (PhysId::uav(0), PhysId::ground(1), 2e6),
            ],
            failed_by_slot: vec![BTreeSet::new(); 4],
            sfcs: vec![EngineSfc {
                id: SfcId(0),
                origin_index: 0,
                destination_index: 1,
                data_bits: 2e6,
                sigma: vec![1.0],
            }],
        }
    }

    #[test]
    fn a_single_route_matches_its_closed_form_time() {
        let inst = lone_chain();
        let sol = enumerate_optimal(&inst).unwrap();
        // 2e6/1e6 transfer + 1.0 demand over 1 unit/slot of 5 s + 2e6/2e6.
        assert!((sol.total_delay_s - 8.0).abs() < 1e-9, "{}", sol.total_delay_s);
        assert!(audit_event_log(&sol.witness_log, &inst.audit_config()).is_empty());
    }

    #[test]
    fn disjoint_relays_carry_the_two_chains_without_contention() {
        let mut inst = lone_chain();
        inst.links = vec![
            (PhysId::ground(0), PhysId::uav(0), 1e6),
            (PhysId::uav(0), PhysId::ground(1), 1e6),
            (PhysId::ground(0), PhysId::uav(1), 1e6),
            (PhysId::uav(1), PhysId::ground(1), 1e6),
        ];
        inst.sfcs = vec![
            EngineSfc {
                id: SfcId(0),
                origin_index: 0,
                destination_index: 1,
                data_bits: 2e6,
                sigma: vec![0.4],
            },
            EngineSfc {
                id: SfcId(1),
                origin_index: 0,
                destination_index: 1,
                data_bits: 2e6,
                sigma: vec![0.4],
            },
        ];
        let sol = enumerate_optimal(&inst).unwrap();
        // Each: 2 s up + 2 s of processing + 2 s down, no queueing.
        assert!((sol.total_delay_s - 12.0).abs() < 1e-9, "{}", sol.total_delay_s);
        assert!((sol.per_sfc_delay_s[0] - 6.0).abs() < 1e-9);
        assert!((sol.per_sfc_delay_s[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn a_shared_relay_shifts_the_second_chain_without_stretching_it() {
        let mut inst = lone_chain();
        inst.sfcs.push(EngineSfc {
            id: SfcId(1),
            origin_index: 0,
            destination_index: 1,
            data_bits: 2e6,
            sigma: vec![1.0],
        });
        let sol = enumerate_optimal(&inst).unwrap();
        // The uplink serializes the chains, but each chain's delay is
        // counted from its own first bit, and capacity 3 lets both demands
        // process concurrently: both chains keep the solo span of 8 s.
        assert!((sol.total_delay_s - 16.0).abs() < 1e-9, "{}", sol.total_delay_s);
        assert!(audit_event_log(&sol.witness_log, &inst.audit_config()).is_empty());
    }

    #[test]
    fn tight_compute_capacity_serializes_the_processing_runs() {
        let mut inst = lone_chain();
        inst.compute_capacity_units = 1.0;
        inst.sfcs.push(EngineSfc {
            id: SfcId(1),
            origin_index: 0,
            destination_index: 1,
            data_bits: 2e6,
            sigma: vec![1.0],
        });
        let sol = enumerate_optimal(&inst).unwrap();
        // One chain runs solo (8 s). The other transmits at t=2..4, but the
        // relay's demand budget is taken in slots 0 and 1, so its run fits
        // earliest at t=10: completion 16, measured from its first bit at 2.
        assert!((sol.total_delay_s - 22.0).abs() < 1e-9, "{}", sol.total_delay_s);
        assert!(audit_event_log(&sol.witness_log, &inst.audit_config()).is_empty());
    }

    #[test]
    fn the_heuristic_never_beats_the_exhaustive_optimum() {
        let mut compared = 0;
        for seed in 0..16u64 {
            let inst = random_instance(seed);
            let heuristic = inst.run_heuristic(Policy::Frmg, 11);
            if (heuristic.report.completed as usize) < inst.sfcs.len() {
                continue;
            }
            let Ok(sol) = enumerate_optimal(&inst) else { continue };
            assert!(
                heuristic.report.total_delay_s >= sol.total_delay_s - 1e-6,
                "seed {seed}: heuristic {} beat the optimum {}",
                heuristic.report.total_delay_s,
                sol.total_delay_s
            );
            compared += 1;
        }
        assert!(compared >= 8, "only {compared} instances were comparable");
    }

    #[test]
    fn witnesses_replay_clean_under_failures() {
        for seed in 0..10u64 {
            let inst = random_instance(seed);
            if let Ok(sol) = enumerate_optimal(&inst) {
                let violations = audit_event_log(&sol.witness_log, &inst.audit_config());
                assert!(violations.is_empty(), "seed {seed}: {violations:?}");
            }
        }
    }

    #[test]
    fn oversized_instances_are_refused_with_an_estimate() {
        let mut inst = lone_chain();
        inst.slot_count = 9;
        inst.failed_by_slot = vec![BTreeSet::new(); 9];
        assert!(matches!(enumerate_optimal(&inst), Err(OracleError::BoundExceeded(_))));
        let mut inst = lone_chain();
        inst.sfcs[0].sigma = vec![0.5, 0.5, 0.5];
        assert!(matches!(enumerate_optimal(&inst), Err(OracleError::BoundExceeded(_))));
    }

    #[test]
    fn an_unreachable_destination_is_reported_infeasible() {
        let mut inst = lone_chain();
        inst.links = vec![
            (PhysId::ground(0), PhysId::uav(0), 1e6),
            (PhysId::ground(1), PhysId::uav(0), 1e6),
        ];
        assert!(matches!(enumerate_optimal(&inst), Err(OracleError::Infeasible)));
    }

    #[test]
    fn toml_instances_round_trip_through_the_parser() {
        let text = r#"
slot_length_s = 5.0
slot_count = 4
compute_capacity_units = 3.0
storage_capacity_bits = 1.6e9
energy_budget_j = 1e5
compute_units_per_slot = 1.0
compute_energy_per_unit_j = 50.0
operation_power_w = 5.0

[[links]]
from = "g0"
to = "u0"
rate_bps = 1e6

[[links]]
from = "u0"
to = "g1"
rate_bps = 2e6

[[failures]]
slot = 2
nodes = ["u0"]

[[sfcs]]
id = 0
origin = 0
destination = 1
data_bits = 2e6
sigma = [1.0]
"#;
        let inst = TinyInstance::from_toml(text).unwrap();
        assert_eq!(inst.links.len(), 2);
        assert!(inst.failed_by_slot[2].contains(&PhysId::uav(0)));
        assert_eq!(inst.sfcs[0].sigma, vec![1.0]);
        assert!(TinyInstance::from_toml("slot_count = 4").is_err());
    }

    #[test]
    fn a_mid_route_failure_delays_the_single_path_optimum() {
        let mut inst = lone_chain();
        // The only relay is down in slot 0, so nothing moves before t=5.
        inst.failed_by_slot[0].insert(PhysId::uav(0));
        let sol = enumerate_optimal(&inst).unwrap();
        assert!((sol.total_delay_s - 8.0).abs() < 1e-9, "{}", sol.total_delay_s);
        // Completion happens at 13 but the first bit leaves at 5.
        assert!(sol.witness_log.contains("t=5.000000000"));
    }

    #[test]
    fn exported_text_is_deterministic_and_well_formed() {
        let inst = random_instance(3);
        let a = export_ilp(&inst);
        let b = export_ilp(&inst);
        assert_eq!(a, b);
        check_lp_grammar(&a);
        let declared = a
            .lines()
            .skip_while(|l| !l.starts_with("Binary"))
            .skip(1)
            .take_while(|l| !l.starts_with("End"))
            .count();
        let continuous: usize = inst.sfcs.iter().map(|s| s.sigma.len() + 1).sum();
        assert_eq!(declared + continuous, ilp_variable_count(&inst));
    }

    /// Minimal LP-format grammar: section keywords in order, each constraint
    /// `name: term (+|-) term ... (<=|>=|=) number`, bounds rows, name list.
    fn check_lp_grammar(text: &str) {
        let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('\\'));
        assert_eq!(lines.next().map(str::trim), Some("Minimize"));
        let obj = lines.next().expect("objective row");
        assert!(obj.contains(':'), "objective must be named");
        assert_eq!(lines.next().map(str::trim), Some("Subject To"));
        let mut section = "rows";
        for line in lines {
            let t = line.trim();
            match t {
                "Bounds" => section = "bounds",
                "Binary" => section = "binary",
                "End" => section = "end",
                _ => match section {
                    "rows" => check_constraint(t),
                    "bounds" => {
                        let parts: Vec<&str> = t.split_whitespace().collect();
                        assert_eq!(parts.len(), 5, "bad bounds row: {t}");
                        assert!(parts[0].parse::<f64>().is_ok());
                        assert_eq!(parts[1], "<=");
                        assert_eq!(parts[3], "<=");
                        assert!(parts[4].parse::<f64>().is_ok());
                    }
                    "binary" => {
                        assert!(is_name(t), "bad variable name: {t}");
                    }
                    _ => panic!("content after End: {t}"),
                },
            }
        }
        assert_eq!(section, "end", "missing End marker");
    }

    fn is_name(t: &str) -> bool {
        !t.is_empty()
            && t.chars().next().unwrap().is_ascii_alphabetic()
            && t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
    }

    fn check_constraint(t: &str) {
        let (name, rest) = t.split_once(':').unwrap_or_else(|| panic!("unnamed row: {t}"));
        assert!(is_name(name.trim()), "bad row name: {name}");
        let rest = rest.trim();
        let (lhs, rhs) = ["<=", ">=", "="]
            .iter()
            .find_map(|op| rest.split_once(op))
            .unwrap_or_else(|| panic!("row without relation: {t}"));
        assert!(rhs.trim().parse::<f64>().is_ok(), "non-numeric rhs: {rhs}");
        let mut expect_operand = true;
        for tok in lhs.split_whitespace() {
            match tok {
                "+" | "-" => {
                    assert!(!expect_operand, "dangling operator in: {t}");
                    expect_operand = true;
                }
                _ => {
                    assert!(
                        tok.parse::<f64>().is_ok() || is_name(tok),
                        "bad token {tok} in: {t}"
                    );
                    expect_operand = false;
                }
            }
        }
        assert!(!expect_operand, "trailing operator in: {t}");
    }
}
