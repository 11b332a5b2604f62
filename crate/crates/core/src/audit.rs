//! Independent replay of event logs against the model's constraints.
//!
//! The auditor re-derives every constraint from the raw event text plus the
//! scenario constants alone. It shares no scheduling state with the engine,
//! so an engine bug cannot both produce a wrong log and convince the audit
//! that the log is right.
//!
//! Checked per log:
//! - chain integrity: functions complete in order, each exactly once
//!   surviving (rollbacks void completions, which must then recur);
//! - walk shape: data moves only over declared hops from its current
//!   location, rollbacks return only to previously visited nodes, a
//!   completion happens only at the declared destination with all
//!   functions done;
//! - link budget: per slot and directed link, transferred bits never
//!   exceed rate × slot length, bursts never overlap, and every burst's
//!   bits equal rate × duration;
//! - compute budget: per slot and node, the demands of processing runs
//!   overlapping the slot never exceed node capacity;
//! - storage budget: at every slot boundary, bundles resident on an
//!   aerial or orbital node never exceed its storage capacity;
//! - energy budget: per aerial/orbital node, processing energy plus
//!   per-slot operation energy while alive never exceeds the node budget;
//! - failure isolation: no activity touches a node while it is failed,
//!   and no service remains on a node that just failed.

use std::collections::BTreeMap;

use crate::engine::{EngineParams, EngineSfc};
use crate::scenario::Scenario;
use crate::topology::{Layer, PhysId};

const REL_TOL: f64 = 1e-6;
const BITS_TOL: f64 = 1.0;
const TIME_TOL: f64 = 1e-6;

/// The constants an audit needs; everything else comes from the log.
#[derive(Debug, Clone)]
pub struct AuditConfig {
    pub slot_length_s: f64,
    pub slot_count: u32,
    pub compute_capacity_units: f64,
    pub storage_capacity_bits: f64,
    pub energy_budget_j: f64,
    pub compute_units_per_slot: f64,
    pub compute_energy_per_unit_j: f64,
    pub operation_power_w: f64,
    pub sfcs: Vec<AuditSfc>,
}

#[derive(Debug, Clone)]
pub struct AuditSfc {
    pub id: u32,
    pub origin: PhysId,
    pub destination: PhysId,
    pub data_bits: f64,
    pub sigma: Vec<f64>,
}

impl AuditConfig {
    pub fn from_scenario(sc: &Scenario) -> AuditConfig {
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
        AuditConfig::from_parts(&params, &sfcs, sc.time.slot_count)
    }

    pub fn from_parts(params: &EngineParams, sfcs: &[EngineSfc], slot_count: u32) -> AuditConfig {
        AuditConfig {
            slot_length_s: params.slot_length_s,
            slot_count,
            compute_capacity_units: params.compute_capacity_units,
            storage_capacity_bits: params.storage_capacity_bits,
            energy_budget_j: params.energy_budget_j,
            compute_units_per_slot: params.compute_units_per_slot,
            compute_energy_per_unit_j: params.compute_energy_per_unit_j,
            operation_power_w: params.operation_power_w,
            sfcs: sfcs
                .iter()
                .map(|s| AuditSfc {
                    id: s.id.0,
                    origin: PhysId::ground(s.origin_index as u32),
                    destination: PhysId::ground(s.destination_index as u32),
                    data_bits: s.data_bits,
                    sigma: s.sigma.clone(),
                })
                .collect(),
        }
    }
}

struct Event<'a> {
    line_no: usize,
    t: f64,
    slot: u32,
    ev: &'a str,
    fields: BTreeMap<&'a str, &'a str>,
}

fn parse_line(line_no: usize, line: &str) -> Result<Event<'_>, String> {
    let mut t = None;
    let mut slot = None;
    let mut ev = None;
    let mut fields = BTreeMap::new();
    for token in line.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| format!("line {line_no}: token without '=': {token}"))?;
        match k {
            "t" => t = v.parse::<f64>().ok(),
            "slot" => slot = v.parse::<u32>().ok(),
            "ev" => ev = Some(v),
            _ => {
                fields.insert(k, v);
            }
        }
    }
    Ok(Event {
        line_no,
        t: t.ok_or_else(|| format!("line {line_no}: missing t"))?,
        slot: slot.ok_or_else(|| format!("line {line_no}: missing slot"))?,
        ev: ev.ok_or_else(|| format!("line {line_no}: missing ev"))?,
        fields,
    })
}

impl<'a> Event<'a> {
    fn f64(&self, key: &str) -> Result<f64, String> {
        self.fields
            .get(key)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| format!("line {}: bad or missing {key}", self.line_no))
    }

    fn usize(&self, key: &str) -> Result<usize, String> {
        self.fields
            .get(key)
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| format!("line {}: bad or missing {key}", self.line_no))
    }

    fn node(&self, key: &str) -> Result<PhysId, String> {
        self.fields
            .get(key)
            .and_then(|v| PhysId::parse(v))
            .ok_or_else(|| format!("line {}: bad or missing node {key}", self.line_no))
    }
}

#[derive(Debug, Clone)]
struct SfcState {
    location: PhysId,
    visited: Vec<PhysId>,
    done: Vec<bool>,
    started: bool,
    completed: bool,
    completion_s: f64,
    /// Target of the hop in progress and bits accumulated toward it.
    hop: Option<(PhysId, f64)>,
    open_burst: Option<(PhysId, PhysId, f64, f64, f64)>, // from,to,rate,start,bits
    open_proc: Option<(usize, PhysId, f64, f64)>,        // vnf,node,sigma,start
    /// Slots with any transmission or processing activity.
    active_slots: Vec<bool>,
    /// (time, node) location history for boundary residency checks.
    moves: Vec<(f64, PhysId)>,
}

struct Auditor<'c> {
    cfg: &'c AuditConfig,
    v: Vec<String>,
    sfc: BTreeMap<u32, SfcState>,
    failed: BTreeMap<PhysId, bool>,
    /// Per node: slots spent failed (for operation energy).
    fail_since: BTreeMap<PhysId, u32>,
    failed_slots: BTreeMap<PhysId, u32>,
    compute_j: BTreeMap<PhysId, f64>,
    first_seen_any: BTreeMap<PhysId, ()>,
    /// (slot, from, to) -> (rate, total bits, list of (start, end)).
    link_use: BTreeMap<(u32, PhysId, PhysId), (f64, f64, Vec<(f64, f64)>)>,
    /// (node, sigma, start, end) processing intervals.
    proc_intervals: Vec<(PhysId, f64, f64, f64)>,
    /// Boundary at which a failure batch still needs an isolation check.
    pending_isolation: Option<f64>,
    last_t: f64,
}

/// Replay `log` against `cfg`; returns all constraint violations found
/// (empty means the log is consistent).
pub fn audit_event_log(log: &str, cfg: &AuditConfig) -> Vec<String> {
    let mut a = Auditor {
        cfg,
        v: Vec::new(),
        sfc: cfg
            .sfcs
            .iter()
            .map(|s| {
                (
                    s.id,
                    SfcState {
                        location: s.origin,
                        visited: vec![s.origin],
                        done: vec![false; s.sigma.len()],
                        started: false,
                        completed: false,
                        completion_s: f64::INFINITY,
                        hop: None,
                        open_burst: None,
                        open_proc: None,
                        active_slots: vec![false; cfg.slot_count as usize + 1],
                        moves: vec![(0.0, s.origin)],
                    },
                )
            })
            .collect(),
        failed: BTreeMap::new(),
        fail_since: BTreeMap::new(),
        failed_slots: BTreeMap::new(),
        compute_j: BTreeMap::new(),
        first_seen_any: BTreeMap::new(),
        link_use: BTreeMap::new(),
        proc_intervals: Vec::new(),
        pending_isolation: None,
        last_t: 0.0,
    };
    for (idx, line) in log.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_line(line_no, line) {
            Ok(ev) => a.step(&ev),
            Err(e) => a.v.push(e),
        }
    }
    a.finish();
    a.v
}

impl<'c> Auditor<'c> {
    fn tau(&self) -> f64 {
        self.cfg.slot_length_s
    }

    fn is_failed(&self, node: PhysId) -> bool {
        *self.failed.get(&node).unwrap_or(&false)
    }

    fn mark_active(&mut self, id: u32, start: f64, end: f64) {
        let tau = self.tau();
        let last = self.cfg.slot_count as usize;
        if let Some(s) = self.sfc.get_mut(&id) {
            let first = (start / tau).floor().max(0.0) as usize;
            let final_slot = (((end - 1e-9) / tau).floor().max(0.0) as usize).min(last);
            for k in first..=final_slot.min(last) {
                s.active_slots[k] = true;
            }
        }
    }

    fn check_isolation(&mut self, boundary: f64) {
        let dead: Vec<PhysId> =
            self.failed.iter().filter(|(_, &f)| f).map(|(&n, _)| n).collect();
        for (id, s) in &self.sfc {
            if !s.completed && dead.contains(&s.location) {
                self.v.push(format!(
                    "isolation: service {id} still located on failed node {} after boundary {boundary:.3}",
                    s.location
                ));
            }
        }
        self.pending_isolation = None;
    }

    fn step(&mut self, e: &Event<'_>) {
        // Global time ordering and slot/time consistency.
        if e.t < self.last_t - TIME_TOL {
            self.v.push(format!("line {}: time went backwards", e.line_no));
        }
        self.last_t = self.last_t.max(e.t);
        let tau = self.tau();
        let (lo, hi) = (e.slot as f64 * tau, (e.slot as f64 + 1.0) * tau);
        if e.t < lo - TIME_TOL || e.t > hi + TIME_TOL {
            self.v.push(format!(
                "line {}: t={:.9} outside slot {} bounds",
                e.line_no, e.t, e.slot
            ));
        }
        if let Some(b) = self.pending_isolation {
            if e.t > b + TIME_TOL {
                self.check_isolation(b);
            }
        }

        match e.ev {
            "fail" => {
                if let Ok(node) = e.node("node") {
                    self.failed.insert(node, true);
                    self.fail_since.insert(node, e.slot);
                    self.first_seen_any.insert(node, ());
                    self.pending_isolation = Some(e.t);
                } else {
                    self.v.push(format!("line {}: fail without node", e.line_no));
                }
            }
            "recover" => {
                if let Ok(node) = e.node("node") {
                    self.failed.insert(node, false);
                    let since = self.fail_since.remove(&node).unwrap_or(e.slot);
                    *self.failed_slots.entry(node).or_insert(0) += e.slot.saturating_sub(since);
                }
            }
            "arrive" => self.on_arrive(e),
            "tx_start" => self.on_tx_start(e),
            "tx_end" => self.on_tx_end(e),
            "abandon" => self.on_abandon(e),
            "process_start" => self.on_process_start(e),
            "process_end" => self.on_process_end(e),
            "store" => self.on_store(e),
            "rollback" => self.on_rollback(e),
            "redeploy" => self.on_redeploy(e),
            "complete" => self.on_complete(e),
            "match_round" => {}
            other => self.v.push(format!("line {}: unknown event {other}", e.line_no)),
        }
    }

    fn sfc_ref(&mut self, e: &Event<'_>) -> Option<u32> {
        match e.usize("sfc") {
            Ok(id) => {
                let id = id as u32;
                if self.sfc.contains_key(&id) {
                    Some(id)
                } else {
                    self.v.push(format!("line {}: unknown service {id}", e.line_no));
                    None
                }
            }
            Err(msg) => {
                self.v.push(msg);
                None
            }
        }
    }

    fn on_arrive(&mut self, e: &Event<'_>) {
        let Some(id) = self.sfc_ref(e) else { return };
        let (Ok(node), Ok(bits)) = (e.node("node"), e.f64("bits")) else {
            self.v.push(format!("line {}: malformed arrive", e.line_no));
            return;
        };
        let delta = self.cfg.sfcs[id as usize].data_bits;
        if (bits - delta).abs() > BITS_TOL + delta * REL_TOL {
            self.v.push(format!("line {}: arrive bits disagree with service size", e.line_no));
        }
        if self.is_failed(node) {
            self.v.push(format!("line {}: arrive at failed node {node}", e.line_no));
        }
        let origin = self.cfg.sfcs[id as usize].origin;
        let t = e.t;
        let line_no = e.line_no;
        let mut note = None;
        if let Some(s) = self.sfc.get_mut(&id) {
            if !s.started && node == origin {
                // Initial placement of the bundle at its origin.
                return;
            }
            match s.hop.take() {
                Some((target, acc)) if target == node => {
                    if acc < delta - BITS_TOL - delta * REL_TOL {
                        note = Some(format!(
                            "line {line_no}: arrival with only {acc:.0} of {delta:.0} bits moved"
                        ));
                    }
                }
                Some((target, _)) => {
                    note = Some(format!(
                        "line {line_no}: arrival at {node} but hop was toward {target}"
                    ));
                }
                None => {
                    note = Some(format!("line {line_no}: arrival without a transfer"));
                }
            }
            s.location = node;
            s.visited.push(node);
            s.moves.push((t, node));
        }
        if let Some(n) = note {
            self.v.push(n);
        }
    }

    fn on_tx_start(&mut self, e: &Event<'_>) {
        let Some(id) = self.sfc_ref(e) else { return };
        let (Ok(from), Ok(to), Ok(rate), Ok(bits)) =
            (e.node("from"), e.node("to"), e.f64("rate"), e.f64("bits"))
        else {
            self.v.push(format!("line {}: malformed tx_start", e.line_no));
            return;
        };
        if self.is_failed(from) || self.is_failed(to) {
            self.v.push(format!("line {}: burst touches a failed node", e.line_no));
        }
        if rate <= 0.0 || bits < -BITS_TOL {
            self.v.push(format!("line {}: nonpositive rate or bits", e.line_no));
        }
        let line_no = e.line_no;
        let t = e.t;
        let mut notes = Vec::new();
        if let Some(s) = self.sfc.get_mut(&id) {
            if s.location != from {
                notes.push(format!(
                    "line {line_no}: burst from {from} but service is at {}",
                    s.location
                ));
            }
            if s.open_burst.is_some() || s.open_proc.is_some() {
                notes.push(format!("line {line_no}: burst while another activity is open"));
            }
            match &mut s.hop {
                Some((target, _)) if *target == to => {}
                _ => s.hop = Some((to, 0.0)),
            }
            s.open_burst = Some((from, to, rate, t, bits));
            s.started = true;
        }
        self.v.extend(notes);
    }

    fn on_tx_end(&mut self, e: &Event<'_>) {
        let Some(id) = self.sfc_ref(e) else { return };
        let (Ok(from), Ok(to), Ok(bits)) = (e.node("from"), e.node("to"), e.f64("bits")) else {
            self.v.push(format!("line {}: malformed tx_end", e.line_no));
            return;
        };
        let line_no = e.line_no;
        let t_end = e.t;
        let slot = e.slot;
        let mut closed = None;
        if let Some(s) = self.sfc.get_mut(&id) {
            match s.open_burst.take() {
                Some((f, g, rate, start, declared)) => {
                    if f != from || g != to {
                        self.v.push(format!("line {line_no}: tx_end endpoints disagree"));
                    }
                    closed = Some((rate, start, declared));
                    if let Some((target, acc)) = &mut s.hop {
                        if *target == to {
                            *acc += bits;
                        }
                    }
                }
                None => self.v.push(format!("line {line_no}: tx_end without tx_start")),
            }
        }
        let Some((rate, start, declared)) = closed else { return };
        if (bits - declared).abs() > BITS_TOL + declared.abs() * REL_TOL {
            self.v.push(format!("line {line_no}: burst closed with different bits than declared"));
        }
        let expect = rate * (t_end - start);
        if (bits - expect).abs() > BITS_TOL + expect.abs() * REL_TOL {
            self.v.push(format!(
                "line {line_no}: bits {bits:.0} disagree with rate x duration {expect:.0}"
            ));
        }
        let entry = self
            .link_use
            .entry((slot, from, to))
            .or_insert((rate, 0.0, Vec::new()));
        if (entry.0 - rate).abs() > entry.0.abs() * REL_TOL {
            self.v.push(format!("line {line_no}: link rate changed within a slot"));
        }
        entry.1 += bits;
        entry.2.push((start, t_end));
        self.mark_active(id, start, t_end);
    }

    fn on_abandon(&mut self, e: &Event<'_>) {
        let Some(id) = self.sfc_ref(e) else { return };
        if let Some(s) = self.sfc.get_mut(&id) {
            s.hop = None;
            if s.open_burst.is_some() {
                self.v
                    .push(format!("line {}: abandon while a burst is still open", e.line_no));
            }
        }
    }

    fn on_process_start(&mut self, e: &Event<'_>) {
        let Some(id) = self.sfc_ref(e) else { return };
        let (Ok(vnf), Ok(node), Ok(sigma)) = (e.usize("vnf"), e.node("node"), e.f64("sigma"))
        else {
            self.v.push(format!("line {}: malformed process_start", e.line_no));
            return;
        };
        if self.is_failed(node) {
            self.v.push(format!("line {}: processing on failed node {node}", e.line_no));
        }
        let spec = &self.cfg.sfcs[id as usize];
        if vnf >= spec.sigma.len() {
            self.v.push(format!("line {}: function index out of range", e.line_no));
            return;
        }
        if (spec.sigma[vnf] - sigma).abs() > spec.sigma[vnf] * REL_TOL {
            self.v.push(format!("line {}: sigma disagrees with the service spec", e.line_no));
        }
        let line_no = e.line_no;
        let t = e.t;
        let mut notes = Vec::new();
        if let Some(s) = self.sfc.get_mut(&id) {
            if s.location != node {
                notes.push(format!("line {line_no}: processing away from the data"));
            }
            if s.open_burst.is_some() || s.open_proc.is_some() {
                notes.push(format!("line {line_no}: processing while another activity is open"));
            }
            let next = s.done.iter().position(|d| !d).unwrap_or(s.done.len());
            if vnf != next {
                notes.push(format!(
                    "line {line_no}: function {vnf} started but {next} is next in order"
                ));
            }
            s.open_proc = Some((vnf, node, sigma, t));
        }
        *self.compute_j.entry(node).or_insert(0.0) += sigma * self.cfg.compute_energy_per_unit_j;
        self.first_seen_any.insert(node, ());
        self.v.extend(notes);
    }

    fn on_process_end(&mut self, e: &Event<'_>) {
        let Some(id) = self.sfc_ref(e) else { return };
        let (Ok(vnf), Ok(node)) = (e.usize("vnf"), e.node("node")) else {
            self.v.push(format!("line {}: malformed process_end", e.line_no));
            return;
        };
        let line_no = e.line_no;
        let t_end = e.t;
        let mut interval = None;
        if let Some(s) = self.sfc.get_mut(&id) {
            match s.open_proc.take() {
                Some((v0, n0, sigma, start)) => {
                    if v0 != vnf || n0 != node {
                        self.v.push(format!("line {line_no}: process_end does not match start"));
                    }
                    if vnf < s.done.len() {
                        s.done[vnf] = true;
                    }
                    interval = Some((sigma, start));
                }
                None => self.v.push(format!("line {line_no}: process_end without start")),
            }
        }
        let Some((sigma, start)) = interval else { return };
        let expect = sigma / self.cfg.compute_units_per_slot * self.tau();
        if ((t_end - start) - expect).abs() > TIME_TOL + expect * REL_TOL {
            self.v.push(format!(
                "line {line_no}: processing took {:.6}s, demand implies {expect:.6}s",
                t_end - start
            ));
        }
        self.proc_intervals.push((node, sigma, start, t_end));
        self.mark_active(id, start, t_end);
    }

    fn on_store(&mut self, e: &Event<'_>) {
        let Some(id) = self.sfc_ref(e) else { return };
        let Ok(node) = e.node("node") else {
            self.v.push(format!("line {}: malformed store", e.line_no));
            return;
        };
        let line_no = e.line_no;
        let slot = e.slot as usize;
        let mut notes = Vec::new();
        if let Some(s) = self.sfc.get(&id) {
            if s.location != node {
                notes.push(format!("line {line_no}: stored away from its location"));
            }
            if !s.started {
                notes.push(format!("line {line_no}: store before the service ever started"));
            }
            if slot < s.active_slots.len() && s.active_slots[slot] {
                notes.push(format!(
                    "line {line_no}: store in slot {slot} despite activity in that slot"
                ));
            }
        }
        self.v.extend(notes);
    }

    fn on_rollback(&mut self, e: &Event<'_>) {
        let Some(id) = self.sfc_ref(e) else { return };
        let (Ok(from), Ok(to)) = (e.node("from"), e.node("to")) else {
            self.v.push(format!("line {}: malformed rollback", e.line_no));
            return;
        };
        if !self.is_failed(from) {
            self.v.push(format!(
                "line {}: rollback from {from}, which is not failed",
                e.line_no
            ));
        }
        if self.is_failed(to) {
            self.v.push(format!("line {}: rollback to failed node {to}", e.line_no));
        }
        let line_no = e.line_no;
        let t = e.t;
        let voided: Vec<usize> = e
            .fields
            .get("voided")
            .map(|s| s.split(',').filter_map(|x| x.parse().ok()).collect())
            .unwrap_or_default();
        let mut interval = None;
        if let Some(s) = self.sfc.get_mut(&id) {
            if s.location != from {
                self.v.push(format!("line {line_no}: rollback from a node the data is not on"));
            }
            if !s.visited.contains(&to) {
                self.v.push(format!("line {line_no}: rollback to a never-visited node {to}"));
            }
            if let Some((_, _, _, _, _)) = s.open_burst.take() {
                self.v.push(format!("line {line_no}: rollback with a burst still open"));
            }
            if let Some((_, n0, sigma, start)) = s.open_proc.take() {
                // The interrupted run still consumed time and capacity.
                interval = Some((n0, sigma, start, t));
            }
            for m in voided {
                if m < s.done.len() {
                    s.done[m] = false;
                }
            }
            s.hop = None;
            s.location = to;
            s.moves.push((t, to));
        }
        if let Some((n, sg, a, b)) = interval {
            self.proc_intervals.push((n, sg, a, b));
            self.mark_active(id, a, b);
        }
    }

    fn on_redeploy(&mut self, e: &Event<'_>) {
        let Some(_id) = self.sfc_ref(e) else { return };
        let Ok(node) = e.node("node") else {
            self.v.push(format!("line {}: malformed redeploy", e.line_no));
            return;
        };
        if self.is_failed(node) {
            self.v.push(format!("line {}: redeploy onto failed node {node}", e.line_no));
        }
        if node.layer == Layer::Ground {
            self.v.push(format!("line {}: redeploy onto a ground station", e.line_no));
        }
    }

    fn on_complete(&mut self, e: &Event<'_>) {
        let Some(id) = self.sfc_ref(e) else { return };
        let dest = self.cfg.sfcs[id as usize].destination;
        let line_no = e.line_no;
        let t = e.t;
        let mut notes = Vec::new();
        if let Some(s) = self.sfc.get_mut(&id) {
            if s.completed {
                notes.push(format!("line {line_no}: duplicate completion"));
            }
            if s.location != dest {
                notes.push(format!(
                    "line {line_no}: completion at {} instead of destination {dest}",
                    s.location
                ));
            }
            if !s.done.iter().all(|&d| d) {
                notes.push(format!("line {line_no}: completion with unfinished functions"));
            }
            s.completed = true;
            s.completion_s = t;
        }
        self.v.extend(notes);
    }

    fn finish(&mut self) {
        if let Some(b) = self.pending_isolation {
            self.check_isolation(b);
        }
        let tau = self.tau();
        let horizon = self.cfg.slot_count as f64 * tau;

        // Link budget per slot: total bits and burst overlap.
        for ((slot, from, to), (rate, bits, spans)) in &self.link_use {
            let budget = rate * tau;
            if *bits > budget * (1.0 + REL_TOL) + BITS_TOL {
                self.v.push(format!(
                    "link {from}->{to} slot {slot}: {bits:.0} bits exceed budget {budget:.0}"
                ));
            }
            let mut sorted = spans.clone();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in sorted.windows(2) {
                if w[1].0 < w[0].1 - TIME_TOL {
                    self.v.push(format!(
                        "link {from}->{to} slot {slot}: overlapping bursts"
                    ));
                }
            }
            let (lo, hi) = (*slot as f64 * tau, (*slot as f64 + 1.0) * tau);
            for &(s, e) in &sorted {
                if s < lo - TIME_TOL || e > hi + TIME_TOL {
                    self.v.push(format!(
                        "link {from}->{to} slot {slot}: burst outside slot bounds"
                    ));
                }
            }
        }

        // Compute budget: demands of runs overlapping each slot.
        let mut per_slot_node: BTreeMap<(u32, PhysId), f64> = BTreeMap::new();
        for &(node, sigma, start, end) in &self.proc_intervals {
            let first = (start / tau).floor().max(0.0) as u32;
            let last = (((end - 1e-9) / tau).floor().max(0.0) as u32)
                .min(self.cfg.slot_count.saturating_sub(1));
            for k in first..=last {
                *per_slot_node.entry((k, node)).or_insert(0.0) += sigma;
            }
        }
        for ((slot, node), used) in &per_slot_node {
            if *used > self.cfg.compute_capacity_units * (1.0 + REL_TOL) + 1e-9 {
                self.v.push(format!(
                    "compute at {node} slot {slot}: {used:.3} units exceed capacity {:.3}",
                    self.cfg.compute_capacity_units
                ));
            }
        }

        // Storage budget at each slot boundary.
        for k in 0..=self.cfg.slot_count {
            let b = k as f64 * tau;
            let mut resident: BTreeMap<PhysId, f64> = BTreeMap::new();
            for (id, s) in &self.sfc {
                if s.completion_s <= b + TIME_TOL {
                    continue;
                }
                let mut node = self.cfg.sfcs[*id as usize].origin;
                for &(t, n) in &s.moves {
                    if t <= b + TIME_TOL {
                        node = n;
                    } else {
                        break;
                    }
                }
                *resident.entry(node).or_insert(0.0) += self.cfg.sfcs[*id as usize].data_bits;
            }
            for (node, bits) in resident {
                if node.layer != Layer::Ground
                    && bits > self.cfg.storage_capacity_bits * (1.0 + REL_TOL) + BITS_TOL
                {
                    self.v.push(format!(
                        "storage at {node} boundary {k}: {bits:.0} bits exceed capacity {:.0}",
                        self.cfg.storage_capacity_bits
                    ));
                }
            }
        }

        // Energy budget: processing plus operation while alive.
        let op = self.cfg.operation_power_w * tau;
        let nodes: Vec<PhysId> = self
            .compute_j
            .keys()
            .chain(self.first_seen_any.keys())
            .copied()
            .collect();
        for node in nodes {
            if node.layer == Layer::Ground {
                continue;
            }
            // A node failed with no recovery stays dead to the horizon.
            let open_failure = self
                .fail_since
                .get(&node)
                .map(|&since| self.cfg.slot_count.saturating_sub(since))
                .unwrap_or(0);
            let dead_slots = self.failed_slots.get(&node).unwrap_or(&0) + open_failure;
            let live_slots = self.cfg.slot_count.saturating_sub(dead_slots);
            let budget_used =
                self.compute_j.get(&node).unwrap_or(&0.0) + live_slots as f64 * op;
            if budget_used > self.cfg.energy_budget_j * (1.0 + REL_TOL) {
                self.v.push(format!(
                    "energy at {node}: {budget_used:.1} J exceed budget {:.1} J",
                    self.cfg.energy_budget_j
                ));
            }
        }

        // Chain integrity: open activities must not outlive the horizon
        // silently, and completed services must have every function done.
        for (id, s) in &self.sfc {
            if s.completed && !s.done.iter().all(|&d| d) {
                self.v.push(format!("service {id}: completed with voided functions"));
            }
            if let Some((_, _, _, start)) = s.open_proc {
                if start > horizon {
                    self.v.push(format!("service {id}: processing started beyond the horizon"));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_with_source, EngineParams, EngineSfc, StaticWorld};
    use crate::scenario::{Policy, Scenario, SfcId};
    use crate::topology::LinkKind;
    use std::collections::{BTreeMap, BTreeSet};

    fn g(i: u32) -> PhysId {
        PhysId::ground(i)
    }

    fn u(i: u32) -> PhysId {
        PhysId::uav(i)
    }

    fn params() -> EngineParams {
        EngineParams {
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
        }
    }

    fn chains() -> Vec<EngineSfc> {
        vec![
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
        ]
    }

    fn failure_run() -> (String, AuditConfig) {
        let links = vec![
            (g(0), u(0), 1e6),
            (g(0), u(1), 2e6),
            (u(0), u(1), 3e6),
            (u(0), g(1), 1e6),
            (u(1), g(1), 2e6),
        ];
        let fail: BTreeSet<PhysId> = [u(1)].into();
        let schedule = vec![BTreeSet::new(), BTreeSet::new(), fail, BTreeSet::new()];
        let p = params();
        let sfcs = chains();
        let mut world = StaticWorld::new(5.0, 10, links, schedule);
        let out = run_with_source(&mut world, &p, &sfcs, Policy::Frmg, 7, "audit-test".into());
        (out.event_log, AuditConfig::from_parts(&p, &sfcs, 10))
    }

    #[test]
    fn clean_static_run_passes() {
        let (log, cfg) = failure_run();
        let violations = audit_event_log(&log, &cfg);
        assert!(violations.is_empty(), "unexpected violations: {violations:?}");
    }

    #[test]
    fn clean_scenario_runs_pass_under_heavy_failures() {
        for seed in 0..8u64 {
            let mut sc = Scenario::default();
            sc.seed = seed;
            sc.time.slot_count = 40;
            sc.failure.lambda = 3.0;
            let out = crate::engine::run_scenario(&sc).unwrap();
            let cfg = AuditConfig::from_scenario(&sc);
            let violations = audit_event_log(&out.event_log, &cfg);
            assert!(violations.is_empty(), "seed {seed}: {violations:?}");
        }
    }

    #[test]
    fn forged_oversized_burst_is_caught() {
        let (log, cfg) = failure_run();
        // A burst of more bits than rate x slot allows on a fresh link.
        let forged = log
            + "t=7.000000000 slot=1 ev=tx_start sfc=0 from=g0 to=u0 kind=g2u rate=1000000 bits=9000000\n\
               t=10.000000000 slot=1 ev=tx_end sfc=0 from=g0 to=u0 bits=9000000\n";
        let violations = audit_event_log(&forged, &cfg);
        assert!(
            violations.iter().any(|v| v.contains("exceed budget")),
            "missing link-budget violation: {violations:?}"
        );
    }

    #[test]
    fn forged_processing_on_failed_node_is_caught() {
        let (log, cfg) = failure_run();
        // Splice a processing claim right after the failure, while the node
        // is still down.
        let mut forged = String::new();
        let mut injected = false;
        for line in log.lines() {
            forged.push_str(line);
            forged.push('\n');
            if !injected && line.contains("ev=fail") && line.contains("node=u1") {
                forged.push_str(
                    "t=11.000000000 slot=2 ev=process_start sfc=1 vnf=0 node=u1 sigma=0.5\n",
                );
                injected = true;
            }
        }
        assert!(injected, "fixture log lost its failure event");
        let violations = audit_event_log(&forged, &cfg);
        assert!(
            violations.iter().any(|v| v.contains("failed node")),
            "missing isolation violation: {violations:?}"
        );
    }

    #[test]
    fn forged_teleport_is_caught() {
        let (log, cfg) = failure_run();
        let forged =
            log + "t=16.000000000 slot=3 ev=tx_start sfc=0 from=u0 to=g1 kind=u2g rate=1000000 bits=1000\n";
        let violations = audit_event_log(&forged, &cfg);
        assert!(
            violations.iter().any(|v| v.contains("service is at")),
            "missing walk violation: {violations:?}"
        );
    }

    #[test]
    fn forged_out_of_order_function_is_caught() {
        let (log, cfg) = failure_run();
        let forged = log
            + "t=16.000000000 slot=3 ev=process_start sfc=1 vnf=1 node=g0 sigma=0.5\n";
        let violations = audit_event_log(&forged, &cfg);
        assert!(
            violations.iter().any(|v| v.contains("next in order") || v.contains("away from")),
            "missing order violation: {violations:?}"
        );
    }

    #[test]
    fn forged_premature_completion_is_caught() {
        let (log, cfg) = failure_run();
        let forged = log + "t=16.000000000 slot=3 ev=complete sfc=1\n";
        let violations = audit_event_log(&forged, &cfg);
        assert!(
            violations
                .iter()
                .any(|v| v.contains("unfinished") || v.contains("instead of destination")
                    || v.contains("duplicate")),
            "missing completion violation: {violations:?}"
        );
    }

    #[test]
    fn energy_overrun_is_caught() {
        let (log, mut cfg) = failure_run();
        // Shrink the budget below what the log's processing implies.
        cfg.energy_budget_j = 10.0;
        let violations = audit_event_log(&log, &cfg);
        assert!(
            violations.iter().any(|v| v.contains("energy")),
            "missing energy violation: {violations:?}"
        );
    }

    #[test]
    fn compute_overrun_is_caught() {
        let (log, mut cfg) = failure_run();
        cfg.compute_capacity_units = 0.4;
        let violations = audit_event_log(&log, &cfg);
        assert!(
            violations.iter().any(|v| v.contains("compute")),
            "missing compute violation: {violations:?}"
        );
    }
}
