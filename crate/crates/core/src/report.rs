//! Structured results of a simulation run.
//!
//! A [`RunReport`] carries everything the experiment harness consumes:
//! per-service delay breakdowns, aggregate metrics, per-slot series, the
//! failure trace, per-node energy accounts, matching statistics, and the
//! verdict of the independent event-log audit. It serializes to JSON; the
//! command-line layer derives CSV series from it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::energy::NodeEnergy;
use crate::engine::DelayBreakdown;
use crate::scenario::Policy;

/// Outcome of the independent event-log audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditVerdict {
    Pass,
    /// First few violation messages, for the report reader.
    Fail(Vec<String>),
    /// The audit was not invoked on this report.
    Unchecked,
}

impl AuditVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, AuditVerdict::Pass)
    }
}

/// Final state of one service chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfcOutcome {
    pub id: u32,
    pub origin: usize,
    pub destination: usize,
    pub data_bits: f64,
    pub vnf_count: usize,
    pub completed: bool,
    /// Simulation time of the first transmission start, if any.
    pub first_tx_s: Option<f64>,
    /// Simulation time of completion; horizon end for unfinished chains.
    pub completion_s: Option<f64>,
    pub delay: DelayBreakdown,
}

/// One sampled point of the per-slot series, taken right after the slot's
/// boundary work (failures, recovery, admissions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotStats {
    pub slot: u32,
    /// Services with a processing run in progress.
    pub processing: u32,
    /// Services not yet delivered.
    pub unfinished: u32,
    /// `processing / unfinished`; zero when nothing is unfinished.
    pub processed_ratio: f64,
    /// Services delivered so far.
    pub completed_total: u32,
    pub failed_nodes: u32,
}

/// One failure-update event: what failed and who was hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub slot: u32,
    pub failed: Vec<String>,
    pub affected_sfcs: Vec<u32>,
    /// Rollback targets for the affected services that moved.
    pub rolled_back: Vec<(u32, String)>,
}

/// Energy totals over the run, per category and per node.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyReport {
    pub path_j: f64,
    pub transmission_j: f64,
    pub reception_j: f64,
    pub operation_j: f64,
    pub compute_j: f64,
    pub total_j: f64,
    pub per_node: BTreeMap<String, NodeEnergy>,
}

/// Recovery-matching counters accumulated over the run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchingStats {
    pub rounds: u32,
    pub proposals: usize,
    pub matched: u32,
    /// Affected services that exhausted their candidates and waited.
    pub unmatched_waits: u32,
}

/// Everything a single run produces besides the raw event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario_digest: String,
    pub policy: Policy,
    pub seed: u64,
    /// Digest over the mobility and failure history; equal digests across
    /// policies certify common random numbers at a fixed seed.
    pub trace_digest: String,
    pub sfc: Vec<SfcOutcome>,
    /// Sum of per-service total delays, seconds.
    pub total_delay_s: f64,
    pub mean_delay_s: f64,
    /// Largest per-service total delay, seconds.
    pub max_completion_s: f64,
    pub completed: u32,
    pub slots: Vec<SlotStats>,
    pub failures: Vec<FailureRecord>,
    pub energy: EnergyReport,
    pub matching: MatchingStats,
    pub audit: AuditVerdict,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Mean and (population) standard deviation of a sample.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_of_known_sample() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert!((m - 5.0).abs() < 1e-12);
        assert!((s - 2.0).abs() < 1e-12);
        assert_eq!(mean_std(&[]), (0.0, 0.0));
    }

    #[test]
    fn verdict_pass_check() {
        assert!(AuditVerdict::Pass.passed());
        assert!(!AuditVerdict::Fail(vec!["x".into()]).passed());
        assert!(!AuditVerdict::Unchecked.passed());
    }
}
