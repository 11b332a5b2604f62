//! Experiment driver for the simulator: single audited runs, parameter
//! sweeps under common random numbers, exhaustive-baseline comparisons on
//! tiny instances, and LP-format export of the deployment integer program.
//!
//! Every run is replayed through the independent event-log auditor before
//! it is reported; the verdict travels with the report rather than being a
//! side channel. Sweeps hold the seed sequence fixed across policies and
//! axis values so that any two cells of the output grid differ only in the
//! knob under study.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use sagin_core::audit::{audit_event_log, AuditConfig};
use sagin_core::engine::run_scenario;
use sagin_core::oracle::{enumerate_optimal, export_ilp, OracleError, TinyInstance};
use sagin_core::report::{mean_std, AuditVerdict, RunReport};
use sagin_core::scenario::{Policy, Scenario};

/// Column order of the per-run rows a sweep writes. Downstream plotting
/// scripts key on these names; changing them is a breaking change.
pub const LONG_HEADER: [&str; 11] = [
    "axis",
    "value",
    "policy",
    "seed",
    "total_delay_s",
    "mean_delay_s",
    "max_completion_s",
    "mean_processed_ratio",
    "completed",
    "trace_digest",
    "audit",
];

/// Column order of the per-cell aggregate rows a sweep writes.
pub const SUMMARY_HEADER: [&str; 13] = [
    "axis",
    "value",
    "policy",
    "runs",
    "total_delay_mean",
    "total_delay_std",
    "mean_delay_mean",
    "mean_delay_std",
    "max_completion_mean",
    "max_completion_std",
    "processed_ratio_mean",
    "completed_mean",
    "audit_failures",
];

/// Column order of the per-slot series written by `run`.
pub const SLOT_HEADER: [&str; 6] =
    ["slot", "processing", "unfinished", "processed_ratio", "completed_total", "failed_nodes"];

/// Column order of the failure-event table written by `run`.
pub const FAILURE_HEADER: [&str; 4] = ["slot", "failed", "affected_sfcs", "rolled_back"];

/// Column order of the per-instance comparison rows.
pub const GAP_HEADER: [&str; 6] =
    ["instance", "status", "oracle_total_s", "heuristic_total_s", "gap_ratio", "detail"];

/// Column order of the comparison summary row.
pub const GAP_SUMMARY_HEADER: [&str; 6] =
    ["instances", "compared", "dominance_holds", "median_gap", "max_gap", "mean_gap"];

/// Run one scenario and replay its event log through the auditor. The
/// returned report carries the audit verdict; the raw log is returned so
/// callers can persist it.
pub fn audited_run(scenario: &Scenario) -> Result<(RunReport, String)> {
    let out = run_scenario(scenario).context("simulation failed")?;
    let cfg = AuditConfig::from_scenario(scenario);
    let violations = audit_event_log(&out.event_log, &cfg);
    let mut report = out.report;
    report.audit = if violations.is_empty() {
        AuditVerdict::Pass
    } else {
        AuditVerdict::Fail(violations.into_iter().take(8).collect())
    };
    Ok((report, out.event_log))
}

/// Load a scenario, apply optional seed/policy overrides, run it audited,
/// and write `report.json`, `events.log`, `slots.csv`, and `failures.csv`
/// into `out_dir`.
pub fn cmd_run(
    scenario_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    policy: Option<Policy>,
) -> Result<RunReport> {
    let mut scenario = Scenario::load(scenario_path)
        .with_context(|| format!("loading scenario {}", scenario_path.display()))?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    if let Some(p) = policy {
        scenario.policy = p;
    }
    let (report, event_log) = audited_run(&scenario)?;

    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    fs::write(out_dir.join("report.json"), report.to_json())?;
    fs::write(out_dir.join("events.log"), &event_log)?;

    let mut slots = csv::Writer::from_path(out_dir.join("slots.csv"))?;
    slots.write_record(SLOT_HEADER)?;
    for s in &report.slots {
        slots.write_record([
            s.slot.to_string(),
            s.processing.to_string(),
            s.unfinished.to_string(),
            format_float(s.processed_ratio),
            s.completed_total.to_string(),
            s.failed_nodes.to_string(),
        ])?;
    }
    slots.flush()?;

    // The report keeps every failure-set refresh, including ones that drew
    // an empty batch; the table only lists refreshes with content.
    let mut failures = csv::Writer::from_path(out_dir.join("failures.csv"))?;
    failures.write_record(FAILURE_HEADER)?;
    for f in &report.failures {
        if f.failed.is_empty() && f.affected_sfcs.is_empty() && f.rolled_back.is_empty() {
            continue;
        }
        let rolled: Vec<String> =
            f.rolled_back.iter().map(|(sfc, node)| format!("{sfc}->{node}")).collect();
        failures.write_record([
            f.slot.to_string(),
            f.failed.join(" "),
            f.affected_sfcs.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "),
            rolled.join(" "),
        ])?;
    }
    failures.flush()?;

    Ok(report)
}

/// The scenario field a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Number of aerial relays.
    UavCount,
    /// Number of service chains.
    SfcCount,
    /// Mean of the per-update failure batch size.
    Lambda,
    /// Midpoint of the per-chain data-volume range; the range becomes
    /// `[0.4m, 1.6m]`, preserving the default range's shape around its
    /// own midpoint.
    DataRange,
    /// Lower bound of the per-chain function-count range; the range
    /// becomes `[v, v + 1]`.
    VnfRange,
    /// Slots between failure-set updates.
    FailureInterval,
}

impl Axis {
    pub const ALL: [Axis; 6] = [
        Axis::UavCount,
        Axis::SfcCount,
        Axis::Lambda,
        Axis::DataRange,
        Axis::VnfRange,
        Axis::FailureInterval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::UavCount => "uav_count",
            Axis::SfcCount => "sfc_count",
            Axis::Lambda => "lambda",
            Axis::DataRange => "data_range",
            Axis::VnfRange => "vnf_range",
            Axis::FailureInterval => "failure_interval",
        }
    }

    /// Set this axis to `value` on a scenario. Count-like axes round to
    /// the nearest integer.
    pub fn apply(self, scenario: &mut Scenario, value: f64) {
        match self {
            Axis::UavCount => scenario.geometry.uav_count = value.round() as u32,
            Axis::SfcCount => scenario.sfc.count = value.round() as u32,
            Axis::Lambda => scenario.failure.lambda = value,
            Axis::DataRange => {
                scenario.sfc.data_amount_range_bits = [0.4 * value, 1.6 * value];
            }
            Axis::VnfRange => {
                let lo = value.round() as u32;
                scenario.sfc.vnf_count_range = [lo, lo + 1];
            }
            Axis::FailureInterval => {
                scenario.failure.update_interval_slots = value.round().max(1.0) as u32;
            }
        }
    }
}

impl FromStr for Axis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == lower)
            .ok_or_else(|| {
                let names: Vec<&str> = Axis::ALL.iter().map(|a| a.name()).collect();
                anyhow::anyhow!("unknown axis {s:?}; expected one of {}", names.join(", "))
            })
    }
}

/// What a sweep runs: `values.len() × policies.len() × reps` cells.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub reps: u32,
    pub policies: Vec<Policy>,
    /// Worker threads; `None` uses the rayon default.
    pub jobs: Option<usize>,
}

/// One run's row in the long-format sweep output.
#[derive(Debug, Clone)]
pub struct LongRow {
    pub axis: Axis,
    pub value: f64,
    pub policy: Policy,
    pub seed: u64,
    pub total_delay_s: f64,
    pub mean_delay_s: f64,
    pub max_completion_s: f64,
    pub mean_processed_ratio: f64,
    pub completed: u32,
    pub trace_digest: String,
    /// `pass`, `fail`, or `error:<reason>`.
    pub audit: String,
}

impl LongRow {
    pub fn audit_passed(&self) -> bool {
        self.audit == "pass"
    }
}

/// One (value, policy) cell's aggregate row.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub axis: Axis,
    pub value: f64,
    pub policy: Policy,
    pub runs: u32,
    pub total_delay_mean: f64,
    pub total_delay_std: f64,
    pub mean_delay_mean: f64,
    pub mean_delay_std: f64,
    pub max_completion_mean: f64,
    pub max_completion_std: f64,
    pub processed_ratio_mean: f64,
    pub completed_mean: f64,
    pub audit_failures: u32,
}

fn run_cell(base: &Scenario, axis: Axis, value: f64, policy: Policy, rep: u32) -> LongRow {
    let mut scenario = base.clone();
    axis.apply(&mut scenario, value);
    scenario.policy = policy;
    // Common random numbers: replica r uses the same seed in every cell,
    // so the mobility and failure history match across policies and values
    // wherever the varied knob allows it.
    scenario.seed = base.seed.wrapping_add(rep as u64);
    match audited_run(&scenario) {
        Ok((report, _log)) => LongRow {
            axis,
            value,
            policy,
            seed: scenario.seed,
            total_delay_s: report.total_delay_s,
            mean_delay_s: report.mean_delay_s,
            max_completion_s: report.max_completion_s,
            mean_processed_ratio: mean_processed_ratio(&report),
            completed: report.completed,
            trace_digest: report.trace_digest.clone(),
            audit: if report.audit.passed() { "pass".into() } else { "fail".into() },
        },
        Err(err) => LongRow {
            axis,
            value,
            policy,
            seed: scenario.seed,
            total_delay_s: f64::NAN,
            mean_delay_s: f64::NAN,
            max_completion_s: f64::NAN,
            mean_processed_ratio: f64::NAN,
            completed: 0,
            trace_digest: String::new(),
            audit: format!("error:{err:#}").replace(['\n', ','], " "),
        },
    }
}

/// Mean of the per-slot processed ratio over the whole horizon.
pub fn mean_processed_ratio(report: &RunReport) -> f64 {
    if report.slots.is_empty() {
        return 0.0;
    }
    report.slots.iter().map(|s| s.processed_ratio).sum::<f64>() / report.slots.len() as f64
}

/// Run every cell of a sweep in parallel and return the rows in a fixed
/// order (value, then policy, then replica) regardless of scheduling. A
/// failed run becomes an `error` row; the sweep never aborts on one.
pub fn sweep_rows(base: &Scenario, cfg: &SweepConfig) -> Result<Vec<LongRow>> {
    if cfg.values.is_empty() || cfg.policies.is_empty() || cfg.reps == 0 {
        bail!("sweep needs at least one value, one policy, and one replica");
    }
    let mut tasks = Vec::new();
    for (vi, &value) in cfg.values.iter().enumerate() {
        for (pi, &policy) in cfg.policies.iter().enumerate() {
            for rep in 0..cfg.reps {
                tasks.push((vi, pi, rep, value, policy));
            }
        }
    }
    let run_all = || {
        tasks
            .par_iter()
            .map(|&(vi, pi, rep, value, policy)| {
                ((vi, pi, rep), run_cell(base, cfg.axis, value, policy, rep))
            })
            .collect::<Vec<_>>()
    };
    let mut keyed = match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .context("building worker pool")?
            .install(run_all),
        None => run_all(),
    };
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(keyed.into_iter().map(|(_, row)| row).collect())
}

/// Collapse long rows into one aggregate row per (value, policy) cell,
/// in the same order the rows arrive. Means and deviations are taken over
/// the runs that produced finite numbers; rows that failed the audit or
/// errored are tallied in `audit_failures`.
pub fn summarize_sweep(rows: &[LongRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(u64, Policy)> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&LongRow>> = BTreeMap::new();
    for row in rows {
        let key = (row.value.to_bits(), row.policy);
        let idx = match order.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                order.push(key);
                order.len() - 1
            }
        };
        groups.entry(idx).or_default().push(row);
    }
    groups
        .into_iter()
        .map(|(_, cell)| {
            let stats = |f: fn(&LongRow) -> f64| {
                let vals: Vec<f64> =
                    cell.iter().map(|r| f(r)).filter(|v| v.is_finite()).collect();
                mean_std(&vals)
            };
            let (td_mean, td_std) = stats(|r| r.total_delay_s);
            let (md_mean, md_std) = stats(|r| r.mean_delay_s);
            let (mc_mean, mc_std) = stats(|r| r.max_completion_s);
            let (pr_mean, _) = stats(|r| r.mean_processed_ratio);
            let (done_mean, _) = stats(|r| r.completed as f64);
            let first = cell[0];
            SummaryRow {
                axis: first.axis,
                value: first.value,
                policy: first.policy,
                runs: cell.len() as u32,
                total_delay_mean: td_mean,
                total_delay_std: td_std,
                mean_delay_mean: md_mean,
                mean_delay_std: md_std,
                max_completion_mean: mc_mean,
                max_completion_std: mc_std,
                processed_ratio_mean: pr_mean,
                completed_mean: done_mean,
                audit_failures: cell.iter().filter(|r| !r.audit_passed()).count() as u32,
            }
        })
        .collect()
}

/// Format a float without trailing leftovers: integers print bare, the
/// rest with full round-trip precision.
pub fn format_float(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        let mut s = String::new();
        write!(s, "{v}").expect("write to string");
        s
    }
}

/// Run a sweep and write `sweep_<axis>_long.csv` and
/// `sweep_<axis>_summary.csv` into `out_dir`. Returns the long rows.
pub fn cmd_sweep(scenario_path: &Path, out_dir: &Path, cfg: &SweepConfig) -> Result<Vec<LongRow>> {
    let base = Scenario::load(scenario_path)
        .with_context(|| format!("loading scenario {}", scenario_path.display()))?;
    let rows = sweep_rows(&base, cfg)?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let long_path = out_dir.join(format!("sweep_{}_long.csv", cfg.axis.name()));
    let mut long = csv::Writer::from_path(&long_path)?;
    long.write_record(LONG_HEADER)?;
    for r in &rows {
        long.write_record([
            r.axis.name().to_string(),
            format_float(r.value),
            r.policy.to_string(),
            r.seed.to_string(),
            format_float(r.total_delay_s),
            format_float(r.mean_delay_s),
            format_float(r.max_completion_s),
            format_float(r.mean_processed_ratio),
            r.completed.to_string(),
            r.trace_digest.clone(),
            r.audit.clone(),
        ])?;
    }
    long.flush()?;

    let summary_path = out_dir.join(format!("sweep_{}_summary.csv", cfg.axis.name()));
    let mut summary = csv::Writer::from_path(&summary_path)?;
    summary.write_record(SUMMARY_HEADER)?;
    for s in summarize_sweep(&rows) {
        summary.write_record([
            s.axis.name().to_string(),
            format_float(s.value),
            s.policy.to_string(),
            s.runs.to_string(),
            format_float(s.total_delay_mean),
            format_float(s.total_delay_std),
            format_float(s.mean_delay_mean),
            format_float(s.mean_delay_std),
            format_float(s.max_completion_mean),
            format_float(s.max_completion_std),
            format_float(s.processed_ratio_mean),
            format_float(s.completed_mean),
            s.audit_failures.to_string(),
        ])?;
    }
    summary.flush()?;

    Ok(rows)
}

/// One instance's row in the exhaustive-comparison output.
#[derive(Debug, Clone)]
pub struct GapRow {
    pub instance: String,
    /// `ok`, `incomparable` (heuristic left chains unfinished),
    /// `infeasible`, or `skipped:<reason>`.
    pub status: String,
    pub oracle_total_s: Option<f64>,
    pub heuristic_total_s: Option<f64>,
    /// `heuristic_total_s / oracle_total_s`; present only for `ok` rows.
    pub gap_ratio: Option<f64>,
    pub detail: String,
}

/// Aggregate over the `ok` rows of a comparison.
#[derive(Debug, Clone)]
pub struct GapSummary {
    pub instances: usize,
    pub compared: usize,
    /// The heuristic never beat the exhaustive optimum.
    pub dominance_holds: bool,
    pub median_gap: f64,
    pub max_gap: f64,
    pub mean_gap: f64,
}

/// Compare one tiny instance's exhaustive optimum against the heuristic
/// run with the given seed.
pub fn compare_instance(name: &str, instance: &TinyInstance, seed: u64) -> GapRow {
    let optimum = match enumerate_optimal(instance) {
        Ok(sol) => sol,
        Err(OracleError::Infeasible) => {
            return GapRow {
                instance: name.to_string(),
                status: "infeasible".into(),
                oracle_total_s: None,
                heuristic_total_s: None,
                gap_ratio: None,
                detail: "no schedule delivers every chain within the horizon".into(),
            }
        }
        Err(err) => {
            return GapRow {
                instance: name.to_string(),
                status: "skipped:bounds".into(),
                oracle_total_s: None,
                heuristic_total_s: None,
                gap_ratio: None,
                detail: err.to_string(),
            }
        }
    };
    let heuristic = instance.run_heuristic(Policy::Frmg, seed);
    let finished = heuristic.report.completed as usize == instance.sfcs.len();
    if !finished {
        return GapRow {
            instance: name.to_string(),
            status: "incomparable".into(),
            oracle_total_s: Some(optimum.total_delay_s),
            heuristic_total_s: None,
            gap_ratio: None,
            detail: format!(
                "heuristic finished {}/{} chains",
                heuristic.report.completed,
                instance.sfcs.len()
            ),
        };
    }
    let heuristic_total = heuristic.report.total_delay_s;
    GapRow {
        instance: name.to_string(),
        status: "ok".into(),
        oracle_total_s: Some(optimum.total_delay_s),
        heuristic_total_s: Some(heuristic_total),
        gap_ratio: Some(heuristic_total / optimum.total_delay_s),
        detail: format!("{} schedules examined", optimum.schedules_examined),
    }
}

/// Aggregate comparison rows. With no `ok` rows the gap fields are NaN
/// and dominance vacuously holds.
pub fn summarize_gaps(rows: &[GapRow]) -> GapSummary {
    let mut gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap_ratio).collect();
    gaps.sort_by(|a, b| a.partial_cmp(b).expect("finite gap ratios"));
    let compared = gaps.len();
    let dominance_holds = rows.iter().all(|r| match (r.heuristic_total_s, r.oracle_total_s) {
        (Some(h), Some(o)) => h >= o - 1e-9,
        _ => true,
    });
    let (median_gap, max_gap, mean_gap) = if compared == 0 {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let median = if compared % 2 == 1 {
            gaps[compared / 2]
        } else {
            0.5 * (gaps[compared / 2 - 1] + gaps[compared / 2])
        };
        (median, gaps[compared - 1], gaps.iter().sum::<f64>() / compared as f64)
    };
    GapSummary {
        instances: rows.len(),
        compared,
        dominance_holds,
        median_gap,
        max_gap,
        mean_gap,
    }
}

/// Compare every `*.toml` instance in a directory (sorted by file name)
/// against the exhaustive optimum and write `gaps.csv` plus
/// `gaps_summary.csv` into `out_dir`.
pub fn cmd_oracle_compare(
    instances_dir: &Path,
    out_dir: &Path,
    seed: u64,
) -> Result<(Vec<GapRow>, GapSummary)> {
    let mut paths: Vec<PathBuf> = fs::read_dir(instances_dir)
        .with_context(|| format!("reading instance directory {}", instances_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .toml instances found in {}", instances_dir.display());
    }

    let rows: Vec<GapRow> = paths
        .par_iter()
        .map(|path| {
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            let text = match fs::read_to_string(path) {
                Ok(t) => t,
                Err(err) => {
                    return GapRow {
                        instance: name,
                        status: "skipped:unreadable".into(),
                        oracle_total_s: None,
                        heuristic_total_s: None,
                        gap_ratio: None,
                        detail: err.to_string(),
                    }
                }
            };
            match TinyInstance::from_toml(&text) {
                Ok(inst) => compare_instance(&name, &inst, seed),
                Err(err) => GapRow {
                    instance: name,
                    status: "skipped:parse".into(),
                    oracle_total_s: None,
                    heuristic_total_s: None,
                    gap_ratio: None,
                    detail: err.to_string().replace('\n', " "),
                },
            }
        })
        .collect();
    let summary = summarize_gaps(&rows);

    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
    let mut gaps = csv::Writer::from_path(out_dir.join("gaps.csv"))?;
    gaps.write_record(GAP_HEADER)?;
    for r in &rows {
        gaps.write_record([
            r.instance.clone(),
            r.status.clone(),
            opt(r.oracle_total_s),
            opt(r.heuristic_total_s),
            opt(r.gap_ratio),
            r.detail.clone(),
        ])?;
    }
    gaps.flush()?;

    let mut sum = csv::Writer::from_path(out_dir.join("gaps_summary.csv"))?;
    sum.write_record(GAP_SUMMARY_HEADER)?;
    sum.write_record([
        summary.instances.to_string(),
        summary.compared.to_string(),
        summary.dominance_holds.to_string(),
        format_float(summary.median_gap),
        format_float(summary.max_gap),
        format_float(summary.mean_gap),
    ])?;
    sum.flush()?;

    Ok((rows, summary))
}

/// Read a tiny instance and write it as an LP-format integer program.
/// Refuses instances outside the enumeration bounds, since the model is
/// built on the same discretization.
pub fn cmd_export_ilp(instance_path: &Path, out_file: &Path) -> Result<()> {
    let text = fs::read_to_string(instance_path)
        .with_context(|| format!("reading instance {}", instance_path.display()))?;
    let instance = TinyInstance::from_toml(&text)
        .with_context(|| format!("parsing instance {}", instance_path.display()))?;
    instance.validate().context("instance outside the exportable bounds")?;
    if let Some(parent) = out_file.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating output directory {}", parent.display()))?;
        }
    }
    fs::write(out_file, export_ilp(&instance))
        .with_context(|| format!("writing {}", out_file.display()))?;
    Ok(())
}
