//! Files written for a batch and read back by the report.
//!
//! ```text
//! <out>/summary.json          batch metrics and every trial summary
//! <out>/tracking.csv          tracking error per cycle and phase, all trials
//! <out>/rms.csv               initial and final RMS error per trial
//! <out>/trials/trial_NNN.csv  full per-cycle log of one trial
//! <out>/trials/trial_NNN.json summary of one trial
//! <out>/policies/policy_NNN.json  final networks of successful training trials
//! ```
//!
//! Floats are written in shortest round-trip form, so identical runs produce
//! identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::batch::{BatchResult, BatchSpec};
use super::metrics::{summarize, Metrics, RmsPair, TrialSummary};
use super::{Stage, TrialRecord};
use crate::dhdp::PolicySnapshot;
use crate::error::{Error, Result};
use crate::plant::PlantKind;
use crate::types::BoundsTable;

pub const BATCH_FORMAT: &str = "kneetune-batch/1";

/// Column order of the per-trial cycle log.
pub const CYCLE_COLUMNS: [&str; 32] = [
    "trial",
    "cycle",
    "segment",
    "pool_index",
    "pace",
    "phase",
    "reset",
    "target_duration",
    "target_peak",
    "measured_duration",
    "measured_peak",
    "s_duration",
    "s_peak",
    "duration_pct",
    "stiffness",
    "damping",
    "equilibrium",
    "u_stiffness",
    "u_damping",
    "u_equilibrium",
    "d_stiffness",
    "d_damping",
    "d_equilibrium",
    "cost",
    "q",
    "td_error",
    "critic_bound",
    "actor_bound",
    "monitor_pass",
    "clamped",
    "in_tolerance",
    "converged",
];

pub const TRACKING_COLUMNS: [&str; 11] = [
    "stage",
    "trial",
    "cycle",
    "segment",
    "pace",
    "phase",
    "s_peak",
    "duration_pct",
    "tol_angle",
    "tol_duration_pct",
    "reset",
];

pub const RMS_COLUMNS: [&str; 9] = [
    "scenario",
    "stage",
    "trial",
    "policy_id",
    "success",
    "initial_peak_rad",
    "final_peak_rad",
    "initial_duration_pct",
    "final_duration_pct",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub format: String,
    pub scenario: u8,
    pub stage: Stage,
    pub seed: u64,
    pub plant: PlantKind,
    pub metrics: Metrics,
    pub trials: Vec<TrialSummary>,
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_cycle_csv(path: &Path, record: &TrialRecord) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(CYCLE_COLUMNS)?;
    for c in &record.cycles {
        for (phase, r) in c.phases.iter() {
            let l = r.learn;
            let lf = |f: fn(&super::LearnRecord) -> f64| opt(l.as_ref().map(|x| num(f(x))));
            let row = vec![
                record.trial.to_string(),
                c.cycle.to_string(),
                c.segment.to_string(),
                opt(c.pool_index),
                num(c.pace),
                phase.abbrev().to_string(),
                flag(r.reset).to_string(),
                num(r.target.duration),
                num(r.target.peak_angle),
                num(r.measured.duration),
                num(r.measured.peak_angle),
                num(r.s.d_duration),
                num(r.s.d_peak),
                num(r.duration_pct),
                num(r.impedance.stiffness),
                num(r.impedance.damping),
                num(r.impedance.equilibrium),
                lf(|x| x.action.0[0]),
                lf(|x| x.action.0[1]),
                lf(|x| x.action.0[2]),
                lf(|x| x.delta.d_stiffness),
                lf(|x| x.delta.d_damping),
                lf(|x| x.delta.d_equilibrium),
                lf(|x| x.cost),
                lf(|x| x.q),
                lf(|x| x.td_error),
                lf(|x| x.critic_bound),
                lf(|x| x.actor_bound),
                opt(l.map(|x| flag(x.monitor_pass))),
                opt(l.map(|x| flag(x.clamped))),
                flag(r.in_tolerance).to_string(),
                flag(r.converged).to_string(),
            ];
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_tracking_csv(path: &Path, records: &[TrialRecord], bounds: &BoundsTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(TRACKING_COLUMNS)?;
    for rec in records {
        for c in &rec.cycles {
            for (phase, r) in c.phases.iter() {
                let tol = bounds[phase].tolerance();
                w.write_record([
                    rec.stage.as_str().to_string(),
                    rec.trial.to_string(),
                    c.cycle.to_string(),
                    c.segment.to_string(),
                    num(c.pace),
                    phase.abbrev().to_string(),
                    num(r.s.d_peak),
                    num(r.duration_pct),
                    num(tol.angle),
                    num(tol.duration_pct),
                    flag(r.reset).to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_rms_csv(path: &Path, summaries: &[TrialSummary]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(RMS_COLUMNS)?;
    for s in summaries {
        let part = |r: Option<RmsPair>, f: fn(&RmsPair) -> f64| opt(r.as_ref().map(|x| num(f(x))));
        w.write_record([
            s.scenario.to_string(),
            s.stage.as_str().to_string(),
            s.trial.to_string(),
            opt(s.policy_id),
            flag(s.success).to_string(),
            part(s.rms_initial, |x| x.peak_rad),
            part(s.rms_final, |x| x.peak_rad),
            part(s.rms_initial, |x| x.duration_pct),
            part(s.rms_final, |x| x.duration_pct),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn trial_stem(trial: usize) -> String {
    format!("trial_{trial:03}")
}

pub fn policy_path(dir: &Path, trial: usize) -> PathBuf {
    dir.join("policies").join(format!("policy_{trial:03}.json"))
}

/// Reads every `policy_NNN.json` in `dir`, ordered by trial index.
pub fn load_policy_dir(dir: &Path) -> Result<Vec<(usize, PolicySnapshot)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let index = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("policy_")?.strip_suffix(".json"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(index) = index {
            out.push((index, PolicySnapshot::load(&path)?));
        }
    }
    out.sort_by_key(|(i, _)| *i);
    Ok(out)
}

pub fn batch_summary(spec: &BatchSpec, result: &BatchResult) -> BatchSummary {
    BatchSummary {
        format: BATCH_FORMAT.to_string(),
        scenario: spec.scenario.number(),
        stage: spec.stage,
        seed: spec.seed,
        plant: spec.plant.kind,
        metrics: result.metrics.clone(),
        trials: result.summaries.clone(),
    }
}

/// Writes every batch file under `dir`. Successful training trials also
/// leave their final policy for a later testing batch.
pub fn write_batch(dir: &Path, spec: &BatchSpec, result: &BatchResult) -> Result<()> {
    let trials_dir = dir.join("trials");
    create_dir(&trials_dir)?;
    for (rec, summary) in result.records.iter().zip(&result.summaries) {
        let stem = trial_stem(rec.trial);
        write_cycle_csv(&trials_dir.join(format!("{stem}.csv")), rec)?;
        write_json(&trials_dir.join(format!("{stem}.json")), summary)?;
    }
    if spec.stage == Stage::Training {
        let successful: Vec<&TrialRecord> = result.records.iter().filter(|r| r.outcome.is_success()).collect();
        if !successful.is_empty() {
            create_dir(&dir.join("policies"))?;
        }
        for rec in successful {
            rec.final_policy.save(&policy_path(dir, rec.trial))?;
        }
    }
    write_tracking_csv(&dir.join("tracking.csv"), &result.records, &spec.harness.bounds)?;
    write_rms_csv(&dir.join("rms.csv"), &result.summaries)?;
    write_json(&dir.join("summary.json"), &batch_summary(spec, result))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: u8,
    pub stage: Stage,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub files_read: usize,
    pub skipped: Vec<SkippedFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub diagnostics: Diagnostics,
    #[serde(skip)]
    pub trials: Vec<TrialSummary>,
}

fn collect_trial_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_trial_files(&p, out)?;
        } else if p.extension().is_some_and(|x| x == "json")
            && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("trial_"))
        {
            out.push(p);
        }
    }
    Ok(())
}

/// Aggregates every `trial_*.json` below `dir` by scenario and stage.
/// Unreadable or malformed files are skipped and listed in the diagnostics.
pub fn build_report(dir: &Path) -> Result<Report> {
    if !dir.is_dir() {
        return Err(Error::InvalidArgument(format!("not a directory: {}", dir.display())));
    }
    let mut files = Vec::new();
    collect_trial_files(dir, &mut files)?;
    let mut trials = Vec::new();
    let mut skipped = Vec::new();
    for path in &files {
        let parsed = fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<TrialSummary>(&t).map_err(|e| e.to_string()));
        match parsed {
            Ok(t) => trials.push(t),
            Err(error) => {
                log::warn!("skipping {}: {error}", path.display());
                skipped.push(SkippedFile { path: path.display().to_string(), error });
            }
        }
    }
    if trials.is_empty() {
        return Err(Error::InvalidArgument(format!("no trial summaries found under {}", dir.display())));
    }
    let mut groups: BTreeMap<(u8, u8), Vec<TrialSummary>> = BTreeMap::new();
    for t in &trials {
        let stage_key = match t.stage {
            Stage::Training => 0,
            Stage::Testing => 1,
        };
        groups.entry((t.scenario, stage_key)).or_default().push(t.clone());
    }
    let rows = groups
        .into_values()
        .map(|g| ReportRow { scenario: g[0].scenario, stage: g[0].stage, metrics: summarize(&g) })
        .collect();
    Ok(Report { rows, diagnostics: Diagnostics { files_read: files.len(), skipped }, trials })
}

/// Fixed-width table: scenario, stage, success rate, steps mean ± std.
pub fn format_table(report: &Report) -> String {
    let mut s = String::from("scenario  stage     trials  success_rate  tuning_steps\n");
    for r in &report.rows {
        let steps = match r.metrics.steps {
            Some(st) => format!("{:.2} ± {:.2}", st.mean, st.std),
            None => "-".to_string(),
        };
        s.push_str(&format!(
            "{:<9} {:<9} {:>6}  {:>12.3}  {}\n",
            r.scenario,
            r.stage.as_str(),
            r.metrics.trials,
            r.metrics.success_rate,
            steps
        ));
    }
    s
}

/// Writes `report.json`, `report.txt` and `report_rms.csv` into `dir`.
pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    write_json(&dir.join("report.json"), report)?;
    let path = dir.join("report.txt");
    fs::write(&path, format_table(report)).map_err(|e| Error::io(&path, e))?;
    write_rms_csv(&dir.join("report_rms.csv"), &report.trials)
}
