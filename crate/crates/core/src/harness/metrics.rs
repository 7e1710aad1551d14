use serde::{Deserialize, Serialize};

use super::{Outcome, Stage, TrialRecord};
use crate::fsm::ImpedanceSet;
use crate::types::{PerPhase, PhaseId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RmsWindow {
    /// The first N cycles.
    Initial,
    /// The last N in-tolerance cycles of each phase.
    Final,
}

/// Root-mean-square tracking error pooled over the four phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPair {
    pub peak_rad: f64,
    pub duration_pct: f64,
}

/// `None` when the window selects no samples.
pub fn compute_rms(record: &TrialRecord, window: RmsWindow, n: usize) -> Option<RmsPair> {
    let mut sq_peak = 0.0;
    let mut sq_dur = 0.0;
    let mut count = 0usize;
    let mut add = |peak: f64, dur: f64| {
        sq_peak += peak * peak;
        sq_dur += dur * dur;
        count += 1;
    };
    match window {
        RmsWindow::Initial => {
            for c in record.cycles.iter().take(n) {
                for (_, r) in c.phases.iter() {
                    add(r.s.d_peak, r.duration_pct);
                }
            }
        }
        RmsWindow::Final => {
            for phase in PhaseId::ALL {
                let rows = record.cycles.iter().rev().map(|c| &c.phases[phase]).filter(|r| r.in_tolerance).take(n);
                for r in rows {
                    add(r.s.d_peak, r.duration_pct);
                }
            }
        }
    }
    (count > 0).then(|| RmsPair {
        peak_rad: (sq_peak / count as f64).sqrt(),
        duration_pct: (sq_dur / count as f64).sqrt(),
    })
}

/// Per-trial summary written next to the cycle log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub scenario: u8,
    pub stage: Stage,
    pub trial: usize,
    pub seed: u64,
    pub policy_id: Option<usize>,
    pub outcome: Outcome,
    pub success: bool,
    pub steps: Option<usize>,
    pub cycles_run: usize,
    pub resets: usize,
    pub monitor_violations: usize,
    pub converged_at: PerPhase<Option<usize>>,
    pub rms_initial: Option<RmsPair>,
    pub rms_final: Option<RmsPair>,
    pub initial_sup_norm: f64,
    pub max_sup_norm: f64,
    pub initial_impedance: ImpedanceSet,
}

impl TrialSummary {
    pub fn from_record(record: &TrialRecord, rms_window: usize) -> Self {
        TrialSummary {
            scenario: record.scenario.number(),
            stage: record.stage,
            trial: record.trial,
            seed: record.seed,
            policy_id: record.policy_id,
            outcome: record.outcome.clone(),
            success: record.outcome.is_success(),
            steps: record.outcome.steps(),
            cycles_run: record.cycles.len(),
            resets: record.resets,
            monitor_violations: record.monitor_violations,
            converged_at: record.converged_at,
            rms_initial: compute_rms(record, RmsWindow::Initial, rms_window),
            rms_final: compute_rms(record, RmsWindow::Final, rms_window),
            initial_sup_norm: record.initial_sup_norm,
            max_sup_norm: record.max_sup_norm,
            initial_impedance: record.initial_impedance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub mean: f64,
    /// Sample standard deviation; zero for a single trial.
    pub std: f64,
    pub min: usize,
    pub max: usize,
}

/// Batch aggregate over trial summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Absent when no trial succeeded.
    pub steps: Option<StepStats>,
    /// Means of the per-trial RMS values over trials that have them.
    pub rms_initial: Option<RmsPair>,
    pub rms_final: Option<RmsPair>,
    pub monitor_violations: usize,
    pub resets: usize,
    /// Largest ratio of a trial's peak weight magnitude to its initial one.
    pub max_sup_norm_ratio: f64,
}

fn mean_rms<'a>(items: impl Iterator<Item = &'a RmsPair>) -> Option<RmsPair> {
    let v: Vec<&RmsPair> = items.collect();
    (!v.is_empty()).then(|| RmsPair {
        peak_rad: v.iter().map(|r| r.peak_rad).sum::<f64>() / v.len() as f64,
        duration_pct: v.iter().map(|r| r.duration_pct).sum::<f64>() / v.len() as f64,
    })
}

pub fn summarize(trials: &[TrialSummary]) -> Metrics {
    let n = trials.len();
    let steps: Vec<usize> = trials.iter().filter_map(|t| t.steps).collect();
    let step_stats = (!steps.is_empty()).then(|| {
        let m = steps.iter().sum::<usize>() as f64 / steps.len() as f64;
        let var = if steps.len() > 1 {
            steps.iter().map(|&s| (s as f64 - m).powi(2)).sum::<f64>() / (steps.len() - 1) as f64
        } else {
            0.0
        };
        StepStats { mean: m, std: var.sqrt(), min: *steps.iter().min().unwrap(), max: *steps.iter().max().unwrap() }
    });
    let ratio = trials
        .iter()
        .filter(|t| t.initial_sup_norm > 0.0)
        .map(|t| t.max_sup_norm / t.initial_sup_norm)
        .fold(0.0, f64::max);
    Metrics {
        trials: n,
        successes: steps.len(),
        success_rate: if n == 0 { 0.0 } else { steps.len() as f64 / n as f64 },
        steps: step_stats,
        rms_initial: mean_rms(trials.iter().filter_map(|t| t.rms_initial.as_ref())),
        rms_final: mean_rms(trials.iter().filter_map(|t| t.rms_final.as_ref())),
        monitor_violations: trials.iter().map(|t| t.monitor_violations).sum(),
        resets: trials.iter().map(|t| t.resets).sum(),
        max_sup_norm_ratio: ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dhdp::PolicySnapshot;
    use crate::harness::{CycleRecord, FailureReason, PhaseRecord};
    use crate::plant::Scenario;
    use crate::types::{GaitFeatures, ImpedanceTriple, TrackingState};
    use approx::assert_abs_diff_eq;

    fn record(errors: &[(f64, f64, bool)]) -> TrialRecord {
        let f = GaitFeatures { duration: 0.25, peak_angle: 0.5 };
        let cycles = errors
            .iter()
            .enumerate()
            .map(|(k, &(dd, dp, tol))| CycleRecord {
                cycle: k,
                segment: 0,
                pool_index: None,
                pace: 1.0,
                reset: false,
                phases: PerPhase::from_fn(|_| PhaseRecord {
                    target: f,
                    measured: f,
                    s: TrackingState::new(dd, dp),
                    duration_pct: 100.0 * dd,
                    impedance: ImpedanceTriple::ZERO,
                    learn: None,
                    reset: false,
                    in_tolerance: tol,
                    converged: false,
                }),
            })
            .collect();
        TrialRecord {
            scenario: Scenario::LevelGround,
            stage: Stage::Training,
            trial: 0,
            seed: 0,
            policy_id: None,
            initial_impedance: PerPhase([ImpedanceTriple::ZERO; 4]),
            cycles,
            outcome: Outcome::Failure { reason: FailureReason::MaxCycles },
            monitor_violations: 0,
            resets: 0,
            initial_sup_norm: 1.0,
            max_sup_norm: 1.0,
            monitor_clean: true,
            converged_at: PerPhase([None; 4]),
            final_policy: PolicySnapshot { format: String::new(), phases: vec![] },
        }
    }

    #[test]
    fn zero_errors_give_zero_rms() {
        let r = record(&[(0.0, 0.0, true); 12]);
        assert_eq!(compute_rms(&r, RmsWindow::Initial, 10), Some(RmsPair { peak_rad: 0.0, duration_pct: 0.0 }));
        assert_eq!(compute_rms(&r, RmsWindow::Final, 10), Some(RmsPair { peak_rad: 0.0, duration_pct: 0.0 }));
    }

    #[test]
    fn constant_error_gives_its_magnitude() {
        let r = record(&[(-0.01, 0.03, true); 10]);
        let rms = compute_rms(&r, RmsWindow::Initial, 10).unwrap();
        assert_abs_diff_eq!(rms.peak_rad, 0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(rms.duration_pct, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn hand_computed_windows() {
        // initial window of 2: peaks 0.03, 0.04 → sqrt((9+16)/2)·1e-2
        let mut e = vec![(0.0, 0.03, false), (0.0, 0.04, false)];
        e.extend([(0.0, 0.05, false), (0.0, 0.01, true), (0.0, 0.02, true), (0.0, 0.06, false)]);
        let r = record(&e);
        let init = compute_rms(&r, RmsWindow::Initial, 2).unwrap();
        assert_abs_diff_eq!(init.peak_rad, (12.5f64).sqrt() * 1e-2, epsilon = 1e-15);
        // final window of 2 skips the out-of-tolerance last cycle: 0.02, 0.01
        let fin = compute_rms(&r, RmsWindow::Final, 2).unwrap();
        assert_abs_diff_eq!(fin.peak_rad, (2.5f64).sqrt() * 1e-2, epsilon = 1e-15);
    }

    #[test]
    fn empty_final_window_is_absent() {
        let r = record(&[(0.0, 0.05, false); 5]);
        assert!(compute_rms(&r, RmsWindow::Final, 10).is_none());
    }

    #[test]
    fn all_failures_have_no_steps() {
        let s = TrialSummary::from_record(&record(&[(0.0, 0.05, false); 3]), 10);
        let m = summarize(&[s.clone(), s]);
        assert_eq!(m.success_rate, 0.0);
        assert!(m.steps.is_none());
    }

    #[test]
    fn step_statistics() {
        let base = TrialSummary::from_record(&record(&[(0.0, 0.0, true)]), 10);
        let mk = |steps: Option<usize>| TrialSummary { steps, success: steps.is_some(), ..base.clone() };
        let m = summarize(&[mk(Some(10)), mk(Some(20)), mk(Some(30)), mk(None)]);
        assert_eq!(m.success_rate, 0.75);
        let st = m.steps.unwrap();
        assert_eq!(st.mean, 20.0);
        assert_abs_diff_eq!(st.std, 10.0, epsilon = 1e-12);
        assert_eq!((st.min, st.max), (10, 30));
    }
}
