//! Trial loop, safety resets, convergence detection, scenario batches and metrics.

mod batch;
mod metrics;
pub mod output;
mod trial;

pub use batch::{derive_trial_seed, pick_policies, run_scenario, select_policies, targets_for, BatchResult, BatchSpec};
pub use metrics::{compute_rms, summarize, Metrics, RmsPair, RmsWindow, StepStats, TrialSummary};
pub use trial::{run_trial, MeasurementOffset, TargetSpec, TrialConfig};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dhdp::{ActionScale, NormalizedAction, PolicySnapshot};
use crate::error::{Error, Result};
use crate::fsm::{ImpedanceRanges, ImpedanceSet};
use crate::plant::{DriftParams, Scenario};
use crate::types::{
    within_bound, BoundsTable, ControlDelta, GaitFeatures, ImpedanceTriple, PerPhase, PhaseId, TrackingState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Training,
    Testing,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Training => "training",
            Stage::Testing => "testing",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A phase converges once `quota` of the last `window` cycles are in tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceParams {
    pub window: usize,
    pub quota: usize,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        ConvergenceParams { window: 10, quota: 8 }
    }
}

impl ConvergenceParams {
    pub fn validate(&self) -> Result<()> {
        if self.quota == 0 || self.quota > self.window {
            return Err(Error::invalid("harness.convergence", "need 1 <= quota <= window"));
        }
        Ok(())
    }
}

/// Sliding-window convergence state of the four phases. Convergence is
/// latched until [`ConvergenceTracker::reset`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTracker {
    params: ConvergenceParams,
    history: PerPhase<VecDeque<bool>>,
    converged_at: PerPhase<Option<usize>>,
}

impl ConvergenceTracker {
    pub fn new(params: ConvergenceParams) -> Self {
        ConvergenceTracker {
            params,
            history: PerPhase::from_fn(|_| VecDeque::with_capacity(params.window)),
            converged_at: PerPhase::from_fn(|_| None),
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.params);
    }

    /// Records the in-tolerance flags of cycle `k`.
    pub fn push(&mut self, k: usize, in_tolerance: &PerPhase<bool>) {
        for phase in PhaseId::ALL {
            let h = &mut self.history[phase];
            if h.len() == self.params.window {
                h.pop_front();
            }
            h.push_back(in_tolerance[phase]);
            let hits = h.iter().filter(|&&b| b).count();
            if self.converged_at[phase].is_none() && hits >= self.params.quota {
                self.converged_at[phase] = Some(k);
            }
        }
    }

    pub fn converged(&self) -> PerPhase<bool> {
        self.converged_at.map(|_, c| c.is_some())
    }

    pub fn converged_at(&self) -> PerPhase<Option<usize>> {
        self.converged_at
    }

    pub fn all_converged(&self) -> bool {
        self.converged_at.iter().all(|(_, c)| c.is_some())
    }
}

/// Result of replaying a tolerance history through the convergence rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvergenceStatus {
    pub converged_at: PerPhase<Option<usize>>,
    /// Cycle index at which the last phase converged.
    pub success_at: Option<usize>,
}

pub fn convergence_check(history: &[PerPhase<bool>], params: ConvergenceParams) -> ConvergenceStatus {
    let mut t = ConvergenceTracker::new(params);
    let mut success_at = None;
    for (k, flags) in history.iter().enumerate() {
        t.push(k, flags);
        if success_at.is_none() && t.all_converged() {
            success_at = Some(k);
        }
    }
    ConvergenceStatus { converged_at: t.converged_at(), success_at }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SafetyVerdict {
    Ok,
    /// Phases whose error left the safety bound.
    Reset(PerPhase<bool>),
}

/// Reset is required when any phase leaves its safety bound. Durations are
/// judged as a percentage of `cycle_duration`.
pub fn safety_check(s: &PerPhase<TrackingState>, bounds: &BoundsTable, cycle_duration: f64) -> Result<SafetyVerdict> {
    let mut violated = PerPhase([false; 4]);
    for phase in PhaseId::ALL {
        violated[phase] = !within_bound(&s[phase], &bounds[phase].safety(), cycle_duration)?;
    }
    if violated.iter().any(|(_, v)| *v) {
        Ok(SafetyVerdict::Reset(violated))
    } else {
        Ok(SafetyVerdict::Ok)
    }
}

/// Which phases return to their initial impedance after a safety violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetScope {
    /// Only the phases that left their bound; the others keep tuning.
    Phase,
    /// All four phases.
    Trial,
}

/// Trial-level settings of the tuning protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessParams {
    pub max_cycles: usize,
    pub convergence: ConvergenceParams,
    pub bounds: BoundsTable,
    pub ranges: ImpedanceRanges,
    /// Physical size of a full-scale action, per phase.
    pub action_scale: PerPhase<ActionScale>,
    /// Initial impedance is drawn uniformly within this relative spread of the reference.
    pub initial_spread: f64,
    pub initial_max_draws: usize,
    /// Cycles in each RMS window.
    pub rms_window: usize,
    pub strict_monitor: bool,
    pub reset_scope: ResetScope,
    pub drift: DriftParams,
    pub switch_period: usize,
    pub pool_size: usize,
    /// Relative spread of the terrain impedance pool around the reference.
    pub pool_spread: f64,
    pub consecutive_tracks: usize,
    pub pace_training: Vec<f64>,
    pub pace_testing: Vec<f64>,
    pub training_trials: usize,
    pub testing_policies: usize,
    pub testing_trials: usize,
}

impl Default for HarnessParams {
    fn default() -> Self {
        let scale = |k, b, th| ActionScale { stiffness: k, damping: b, equilibrium: th };
        HarnessParams {
            max_cycles: 500,
            convergence: ConvergenceParams::default(),
            bounds: BoundsTable::default(),
            ranges: ImpedanceRanges::default(),
            // a full-scale action moves the feature each parameter mainly drives
            // by a fixed fraction of its tolerance (K 0.42, B 0.203, θe 0.131)
            action_scale: PerPhase([
                scale(3.682, 0.1015, 0.0034453),
                scale(2.7615, 0.05075, 0.0034453),
                scale(0.7364, 0.0135333, 0.0137812),
                scale(1.1046, 0.0203, 0.0034453),
            ]),
            initial_spread: 0.3,
            initial_max_draws: 1000,
            rms_window: 10,
            strict_monitor: false,
            reset_scope: ResetScope::Phase,
            drift: DriftParams::default(),
            switch_period: 20,
            pool_size: 5,
            pool_spread: 0.15,
            consecutive_tracks: 3,
            pace_training: vec![1.00, 1.12, 1.00, 0.88],
            pace_testing: vec![1.00, 0.80, 1.00, 1.20],
            training_trials: 30,
            testing_policies: 10,
            testing_trials: 30,
        }
    }
}

impl HarnessParams {
    pub fn validate(&self) -> Result<()> {
        self.convergence.validate()?;
        self.bounds.validate()?;
        for (phase, r) in self.ranges.iter() {
            r.validate().map_err(|e| Error::invalid(format!("harness.ranges.{phase}"), e.to_string()))?;
        }
        for (phase, a) in self.action_scale.iter() {
            a.validate().map_err(|e| Error::invalid(format!("harness.action_scale.{phase}"), e.to_string()))?;
        }
        if self.max_cycles <= self.convergence.window {
            return Err(Error::invalid("harness.max_cycles", "must exceed the convergence window"));
        }
        if !(self.initial_spread >= 0.0 && self.initial_spread < 1.0) {
            return Err(Error::invalid("harness.initial_spread", "must lie in [0, 1)"));
        }
        if !(self.pool_spread >= 0.0 && self.pool_spread < 1.0) {
            return Err(Error::invalid("harness.pool_spread", "must lie in [0, 1)"));
        }
        if self.initial_max_draws == 0 || self.rms_window == 0 {
            return Err(Error::invalid("harness", "initial_max_draws and rms_window must be >= 1"));
        }
        if self.switch_period == 0 || self.pool_size == 0 || self.consecutive_tracks == 0 {
            return Err(Error::invalid("harness", "switch_period, pool_size and consecutive_tracks must be >= 1"));
        }
        if !(self.drift.gain >= 0.0 && self.drift.filter > 0.0 && self.drift.filter <= 1.0) {
            return Err(Error::invalid("harness.drift", "need gain >= 0 and filter in (0, 1]"));
        }
        for (key, seq) in [("harness.pace_training", &self.pace_training), ("harness.pace_testing", &self.pace_testing)] {
            if seq.is_empty() || seq.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
                return Err(Error::invalid(key, "multipliers must be positive and non-empty"));
            }
        }
        if self.training_trials == 0 || self.testing_policies == 0 || self.testing_trials == 0 {
            return Err(Error::invalid("harness", "trial counts must be >= 1"));
        }
        Ok(())
    }

    pub fn pace_sequence(&self, stage: Stage) -> &[f64] {
        match stage {
            Stage::Training => &self.pace_training,
            Stage::Testing => &self.pace_testing,
        }
    }
}

/// One phase of one logged cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub target: GaitFeatures,
    pub measured: GaitFeatures,
    pub s: TrackingState,
    /// Signed ΔD as a percentage of the target cycle duration.
    pub duration_pct: f64,
    /// Impedance in effect while this cycle was walked.
    pub impedance: ImpedanceTriple,
    /// Present on cycles where the block learned and acted.
    pub learn: Option<LearnRecord>,
    /// This phase was returned to its initial impedance after the cycle.
    pub reset: bool,
    pub in_tolerance: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnRecord {
    pub action: NormalizedAction,
    pub delta: ControlDelta,
    pub cost: f64,
    pub q: f64,
    pub td_error: f64,
    pub critic_bound: f64,
    pub actor_bound: f64,
    pub monitor_pass: bool,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    /// Terrain segment or pace leg index; zero for level ground.
    pub segment: usize,
    /// Index of the terrain profile in use.
    pub pool_index: Option<usize>,
    pub pace: f64,
    pub reset: bool,
    pub phases: PerPhase<PhaseRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FailureReason {
    MaxCycles,
    MonitorViolation { cycle: usize, phase: PhaseId },
    NumericFault { cycle: usize, what: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Outcome {
    Success { steps: usize },
    Failure { reason: FailureReason },
}

impl Outcome {
    pub fn steps(&self) -> Option<usize> {
        match self {
            Outcome::Success { steps } => Some(*steps),
            Outcome::Failure { .. } => None,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success { .. })
    }
}

/// Append-only log of one trial plus its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub scenario: Scenario,
    pub stage: Stage,
    pub trial: usize,
    pub seed: u64,
    pub policy_id: Option<usize>,
    pub initial_impedance: ImpedanceSet,
    pub cycles: Vec<CycleRecord>,
    pub outcome: Outcome,
    pub monitor_violations: usize,
    pub resets: usize,
    /// Largest absolute weight across all networks at the start of the trial.
    pub initial_sup_norm: f64,
    pub max_sup_norm: f64,
    /// Whether every learning cycle passed the learning-rate monitor.
    pub monitor_clean: bool,
    pub converged_at: PerPhase<Option<usize>>,
    pub final_policy: PolicySnapshot,
}

impl TrialRecord {
    pub fn push(&mut self, rec: CycleRecord) {
        debug_assert!(self.cycles.last().is_none_or(|c| c.cycle < rec.cycle));
        self.cycles.push(rec);
    }
}
