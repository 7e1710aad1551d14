//! Finite-state-machine impedance controller.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ControlDelta, ImpedanceTriple, PerPhase, PhaseId, KNEE_ANGLE_MAX, KNEE_ANGLE_MIN};

/// Impedance triples for all four phases.
pub type ImpedanceSet = PerPhase<ImpedanceTriple>;

impl ImpedanceSet {
    pub fn validate(&self) -> Result<()> {
        for (phase, t) in self.iter() {
            t.validate().map_err(|e| Error::invalid(format!("impedance.{phase}"), e.to_string()))?;
        }
        Ok(())
    }
}

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// Admissible stiffness, damping and equilibrium ranges of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceRange {
    pub stiffness: Range,
    pub damping: Range,
    pub equilibrium: Range,
}

impl Default for ImpedanceRange {
    fn default() -> Self {
        ImpedanceRange {
            stiffness: Range::new(0.0, 100.0),
            damping: Range::new(0.0, 5.0),
            equilibrium: Range::new(KNEE_ANGLE_MIN, KNEE_ANGLE_MAX),
        }
    }
}

impl ImpedanceRange {
    pub fn validate(&self) -> Result<()> {
        let ok = |r: &Range, lo: f64, hi: f64| r.min.is_finite() && r.max.is_finite() && lo <= r.min && r.min <= r.max && r.max <= hi;
        if !ok(&self.stiffness, 0.0, f64::INFINITY) || !ok(&self.damping, 0.0, f64::INFINITY) {
            return Err(Error::invalid("ranges", "stiffness and damping ranges must satisfy 0 <= min <= max"));
        }
        if !ok(&self.equilibrium, KNEE_ANGLE_MIN, KNEE_ANGLE_MAX) {
            return Err(Error::invalid("ranges", "equilibrium range must lie within the knee range"));
        }
        Ok(())
    }

    fn ranges(&self) -> [Range; 3] {
        [self.stiffness, self.damping, self.equilibrium]
    }

    pub fn contains(&self, t: &ImpedanceTriple) -> bool {
        self.ranges().iter().zip(t.as_array()).all(|(r, v)| r.contains(v))
    }
}

pub type ImpedanceRanges = PerPhase<ImpedanceRange>;

impl Default for ImpedanceRanges {
    fn default() -> Self {
        PerPhase::from_fn(|_| ImpedanceRange::default())
    }
}

/// Which components of a delta were clipped to the physical range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampFlags {
    pub stiffness: bool,
    pub damping: bool,
    pub equilibrium: bool,
}

impl ClampFlags {
    pub fn any(&self) -> bool {
        self.stiffness || self.damping || self.equilibrium
    }
}

/// Knee torque of the impedance law, N·m.
pub fn joint_torque(imp: &ImpedanceTriple, theta: f64, omega: f64) -> f64 {
    imp.stiffness * (theta - imp.equilibrium) + imp.damping * omega
}

/// Adds `u` to the impedance of `phase`, clamping each component into its range.
pub fn apply_delta(
    imp: &ImpedanceSet,
    phase: PhaseId,
    u: &ControlDelta,
    ranges: &ImpedanceRanges,
) -> (ImpedanceSet, ClampFlags) {
    let mut out = *imp;
    let range = ranges[phase].ranges();
    let cur = imp[phase].as_array();
    let du = u.as_array();
    let mut next = [0.0; 3];
    let mut clipped = [false; 3];
    for i in 0..3 {
        let raw = cur[i] + du[i];
        next[i] = raw.clamp(range[i].min, range[i].max);
        clipped[i] = next[i] != raw;
    }
    out[phase] = ImpedanceTriple::from_array(next);
    let flags = ClampFlags { stiffness: clipped[0], damping: clipped[1], equilibrium: clipped[2] };
    (out, flags)
}

/// Gait events detected outside the knee (ground contact).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GaitEvents {
    pub heel_strike: bool,
    pub toe_off: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsmState {
    pub current_phase: PhaseId,
    pub phase_elapsed: f64,
    pub cycle_elapsed: f64,
    /// Angular velocity seen on the previous step, used to detect flexion peaks.
    pub last_omega: f64,
}

impl Default for FsmState {
    fn default() -> Self {
        FsmState { current_phase: PhaseId::StanceFlexion, phase_elapsed: 0.0, cycle_elapsed: 0.0, last_omega: 0.0 }
    }
}

impl FsmState {
    /// Fresh state at heel strike.
    pub fn at_heel_strike() -> Self {
        Self::default()
    }
}

/// Advances the phase machine by one sample of length `dt`.
///
/// Transitions: STF→STE and SWF→SWE when ω changes sign from positive to
/// non-positive (flexion peak), STE→SWF on toe-off, SWE→STF on heel strike.
/// Elapsed times are advanced by `dt` before the transition test; a transition
/// zeroes `phase_elapsed`, and entering STF also zeroes `cycle_elapsed`.
pub fn step_fsm(state: &FsmState, _theta: f64, omega: f64, events: GaitEvents, dt: f64) -> FsmState {
    let mut next = *state;
    next.phase_elapsed += dt;
    next.cycle_elapsed += dt;
    let peak = state.last_omega > 0.0 && omega <= 0.0;
    let transition = match state.current_phase {
        PhaseId::StanceFlexion | PhaseId::SwingFlexion => peak,
        PhaseId::StanceExtension => events.toe_off,
        PhaseId::SwingExtension => events.heel_strike,
    };
    if transition {
        next.current_phase = state.current_phase.next();
        next.phase_elapsed = 0.0;
        if next.current_phase == PhaseId::StanceFlexion {
            next.cycle_elapsed = 0.0;
        }
    }
    next.last_omega = omega;
    next
}
