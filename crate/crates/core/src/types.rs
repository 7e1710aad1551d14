//! Domain types shared by the FSM, plant, learner and harness.
//!
//! All angles are radians. Durations are seconds, except for the bound
//! tables where duration limits are percentages of the full gait cycle.

use std::fmt;
use std::ops::{Index, IndexMut, Neg};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical knee flexion range, radians.
pub const KNEE_ANGLE_MIN: f64 = 0.0;
pub const KNEE_ANGLE_MAX: f64 = 1.6;

/// One of the four gait phases of the impedance controller, in cycle order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PhaseId {
    /// Stance flexion.
    #[serde(rename = "STF")]
    StanceFlexion,
    /// Stance extension.
    #[serde(rename = "STE")]
    StanceExtension,
    /// Swing flexion.
    #[serde(rename = "SWF")]
    SwingFlexion,
    /// Swing extension.
    #[serde(rename = "SWE")]
    SwingExtension,
}

impl PhaseId {
    pub const ALL: [PhaseId; 4] = [
        PhaseId::StanceFlexion,
        PhaseId::StanceExtension,
        PhaseId::SwingFlexion,
        PhaseId::SwingExtension,
    ];

    /// 1-based phase number (STF = 1 ... SWE = 4).
    pub fn number(self) -> usize {
        self.slot() + 1
    }

    /// 0-based array slot.
    pub fn slot(self) -> usize {
        match self {
            PhaseId::StanceFlexion => 0,
            PhaseId::StanceExtension => 1,
            PhaseId::SwingFlexion => 2,
            PhaseId::SwingExtension => 3,
        }
    }

    pub fn from_number(n: usize) -> Result<Self> {
        match n {
            1..=4 => Ok(Self::ALL[n - 1]),
            _ => Err(Error::InvalidArgument(format!("phase number must be in 1..=4, got {n}"))),
        }
    }

    pub fn next(self) -> Self {
        Self::ALL[(self.slot() + 1) % 4]
    }

    /// Flexion phases peak at a maximum angle, extension phases at a minimum.
    pub fn is_flexion(self) -> bool {
        matches!(self, PhaseId::StanceFlexion | PhaseId::SwingFlexion)
    }

    pub fn is_stance(self) -> bool {
        matches!(self, PhaseId::StanceFlexion | PhaseId::StanceExtension)
    }

    pub fn abbrev(self) -> &'static str {
        match self {
            PhaseId::StanceFlexion => "STF",
            PhaseId::StanceExtension => "STE",
            PhaseId::SwingFlexion => "SWF",
            PhaseId::SwingExtension => "SWE",
        }
    }
}

impl fmt::Display for PhaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

/// Fixed-size per-phase container indexed by [`PhaseId`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PerPhase<T>(pub [T; 4]);

impl<T> PerPhase<T> {
    pub fn from_fn(mut f: impl FnMut(PhaseId) -> T) -> Self {
        PerPhase([
            f(PhaseId::ALL[0]),
            f(PhaseId::ALL[1]),
            f(PhaseId::ALL[2]),
            f(PhaseId::ALL[3]),
        ])
    }

    pub fn iter(&self) -> impl Iterator<Item = (PhaseId, &T)> {
        PhaseId::ALL.into_iter().zip(self.0.iter())
    }

    pub fn map<U>(&self, mut f: impl FnMut(PhaseId, &T) -> U) -> PerPhase<U> {
        PerPhase::from_fn(|p| f(p, &self.0[p.slot()]))
    }
}

impl<T> Index<PhaseId> for PerPhase<T> {
    type Output = T;
    fn index(&self, phase: PhaseId) -> &T {
        &self.0[phase.slot()]
    }
}

impl<T> IndexMut<PhaseId> for PerPhase<T> {
    fn index_mut(&mut self, phase: PhaseId) -> &mut T {
        &mut self.0[phase.slot()]
    }
}

/// Per-phase (duration, peak angle) pair describing one phase of a knee trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitFeatures {
    pub duration: f64,
    pub peak_angle: f64,
}

impl GaitFeatures {
    pub fn new(duration: f64, peak_angle: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::invalid("duration", format!("must be finite and > 0, got {duration}")));
        }
        if !(KNEE_ANGLE_MIN..=KNEE_ANGLE_MAX).contains(&peak_angle) {
            return Err(Error::invalid(
                "peak_angle",
                format!("must lie in [{KNEE_ANGLE_MIN}, {KNEE_ANGLE_MAX}] rad, got {peak_angle}"),
            ));
        }
        Ok(GaitFeatures { duration, peak_angle })
    }

    /// Projects arbitrary finite values onto the valid feature domain.
    pub fn clamped(duration: f64, peak_angle: f64) -> Self {
        GaitFeatures {
            duration: duration.max(MIN_PHASE_DURATION),
            peak_angle: peak_angle.clamp(KNEE_ANGLE_MIN, KNEE_ANGLE_MAX),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.duration.is_finite()
            && self.duration > 0.0
            && (KNEE_ANGLE_MIN..=KNEE_ANGLE_MAX).contains(&self.peak_angle)
    }
}

/// Shortest phase duration a plant may report, seconds.
pub const MIN_PHASE_DURATION: f64 = 1e-3;

/// Features of all four phases of one gait cycle.
pub type CycleFeatures = PerPhase<GaitFeatures>;

impl CycleFeatures {
    /// Sum of the four phase durations, seconds.
    pub fn cycle_duration(&self) -> f64 {
        self.0.iter().map(|f| f.duration).sum()
    }
}

/// Target-minus-measured feature error, the learner's state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingState {
    pub d_duration: f64,
    pub d_peak: f64,
}

impl TrackingState {
    pub const ZERO: TrackingState = TrackingState { d_duration: 0.0, d_peak: 0.0 };

    pub fn new(d_duration: f64, d_peak: f64) -> Self {
        TrackingState { d_duration, d_peak }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.d_duration, self.d_peak]
    }
}

impl Neg for TrackingState {
    type Output = TrackingState;
    fn neg(self) -> TrackingState {
        TrackingState::new(-self.d_duration, -self.d_peak)
    }
}

/// Stiffness (N·m/rad), damping (N·m·s/rad) and equilibrium angle (rad) of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceTriple {
    pub stiffness: f64,
    pub damping: f64,
    pub equilibrium: f64,
}

impl ImpedanceTriple {
    pub const ZERO: ImpedanceTriple = ImpedanceTriple { stiffness: 0.0, damping: 0.0, equilibrium: 0.0 };

    pub fn new(stiffness: f64, damping: f64, equilibrium: f64) -> Result<Self> {
        let t = ImpedanceTriple { stiffness, damping, equilibrium };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stiffness.is_finite() && self.stiffness >= 0.0) {
            return Err(Error::invalid("stiffness", format!("must be >= 0, got {}", self.stiffness)));
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(Error::invalid("damping", format!("must be >= 0, got {}", self.damping)));
        }
        if !(KNEE_ANGLE_MIN..=KNEE_ANGLE_MAX).contains(&self.equilibrium) {
            return Err(Error::invalid(
                "equilibrium",
                format!("must lie in [{KNEE_ANGLE_MIN}, {KNEE_ANGLE_MAX}] rad, got {}", self.equilibrium),
            ));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.stiffness, self.damping, self.equilibrium]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        ImpedanceTriple { stiffness: a[0], damping: a[1], equilibrium: a[2] }
    }
}

/// Per-cycle change applied to one phase's impedance triple.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlDelta {
    pub d_stiffness: f64,
    pub d_damping: f64,
    pub d_equilibrium: f64,
}

impl ControlDelta {
    pub const ZERO: ControlDelta = ControlDelta { d_stiffness: 0.0, d_damping: 0.0, d_equilibrium: 0.0 };

    pub fn new(d_stiffness: f64, d_damping: f64, d_equilibrium: f64) -> Self {
        ControlDelta { d_stiffness, d_damping, d_equilibrium }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.d_stiffness, self.d_damping, self.d_equilibrium]
    }
}

impl Neg for ControlDelta {
    type Output = ControlDelta;
    fn neg(self) -> ControlDelta {
        ControlDelta::new(-self.d_stiffness, -self.d_damping, -self.d_equilibrium)
    }
}

/// An (angle, duration-percent) error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    /// Peak-angle limit, radians.
    pub angle: f64,
    /// Duration limit, percent of the gait cycle.
    pub duration_pct: f64,
}

/// Safety and tolerance bounds of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseBounds {
    pub safety_angle: f64,
    pub safety_duration_pct: f64,
    pub tol_angle: f64,
    pub tol_duration_pct: f64,
}

impl PhaseBounds {
    pub fn safety(&self) -> ErrorBound {
        ErrorBound { angle: self.safety_angle, duration_pct: self.safety_duration_pct }
    }

    pub fn tolerance(&self) -> ErrorBound {
        ErrorBound { angle: self.tol_angle, duration_pct: self.tol_duration_pct }
    }
}

/// Per-phase safety and tolerance bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoundsTable(pub PerPhase<PhaseBounds>);

impl Default for BoundsTable {
    /// Safety: [0.184, 0.131, 0.157, 0.105] rad and 12 % per phase;
    /// tolerance: 0.0263 rad and 2 % for every phase.
    fn default() -> Self {
        let safety_angle = [0.184, 0.131, 0.157, 0.105];
        BoundsTable(PerPhase::from_fn(|p| PhaseBounds {
            safety_angle: safety_angle[p.slot()],
            safety_duration_pct: 12.0,
            tol_angle: 0.0263,
            tol_duration_pct: 2.0,
        }))
    }
}

impl BoundsTable {
    pub fn validate(&self) -> Result<()> {
        for (phase, b) in self.0.iter() {
            let vals = [b.safety_angle, b.safety_duration_pct, b.tol_angle, b.tol_duration_pct];
            if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::invalid(format!("bounds.{phase}"), "all bounds must be positive"));
            }
            if b.tol_angle >= b.safety_angle || b.tol_duration_pct >= b.safety_duration_pct {
                return Err(Error::invalid(
                    format!("bounds.{phase}"),
                    "tolerance bounds must be strictly inside safety bounds",
                ));
            }
        }
        Ok(())
    }
}

impl Index<PhaseId> for BoundsTable {
    type Output = PhaseBounds;
    fn index(&self, phase: PhaseId) -> &PhaseBounds {
        &self.0[phase]
    }
}

/// Intact-knee target minus prosthetic measurement, componentwise.
pub fn tracking_error(target: &GaitFeatures, measured: &GaitFeatures) -> TrackingState {
    TrackingState {
        d_duration: target.duration - measured.duration,
        d_peak: target.peak_angle - measured.peak_angle,
    }
}

/// Whether `s` lies inside `bound`; the duration error is converted to a
/// percentage of `cycle_duration` before comparison.
pub fn within_bound(s: &TrackingState, bound: &ErrorBound, cycle_duration: f64) -> Result<bool> {
    if !(cycle_duration.is_finite() && cycle_duration > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cycle duration must be positive, got {cycle_duration}"
        )));
    }
    Ok(s.d_peak.abs() <= bound.angle && duration_percent(s.d_duration, cycle_duration) <= bound.duration_pct)
}

/// |ΔD| as a percentage of the gait cycle.
pub fn duration_percent(d_duration: f64, cycle_duration: f64) -> f64 {
    100.0 * d_duration.abs() / cycle_duration
}
