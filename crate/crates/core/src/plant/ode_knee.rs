//! Single-joint knee dynamics driven by the impedance controller.
//!
//! `J θ̈ = −T(θ, ω) + τ_load`, with `T` the phase's impedance torque held
//! for one controller sample and integrated with semi-implicit Euler
//! substeps. Stance phases see a constant extensor bias, swing phases a
//! gravity pendulum term `−m g l sin θ`. Toe-off fires at a fixed fraction of
//! the cycle (scaled by pace); heel strike fires in swing extension once the
//! knee has extended below a threshold angle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsm::{joint_torque, step_fsm, FsmState, GaitEvents, ImpedanceSet};
use crate::types::{
    CycleFeatures, GaitFeatures, ImpedanceTriple, PerPhase, PhaseId, KNEE_ANGLE_MAX, KNEE_ANGLE_MIN,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeKneeParams {
    /// Shank-and-foot inertia about the knee, kg·m².
    pub inertia: f64,
    /// Impedance controller sample time, s.
    pub timestep: f64,
    /// Integration substeps per controller sample.
    pub substeps: usize,
    /// Constant load torque during stance, N·m (negative extends the knee).
    pub stance_bias: f64,
    /// Pendulum coefficient m·g·l applied in swing, N·m.
    pub swing_gravity: f64,
    /// Toe-off time after heel strike at pace 1, s.
    pub toe_off_time: f64,
    /// Heel strike fires in swing extension once θ drops to this angle, rad.
    pub heel_strike_angle: f64,
    /// Angle and velocity at heel strike.
    pub initial_theta: f64,
    pub initial_omega: f64,
    /// A phase that outlasts this is reported as missing, s.
    pub max_phase_time: f64,
    /// |ω| above this is treated as divergence, rad/s.
    pub divergence_limit: f64,
    /// Impedance used as the reference operating point (and intact-knee default).
    pub reference_impedance: ImpedanceSet,
}

impl Default for OdeKneeParams {
    fn default() -> Self {
        let triple = |k, b, th| ImpedanceTriple { stiffness: k, damping: b, equilibrium: th };
        OdeKneeParams {
            inertia: 0.05,
            timestep: 0.01,
            substeps: 10,
            stance_bias: -2.0,
            swing_gravity: 1.5,
            toe_off_time: 0.6,
            heel_strike_angle: 0.12,
            initial_theta: 0.05,
            initial_omega: 0.0,
            max_phase_time: 1.0,
            divergence_limit: 50.0,
            reference_impedance: PerPhase([
                triple(20.0, 1.0, 0.45),
                triple(30.0, 1.5, 0.05),
                triple(10.0, 0.3, 1.10),
                triple(15.0, 0.8, 0.05),
            ]),
        }
    }
}

impl OdeKneeParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("plant.ode.{name}"), format!("must be > 0, got {v}")))
            }
        };
        pos("inertia", self.inertia)?;
        pos("timestep", self.timestep)?;
        pos("toe_off_time", self.toe_off_time)?;
        pos("max_phase_time", self.max_phase_time)?;
        pos("divergence_limit", self.divergence_limit)?;
        if self.substeps == 0 {
            return Err(Error::invalid("plant.ode.substeps", "must be >= 1"));
        }
        if !(KNEE_ANGLE_MIN..=KNEE_ANGLE_MAX).contains(&self.initial_theta) {
            return Err(Error::invalid("plant.ode.initial_theta", "outside knee range"));
        }
        self.reference_impedance.validate()
    }

    fn load_torque(&self, phase: PhaseId, theta: f64) -> f64 {
        if phase.is_stance() {
            self.stance_bias
        } else {
            -self.swing_gravity * theta.sin()
        }
    }
}

/// Joint state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KneeState {
    pub theta: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeKneePlant {
    params: OdeKneeParams,
    pace: f64,
}

/// Outcome of integrating one phase in isolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseResponse {
    pub features: GaitFeatures,
    pub end: KneeState,
}

impl OdeKneePlant {
    pub fn new(params: OdeKneeParams) -> Self {
        OdeKneePlant { params, pace: 1.0 }
    }

    pub fn params(&self) -> &OdeKneeParams {
        &self.params
    }

    /// Walking pace multiplier; toe-off timing scales by `1 / pace`.
    pub fn set_pace(&mut self, pace: f64) {
        self.pace = pace;
    }

    fn integrate_sample(&self, state: &mut KneeState, imp: &ImpedanceTriple, phase: PhaseId) -> Result<()> {
        let p = &self.params;
        // torque is held for one controller sample
        let torque = joint_torque(imp, state.theta, state.omega);
        let h = p.timestep / p.substeps as f64;
        for _ in 0..p.substeps {
            let acc = (-torque + p.load_torque(phase, state.theta)) / p.inertia;
            state.omega += h * acc;
            if !state.omega.is_finite() || state.omega.abs() > p.divergence_limit {
                return Err(Error::PlantInstability { phase, omega: state.omega, limit: p.divergence_limit });
            }
            state.theta += h * state.omega;
            if state.theta < KNEE_ANGLE_MIN {
                state.theta = KNEE_ANGLE_MIN;
                state.omega = state.omega.max(0.0);
            } else if state.theta > KNEE_ANGLE_MAX {
                state.theta = KNEE_ANGLE_MAX;
                state.omega = state.omega.min(0.0);
            }
        }
        Ok(())
    }

    /// Integrates a flexion phase from `start` until the flexion peak.
    pub fn simulate_flexion_phase(&self, phase: PhaseId, imp: &ImpedanceTriple, start: KneeState) -> Result<PhaseResponse> {
        let mut fsm = FsmState { current_phase: phase, phase_elapsed: 0.0, cycle_elapsed: 0.0, last_omega: start.omega };
        let mut state = start;
        let mut peak = start.theta;
        let mut elapsed = 0.0;
        loop {
            self.integrate_sample(&mut state, imp, phase)?;
            peak = peak.max(state.theta);
            elapsed += self.params.timestep;
            fsm = step_fsm(&fsm, state.theta, state.omega, GaitEvents::default(), self.params.timestep);
            if fsm.current_phase != phase {
                return Ok(PhaseResponse { features: GaitFeatures::clamped(elapsed, peak), end: state });
            }
            if fsm.phase_elapsed > self.params.max_phase_time {
                return Err(Error::MissingPhase(format!("{phase} did not reach its peak within {} s", self.params.max_phase_time)));
            }
        }
    }

    /// Simulates one full gait cycle from heel strike to the next heel strike.
    pub fn simulate_cycle(&self, imp: &ImpedanceSet) -> Result<CycleFeatures> {
        let p = &self.params;
        let toe_off_at = p.toe_off_time / self.pace;
        let mut state = KneeState { theta: p.initial_theta, omega: p.initial_omega };
        let mut fsm = FsmState { last_omega: state.omega, ..FsmState::at_heel_strike() };
        let mut durations = [0.0; 4];
        let mut peaks = [f64::NAN; 4];
        let mut toe_off_done = false;
        loop {
            let phase = fsm.current_phase;
            self.integrate_sample(&mut state, &imp[phase], phase)?;
            let slot = phase.slot();
            peaks[slot] = if peaks[slot].is_nan() {
                state.theta
            } else if phase.is_flexion() {
                peaks[slot].max(state.theta)
            } else {
                peaks[slot].min(state.theta)
            };

            let t_next = fsm.cycle_elapsed + p.timestep;
            let events = GaitEvents {
                toe_off: !toe_off_done && t_next >= toe_off_at - 1e-12,
                heel_strike: phase == PhaseId::SwingExtension && state.theta <= p.heel_strike_angle && state.omega < 0.0,
            };
            let next = step_fsm(&fsm, state.theta, state.omega, events, p.timestep);
            if next.current_phase != phase {
                durations[slot] = fsm.phase_elapsed + p.timestep;
                if phase == PhaseId::StanceExtension {
                    toe_off_done = true;
                }
                if next.current_phase == PhaseId::StanceFlexion {
                    break;
                }
            } else if next.phase_elapsed > p.max_phase_time {
                return Err(Error::MissingPhase(format!("{phase} exceeded {} s", p.max_phase_time)));
            }
            fsm = next;
        }
        Ok(PerPhase::from_fn(|phase| GaitFeatures::clamped(durations[phase.slot()], peaks[phase.slot()])))
    }
}
