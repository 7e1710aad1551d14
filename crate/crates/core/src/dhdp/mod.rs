//! Direct heuristic dynamic programming: one actor-critic block per gait phase.

mod block;
mod monitor;
mod network;
pub mod snapshot;

pub use block::{BlockConfig, BlockStep, DhdpBlock, StateScale};
pub use monitor::{stability_monitor, MonitorParams, MonitorReport};
pub use snapshot::{PhaseNetworks, PolicySnapshot};
pub use network::{
    activation, activation_slope, ActorNet, ActorPass, CriticNet, CriticPass, NormalizedAction, ACTION_DIM,
    ACTIVATION_LIMIT, CRITIC_INPUT_DIM, STATE_DIM,
};

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ControlDelta, TrackingState};

/// Quadratic stage-cost weights and discount factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageCostParams {
    pub r_s: [[f64; 2]; 2],
    pub r_u: [[f64; 3]; 3],
    pub gamma: f64,
}

impl Default for StageCostParams {
    fn default() -> Self {
        StageCostParams {
            r_s: [[1.0, 0.0], [0.0, 1.0]],
            r_u: [[0.1, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, 0.1]],
            gamma: 0.95,
        }
    }
}

impl StageCostParams {
    fn r_s(&self) -> Matrix2<f64> {
        Matrix2::from_fn(|i, j| self.r_s[i][j])
    }

    fn r_u(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.r_u[i][j])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid("dhdp.cost.gamma", format!("must lie in (0, 1), got {}", self.gamma)));
        }
        if !is_positive_definite(DMatrix::from_fn(2, 2, |i, j| self.r_s[i][j])) {
            return Err(Error::invalid("dhdp.cost.r_s", "must be symmetric positive definite"));
        }
        if !is_positive_definite(DMatrix::from_fn(3, 3, |i, j| self.r_u[i][j])) {
            return Err(Error::invalid("dhdp.cost.r_u", "must be symmetric positive definite"));
        }
        Ok(())
    }
}

fn is_positive_definite(m: DMatrix<f64>) -> bool {
    let symmetric = (&m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0);
    symmetric && m.iter().all(|v| v.is_finite()) && m.cholesky().is_some()
}

/// U = sᵀ R_s s + uᵀ R_u u.
pub fn stage_cost(s: &TrackingState, u: &NormalizedAction, p: &StageCostParams) -> f64 {
    let sv = Vector2::new(s.d_duration, s.d_peak);
    let uv = Vector3::from(u.0);
    sv.dot(&(p.r_s() * sv)) + uv.dot(&(p.r_u() * uv))
}

/// Critic temporal-difference error e_c = γ·Q̂_k − (Q̂_{k−1} − U_{k−1}).
pub fn td_error(q_now: f64, q_prev: f64, cost_prev: f64, gamma: f64) -> f64 {
    gamma * q_now - (q_prev - cost_prev)
}

/// Physical half-ranges mapping a normalized action to an impedance change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionScale {
    pub stiffness: f64,
    pub damping: f64,
    pub equilibrium: f64,
}

impl ActionScale {
    pub fn validate(&self) -> Result<()> {
        if [self.stiffness, self.damping, self.equilibrium].iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid("action_scale", "half-ranges must be strictly positive"))
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.stiffness, self.damping, self.equilibrium]
    }
}

pub fn scale_action(u: &NormalizedAction, scale: &ActionScale) -> ControlDelta {
    ControlDelta::new(u.0[0] * scale.stiffness, u.0[1] * scale.damping, u.0[2] * scale.equilibrium)
}
