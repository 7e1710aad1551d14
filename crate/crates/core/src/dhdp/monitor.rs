//! Learning-rate stability monitor.
//!
//! Evaluates, at the current step, the critic and actor learning-rate limits
//! under which the weight estimation errors stay uniformly ultimately bounded:
//!
//! ```text
//! l_c < (α1 − γ) / (γ² α1 (‖φ_c‖² + ‖A‖² ‖z‖² / α1))
//! l_a < (α3 − α2) / (α3 ‖W_c2 C‖² ‖φ_a‖² + α2 ‖W_c2 C Dᵀ‖² ‖s‖²)
//! ```
//!
//! with `A = ½(1 − φ_c²) ⊙ W_c2`, `C = diag(½(1 − φ_c²)) W_cu diag(½(1 − u²))`
//! and `Dᵀ = W_a2 diag(½(1 − φ_a²))`. All norms are Euclidean/Frobenius.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::network::{activation_slope, ActorNet, ActorPass, CriticNet, CriticPass, ACTION_DIM, STATE_DIM};
use crate::error::{Error, Result};

/// Weighting factors of the Lyapunov candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl MonitorParams {
    /// α1 = 2γ, α2 = 4/γ² + 1, α3 = 2α2.
    pub fn for_discount(gamma: f64) -> Self {
        let alpha2 = 4.0 / (gamma * gamma) + 1.0;
        MonitorParams { alpha1: 2.0 * gamma, alpha2, alpha3: 2.0 * alpha2 }
    }

    pub fn validate(&self, gamma: f64) -> Result<()> {
        let MonitorParams { alpha1, alpha2, alpha3 } = *self;
        if !(alpha1 > gamma && gamma > 0.0) {
            return Err(Error::invalid("dhdp.monitor.alpha1", format!("need alpha1 > gamma = {gamma}")));
        }
        if !(alpha3 > alpha2 && alpha2 > 0.0) {
            return Err(Error::invalid("dhdp.monitor.alpha3", "need alpha3 > alpha2 > 0"));
        }
        if alpha2 <= 4.0 / (gamma * gamma) {
            return Err(Error::invalid("dhdp.monitor.alpha2", format!("need alpha2 > 4/gamma^2 = {}", 4.0 / (gamma * gamma))));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    /// Upper limit for the critic learning rate; `+∞` when degenerate.
    pub critic_bound: f64,
    /// Upper limit for the actor learning rate; `+∞` when degenerate.
    pub actor_bound: f64,
    pub pass: bool,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// Evaluates both learning-rate limits for the current step.
///
/// `actor_pass` and `critic_pass` must come from the pre-update networks at
/// the same (s, u).
#[allow(clippy::too_many_arguments)]
pub fn stability_monitor(
    critic: &CriticNet,
    actor: &ActorNet,
    critic_pass: &CriticPass,
    actor_pass: &ActorPass,
    params: &MonitorParams,
    gamma: f64,
    l_c: f64,
    l_a: f64,
) -> MonitorReport {
    let MonitorParams { alpha1, alpha2, alpha3 } = *params;
    let hc = critic.hidden_size();
    let ha = actor.hidden_size();

    let slope_c = critic_pass.hidden.map(activation_slope);
    let a_vec = slope_c.component_mul(&critic.w2.transpose());
    let phi_c2 = critic_pass.hidden.norm_squared();
    let den_c = gamma * gamma * alpha1 * (phi_c2 + a_vec.norm_squared() * critic_pass.z.norm_squared() / alpha1);
    let critic_bound = ratio(alpha1 - gamma, den_c);

    // C: hidden_c × 3
    let w_cu = critic.w1.columns(STATE_DIM, ACTION_DIM);
    let slope_u = DVector::from_iterator(ACTION_DIM, actor_pass.u.0.iter().map(|u| activation_slope(*u)));
    let c_mat = DMatrix::from_diagonal(&slope_c) * w_cu * DMatrix::from_diagonal(&slope_u);
    let wc2_c = &critic.w2 * &c_mat; // 1 × 3
    let slope_a = actor_pass.hidden.map(activation_slope);
    let d_t = &actor.w2 * DMatrix::from_diagonal(&slope_a); // 3 × hidden_a
    let wc2_c_dt = &wc2_c * d_t; // 1 × hidden_a
    debug_assert_eq!(wc2_c_dt.ncols(), ha);
    debug_assert_eq!(c_mat.nrows(), hc);
    let den_a = alpha3 * wc2_c.norm_squared() * actor_pass.hidden.norm_squared()
        + alpha2 * wc2_c_dt.norm_squared() * actor_pass.s.norm_squared();
    let actor_bound = ratio(alpha3 - alpha2, den_a);

    MonitorReport { critic_bound, actor_bound, pass: l_c < critic_bound && l_a < actor_bound }
}
