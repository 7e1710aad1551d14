//! Critic and actor networks: one hidden layer each, bipolar sigmoid hidden
//! units, linear critic output and saturated actor output.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::TrackingState;

/// Largest representable value strictly below 1.
pub const ACTIVATION_LIMIT: f64 = 1.0 - f64::EPSILON / 2.0;

/// Bipolar sigmoid `(1 - e^-x) / (1 + e^-x)`, i.e. `tanh(x / 2)`.
///
/// The result is kept inside the open interval (-1, 1) even where the exact
/// value rounds to ±1 in double precision.
pub fn activation(x: f64) -> f64 {
    let y = if x >= 0.0 {
        let e = (-x).exp();
        (1.0 - e) / (1.0 + e)
    } else {
        let e = x.exp();
        (e - 1.0) / (e + 1.0)
    };
    y.clamp(-ACTIVATION_LIMIT, ACTIVATION_LIMIT)
}

/// Derivative of [`activation`] expressed through its output: `½(1 − φ²)`.
pub fn activation_slope(phi: f64) -> f64 {
    0.5 * (1.0 - phi * phi)
}

/// Actor output in (-1, 1)^3, ordered (stiffness, damping, equilibrium).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizedAction(pub [f64; 3]);

impl NormalizedAction {
    pub const ZERO: NormalizedAction = NormalizedAction([0.0; 3]);
}

pub const STATE_DIM: usize = 2;
pub const ACTION_DIM: usize = 3;
pub const CRITIC_INPUT_DIM: usize = STATE_DIM + ACTION_DIM;

fn state_vector(s: &TrackingState) -> DVector<f64> {
    DVector::from_row_slice(&s.as_array())
}

fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, half_width: f64, rng: &mut R) -> DMatrix<f64> {
    // row-major draw order so the stream does not depend on nalgebra's storage
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-half_width..=half_width)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericFault(what))
    }
}

/// Q-function approximator.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    /// hidden × 5, input `z = [s; u]`.
    pub w1: DMatrix<f64>,
    /// 1 × hidden.
    pub w2: DMatrix<f64>,
}

/// Intermediates of one critic evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticPass {
    pub z: DVector<f64>,
    pub hidden: DVector<f64>,
    pub q: f64,
}

impl CriticNet {
    pub fn zeros(hidden: usize) -> Self {
        CriticNet { w1: DMatrix::zeros(hidden, CRITIC_INPUT_DIM), w2: DMatrix::zeros(1, hidden) }
    }

    pub fn random<R: Rng + ?Sized>(hidden: usize, half_width: f64, rng: &mut R) -> Self {
        let w1 = random_matrix(hidden, CRITIC_INPUT_DIM, half_width, rng);
        let w2 = random_matrix(1, hidden, half_width, rng);
        CriticNet { w1, w2 }
    }

    pub fn from_weights(w1: DMatrix<f64>, w2: DMatrix<f64>) -> Result<Self> {
        let hidden = w1.nrows();
        if hidden == 0 || w1.ncols() != CRITIC_INPUT_DIM {
            return Err(shape("critic w1", hidden.max(1), CRITIC_INPUT_DIM, &w1));
        }
        if w2.shape() != (1, hidden) {
            return Err(shape("critic w2", 1, hidden, &w2));
        }
        Ok(CriticNet { w1, w2 })
    }

    pub fn hidden_size(&self) -> usize {
        self.w1.nrows()
    }

    /// Q̂ = W_c2 · φ(W_c1 · [s; u]).
    pub fn forward(&self, s: &TrackingState, u: &NormalizedAction) -> CriticPass {
        let mut z = DVector::zeros(CRITIC_INPUT_DIM);
        z[0] = s.d_duration;
        z[1] = s.d_peak;
        for (j, v) in u.0.iter().enumerate() {
            z[STATE_DIM + j] = *v;
        }
        let hidden = (&self.w1 * &z).map(activation);
        let q = (&self.w2 * &hidden)[(0, 0)];
        CriticPass { z, hidden, q }
    }

    /// ∂Q̂/∂u evaluated at `pass`.
    pub fn action_gradient(&self, pass: &CriticPass) -> [f64; 3] {
        let mut g = [0.0; 3];
        for i in 0..self.hidden_size() {
            let a = self.w2[(0, i)] * activation_slope(pass.hidden[i]);
            for (j, gj) in g.iter_mut().enumerate() {
                *gj += a * self.w1[(i, STATE_DIM + j)];
            }
        }
        g
    }

    /// Gradient-descent step on ½e_c² with respect to the current output,
    /// scaled by `gamma`. Both layer updates use the pre-update output weights.
    pub fn update(&mut self, e_c: f64, pass: &CriticPass, l_c: f64, gamma: f64) -> Result<()> {
        let step = -l_c * gamma * e_c;
        let hidden = self.hidden_size();
        let mut d1 = DMatrix::zeros(hidden, CRITIC_INPUT_DIM);
        for i in 0..hidden {
            let back = self.w2[(0, i)] * activation_slope(pass.hidden[i]);
            for j in 0..CRITIC_INPUT_DIM {
                d1[(i, j)] = step * back * pass.z[j];
            }
        }
        let d2 = DMatrix::from_fn(1, hidden, |_, i| step * pass.hidden[i]);
        let w1 = &self.w1 + d1;
        let w2 = &self.w2 + d2;
        check_finite(&w1, "critic")?;
        check_finite(&w2, "critic")?;
        self.w1 = w1;
        self.w2 = w2;
        Ok(())
    }

    pub fn sup_norm(&self) -> f64 {
        self.w1.amax().max(self.w2.amax())
    }
}

/// Control policy producing a saturated action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet {
    /// hidden × 2, input `s`.
    pub w1: DMatrix<f64>,
    /// 3 × hidden.
    pub w2: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorPass {
    pub s: DVector<f64>,
    pub hidden: DVector<f64>,
    pub u: NormalizedAction,
}

impl ActorNet {
    pub fn zeros(hidden: usize) -> Self {
        ActorNet { w1: DMatrix::zeros(hidden, STATE_DIM), w2: DMatrix::zeros(ACTION_DIM, hidden) }
    }

    pub fn random<R: Rng + ?Sized>(hidden: usize, half_width: f64, rng: &mut R) -> Self {
        let w1 = random_matrix(hidden, STATE_DIM, half_width, rng);
        let w2 = random_matrix(ACTION_DIM, hidden, half_width, rng);
        ActorNet { w1, w2 }
    }

    pub fn from_weights(w1: DMatrix<f64>, w2: DMatrix<f64>) -> Result<Self> {
        let hidden = w1.nrows();
        if hidden == 0 || w1.ncols() != STATE_DIM {
            return Err(shape("actor w1", hidden.max(1), STATE_DIM, &w1));
        }
        if w2.shape() != (ACTION_DIM, hidden) {
            return Err(shape("actor w2", ACTION_DIM, hidden, &w2));
        }
        Ok(ActorNet { w1, w2 })
    }

    pub fn hidden_size(&self) -> usize {
        self.w1.nrows()
    }

    /// u = φ(W_a2 · φ(W_a1 · s)).
    pub fn forward(&self, s: &TrackingState) -> ActorPass {
        let s = state_vector(s);
        let hidden = (&self.w1 * &s).map(activation);
        let out = (&self.w2 * &hidden).map(activation);
        let u = NormalizedAction([out[0], out[1], out[2]]);
        ActorPass { s, hidden, u }
    }

    /// Gradient-descent step on ½e_a², chaining e_a = Q̂ through the critic's
    /// action inputs and both actor saturations. `critic_pass` must be the
    /// critic evaluated at (s, u) of `actor_pass`.
    pub fn update(
        &mut self,
        e_a: f64,
        actor_pass: &ActorPass,
        critic: &CriticNet,
        critic_pass: &CriticPass,
        l_a: f64,
    ) -> Result<()> {
        let dq_du = critic.action_gradient(critic_pass);
        let hidden = self.hidden_size();
        let step = -l_a * e_a;
        // gradient at the output pre-activations
        let g_out: Vec<f64> = (0..ACTION_DIM).map(|j| dq_du[j] * activation_slope(actor_pass.u.0[j])).collect();

        let mut d2 = DMatrix::zeros(ACTION_DIM, hidden);
        for j in 0..ACTION_DIM {
            for h in 0..hidden {
                d2[(j, h)] = step * g_out[j] * actor_pass.hidden[h];
            }
        }
        let mut d1 = DMatrix::zeros(hidden, STATE_DIM);
        for h in 0..hidden {
            let back: f64 = (0..ACTION_DIM).map(|j| g_out[j] * self.w2[(j, h)]).sum::<f64>()
                * activation_slope(actor_pass.hidden[h]);
            for m in 0..STATE_DIM {
                d1[(h, m)] = step * back * actor_pass.s[m];
            }
        }
        let w1 = &self.w1 + d1;
        let w2 = &self.w2 + d2;
        check_finite(&w1, "actor")?;
        check_finite(&w2, "actor")?;
        self.w1 = w1;
        self.w2 = w2;
        Ok(())
    }

    pub fn sup_norm(&self) -> f64 {
        self.w1.amax().max(self.w2.amax())
    }
}

fn shape(what: &str, rows: usize, cols: usize, found: &DMatrix<f64>) -> Error {
    Error::ShapeMismatch {
        what: what.to_string(),
        expected_rows: rows,
        expected_cols: cols,
        found_rows: found.nrows(),
        found_cols: found.ncols(),
    }
}
