use rand::Rng;
use serde::{Deserialize, Serialize};

use super::monitor::{stability_monitor, MonitorParams, MonitorReport};
use super::network::{ActorNet, CriticNet, NormalizedAction};
use super::{stage_cost, td_error, StageCostParams};
use crate::error::{Error, Result};
use crate::types::TrackingState;

/// Divisors applied to the tracking error before it reaches the networks
/// and the stage cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateScale {
    /// Seconds per unit of normalized duration error.
    pub duration: f64,
    /// Radians per unit of normalized peak-angle error.
    pub angle: f64,
}

impl StateScale {
    pub const IDENTITY: StateScale = StateScale { duration: 1.0, angle: 1.0 };

    pub fn apply(&self, s: &TrackingState) -> TrackingState {
        TrackingState::new(s.d_duration / self.duration, s.d_peak / self.angle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockConfig {
    pub critic_hidden: usize,
    pub actor_hidden: usize,
    pub critic_lr: f64,
    pub actor_lr: f64,
    /// Initial weights are uniform in `[-init_half_width, init_half_width]`.
    pub init_half_width: f64,
    pub cost: StageCostParams,
    pub monitor: MonitorParams,
    pub state_scale: StateScale,
}

impl Default for BlockConfig {
    fn default() -> Self {
        let cost = StageCostParams::default();
        BlockConfig {
            critic_hidden: 8,
            actor_hidden: 6,
            critic_lr: 0.1,
            actor_lr: 0.1,
            init_half_width: 3.0,
            monitor: MonitorParams::for_discount(cost.gamma),
            cost,
            state_scale: StateScale { duration: 0.17818, angle: 0.1854939 },
        }
    }
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.critic_hidden == 0 || self.actor_hidden == 0 {
            return Err(Error::invalid("dhdp", "hidden sizes must be >= 1"));
        }
        if !(self.critic_lr >= 0.0 && self.actor_lr >= 0.0 && self.critic_lr.is_finite() && self.actor_lr.is_finite()) {
            return Err(Error::invalid("dhdp", "learning rates must be finite and non-negative"));
        }
        if !(self.init_half_width.is_finite() && self.init_half_width >= 0.0) {
            return Err(Error::invalid("dhdp.init_half_width", "must be finite and non-negative"));
        }
        if !(self.state_scale.duration > 0.0 && self.state_scale.angle > 0.0) {
            return Err(Error::invalid("dhdp.state_scale", "must be strictly positive"));
        }
        self.cost.validate()?;
        self.monitor.validate(self.cost.gamma)
    }
}

/// What one learning step produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockStep {
    /// Action to apply for the next cycle, in (-1, 1)^3.
    pub action: NormalizedAction,
    /// Stage cost U_k.
    pub cost: f64,
    /// Q̂_k from the pre-update critic.
    pub q: f64,
    /// Critic TD error; zero when there was no previous transition.
    pub td_error: f64,
    pub monitor: MonitorReport,
}

/// Actor-critic pair of one gait phase plus the lagged Q̂/U of the previous cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct DhdpBlock {
    pub actor: ActorNet,
    pub critic: CriticNet,
    cfg: BlockConfig,
    lagged: Option<(f64, f64)>,
}

impl DhdpBlock {
    pub fn new<R: Rng + ?Sized>(cfg: BlockConfig, rng: &mut R) -> Self {
        let critic = CriticNet::random(cfg.critic_hidden, cfg.init_half_width, rng);
        let actor = ActorNet::random(cfg.actor_hidden, cfg.init_half_width, rng);
        DhdpBlock { actor, critic, cfg, lagged: None }
    }

    pub fn from_networks(cfg: BlockConfig, actor: ActorNet, critic: CriticNet) -> Result<Self> {
        check_hidden("actor", cfg.actor_hidden, actor.hidden_size())?;
        check_hidden("critic", cfg.critic_hidden, critic.hidden_size())?;
        Ok(DhdpBlock { actor, critic, cfg, lagged: None })
    }

    pub fn config(&self) -> &BlockConfig {
        &self.cfg
    }

    pub fn set_learning_rates(&mut self, critic_lr: f64, actor_lr: f64) {
        self.cfg.critic_lr = critic_lr;
        self.cfg.actor_lr = actor_lr;
    }

    /// Forgets the previous transition; the next step skips the critic update.
    pub fn clear_history(&mut self) {
        self.lagged = None;
    }

    /// Policy output without learning.
    pub fn act(&self, s: &TrackingState) -> NormalizedAction {
        self.actor.forward(&self.cfg.state_scale.apply(s)).u
    }

    /// One online cycle: act, evaluate the critic, update the critic on the
    /// TD error, then update the actor against the updated critic.
    pub fn step(&mut self, s: &TrackingState) -> Result<BlockStep> {
        let cfg = self.cfg;
        let s_in = cfg.state_scale.apply(s);
        let actor_pass = self.actor.forward(&s_in);
        let u = actor_pass.u;
        let critic_pass = self.critic.forward(&s_in, &u);
        let q = critic_pass.q;
        let monitor = stability_monitor(
            &self.critic,
            &self.actor,
            &critic_pass,
            &actor_pass,
            &cfg.monitor,
            cfg.cost.gamma,
            cfg.critic_lr,
            cfg.actor_lr,
        );
        let cost = stage_cost(&s_in, &u, &cfg.cost);

        let mut e_c = 0.0;
        if let Some((q_prev, cost_prev)) = self.lagged {
            e_c = td_error(q, q_prev, cost_prev, cfg.cost.gamma);
            self.critic.update(e_c, &critic_pass, cfg.critic_lr, cfg.cost.gamma)?;
        }

        let critic_now = self.critic.forward(&s_in, &u);
        self.actor.update(critic_now.q, &actor_pass, &self.critic, &critic_now, cfg.actor_lr)?;

        self.lagged = Some((q, cost));
        Ok(BlockStep { action: u, cost, q, td_error: e_c, monitor })
    }

    pub fn sup_norm(&self) -> f64 {
        self.actor.sup_norm().max(self.critic.sup_norm())
    }
}

fn check_hidden(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} hidden size"), format!("expected {expected}, found {found}")))
    }
}
