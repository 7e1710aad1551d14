//! Intact-knee target program.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CycleFeatures, GaitFeatures, PerPhase, TrackingState};

/// Walking condition driving how the intact-knee target evolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Constant target.
    LevelGround,
    /// Target drawn from a pool of profiles, redrawn every `switch_period` cycles.
    Terrain,
    /// Target durations scaled by a sequence of pace multipliers.
    Pace,
}

impl Scenario {
    pub fn number(self) -> u8 {
        match self {
            Scenario::LevelGround => 1,
            Scenario::Terrain => 2,
            Scenario::Pace => 3,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Scenario::LevelGround),
            2 => Ok(Scenario::Terrain),
            3 => Ok(Scenario::Pace),
            _ => Err(Error::InvalidArgument(format!("scenario must be 1, 2 or 3, got {n}"))),
        }
    }
}

/// Parameters of the first-order coupling between prosthetic error and intact-knee profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftParams {
    /// κ ≥ 0; zero disables drift.
    pub gain: f64,
    /// Low-pass coefficient in (0, 1]: `f ← (1 − β) f + β e`.
    pub filter: f64,
}

impl Default for DriftParams {
    fn default() -> Self {
        DriftParams { gain: 0.0, filter: 0.2 }
    }
}

/// Generates Y_k, the intact-knee features each cycle.
#[derive(Debug, Clone)]
pub struct TargetProgram {
    scenario: Scenario,
    base: CycleFeatures,
    pool: Vec<CycleFeatures>,
    pace_sequence: Vec<f64>,
    switch_period: usize,
    drift: DriftParams,
    rng: ChaCha8Rng,
    pool_index: usize,
    leg: usize,
    filtered: PerPhase<TrackingState>,
}

impl TargetProgram {
    pub fn level_ground(base: CycleFeatures) -> Self {
        Self::build(Scenario::LevelGround, base, vec![], vec![1.0], 0, ChaCha8Rng::seed_from_u64(0))
    }

    /// `pool` must be non-empty; the first member is drawn at cycle 0.
    pub fn terrain(base: CycleFeatures, pool: Vec<CycleFeatures>, switch_period: usize, rng: ChaCha8Rng) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::invalid("target.pool", "terrain scenario needs a non-empty pool"));
        }
        if switch_period == 0 {
            return Err(Error::invalid("target.switch_period", "must be >= 1"));
        }
        Ok(Self::build(Scenario::Terrain, base, pool, vec![1.0], switch_period, rng))
    }

    pub fn pace(base: CycleFeatures, pace_sequence: Vec<f64>) -> Result<Self> {
        if pace_sequence.is_empty() || pace_sequence.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::invalid("target.pace_sequence", "multipliers must be positive and non-empty"));
        }
        Ok(Self::build(Scenario::Pace, base, vec![], pace_sequence, 0, ChaCha8Rng::seed_from_u64(0)))
    }

    fn build(
        scenario: Scenario,
        base: CycleFeatures,
        pool: Vec<CycleFeatures>,
        pace_sequence: Vec<f64>,
        switch_period: usize,
        rng: ChaCha8Rng,
    ) -> Self {
        TargetProgram {
            scenario,
            base,
            pool,
            pace_sequence,
            switch_period,
            drift: DriftParams::default(),
            rng,
            pool_index: 0,
            leg: 0,
            filtered: PerPhase::from_fn(|_| TrackingState::ZERO),
        }
    }

    pub fn with_drift(mut self, drift: DriftParams) -> Self {
        self.drift = drift;
        self
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn switch_period(&self) -> usize {
        self.switch_period
    }

    pub fn pool_index(&self) -> usize {
        self.pool_index
    }

    /// Current pace multiplier.
    pub fn pace_multiplier(&self) -> f64 {
        self.pace_sequence.get(self.leg).copied().unwrap_or(1.0)
    }

    pub fn leg(&self) -> usize {
        self.leg
    }

    pub fn pace_sequence(&self) -> &[f64] {
        &self.pace_sequence
    }

    /// Moves to the next pace leg; returns false once the sequence is exhausted.
    pub fn advance_leg(&mut self) -> bool {
        if self.leg + 1 < self.pace_sequence.len() {
            self.leg += 1;
            true
        } else {
            false
        }
    }

    /// Whether the target is redrawn at the start of cycle `k`.
    pub fn is_switch_cycle(&self, k: usize) -> bool {
        self.scenario == Scenario::Terrain && k > 0 && k.is_multiple_of(self.switch_period)
    }

    /// Target for cycle `k`, given the prosthetic tracking error of the previous cycle.
    pub fn target_step(&mut self, k: usize, prosthetic_error: &PerPhase<TrackingState>) -> CycleFeatures {
        if self.scenario == Scenario::Terrain && (k == 0 || self.is_switch_cycle(k)) {
            self.pool_index = self.rng.random_range(0..self.pool.len());
        }
        let profile = match self.scenario {
            Scenario::Terrain => self.pool[self.pool_index],
            _ => self.base,
        };
        let pace = self.pace_multiplier();
        let scaled = profile.map(|_, f| scale_pace(f, pace));
        if self.drift.gain <= 0.0 {
            return scaled;
        }
        let beta = self.drift.filter;
        for (f, e) in self.filtered.0.iter_mut().zip(prosthetic_error.0.iter()) {
            f.d_duration = (1.0 - beta) * f.d_duration + beta * e.d_duration;
            f.d_peak = (1.0 - beta) * f.d_peak + beta * e.d_peak;
        }
        let gain = self.drift.gain;
        PerPhase::from_fn(|p| {
            let f = scaled[p];
            let e = self.filtered[p];
            GaitFeatures::clamped(f.duration + gain * e.d_duration, f.peak_angle + gain * e.d_peak)
        })
    }
}

/// Durations divided by the pace multiplier; peak angle untouched.
pub fn scale_pace(f: &GaitFeatures, pace: f64) -> GaitFeatures {
    GaitFeatures { duration: f.duration / pace, peak_angle: f.peak_angle }
}
