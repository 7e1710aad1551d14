use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsm::ImpedanceSet;
use crate::types::{CycleFeatures, GaitFeatures, ImpedanceTriple, PerPhase, PhaseId};

/// Affine response of one phase around a reference operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMapPhase {
    pub reference_impedance: ImpedanceTriple,
    pub reference_features: GaitFeatures,
    /// Rows: (duration, peak angle); columns: (K, B, θe).
    pub sensitivity: [[f64; 3]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureMapParams {
    pub phases: PerPhase<FeatureMapPhase>,
    /// λ in (0, 1]: fraction of the gap to the new steady state closed per cycle.
    pub smoothing: f64,
    /// Measurement noise standard deviation on durations, seconds.
    pub noise_duration: f64,
    /// Measurement noise standard deviation on peak angles, radians.
    pub noise_angle: f64,
}

impl Default for FeatureMapParams {
    fn default() -> Self {
        let triple = |k, b, th| ImpedanceTriple { stiffness: k, damping: b, equilibrium: th };
        let feat = |d, p| GaitFeatures { duration: d, peak_angle: p };
        // raising θe raises the peak; raising B lengthens the phase; raising K
        // shortens the phase and pulls the peak toward θe
        let phases = PerPhase([
            FeatureMapPhase {
                reference_impedance: triple(60.0, 1.5, 0.15),
                reference_features: feat(0.15, 0.30),
                sensitivity: [[-0.001, 0.04, 0.0], [-0.003, 0.0, 1.0]],
            },
            FeatureMapPhase {
                reference_impedance: triple(50.0, 1.0, 0.10),
                reference_features: feat(0.30, 0.15),
                sensitivity: [[-0.0015, 0.08, 0.0], [-0.004, 0.0, 1.0]],
            },
            FeatureMapPhase {
                reference_impedance: triple(10.0, 0.3, 0.90),
                reference_features: feat(0.25, 1.05),
                sensitivity: [[-0.008, 0.3, 0.0], [-0.015, 0.0, 0.25]],
            },
            FeatureMapPhase {
                reference_impedance: triple(15.0, 0.5, 0.10),
                reference_features: feat(0.30, 0.10),
                sensitivity: [[-0.005, 0.2, 0.0], [0.01, 0.0, 1.0]],
            },
        ]);
        FeatureMapParams { phases, smoothing: 0.3, noise_duration: 0.005, noise_angle: 0.005 }
    }
}

impl FeatureMapParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(Error::invalid("plant.feature_map.smoothing", format!("must lie in (0, 1], got {}", self.smoothing)));
        }
        if !(self.noise_duration >= 0.0 && self.noise_angle >= 0.0) {
            return Err(Error::invalid("plant.feature_map.noise", "standard deviations must be >= 0"));
        }
        for (phase, p) in self.phases.iter() {
            p.reference_impedance
                .validate()
                .map_err(|e| Error::invalid(format!("plant.feature_map.{phase}.reference_impedance"), e.to_string()))?;
            if !p.reference_features.is_valid() {
                return Err(Error::invalid(format!("plant.feature_map.{phase}.reference_features"), "invalid features"));
            }
            if p.sensitivity.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("plant.feature_map.{phase}.sensitivity"), "must be finite"));
            }
        }
        Ok(())
    }

    pub fn reference_impedance(&self) -> ImpedanceSet {
        self.phases.map(|_, p| p.reference_impedance)
    }

    /// Noise-free fixed point Z* + S·(I − I*) for a constant impedance.
    pub fn steady_state(&self, imp: &ImpedanceSet) -> CycleFeatures {
        PerPhase::from_fn(|phase| {
            let (d, p) = self.steady_raw(phase, &imp[phase]);
            GaitFeatures::clamped(d, p)
        })
    }

    fn steady_raw(&self, phase: PhaseId, imp: &ImpedanceTriple) -> (f64, f64) {
        let p = &self.phases[phase];
        let di: Vec<f64> = imp
            .as_array()
            .iter()
            .zip(p.reference_impedance.as_array())
            .map(|(a, b)| a - b)
            .collect();
        let dot = |row: &[f64; 3]| row.iter().zip(&di).map(|(s, d)| s * d).sum::<f64>();
        (
            p.reference_features.duration + dot(&p.sensitivity[0]),
            p.reference_features.peak_angle + dot(&p.sensitivity[1]),
        )
    }
}

/// Cycle-level surrogate: `Z_{k+1} = (1 − λ) Z_k + λ (Z* + S (I_{k+1} − I*)) + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapPlant {
    params: FeatureMapParams,
    current: CycleFeatures,
}

impl FeatureMapPlant {
    /// Starts in steady state for `initial` impedance.
    pub fn new(params: FeatureMapParams, initial: &ImpedanceSet) -> Self {
        let current = params.steady_state(initial);
        FeatureMapPlant { params, current }
    }

    pub fn params(&self) -> &FeatureMapParams {
        &self.params
    }

    pub fn current(&self) -> &CycleFeatures {
        &self.current
    }

    pub fn reset(&mut self, imp: &ImpedanceSet) {
        self.current = self.params.steady_state(imp);
    }

    pub fn reset_phases(&mut self, imp: &ImpedanceSet, phases: &PerPhase<bool>) {
        let steady = self.params.steady_state(imp);
        for (phase, &r) in phases.iter() {
            if r {
                self.current[phase] = steady[phase];
            }
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, imp: &ImpedanceSet, rng: &mut R) -> CycleFeatures {
        let lambda = self.params.smoothing;
        // sampled in a fixed order: per phase, duration then angle
        let dn = Normal::new(0.0, self.params.noise_duration).expect("validated std");
        let an = Normal::new(0.0, self.params.noise_angle).expect("validated std");
        let next = PerPhase::from_fn(|phase| {
            let (d_ss, p_ss) = self.params.steady_raw(phase, &imp[phase]);
            let z = self.current[phase];
            let nd = if self.params.noise_duration > 0.0 { dn.sample(rng) } else { 0.0 };
            let na = if self.params.noise_angle > 0.0 { an.sample(rng) } else { 0.0 };
            GaitFeatures::clamped(
                (1.0 - lambda) * z.duration + lambda * d_ss + nd,
                (1.0 - lambda) * z.peak_angle + lambda * p_ss + na,
            )
        });
        self.current = next;
        next
    }
}
