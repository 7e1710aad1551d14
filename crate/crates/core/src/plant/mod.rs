//! Surrogate human–prosthesis plants and the intact-knee target program.
//!
//! Two plants share one interface: [`FeatureMapPlant`] is a cycle-level
//! affine map with smoothing and noise, [`OdeKneePlant`] integrates the knee
//! joint under the impedance torque through a full FSM cycle.

mod align;
mod feature_map;
mod ode_knee;
mod target;

pub use align::{measurement_alignment, AlignedPair, AlignmentMode};
pub use feature_map::{FeatureMapParams, FeatureMapPhase, FeatureMapPlant};
pub use ode_knee::{KneeState, OdeKneeParams, OdeKneePlant, PhaseResponse};
pub use target::{scale_pace, DriftParams, Scenario, TargetProgram};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fsm::ImpedanceSet;
use crate::types::{CycleFeatures, PerPhase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    FeatureMap,
    Ode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub kind: PlantKind,
    pub feature_map: FeatureMapParams,
    pub ode: OdeKneeParams,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig { kind: PlantKind::FeatureMap, feature_map: FeatureMapParams::default(), ode: OdeKneeParams::default() }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PlantKind::FeatureMap => self.feature_map.validate(),
            PlantKind::Ode => self.ode.validate(),
        }
    }

    pub fn reference_impedance(&self) -> ImpedanceSet {
        match self.kind {
            PlantKind::FeatureMap => self.feature_map.reference_impedance(),
            PlantKind::Ode => self.ode.reference_impedance,
        }
    }

    /// Noise-free features produced under a constant impedance; used to build
    /// intact-knee profiles from impedance settings.
    pub fn steady_features(&self, imp: &ImpedanceSet) -> Result<CycleFeatures> {
        match self.kind {
            PlantKind::FeatureMap => Ok(self.feature_map.steady_state(imp)),
            PlantKind::Ode => OdeKneePlant::new(self.ode).simulate_cycle(imp),
        }
    }

    pub fn alignment(&self) -> AlignmentMode {
        match self.kind {
            PlantKind::FeatureMap => AlignmentMode::CycleAtomic,
            PlantKind::Ode => AlignmentMode::HalfGaitLead,
        }
    }
}

/// A plant instance owned by one trial.
#[derive(Debug, Clone)]
pub enum Plant {
    FeatureMap(FeatureMapPlant),
    Ode(OdeKneePlant),
}

impl Plant {
    pub fn new(cfg: &PlantConfig, initial: &ImpedanceSet) -> Self {
        match cfg.kind {
            PlantKind::FeatureMap => Plant::FeatureMap(FeatureMapPlant::new(cfg.feature_map, initial)),
            PlantKind::Ode => Plant::Ode(OdeKneePlant::new(cfg.ode)),
        }
    }

    /// Features of the next gait cycle under impedance `imp`.
    pub fn step<R: Rng + ?Sized>(&mut self, imp: &ImpedanceSet, rng: &mut R) -> Result<CycleFeatures> {
        match self {
            Plant::FeatureMap(p) => Ok(p.step(imp, rng)),
            Plant::Ode(p) => p.simulate_cycle(imp),
        }
    }

    /// Restarts walking from steady state at `imp`.
    pub fn reset(&mut self, imp: &ImpedanceSet) {
        match self {
            Plant::FeatureMap(p) => p.reset(imp),
            Plant::Ode(_) => {}
        }
    }

    /// Restarts the listed phases from steady state at `imp`; the others keep
    /// their transient.
    pub fn reset_phases(&mut self, imp: &ImpedanceSet, phases: &PerPhase<bool>) {
        match self {
            Plant::FeatureMap(p) => p.reset_phases(imp, phases),
            Plant::Ode(_) => {}
        }
    }

    pub fn set_pace(&mut self, pace: f64) {
        if let Plant::Ode(p) = self {
            p.set_pace(pace);
        }
    }
}
