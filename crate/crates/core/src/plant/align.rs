//! Pairing intact-knee targets with prosthetic measurements.
//!
//! Time is counted in half gait cycles. The intact knee's cycle `k` spans
//! half-cycles `2k` (stance) and `2k + 1` (swing). With a half-gait lead the
//! prosthetic knee copies it half a cycle later, so its cycle `k` spans
//! `2k + 1` and `2k + 2` and is compared against intact cycle `k`. A
//! cycle-atomic plant has no intra-cycle timing and both sides share the
//! same span.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::CycleFeatures;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignmentMode {
    CycleAtomic,
    HalfGaitLead,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedPair {
    pub cycle: usize,
    pub target: CycleFeatures,
    pub measured: CycleFeatures,
    /// First half-cycle of the prosthetic measurement.
    pub measured_start_half: usize,
}

impl AlignmentMode {
    /// Half-cycle at which prosthetic cycle `k` begins.
    pub fn prosthetic_start_half(self, k: usize) -> usize {
        match self {
            AlignmentMode::CycleAtomic => 2 * k,
            AlignmentMode::HalfGaitLead => 2 * k + 1,
        }
    }

    /// Half-cycle at which intact cycle `k` begins.
    pub fn intact_start_half(self, k: usize) -> usize {
        2 * k
    }
}

/// Pairs target cycle `k` with prosthetic cycle `k`. A `None` measurement
/// (a cycle that failed to produce all four phases) is an error.
pub fn measurement_alignment(
    targets: &[CycleFeatures],
    measured: &[Option<CycleFeatures>],
    mode: AlignmentMode,
) -> Result<Vec<AlignedPair>> {
    let n = targets.len().min(measured.len());
    (0..n)
        .map(|k| match measured[k] {
            Some(m) if m.0.iter().all(|f| f.is_valid()) => Ok(AlignedPair {
                cycle: k,
                target: targets[k],
                measured: m,
                measured_start_half: mode.prosthetic_start_half(k),
            }),
            _ => Err(Error::MissingPhase(format!("prosthetic cycle {k} has no complete phase data"))),
        })
        .collect()
}
