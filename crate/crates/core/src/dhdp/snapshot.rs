//! Policy snapshots: per-phase network weights as JSON.
//!
//! ```json
//! {
//!   "format": "kneetune-policy/1",
//!   "phases": [
//!     {
//!       "phase": "STF",
//!       "actor":  { "w1": {"rows": 6, "cols": 2, "data": [...]}, "w2": {"rows": 3, "cols": 6, "data": [...]} },
//!       "critic": { "w1": {"rows": 8, "cols": 5, "data": [...]}, "w2": {"rows": 1, "cols": 8, "data": [...]} }
//!     },
//!     ...
//!   ]
//! }
//! ```
//!
//! Matrices are stored row-major. `critic` may be omitted. Values are written
//! with shortest round-trip formatting, so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::network::{ActorNet, CriticNet};
use crate::error::{Error, Result};
use crate::types::{PerPhase, PhaseId};

pub const SNAPSHOT_FORMAT: &str = "kneetune-policy/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
        MatrixData { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix(&self, what: &str) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::invalid(
                what,
                format!("{}x{} matrix needs {} values, found {}", self.rows, self.cols, self.rows * self.cols, self.data.len()),
            ));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerPair {
    pub w1: MatrixData,
    pub w2: MatrixData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasePolicy {
    pub phase: PhaseId,
    pub actor: LayerPair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic: Option<LayerPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySnapshot {
    pub format: String,
    pub phases: Vec<PhasePolicy>,
}

/// Networks restored from a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseNetworks {
    pub actor: ActorNet,
    pub critic: Option<CriticNet>,
}

impl PolicySnapshot {
    pub fn capture(nets: &PerPhase<(&ActorNet, Option<&CriticNet>)>) -> Self {
        let phases = nets
            .iter()
            .map(|(phase, (actor, critic))| PhasePolicy {
                phase,
                actor: LayerPair { w1: MatrixData::from_matrix(&actor.w1), w2: MatrixData::from_matrix(&actor.w2) },
                critic: critic.map(|c| LayerPair { w1: MatrixData::from_matrix(&c.w1), w2: MatrixData::from_matrix(&c.w2) }),
            })
            .collect();
        PolicySnapshot { format: SNAPSHOT_FORMAT.to_string(), phases }
    }

    /// Rebuilds the networks, checking every matrix against the expected hidden sizes.
    pub fn restore(&self, actor_hidden: usize, critic_hidden: usize) -> Result<PerPhase<PhaseNetworks>> {
        if self.format != SNAPSHOT_FORMAT {
            return Err(Error::invalid("format", format!("expected {SNAPSHOT_FORMAT:?}, found {:?}", self.format)));
        }
        let mut out: [Option<PhaseNetworks>; 4] = Default::default();
        for pp in &self.phases {
            let slot = &mut out[pp.phase.slot()];
            if slot.is_some() {
                return Err(Error::invalid("phases", format!("duplicate entry for {}", pp.phase)));
            }
            let tag = |n: &str, l: &str| format!("{} {n} {l}", pp.phase);
            let w1 = pp.actor.w1.to_matrix(&tag("actor", "w1"))?;
            let w2 = pp.actor.w2.to_matrix(&tag("actor", "w2"))?;
            expect_shape(&tag("actor", "w1"), &w1, actor_hidden, super::STATE_DIM)?;
            expect_shape(&tag("actor", "w2"), &w2, super::ACTION_DIM, actor_hidden)?;
            let actor = ActorNet::from_weights(w1, w2)?;
            let critic = match &pp.critic {
                Some(c) => {
                    let w1 = c.w1.to_matrix(&tag("critic", "w1"))?;
                    let w2 = c.w2.to_matrix(&tag("critic", "w2"))?;
                    expect_shape(&tag("critic", "w1"), &w1, critic_hidden, super::CRITIC_INPUT_DIM)?;
                    expect_shape(&tag("critic", "w2"), &w2, 1, critic_hidden)?;
                    Some(CriticNet::from_weights(w1, w2)?)
                }
                None => None,
            };
            *slot = Some(PhaseNetworks { actor, critic });
        }
        let [a, b, c, d] = out;
        match (a, b, c, d) {
            (Some(a), Some(b), Some(c), Some(d)) => Ok(PerPhase([a, b, c, d])),
            _ => Err(Error::invalid("phases", "snapshot must contain all four phases")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn expect_shape(what: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            what: what.to_string(),
            expected_rows: rows,
            expected_cols: cols,
            found_rows: m.nrows(),
            found_cols: m.ncols(),
        })
    }
}
