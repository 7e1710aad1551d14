use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{summarize, Metrics, TrialSummary};
use super::trial::{run_trial, TargetSpec, TrialConfig};
use super::{HarnessParams, Stage, TrialRecord};
use crate::dhdp::{BlockConfig, PolicySnapshot};
use crate::error::{Error, Result};
use crate::fsm::ImpedanceSet;
use crate::plant::{PlantConfig, Scenario};
use crate::types::{CycleFeatures, ImpedanceTriple, PerPhase};

const STREAM_TRIALS: [u64; 2] = [11, 12];
const STREAM_POOL: [u64; 2] = [21, 22];
const STREAM_SELECT: u64 = 31;

fn stage_slot(stage: Stage) -> usize {
    match stage {
        Stage::Training => 0,
        Stage::Testing => 1,
    }
}

/// Seed of trial `index` in a batch. Training and testing draw from
/// different streams so testing trials see fresh initial impedances.
pub fn derive_trial_seed(batch_seed: u64, stage: Stage, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(batch_seed);
    rng.set_stream(STREAM_TRIALS[stage_slot(stage)]);
    rng.set_word_pos(2 * index as u128);
    rng.random()
}

/// Everything needed to run one scenario batch.
#[derive(Debug, Clone)]
pub struct BatchSpec {
    pub scenario: Scenario,
    pub stage: Stage,
    pub seed: u64,
    pub plant: PlantConfig,
    pub dhdp: BlockConfig,
    pub harness: HarnessParams,
    /// Worker threads; zero uses all cores.
    pub jobs: usize,
    /// Starting policies of a testing batch, keyed by the training trial they came from.
    pub policies: Vec<(usize, PolicySnapshot)>,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<TrialSummary>,
    pub metrics: Metrics,
    pub targets: TargetSpec,
}

/// Terrain profiles: impedance sets drawn around the reference, mapped
/// through the plant's steady response.
fn terrain_pool(spec: &BatchSpec) -> Result<Vec<CycleFeatures>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(STREAM_POOL[stage_slot(spec.stage)]);
    let h = &spec.harness;
    let reference = spec.plant.reference_impedance();
    let mut pool = Vec::with_capacity(h.pool_size);
    let mut attempts = 0;
    while pool.len() < h.pool_size {
        attempts += 1;
        if attempts > 1000 * h.pool_size {
            return Err(Error::invalid("harness.pool_spread", "could not build a walkable terrain pool"));
        }
        let imp: ImpedanceSet = PerPhase::from_fn(|p| {
            let r = h.ranges[p];
            let base = reference[p].as_array();
            let lims = [r.stiffness, r.damping, r.equilibrium];
            let mut v = [0.0; 3];
            for i in 0..3 {
                let x = if h.pool_spread > 0.0 {
                    base[i] * (1.0 + rng.random_range(-h.pool_spread..h.pool_spread))
                } else {
                    base[i]
                };
                v[i] = x.clamp(lims[i].min, lims[i].max);
            }
            ImpedanceTriple::from_array(v)
        });
        if let Ok(f) = spec.plant.steady_features(&imp) {
            pool.push(f);
        }
    }
    Ok(pool)
}

pub fn targets_for(spec: &BatchSpec) -> Result<TargetSpec> {
    let base = spec.plant.steady_features(&spec.plant.reference_impedance())?;
    let pool = if spec.scenario == Scenario::Terrain { terrain_pool(spec)? } else { vec![] };
    let pace = spec.harness.pace_sequence(spec.stage).to_vec();
    Ok(TargetSpec { base, pool, pace })
}

/// Runs a training batch (random networks) or a testing batch (every policy
/// × `testing_trials` trials). Records come back in trial order whatever
/// the number of workers.
pub fn run_scenario(spec: &BatchSpec) -> Result<BatchResult> {
    spec.harness.validate()?;
    let targets = targets_for(spec)?;
    let h = &spec.harness;

    let mut configs = Vec::new();
    let base_cfg = |trial: usize| TrialConfig {
        scenario: spec.scenario,
        stage: spec.stage,
        trial,
        seed: derive_trial_seed(spec.seed, spec.stage, trial),
        plant: spec.plant,
        dhdp: spec.dhdp,
        harness: h.clone(),
        targets: targets.clone(),
        policy: None,
        policy_id: None,
        initial_impedance: None,
        offsets: vec![],
    };
    match spec.stage {
        Stage::Training => {
            for i in 0..h.training_trials {
                configs.push(base_cfg(i));
            }
        }
        Stage::Testing => {
            if spec.policies.is_empty() {
                return Err(Error::InvalidArgument("testing stage needs at least one saved policy".into()));
            }
            for (pi, (id, snap)) in spec.policies.iter().enumerate() {
                let nets = snap.restore(spec.dhdp.actor_hidden, spec.dhdp.critic_hidden)?;
                for t in 0..h.testing_trials {
                    let mut cfg = base_cfg(pi * h.testing_trials + t);
                    cfg.policy = Some(nets.clone());
                    cfg.policy_id = Some(*id);
                    configs.push(cfg);
                }
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start workers: {e}")))?;
    let records: Vec<TrialRecord> = pool.install(|| configs.par_iter().map(run_trial).collect::<Result<Vec<_>>>())?;
    let summaries: Vec<TrialSummary> = records.iter().map(|r| TrialSummary::from_record(r, h.rms_window)).collect();
    let metrics = summarize(&summaries);
    Ok(BatchResult { records, summaries, metrics, targets })
}

/// Picks up to `count` successful trials at random and returns their final
/// policies, ordered by trial index.
pub fn select_policies(records: &[TrialRecord], count: usize, seed: u64) -> Vec<(usize, PolicySnapshot)> {
    let ok = records.iter().filter(|r| r.outcome.is_success()).map(|r| (r.trial, r.final_policy.clone())).collect();
    pick_policies(ok, count, seed)
}

/// Picks up to `count` of `candidates` at random, keeping their order.
pub fn pick_policies(candidates: Vec<(usize, PolicySnapshot)>, count: usize, seed: u64) -> Vec<(usize, PolicySnapshot)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SELECT);
    let mut picked: Vec<usize> = sample(&mut rng, candidates.len(), count.min(candidates.len())).into_vec();
    picked.sort_unstable();
    let mut slots: Vec<Option<(usize, PolicySnapshot)>> = candidates.into_iter().map(Some).collect();
    picked.into_iter().filter_map(|i| slots[i].take()).collect()
}
