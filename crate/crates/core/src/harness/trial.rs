use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    safety_check, ConvergenceTracker, CycleRecord, FailureReason, HarnessParams, LearnRecord, Outcome, PhaseRecord,
    ResetScope, SafetyVerdict, Stage, TrialRecord,
};
use crate::dhdp::{scale_action, BlockConfig, DhdpBlock, PhaseNetworks, PolicySnapshot};
use crate::error::{Error, Result};
use crate::fsm::{apply_delta, ImpedanceSet};
use crate::plant::{measurement_alignment, Plant, PlantConfig, Scenario, TargetProgram};
use crate::types::{
    duration_percent, tracking_error, within_bound, CycleFeatures, GaitFeatures, ImpedanceTriple, PerPhase, PhaseId,
    TrackingState,
};

// independent random streams of one trial
const STREAM_INITIAL: u64 = 1;
const STREAM_NETWORKS: u64 = 2;
const STREAM_PLANT: u64 = 3;
const STREAM_TARGET: u64 = 4;

/// Intact-knee profiles a trial tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub base: CycleFeatures,
    /// Terrain profiles; only read by the terrain scenario.
    pub pool: Vec<CycleFeatures>,
    /// Pace legs; only read by the pace scenario.
    pub pace: Vec<f64>,
}

/// Additive disturbance on the measured features of one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementOffset {
    pub cycle: usize,
    pub phase: PhaseId,
    pub d_duration: f64,
    pub d_peak: f64,
}

#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub scenario: Scenario,
    pub stage: Stage,
    pub trial: usize,
    pub seed: u64,
    pub plant: PlantConfig,
    pub dhdp: BlockConfig,
    pub harness: HarnessParams,
    pub targets: TargetSpec,
    /// Networks to start from instead of random weights.
    pub policy: Option<PerPhase<PhaseNetworks>>,
    pub policy_id: Option<usize>,
    /// Skips the randomized draw.
    pub initial_impedance: Option<ImpedanceSet>,
    pub offsets: Vec<MeasurementOffset>,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.dhdp.validate()?;
        self.harness.validate()?;
        if self.scenario == Scenario::Terrain && self.targets.pool.is_empty() {
            return Err(Error::invalid("targets.pool", "terrain scenario needs a non-empty pool"));
        }
        if let Some(imp) = &self.initial_impedance {
            imp.validate()?;
        }
        Ok(())
    }
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn target_program(cfg: &TrialConfig) -> Result<TargetProgram> {
    let t = &cfg.targets;
    let program = match cfg.scenario {
        Scenario::LevelGround => TargetProgram::level_ground(t.base),
        Scenario::Terrain => {
            TargetProgram::terrain(t.base, t.pool.clone(), cfg.harness.switch_period, rng_stream(cfg.seed, STREAM_TARGET))?
        }
        Scenario::Pace => TargetProgram::pace(t.base, t.pace.clone())?,
    };
    Ok(program.with_drift(cfg.harness.drift))
}

fn errors(target: &CycleFeatures, measured: &CycleFeatures) -> PerPhase<TrackingState> {
    PerPhase::from_fn(|p| tracking_error(&target[p], &measured[p]))
}

/// Uniform draw around the reference, redrawn until the steady gait it
/// produces lies inside the safety bounds of the first target.
fn draw_initial_impedance(cfg: &TrialConfig, first_target: &CycleFeatures) -> Result<ImpedanceSet> {
    let mut rng = rng_stream(cfg.seed, STREAM_INITIAL);
    let reference = cfg.plant.reference_impedance();
    let h = &cfg.harness;
    for _ in 0..h.initial_max_draws {
        let imp = PerPhase::from_fn(|p| {
            let r = h.ranges[p];
            let base = reference[p].as_array();
            let lims = [r.stiffness, r.damping, r.equilibrium];
            let mut v = [0.0; 3];
            for i in 0..3 {
                let x = if h.initial_spread > 0.0 {
                    base[i] * (1.0 + rng.random_range(-h.initial_spread..h.initial_spread))
                } else {
                    base[i]
                };
                v[i] = x.clamp(lims[i].min, lims[i].max);
            }
            ImpedanceTriple::from_array(v)
        });
        let Ok(z) = cfg.plant.steady_features(&imp) else { continue };
        let s = errors(first_target, &z);
        if safety_check(&s, &h.bounds, first_target.cycle_duration())? == SafetyVerdict::Ok {
            return Ok(imp);
        }
    }
    Err(Error::invalid(
        "harness.initial_spread",
        format!("no safe initial impedance found in {} draws", h.initial_max_draws),
    ))
}

fn build_blocks(cfg: &TrialConfig) -> Result<PerPhase<DhdpBlock>> {
    let mut rng = rng_stream(cfg.seed, STREAM_NETWORKS);
    let mut blocks = Vec::with_capacity(4);
    for phase in PhaseId::ALL {
        let block = match &cfg.policy {
            Some(nets) => {
                let n = &nets[phase];
                // a policy without a critic starts from a fresh random critic
                let critic = match &n.critic {
                    Some(c) => c.clone(),
                    None => DhdpBlock::new(cfg.dhdp, &mut rng).critic,
                };
                DhdpBlock::from_networks(cfg.dhdp, n.actor.clone(), critic)?
            }
            None => DhdpBlock::new(cfg.dhdp, &mut rng),
        };
        blocks.push(block);
    }
    Ok(PerPhase(blocks.try_into().expect("four blocks")))
}

fn sup_norm(blocks: &PerPhase<DhdpBlock>) -> f64 {
    blocks.iter().map(|(_, b)| b.sup_norm()).fold(0.0, f64::max)
}

fn snapshot(blocks: &PerPhase<DhdpBlock>) -> PolicySnapshot {
    PolicySnapshot::capture(&PerPhase::from_fn(|p| (&blocks[p].actor, Some(&blocks[p].critic))))
}

fn apply_offsets(z: &mut CycleFeatures, k: usize, offsets: &[MeasurementOffset]) {
    for o in offsets.iter().filter(|o| o.cycle == k) {
        let f = z[o.phase];
        z[o.phase] = GaitFeatures::clamped(f.duration + o.d_duration, f.peak_angle + o.d_peak);
    }
}

/// Scenario bookkeeping on top of per-phase convergence.
struct Progress {
    segment: usize,
    segment_done: bool,
    consecutive: usize,
}

/// Runs one trial of the tuning protocol: measure, compare with the intact
/// knee, reset on a safety violation, otherwise learn and retune, until the
/// scenario's success condition holds or the cycle budget is spent.
pub fn run_trial(cfg: &TrialConfig) -> Result<TrialRecord> {
    cfg.validate()?;
    let h = &cfg.harness;
    let mut program = target_program(cfg)?;
    let zero_err = PerPhase::from_fn(|_| TrackingState::ZERO);
    let first_target = program.target_step(0, &zero_err);
    let initial = match &cfg.initial_impedance {
        Some(imp) => *imp,
        None => draw_initial_impedance(cfg, &first_target)?,
    };

    let mut blocks = build_blocks(cfg)?;
    let mut plant = Plant::new(&cfg.plant, &initial);
    plant.set_pace(program.pace_multiplier());
    let mut plant_rng = rng_stream(cfg.seed, STREAM_PLANT);
    let mut tracker = ConvergenceTracker::new(h.convergence);
    let alignment = cfg.plant.alignment();

    let initial_sup_norm = sup_norm(&blocks);
    let mut record = TrialRecord {
        scenario: cfg.scenario,
        stage: cfg.stage,
        trial: cfg.trial,
        seed: cfg.seed,
        policy_id: cfg.policy_id,
        initial_impedance: initial,
        cycles: Vec::new(),
        outcome: Outcome::Failure { reason: FailureReason::MaxCycles },
        monitor_violations: 0,
        resets: 0,
        initial_sup_norm,
        max_sup_norm: initial_sup_norm,
        monitor_clean: true,
        converged_at: PerPhase([None; 4]),
        final_policy: snapshot(&blocks),
    };

    let mut imp = initial;
    let mut prev_err = zero_err;
    let mut progress = Progress { segment: 0, segment_done: false, consecutive: 0 };

    for k in 0..h.max_cycles {
        if program.is_switch_cycle(k) {
            if !progress.segment_done {
                progress.consecutive = 0;
            }
            progress.segment += 1;
            progress.segment_done = false;
            tracker.reset();
        }
        let target = if k == 0 { first_target } else { program.target_step(k, &prev_err) };
        let cycle_duration = target.cycle_duration();

        let walked = imp;
        let measured = match plant.step(&walked, &mut plant_rng) {
            Ok(mut z) => {
                apply_offsets(&mut z, k, &cfg.offsets);
                Some(z)
            }
            Err(Error::PlantInstability { .. } | Error::MissingPhase(_)) => None,
            Err(e) => return Err(e),
        };
        // a cycle without usable features is handled like a safety violation
        let paired = measurement_alignment(&[target], &[measured], alignment).ok().map(|p| p[0].measured);
        let z = paired.unwrap_or(target);
        let s = errors(&target, &z);
        let violated = match paired {
            None => PerPhase([true; 4]),
            Some(_) => match safety_check(&s, &h.bounds, cycle_duration)? {
                SafetyVerdict::Ok => PerPhase([false; 4]),
                SafetyVerdict::Reset(v) => v,
            },
        };
        let reset_mask = match h.reset_scope {
            _ if !violated.iter().any(|(_, v)| *v) => PerPhase([false; 4]),
            ResetScope::Phase => violated,
            ResetScope::Trial => PerPhase([true; 4]),
        };
        let reset = reset_mask.iter().any(|(_, r)| *r);

        let mut in_tol = PerPhase([false; 4]);
        if paired.is_some() {
            for p in PhaseId::ALL {
                in_tol[p] = within_bound(&s[p], &h.bounds[p].tolerance(), cycle_duration)?;
            }
        }
        tracker.push(k, &in_tol);
        let converged = tracker.converged();

        let mut rows = PerPhase::from_fn(|p| PhaseRecord {
            target: target[p],
            measured: z[p],
            s: s[p],
            duration_pct: duration_percent(s[p].d_duration, cycle_duration) * s[p].d_duration.signum(),
            impedance: walked[p],
            learn: None,
            reset: reset_mask[p],
            in_tolerance: in_tol[p],
            converged: converged[p],
        });

        let mut finished = false;
        if tracker.all_converged() {
            match cfg.scenario {
                Scenario::LevelGround => finished = true,
                Scenario::Terrain => {
                    if !progress.segment_done {
                        progress.segment_done = true;
                        progress.consecutive += 1;
                        finished = progress.consecutive >= h.consecutive_tracks;
                    }
                }
                Scenario::Pace => {
                    if program.advance_leg() {
                        progress.segment += 1;
                        tracker.reset();
                        plant.set_pace(program.pace_multiplier());
                    } else {
                        finished = true;
                    }
                }
            }
        }
        record.converged_at = tracker.converged_at();

        let segment = progress.segment;
        let pool_index = (cfg.scenario == Scenario::Terrain).then(|| program.pool_index());
        let pace = program.pace_multiplier();

        if finished {
            record.push(CycleRecord { cycle: k, segment, pool_index, pace, reset: false, phases: rows });
            record.outcome = Outcome::Success { steps: k + 1 };
            break;
        }

        if reset {
            record.resets += 1;
            for p in PhaseId::ALL {
                if reset_mask[p] {
                    imp[p] = initial[p];
                    blocks[p].clear_history();
                }
            }
            plant.reset_phases(&initial, &reset_mask);
        }

        let mut halt = None;
        for p in PhaseId::ALL {
            if reset_mask[p] {
                continue;
            }
            let step = match blocks[p].step(&s[p]) {
                Ok(step) => step,
                Err(Error::NumericFault(what)) => {
                    halt = Some(FailureReason::NumericFault { cycle: k, what: what.to_string() });
                    break;
                }
                Err(e) => return Err(e),
            };
            let delta = scale_action(&step.action, &h.action_scale[p]);
            let (next, flags) = apply_delta(&imp, p, &delta, &h.ranges);
            imp = next;
            rows[p].learn = Some(LearnRecord {
                action: step.action,
                delta,
                cost: step.cost,
                q: step.q,
                td_error: step.td_error,
                critic_bound: step.monitor.critic_bound,
                actor_bound: step.monitor.actor_bound,
                monitor_pass: step.monitor.pass,
                clamped: flags.any(),
            });
            if !step.monitor.pass {
                record.monitor_violations += 1;
                record.monitor_clean = false;
                log::debug!("trial {} cycle {k} {p}: learning rate above monitor bound", cfg.trial);
                if h.strict_monitor {
                    halt = Some(FailureReason::MonitorViolation { cycle: k, phase: p });
                    break;
                }
            }
        }
        record.max_sup_norm = record.max_sup_norm.max(sup_norm(&blocks));
        record.push(CycleRecord { cycle: k, segment, pool_index, pace, reset, phases: rows });
        prev_err = s;
        if let Some(reason) = halt {
            record.outcome = Outcome::Failure { reason };
            break;
        }
    }
    record.final_policy = snapshot(&blocks);
    Ok(record)
}
