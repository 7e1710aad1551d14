//! One check per acceptance criterion. Each returns a verdict and a short
//! line of evidence; the acceptance target prints them all before asserting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kneetune::dhdp::{
    scale_action, stability_monitor, ActorNet, CriticNet, MonitorParams, NormalizedAction, PolicySnapshot,
};
use kneetune::harness::output::write_batch;
use kneetune::harness::{
    run_scenario, run_trial, select_policies, BatchResult, BatchSpec, FailureReason, HarnessParams,
    MeasurementOffset, Outcome, ResetScope, Stage, TargetSpec, TrialConfig, TrialRecord,
};
use kneetune::plant::{PlantConfig, Scenario};
use kneetune::types::{PerPhase, PhaseId, TrackingState};
use kneetune::dhdp::{td_error, BlockConfig};
use rand::Rng;

use super::*;

pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(pass: bool, detail: String) -> Self {
        Check { pass, detail }
    }
}

pub const RTOL: f64 = 1e-5;
pub const ATOL: f64 = 1e-10;
pub const TOL_PEAK_RAD: f64 = 0.0263;

pub fn scenario1_spec(stage: Stage, seed: u64) -> BatchSpec {
    BatchSpec {
        scenario: Scenario::LevelGround,
        stage,
        seed,
        plant: PlantConfig::default(),
        dhdp: BlockConfig::default(),
        harness: HarnessParams::default(),
        jobs: 0,
        policies: vec![],
    }
}

pub fn level_ground_trial(seed: u64) -> TrialConfig {
    let plant = PlantConfig::default();
    let base = plant.steady_features(&plant.reference_impedance()).unwrap();
    TrialConfig {
        scenario: Scenario::LevelGround,
        stage: Stage::Training,
        trial: 0,
        seed,
        plant,
        dhdp: BlockConfig::default(),
        harness: HarnessParams::default(),
        targets: TargetSpec { base, pool: vec![], pace: vec![1.0] },
        policy: None,
        policy_id: None,
        initial_impedance: None,
        offsets: vec![],
    }
}

fn state(s: [f64; 2]) -> TrackingState {
    TrackingState::new(s[0], s[1])
}

/// Criterion 1.
pub fn gradient_oracle(cases: u64) -> Check {
    let start = Instant::now();
    let gamma = 0.95;
    let (l_c, l_a) = (0.1, 0.1);
    let mut worst_c = 0.0f64;
    let mut worst_a = 0.0f64;
    for case in 0..cases {
        let mut r = rng(1000 + case);
        let critic = CriticNet::from_weights(random_mat(&mut r, 8, 5, 2.0).to_dmatrix(), random_mat(&mut r, 1, 8, 2.0).to_dmatrix()).unwrap();
        let actor = ActorNet::from_weights(random_mat(&mut r, 6, 2, 2.0).to_dmatrix(), random_mat(&mut r, 3, 6, 2.0).to_dmatrix()).unwrap();
        let s = [uniform(&mut r, 1.5), uniform(&mut r, 1.5)];
        let u = [uniform(&mut r, 0.95), uniform(&mut r, 0.95), uniform(&mut r, 0.95)];
        let (q_prev, u_prev) = (uniform(&mut r, 2.0), r.random_range(0.0..2.0));

        // critic: ½e_c² with the lagged pair held fixed
        let cw = CriticWeights::of(&critic);
        let half_sq_td = |w1: &Mat, w2: &Mat| {
            let q = CriticWeights { w1: w1.clone(), w2: w2.clone() }.q(s, u);
            let e = gamma * q - (q_prev - u_prev);
            0.5 * e * e
        };
        let g1 = numeric_gradient(&cw.w1, |m| half_sq_td(m, &cw.w2));
        let g2 = numeric_gradient(&cw.w2, |m| half_sq_td(&cw.w1, m));
        let pass = critic.forward(&state(s), &NormalizedAction(u));
        let e_c = td_error(pass.q, q_prev, u_prev, gamma);
        let mut updated = critic.clone();
        updated.update(e_c, &pass, l_c, gamma).unwrap();
        let d1 = step_over_rate(&critic.w1, &updated.w1, l_c);
        let d2 = step_over_rate(&critic.w2, &updated.w2, l_c);
        worst_c = worst_c.max(worst_ratio(&d1, &g1, RTOL, ATOL)).max(worst_ratio(&d2, &g2, RTOL, ATOL));

        // actor: ½Q̂² through the composed actor and critic
        let aw = ActorWeights::of(&actor);
        let half_sq_q = |w1: &Mat, w2: &Mat| {
            let u = ActorWeights { w1: w1.clone(), w2: w2.clone() }.u(s);
            let q = cw.q(s, u);
            0.5 * q * q
        };
        let g1 = numeric_gradient(&aw.w1, |m| half_sq_q(m, &aw.w2));
        let g2 = numeric_gradient(&aw.w2, |m| half_sq_q(&aw.w1, m));
        let ap = actor.forward(&state(s));
        let cp = critic.forward(&state(s), &ap.u);
        let mut updated = actor.clone();
        updated.update(cp.q, &ap, &critic, &cp, l_a).unwrap();
        let d1 = step_over_rate(&actor.w1, &updated.w1, l_a);
        let d2 = step_over_rate(&actor.w2, &updated.w2, l_a);
        worst_a = worst_a.max(worst_ratio(&d1, &g1, RTOL, ATOL)).max(worst_ratio(&d2, &g2, RTOL, ATOL));
    }
    let secs = start.elapsed().as_secs_f64();
    Check::new(
        worst_c <= 1.0 && worst_a <= 1.0 && secs < 10.0,
        format!("{cases} cases, worst error/allowance critic {worst_c:.3} actor {worst_a:.3}, {secs:.2} s"),
    )
}

/// `(W_after - W_before) / -l`, the gradient the update followed.
fn step_over_rate(before: &nalgebra::DMatrix<f64>, after: &nalgebra::DMatrix<f64>, rate: f64) -> Mat {
    let mut m = Mat::from_dmatrix(&(after - before));
    m.v.iter_mut().for_each(|v| *v /= -rate);
    m
}

/// Criterion 2.
pub fn forward_oracle(cases: u64) -> Check {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut r = rng(2000 + case);
        let critic = CriticNet::random(8, 3.0, &mut r);
        let actor = ActorNet::random(6, 3.0, &mut r);
        let s = [uniform(&mut r, 2.0), uniform(&mut r, 2.0)];
        let u = [uniform(&mut r, 1.0), uniform(&mut r, 1.0), uniform(&mut r, 1.0)];
        let q = critic.forward(&state(s), &NormalizedAction(u)).q;
        let q_ref = CriticWeights::of(&critic).q(s, u);
        worst = worst.max((q - q_ref).abs() / q_ref.abs().max(1.0));
        let out = actor.forward(&state(s)).u.0;
        let out_ref = ActorWeights::of(&actor).u(s);
        for j in 0..3 {
            worst = worst.max((out[j] - out_ref[j]).abs());
        }
    }
    Check::new(worst <= 1e-12, format!("{cases} cases, worst deviation {worst:.2e}"))
}

/// Criterion 3.
pub fn constraint_fuzz(samples: u64) -> Check {
    let scales = HarnessParams::default().action_scale;
    let mut r = rng(3000);
    let mut bad = 0usize;
    let mut saturated = 0usize;
    for _ in 0..samples {
        let w = 10f64.powf(r.random_range(-3.0..3.0));
        let actor =
            ActorNet::from_weights(random_mat(&mut r, 6, 2, w).to_dmatrix(), random_mat(&mut r, 3, 6, w).to_dmatrix()).unwrap();
        let mag = 10f64.powf(r.random_range(-6.0..6.0));
        let s = [uniform(&mut r, mag), uniform(&mut r, mag)];
        let u = actor.forward(&state(s)).u;
        let inside = u.0.iter().all(|v| v.is_finite() && v.abs() < 1.0);
        let bounded = PhaseId::ALL.iter().all(|&p| {
            let d = scale_action(&u, &scales[p]).as_array();
            let lim = scales[p].as_array();
            (0..3).all(|i| d[i].abs() <= lim[i])
        });
        if u.0.iter().any(|v| v.abs() > 0.999_999) {
            saturated += 1;
        }
        if !(inside && bounded) {
            bad += 1;
        }
    }
    Check::new(bad == 0, format!("{samples} samples, {bad} out of bounds, {saturated} within 1e-6 of saturation"))
}

pub struct Scenario1Runs {
    pub training: BatchResult,
    pub training_secs: f64,
    pub testing: BatchResult,
}

pub fn scenario1_runs(seed: u64) -> Scenario1Runs {
    let spec = scenario1_spec(Stage::Training, seed);
    let start = Instant::now();
    let training = run_scenario(&spec).unwrap();
    let training_secs = start.elapsed().as_secs_f64();
    let mut test_spec = scenario1_spec(Stage::Testing, seed);
    test_spec.policies = select_policies(&training.records, spec.harness.testing_policies, seed);
    let testing = run_scenario(&test_spec).unwrap();
    Scenario1Runs { training, training_secs, testing }
}

/// Criterion 4.
pub fn scenario1_convergence(runs: &Scenario1Runs) -> Check {
    let m = &runs.training.metrics;
    let steps = m.steps.as_ref();
    let mean = steps.map_or(f64::INFINITY, |s| s.mean);
    let max = steps.map_or(usize::MAX, |s| s.max);
    Check::new(
        m.trials == 30 && m.success_rate >= 0.9 && mean <= 200.0 && max <= 500 && runs.training_secs < 60.0,
        format!(
            "{} trials, success {:.3}, steps {:.1} ± {:.1} (max {}), {:.2} s",
            m.trials,
            m.success_rate,
            mean,
            steps.map_or(f64::NAN, |s| s.std),
            max,
            runs.training_secs
        ),
    )
}

/// Criterion 5.
pub fn testing_speedup(runs: &Scenario1Runs) -> Check {
    let train = runs.training.metrics.steps.as_ref().map_or(f64::INFINITY, |s| s.mean);
    let m = &runs.testing.metrics;
    let test = m.steps.as_ref().map_or(f64::INFINITY, |s| s.mean);
    let policies = runs.testing.records.iter().filter_map(|r| r.policy_id).collect::<std::collections::BTreeSet<_>>().len();
    Check::new(
        policies == 10 && m.trials == 300 && test < train,
        format!(
            "{policies} policies × {} trials, testing steps {test:.1} vs training {train:.1} (testing success {:.3})",
            m.trials / policies.max(1),
            m.success_rate
        ),
    )
}

/// Criterion 6.
pub fn rms_reduction(batch: &BatchResult) -> Check {
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut worst_final = 0.0f64;
    for s in batch.summaries.iter().filter(|s| s.success) {
        checked += 1;
        let (Some(init), Some(fin)) = (s.rms_initial, s.rms_final) else {
            failures.push(format!("trial {} has no RMS", s.trial));
            continue;
        };
        worst_final = worst_final.max(fin.peak_rad);
        if fin.peak_rad > TOL_PEAK_RAD {
            failures.push(format!("trial {} final {:.4}", s.trial, fin.peak_rad));
        }
        if init.peak_rad > TOL_PEAK_RAD && fin.peak_rad > 0.5 * init.peak_rad {
            failures.push(format!("trial {} {:.4} -> {:.4}", s.trial, init.peak_rad, fin.peak_rad));
        }
    }
    let m = &batch.metrics;
    let pooled = match (m.rms_initial, m.rms_final) {
        (Some(i), Some(f)) => format!("{:.4} -> {:.4} rad", i.peak_rad, f.peak_rad),
        _ => "n/a".into(),
    };
    Check::new(
        failures.is_empty() && checked > 0,
        format!("{checked} converged trials, mean RMS {pooled}, worst final {worst_final:.4}; {}", failures.join(", ")),
    )
}

/// Convergence flags recomputed from the in-tolerance history since `from`.
fn converged_since(rec: &TrialRecord, from: usize, to: usize, window: usize, quota: usize) -> PerPhase<bool> {
    PerPhase::from_fn(|p| {
        (from..=to).any(|end| {
            let start = end.saturating_sub(window - 1).max(from);
            (start..=end).filter(|&k| rec.cycles[k].phases[p].in_tolerance).count() >= quota
        })
    })
}

fn all(p: &PerPhase<bool>) -> bool {
    p.iter().all(|(_, v)| *v)
}

/// Checks one terrain trial against the protocol and returns its event log.
fn terrain_protocol(rec: &TrialRecord, h: &HarnessParams, issues: &mut Vec<String>) -> String {
    let mut log = String::new();
    let (window, quota) = (h.convergence.window, h.convergence.quota);
    let mut seg_start = 0;
    let mut tracked = false;
    let mut consecutive = 0;
    let mut expected_end = None;
    for (k, c) in rec.cycles.iter().enumerate() {
        let switch = k > 0 && k % h.switch_period == 0;
        if k > 0 && (c.segment != rec.cycles[k - 1].segment) != switch {
            issues.push(format!("trial {} cycle {k}: segment change does not match the switch period", rec.trial));
        }
        if switch {
            if !tracked {
                consecutive = 0;
            }
            seg_start = k;
            tracked = false;
            writeln!(log, "{k:>4} switch segment={} pool={}", c.segment, c.pool_index.map_or(-1, |i| i as i64)).unwrap();
        }
        if c.pool_index.is_none() || c.pace != 1.0 {
            issues.push(format!("trial {} cycle {k}: missing pool index or non-unit pace", rec.trial));
        }
        if !tracked && all(&converged_since(rec, seg_start, k, window, quota)) {
            tracked = true;
            consecutive += 1;
            writeln!(log, "{k:>4} tracked segment={} consecutive={consecutive}", c.segment).unwrap();
            if consecutive >= h.consecutive_tracks && expected_end.is_none() {
                expected_end = Some(k);
            }
        }
    }
    check_outcome(rec, expected_end, h.max_cycles, issues);
    writeln!(log, "outcome {}", outcome_text(&rec.outcome)).unwrap();
    log
}

/// Checks one pace trial against the protocol and returns its event log.
fn pace_protocol(rec: &TrialRecord, h: &HarnessParams, order: &[f64], issues: &mut Vec<String>) -> String {
    let mut log = String::new();
    let (window, quota) = (h.convergence.window, h.convergence.quota);
    let mut leg = 0;
    let mut leg_start = 0;
    let mut expected_end = None;
    writeln!(log, "   0 leg=0 pace={}", order[0]).unwrap();
    for (k, c) in rec.cycles.iter().enumerate() {
        let done = all(&converged_since(rec, leg_start, k, window, quota));
        if done {
            if leg + 1 == order.len() {
                expected_end = Some(k);
            } else {
                leg += 1;
                leg_start = k + 1;
                writeln!(log, "{k:>4} leg={leg} pace={}", order[leg]).unwrap();
            }
        }
        if c.segment != leg || c.pace != order[leg] {
            issues.push(format!(
                "trial {} cycle {k}: leg {} pace {} but expected leg {leg} pace {}",
                rec.trial, c.segment, c.pace, order[leg]
            ));
        }
        if expected_end.is_some() {
            break;
        }
    }
    check_outcome(rec, expected_end, h.max_cycles, issues);
    writeln!(log, "outcome {}", outcome_text(&rec.outcome)).unwrap();
    log
}

fn check_outcome(rec: &TrialRecord, expected_end: Option<usize>, max_cycles: usize, issues: &mut Vec<String>) {
    let ok = match (expected_end, &rec.outcome) {
        (Some(k), Outcome::Success { steps }) => *steps == k + 1 && rec.cycles.len() == k + 1,
        (None, Outcome::Failure { reason: FailureReason::MaxCycles }) => rec.cycles.len() == max_cycles,
        _ => false,
    };
    if !ok {
        issues.push(format!("trial {}: outcome {:?} but protocol expects end at {expected_end:?}", rec.trial, rec.outcome));
    }
}

fn outcome_text(o: &Outcome) -> String {
    match o {
        Outcome::Success { steps } => format!("success steps={steps}"),
        Outcome::Failure { reason } => format!("failure {reason:?}"),
    }
}

pub const PROTOCOL_SEED: u64 = 3;
pub const PROTOCOL_TRIALS: usize = 4;

/// Training then testing batch of one scenario on a fixed seed, with the
/// event log of every trial and any protocol violations found.
pub fn protocol_log(scenario: Scenario) -> (String, Vec<String>) {
    let mut spec = scenario1_spec(Stage::Training, PROTOCOL_SEED);
    spec.scenario = scenario;
    spec.harness.training_trials = PROTOCOL_TRIALS;
    spec.harness.testing_trials = PROTOCOL_TRIALS;
    let training = run_scenario(&spec).unwrap();
    let mut policies = select_policies(&training.records, 1, PROTOCOL_SEED);
    if policies.is_empty() {
        policies.push((0, training.records[0].final_policy.clone()));
    }
    let mut test_spec = spec.clone();
    test_spec.stage = Stage::Testing;
    test_spec.policies = policies;
    let testing = run_scenario(&test_spec).unwrap();

    let h = &spec.harness;
    let mut issues = Vec::new();
    let mut log = String::new();
    for (stage, batch, order) in [
        (Stage::Training, &training, [1.00, 1.12, 1.00, 0.88]),
        (Stage::Testing, &testing, [1.00, 0.80, 1.00, 1.20]),
    ] {
        for rec in &batch.records {
            writeln!(log, "# {} trial {}", stage.as_str(), rec.trial).unwrap();
            log += &match scenario {
                Scenario::Terrain => terrain_protocol(rec, h, &mut issues),
                Scenario::Pace => pace_protocol(rec, h, &order, &mut issues),
                Scenario::LevelGround => unreachable!(),
            };
        }
    }
    if scenario == Scenario::Terrain {
        let pools: Vec<_> = [&training, &testing].iter().map(|b| b.targets.pool.clone()).collect();
        if pools[0].len() != h.pool_size || pools[1].len() != h.pool_size || pools[0] == pools[1] {
            issues.push("testing does not get a fresh pool of the configured size".into());
        }
    }
    (log, issues)
}

pub fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden").join(name)
}

/// Compares `text` with a stored golden file. Set `KNEETUNE_BLESS=1` to rewrite it.
pub fn golden_compare(name: &str, text: &str) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var_os("KNEETUNE_BLESS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, text).unwrap();
        return Ok(());
    }
    let stored = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if stored == text {
        Ok(())
    } else {
        let line = stored.lines().zip(text.lines()).position(|(a, b)| a != b).map_or(0, |i| i + 1);
        Err(format!("{name} differs from the stored log near line {line}"))
    }
}

/// Criterion 7.
pub fn protocol_conformance() -> Check {
    let mut notes = Vec::new();
    let mut pass = true;
    for (scenario, file) in [(Scenario::Terrain, "terrain.log"), (Scenario::Pace, "pace.log")] {
        let (log, issues) = protocol_log(scenario);
        let golden = golden_compare(file, &log);
        let successes = log.lines().filter(|l| l.starts_with("outcome success")).count();
        pass &= issues.is_empty() && golden.is_ok();
        notes.push(format!(
            "{file}: {} violations, golden {}, {successes}/{} trials succeed",
            issues.len(),
            if golden.is_ok() { "match" } else { "MISMATCH" },
            2 * PROTOCOL_TRIALS
        ));
        notes.extend(issues.into_iter().take(3));
        notes.extend(golden.err());
    }
    Check::new(pass, notes.join("; "))
}

fn bits(p: &PolicySnapshot) -> Vec<u64> {
    p.phases
        .iter()
        .flat_map(|ph| {
            let mut v: Vec<u64> = ph.actor.w1.data.iter().chain(&ph.actor.w2.data).map(|x| x.to_bits()).collect();
            if let Some(c) = &ph.critic {
                v.extend(c.w1.data.iter().chain(&c.w2.data).map(|x| x.to_bits()));
            }
            v
        })
        .collect()
}

/// Criterion 8: a violating cycle leaves every network weight bit-identical
/// and returns the impedance to its initial value.
pub fn safety_semantics() -> Check {
    let mut notes = Vec::new();
    let mut pass = true;
    for scope in [ResetScope::Trial, ResetScope::Phase] {
        let at = 12;
        let mut cfg = level_ground_trial(21);
        cfg.harness.reset_scope = scope;
        cfg.offsets = PhaseId::ALL
            .iter()
            .map(|&phase| MeasurementOffset { cycle: at, phase, d_duration: 0.0, d_peak: 0.5 })
            .collect();
        cfg.harness.max_cycles = at;
        let before = run_trial(&cfg).unwrap();
        cfg.harness.max_cycles = at + 2;
        let after = run_trial(&cfg).unwrap();
        let c = &after.cycles[at];
        let unchanged = bits(&before.final_policy) == bits(&after_cycle(&cfg, at));
        let all_reset = c.reset && c.phases.iter().all(|(_, r)| r.reset && r.learn.is_none());
        let restored = after.cycles[at + 1].phases.map(|_, r| r.impedance) == after.initial_impedance;
        let moved = before.cycles[at - 1].phases.map(|_, r| r.impedance) != after.initial_impedance;
        let running = before.cycles.len() == at && after.cycles.len() == at + 2;
        let ok = unchanged && all_reset && restored && moved && running;
        pass &= ok;
        notes.push(format!(
            "{scope:?} scope: weights bit-identical {unchanged}, all phases reset {all_reset}, impedance restored {restored}"
        ));
    }
    Check::new(pass, notes.join("; "))
}

fn after_cycle(cfg: &TrialConfig, at: usize) -> PolicySnapshot {
    let mut cfg = cfg.clone();
    cfg.harness.max_cycles = at + 1;
    run_trial(&cfg).unwrap().final_policy
}

/// Criterion 9.
pub fn monitor_oracle(snapshots: u64) -> Check {
    let cfg0 = level_ground_trial(0);
    let d = cfg0.dhdp;
    let MonitorParams { alpha1, alpha2, alpha3 } = d.monitor;
    let mut worst = 0.0f64;
    let mut flags_agree = true;
    let mut r = rng(9000);
    for i in 0..snapshots {
        let mut cfg = level_ground_trial(100 + i);
        cfg.harness.max_cycles = 11 + (i as usize * 7) % 60;
        let rec = run_trial(&cfg).unwrap();
        let nets = rec.final_policy.restore(d.actor_hidden, d.critic_hidden).unwrap();
        let n = &nets[PhaseId::ALL[i as usize % 4]];
        let critic = n.critic.clone().unwrap();
        let s = [uniform(&mut r, 1.0), uniform(&mut r, 1.0)];
        let ap = n.actor.forward(&state(s));
        let cp = critic.forward(&state(s), &ap.u);
        let rep = stability_monitor(&critic, &n.actor, &cp, &ap, &d.monitor, d.cost.gamma, d.critic_lr, d.actor_lr);
        let (lc, la) =
            monitor_bounds(&CriticWeights::of(&critic), &ActorWeights::of(&n.actor), s, [alpha1, alpha2, alpha3], d.cost.gamma);
        for (a, b) in [(rep.critic_bound, lc), (rep.actor_bound, la)] {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
        flags_agree &= rep.pass == (d.critic_lr < lc && d.actor_lr < la);
    }

    let mut strict = level_ground_trial(7);
    strict.dhdp.critic_lr = 1e3;
    strict.harness.strict_monitor = true;
    let halted = run_trial(&strict).unwrap();
    let halts = matches!(halted.outcome, Outcome::Failure { reason: FailureReason::MonitorViolation { cycle: 0, .. } })
        && halted.cycles.len() == 1;
    strict.harness.strict_monitor = false;
    strict.harness.max_cycles = 11;
    let advisory = run_trial(&strict).unwrap();
    let continues = advisory.cycles.len() == 11 && advisory.monitor_violations > 0;

    Check::new(
        worst <= 1e-10 && flags_agree && halts && continues,
        format!(
            "{snapshots} snapshots, worst relative deviation {worst:.2e}, pass flags agree {flags_agree}; strict halts at cycle 0 {halts}, advisory continues {continues}"
        ),
    )
}

/// Criterion 10.
pub fn weight_growth(batch: &BatchResult) -> Check {
    let clean = batch.records.iter().filter(|r| r.monitor_clean).count();
    let ratio = |r: &TrialRecord| r.max_sup_norm / r.initial_sup_norm;
    let worst_all = batch.records.iter().map(ratio).fold(0.0, f64::max);
    let worst_clean = batch.records.iter().filter(|r| r.monitor_clean).map(ratio).fold(0.0, f64::max);
    Check::new(
        worst_all < 100.0,
        format!(
            "max sup-norm ratio {worst_all:.2} over all {} trials ({clean} monitor-clean, worst clean {worst_clean:.2})",
            batch.records.len()
        ),
    )
}

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Criterion 11.
pub fn determinism() -> Check {
    let mut spec = scenario1_spec(Stage::Training, 11);
    spec.harness.training_trials = 6;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (i, dir) in dirs.iter().enumerate() {
        spec.jobs = if i == 0 { 0 } else { 1 };
        let result = run_scenario(&spec).unwrap();
        write_batch(dir.path(), &spec, &result).unwrap();
    }
    let a = read_tree(dirs[0].path());
    let b = read_tree(dirs[1].path());
    let csv = a.keys().filter(|p| p.extension().is_some_and(|e| e == "csv")).count();
    let json = a.keys().filter(|p| p.extension().is_some_and(|e| e == "json")).count();
    Check::new(
        !a.is_empty() && a == b,
        format!("{} files ({csv} csv, {json} json), identical {}", a.len(), a == b),
    )
}
