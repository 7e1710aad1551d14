//! `kneetune`: runs tuning batches, aggregates their outputs and manages
//! saved policies.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kneetune::config::RunConfig;
use kneetune::dhdp::PolicySnapshot;
use kneetune::harness::output::{build_report, format_table, load_policy_dir, policy_path, write_batch, write_report};
use kneetune::harness::{pick_policies, run_scenario, select_policies, BatchResult, FailureReason, Outcome, Stage};
use kneetune::plant::PlantKind;

#[derive(Parser)]
#[command(name = "kneetune", version, about = "Online actor-critic tuning of knee prosthesis impedance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training or testing batch and write its logs and summaries.
    Run(RunArgs),
    /// Aggregate the trial summaries found under a directory.
    Report {
        dir: PathBuf,
    },
    /// Copy the final policy of one training trial to a standalone file.
    SavePolicy {
        /// Output directory of a training run.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        trial: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a policy file against the configured network sizes.
    LoadPolicy {
        path: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    scenario: Option<u8>,
    #[arg(long)]
    stage: Option<StageArg>,
    #[arg(long)]
    plant: Option<PlantArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
    /// Stop a trial at the first step whose learning rates exceed the monitor bounds.
    #[arg(long)]
    strict_monitor: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Saved policies for a testing batch.
    #[arg(long)]
    policy_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Training,
    Testing,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlantArg {
    FeatureMap,
    Ode,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn apply_overrides(cfg: &mut RunConfig, args: &RunArgs) -> Result<()> {
    if let Some(s) = args.scenario {
        cfg.scenario = s;
    }
    if let Some(s) = args.stage {
        cfg.stage = match s {
            StageArg::Training => Stage::Training,
            StageArg::Testing => Stage::Testing,
        };
    }
    if let Some(p) = args.plant {
        cfg.plant.kind = match p {
            PlantArg::FeatureMap => PlantKind::FeatureMap,
            PlantArg::Ode => PlantKind::Ode,
        };
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    if args.strict_monitor {
        cfg.harness.strict_monitor = true;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if let Some(p) = &args.policy_dir {
        cfg.policy_dir = Some(p.clone());
    }
    cfg.validate()?;
    Ok(())
}

fn print_batch(label: &str, dir: &Path, result: &BatchResult) {
    let m = &result.metrics;
    let steps = m.steps.map_or("-".to_string(), |s| format!("{:.1} ± {:.1}", s.mean, s.std));
    println!(
        "{label}: {} trials, success rate {:.3}, tuning steps {steps}, monitor violations {}, resets {} -> {}",
        m.trials,
        m.success_rate,
        m.monitor_violations,
        m.resets,
        dir.display()
    );
    for r in &result.records {
        if let Outcome::Failure { reason: FailureReason::MonitorViolation { cycle, phase } } = &r.outcome {
            println!("  trial {} halted by the stability monitor at cycle {cycle} in {phase}", r.trial);
        }
    }
}

fn numeric_faults(result: &BatchResult) -> usize {
    result
        .records
        .iter()
        .filter(|r| matches!(r.outcome, Outcome::Failure { reason: FailureReason::NumericFault { .. } }))
        .count()
}

fn run_batch(cfg: &RunConfig, stage: Stage, dir: &Path, policies: Vec<(usize, PolicySnapshot)>) -> Result<BatchResult> {
    let mut spec = cfg.batch_spec(stage)?;
    spec.policies = policies;
    let result = run_scenario(&spec)?;
    write_batch(dir, &spec, &result).with_context(|| format!("writing {}", dir.display()))?;
    print_batch(&format!("scenario {} {stage}", cfg.scenario), dir, &result);
    Ok(result)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    apply_overrides(&mut cfg, &args)?;
    let out = cfg.out.clone();
    let mut faults = 0;
    match cfg.stage {
        Stage::Training => {
            faults += numeric_faults(&run_batch(&cfg, Stage::Training, &out, vec![])?);
        }
        Stage::Testing => {
            let (candidates, test_dir) = match &cfg.policy_dir {
                Some(dir) => {
                    let found = load_policy_dir(dir).with_context(|| format!("reading policies from {}", dir.display()))?;
                    (found, out.clone())
                }
                None => {
                    log::info!("no policy directory given; running a training batch first");
                    let train = run_batch(&cfg, Stage::Training, &out.join("training"), vec![])?;
                    faults += numeric_faults(&train);
                    let all = select_policies(&train.records, usize::MAX, cfg.seed);
                    (all, out.join("testing"))
                }
            };
            if candidates.is_empty() {
                bail!("no successful training policies to test");
            }
            let policies = pick_policies(candidates, cfg.harness.testing_policies, cfg.seed);
            faults += numeric_faults(&run_batch(&cfg, Stage::Testing, &test_dir, policies)?);
        }
    }
    if faults > 0 {
        bail!("{faults} trial(s) stopped on a numeric fault");
    }
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<()> {
    let report = build_report(dir)?;
    write_report(dir, &report)?;
    print!("{}", format_table(&report));
    for s in &report.diagnostics.skipped {
        eprintln!("warning: skipped {}: {}", s.path, s.error);
    }
    Ok(())
}

fn check_policy(snapshot: &PolicySnapshot, cfg: &RunConfig) -> Result<()> {
    snapshot.restore(cfg.dhdp.actor_hidden, cfg.dhdp.critic_hidden)?;
    Ok(())
}

fn cmd_save_policy(run: &Path, trial: usize, out: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let src = policy_path(run, trial);
    let snapshot = PolicySnapshot::load(&src).with_context(|| format!("no saved policy for trial {trial}"))?;
    check_policy(&snapshot, &cfg)?;
    snapshot.save(out)?;
    println!("saved policy of trial {trial} to {}", out.display());
    Ok(())
}

fn cmd_config(config: Option<&Path>) -> Result<()> {
    print!("{}", load_config(config)?.to_toml()?);
    Ok(())
}

fn cmd_load_policy(path: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let snapshot = PolicySnapshot::load(path)?;
    check_policy(&snapshot, &cfg)?;
    for p in &snapshot.phases {
        let critic = p.critic.as_ref().map_or("none".to_string(), |c| {
            format!("{}x{} + {}x{}", c.w1.rows, c.w1.cols, c.w2.rows, c.w2.cols)
        });
        println!(
            "{}: actor {}x{} + {}x{}, critic {critic}",
            p.phase, p.actor.w1.rows, p.actor.w1.cols, p.actor.w2.rows, p.actor.w2.cols
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Report { dir } => cmd_report(&dir),
        Command::SavePolicy { run, trial, out, config } => cmd_save_policy(&run, trial, &out, config.as_deref()),
        Command::LoadPolicy { path, config } => cmd_load_policy(&path, config.as_deref()),
        Command::Config { config } => cmd_config(config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
