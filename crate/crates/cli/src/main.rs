//! `rav-recover`: build attack suites, train recovery policies, evaluate
//! and ablate them, and replay recorded missions.

mod manifest;
mod report;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rav_recover::adversarial::{
    train_adversarial, write_adversarial_csv, AdversarialConfig, AdversaryMode, AttackAgentParams,
};
use rav_recover::detection::DetectorMode;
use rav_recover::harness::runner::mix_seed;
use rav_recover::harness::{
    build_suite, evaluate_suite, run_mission, AttackSource, EpisodeRecord, RecoveryMode,
    ScenarioConfig, Suite, SuiteConfig,
};
use rav_recover::policy::PolicyParams;
use rav_recover::training::{train, write_curve_csv, TrainingConfig, TrainingVariant};
use rav_recover::{Error, Result};

use manifest::Manifest;

#[derive(Parser, Debug)]
#[command(
    name = "rav-recover",
    version,
    about = "Specification-aware attack recovery for simulated vehicles"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for concurrent missions.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Run missions one after another; results are then bit-reproducible.
    #[arg(long, global = true)]
    sequential: bool,
    /// Attack detector: `oracle` or `residual`.
    #[arg(long, global = true)]
    detector: Option<DetectorMode>,
    /// Output directory (default: `<output root>/<command>-seed<seed>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, env = "RAV_RECOVER_OUT", default_value = "runs", global = true)]
    output_root: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Ablation {
    NoRcp,
    NoSr,
}

impl Ablation {
    fn mode(self) -> RecoveryMode {
        match self {
            Ablation::NoRcp => RecoveryMode::NoRcp,
            Ablation::NoSr => RecoveryMode::NoSr,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a validated attack suite by paired no-protection runs.
    SuiteBuild {
        /// Suite config (TOML); built-in defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a recovery policy (phase 1 attack-free, phase 2 adversarial).
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        phase: u8,
        #[arg(long, default_value = "reactive")]
        variant: TrainingVariant,
        /// Training config (TOML): a phase-1 or phase-2 config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Phase-1 checkpoint to start phase 2 from (or to resume phase 1).
        #[arg(long)]
        init: Option<PathBuf>,
        /// Attack agent to resume in phase 2.
        #[arg(long)]
        attacker: Option<PathBuf>,
        #[arg(long, default_value = "learned")]
        adversary: AdversaryMode,
        /// Phase 2 without state reconstruction (the no-SR ablation policy).
        #[arg(long)]
        no_reconstruction: bool,
        /// Phase-1 budget in policy decisions.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Evaluate one arm on a suite, or on attack-free missions.
    Eval {
        #[arg(long, conflicts_with = "attack_free")]
        suite: Option<PathBuf>,
        /// Scenario config; must match the suite's scenario when both are given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "reactive")]
        mode: RecoveryMode,
        /// Ablation arm; overrides `--mode` and tags the report.
        #[arg(long, value_enum)]
        ablate: Option<Ablation>,
        /// Fly this many attack-free missions instead of a suite.
        #[arg(long)]
        attack_free: Option<usize>,
        /// Also write every mission as JSON lines.
        #[arg(long)]
        records: bool,
    },
    /// Evaluate the full system, both ablations and no protection on a suite.
    Ablate {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Policy trained without reconstruction for the no-SR arm.
        #[arg(long)]
        no_sr_checkpoint: Option<PathBuf>,
    },
    /// Fly one mission from a scenario config and write its record.
    Fly {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        attacker: Option<PathBuf>,
        #[arg(long)]
        mode: Option<RecoveryMode>,
    },
    /// Re-fly a recorded mission and check it reproduces bit for bit.
    Replay {
        record: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        attacker: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SuiteBuild { .. } => "suite-build",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Ablate { .. } => "ablate",
            Command::Fly { .. } => "fly",
            Command::Replay { .. } => "replay",
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::InvalidInput(_)
        | Error::InvalidScript(_)
        | Error::UnsupportedAction { .. }
        | Error::Serde(_) => 2,
        Error::Divergence(_) => 3,
        Error::SuiteValidation(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn read_toml<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn load_policy(path: &Path) -> Result<PolicyParams> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "checkpoint {} not found",
            path.display()
        )));
    }
    PolicyParams::load(path)
}

fn load_attacker(path: &Path) -> Result<AttackAgentParams> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "attack agent {} not found",
            path.display()
        )));
    }
    AttackAgentParams::load(path)
}

fn load_suite(path: &Path) -> Result<Suite> {
    if !path.exists() {
        return Err(Error::Config(format!("suite {} not found", path.display())));
    }
    Suite::load(path)
}

struct Context {
    common: Common,
    manifest: Manifest,
    out: PathBuf,
}

impl Context {
    fn seed(&self, from_config: u64) -> u64 {
        self.common.seed.unwrap_or(from_config)
    }

    fn scenario(&self, s: &mut ScenarioConfig) {
        if let Some(m) = self.common.detector {
            s.detector.mode = m;
        }
    }

    fn policy(&mut self, path: Option<&Path>, mode: RecoveryMode) -> Result<Option<PolicyParams>> {
        match path {
            Some(p) => {
                let policy = load_policy(p)?;
                self.manifest.input("checkpoint", p)?;
                Ok(Some(policy))
            }
            None if mode.needs_policy() => Err(Error::Config(format!(
                "recovery mode `{mode}` needs --checkpoint"
            ))),
            None => Ok(None),
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let jobs = if cli.common.sequential {
        Some(1)
    } else {
        cli.common.jobs
    };
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let name = cli.command.name();
    let out = cli.common.out.clone().unwrap_or_else(|| {
        cli.common
            .output_root
            .join(format!("{name}-seed{}", cli.common.seed.unwrap_or(0)))
    });
    fs::create_dir_all(&out)?;
    let mut ctx = Context {
        manifest: Manifest::new(name, &out, cli.common.seed),
        common: cli.common,
        out,
    };
    let result = dispatch(&mut ctx, cli.command);
    if let Err(e) = &result {
        ctx.manifest.error = Some(e.to_string());
    }
    ctx.manifest.write(&ctx.out)?;
    result
}

fn dispatch(ctx: &mut Context, command: Command) -> Result<u8> {
    let code = match command {
        Command::SuiteBuild { config } => suite_build(ctx, config.as_deref())?,
        Command::Train {
            phase,
            variant,
            config,
            init,
            attacker,
            adversary,
            no_reconstruction,
            steps,
        } => {
            let init = init.as_deref();
            if phase == 1 {
                train_phase1(ctx, variant, config.as_deref(), init, steps)?
            } else {
                if variant != TrainingVariant::Reactive {
                    return Err(Error::Config(
                        "phase 2 trains the reactive policy only".into(),
                    ));
                }
                let init = init.ok_or_else(|| {
                    Error::Config("phase 2 needs a phase-1 checkpoint (--init)".into())
                })?;
                train_phase2(
                    ctx,
                    config.as_deref(),
                    &init,
                    attacker.as_deref(),
                    adversary,
                    no_reconstruction,
                )?
            }
        }
        Command::Eval {
            suite,
            config,
            checkpoint,
            mode,
            ablate,
            attack_free,
            records,
        } => {
            let mode = ablate.map_or(mode, Ablation::mode);
            let label = ablate.map_or_else(
                || mode.label().to_string(),
                |a| format!("ablation-{}", a.mode().label()),
            );
            match (suite, attack_free) {
                (Some(s), _) => eval_suite(
                    ctx,
                    &s,
                    config.as_deref(),
                    checkpoint.as_deref(),
                    mode,
                    &label,
                    records,
                )?,
                (None, Some(n)) => eval_attack_free(
                    ctx,
                    n,
                    config.as_deref(),
                    checkpoint.as_deref(),
                    mode,
                    &label,
                    records,
                )?,
                (None, None) => {
                    return Err(Error::Config("eval needs --suite or --attack-free".into()))
                }
            }
        }
        Command::Ablate {
            suite,
            checkpoint,
            no_sr_checkpoint,
        } => ablate(ctx, &suite, &checkpoint, no_sr_checkpoint.as_deref())?,
        Command::Fly {
            config,
            checkpoint,
            attacker,
            mode,
        } => fly(
            ctx,
            config.as_deref(),
            checkpoint.as_deref(),
            attacker.as_deref(),
            mode,
        )?,
        Command::Replay {
            record,
            checkpoint,
            attacker,
        } => replay(ctx, &record, checkpoint.as_deref(), attacker.as_deref())?,
    };
    Ok(code)
}

fn suite_build(ctx: &mut Context, config: Option<&Path>) -> Result<u8> {
    let mut cfg: SuiteConfig = read_toml(config)?;
    ctx.manifest.config(config)?;
    cfg.seed = ctx.seed(cfg.seed);
    cfg.sequential |= ctx.common.sequential;
    ctx.scenario(&mut cfg.scenario);
    ctx.manifest.seed = Some(cfg.seed);
    let suite = build_suite(&cfg)?;
    let path = ctx.out.join("suite.json");
    suite.save(&path)?;
    report::write_rejections(&suite, &ctx.out.join("rejected.csv"))?;
    ctx.manifest.output("suite", &path)?;
    println!(
        "suite: {} scripts accepted, {} rejected, {} sensors, T_min {:.2} s, T_max {:.2} s, hash {}",
        suite.entries.len(),
        suite.rejected.len(),
        suite.sensors().len(),
        suite.t_min_s,
        suite.t_max_s,
        suite.hash()?
    );
    Ok(0)
}

fn train_phase1(
    ctx: &mut Context,
    variant: TrainingVariant,
    config: Option<&Path>,
    init: Option<&Path>,
    steps: Option<u64>,
) -> Result<u8> {
    let mut cfg: TrainingConfig = read_toml(config)?;
    ctx.manifest.config(config)?;
    cfg.variant = variant;
    cfg.seed = ctx.seed(cfg.seed);
    cfg.sequential |= ctx.common.sequential;
    if let Some(s) = steps {
        cfg.total_steps = s;
    }
    ctx.scenario(&mut cfg.scenario);
    ctx.manifest.seed = Some(cfg.seed);
    let start = match init {
        Some(p) => {
            ctx.manifest.input("init", p)?;
            Some(load_policy(p)?)
        }
        None => None,
    };
    let (policy, report) = train(&cfg, start)?;
    let path = ctx.out.join("policy.json");
    policy.save(&path)?;
    write_curve_csv(&report, fs::File::create(ctx.out.join("curve.csv"))?)?;
    fs::write(
        ctx.out.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    ctx.manifest.output("policy", &path)?;
    println!(
        "phase 1 ({:?}): {} batches, {} steps, 95% of plateau at {}, policy {}",
        cfg.variant,
        report.curve.len(),
        policy.trained_steps,
        report
            .convergence_step
            .map_or_else(|| "n/a".into(), |s| format!("{s} steps")),
        report.policy_hash
    );
    Ok(0)
}

fn train_phase2(
    ctx: &mut Context,
    config: Option<&Path>,
    init: &Path,
    attacker: Option<&Path>,
    adversary: AdversaryMode,
    no_reconstruction: bool,
) -> Result<u8> {
    let mut cfg: AdversarialConfig = read_toml(config)?;
    ctx.manifest.config(config)?;
    cfg.seed = ctx.seed(cfg.seed);
    cfg.sequential |= ctx.common.sequential;
    cfg.mode = adversary;
    if no_reconstruction {
        cfg.reconstruction = false;
    }
    ctx.scenario(&mut cfg.scenario);
    ctx.manifest.seed = Some(cfg.seed);
    let sg = load_policy(init)?;
    ctx.manifest.input("init", init)?;
    let aa = match attacker {
        Some(p) => {
            ctx.manifest.input("attacker", p)?;
            load_attacker(p)?
        }
        None => AttackAgentParams::new(cfg.seed),
    };
    let (policy, agent, report) = train_adversarial(&cfg, sg, aa)?;
    let policy_path = ctx.out.join("policy.json");
    let agent_path = ctx.out.join("attacker.json");
    policy.save(&policy_path)?;
    agent.save(&agent_path)?;
    write_adversarial_csv(&report, fs::File::create(ctx.out.join("adversarial.csv"))?)?;
    fs::write(
        ctx.out.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    ctx.manifest.output("policy", &policy_path)?;
    ctx.manifest.output("attacker", &agent_path)?;
    println!(
        "phase 2: {} episodes over {} alternations, converged {}, returned alternation {}, policy {}",
        report.curve.len(),
        report.alternations,
        report.converged,
        report.returned_alternation,
        policy.hash()?
    );
    Ok(0)
}

fn eval_suite(
    ctx: &mut Context,
    suite_path: &Path,
    config: Option<&Path>,
    checkpoint: Option<&Path>,
    mode: RecoveryMode,
    label: &str,
    write_records: bool,
) -> Result<u8> {
    let mut suite = load_suite(suite_path)?;
    ctx.manifest.input("suite", suite_path)?;
    if let Some(p) = config {
        let scenario: ScenarioConfig = read_toml(Some(p))?;
        ctx.manifest.config(Some(p))?;
        if scenario != suite.scenario {
            return Err(Error::Config(format!(
                "scenario `{}` does not match the suite's scenario `{}`",
                scenario.id, suite.scenario.id
            )));
        }
    }
    ctx.scenario(&mut suite.scenario);
    let policy = ctx.policy(checkpoint, mode)?;
    let records = evaluate_suite(&suite, mode, policy.as_ref(), ctx.common.sequential)?;
    let metrics = report::write_suite_report(&ctx.out, &suite, label, &records)?;
    if write_records {
        report::write_records(&ctx.out.join("records"), &suite.scenario, &records)?;
    }
    println!("{}", metrics.summary());
    Ok(0)
}

fn eval_attack_free(
    ctx: &mut Context,
    missions: usize,
    config: Option<&Path>,
    checkpoint: Option<&Path>,
    mode: RecoveryMode,
    label: &str,
    write_records: bool,
) -> Result<u8> {
    let mut scenario: ScenarioConfig = read_toml(config)?;
    ctx.manifest.config(config)?;
    scenario.validate()?;
    ctx.scenario(&mut scenario);
    scenario.attack = AttackSource::None;
    scenario.recovery = mode;
    scenario.harness.record_steps = write_records;
    let seed = ctx.seed(scenario.seed);
    ctx.manifest.seed = Some(seed);
    let policy = ctx.policy(checkpoint, mode)?;
    let fly_one = |i: usize| {
        let mut cfg = scenario.clone();
        cfg.seed = mix_seed(seed, 500_000 + i as u64);
        run_mission(&cfg, policy.as_ref(), None)
    };
    let records: Vec<EpisodeRecord> = if ctx.common.sequential {
        (0..missions).map(fly_one).collect::<Result<_>>()?
    } else {
        use rayon::prelude::*;
        (0..missions)
            .into_par_iter()
            .map(fly_one)
            .collect::<Result<_>>()?
    };
    let metrics = report::write_plain_report(&ctx.out, &format!("{label}-attack-free"), &records)?;
    if write_records {
        report::write_records(&ctx.out.join("records"), &scenario, &records)?;
    }
    println!("{}", metrics.summary());
    Ok(0)
}

fn ablate(
    ctx: &mut Context,
    suite_path: &Path,
    checkpoint: &Path,
    no_sr: Option<&Path>,
) -> Result<u8> {
    let mut suite = load_suite(suite_path)?;
    ctx.manifest.input("suite", suite_path)?;
    ctx.scenario(&mut suite.scenario);
    let full = load_policy(checkpoint)?;
    ctx.manifest.input("checkpoint", checkpoint)?;
    let no_sr_policy = match no_sr {
        Some(p) => {
            ctx.manifest.input("no_sr_checkpoint", p)?;
            load_policy(p)?
        }
        None => {
            eprintln!("note: no --no-sr-checkpoint; the no-SR arm flies the full-system policy");
            full.clone()
        }
    };
    let arms: [(&str, RecoveryMode, Option<&PolicyParams>); 4] = [
        ("none", RecoveryMode::None, None),
        ("full", RecoveryMode::Reactive, Some(&full)),
        ("ablation-no-rcp", RecoveryMode::NoRcp, None),
        ("ablation-no-sr", RecoveryMode::NoSr, Some(&no_sr_policy)),
    ];
    let mut rows = Vec::new();
    for (label, mode, policy) in arms {
        let records = evaluate_suite(&suite, mode, policy, ctx.common.sequential)?;
        let dir = ctx.out.join(label);
        fs::create_dir_all(&dir)?;
        let metrics = report::write_suite_report(&dir, &suite, label, &records)?;
        println!("{}", metrics.summary());
        rows.push(metrics);
    }
    report::write_aggregate(&ctx.out.join("ablation.csv"), &rows)?;
    Ok(0)
}

fn fly(
    ctx: &mut Context,
    config: Option<&Path>,
    checkpoint: Option<&Path>,
    attacker: Option<&Path>,
    mode: Option<RecoveryMode>,
) -> Result<u8> {
    let mut scenario: ScenarioConfig = read_toml(config)?;
    ctx.manifest.config(config)?;
    ctx.scenario(&mut scenario);
    scenario.seed = ctx.seed(scenario.seed);
    ctx.manifest.seed = Some(scenario.seed);
    if let Some(m) = mode {
        scenario.recovery = m;
    }
    let policy = ctx.policy(checkpoint, scenario.recovery)?;
    let agent = match attacker {
        Some(p) => {
            ctx.manifest.input("attacker", p)?;
            Some(load_attacker(p)?)
        }
        None => None,
    };
    let record = run_mission(&scenario, policy.as_ref(), agent.as_ref())?;
    let path = ctx.out.join("record.jsonl");
    record.write_jsonl(&scenario, fs::File::create(&path)?)?;
    ctx.manifest.output("record", &path)?;
    report::write_plain_report(
        &ctx.out,
        scenario.recovery.label(),
        std::slice::from_ref(&record),
    )?;
    println!(
        "{} seed {}: {:?}, violated {:?}, final error {:.2} m, {:.1} s",
        scenario.id,
        record.seed,
        record.outcome,
        record.verdict.violated(),
        record.final_error_m,
        record.completion_time_s
    );
    Ok(0)
}

fn replay(
    ctx: &mut Context,
    path: &Path,
    checkpoint: Option<&Path>,
    attacker: Option<&Path>,
) -> Result<u8> {
    let (scenario, stored) = EpisodeRecord::read_jsonl(BufReader::new(fs::File::open(path)?))?;
    ctx.manifest.input("record", path)?;
    ctx.manifest.seed = Some(scenario.seed);
    let policy = ctx.policy(checkpoint, scenario.recovery)?;
    if let (Some(want), Some(p)) = (&stored.policy_hash, &policy) {
        if *want != p.hash()? {
            return Err(Error::Config(
                "checkpoint hash differs from the one that flew the record".into(),
            ));
        }
    }
    let agent = match attacker {
        Some(p) => Some(load_attacker(p)?),
        None if scenario.attack == AttackSource::Agent => {
            return Err(Error::Config(
                "record was flown against an attack agent; pass --attacker".into(),
            ))
        }
        None => None,
    };
    let again = run_mission(&scenario, policy.as_ref(), agent.as_ref())?;
    let identical = serde_json::to_string(&again)? == serde_json::to_string(&stored)?;
    if identical {
        println!("replay identical: {} steps", stored.steps.len());
        Ok(0)
    } else {
        let diverged = again
            .steps
            .iter()
            .zip(&stored.steps)
            .position(|(a, b)| a != b)
            .unwrap_or(again.steps.len().min(stored.steps.len()));
        println!("replay differs from step {diverged}");
        Ok(1)
    }
}
