//! Command-line front end: `synth`, `validate`, `train`, `run` and `compare`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::env::{EnvConfig, MarketConfig, MarketMode};
use crate::error::{Error, Result};
use crate::market::ClearingOptions;
use crate::profiles::{load_scenario, synthesize_scenario, write_scenario, ProfileShape, HOURS_PER_DAY};
use crate::rl::{
    self, fixture_env, load_checkpoint, save_checkpoint, write_learning_curve, Algorithm, EpisodeEnv, Features,
    TrainConfig,
};
use crate::rulebased::NightPrecedence;
use crate::sim::{self, Ablations, Controller, PolicyKind, RunConfig, Variant};

/// Exit code for errors in inputs: missing files, malformed scenarios,
/// bad configs or checkpoints.
pub const EXIT_INPUT: u8 = 3;
/// Exit code for failures during simulation or training.
pub const EXIT_RUNTIME: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "dairy-p2p", version, about = "Peer-to-peer energy trading simulator for dairy-farm communities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scenario directory.
    Synth(SynthArgs),
    /// Check a scenario and print a summary.
    Validate(ValidateArgs),
    /// Train a shared policy and write a checkpoint and learning curve.
    Train(TrainArgs),
    /// Simulate one configuration and write its ledger and hourly trace.
    Run(RunArgs),
    /// Run several configurations and write a comparison report.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of farms.
    #[arg(long, default_value_t = 10)]
    pub agents: usize,
    /// Number of days of hourly profiles.
    #[arg(long, default_value_t = 365)]
    pub days: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// TOML file overriding the profile shape.
    #[arg(long)]
    pub shape: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Scenario directory or scenario TOML file.
    #[arg(long)]
    pub scenario: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    #[value(alias = "q")]
    Qtable,
    Dqn,
    Ppo,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Qtable => Algorithm::Q,
            AlgoArg::Dqn => Algorithm::Dqn,
            AlgoArg::Ppo => Algorithm::Ppo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Rulebased,
    Qtable,
    Dqn,
    Ppo,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Rulebased => PolicyKind::RuleBased,
            PolicyArg::Qtable => PolicyKind::QTable,
            PolicyArg::Dqn => PolicyKind::Dqn,
            PolicyArg::Ppo => PolicyKind::Ppo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    P2p,
    Gridonly,
}

impl From<ModeArg> for MarketMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::P2p => MarketMode::P2p,
            ModeArg::Gridonly => MarketMode::GridOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AblateArg {
    Advisor,
    Priming,
    Dairy,
}

impl AblateArg {
    fn apply(self, a: &mut Ablations) {
        match self {
            AblateArg::Advisor => a.advisor_on = false,
            AblateArg::Priming => a.priming_on = false,
            AblateArg::Dairy => a.dairy_constraints_on = false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecedenceArg {
    ChargeFirst,
    BuyOnlyFirst,
}

impl From<PrecedenceArg> for NightPrecedence {
    fn from(p: PrecedenceArg) -> Self {
        match p {
            PrecedenceArg::ChargeFirst => NightPrecedence::ChargeFirst,
            PrecedenceArg::BuyOnlyFirst => NightPrecedence::BuyOnlyFirst,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Scenario to train on.
    #[arg(long, required_unless_present = "fixture", conflicts_with = "fixture")]
    pub scenario: Option<PathBuf>,
    /// Train on the built-in single-farm 24-hour fixture.
    #[arg(long)]
    pub fixture: bool,
    #[arg(long, value_enum)]
    pub algo: AlgoArg,
    /// Training episodes; overrides the config file.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Hours per episode.
    #[arg(long, default_value_t = 24)]
    pub episode_hours: usize,
    /// TOML file with hyperparameters for the chosen algorithm.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training seed; overrides the config file (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Component to disable while training; repeatable or comma-separated.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub ablate: Vec<AblateArg>,
    /// Also match order pairs whose bid is below the ask.
    #[arg(long)]
    pub strict_paper_mode: bool,
    /// Output directory for `policy.json` and `curve.csv`.
    #[arg(short, long)]
    pub out: PathBuf,
}

/// Flags shared by `run` and `compare`.
#[derive(Debug, Args)]
pub struct SimArgs {
    /// Scenario directory or scenario TOML file.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value = "rulebased")]
    pub policy: PolicyArg,
    /// Policy checkpoint, required for learned policies.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Simulate only the first N hours (a multiple of 24).
    #[arg(long)]
    pub hours: Option<usize>,
    /// Also match order pairs whose bid is below the ask.
    #[arg(long)]
    pub strict_paper_mode: bool,
    /// Which rule wins at night when SoC is between the reserve and 50%.
    #[arg(long, value_enum, default_value = "charge-first")]
    pub night_precedence: PrecedenceArg,
    /// Retrain the learned policy on each (ablated) scenario first.
    #[arg(long, requires = "checkpoint")]
    pub retrain: bool,
    /// Episodes used when retraining.
    #[arg(long, requires = "retrain")]
    pub retrain_episodes: Option<usize>,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, value_enum, default_value = "p2p")]
    pub mode: ModeArg,
    /// Component to disable; repeatable or comma-separated.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub ablate: Vec<AblateArg>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Market modes to run each variant in.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "gridonly,p2p")]
    pub modes: Vec<ModeArg>,
    /// Add one variant per listed component with that component disabled.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub ablate: Vec<AblateArg>,
    /// Runs executed at once.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Also write `comparison.md` and print it.
    #[arg(long)]
    pub markdown: bool,
}

/// Files written only once a command has fully succeeded.
///
/// Artifacts are staged in a sibling directory and moved into place at
/// commit; a dropped, uncommitted set leaves nothing behind.
struct Staging {
    out: PathBuf,
    dir: PathBuf,
    committed: bool,
}

impl Staging {
    fn new(out: &Path) -> Result<Self> {
        let name = out
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        let parent = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let dir = parent.join(format!(".{name}.staging-{}", std::process::id()));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            out: out.to_path_buf(),
            dir,
            committed: false,
        })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn commit(mut self) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let mut written = Vec::new();
        let entries = fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.dir, e))?;
            let target = self.out.join(entry.file_name());
            fs::rename(entry.path(), &target).map_err(|e| Error::io(&target, e))?;
            written.push(target);
        }
        written.sort();
        self.committed = true;
        let _ = fs::remove_dir_all(&self.dir);
        Ok(written)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Diverged { .. }
        | Error::HorizonExceeded { .. }
        | Error::Order { .. }
        | Error::NegativeEnergy(_) => EXIT_RUNTIME,
        _ => EXIT_INPUT,
    }
}

/// Parse `args` (including the program name) and execute the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().filter_or("DAIRY_P2P_LOG", "warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Validate(a) => validate(a),
        Command::Train(a) => train(a),
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn synth(a: SynthArgs) -> Result<()> {
    let shape: ProfileShape = match &a.shape {
        Some(p) => read_toml(p)?,
        None => ProfileShape::default(),
    };
    let scenario = synthesize_scenario(a.agents, a.days, a.seed, &shape)?;
    let staging = Staging::new(&a.out)?;
    write_scenario(&scenario, &staging.dir)?;
    for p in staging.commit()? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let s = load_scenario(&a.scenario)?;
    let load: f64 = s.loads.values().map(|v| v.total()).sum();
    let pv: f64 = s.generation.values().map(|v| v.total()).sum();
    println!(
        "ok: {} agents, {} hours ({} days), seed {}, load {:.1} kWh, generation {:.1} kWh",
        s.fleet.len(),
        s.horizon_hours,
        s.horizon_hours / HOURS_PER_DAY,
        s.rng_seed,
        load,
        pv
    );
    Ok(())
}

fn train_config(algo: Algorithm, file: Option<&Path>) -> Result<TrainConfig> {
    Ok(match (algo, file) {
        (_, None) => TrainConfig::default_for(algo),
        (Algorithm::Q, Some(p)) => TrainConfig::Q(read_toml(p)?),
        (Algorithm::Dqn, Some(p)) => TrainConfig::Dqn(read_toml(p)?),
        (Algorithm::Ppo, Some(p)) => TrainConfig::Ppo(read_toml(p)?),
    })
}

fn train(a: TrainArgs) -> Result<()> {
    let mut ablations = Ablations::default();
    a.ablate.iter().for_each(|x| x.apply(&mut ablations));
    let mut cfg = train_config(a.algo.into(), a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.set_seed(seed);
    }
    if let Some(n) = a.episodes {
        cfg.set_episodes(n);
    }
    let (mut env, features) = match &a.scenario {
        Some(path) => {
            let mut scenario = load_scenario(path)?;
            if !ablations.dairy_constraints_on {
                scenario = scenario.with_flat_loads();
            }
            let features = Features::for_scenario(&scenario);
            let env_cfg = EnvConfig {
                priming_on: ablations.priming_on,
                ..EnvConfig::default()
            };
            let market = MarketConfig {
                mode: MarketMode::P2p,
                advisor_on: ablations.advisor_on,
                clearing: ClearingOptions {
                    strict_paper_mode: a.strict_paper_mode,
                },
            };
            (EpisodeEnv::new(scenario, env_cfg, market, a.episode_hours)?, features)
        }
        None => {
            let env = fixture_env();
            let features = Features::for_scenario(env.inner().scenario());
            (env, features)
        }
    };
    let outcome = rl::train(&mut env, features, &cfg)?;
    let staging = Staging::new(&a.out)?;
    save_checkpoint(&staging.path("policy.json"), &outcome.policy, Some(&cfg))?;
    write_learning_curve(&staging.path("curve.csv"), &outcome.curve, Some(&cfg))?;
    println!(
        "trained {} for {} episodes; mean reward over the last 10%: {:.3}",
        outcome.policy.algorithm().name(),
        outcome.curve.len(),
        rl::tail_mean(&outcome.curve, (outcome.curve.len() / 10).max(1))
    );
    for p in staging.commit()? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn controller(sim: &SimArgs) -> Result<Controller> {
    let kind: PolicyKind = sim.policy.into();
    if kind == PolicyKind::RuleBased {
        if sim.checkpoint.is_some() {
            return Err(Error::Checkpoint("--checkpoint is only used with learned policies".into()));
        }
        return Ok(Controller::RuleBased);
    }
    let path = sim
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Checkpoint(format!("--policy {:?} needs --checkpoint", sim.policy)))?;
    let policy = load_checkpoint(path)?;
    if PolicyKind::of(&policy) != kind {
        return Err(Error::Checkpoint(format!(
            "{} holds a {} policy, not {:?}",
            path.display(),
            policy.algorithm().name(),
            sim.policy
        )));
    }
    let train = sim.retrain.then(|| {
        let mut t = TrainConfig::default_for(policy.algorithm());
        if let Some(n) = sim.retrain_episodes {
            t.set_episodes(n);
        }
        t
    });
    Ok(Controller::Learned { policy, train })
}

fn base_config(sim: &SimArgs, mode: MarketMode) -> RunConfig {
    RunConfig {
        mode,
        policy: sim.policy.into(),
        ablations: Ablations::default(),
        horizon_hours: sim.hours,
        seed: sim.seed,
        strict_paper_mode: sim.strict_paper_mode,
        night_precedence: sim.night_precedence.into(),
        retrain: sim.retrain,
    }
}

fn run(a: RunArgs) -> Result<()> {
    let scenario = load_scenario(&a.sim.scenario)?;
    let controller = controller(&a.sim)?;
    let mut cfg = base_config(&a.sim, a.mode.into());
    a.ablate.iter().for_each(|x| x.apply(&mut cfg.ablations));
    let report = sim::run(&scenario, &controller, &cfg)?;
    if !report.ledger.totals.is_finite() {
        return Err(Error::Diverged {
            step: report.horizon_hours,
            message: "non-finite KPI totals".into(),
        });
    }
    let staging = Staging::new(&a.sim.out)?;
    sim::write_report_json(&staging.path("ledger.json"), &report)?;
    sim::write_trace_csv(&staging.path("trace.csv"), &report)?;
    sim::write_trades_csv(&staging.path("trades.csv"), &report)?;
    let t = report.ledger.totals;
    println!(
        "cost {:.2} EUR, revenue {:.2} EUR, peak-hour grid demand {:.2} kWh",
        t.cost_bought_eur, t.revenue_sold_eur, t.peak_hour_demand_kwh
    );
    for p in staging.commit()? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let scenario = load_scenario(&a.sim.scenario)?;
    let controller = controller(&a.sim)?;
    let base = base_config(&a.sim, MarketMode::P2p);
    let mut variants = vec![Variant {
        label: "full".into(),
        config: base,
    }];
    for x in &a.ablate {
        let mut c = base;
        x.apply(&mut c.ablations);
        variants.push(Variant {
            label: c.ablations.label(),
            config: c,
        });
    }
    let mut modes: Vec<MarketMode> = Vec::new();
    for m in &a.modes {
        let m = MarketMode::from(*m);
        if !modes.contains(&m) {
            modes.push(m);
        }
    }
    let report = sim::compare(&scenario, &controller, &variants, &modes, a.jobs)?;
    let staging = Staging::new(&a.sim.out)?;
    let json = report.to_json()?;
    let path = staging.path("comparison.json");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    if a.markdown {
        let md = report.to_markdown();
        let path = staging.path("comparison.md");
        fs::write(&path, &md).map_err(|e| Error::io(&path, e))?;
        print!("{md}");
    }
    for p in staging.commit()? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
