use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use g2p_core::babbling::BabblingKind;
use g2p_core::kinematics::Condition;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::run_experiment;
use crate::report::report;
use crate::trial::{self, TrialPaths};

#[derive(Debug, Parser)]
#[command(name = "g2p", version, about = "Babbling, inverse-map training and gait trials on a simulated tendon-driven biped")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Naive,
    Natural,
}

impl From<KindArg> for BabblingKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Naive => BabblingKind::Naive,
            KindArg::Natural => BabblingKind::Natural,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "natural")]
    pub kind: KindArg,
    /// Trial directory; defaults to runs/<kind>-seed<seed>.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn kind(&self) -> BabblingKind {
        self.kind.into()
    }

    fn dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(trial::trial_dir_name(self.kind(), self.seed)))
    }

    fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load_or_default(self.config.as_deref())
    }
}

#[derive(Debug, Clone, Args)]
pub struct WithCondition {
    #[command(flatten)]
    pub common: Common,
    /// One condition (1 in air, 2 slight contact, 3 under ground); all
    /// configured conditions when omitted.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub condition: Option<u8>,
}

impl WithCondition {
    fn conditions(&self, cfg: &ExperimentConfig) -> Vec<Condition> {
        match self.condition.and_then(Condition::from_number) {
            Some(c) => vec![c],
            None => cfg.condition_list(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory; defaults to the config's output_dir or runs/experiment.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the two babbling PWM streams of a trial.
    Babble(Common),
    /// Replay a trial's babbling on the hanging biped.
    Rollout(Common),
    /// Train one inverse map per leg on a trial's babbling data.
    Train(Common),
    /// Track the desired loop with a trial's trained nets.
    Track(WithCondition),
    /// Compute spread, walking statistics and DFA for a trial.
    Analyze(WithCondition),
    /// Run the whole pipeline for one trial.
    Trial(WithCondition),
    /// Run every configured trial and summarise.
    Experiment(RunArgs),
    /// Rebuild the summary files of an existing run directory.
    Report {
        /// Run directory holding manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn ok(command: &str, out: &Path, extra: Value) -> Value {
    let mut v = json!({
        "status": "ok",
        "command": command,
        "out": out.display().to_string(),
    });
    if let (Some(obj), Value::Object(more)) = (v.as_object_mut(), extra) {
        obj.extend(more);
    }
    v
}

pub fn execute(cmd: &Command) -> Result<Value> {
    match cmd {
        Command::Babble(c) => {
            let cfg = c.config()?;
            let paths = TrialPaths::new(c.dir());
            let hash = cfg.hash();
            let pwm = trial::babble(&cfg, c.kind(), c.seed)?;
            trial::write_meta(&paths, c.kind(), c.seed, &hash)?;
            trial::write_pwm(&paths, &pwm, &hash)?;
            Ok(ok("babble", &paths.root, json!({ "samples": pwm[0].len() })))
        }
        Command::Rollout(c) => {
            let cfg = c.config()?;
            let paths = TrialPaths::new(c.dir());
            let pwm = trial::read_pwm(&paths, c.seed)?;
            let log = trial::rollout(&cfg, &pwm)?;
            trial::write_log(&paths.babble_log(), &log, &cfg.hash())?;
            let limits: Vec<usize> = (0..2).map(|leg| log.limit_contacts(leg, &cfg.plant.geometry)).collect();
            Ok(ok("rollout", &paths.root, json!({ "samples": log.len(), "limit_contacts": limits })))
        }
        Command::Train(c) => {
            let cfg = c.config()?;
            let paths = TrialPaths::new(c.dir());
            let pwm = trial::read_pwm(&paths, c.seed)?;
            let log = trial::read_log(&paths.babble_log())?;
            let nets = trial::train_nets(&cfg, c.kind(), c.seed, &pwm, &log)?;
            trial::write_nets(&paths, &nets, &cfg.hash())?;
            let mse: Vec<f64> = nets.iter().map(|n| n.history.best_test_mse()).collect();
            Ok(ok("train", &paths.root, json!({ "best_test_mse": mse })))
        }
        Command::Track(w) => {
            let cfg = w.common.config()?;
            let paths = TrialPaths::new(w.common.dir());
            let nets = trial::read_nets(&paths)?;
            let mlps = [nets[0].net.clone(), nets[1].net.clone()];
            let mut done = Vec::new();
            for c in w.conditions(&cfg) {
                let (traj, out) = trial::track(&cfg, &mlps, c)?;
                trial::write_tracking(&paths, &traj, &out, &cfg.hash())?;
                done.push(json!({ "condition": c.number(), "displacement_m": out.displacement }));
            }
            Ok(ok("track", &paths.root, json!({ "conditions": done })))
        }
        Command::Analyze(w) => {
            let cfg = w.common.config()?;
            let hash = cfg.hash();
            let paths = TrialPaths::new(w.common.dir());
            let log = trial::read_log(&paths.babble_log())?;
            let spread = trial::babble_spread(&cfg, &log)?;
            trial::write_spread(&paths, &spread, &hash)?;
            let mut done = Vec::new();
            for c in w.conditions(&cfg) {
                let traj = trial::placed_trajectory(&cfg, c)?;
                let (log, desired) = trial::read_tracking(&paths, c)?;
                let s = trial::analyze_tracking(&cfg, w.common.kind(), w.common.seed, &traj, &log, &desired)?;
                trial::write_analysis(&paths, &s, cfg.tracking_duration, &hash)?;
                done.push(condition_json(&s));
            }
            let ratios: Vec<f64> = spread.iter().map(|s| s.ratio).collect();
            Ok(ok("analyze", &paths.root, json!({ "spread": ratios, "conditions": done })))
        }
        Command::Trial(w) => {
            let cfg = w.common.config()?;
            let dir = w.common.dir();
            let rec = trial::run_trial(&cfg, w.common.kind(), w.common.seed, &w.conditions(&cfg), &dir)?;
            let ratios: Vec<f64> = rec.spread.iter().map(|s| s.ratio).collect();
            let conds: Vec<Value> = rec.conditions.iter().map(condition_json).collect();
            Ok(ok("trial", &dir, json!({ "spread": ratios, "conditions": conds })))
        }
        Command::Experiment(a) => {
            let cfg = ExperimentConfig::load_or_default(a.config.as_deref())?;
            let dir = a
                .out
                .clone()
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("runs/experiment"));
            let r = run_experiment(&cfg, &dir)?;
            Ok(ok("experiment", &dir, json!({ "trials": r.trials.len(), "config_hash": r.config_hash })))
        }
        Command::Report { out } => {
            let r = report(out)?;
            Ok(ok("report", out, json!({ "trials": r.trials.len(), "failed": r.failed.len() })))
        }
    }
}

fn condition_json(s: &trial::ConditionSummary) -> Value {
    json!({
        "condition": s.stats.condition.number(),
        "success": s.stats.success,
        "speed_cm_s": s.stats.speed,
        "rms_mm": s.rms_mm,
        "alpha": s.dfa.iter().map(|d| d.alpha).collect::<Vec<_>>(),
    })
}

/// Parse arguments, run, print a JSON record and return the exit code:
/// 0 on success, 1 when the command fails, 2 for unusable arguments.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(std::io::stdout(), "{e}");
                return 0;
            }
            let rec = json!({
                "status": "error",
                "kind": "Usage",
                "message": e.kind().to_string(),
                "detail": e.to_string().trim_end(),
            });
            let _ = writeln!(std::io::stderr(), "{rec}");
            return 2;
        }
    };
    match execute(&cli.command) {
        Ok(v) => {
            let _ = writeln!(std::io::stdout(), "{v}");
            0
        }
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "{}", HarnessError::record(&e));
            1
        }
    }
}
