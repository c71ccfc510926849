use std::path::{Path, PathBuf};

use g2p_core::analysis::{dfa, endpoint_distance_series, spread, trial_stats, DfaResult, Polygon, SpreadResult, TrialStats};
use g2p_core::babbling::{generate, BabblingKind, PwmSequence};
use g2p_core::kinematics::{desired_trajectory, place_with, Condition, FootPoint, Trajectory};
use g2p_core::net::{train, Checkpoint, Dataset, Mlp, Provenance, TrainConfig};
use g2p_core::plant::{run_open_loop, run_tracking, Environment, KinematicsLog, PlantState, TrackingOutcome, LEGS, LEG_NAMES};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, column, opt, read_rows, write_csv_with, write_rows};
use crate::config::{ExperimentConfig, TrialSeeds};
use crate::error::{HarnessError, Result};

pub const TRIAL_SCHEMA: &str = "g2p.trial.v1";

/// Desired foot path of each leg, one point per tracking tick.
pub type DesiredFeet = [Vec<FootPoint<f64>>; LEGS];

/// Directory name of a trial inside a run directory.
pub fn trial_dir_name(kind: BabblingKind, seed: u64) -> String {
    format!("{}-seed{seed}", kind.name())
}

/// File layout of one trial directory.
#[derive(Debug, Clone)]
pub struct TrialPaths {
    pub root: PathBuf,
}

impl TrialPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn meta(&self) -> PathBuf {
        self.root.join("trial.json")
    }

    pub fn failure(&self) -> PathBuf {
        self.root.join("FAILED.json")
    }

    pub fn pwm(&self, leg: usize) -> PathBuf {
        self.root.join(format!("babble_pwm_{}.csv", LEG_NAMES[leg]))
    }

    pub fn babble_log(&self) -> PathBuf {
        self.root.join("babble_kinematics.csv")
    }

    pub fn net(&self, leg: usize) -> PathBuf {
        self.root.join(format!("net_{}.json", LEG_NAMES[leg]))
    }

    pub fn spread(&self) -> PathBuf {
        self.root.join("spread.csv")
    }

    pub fn condition(&self, c: Condition) -> PathBuf {
        self.root.join(format!("condition{}", c.number()))
    }

    pub fn trajectory(&self, c: Condition) -> PathBuf {
        self.condition(c).join("trajectory.csv")
    }

    pub fn tracking_log(&self, c: Condition) -> PathBuf {
        self.condition(c).join("tracking_kinematics.csv")
    }

    pub fn desired(&self, c: Condition) -> PathBuf {
        self.condition(c).join("desired.csv")
    }

    pub fn commands(&self, c: Condition) -> PathBuf {
        self.condition(c).join("commands.csv")
    }

    pub fn displacement(&self, c: Condition) -> PathBuf {
        self.condition(c).join("displacement.csv")
    }

    pub fn stats(&self, c: Condition) -> PathBuf {
        self.condition(c).join("stats.csv")
    }

    pub fn dfa(&self, c: Condition) -> PathBuf {
        self.condition(c).join("dfa.csv")
    }

    pub fn dfa_curve(&self, c: Condition) -> PathBuf {
        self.condition(c).join("dfa_curve.csv")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub schema: String,
    pub kind: BabblingKind,
    pub seed: u64,
    pub config_hash: String,
}

/// Outcome of tracking one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub stats: TrialStats,
    /// Time-aligned foot error against the desired loop, both legs (mm).
    pub rms_mm: f64,
    pub dfa: Vec<DfaResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub kind: BabblingKind,
    pub seed: u64,
    pub spread: Vec<SpreadResult>,
    pub conditions: Vec<ConditionSummary>,
}

/// Hip-relative desired loop placed for `condition`.
pub fn placed_trajectory(cfg: &ExperimentConfig, condition: Condition) -> Result<Trajectory<f64>> {
    let traj = desired_trajectory(&cfg.plant.geometry, &cfg.shape, cfg.trajectory_samples)?;
    Ok(place_with(&traj, condition, 0.0, &cfg.placement))
}

pub fn babble(cfg: &ExperimentConfig, kind: BabblingKind, seed: u64) -> Result<[PwmSequence; LEGS]> {
    let s = TrialSeeds::new(seed);
    let gen = |seed| generate(kind, cfg.babble_duration, cfg.sample_rate(), seed, &cfg.naive, &cfg.natural);
    Ok([gen(s.babble_left)?, gen(s.babble_right)?])
}

/// Replay babbling on the hanging biped.
pub fn rollout(cfg: &ExperimentConfig, pwm: &[PwmSequence; LEGS]) -> Result<KinematicsLog<f64>> {
    let start = PlantState::hanging(Environment::in_air(1.0));
    Ok(run_open_loop(&start, &pwm[0], &pwm[1], &cfg.plant)?)
}

pub fn train_nets(
    cfg: &ExperimentConfig,
    kind: BabblingKind,
    seed: u64,
    pwm: &[PwmSequence; LEGS],
    log: &KinematicsLog<f64>,
) -> Result<[Checkpoint<f64>; LEGS]> {
    let config = TrainConfig {
        seed: TrialSeeds::new(seed).train,
        ..cfg.net
    };
    let mut out = Vec::with_capacity(LEGS);
    for leg in 0..LEGS {
        let mut data = Dataset::from_babbling(log, &pwm[leg], leg, kind)?;
        data.provenance = Some(Provenance { kind, seed, leg });
        let (net, history) = train(&data, &config)?;
        out.push(Checkpoint::new(net, config, history, data.provenance));
    }
    Ok(out.try_into().expect("one checkpoint per leg"))
}

pub fn track(cfg: &ExperimentConfig, nets: &[Mlp<f64>; LEGS], condition: Condition) -> Result<(Trajectory<f64>, TrackingOutcome<f64>)> {
    let traj = placed_trajectory(cfg, condition)?;
    let out = run_tracking(&nets[0], &nets[1], &traj, cfg.tracking_duration, &cfg.plant)?;
    Ok((traj, out))
}

pub fn babble_spread(cfg: &ExperimentConfig, log: &KinematicsLog<f64>) -> Result<Vec<SpreadResult>> {
    let region = Polygon::from_trajectory(&placed_trajectory(cfg, Condition::InAir)?);
    (0..LEGS)
        .map(|leg| {
            let points: Vec<FootPoint<f64>> = log.feet(leg).collect();
            Ok(spread(&points, &region)?)
        })
        .collect()
}

/// Samples dropped from the start of a tracking log before analysis.
pub fn warmup_samples(cfg: &ExperimentConfig, traj: &Trajectory<f64>) -> usize {
    (traj.period * cfg.sample_rate()).round() as usize
}

pub fn analyze_tracking(
    cfg: &ExperimentConfig,
    kind: BabblingKind,
    seed: u64,
    traj: &Trajectory<f64>,
    log: &KinematicsLog<f64>,
    desired: &DesiredFeet,
) -> Result<ConditionSummary> {
    let stats = trial_stats(&log.hip_x, cfg.sample_rate(), traj.condition, kind, seed);
    let skip = warmup_samples(cfg, traj);
    let (mut se, mut count) = (0.0, 0usize);
    for leg in 0..LEGS {
        for (a, d) in log.feet(leg).zip(&desired[leg]).skip(skip) {
            se += a.distance(d).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Err(HarnessError::Config("tracking_duration is shorter than one gait period".into()));
    }
    let series = endpoint_distance_series(log);
    let dfa = series
        .iter()
        .map(|s| dfa(&s[skip.min(s.len())..], &cfg.dfa))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(ConditionSummary {
        stats,
        rms_mm: (se / count as f64).sqrt() * 1000.0,
        dfa,
    })
}

pub fn write_meta(paths: &TrialPaths, kind: BabblingKind, seed: u64, hash: &str) -> Result<()> {
    let meta = TrialMeta {
        schema: TRIAL_SCHEMA.to_string(),
        kind,
        seed,
        config_hash: hash.to_string(),
    };
    artifacts::write_json(&paths.meta(), &meta)
}

pub fn write_pwm(paths: &TrialPaths, pwm: &[PwmSequence; LEGS], hash: &str) -> Result<()> {
    for (leg, seq) in pwm.iter().enumerate() {
        write_csv_with(&paths.pwm(leg), hash, |buf| Ok(seq.write_csv(buf)?))?;
    }
    Ok(())
}

pub fn read_pwm(paths: &TrialPaths, seed: u64) -> Result<[PwmSequence; LEGS]> {
    let s = TrialSeeds::new(seed);
    let read = |leg: usize, seed: u64| -> Result<PwmSequence> {
        let path = paths.pwm(leg);
        PwmSequence::read_csv(artifacts::open(&path)?, seed).map_err(|e| HarnessError::artifact(&path, e))
    };
    Ok([read(0, s.babble_left)?, read(1, s.babble_right)?])
}

pub fn write_log(path: &Path, log: &KinematicsLog<f64>, hash: &str) -> Result<()> {
    write_csv_with(path, hash, |buf| Ok(log.write_csv(buf)?))
}

pub fn read_log(path: &Path) -> Result<KinematicsLog<f64>> {
    KinematicsLog::read_csv(artifacts::open(path)?).map_err(|e| HarnessError::artifact(path, e))
}

#[derive(Serialize, Deserialize)]
struct StoredCheckpoint {
    config_hash: String,
    checkpoint: Checkpoint<f64>,
}

pub fn write_nets(paths: &TrialPaths, nets: &[Checkpoint<f64>; LEGS], hash: &str) -> Result<()> {
    for (leg, ck) in nets.iter().enumerate() {
        let stored = StoredCheckpoint {
            config_hash: hash.to_string(),
            checkpoint: ck.clone(),
        };
        artifacts::write_json(&paths.net(leg), &stored)?;
    }
    Ok(())
}

pub fn read_nets(paths: &TrialPaths) -> Result<[Checkpoint<f64>; LEGS]> {
    let read = |leg: usize| -> Result<Checkpoint<f64>> {
        let path = paths.net(leg);
        let stored: serde_json::Value = artifacts::read_json(&path)?;
        let inner = stored
            .get("checkpoint")
            .ok_or_else(|| HarnessError::artifact(&path, "no `checkpoint` entry"))?;
        let text = serde_json::to_vec(inner).map_err(|e| HarnessError::artifact(&path, e))?;
        Checkpoint::read_json(text.as_slice()).map_err(|e| HarnessError::artifact(&path, e))
    };
    Ok([read(0)?, read(1)?])
}

pub fn write_spread(paths: &TrialPaths, spread: &[SpreadResult], hash: &str) -> Result<()> {
    let rows = spread.iter().enumerate().map(|(leg, s)| {
        vec![
            LEG_NAMES[leg].to_string(),
            s.ratio.to_string(),
            s.occupied.to_string(),
            s.total.to_string(),
        ]
    });
    write_rows(&paths.spread(), hash, &["leg", "ratio", "occupied", "total"], rows)
}

pub fn read_spread_ratios(paths: &TrialPaths) -> Result<Vec<f64>> {
    let path = paths.spread();
    let (h, rows) = read_rows(&path)?;
    column(&path, &h, &rows, "ratio")
}

/// Persist the raw tracking outputs of one condition.
pub fn write_tracking(
    paths: &TrialPaths,
    traj: &Trajectory<f64>,
    out: &TrackingOutcome<f64>,
    hash: &str,
) -> Result<()> {
    let c = traj.condition;
    write_csv_with(&paths.trajectory(c), hash, |buf| Ok(traj.write_csv(buf)?))?;
    write_log(&paths.tracking_log(c), &out.log, hash)?;
    write_csv_with(&paths.displacement(c), hash, |buf| Ok(out.log.write_displacement_csv(buf)?))?;
    let rate = out.log.sample_rate;
    let n = out.log.len();
    let time = |i: usize| (i as f64 / rate).to_string();
    let desired = (0..n).flat_map(|i| {
        (0..LEGS).map(move |leg| {
            let p = out.desired[leg][i];
            vec![time(i), LEG_NAMES[leg].to_string(), p.x.to_string(), p.z.to_string()]
        })
    });
    write_rows(&paths.desired(c), hash, &["t_s", "leg", "x_m", "z_m"], desired)?;
    let commands = (0..n).flat_map(|i| {
        (0..LEGS).map(move |leg| {
            let [a, b, m] = out.commands[leg][i];
            vec![time(i), LEG_NAMES[leg].to_string(), a.to_string(), b.to_string(), m.to_string()]
        })
    });
    write_rows(&paths.commands(c), hash, &["t_s", "leg", "m1", "m2", "m3"], commands)
}

/// Tracking log with its hip track and the desired feet, as persisted.
pub fn read_tracking(paths: &TrialPaths, c: Condition) -> Result<(KinematicsLog<f64>, DesiredFeet)> {
    let mut log = read_log(&paths.tracking_log(c))?;
    let path = paths.displacement(c);
    let (h, rows) = read_rows(&path)?;
    let hip_x: Vec<f64> = column(&path, &h, &rows, "hip_x_m")?;
    if hip_x.len() != log.len() {
        return Err(HarnessError::artifact(&path, "length differs from the tracking log"));
    }
    log.hip_x = hip_x;
    let path = paths.desired(c);
    let (h, rows) = read_rows(&path)?;
    let legs: Vec<String> = column(&path, &h, &rows, "leg")?;
    let xs: Vec<f64> = column(&path, &h, &rows, "x_m")?;
    let zs: Vec<f64> = column(&path, &h, &rows, "z_m")?;
    let mut desired: DesiredFeet = Default::default();
    for ((leg, x), z) in legs.iter().zip(xs).zip(zs) {
        let i = LEG_NAMES
            .iter()
            .position(|n| n == leg)
            .ok_or_else(|| HarnessError::artifact(&path, format!("unknown leg `{leg}`")))?;
        desired[i].push(FootPoint::new(x, z));
    }
    if desired.iter().any(|d| d.len() != log.len()) {
        return Err(HarnessError::artifact(&path, "length differs from the tracking log"));
    }
    Ok((log, desired))
}

pub const STATS_HEADER: [&str; 9] = [
    "kind",
    "seed",
    "condition",
    "success",
    "travel_time_s",
    "speed_cm_s",
    "final_displacement_m",
    "rms_mm",
    "duration_s",
];

pub fn write_analysis(paths: &TrialPaths, summary: &ConditionSummary, duration: f64, hash: &str) -> Result<()> {
    let s = &summary.stats;
    let c = s.condition;
    let row = vec![
        s.kind.name().to_string(),
        s.seed.to_string(),
        c.number().to_string(),
        u8::from(s.success).to_string(),
        opt(s.travel_time),
        opt(s.speed),
        s.final_displacement.to_string(),
        summary.rms_mm.to_string(),
        duration.to_string(),
    ];
    write_rows(&paths.stats(c), hash, &STATS_HEADER, [row])?;
    let rows = summary.dfa.iter().enumerate().map(|(leg, d)| {
        vec![LEG_NAMES[leg].to_string(), d.alpha.to_string(), d.fit_r2.to_string()]
    });
    write_rows(&paths.dfa(c), hash, &["leg", "alpha", "fit_r2"], rows)?;
    let curve = summary.dfa.iter().enumerate().flat_map(|(leg, d)| {
        d.scales
            .iter()
            .zip(&d.fluctuations)
            .map(move |(s, f)| vec![LEG_NAMES[leg].to_string(), s.to_string(), f.to_string()])
    });
    write_rows(&paths.dfa_curve(c), hash, &["leg", "scale", "fluctuation"], curve)
}

/// Stats row and DFA exponents of one condition, as persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredCondition {
    pub condition: Condition,
    pub success: bool,
    pub travel_time: Option<f64>,
    pub speed: Option<f64>,
    pub final_displacement: f64,
    pub rms_mm: f64,
    pub alphas: Vec<f64>,
    pub fit_r2: Vec<f64>,
}

pub fn read_analysis(paths: &TrialPaths, c: Condition) -> Result<StoredCondition> {
    let path = paths.stats(c);
    let (h, rows) = read_rows(&path)?;
    if rows.len() != 1 {
        return Err(HarnessError::artifact(&path, "expected exactly one row"));
    }
    let get = |name: &str| -> Result<String> { Ok(column::<String>(&path, &h, &rows, name)?.remove(0)) };
    let num = |name: &str| -> Result<Option<f64>> {
        let v = get(name)?;
        if v.is_empty() {
            return Ok(None);
        }
        v.parse().map(Some).map_err(|e| HarnessError::artifact(&path, format!("{name}: {e}")))
    };
    let required = |name: &str| num(name)?.ok_or_else(|| HarnessError::artifact(&path, format!("{name} is empty")));
    let stored = StoredCondition {
        condition: c,
        success: get("success")? == "1",
        travel_time: num("travel_time_s")?,
        speed: num("speed_cm_s")?,
        final_displacement: required("final_displacement_m")?,
        rms_mm: required("rms_mm")?,
        alphas: Vec::new(),
        fit_r2: Vec::new(),
    };
    let path = paths.dfa(c);
    let (h, rows) = read_rows(&path)?;
    Ok(StoredCondition {
        alphas: column(&path, &h, &rows, "alpha")?,
        fit_r2: column(&path, &h, &rows, "fit_r2")?,
        ..stored
    })
}

/// Babble, replay, train both legs and track every requested condition,
/// persisting each artifact under `dir` as it is produced. On failure a
/// `FAILED.json` record is left next to whatever was written.
pub fn run_trial(
    cfg: &ExperimentConfig,
    kind: BabblingKind,
    seed: u64,
    conditions: &[Condition],
    dir: &Path,
) -> Result<TrialRecord> {
    let paths = TrialPaths::new(dir);
    let _ = std::fs::remove_file(paths.failure());
    let result = run_trial_inner(cfg, kind, seed, conditions, &paths);
    if let Err(e) = &result {
        artifacts::write_json(&paths.failure(), &e.record())?;
    }
    result
}

fn run_trial_inner(
    cfg: &ExperimentConfig,
    kind: BabblingKind,
    seed: u64,
    conditions: &[Condition],
    paths: &TrialPaths,
) -> Result<TrialRecord> {
    cfg.validate()?;
    let hash = cfg.hash();
    artifacts::ensure_dir(&paths.root)?;
    write_meta(paths, kind, seed, &hash)?;
    let pwm = babble(cfg, kind, seed)?;
    write_pwm(paths, &pwm, &hash)?;
    let log = rollout(cfg, &pwm)?;
    write_log(&paths.babble_log(), &log, &hash)?;
    let spread = babble_spread(cfg, &log)?;
    write_spread(paths, &spread, &hash)?;
    let nets = train_nets(cfg, kind, seed, &pwm, &log)?;
    write_nets(paths, &nets, &hash)?;
    let mlps = [nets[0].net.clone(), nets[1].net.clone()];
    let mut summaries = Vec::with_capacity(conditions.len());
    for &c in conditions {
        let (traj, out) = track(cfg, &mlps, c)?;
        write_tracking(paths, &traj, &out, &hash)?;
        let summary = analyze_tracking(cfg, kind, seed, &traj, &out.log, &out.desired)?;
        write_analysis(paths, &summary, cfg.tracking_duration, &hash)?;
        summaries.push(summary);
    }
    Ok(TrialRecord {
        kind,
        seed,
        spread,
        conditions: summaries,
    })
}
