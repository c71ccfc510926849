use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use g2p_core::analysis::two_sample_test;
use g2p_core::babbling::BabblingKind;
use g2p_core::kinematics::Condition;
use g2p_core::plant::LEG_NAMES;
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, opt, write_rows};
use crate::error::{HarnessError, Result};
use crate::trial::{read_analysis, read_spread_ratios, StoredCondition, TrialPaths};

pub const RUN_SCHEMA: &str = "g2p.run.v1";
pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const SUMMARY_TRIALS: &str = "summary_trials.csv";
pub const SUMMARY_SPREAD: &str = "summary_spread.csv";
pub const SUMMARY_DFA: &str = "summary_dfa.csv";
pub const SUMMARY_GROUPS: &str = "summary_groups.csv";
pub const SUMMARY_TESTS: &str = "summary_tests.csv";
pub const REPORT_TEXT: &str = "report.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTrial {
    pub kind: BabblingKind,
    pub seed: u64,
    pub dir: String,
    pub status: TrialStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<serde_json::Value>,
}

/// Names of the files inside each trial directory. `{leg}` is `left` or
/// `right` and `{n}` is the condition number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFiles {
    pub meta: String,
    pub babble_pwm: String,
    pub babble_kinematics: String,
    pub net: String,
    pub spread: String,
    pub condition_dir: String,
    pub trajectory: String,
    pub tracking_kinematics: String,
    pub desired: String,
    pub commands: String,
    pub displacement: String,
    pub stats: String,
    pub dfa: String,
    pub dfa_curve: String,
    pub failure: String,
}

impl Default for TrialFiles {
    fn default() -> Self {
        let s = |v: &str| v.to_string();
        Self {
            meta: s("trial.json"),
            babble_pwm: s("babble_pwm_{leg}.csv"),
            babble_kinematics: s("babble_kinematics.csv"),
            net: s("net_{leg}.json"),
            spread: s("spread.csv"),
            condition_dir: s("condition{n}"),
            trajectory: s("trajectory.csv"),
            tracking_kinematics: s("tracking_kinematics.csv"),
            desired: s("desired.csv"),
            commands: s("commands.csv"),
            displacement: s("displacement.csv"),
            stats: s("stats.csv"),
            dfa: s("dfa.csv"),
            dfa_curve: s("dfa_curve.csv"),
            failure: s("FAILED.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub config_hash: String,
    pub config: String,
    pub kinds: Vec<BabblingKind>,
    pub conditions: Vec<u8>,
    pub trials: Vec<ManifestTrial>,
    pub trial_files: TrialFiles,
    pub summary_files: Vec<String>,
}

impl Manifest {
    pub fn new(config_hash: String, kinds: Vec<BabblingKind>, conditions: Vec<u8>, trials: Vec<ManifestTrial>) -> Self {
        Self {
            schema: RUN_SCHEMA.to_string(),
            config_hash,
            config: CONFIG_SNAPSHOT.to_string(),
            kinds,
            conditions,
            trials,
            trial_files: TrialFiles::default(),
            summary_files: [SUMMARY_TRIALS, SUMMARY_SPREAD, SUMMARY_DFA, SUMMARY_GROUPS, SUMMARY_TESTS, REPORT_TEXT]
                .map(str::to_string)
                .to_vec(),
        }
    }

    pub fn read(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST);
        let m: Self = artifacts::read_json(&path)?;
        if m.schema != RUN_SCHEMA {
            return Err(HarnessError::artifact(&path, format!("unknown schema `{}`", m.schema)));
        }
        Ok(m)
    }

    pub fn write(&self, run_dir: &Path) -> Result<()> {
        artifacts::write_json(&run_dir.join(MANIFEST), self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTrial {
    pub kind: BabblingKind,
    pub seed: u64,
    pub spread: Vec<f64>,
    pub conditions: Vec<StoredCondition>,
}

impl LoadedTrial {
    pub fn condition(&self, c: Condition) -> Option<&StoredCondition> {
        self.conditions.iter().find(|s| s.condition == c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub kind: BabblingKind,
    pub condition: u8,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean over successful trials only.
    pub mean_speed_cm_s: Option<f64>,
    pub mean_rms_mm: f64,
    pub mean_alpha: f64,
    /// Sample variance over all leg series.
    pub alpha_variance: f64,
    pub mean_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRow {
    pub comparison: String,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub run_dir: PathBuf,
    pub config_hash: String,
    pub trials: Vec<LoadedTrial>,
    pub failed: Vec<ManifestTrial>,
    pub groups: Vec<GroupSummary>,
    pub tests: Vec<TestRow>,
}

impl RunReport {
    pub fn group(&self, kind: BabblingKind, c: Condition) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.kind == kind && g.condition == c.number())
    }

    /// Leg-series DFA exponents of every loaded trial of `kind` under `c`.
    pub fn alphas(&self, kind: BabblingKind, c: Condition) -> Vec<f64> {
        self.trials
            .iter()
            .filter(|t| t.kind == kind)
            .filter_map(|t| t.condition(c))
            .flat_map(|s| s.alphas.iter().copied())
            .collect()
    }

    pub fn test(&self, comparison: &str) -> Option<&TestRow> {
        self.tests.iter().find(|t| t.comparison == comparison)
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sample_variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Comparison label used in the tests table.
pub fn alpha_comparison(kind: BabblingKind, a: Condition, b: Condition) -> String {
    format!("{} alpha condition {} vs condition {}", kind.name(), a.number(), b.number())
}

pub fn kind_comparison(c: Condition) -> String {
    format!("condition {} alpha natural vs naive", c.number())
}

/// Read every successful trial listed in the run manifest.
pub fn load_run(run_dir: &Path) -> Result<RunReport> {
    let manifest = Manifest::read(run_dir)?;
    let conditions: Vec<Condition> = manifest.conditions.iter().filter_map(|c| Condition::from_number(*c)).collect();
    let mut trials = Vec::new();
    let mut failed = Vec::new();
    for t in &manifest.trials {
        if t.status == TrialStatus::Failed {
            failed.push(t.clone());
            continue;
        }
        let paths = TrialPaths::new(run_dir.join(&t.dir));
        let spread = read_spread_ratios(&paths)?;
        let conds = conditions
            .iter()
            .map(|&c| read_analysis(&paths, c))
            .collect::<Result<Vec<_>>>()?;
        trials.push(LoadedTrial {
            kind: t.kind,
            seed: t.seed,
            spread,
            conditions: conds,
        });
    }
    let mut report = RunReport {
        run_dir: run_dir.to_path_buf(),
        config_hash: manifest.config_hash.clone(),
        trials,
        failed,
        groups: Vec::new(),
        tests: Vec::new(),
    };
    for &kind in &manifest.kinds {
        let of_kind: Vec<&LoadedTrial> = report.trials.iter().filter(|t| t.kind == kind).collect();
        let spreads: Vec<f64> = of_kind.iter().flat_map(|t| t.spread.iter().copied()).collect();
        for &c in &conditions {
            let rows: Vec<&StoredCondition> = of_kind.iter().filter_map(|t| t.condition(c)).collect();
            let successes = rows.iter().filter(|r| r.success).count();
            let speeds: Vec<f64> = rows.iter().filter_map(|r| r.speed).collect();
            let rms: Vec<f64> = rows.iter().map(|r| r.rms_mm).collect();
            let alphas = report.alphas(kind, c);
            report.groups.push(GroupSummary {
                kind,
                condition: c.number(),
                trials: rows.len(),
                successes,
                success_rate: if rows.is_empty() { f64::NAN } else { successes as f64 / rows.len() as f64 },
                mean_speed_cm_s: (!speeds.is_empty()).then(|| mean(&speeds)),
                mean_rms_mm: mean(&rms),
                mean_alpha: mean(&alphas),
                alpha_variance: sample_variance(&alphas),
                mean_spread: mean(&spreads),
            });
        }
    }
    let mut pairs: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for &kind in &manifest.kinds {
        for (i, &a) in conditions.iter().enumerate() {
            for &b in &conditions[..i] {
                pairs.push((alpha_comparison(kind, a, b), report.alphas(kind, a), report.alphas(kind, b)));
            }
        }
    }
    if manifest.kinds.contains(&BabblingKind::Naive) && manifest.kinds.contains(&BabblingKind::Natural) {
        for &c in &conditions {
            pairs.push((
                kind_comparison(c),
                report.alphas(BabblingKind::Natural, c),
                report.alphas(BabblingKind::Naive, c),
            ));
        }
    }
    for (comparison, a, b) in pairs {
        if let Ok(w) = two_sample_test(&a, &b) {
            report.tests.push(TestRow {
                comparison,
                n_a: a.len(),
                n_b: b.len(),
                mean_a: mean(&a),
                mean_b: mean(&b),
                t: w.t,
                df: w.df,
                p: w.p,
            });
        }
    }
    Ok(report)
}

pub fn write_summaries(report: &RunReport) -> Result<()> {
    let dir = &report.run_dir;
    let hash = &report.config_hash;
    let trial_rows = report.trials.iter().flat_map(|t| {
        t.conditions.iter().map(move |c| {
            vec![
                t.kind.name().to_string(),
                t.seed.to_string(),
                c.condition.number().to_string(),
                u8::from(c.success).to_string(),
                opt(c.travel_time),
                opt(c.speed),
                c.final_displacement.to_string(),
                c.rms_mm.to_string(),
            ]
        })
    });
    write_rows(
        &dir.join(SUMMARY_TRIALS),
        hash,
        &["kind", "seed", "condition", "success", "travel_time_s", "speed_cm_s", "final_displacement_m", "rms_mm"],
        trial_rows,
    )?;
    let spread_rows = report.trials.iter().flat_map(|t| {
        t.spread.iter().enumerate().map(move |(leg, r)| {
            vec![t.kind.name().to_string(), t.seed.to_string(), LEG_NAMES[leg].to_string(), r.to_string()]
        })
    });
    write_rows(&dir.join(SUMMARY_SPREAD), hash, &["kind", "seed", "leg", "ratio"], spread_rows)?;
    let dfa_rows = report.trials.iter().flat_map(|t| {
        t.conditions.iter().flat_map(move |c| {
            c.alphas.iter().zip(&c.fit_r2).enumerate().map(move |(leg, (a, r2))| {
                vec![
                    t.kind.name().to_string(),
                    t.seed.to_string(),
                    c.condition.number().to_string(),
                    LEG_NAMES[leg].to_string(),
                    a.to_string(),
                    r2.to_string(),
                ]
            })
        })
    });
    write_rows(&dir.join(SUMMARY_DFA), hash, &["kind", "seed", "condition", "leg", "alpha", "fit_r2"], dfa_rows)?;
    let group_rows = report.groups.iter().map(|g| {
        vec![
            g.kind.name().to_string(),
            g.condition.to_string(),
            g.trials.to_string(),
            g.successes.to_string(),
            g.success_rate.to_string(),
            opt(g.mean_speed_cm_s),
            g.mean_rms_mm.to_string(),
            g.mean_alpha.to_string(),
            g.alpha_variance.to_string(),
            g.mean_spread.to_string(),
        ]
    });
    write_rows(
        &dir.join(SUMMARY_GROUPS),
        hash,
        &[
            "kind",
            "condition",
            "trials",
            "successes",
            "success_rate",
            "mean_speed_cm_s",
            "mean_rms_mm",
            "mean_alpha",
            "alpha_variance",
            "mean_spread",
        ],
        group_rows,
    )?;
    let test_rows = report.tests.iter().map(|t| {
        vec![
            t.comparison.clone(),
            t.n_a.to_string(),
            t.n_b.to_string(),
            t.mean_a.to_string(),
            t.mean_b.to_string(),
            t.t.to_string(),
            t.df.to_string(),
            t.p.to_string(),
        ]
    });
    write_rows(
        &dir.join(SUMMARY_TESTS),
        hash,
        &["comparison", "n_a", "n_b", "mean_a", "mean_b", "t", "df", "p"],
        test_rows,
    )?;
    artifacts::write_bytes(&dir.join(REPORT_TEXT), render_text(report).as_bytes())
}

fn render_text(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "config_hash: {}", report.config_hash);
    let _ = writeln!(s, "trials loaded: {}, failed: {}", report.trials.len(), report.failed.len());
    for f in &report.failed {
        let _ = writeln!(s, "  failed: {} seed {}", f.kind.name(), f.seed);
    }
    let mut by_kind: BTreeMap<&str, Vec<&GroupSummary>> = BTreeMap::new();
    for g in &report.groups {
        by_kind.entry(g.kind.name()).or_default().push(g);
    }
    let _ = writeln!(s, "\nbabbling spread (mean over legs and trials)");
    for (kind, groups) in &by_kind {
        let _ = writeln!(s, "  {kind:8} {:.3}", groups[0].mean_spread);
    }
    let _ = writeln!(s, "\nper condition");
    let _ = writeln!(
        s,
        "  {:8} {:>4} {:>9} {:>11} {:>9} {:>8} {:>10}",
        "kind", "cond", "success", "speed cm/s", "rms mm", "alpha", "alpha var"
    );
    for (kind, groups) in &by_kind {
        for g in groups {
            let speed = g.mean_speed_cm_s.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "  {kind:8} {:>4} {:>5}/{:<3} {:>11} {:>9.2} {:>8.3} {:>10.5}",
                g.condition, g.successes, g.trials, speed, g.mean_rms_mm, g.mean_alpha, g.alpha_variance
            );
        }
    }
    let _ = writeln!(s, "\nWelch tests on leg-series alpha");
    for t in &report.tests {
        let _ = writeln!(
            s,
            "  {:45} mean {:.3} vs {:.3}  t {:7.3}  df {:6.2}  p {:.4}",
            t.comparison, t.mean_a, t.mean_b, t.t, t.df, t.p
        );
    }
    s
}

/// Rebuild the summary files of a run directory from its trial artifacts.
pub fn report(run_dir: &Path) -> Result<RunReport> {
    let r = load_run(run_dir)?;
    write_summaries(&r)?;
    Ok(r)
}
