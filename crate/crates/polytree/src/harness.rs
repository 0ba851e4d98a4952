//! Monte-Carlo sweep runner with reproducible seeds and CSV output.
//!
//! A sweep walks a grid of SEM parameters and sample sizes. One model is
//! generated per grid point (from a seed derived off the master seed) and
//! reused across all sample sizes and repeats at that point; only the data
//! resample varies by trial. Trials are independent and may run in parallel;
//! rows are emitted in canonical (point, n, trial) order regardless of
//! completion order, so reruns with the same master seed produce identical
//! output up to the wall-clock and timestamp columns.

use crate::gen::{
    generate_polytree_sem, hardness_ensemble_cpdag, hardness_ensemble_skeleton, GenConfig,
};
use crate::graph::Cpdag;
use crate::learn::{learn_cpdag, LearnConfig};
use crate::metrics::{classify_edges, fdr_cpdag, fdr_skeleton, jaccard_cpdag, jaccard_skeleton};
use crate::precision::{estimate_inverse_correlation, l1_errors, true_inverse_correlation};
use crate::rng::derive_seed;
use crate::sem::{LinearSem, NoiseFamily};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    Standard,
    HardnessSkeleton,
    HardnessCpdag,
    Precision,
}

impl FromStr for SweepMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Self::Standard),
            "hardness_skeleton" => Ok(Self::HardnessSkeleton),
            "hardness_cpdag" => Ok(Self::HardnessCpdag),
            "precision" => Ok(Self::Precision),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

impl std::fmt::Display for SweepMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Standard => "standard",
            Self::HardnessSkeleton => "hardness_skeleton",
            Self::HardnessCpdag => "hardness_cpdag",
            Self::Precision => "precision",
        };
        f.write_str(s)
    }
}

/// Full sweep settings. `rho_min_values` and `n_values` span the grid; the
/// other SEM parameters are shared by every point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub mode: SweepMode,
    pub p: usize,
    pub d_in_max: usize,
    pub rho_min_values: Vec<f64>,
    pub rho_max: f64,
    pub omega_min: f64,
    pub n_values: Vec<usize>,
    pub repeats: usize,
    pub alpha: f64,
    pub noise: NoiseFamily,
    pub master_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        // rho_min is capped by 1/sqrt(d_in_max), so 0.3 is the largest curve
        // the default in-degree 10 admits
        Self {
            mode: SweepMode::Standard,
            p: 100,
            d_in_max: 10,
            rho_min_values: vec![0.1, 0.2, 0.3],
            rho_max: 0.8,
            omega_min: 0.1,
            n_values: vec![50, 100, 200, 400, 600, 800, 1000],
            repeats: 100,
            alpha: 0.1,
            noise: NoiseFamily::Gaussian,
            master_seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Config(m));
        if self.repeats == 0 {
            return fail("repeats must be at least 1".into());
        }
        if self.n_values.is_empty() {
            return fail("n_values must be non-empty".into());
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n < 3) {
            return fail(format!("every n must be at least 3, got {n}"));
        }
        if self.rho_min_values.is_empty() {
            return fail("rho_min must have at least one value".into());
        }
        // duplicate grid coordinates would make summary groups ambiguous
        let mut ns = self.n_values.clone();
        ns.sort_unstable();
        ns.dedup();
        if ns.len() != self.n_values.len() {
            return fail("n_values contains duplicates".into());
        }
        let mut rhos = self.rho_min_values.clone();
        rhos.sort_by(f64::total_cmp);
        rhos.dedup();
        if rhos.len() != self.rho_min_values.len() {
            return fail("rho_min contains duplicate values".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!(
                "alpha = {} must lie strictly in (0, 1)",
                self.alpha
            ));
        }
        match self.mode {
            SweepMode::Standard | SweepMode::Precision => {
                for &rho in &self.rho_min_values {
                    let gen = GenConfig {
                        p: self.p,
                        d_in_max: self.d_in_max,
                        rho_min: rho,
                        rho_max: self.rho_max,
                        omega_min: self.omega_min,
                        seed: 0,
                    };
                    gen.validate()
                        .map_err(|e| HarnessError::Config(e.to_string()))?;
                }
            }
            SweepMode::HardnessSkeleton => {
                let bound = 1.0 / (self.p as f64).sqrt();
                if self.p < 4 {
                    return fail("hardness_skeleton needs p >= 4".into());
                }
                if let Some(&rho) = self
                    .rho_min_values
                    .iter()
                    .find(|&&r| !(r > 0.0 && r < bound))
                {
                    return fail(format!("rho = {rho} must lie strictly in (0, {bound})"));
                }
            }
            SweepMode::HardnessCpdag => {
                if self.p < 5 {
                    return fail("hardness_cpdag needs p >= 5".into());
                }
                if let Some(&rho) = self.rho_min_values.iter().find(|&&r| !(r > 0.0 && r < 0.5)) {
                    return fail(format!("rho = {rho} must lie strictly in (0, 0.5)"));
                }
            }
        }
        Ok(())
    }

    /// Parses the flat key=value config format. Unset keys keep defaults;
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| HarnessError::Config(format!("line {}: {msg}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "mode" => cfg.mode = value.parse().map_err(err)?,
                "p" => cfg.p = value.parse().map_err(|e| err(format!("p: {e}")))?,
                "d_in_max" => {
                    cfg.d_in_max = value.parse().map_err(|e| err(format!("d_in_max: {e}")))?
                }
                "rho_min" => {
                    cfg.rho_min_values = parse_list(value).map_err(err)?;
                }
                "rho_max" => {
                    cfg.rho_max = value.parse().map_err(|e| err(format!("rho_max: {e}")))?
                }
                "omega_min" => {
                    cfg.omega_min = value.parse().map_err(|e| err(format!("omega_min: {e}")))?
                }
                "n_values" => {
                    cfg.n_values = parse_list(value).map_err(err)?;
                }
                "repeats" => {
                    cfg.repeats = value.parse().map_err(|e| err(format!("repeats: {e}")))?
                }
                "alpha" => cfg.alpha = value.parse().map_err(|e| err(format!("alpha: {e}")))?,
                "noise" => cfg.noise = value.parse().map_err(err)?,
                "master_seed" => {
                    cfg.master_seed = value
                        .parse()
                        .map_err(|e| err(format!("master_seed: {e}")))?
                }
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        Ok(cfg)
    }
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|tok| tok.trim().parse::<T>().map_err(|e| format!("{tok:?}: {e}")))
        .collect()
}

/// One grid coordinate: which rho_min value and which sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPoint {
    pub rho_min_index: usize,
    pub n: usize,
}

/// One executed trial, in CSV column order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub mode: SweepMode,
    pub p: usize,
    pub n: usize,
    pub rho_min: f64,
    pub rho_max: f64,
    pub d_in_max: usize,
    pub omega_min: f64,
    pub alpha: f64,
    pub seed: u64,
    pub trial: usize,
    pub correct: Option<usize>,
    pub wrong_dir: Option<usize>,
    pub missing: Option<usize>,
    pub extra: Option<usize>,
    pub fdr_sk: Option<f64>,
    pub ji_sk: Option<f64>,
    pub fdr_cpdag: Option<f64>,
    pub ji_cpdag: Option<f64>,
    pub exact_sk: Option<bool>,
    pub exact_cpdag: Option<bool>,
    pub theta_diag_l1: Option<f64>,
    pub theta_offdiag_l1: Option<f64>,
    pub status: String,
    pub wall_ms: u64,
    pub timestamp: u64,
}

pub const TRIALS_HEADER: &str = "mode,p,n,rho_min,rho_max,d_in_max,omega_min,alpha,seed,trial,\
correct,wrong_dir,missing,extra,fdr_sk,ji_sk,fdr_cpdag,ji_cpdag,exact_sk,exact_cpdag,\
theta_diag_l1,theta_offdiag_l1,status,wall_ms,timestamp";

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

impl TrialRecord {
    pub fn to_csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.mode,
            self.p,
            self.n,
            self.rho_min,
            self.rho_max,
            self.d_in_max,
            self.omega_min,
            self.alpha,
            self.seed,
            self.trial,
            opt(&self.correct),
            opt(&self.wrong_dir),
            opt(&self.missing),
            opt(&self.extra),
            opt(&self.fdr_sk),
            opt(&self.ji_sk),
            opt(&self.fdr_cpdag),
            opt(&self.ji_cpdag),
            opt(&self.exact_sk),
            opt(&self.exact_cpdag),
            opt(&self.theta_diag_l1),
            opt(&self.theta_offdiag_l1),
            self.status.replace([',', '\n'], ";"),
            self.wall_ms,
            self.timestamp,
        );
        s
    }
}

/// Ground truth prepared once per grid point.
enum PointTruth {
    Single(Box<(LinearSem, Cpdag)>),
    Ensemble(Vec<(LinearSem, Cpdag)>),
}

fn prepare_truth(cfg: &SweepConfig, rho_min_index: usize) -> Result<PointTruth, String> {
    let rho = cfg.rho_min_values[rho_min_index];
    match cfg.mode {
        SweepMode::Standard | SweepMode::Precision => {
            let gen = GenConfig {
                p: cfg.p,
                d_in_max: cfg.d_in_max,
                rho_min: rho,
                rho_max: cfg.rho_max,
                omega_min: cfg.omega_min,
                seed: derive_seed(cfg.master_seed, &[0, rho_min_index as u64]),
            };
            let sem = generate_polytree_sem(&gen).map_err(|e| format!("gen_error: {e}"))?;
            let cpdag = sem.dag().cpdag().map_err(|e| format!("gen_error: {e}"))?;
            Ok(PointTruth::Single(Box::new((sem, cpdag))))
        }
        SweepMode::HardnessSkeleton => {
            let members =
                hardness_ensemble_skeleton(cfg.p, rho).map_err(|e| format!("gen_error: {e}"))?;
            Ok(PointTruth::Ensemble(pair_with_cpdags(members)?))
        }
        SweepMode::HardnessCpdag => {
            let members =
                hardness_ensemble_cpdag(cfg.p, rho).map_err(|e| format!("gen_error: {e}"))?;
            Ok(PointTruth::Ensemble(pair_with_cpdags(members)?))
        }
    }
}

fn pair_with_cpdags(members: Vec<LinearSem>) -> Result<Vec<(LinearSem, Cpdag)>, String> {
    members
        .into_iter()
        .map(|m| {
            let c = m.dag().cpdag().map_err(|e| format!("gen_error: {e}"))?;
            Ok((m, c))
        })
        .collect()
}

fn unix_timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn run_trial_prepared(
    cfg: &SweepConfig,
    truth: &Result<PointTruth, String>,
    point: GridPoint,
    trial: usize,
) -> TrialRecord {
    let start = Instant::now();
    let seed = derive_seed(
        cfg.master_seed,
        &[1, point.rho_min_index as u64, point.n as u64, trial as u64],
    );
    let mut rec = TrialRecord {
        mode: cfg.mode,
        p: cfg.p,
        n: point.n,
        rho_min: cfg.rho_min_values[point.rho_min_index],
        rho_max: cfg.rho_max,
        d_in_max: cfg.d_in_max,
        omega_min: cfg.omega_min,
        alpha: cfg.alpha,
        seed,
        trial,
        correct: None,
        wrong_dir: None,
        missing: None,
        extra: None,
        fdr_sk: None,
        ji_sk: None,
        fdr_cpdag: None,
        ji_cpdag: None,
        exact_sk: None,
        exact_cpdag: None,
        theta_diag_l1: None,
        theta_offdiag_l1: None,
        status: "ok".into(),
        wall_ms: 0,
        timestamp: unix_timestamp(),
    };
    let done = |mut rec: TrialRecord, start: Instant| {
        rec.wall_ms = start.elapsed().as_millis() as u64;
        rec
    };
    let (sem, truth_cpdag) = match truth {
        Ok(PointTruth::Single(pair)) => (&pair.0, &pair.1),
        Ok(PointTruth::Ensemble(members)) => {
            let (m, c) = &members[trial % members.len()];
            (m, c)
        }
        Err(msg) => {
            rec.status = msg.clone();
            return done(rec, start);
        }
    };
    let data = sem.sample(point.n, cfg.noise, seed);
    let learned = match learn_cpdag(
        &data,
        &LearnConfig {
            alpha: cfg.alpha,
            rho_crit_override: None,
        },
    ) {
        Ok(l) => l,
        Err(e) => {
            rec.status = format!("learn_error: {e}");
            return done(rec, start);
        }
    };
    let ec = match classify_edges(truth_cpdag, &learned.cpdag) {
        Ok(ec) => ec,
        Err(e) => {
            rec.status = format!("metric_error: {e}");
            return done(rec, start);
        }
    };
    rec.correct = Some(ec.correct);
    rec.wrong_dir = Some(ec.wrong_direction);
    rec.missing = Some(ec.missing);
    rec.extra = Some(ec.extra);
    rec.fdr_sk = fdr_skeleton(&ec).ok();
    rec.ji_sk = jaccard_skeleton(&ec).ok();
    rec.fdr_cpdag = fdr_cpdag(&ec).ok();
    rec.ji_cpdag = jaccard_cpdag(&ec).ok();
    rec.exact_sk = Some(learned.cpdag.skeleton_pairs() == truth_cpdag.skeleton_pairs());
    let exact = learned.cpdag == *truth_cpdag;
    rec.exact_cpdag = Some(exact);
    if cfg.mode == SweepMode::Precision && exact {
        // theta errors are only meaningful when the class was recovered;
        // degenerate estimates leave the columns empty
        if let Ok(theta_hat) = estimate_inverse_correlation(&learned.cpdag, &learned.correlations) {
            let theta = true_inverse_correlation(sem);
            if let Ok((d, o)) = l1_errors(&theta_hat, &theta) {
                rec.theta_diag_l1 = Some(d);
                rec.theta_offdiag_l1 = Some(o);
            }
        }
    }
    done(rec, start)
}

/// Runs one trial at the given grid coordinates. Deterministic in
/// (master_seed, point, trial) apart from the wall-clock columns.
pub fn run_trial(cfg: &SweepConfig, point: GridPoint, trial: usize) -> TrialRecord {
    let truth = prepare_truth(cfg, point.rho_min_index);
    run_trial_prepared(cfg, &truth, point, trial)
}

/// Per-(point, n) aggregate over ok trials; `ci95` columns are 1.96 times
/// the standard error of the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub mode: SweepMode,
    pub p: usize,
    pub n: usize,
    pub rho_min: f64,
    pub rho_max: f64,
    pub d_in_max: usize,
    pub omega_min: f64,
    pub alpha: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub fdr_sk: (f64, f64),
    pub ji_sk: (f64, f64),
    pub fdr_cpdag: (f64, f64),
    pub ji_cpdag: (f64, f64),
    pub exact_sk_rate: f64,
    pub exact_cpdag_rate: f64,
    pub theta_diag_l1_mean: Option<f64>,
    pub theta_offdiag_l1_mean: Option<f64>,
}

pub const SUMMARY_HEADER: &str = "mode,p,n,rho_min,rho_max,d_in_max,omega_min,alpha,trials_ok,\
trials_failed,fdr_sk_mean,fdr_sk_ci95,ji_sk_mean,ji_sk_ci95,fdr_cpdag_mean,fdr_cpdag_ci95,\
ji_cpdag_mean,ji_cpdag_ci95,exact_sk_rate,exact_cpdag_rate,theta_diag_l1_mean,theta_offdiag_l1_mean";

impl SummaryRow {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.mode,
            self.p,
            self.n,
            self.rho_min,
            self.rho_max,
            self.d_in_max,
            self.omega_min,
            self.alpha,
            self.trials_ok,
            self.trials_failed,
            self.fdr_sk.0,
            self.fdr_sk.1,
            self.ji_sk.0,
            self.ji_sk.1,
            self.fdr_cpdag.0,
            self.fdr_cpdag.1,
            self.ji_cpdag.0,
            self.ji_cpdag.1,
            self.exact_sk_rate,
            self.exact_cpdag_rate,
            opt(&self.theta_diag_l1_mean),
            opt(&self.theta_offdiag_l1_mean),
        )
    }
}

fn mean_and_ci(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    (mean, 1.96 * (var / k).sqrt())
}

fn summarize(cfg: &SweepConfig, records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &rho in &cfg.rho_min_values {
        for &n in &cfg.n_values {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.n == n && r.rho_min == rho)
                .collect();
            let ok: Vec<&&TrialRecord> = group.iter().filter(|r| r.status == "ok").collect();
            let collect = |f: fn(&TrialRecord) -> Option<f64>| -> Vec<f64> {
                ok.iter().filter_map(|r| f(r)).collect()
            };
            let rate = |f: fn(&TrialRecord) -> Option<bool>| -> f64 {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().filter(|r| f(r) == Some(true)).count() as f64 / ok.len() as f64
                }
            };
            let theta_d = collect(|r| r.theta_diag_l1);
            let theta_o = collect(|r| r.theta_offdiag_l1);
            rows.push(SummaryRow {
                mode: cfg.mode,
                p: cfg.p,
                n,
                rho_min: rho,
                rho_max: cfg.rho_max,
                d_in_max: cfg.d_in_max,
                omega_min: cfg.omega_min,
                alpha: cfg.alpha,
                trials_ok: ok.len(),
                trials_failed: group.len() - ok.len(),
                fdr_sk: mean_and_ci(&collect(|r| r.fdr_sk)),
                ji_sk: mean_and_ci(&collect(|r| r.ji_sk)),
                fdr_cpdag: mean_and_ci(&collect(|r| r.fdr_cpdag)),
                ji_cpdag: mean_and_ci(&collect(|r| r.ji_cpdag)),
                exact_sk_rate: rate(|r| r.exact_sk),
                exact_cpdag_rate: rate(|r| r.exact_cpdag),
                theta_diag_l1_mean: if theta_d.is_empty() {
                    None
                } else {
                    Some(mean_and_ci(&theta_d).0)
                },
                theta_offdiag_l1_mean: if theta_o.is_empty() {
                    None
                } else {
                    Some(mean_and_ci(&theta_o).0)
                },
            });
        }
    }
    rows
}

/// Sweep output: every trial record in canonical order plus the per-point
/// summary, as written to disk.
#[derive(Debug)]
pub struct SweepOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    pub trials_path: PathBuf,
    pub summary_path: PathBuf,
}

pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 96 + TRIALS_HEADER.len() + 1);
    out.push_str(TRIALS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn summary_path_for(trials_path: &Path) -> PathBuf {
    let stem = trials_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".into());
    trials_path.with_file_name(format!("{stem}.summary.csv"))
}

/// Executes the whole grid (trials run in parallel, output in canonical
/// order) and writes `<out>.csv` plus the sibling summary file.
pub fn run_sweep(cfg: &SweepConfig, out_path: &Path) -> Result<SweepOutput, HarnessError> {
    cfg.validate()?;
    let truths: Vec<Result<PointTruth, String>> = (0..cfg.rho_min_values.len())
        .map(|ri| prepare_truth(cfg, ri))
        .collect();
    let mut jobs: Vec<(GridPoint, usize)> = Vec::new();
    for ri in 0..cfg.rho_min_values.len() {
        for &n in &cfg.n_values {
            for trial in 0..cfg.repeats {
                jobs.push((
                    GridPoint {
                        rho_min_index: ri,
                        n,
                    },
                    trial,
                ));
            }
        }
    }
    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|&(point, trial)| run_trial_prepared(cfg, &truths[point.rho_min_index], point, trial))
        .collect();
    let summary = summarize(cfg, &records);
    let summary_path = summary_path_for(out_path);
    std::fs::write(out_path, trials_csv(&records))?;
    std::fs::write(&summary_path, summary_csv(&summary))?;
    Ok(SweepOutput {
        records,
        summary,
        trials_path: out_path.to_path_buf(),
        summary_path,
    })
}

/// Consistency report from re-deriving metrics and summaries out of a
/// trials CSV.
#[derive(Debug, Default)]
pub struct ConsistencyReport {
    pub rows_checked: usize,
    pub violations: Vec<String>,
    /// Set when a summary CSV was supplied: whether recomputation
    /// reproduces it exactly.
    pub summary_matches: Option<bool>,
}

impl ConsistencyReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.summary_matches != Some(false)
    }
}

fn split_header(text: &str) -> Result<(Vec<&str>, Vec<&str>), HarnessError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Parse("empty csv".into()))?;
    Ok((
        header.split(',').collect(),
        lines.filter(|l| !l.trim().is_empty()).collect(),
    ))
}

/// Checks every row's metric columns against its counts (identities and
/// ratios) and, when a summary is given, that the summary is exactly
/// recomputable from the trial rows.
pub fn verify_trials(
    trials_text: &str,
    summary_text: Option<&str>,
) -> Result<ConsistencyReport, HarnessError> {
    let (header, lines) = split_header(trials_text)?;
    let expected: Vec<&str> = TRIALS_HEADER.split(',').collect();
    if header != expected {
        return Err(HarnessError::Parse("unexpected trials header".into()));
    }
    let col = |name: &str| {
        expected
            .iter()
            .position(|&c| c == name)
            .expect("known column")
    };
    let (ic, iw, im, ie) = (
        col("correct"),
        col("wrong_dir"),
        col("missing"),
        col("extra"),
    );
    let metric_cols = [
        col("fdr_sk"),
        col("ji_sk"),
        col("fdr_cpdag"),
        col("ji_cpdag"),
    ];
    let status_col = col("status");

    let mut report = ConsistencyReport::default();
    let mut parsed_rows: Vec<Vec<String>> = Vec::new();
    for (idx, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected.len() {
            report.violations.push(format!(
                "row {}: expected {} fields, got {}",
                idx + 1,
                expected.len(),
                fields.len()
            ));
            continue;
        }
        report.rows_checked += 1;
        parsed_rows.push(fields.iter().map(|s| s.to_string()).collect());
        if fields[status_col] != "ok" {
            continue;
        }
        let counts: Option<Vec<usize>> = [ic, iw, im, ie]
            .iter()
            .map(|&c| fields[c].parse::<usize>().ok())
            .collect();
        let Some(counts) = counts else {
            report
                .violations
                .push(format!("row {}: ok status but missing counts", idx + 1));
            continue;
        };
        let (c, w, m, e) = (counts[0], counts[1], counts[2], counts[3]);
        let est = c + w + e;
        let truth = c + w + m;
        let checks: [(usize, Option<f64>); 4] = [
            (metric_cols[0], (est > 0).then(|| e as f64 / est as f64)),
            (
                metric_cols[1],
                (m + est > 0).then(|| (c + w) as f64 / (m + est) as f64),
            ),
            (
                metric_cols[2],
                (est > 0).then(|| (e + w) as f64 / est as f64),
            ),
            (
                metric_cols[3],
                (truth + est - c > 0).then(|| c as f64 / (truth + est - c) as f64),
            ),
        ];
        for (colidx, expected_val) in checks {
            let cell = fields[colidx];
            match (cell.is_empty(), expected_val) {
                (true, None) => {}
                (true, Some(_)) => report.violations.push(format!(
                    "row {}: metric column {} unexpectedly empty",
                    idx + 1,
                    header[colidx]
                )),
                (false, None) => report.violations.push(format!(
                    "row {}: metric column {} should be empty",
                    idx + 1,
                    header[colidx]
                )),
                (false, Some(v)) => {
                    let got: f64 = cell.parse().unwrap_or(f64::NAN);
                    if (got - v).abs() > 1e-9 {
                        report.violations.push(format!(
                            "row {}: {} = {got} but counts give {v}",
                            idx + 1,
                            header[colidx]
                        ));
                    }
                }
            }
        }
    }
    if let Some(summary) = summary_text {
        let recomputed = recompute_summary_from_rows(&parsed_rows)?;
        report.summary_matches = Some(summary_body(summary) == recomputed);
    }
    Ok(report)
}

fn summary_body(text: &str) -> Vec<String> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.to_string())
        .collect()
}

/// Rebuilds summary rows from parsed trial rows; identical arithmetic and
/// identical formatting to the sweep writer, so matching is exact.
fn recompute_summary_from_rows(rows: &[Vec<String>]) -> Result<Vec<String>, HarnessError> {
    let expected: Vec<&str> = TRIALS_HEADER.split(',').collect();
    let col = |name: &str| {
        expected
            .iter()
            .position(|&c| c == name)
            .expect("known column")
    };
    // reconstruct the grid in first-appearance order
    let mut groups: Vec<(String, String, Vec<usize>)> = Vec::new();
    for (idx, row) in rows.iter().enumerate() {
        let key_rho = row[col("rho_min")].clone();
        let key_n = row[col("n")].clone();
        if let Some(g) = groups
            .iter_mut()
            .find(|(r, n, _)| *r == key_rho && *n == key_n)
        {
            g.2.push(idx);
        } else {
            groups.push((key_rho, key_n, vec![idx]));
        }
    }
    let fetch = |row: &[String], name: &str| -> Option<f64> {
        let v = &row[col(name)];
        if v.is_empty() {
            None
        } else {
            v.parse().ok()
        }
    };
    let mut out = Vec::new();
    for (_, _, indices) in &groups {
        let rows_in: Vec<&Vec<String>> = indices.iter().map(|&i| &rows[i]).collect();
        let ok: Vec<&&Vec<String>> = rows_in
            .iter()
            .filter(|r| r[col("status")] == "ok")
            .collect();
        let collect =
            |name: &str| -> Vec<f64> { ok.iter().filter_map(|r| fetch(r, name)).collect() };
        let rate = |name: &str| -> f64 {
            if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().filter(|r| r[col(name)] == "true").count() as f64 / ok.len() as f64
            }
        };
        let first = rows_in[0];
        let theta_d = collect("theta_diag_l1");
        let theta_o = collect("theta_offdiag_l1");
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let (fdr_sk, fdr_sk_ci) = mean_and_ci(&collect("fdr_sk"));
        let (ji_sk, ji_sk_ci) = mean_and_ci(&collect("ji_sk"));
        let (fdr_c, fdr_c_ci) = mean_and_ci(&collect("fdr_cpdag"));
        let (ji_c, ji_c_ci) = mean_and_ci(&collect("ji_cpdag"));
        out.push(format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            first[col("mode")],
            first[col("p")],
            first[col("n")],
            first[col("rho_min")],
            first[col("rho_max")],
            first[col("d_in_max")],
            first[col("omega_min")],
            first[col("alpha")],
            ok.len(),
            rows_in.len() - ok.len(),
            fdr_sk,
            fdr_sk_ci,
            ji_sk,
            ji_sk_ci,
            fdr_c,
            fdr_c_ci,
            ji_c,
            ji_c_ci,
            rate("exact_sk"),
            rate("exact_cpdag"),
            fmt_opt(if theta_d.is_empty() {
                None
            } else {
                Some(mean_and_ci(&theta_d).0)
            }),
            fmt_opt(if theta_o.is_empty() {
                None
            } else {
                Some(mean_and_ci(&theta_o).0)
            }),
        ));
    }
    Ok(out)
}

/// Strips the wall-clock and timestamp columns from a trials CSV; what
/// remains is byte-reproducible across reruns with the same master seed.
pub fn deterministic_body(trials_text: &str) -> String {
    trials_text
        .lines()
        .map(|line| {
            let mut fields: Vec<&str> = line.split(',').collect();
            if fields.len() >= 2 {
                fields.truncate(fields.len() - 2);
            }
            fields.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}
