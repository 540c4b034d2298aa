//! Backtesting: sliding-window extrapolation, random interpolation splits,
//! error metrics, confidence intervals and the Diebold–Mariano test.

use std::path::Path;
use std::time::Instant;

use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::gp::{fit, FitOptions, GPModel, SpatioTemporalDataset, TrainedGp};
use crate::graph::LaplacianVariant;
use crate::kernels::{KernelContext, STPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BacktestPlan {
    /// Round `r` trains on timepoints `r·stride ..= r·stride + n_train`.
    pub n_train: usize,
    pub n_test: usize,
    pub stride: usize,
    pub rounds: usize,
    #[serde(default)]
    pub seed: u64,
}

impl BacktestPlan {
    pub fn validate(&self, total: usize) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 || self.stride == 0 || self.rounds == 0 {
            return Err(Error::InvalidParameter(
                "n_train, n_test, stride and rounds must all be positive".into(),
            ));
        }
        let last = (self.rounds - 1) * self.stride + self.n_train + self.n_test;
        if last >= total {
            return Err(Error::InvalidParameter(format!(
                "backtest needs timepoint index {last} but the series has {total} timepoints"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn sliding_windows(plan: &BacktestPlan, total: usize) -> Result<Vec<Split>> {
    plan.validate(total)?;
    Ok((0..plan.rounds)
        .map(|r| {
            let start = r * plan.stride;
            let end = start + plan.n_train;
            Split {
                train: (start..=end).collect(),
                test: (end + 1..=end + plan.n_test).collect(),
            }
        })
        .collect())
}

/// Holds out `round(fraction·n)` of the indices `0..n` uniformly at random.
/// Both sides come back sorted.
pub fn interpolation_split(n: usize, fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n_test = (fraction * n as f64).round() as usize;
    if n_test >= n {
        return Err(Error::InvalidParameter(format!(
            "holding out {n_test} of {n} points leaves no training data"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = index::sample(&mut rng, n, n_test).into_vec();
    test.sort_unstable();
    let mut held = vec![false; n];
    for &i in &test {
        held[i] = true;
    }
    let train = (0..n).filter(|&i| !held[i]).collect();
    Ok(Split { train, test })
}

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidParameter("no points to score".into()));
    }
    Ok(())
}

pub fn absolute_errors(pred: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    check_lengths(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).collect())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let e = absolute_errors(pred, truth)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

pub fn mape(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if truth.contains(&0.0) {
        return Err(Error::Data("MAPE is undefined with a zero target".into()));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| ((p - t) / t).abs())
        .sum::<f64>()
        / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DmResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sided Diebold–Mariano test on the loss differential `a − b`, with
/// the long-run variance truncated at lag `h − 1`. A negative statistic
/// favours `a`. A constant non-zero differential has no variance and
/// returns `±∞` with `p = 0`.
pub fn dm_test(loss_a: &[f64], loss_b: &[f64], h: usize) -> Result<DmResult> {
    let n = loss_a.len();
    if loss_b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "loss series of lengths {n} and {}",
            loss_b.len()
        )));
    }
    if n < 4 {
        return Err(Error::InvalidParameter(format!(
            "the DM test needs at least 4 losses, got {n}"
        )));
    }
    if h == 0 || h >= n {
        return Err(Error::InvalidParameter(format!(
            "horizon must be in [1, {}), got {h}",
            n
        )));
    }
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite loss".into()));
    }
    if d.iter().all(|v| *v == 0.0) {
        return Ok(DmResult {
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let gamma = |k: usize| {
        (k..n)
            .map(|t| (d[t] - mean) * (d[t - k] - mean))
            .sum::<f64>()
            / nf
    };
    let g0 = gamma(0);
    let scale = d.iter().map(|v| v.abs()).sum::<f64>() / nf;
    // rounding leaves a constant differential with variance near ε²
    if g0.sqrt() <= 1e-12 * scale {
        let statistic = if mean > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        return Ok(DmResult {
            statistic,
            p_value: 0.0,
        });
    }
    let mut v = g0 + 2.0 * (1..h).map(gamma).sum::<f64>();
    if v <= 0.0 {
        v = g0;
    }
    let statistic = mean / (v / nf).sqrt();
    Ok(DmResult {
        statistic,
        p_value: erfc(statistic.abs() / std::f64::consts::SQRT_2),
    })
}

/// Mean and normal-approximation 95% half-width `1.96·sd/√R`.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64)> {
    let r = values.len();
    if r < 2 {
        return Err(Error::InvalidParameter(format!(
            "a confidence interval needs at least 2 values, got {r}"
        )));
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    Ok((mean, 1.96 * var.sqrt() / (r as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Interpolation,
    Extrapolation,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Interpolation => "interpolation",
            Task::Extrapolation => "extrapolation",
        }
    }
}

/// A kernel entered into a backtest under a display label.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub label: String,
    pub model: GPModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSettings {
    pub plan: BacktestPlan,
    pub tasks: Vec<Task>,
    /// Share of each window's timepoints held out for interpolation.
    pub interpolation_fraction: f64,
    /// `None` predicts with the given hyperparameters.
    pub fit: Option<FitOptions>,
    /// Label of the kernel every other kernel is DM-tested against.
    pub baseline: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RoundResult {
    pub round_index: usize,
    pub kernel: String,
    pub task: Task,
    pub outcome: std::result::Result<RoundScores, String>,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct RoundScores {
    pub errors: Vec<f64>,
    pub mae: f64,
    /// Absent when a target is exactly zero.
    pub mape: Option<f64>,
    pub lml: f64,
    pub model: GPModel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub kernel: String,
    pub task: Task,
    pub rounds_ok: usize,
    pub mae: f64,
    pub mae_ci: Option<f64>,
    pub mape: Option<f64>,
    pub mape_ci: Option<f64>,
    pub dm_vs_baseline: Option<DmResult>,
}

#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub rounds: Vec<RoundResult>,
    pub summaries: Vec<Summary>,
}

fn round_seed(seed: u64, round: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    rng.next_u64()
}

fn select(times: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| times[i]).collect()
}

fn run_round(
    cand: &Candidate,
    ctx: &KernelContext,
    data: &SpatioTemporalDataset,
    train_times: &[f64],
    test_times: &[f64],
    fit_opts: Option<&FitOptions>,
) -> Result<RoundScores> {
    let train = data.restrict_to_times(train_times)?;
    let test = data.restrict_to_times(test_times)?;
    let model = match fit_opts {
        Some(o) => fit(&cand.model, ctx, &train, o)?.model,
        None => cand.model,
    };
    let gp = TrainedGp::new(&model, ctx, &train)?;
    let points: Vec<STPoint> = test.points();
    let pred = gp.predict(&points, false)?;
    let truth = test.values();
    let errors = absolute_errors(&pred.mean, &truth)?;
    let mae = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok(RoundScores {
        errors,
        mae,
        mape: mape(&pred.mean, &truth).ok(),
        lml: gp.log_marginal_likelihood(),
        model,
    })
}

/// Runs every `(candidate, task, round)` job on the current rayon pool and
/// returns results ordered by candidate, task and round. Failed rounds are
/// recorded and skipped by the summaries.
pub fn run_backtest(
    data: &SpatioTemporalDataset,
    candidates: &[Candidate],
    settings: &BacktestSettings,
) -> Result<BacktestReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no kernels to backtest".into()));
    }
    for (i, c) in candidates.iter().enumerate() {
        if candidates[..i].iter().any(|o| o.label == c.label) {
            return Err(Error::InvalidParameter(format!(
                "kernel label `{}` used twice",
                c.label
            )));
        }
    }
    if let Some(b) = &settings.baseline {
        if !candidates.iter().any(|c| &c.label == b) {
            return Err(Error::InvalidParameter(format!(
                "baseline kernel `{b}` is not among the backtested kernels"
            )));
        }
    }
    if settings.tasks.is_empty() {
        return Err(Error::InvalidParameter("no tasks requested".into()));
    }
    let times = data.times();
    let windows = sliding_windows(&settings.plan, times.len())?;
    let mut tasks = settings.tasks.clone();
    tasks.sort();
    tasks.dedup();

    let mut variants: Vec<LaplacianVariant> = candidates
        .iter()
        .map(|c| c.model.kernel.laplacian)
        .collect();
    variants.dedup();
    let contexts = variants
        .iter()
        .map(|v| Ok((*v, KernelContext::new(data.graph(), *v)?)))
        .collect::<Result<Vec<_>>>()?;
    let context_for = |v: LaplacianVariant| {
        &contexts
            .iter()
            .find(|(k, _)| *k == v)
            .expect("context built")
            .1
    };

    let mut jobs = Vec::new();
    for (ci, cand) in candidates.iter().enumerate() {
        for &task in &tasks {
            for (r, w) in windows.iter().enumerate() {
                let (train, test) = match task {
                    Task::Extrapolation => (select(&times, &w.train), select(&times, &w.test)),
                    Task::Interpolation => {
                        let s = interpolation_split(
                            w.train.len(),
                            settings.interpolation_fraction,
                            round_seed(settings.plan.seed, r),
                        )?;
                        let window = select(&times, &w.train);
                        (select(&window, &s.train), select(&window, &s.test))
                    }
                };
                if test.is_empty() {
                    return Err(Error::InvalidParameter(
                        "interpolation fraction holds out no timepoints".into(),
                    ));
                }
                jobs.push((ci, cand, task, r, train, test));
            }
        }
    }

    let rounds: Vec<RoundResult> = jobs
        .into_par_iter()
        .map(|(_, cand, task, r, train, test)| {
            let start = Instant::now();
            let ctx = context_for(cand.model.kernel.laplacian);
            let outcome = run_round(cand, ctx, data, &train, &test, settings.fit.as_ref())
                .map_err(|e| e.to_string());
            RoundResult {
                round_index: r,
                kernel: cand.label.clone(),
                task,
                outcome,
                wall_time: start.elapsed().as_secs_f64(),
            }
        })
        .collect();

    let summaries = summarize(&rounds, candidates, &tasks, settings)?;
    Ok(BacktestReport { rounds, summaries })
}

fn summarize(
    rounds: &[RoundResult],
    candidates: &[Candidate],
    tasks: &[Task],
    settings: &BacktestSettings,
) -> Result<Vec<Summary>> {
    let scores = |label: &str, task: Task| -> Vec<(usize, &RoundScores)> {
        rounds
            .iter()
            .filter(|r| r.kernel == label && r.task == task)
            .filter_map(|r| r.outcome.as_ref().ok().map(|s| (r.round_index, s)))
            .collect()
    };
    let mut out = Vec::new();
    for &task in tasks {
        let horizon = match task {
            Task::Extrapolation => settings.plan.n_test,
            Task::Interpolation => 1,
        };
        for cand in candidates {
            let ok = scores(&cand.label, task);
            let maes: Vec<f64> = ok.iter().map(|(_, s)| s.mae).collect();
            let mapes: Option<Vec<f64>> = ok.iter().map(|(_, s)| s.mape).collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let dm = match &settings.baseline {
                Some(b) if *b != cand.label && !ok.is_empty() => {
                    let base = scores(b, task);
                    let (mut la, mut lb) = (Vec::new(), Vec::new());
                    for (r, s) in &ok {
                        if let Some((_, bs)) = base.iter().find(|(br, _)| br == r) {
                            la.extend_from_slice(&s.errors);
                            lb.extend_from_slice(&bs.errors);
                        }
                    }
                    dm_test(&la, &lb, horizon.min(la.len().saturating_sub(1)).max(1)).ok()
                }
                _ => None,
            };
            out.push(Summary {
                kernel: cand.label.clone(),
                task,
                rounds_ok: ok.len(),
                mae: if maes.is_empty() {
                    f64::NAN
                } else {
                    mean(&maes)
                },
                mae_ci: confidence_interval(&maes).ok().map(|c| c.1),
                mape: mapes.as_ref().filter(|m| !m.is_empty()).map(|m| mean(m)),
                mape_ci: mapes
                    .as_ref()
                    .and_then(|m| confidence_interval(m).ok())
                    .map(|c| c.1),
                dm_vs_baseline: dm,
            });
        }
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-round rows followed by one `round = all` summary row per kernel and
/// task. Only summary rows carry the CI and DM columns.
pub fn write_results_csv(path: impl AsRef<Path>, report: &BacktestReport) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "round",
        "kernel",
        "split",
        "mae",
        "mape",
        "ci_half_width",
        "dm_vs_baseline_p",
        "error",
    ])?;
    for r in &report.rounds {
        let (mae, mape, err) = match &r.outcome {
            Ok(s) => (s.mae.to_string(), opt(s.mape), String::new()),
            Err(e) => (String::new(), String::new(), e.clone()),
        };
        w.write_record([
            &r.round_index.to_string(),
            &r.kernel,
            r.task.name(),
            &mae,
            &mape,
            "",
            "",
            &err,
        ])?;
    }
    for s in &report.summaries {
        let mae = if s.rounds_ok > 0 {
            s.mae.to_string()
        } else {
            String::new()
        };
        let p = opt(s.dm_vs_baseline.map(|d| d.p_value));
        w.write_record([
            "all",
            &s.kernel,
            s.task.name(),
            &mae,
            &opt(s.mape),
            &opt(s.mae_ci),
            &p,
            "",
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Kernel × task table of `MAE ± CI`; the CI is omitted with a single round.
pub fn summary_table(report: &BacktestReport) -> String {
    let mut tasks: Vec<Task> = report.summaries.iter().map(|s| s.task).collect();
    tasks.dedup();
    let mut kernels: Vec<&str> = Vec::new();
    for s in &report.summaries {
        if !kernels.contains(&s.kernel.as_str()) {
            kernels.push(&s.kernel);
        }
    }
    let short = |t: Task| match t {
        Task::Interpolation => "int",
        Task::Extrapolation => "ext",
    };
    let mut header = vec!["kernel".to_string()];
    for &t in &tasks {
        header.push(format!("MAE_{}", short(t)));
        header.push(format!("MAPE_{}", short(t)));
        header.push(format!("DM_p_{}", short(t)));
    }
    let mut rows = vec![header];
    let mut single_round = false;
    for k in &kernels {
        let mut row = vec![k.to_string()];
        for &t in &tasks {
            let s = report
                .summaries
                .iter()
                .find(|s| s.kernel == *k && s.task == t)
                .expect("summary exists");
            let pm = |m: Option<f64>, ci: Option<f64>| match (m, ci) {
                (Some(m), Some(c)) => format!("{m:.4} ± {c:.4}"),
                (Some(m), None) => format!("{m:.4}"),
                _ => "n/a".into(),
            };
            single_round |= s.rounds_ok == 1;
            row.push(pm((s.rounds_ok > 0).then_some(s.mae), s.mae_ci));
            row.push(pm(s.mape, s.mape_ci));
            row.push(
                s.dm_vs_baseline
                    .map(|d| format!("{:.3}", d.p_value))
                    .unwrap_or_else(|| "-".into()),
            );
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    if single_round {
        out.push_str(
            "note: confidence intervals need at least two successful rounds and are omitted\n",
        );
    }
    out
}
