//! The two simulation studies: recovery error against the degree of overlap,
//! and against the sample size, comparing the overlapping estimator with the
//! plain lasso on the same data.
//!
//! The full-scale layout is p = 512 with size-8 contiguous groups, n = 192
//! for the overlap study, and n ∈ 48·2^j for the sample-size study at
//! overlap 4. A scale factor shrinks p and n proportionally so the studies
//! run at desk scale; the active-group rule is applied to the scaled width.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::groups::GroupCollection;
use crate::instance::{generate_instance, recovery_error, ProblemInstance};
use crate::rng::stream;
use crate::solver::{fit, fit_path, lambda_max, FitResult, SolverConfig};
use rand::Rng;

/// Which study to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    OverlapStudy,
    SampleSizeStudy,
}

/// How the regularization level is chosen per trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    /// Pick the grid point minimizing the recovery error; needs the ground
    /// truth and reproduces the reported metric most favorably.
    OracleRecovery,
    /// Pick the grid point minimizing squared prediction error on a held-out
    /// row fraction.
    Holdout { fraction: f64 },
}

/// Study configuration. `scale_factor = 1` reproduces the full-scale layout.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub scale_factor: f64,
    pub trials: usize,
    pub seed: u64,
    pub sigma: f64,
    pub lambda_rule: LambdaRule,
    pub support_rule: SupportRule,
    /// Number of log-spaced grid points from the activation threshold down.
    pub grid_size: usize,
    /// Ratio of the smallest grid point to the activation threshold.
    pub grid_min_ratio: f64,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, scale_factor: f64, trials: usize, seed: u64) -> Self {
        Self {
            kind,
            scale_factor,
            trials,
            seed,
            sigma: 0.01,
            lambda_rule: LambdaRule::OracleRecovery,
            support_rule: SupportRule::WidthPreserving,
            grid_size: 50,
            grid_min_ratio: 1e-4,
        }
    }
}

const GROUP_SIZE: usize = 8;
const FULL_P: usize = 512;
const FULL_N_OVERLAP: usize = 192;
const FULL_N_BASE: usize = 48;
const FULL_SUPPORT_WIDTH: f64 = 64.0;

/// How the number of active groups follows the overlap degree.
///
/// `WidthPreserving` picks the smallest k whose union spans the scaled
/// support width: `ceil((64 - 8)·sf / (9 - overlap)) + 1`. The denominator is
/// the start stride, so the realized support stays at the target width for
/// every overlap and the plain-lasso difficulty is held constant across
/// cells. `ShrinkingSupport` divides by `8 + overlap` instead, which leaves
/// the support shrinking as the overlap grows and with it the difficulty of
/// both estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportRule {
    WidthPreserving,
    ShrinkingSupport,
}

/// Number of active groups for a given overlap under the chosen rule,
/// clamped to the available groups.
pub fn active_group_rule(
    rule: SupportRule,
    scale_factor: f64,
    overlap: usize,
    group_count: usize,
) -> usize {
    let width = (FULL_SUPPORT_WIDTH - GROUP_SIZE as f64) * scale_factor;
    let denom = match rule {
        SupportRule::WidthPreserving => GROUP_SIZE + 1 - overlap,
        SupportRule::ShrinkingSupport => GROUP_SIZE + overlap,
    };
    let k = (width / denom as f64).ceil() as i64 + 1;
    (k.max(1) as usize).min(group_count)
}

/// One (cell, trial) outcome.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub cell: usize,
    /// Overlap degree or sample size, depending on the study.
    pub x_value: usize,
    pub trial: usize,
    pub overlap_error: f64,
    pub lasso_error: f64,
    pub overlap_lambda: f64,
    pub lasso_lambda: f64,
    pub converged: bool,
}

/// Aggregates for one grid cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub x_value: usize,
    pub k_active: usize,
    pub realized_support: usize,
    pub overlap_mean: f64,
    pub overlap_se: f64,
    pub lasso_mean: f64,
    pub lasso_se: f64,
    pub overlap_lambda_mean: f64,
    pub lasso_lambda_mean: f64,
    pub excluded: usize,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub p: usize,
    pub scale_factor: f64,
    pub trials: usize,
    pub sigma: f64,
    pub seed: u64,
    pub cells: Vec<CellResult>,
    pub records: Vec<TrialRecord>,
}

/// Selection outcome: the chosen level, its grid index, the fit at that
/// level on the full data, and the per-grid-point scores.
#[derive(Debug)]
pub struct SelectedLambda {
    pub lambda: f64,
    pub index: usize,
    pub fit: FitResult,
    pub scores: Vec<f64>,
}

/// Log-spaced grid from the activation threshold down to `min_ratio` times
/// it.
pub fn default_lambda_grid(
    instance: &ProblemInstance,
    groups: &GroupCollection,
    count: usize,
    min_ratio: f64,
) -> Vec<f64> {
    let top = lambda_max(instance, groups, None);
    log_grid(top, count, min_ratio)
}

fn log_grid(top: f64, count: usize, min_ratio: f64) -> Vec<f64> {
    if count <= 1 {
        return vec![top];
    }
    let log_top = top.ln();
    let log_bot = (top * min_ratio).ln();
    (0..count)
        .map(|i| (log_top + (log_bot - log_top) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Fits the path and returns the grid minimizer of the configured score.
pub fn select_lambda(
    instance: &ProblemInstance,
    groups: &GroupCollection,
    rule: LambdaRule,
    lambdas: &[f64],
    holdout_seed: u64,
) -> Result<SelectedLambda> {
    let base = SolverConfig {
        tolerance: 1e-6,
        max_sweeps: 4_000,
        ..SolverConfig::default()
    };
    match rule {
        LambdaRule::OracleRecovery => {
            let beta0 = instance.beta0().ok_or_else(|| {
                Error::InvalidParameter("oracle selection requires the ground truth".into())
            })?;
            let path = fit_path(instance, groups, lambdas, &base)?;
            let scores: Vec<f64> = path
                .iter()
                .map(|f| recovery_error(&f.beta_hat, beta0))
                .collect::<Result<_>>()?;
            let index = argmin(&scores);
            let fit = path.into_iter().nth(index).expect("index within path");
            Ok(SelectedLambda {
                lambda: lambdas[index],
                index,
                fit,
                scores,
            })
        }
        LambdaRule::Holdout { fraction } => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "holdout fraction must lie in (0,1), got {}",
                    fraction
                )));
            }
            let n = instance.n();
            let n_val = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = stream(holdout_seed, 0);
            // Fisher-Yates
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let (val_rows, train_rows) = order.split_at(n_val);
            let train = subset_rows(instance, train_rows)?;
            let path = fit_path(&train, groups, lambdas, &base)?;
            let scores: Vec<f64> = path
                .iter()
                .map(|f| {
                    let mut err = 0.0;
                    for &i in val_rows {
                        let mut pred = 0.0;
                        for j in 0..instance.p() {
                            pred += instance.x()[(i, j)] * f.beta_hat[j];
                        }
                        let d = instance.y()[i] - pred;
                        err += d * d;
                    }
                    err / val_rows.len() as f64
                })
                .collect();
            let index = argmin(&scores);
            let config = SolverConfig {
                lambda: lambdas[index],
                ..base
            };
            let fit = fit(instance, groups, &config)?;
            Ok(SelectedLambda {
                lambda: lambdas[index],
                index,
                fit,
                scores,
            })
        }
    }
}

fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    best
}

fn subset_rows(instance: &ProblemInstance, rows: &[usize]) -> Result<ProblemInstance> {
    let p = instance.p();
    let mut x = nalgebra::DMatrix::<f64>::zeros(rows.len(), p);
    let mut y = nalgebra::DVector::<f64>::zeros(rows.len());
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..p {
            x[(r, j)] = instance.x()[(i, j)];
        }
        y[r] = instance.y()[i];
    }
    // row subsets keep unit rows but not unit column diagonals
    let normalization = match instance.normalization() {
        crate::instance::Normalization::RowUnitNorm => crate::instance::Normalization::RowUnitNorm,
        _ => crate::instance::Normalization::None,
    };
    ProblemInstance::new(
        x,
        y,
        instance.beta0().cloned(),
        instance.sigma(),
        normalization,
    )
}

/// Recovery error against the degree of overlap at fixed n.
pub fn run_overlap_study(config: &ExperimentConfig) -> Result<ExperimentResult> {
    validate(config, ExperimentKind::OverlapStudy)?;
    let p = (FULL_P as f64 * config.scale_factor).round() as usize;
    let n = (FULL_N_OVERLAP as f64 * config.scale_factor).round() as usize;
    let overlaps: Vec<usize> = (1..=GROUP_SIZE).collect();
    run_cells(config, ExperimentKind::OverlapStudy, p, &overlaps, |o| {
        (*o, n)
    })
}

/// Recovery error against the sample size at overlap 4.
pub fn run_sample_size_study(config: &ExperimentConfig) -> Result<ExperimentResult> {
    validate(config, ExperimentKind::SampleSizeStudy)?;
    let p = (FULL_P as f64 * config.scale_factor).round() as usize;
    let base = (FULL_N_BASE as f64 * config.scale_factor).round() as usize;
    let sizes: Vec<usize> = (0..5).map(|j| base << j).collect();
    run_cells(config, ExperimentKind::SampleSizeStudy, p, &sizes, |nv| {
        (4, *nv)
    })
}

fn validate(config: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if config.kind != kind {
        return Err(Error::InvalidParameter(
            "config kind does not match the requested study".into(),
        ));
    }
    if !(config.scale_factor > 0.0 && config.scale_factor <= 1.0) {
        return Err(Error::InvalidParameter(
            "scale factor must lie in (0, 1]".into(),
        ));
    }
    let p = (FULL_P as f64 * config.scale_factor).round() as usize;
    if p < 3 * GROUP_SIZE {
        return Err(Error::InvalidParameter(format!(
            "scale factor {} shrinks p to {}, below three group widths",
            config.scale_factor, p
        )));
    }
    if config.trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    if !(config.sigma >= 0.0) {
        return Err(Error::InvalidParameter("sigma must be nonnegative".into()));
    }
    if config.grid_size == 0 || !(config.grid_min_ratio > 0.0 && config.grid_min_ratio < 1.0) {
        return Err(Error::InvalidParameter("bad lambda grid settings".into()));
    }
    Ok(())
}

fn run_cells(
    config: &ExperimentConfig,
    kind: ExperimentKind,
    p: usize,
    x_values: &[usize],
    cell_params: impl Fn(&usize) -> (usize, usize),
) -> Result<ExperimentResult> {
    let mut cells = Vec::with_capacity(x_values.len());
    let mut records = Vec::new();
    for (cell_idx, x_value) in x_values.iter().enumerate() {
        let started = std::time::Instant::now();
        let (overlap, n) = cell_params(x_value);
        let groups = GroupCollection::contiguous(p, GROUP_SIZE, overlap)?;
        let k = active_group_rule(
            config.support_rule,
            config.scale_factor,
            overlap,
            groups.group_count(),
        );
        let realized_support: usize = {
            let mut s: Vec<usize> = groups.groups().iter().take(k).flatten().copied().collect();
            s.sort_unstable();
            s.dedup();
            s.len()
        };
        let singles = GroupCollection::singletons(p);

        let trial_results: Vec<Result<TrialRecord>> = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let stream_id = ((cell_idx as u64) << 32) | trial as u64;
                let inst_seed: u64 = stream(config.seed, stream_id).random();
                let instance = generate_instance(&groups, n, k, config.sigma, inst_seed)?;
                let beta0 = instance.beta0().expect("generated instances carry beta0");

                let grid_o = default_lambda_grid(
                    &instance,
                    &groups,
                    config.grid_size,
                    config.grid_min_ratio,
                );
                let sel_o =
                    select_lambda(&instance, &groups, config.lambda_rule, &grid_o, inst_seed)?;
                let grid_l = default_lambda_grid(
                    &instance,
                    &singles,
                    config.grid_size,
                    config.grid_min_ratio,
                );
                let sel_l = select_lambda(
                    &instance,
                    &singles,
                    config.lambda_rule,
                    &grid_l,
                    inst_seed ^ 0x5851_f42d,
                )?;

                Ok(TrialRecord {
                    cell: cell_idx,
                    x_value: *x_value,
                    trial,
                    overlap_error: recovery_error(&sel_o.fit.beta_hat, beta0)?,
                    lasso_error: recovery_error(&sel_l.fit.beta_hat, beta0)?,
                    overlap_lambda: sel_o.lambda,
                    lasso_lambda: sel_l.lambda,
                    converged: sel_o.fit.converged && sel_l.fit.converged,
                })
            })
            .collect();

        let mut cell_records = Vec::with_capacity(config.trials);
        for r in trial_results {
            cell_records.push(r?);
        }
        let included: Vec<&TrialRecord> = cell_records.iter().filter(|r| r.converged).collect();
        let excluded = config.trials - included.len();
        let stats = |extract: fn(&TrialRecord) -> f64| -> (f64, f64) {
            if included.is_empty() {
                return (f64::NAN, f64::NAN);
            }
            let vals: Vec<f64> = included.iter().map(|r| extract(r)).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            if vals.len() < 2 {
                return (mean, f64::NAN);
            }
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (vals.len() - 1) as f64;
            (mean, (var / vals.len() as f64).sqrt())
        };
        let (overlap_mean, overlap_se) = stats(|r| r.overlap_error);
        let (lasso_mean, lasso_se) = stats(|r| r.lasso_error);
        let (overlap_lambda_mean, _) = stats(|r| r.overlap_lambda);
        let (lasso_lambda_mean, _) = stats(|r| r.lasso_lambda);

        cells.push(CellResult {
            x_value: *x_value,
            k_active: k,
            realized_support,
            overlap_mean,
            overlap_se,
            lasso_mean,
            lasso_se,
            overlap_lambda_mean,
            lasso_lambda_mean,
            excluded,
            runtime_secs: started.elapsed().as_secs_f64(),
        });
        records.extend(cell_records);
    }
    Ok(ExperimentResult {
        kind,
        p,
        scale_factor: config.scale_factor,
        trials: config.trials,
        sigma: config.sigma,
        seed: config.seed,
        cells,
        records,
    })
}
