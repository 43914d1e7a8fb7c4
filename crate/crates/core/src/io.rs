//! File interchange: JSON layouts for instances, groups, vectors, and result
//! reports, plus CSV export for tabular data.
//!
//! Conventions: matrices are row-major arrays of rows; predictor and group
//! indices are 1-based in every file; numbers that may be non-finite
//! (frozen-at-zero weights, undefined standard errors) serialize as null.
//! Serialization is field-order stable, so identical inputs produce byte
//! identical files.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::asymptotics::AsymptoticReport;
use crate::error::{Error, Result};
use crate::experiments::{ExperimentKind, ExperimentResult};
use crate::groups::GroupCollection;
use crate::instance::{Normalization, ProblemInstance};
use crate::norm::NormResult;
use crate::solver::FitResult;
use crate::theory::{BoundReport, KappaEstimate, OracleReport, TheoryConstants};

fn opt(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Group collection layout: `{"p": ..., "groups": [[1-based indices], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupsFile {
    pub p: usize,
    pub groups: Vec<Vec<usize>>,
}

pub fn groups_to_file(groups: &GroupCollection) -> GroupsFile {
    GroupsFile {
        p: groups.p(),
        groups: groups
            .groups()
            .iter()
            .map(|g| g.iter().map(|&j| j + 1).collect())
            .collect(),
    }
}

pub fn groups_from_file(file: &GroupsFile) -> Result<GroupCollection> {
    let mut zero_based = Vec::with_capacity(file.groups.len());
    for (gi, g) in file.groups.iter().enumerate() {
        let mut out = Vec::with_capacity(g.len());
        for &j in g {
            if j == 0 {
                return Err(Error::InvalidGroups(format!(
                    "group {} contains index 0; file indices are 1-based",
                    gi + 1
                )));
            }
            out.push(j - 1);
        }
        zero_based.push(out);
    }
    GroupCollection::new(file.p, zero_based)
}

pub fn write_groups(path: &Path, groups: &GroupCollection) -> Result<()> {
    write_json(path, &groups_to_file(groups))
}

pub fn read_groups(path: &Path) -> Result<GroupCollection> {
    let file: GroupsFile = read_json(path)?;
    groups_from_file(&file)
}

/// Instance layout with the design stored as an array of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub p: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub beta0: Option<Vec<f64>>,
    pub sigma: Option<f64>,
    pub normalization: Normalization,
}

pub fn instance_to_file(instance: &ProblemInstance) -> InstanceFile {
    let (n, p) = (instance.n(), instance.p());
    InstanceFile {
        n,
        p,
        x: (0..n)
            .map(|i| (0..p).map(|j| instance.x()[(i, j)]).collect())
            .collect(),
        y: instance.y().iter().copied().collect(),
        beta0: instance.beta0().map(|b| b.iter().copied().collect()),
        sigma: instance.sigma(),
        normalization: instance.normalization(),
    }
}

pub fn instance_from_file(file: &InstanceFile) -> Result<ProblemInstance> {
    if file.x.len() != file.n {
        return Err(Error::DimensionMismatch(format!(
            "x has {} rows but n = {}",
            file.x.len(),
            file.n
        )));
    }
    for (i, row) in file.x.iter().enumerate() {
        if row.len() != file.p {
            return Err(Error::DimensionMismatch(format!(
                "row {} has {} entries but p = {}",
                i + 1,
                row.len(),
                file.p
            )));
        }
    }
    let x = DMatrix::from_fn(file.n, file.p, |i, j| file.x[i][j]);
    let y = DVector::from_vec(file.y.clone());
    let beta0 = file.beta0.as_ref().map(|b| DVector::from_vec(b.clone()));
    ProblemInstance::new(x, y, beta0, file.sigma, file.normalization)
}

pub fn write_instance(path: &Path, instance: &ProblemInstance) -> Result<()> {
    write_json(path, &instance_to_file(instance))
}

pub fn read_instance(path: &Path) -> Result<ProblemInstance> {
    let file: InstanceFile = read_json(path)?;
    instance_from_file(&file)
}

/// Coefficient vectors are bare JSON arrays.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let values: Vec<f64> = read_json(path)?;
    Ok(DVector::from_vec(values))
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    let values: Vec<f64> = v.iter().copied().collect();
    write_json(path, &values)
}

/// One latent part: its group, the member indices, and the values there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartEntry {
    pub group: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

fn part_entries(
    groups: &GroupCollection,
    parts: &[DVector<f64>],
) -> Vec<PartEntry> {
    parts
        .iter()
        .enumerate()
        .map(|(gi, v)| PartEntry {
            group: gi + 1,
            indices: groups.group(gi).iter().map(|&j| j + 1).collect(),
            values: groups.group(gi).iter().map(|&j| v[j]).collect(),
        })
        .collect()
}

/// Norm evaluation output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormResultFile {
    pub value: f64,
    pub converged: bool,
    pub tolerance: f64,
    pub iterations: usize,
    pub duality_gap: f64,
    pub active_groups: Vec<usize>,
    pub active_count: usize,
    pub parts: Vec<PartEntry>,
}

pub fn norm_result_to_file(result: &NormResult, groups: &GroupCollection) -> NormResultFile {
    NormResultFile {
        value: result.value,
        converged: result.converged,
        tolerance: result.tolerance,
        iterations: result.iterations,
        duality_gap: result.duality_gap,
        active_groups: result
            .decomposition
            .active_set()
            .iter()
            .map(|&g| g + 1)
            .collect(),
        active_count: result.decomposition.active_count(),
        parts: part_entries(groups, result.decomposition.parts()),
    }
}

/// Fit output. Frozen weights serialize as null.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResultFile {
    pub lambda: f64,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub kkt_residual: f64,
    pub beta_hat: Vec<f64>,
    pub weights: Option<Vec<Option<f64>>>,
    pub active_groups: Vec<usize>,
    pub parts: Vec<PartEntry>,
}

pub fn fit_result_to_file(result: &FitResult, groups: &GroupCollection) -> FitResultFile {
    FitResultFile {
        lambda: result.lambda,
        converged: result.converged,
        iterations: result.iterations,
        objective: result.objective,
        kkt_residual: result.kkt_residual,
        beta_hat: result.beta_hat.iter().copied().collect(),
        weights: result
            .weights
            .as_ref()
            .map(|w| w.iter().map(|&x| opt(x)).collect()),
        active_groups: result
            .decomposition
            .active_set()
            .iter()
            .map(|&g| g + 1)
            .collect(),
        parts: part_entries(groups, result.decomposition.parts()),
    }
}

/// Flattened constants for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsFile {
    pub lambda_theorem: f64,
    pub lambda_alt: f64,
    pub lambda_lemma4: f64,
    pub a: f64,
    pub q: f64,
    pub q_alt: f64,
    pub q_lemma4: f64,
    pub rho_g: Vec<f64>,
    pub rho_x: f64,
    pub kappa_sufficient: f64,
    pub s: usize,
    pub sigma: f64,
    pub n: usize,
    pub m: usize,
    pub overlap_degree: usize,
    pub max_group: usize,
    pub min_group: usize,
}

pub fn constants_to_file(c: &TheoryConstants) -> ConstantsFile {
    ConstantsFile {
        lambda_theorem: c.lambda_theorem,
        lambda_alt: c.lambda_alt,
        lambda_lemma4: c.lambda_lemma4,
        a: c.a,
        q: c.q,
        q_alt: c.q_alt,
        q_lemma4: c.q_lemma4,
        rho_g: c.rho_g.clone(),
        rho_x: c.rho_x,
        kappa_sufficient: c.kappa_sufficient,
        s: c.s,
        sigma: c.sigma,
        n: c.n,
        m: c.m,
        overlap_degree: c.overlap_degree,
        max_group: c.max_group,
        min_group: c.min_group,
    }
}

/// Bound-verification report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReportFile {
    pub lambda: f64,
    pub q: f64,
    pub kappa: f64,
    pub prediction_rhs: f64,
    pub estimation_rhs: f64,
    pub trials: usize,
    pub excluded: usize,
    pub valid: bool,
    pub prediction_hold_rate: f64,
    pub estimation_hold_rate: f64,
    pub empirical_hold_rate: f64,
    pub nominal_rate: f64,
}

pub fn bound_report_to_file(report: &BoundReport) -> BoundReportFile {
    BoundReportFile {
        lambda: report.lambda,
        q: report.q,
        kappa: report.kappa,
        prediction_rhs: report.prediction_rhs,
        estimation_rhs: report.estimation_rhs,
        trials: report.trials,
        excluded: report.excluded,
        valid: report.valid,
        prediction_hold_rate: report.prediction_hold_rate,
        estimation_hold_rate: report.estimation_hold_rate,
        empirical_hold_rate: report.empirical_hold_rate,
        nominal_rate: report.nominal_rate,
    }
}

/// Per-trial CSV for a bound report: both sides of both inequalities.
pub fn bound_trials_csv(report: &BoundReport) -> String {
    let mut out = String::from(
        "trial,converged,prediction_lhs,prediction_rhs,estimation_lhs,estimation_rhs,holds\n",
    );
    for (t, o) in report.outcomes.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t,
            o.converged,
            csv_num(o.prediction_lhs),
            csv_num(report.prediction_rhs),
            csv_num(o.estimation_lhs),
            csv_num(report.estimation_rhs),
            o.holds_prediction && o.holds_estimation
        ));
    }
    out
}

/// Oracle-inequality report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReportFile {
    pub lambda: f64,
    pub q: f64,
    pub nominal_rate: f64,
    pub hold_rate: f64,
    pub trials: usize,
    pub excluded: usize,
    pub valid: bool,
    pub advantage_regime: bool,
}

pub fn oracle_report_to_file(report: &OracleReport) -> OracleReportFile {
    OracleReportFile {
        lambda: report.lambda,
        q: report.q,
        nominal_rate: report.nominal_rate,
        hold_rate: report.hold_rate,
        trials: report.trials,
        excluded: report.excluded,
        valid: report.valid,
        advantage_regime: report.advantage_regime,
    }
}

pub fn oracle_trials_csv(report: &OracleReport) -> String {
    let mut out = String::from("trial,converged,lhs,rhs,holds\n");
    for (t, o) in report.outcomes.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            t,
            o.converged,
            csv_num(o.lhs),
            csv_num(o.rhs),
            o.holds
        ));
    }
    out
}

/// Restricted-eigenvalue estimate output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaFile {
    pub kappa_hat: f64,
    pub kappa_sufficient: f64,
    pub witness_groups: Vec<usize>,
    pub witness: Vec<f64>,
    pub samples_used: usize,
    pub skipped: usize,
}

pub fn kappa_to_file(est: &KappaEstimate) -> KappaFile {
    KappaFile {
        kappa_hat: est.kappa_hat,
        kappa_sufficient: est.kappa_sufficient,
        witness_groups: est.witness_groups.iter().map(|&g| g + 1).collect(),
        witness: est.witness.iter().copied().collect(),
        samples_used: est.samples_used,
        skipped: est.skipped,
    }
}

/// One sample-size cell of the distribution study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticCellFile {
    pub n: usize,
    pub lambda: f64,
    pub support_recovery_rate: f64,
    pub false_positive_rate: f64,
    pub frobenius_rel_error: f64,
    pub offsupport_median: f64,
    pub offsupport_p95: f64,
    pub offsupport_max: f64,
    pub excluded: usize,
    pub empirical_covariance: Vec<Vec<f64>>,
    pub target_covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticReportFile {
    pub gamma: f64,
    pub lambda_scale: f64,
    pub lambda_exponent: f64,
    pub sigma: f64,
    pub trials: usize,
    pub cells: Vec<AsymptoticCellFile>,
}

pub fn asymptotic_report_to_file(report: &AsymptoticReport) -> AsymptoticReportFile {
    AsymptoticReportFile {
        gamma: report.gamma,
        lambda_scale: report.lambda_scale,
        lambda_exponent: report.lambda_exponent,
        sigma: report.sigma,
        trials: report.trials,
        cells: report
            .cells
            .iter()
            .map(|c| AsymptoticCellFile {
                n: c.n,
                lambda: c.lambda,
                support_recovery_rate: c.support_recovery_rate,
                false_positive_rate: c.false_positive_rate,
                frobenius_rel_error: c.frobenius_rel_error,
                offsupport_median: c.offsupport_median,
                offsupport_p95: c.offsupport_p95,
                offsupport_max: c.offsupport_max,
                excluded: c.excluded,
                empirical_covariance: matrix_rows(&c.empirical_covariance),
                target_covariance: matrix_rows(&c.target_covariance),
            })
            .collect(),
    }
}

pub fn asymptotic_cells_csv(report: &AsymptoticReport) -> String {
    let mut out = String::from(
        "n,lambda,support_recovery_rate,false_positive_rate,frobenius_rel_error,\
         offsupport_median,offsupport_p95,offsupport_max,excluded\n",
    );
    for c in &report.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            c.n,
            csv_num(c.lambda),
            csv_num(c.support_recovery_rate),
            csv_num(c.false_positive_rate),
            csv_num(c.frobenius_rel_error),
            csv_num(c.offsupport_median),
            csv_num(c.offsupport_p95),
            csv_num(c.offsupport_max),
            c.excluded
        ));
    }
    out
}

/// Study output: per-cell aggregates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentCellFile {
    pub x_value: usize,
    pub k_active: usize,
    pub realized_support: usize,
    pub overlap_mean: Option<f64>,
    pub overlap_se: Option<f64>,
    pub lasso_mean: Option<f64>,
    pub lasso_se: Option<f64>,
    pub overlap_lambda_mean: Option<f64>,
    pub lasso_lambda_mean: Option<f64>,
    pub excluded: usize,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResultFile {
    pub experiment: String,
    pub p: usize,
    pub scale_factor: f64,
    pub trials: usize,
    pub sigma: f64,
    pub seed: u64,
    pub cells: Vec<ExperimentCellFile>,
}

pub fn experiment_result_to_file(result: &ExperimentResult) -> ExperimentResultFile {
    ExperimentResultFile {
        experiment: match result.kind {
            ExperimentKind::OverlapStudy => "overlap".into(),
            ExperimentKind::SampleSizeStudy => "sample-size".into(),
        },
        p: result.p,
        scale_factor: result.scale_factor,
        trials: result.trials,
        sigma: result.sigma,
        seed: result.seed,
        cells: result
            .cells
            .iter()
            .map(|c| ExperimentCellFile {
                x_value: c.x_value,
                k_active: c.k_active,
                realized_support: c.realized_support,
                overlap_mean: opt(c.overlap_mean),
                overlap_se: opt(c.overlap_se),
                lasso_mean: opt(c.lasso_mean),
                lasso_se: opt(c.lasso_se),
                overlap_lambda_mean: opt(c.overlap_lambda_mean),
                lasso_lambda_mean: opt(c.lasso_lambda_mean),
                excluded: c.excluded,
                runtime_secs: c.runtime_secs,
            })
            .collect(),
    }
}

pub fn experiment_trials_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(
        "cell,x_value,trial,overlap_error,lasso_error,overlap_lambda,lasso_lambda,converged\n",
    );
    for r in &result.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.cell,
            r.x_value,
            r.trial,
            csv_num(r.overlap_error),
            csv_num(r.lasso_error),
            csv_num(r.overlap_lambda),
            csv_num(r.lasso_lambda),
            r.converged
        ));
    }
    out
}

/// Plot data matching the study figures: one row per cell, mean recovery
/// error and standard error per estimator.
pub fn experiment_plot_csv(result: &ExperimentResult) -> String {
    let x_name = match result.kind {
        ExperimentKind::OverlapStudy => "overlap",
        ExperimentKind::SampleSizeStudy => "n",
    };
    let mut out = format!("{},overlap_mean,overlap_se,lasso_mean,lasso_se\n", x_name);
    for c in &result.cells {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.x_value,
            csv_num(c.overlap_mean),
            csv_num(c.overlap_se),
            csv_num(c.lasso_mean),
            csv_num(c.lasso_se)
        ));
    }
    out
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn csv_num(v: f64) -> String {
    if v.is_finite() {
        format!("{}", v)
    } else {
        String::from("")
    }
}

/// Row-major CSV of a matrix, no header.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| csv_num(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// One value per line.
pub fn vector_csv(v: &DVector<f64>) -> String {
    let mut out = String::new();
    for x in v.iter() {
        out.push_str(&csv_num(*x));
        out.push('\n');
    }
    out
}

/// `predictor,value` rows, 1-based.
pub fn coefficients_csv(beta: &DVector<f64>) -> String {
    let mut out = String::from("predictor,value\n");
    for (j, x) in beta.iter().enumerate() {
        out.push_str(&format!("{},{}\n", j + 1, csv_num(*x)));
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
