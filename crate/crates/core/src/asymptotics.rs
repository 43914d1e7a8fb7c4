//! Support partitions, the decomposition-uniqueness falsifier, and the
//! large-sample distribution study for the adaptive estimator.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::decomposition::zero_threshold;
use crate::error::{Error, Result};
use crate::groups::GroupCollection;
use crate::instance::{Normalization, ProblemInstance};
use crate::norm::{overlap_norm_with, NormOptions};
use crate::rng::stream;
use crate::solver::{adaptive_weights, fit, SolverConfig};

/// The true support, its complement, and the induced three-way split of the
/// groups: fully inside the support, fully outside, or straddling it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportPartition {
    pub support: Vec<usize>,
    pub complement: Vec<usize>,
    pub groups_inside: Vec<usize>,
    pub groups_outside: Vec<usize>,
    pub groups_straddling: Vec<usize>,
}

/// Splits predictors by `|β⁰_i| > zero_tol` and classifies every group.
pub fn partition_support(
    beta0: &DVector<f64>,
    groups: &GroupCollection,
    zero_tol: f64,
) -> SupportPartition {
    let p = beta0.len();
    let in_support: Vec<bool> = (0..p).map(|j| beta0[j].abs() > zero_tol).collect();
    let support: Vec<usize> = (0..p).filter(|&j| in_support[j]).collect();
    let complement: Vec<usize> = (0..p).filter(|&j| !in_support[j]).collect();
    let mut groups_inside = Vec::new();
    let mut groups_outside = Vec::new();
    let mut groups_straddling = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        let hits = g.iter().filter(|&&j| in_support[j]).count();
        if hits == g.len() {
            groups_inside.push(gi);
        } else if hits == 0 {
            groups_outside.push(gi);
        } else {
            groups_straddling.push(gi);
        }
    }
    SupportPartition {
        support,
        complement,
        groups_inside,
        groups_outside,
        groups_straddling,
    }
}

/// True when some sub-collection covers exactly the support while the rest
/// covers exactly the complement; equivalent to "no straddling group" on a
/// collection that covers every predictor.
pub fn separation_of_support_holds(beta0: &DVector<f64>, groups: &GroupCollection) -> bool {
    let partition = partition_support(beta0, groups, 0.0);
    partition.groups_straddling.is_empty() && groups.covers_all()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssumptionVerdict {
    Consistent,
    Violated,
}

/// Evidence collected by [`check_assumption_correct`].
#[derive(Debug, Clone)]
pub struct UniquenessReport {
    pub verdict: AssumptionVerdict,
    /// Largest disagreement in part-norm patterns across restarts, relative
    /// to the vector scale.
    pub max_pattern_divergence: f64,
    /// Largest mass any minimizing decomposition of `β⁰` put on a straddling
    /// group.
    pub straddler_mass: f64,
    /// Active groups that could be dropped without changing the norm value.
    pub ambiguous_drops: Vec<usize>,
    /// Number of distinct sub-collections of inside groups whose union is the
    /// support (capped at 2; more than one means the selected structure is
    /// not identifiable).
    pub support_representations: usize,
    /// Probe vectors examined (the target plus perturbations).
    pub probes: usize,
}

/// Falsifier for the uniqueness assumption behind the adaptive asymptotics.
///
/// Re-solves the norm from several starts for `β⁰` and for random
/// perturbations within `radius`, comparing part-norm patterns; checks
/// whether any minimizing decomposition of `β⁰` loads a straddling group;
/// attempts to drop each active group and re-solve; and counts how many ways
/// the support can be written as a union of inside groups. Any trigger yields
/// `Violated`. A `Consistent` verdict is a failed falsification, not a proof.
pub fn check_assumption_correct(
    beta0: &DVector<f64>,
    groups: &GroupCollection,
    perturbations: usize,
    radius: f64,
    seed: u64,
) -> Result<UniquenessReport> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(
            "perturbation radius must be positive".into(),
        ));
    }
    if beta0.len() != groups.p() {
        return Err(Error::DimensionMismatch(
            "beta0 and groups disagree on p".into(),
        ));
    }
    let p = groups.p();
    let m = groups.group_count();
    let scale = 1.0 + beta0.norm();
    let pattern_tol = 1e-4 * scale;
    let mass_tol = 1e-6 * scale;
    let partition = partition_support(beta0, groups, 0.0);

    let solve = |vector: &DVector<f64>, init: Option<u64>| {
        overlap_norm_with(
            vector,
            groups,
            &NormOptions {
                tolerance: 1e-10,
                max_iters: 200_000,
                init_seed: init,
            },
        )
    };

    let starts_per_probe = 4usize;
    let mut max_pattern_divergence = 0.0_f64;
    let mut straddler_mass = 0.0_f64;
    let mut probes = 0usize;

    let mut rng = stream(seed, 0);
    for probe in 0..=perturbations {
        let vector = if probe == 0 {
            beta0.clone()
        } else {
            let mut dir = DVector::<f64>::zeros(p);
            for j in 0..p {
                dir[j] = rng.sample(StandardNormal);
            }
            // keep perturbations decomposable when the collection leaves a tail
            for j in groups.uncovered() {
                dir[j] = 0.0;
            }
            let len = dir.norm();
            if len == 0.0 {
                continue;
            }
            let u: f64 = rng.random_range(0.0..1.0);
            beta0 + dir * (radius * u / len)
        };
        probes += 1;
        let mut patterns: Vec<Vec<f64>> = Vec::with_capacity(starts_per_probe);
        for start in 0..starts_per_probe {
            let init = if start == 0 {
                None
            } else {
                Some(seed ^ (probe as u64 * 131 + start as u64))
            };
            let res = solve(&vector, init)?;
            let norms = res.decomposition.part_norms();
            if probe == 0 {
                let mass: f64 = partition
                    .groups_straddling
                    .iter()
                    .map(|&g| norms[g])
                    .sum();
                straddler_mass = straddler_mass.max(mass);
            }
            patterns.push(norms);
        }
        for a in 0..patterns.len() {
            for b in (a + 1)..patterns.len() {
                let div = (0..m)
                    .map(|g| (patterns[a][g] - patterns[b][g]).abs())
                    .fold(0.0_f64, f64::max);
                max_pattern_divergence = max_pattern_divergence.max(div);
            }
        }
    }

    // drop probes: re-solve with each active group removed
    let base = solve(beta0, None)?;
    let base_norms = base.decomposition.part_norms();
    let zt = zero_threshold(beta0.norm());
    let mut ambiguous_drops = Vec::new();
    for g in 0..m {
        if base_norms[g] <= zt {
            continue;
        }
        let mut keep: Vec<bool> = vec![true; m];
        keep[g] = false;
        if let Some(value) = restricted_value(beta0, groups, &keep)? {
            if value <= base.value + 1e-6 * (1.0 + base.value) {
                ambiguous_drops.push(g);
            }
        }
    }

    let support_representations = count_support_representations(&partition, groups, 2);

    let violated = max_pattern_divergence > pattern_tol
        || straddler_mass > mass_tol
        || !ambiguous_drops.is_empty()
        || support_representations > 1;
    Ok(UniquenessReport {
        verdict: if violated {
            AssumptionVerdict::Violated
        } else {
            AssumptionVerdict::Consistent
        },
        max_pattern_divergence,
        straddler_mass,
        ambiguous_drops,
        support_representations,
        probes,
    })
}

/// Norm value over the kept sub-collection, `None` when infeasible.
fn restricted_value(
    beta: &DVector<f64>,
    groups: &GroupCollection,
    keep: &[bool],
) -> Result<Option<f64>> {
    let p = groups.p();
    let mut covered = vec![false; p];
    for (gi, g) in groups.iter().enumerate() {
        if keep[gi] {
            for &j in g {
                covered[j] = true;
            }
        }
    }
    let zt = zero_threshold(beta.norm());
    for j in 0..p {
        if beta[j].abs() > zt && !covered[j] {
            return Ok(None);
        }
    }
    let sub_groups: Vec<Vec<usize>> = groups
        .groups()
        .iter()
        .enumerate()
        .filter(|(gi, _)| keep[*gi])
        .map(|(_, g)| g.clone())
        .collect();
    if sub_groups.is_empty() {
        return Ok(None);
    }
    let sub = GroupCollection::new(p, sub_groups)?;
    let mut masked = beta.clone();
    for j in 0..p {
        if !covered[j] {
            masked[j] = 0.0;
        }
    }
    Ok(Some(
        overlap_norm_with(
            &masked,
            &sub,
            &NormOptions {
                tolerance: 1e-10,
                max_iters: 200_000,
                init_seed: None,
            },
        )?
        .value,
    ))
}

/// Counts sub-collections of the inside groups whose union equals the
/// support, stopping once `cap` are found.
fn count_support_representations(
    partition: &SupportPartition,
    groups: &GroupCollection,
    cap: usize,
) -> usize {
    let inside = &partition.groups_inside;
    if partition.support.is_empty() || inside.is_empty() || inside.len() > 20 {
        return usize::from(!partition.support.is_empty() && !inside.is_empty());
    }
    let support: std::collections::BTreeSet<usize> = partition.support.iter().copied().collect();
    let mut found = 0usize;
    let subsets = 1u32 << inside.len();
    for mask in 1..subsets {
        let mut union = std::collections::BTreeSet::new();
        for (bit, &g) in inside.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                union.extend(groups.group(g).iter().copied());
            }
        }
        if union == support {
            found += 1;
            if found >= cap {
                return found;
            }
        }
    }
    found
}

/// Population design covariance for the sampling surrogate of a convergent
/// fixed design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesignCovariance {
    Identity,
    /// Geometric correlation `rho^|i-j|`.
    Ar1(f64),
}

impl DesignCovariance {
    pub fn matrix(&self, p: usize) -> DMatrix<f64> {
        match self {
            DesignCovariance::Identity => DMatrix::identity(p, p),
            DesignCovariance::Ar1(rho) => {
                DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))
            }
        }
    }
}

/// Study configuration: the sample-size grid, the weight exponent, the decay
/// rule `λ(n) = scale·n^(-exponent)`, and the sampling design.
#[derive(Debug, Clone)]
pub struct AsymptoticConfig {
    pub n_grid: Vec<usize>,
    pub gamma: f64,
    pub lambda_scale: f64,
    pub lambda_exponent: f64,
    pub trials: usize,
    pub seed: u64,
    pub sigma: f64,
    pub design: DesignCovariance,
}

/// Aggregates for one sample size.
#[derive(Debug, Clone)]
pub struct AsymptoticCell {
    pub n: usize,
    pub lambda: f64,
    /// Fraction of trials whose declared support matches the truth exactly.
    pub support_recovery_rate: f64,
    /// Fraction of trials declaring at least one off-support coordinate.
    pub false_positive_rate: f64,
    /// Sample covariance of `√n(β̂_H - β⁰_H)` across trials.
    pub empirical_covariance: DMatrix<f64>,
    pub target_covariance: DMatrix<f64>,
    pub frobenius_rel_error: f64,
    pub offsupport_median: f64,
    pub offsupport_p95: f64,
    pub offsupport_max: f64,
    pub excluded: usize,
}

#[derive(Debug, Clone)]
pub struct AsymptoticReport {
    pub cells: Vec<AsymptoticCell>,
    pub gamma: f64,
    pub lambda_scale: f64,
    pub lambda_exponent: f64,
    pub sigma: f64,
    pub trials: usize,
}

/// Monte Carlo distribution study for the adaptive estimator.
///
/// For each sample size: draw a design with rows i.i.d. from the configured
/// covariance, generate responses around `β⁰`, derive the adaptive weights
/// from the least-squares decomposition, fit at `λ(n)`, and record support
/// recovery plus the rescaled estimation error on the true support.
pub fn run_asymptotic_study(
    groups: &GroupCollection,
    beta0: &DVector<f64>,
    config: &AsymptoticConfig,
) -> Result<AsymptoticReport> {
    let p = groups.p();
    if beta0.len() != p {
        return Err(Error::DimensionMismatch(
            "beta0 and groups disagree on p".into(),
        ));
    }
    if !(config.gamma > 0.0) {
        return Err(Error::InvalidParameter("gamma must be positive".into()));
    }
    // both rate conditions must hold: sqrt(n)·λ -> 0 and n^((γ+1)/2)·λ -> ∞
    let a = config.lambda_exponent;
    if !(a > 0.5 && a < (config.gamma + 1.0) / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda exponent {} violates the rate window (0.5, {})",
            a,
            (config.gamma + 1.0) / 2.0
        )));
    }
    if !(config.lambda_scale > 0.0) {
        return Err(Error::InvalidParameter(
            "lambda scale must be positive".into(),
        ));
    }
    if config.trials == 0 || config.n_grid.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one trial and one sample size".into(),
        ));
    }
    for w in config.n_grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidParameter(
                "the sample-size grid must be strictly increasing".into(),
            ));
        }
    }
    if !(config.sigma > 0.0) {
        return Err(Error::InvalidParameter("sigma must be positive".into()));
    }

    let partition = partition_support(beta0, groups, 0.0);
    let h = &partition.support;
    let pop = config.design.matrix(p);
    let chol = Cholesky::new(pop.clone())
        .ok_or_else(|| Error::SingularDesign("population covariance not positive definite".into()))?;
    let pop_h = DMatrix::from_fn(h.len(), h.len(), |a, b| pop[(h[a], h[b])]);
    let target_covariance = if h.is_empty() {
        DMatrix::zeros(0, 0)
    } else {
        let inv = Cholesky::new(pop_h.clone())
            .ok_or_else(|| Error::SingularDesign("support covariance block singular".into()))?
            .inverse();
        inv * (config.sigma * config.sigma)
    };

    struct Trial {
        converged: bool,
        exact: bool,
        false_positive: bool,
        dev: DVector<f64>,
        offsupport_max: f64,
    }

    let mut cells = Vec::with_capacity(config.n_grid.len());
    for (ni, &n) in config.n_grid.iter().enumerate() {
        if n <= p {
            return Err(Error::InvalidParameter(format!(
                "sample size {} must exceed p = {} for the least-squares weights",
                n, p
            )));
        }
        let lambda = config.lambda_scale * (n as f64).powf(-a);
        let trials: Vec<Trial> = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream(config.seed, (ni * config.trials + t) as u64);
                let mut x = DMatrix::<f64>::zeros(n, p);
                let identity = matches!(config.design, DesignCovariance::Identity);
                for i in 0..n {
                    let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let row = if identity { z } else { chol.l() * z };
                    for j in 0..p {
                        x[(i, j)] = row[j];
                    }
                }
                let mut y = &x * beta0;
                for i in 0..n {
                    let e: f64 = rng.sample(StandardNormal);
                    y[i] += config.sigma * e;
                }
                let instance = ProblemInstance::new(
                    x,
                    y,
                    Some(beta0.clone()),
                    Some(config.sigma),
                    Normalization::None,
                )
                .expect("dimensions consistent");
                let weights = match adaptive_weights(&instance, groups, config.gamma) {
                    Ok(w) => w,
                    Err(_) => {
                        return Trial {
                            converged: false,
                            exact: false,
                            false_positive: false,
                            dev: DVector::zeros(h.len()),
                            offsupport_max: f64::NAN,
                        }
                    }
                };
                let fit_config = SolverConfig {
                    lambda,
                    tolerance: 1e-8,
                    max_sweeps: 20_000,
                    weights: Some(weights),
                    ..SolverConfig::default()
                };
                let res = fit(&instance, groups, &fit_config).expect("validated inputs");
                if !res.converged {
                    return Trial {
                        converged: false,
                        exact: false,
                        false_positive: false,
                        dev: DVector::zeros(h.len()),
                        offsupport_max: f64::NAN,
                    };
                }
                let max_abs = res.beta_hat.amax();
                let declare_tol = 1e-6 * max_abs + 1e-12;
                let declared: Vec<bool> =
                    (0..p).map(|j| res.beta_hat[j].abs() > declare_tol).collect();
                let exact = (0..p).all(|j| declared[j] == (beta0[j] != 0.0));
                let false_positive = partition.complement.iter().any(|&j| declared[j]);
                let dev = DVector::from_fn(h.len(), |k, _| {
                    (n as f64).sqrt() * (res.beta_hat[h[k]] - beta0[h[k]])
                });
                let offsupport_max = partition
                    .complement
                    .iter()
                    .map(|&j| res.beta_hat[j].abs())
                    .fold(0.0_f64, f64::max);
                Trial {
                    converged: true,
                    exact,
                    false_positive,
                    dev,
                    offsupport_max,
                }
            })
            .collect();

        let excluded = trials.iter().filter(|t| !t.converged).count();
        let included: Vec<&Trial> = trials.iter().filter(|t| t.converged).collect();
        let count = included.len().max(1);
        let recovery = included.iter().filter(|t| t.exact).count() as f64 / count as f64;
        let fp_rate = included.iter().filter(|t| t.false_positive).count() as f64 / count as f64;

        let dim = h.len();
        let mut empirical = DMatrix::<f64>::zeros(dim, dim);
        let mut frob = 0.0;
        if dim > 0 && included.len() > 1 {
            let mut mean = DVector::<f64>::zeros(dim);
            for t in &included {
                mean += &t.dev;
            }
            mean /= included.len() as f64;
            for t in &included {
                let c = &t.dev - &mean;
                empirical += &c * c.transpose();
            }
            empirical /= (included.len() - 1) as f64;
            // enforce exact symmetry against accumulation order effects
            for a in 0..dim {
                for b in (a + 1)..dim {
                    let v = 0.5 * (empirical[(a, b)] + empirical[(b, a)]);
                    empirical[(a, b)] = v;
                    empirical[(b, a)] = v;
                }
            }
            let target_norm = target_covariance.norm();
            if target_norm > 0.0 {
                frob = (&empirical - &target_covariance).norm() / target_norm;
            }
        }

        let mut offs: Vec<f64> = included
            .iter()
            .map(|t| t.offsupport_max)
            .filter(|v| v.is_finite())
            .collect();
        offs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let quantile = |q: f64| -> f64 {
            if offs.is_empty() {
                return 0.0;
            }
            let idx = ((q * offs.len() as f64).ceil() as usize).clamp(1, offs.len()) - 1;
            offs[idx]
        };

        cells.push(AsymptoticCell {
            n,
            lambda,
            support_recovery_rate: recovery,
            false_positive_rate: fp_rate,
            empirical_covariance: empirical,
            target_covariance: target_covariance.clone(),
            frobenius_rel_error: frob,
            offsupport_median: quantile(0.5),
            offsupport_p95: quantile(0.95),
            offsupport_max: offs.last().copied().unwrap_or(0.0),
            excluded,
        });
    }

    Ok(AsymptoticReport {
        cells,
        gamma: config.gamma,
        lambda_scale: config.lambda_scale,
        lambda_exponent: config.lambda_exponent,
        sigma: config.sigma,
        trials: config.trials,
    })
}
