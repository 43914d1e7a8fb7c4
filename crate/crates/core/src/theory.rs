//! Finite-sample constants and empirical verification of the prediction and
//! estimation bounds.
//!
//! Everything here is driven by the closed-form constants: the regularization
//! level, the exponent `q` controlling the nominal probability `1 - M^(1-q)`,
//! the per-group spectral factors `ρ_g`, and the restricted-eigenvalue
//! constant `κ(s)`. The latter has no tractable exact form, so it is
//! estimated by sampled minimization over cone-feasible directions followed
//! by a stochastic local refinement. The Monte Carlo verifiers redraw noise
//! around a fixed design, refit, and compare both bound sides per trial.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::groups::GroupCollection;
use crate::instance::{Normalization, ProblemInstance};
use crate::norm::{overlap_norm, structured_sparsity};
use crate::rng::stream;
use crate::solver::{fit, SolverConfig};

/// Which regularization level and exponent a verifier runs under.
///
/// `Theorem` is the main statement; `Alternate` trades the group-size factor
/// into the bracket; `LemmaFour` is the oracle-inequality level, which omits
/// the overlap-degree factor and whose exponent carries no spectral term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaVariant {
    Theorem,
    Alternate,
    LemmaFour,
}

/// Closed-form constants for a given design, noise level, and sparsity
/// budget.
#[derive(Debug, Clone)]
pub struct TheoryConstants {
    pub lambda_theorem: f64,
    pub lambda_alt: f64,
    pub lambda_lemma4: f64,
    pub a: f64,
    pub q: f64,
    pub q_alt: f64,
    pub q_lemma4: f64,
    /// Per-group `ρ_g = λ_max((X_gᵀX_g/n)^{-1/2})`, one when the group Gram
    /// is orthonormal.
    pub rho_g: Vec<f64>,
    /// Minimal eigenvalue of `XᵀX/n`.
    pub rho_x: f64,
    /// `√(ρ_X/(M·overlap_degree))`: the κ value certified by positive
    /// definiteness. Every cone-feasible ratio is at least this, so it
    /// floors the sampled estimate.
    pub kappa_sufficient: f64,
    pub s: usize,
    pub sigma: f64,
    pub n: usize,
    pub m: usize,
    pub overlap_degree: usize,
    pub max_group: usize,
    pub min_group: usize,
}

impl TheoryConstants {
    pub fn lambda(&self, variant: LambdaVariant) -> f64 {
        match variant {
            LambdaVariant::Theorem => self.lambda_theorem,
            LambdaVariant::Alternate => self.lambda_alt,
            LambdaVariant::LemmaFour => self.lambda_lemma4,
        }
    }

    pub fn q(&self, variant: LambdaVariant) -> f64 {
        match variant {
            LambdaVariant::Theorem => self.q,
            LambdaVariant::Alternate => self.q_alt,
            LambdaVariant::LemmaFour => self.q_lemma4,
        }
    }

    /// `1 - M^(1-q)`, clamped to `[0, 1]`.
    pub fn nominal_rate(&self, variant: LambdaVariant) -> f64 {
        let q = self.q(variant);
        (1.0 - (self.m as f64).powf(1.0 - q)).clamp(0.0, 1.0)
    }

    fn bracket(&self) -> f64 {
        let mg = self.max_group as f64;
        mg + self.a * mg.sqrt() * (self.m as f64).ln()
    }

    /// Right-hand side of the prediction bound at the given κ.
    pub fn prediction_bound(&self, kappa: f64) -> f64 {
        64.0 * self.sigma * self.sigma / (kappa * kappa * self.n as f64) * self.bracket()
    }

    /// Right-hand side of the estimation bound at the given κ.
    pub fn estimation_bound(&self, kappa: f64) -> f64 {
        32.0 * self.sigma / (kappa * (self.n as f64).sqrt()) * self.bracket().sqrt()
    }

    /// True when the structured budget `√(max|g|)·log M + max|g|` is below
    /// `log p`, the regime where the procedure has a predictive advantage
    /// over the plain lasso.
    pub fn lasso_advantage_regime(&self, p: usize) -> bool {
        let mg = self.max_group as f64;
        mg.sqrt() * (self.m as f64).ln() + mg < (p as f64).ln()
    }
}

/// Evaluates the constants on a unit-diagonal design.
pub fn compute_constants(
    instance: &ProblemInstance,
    groups: &GroupCollection,
    a: f64,
    sigma: f64,
    s: usize,
) -> Result<TheoryConstants> {
    if !(a > 8.0) {
        return Err(Error::InvalidParameter(format!(
            "the constant A must exceed 8, got {}",
            a
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(
            "sigma must be positive for the constants".into(),
        ));
    }
    let m = groups.group_count();
    if m < 2 {
        return Err(Error::InvalidParameter(
            "the constants require at least two groups".into(),
        ));
    }
    if s < 1 || s > m {
        return Err(Error::InvalidParameter(format!(
            "s must lie in [1, {}], got {}",
            m, s
        )));
    }
    if instance.normalization() != Normalization::ColumnUnitDiag {
        return Err(Error::InvalidParameter(
            "constants require the column-unit-diag normalization".into(),
        ));
    }
    instance.check_normalization(1e-6)?;
    if groups.p() != instance.p() {
        return Err(Error::DimensionMismatch(
            "groups and instance disagree on p".into(),
        ));
    }

    let nf = instance.n() as f64;
    let mut rho_g = Vec::with_capacity(m);
    for g in groups.iter() {
        let len = g.len();
        let mut gram = DMatrix::<f64>::zeros(len, len);
        for (x, &jx) in g.iter().enumerate() {
            for (y, &jy) in g.iter().enumerate().skip(x) {
                let v = instance.x().column(jx).dot(&instance.x().column(jy)) / nf;
                gram[(x, y)] = v;
                gram[(y, x)] = v;
            }
        }
        let eig = SymmetricEigen::new(gram);
        let min_eig = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig <= 0.0 {
            return Err(Error::SingularDesign(format!(
                "group Gram has minimal eigenvalue {:.3e}; rho_g undefined",
                min_eig
            )));
        }
        rho_g.push(1.0 / min_eig.sqrt());
    }

    let gram_full = instance.x().transpose() * instance.x() / nf;
    let eig = SymmetricEigen::new(gram_full);
    let rho_x = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);

    let overlap_degree = groups.overlap_degree();
    let max_group = groups.max_group_size();
    let min_group = groups.min_group_size();
    let (mg, mn, go, mf) = (
        max_group as f64,
        min_group as f64,
        overlap_degree as f64,
        m as f64,
    );
    let log_m = mf.ln();
    let min_rho_inv2 = rho_g
        .iter()
        .map(|r| 1.0 / (r * r))
        .fold(f64::INFINITY, f64::min);

    let lambda_theorem =
        2.0 * sigma * (mg * go).sqrt() / nf.sqrt() * (1.0 + a * log_m / mg.sqrt()).sqrt();
    let q = min_rho_inv2 * (a * mn.sqrt() / 8.0).min(8.0 * log_m);
    let lambda_alt = 2.0 * sigma * go.sqrt() / nf.sqrt() * (mg + a * log_m).sqrt();
    let q_alt = min_rho_inv2 * (a / 8.0).min(8.0 * log_m / mg);
    let lambda_lemma4 = 2.0 * sigma * mg.sqrt() / nf.sqrt() * (1.0 + a * log_m / mg.sqrt()).sqrt();
    let q_lemma4 = (a * mn.sqrt() / 8.0).min(8.0 * log_m);
    let kappa_sufficient = (rho_x.max(0.0) / (mf * go)).sqrt();

    Ok(TheoryConstants {
        lambda_theorem,
        lambda_alt,
        lambda_lemma4,
        a,
        q,
        q_alt,
        q_lemma4,
        rho_g,
        rho_x,
        kappa_sufficient,
        s,
        sigma,
        n: instance.n(),
        m,
        overlap_degree,
        max_group,
        min_group,
    })
}

/// Sampled upper estimate of the restricted-eigenvalue constant `κ(s)`.
#[derive(Debug, Clone)]
pub struct KappaEstimate {
    /// Minimum ratio over all cone-feasible samples; an upper estimate of
    /// the true infimum.
    pub kappa_hat: f64,
    /// Direction attaining the minimum.
    pub witness: DVector<f64>,
    /// The group set `J` of the witness.
    pub witness_groups: Vec<usize>,
    /// Positive-definiteness floor from the constants chain.
    pub kappa_sufficient: f64,
    pub samples_used: usize,
    pub skipped: usize,
}

struct ConeProblem<'a> {
    gram: &'a DMatrix<f64>,
    groups: &'a GroupCollection,
}

impl ConeProblem<'_> {
    /// Ratio for a candidate direction under the recomputed norm-minimizing
    /// decomposition, or `None` when the candidate leaves the cone.
    fn ratio(&self, delta: &DVector<f64>, j_set: &[bool]) -> Option<f64> {
        let norm = overlap_norm(delta, self.groups, 1e-9).ok()?;
        let part_norms = norm.decomposition.part_norms();
        let mut inside = 0.0;
        let mut outside = 0.0;
        for (g, &nm) in part_norms.iter().enumerate() {
            if j_set[g] {
                inside += nm;
            } else {
                outside += nm;
            }
        }
        let scale = inside + outside;
        if inside <= 1e-12 * (1.0 + scale) {
            return None;
        }
        if outside > 3.0 * inside + 1e-8 * (1.0 + scale) {
            return None;
        }
        let quad = (self.gram * delta).dot(delta);
        if quad < 0.0 {
            return Some(0.0);
        }
        Some(quad.sqrt() / inside)
    }
}

/// Monte Carlo upper estimate of `κ(s)`: random cone-feasible directions
/// (with boundary-structured candidates mixed in), decompositions recomputed
/// through the norm solver, followed by stochastic local refinement of the
/// best candidate.
pub fn estimate_kappa(
    instance: &ProblemInstance,
    groups: &GroupCollection,
    s: usize,
    samples: usize,
    seed: u64,
) -> Result<KappaEstimate> {
    let m = groups.group_count();
    if s < 1 || s > m {
        return Err(Error::InvalidParameter(format!(
            "s must lie in [1, {}], got {}",
            m, s
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    if groups.p() != instance.p() {
        return Err(Error::DimensionMismatch(
            "groups and instance disagree on p".into(),
        ));
    }
    let p = groups.p();
    let nf = instance.n() as f64;
    let gram = instance.x().transpose() * instance.x() / nf;
    let problem = ConeProblem {
        gram: &gram,
        groups,
    };

    let candidates: Vec<Option<(f64, DVector<f64>, Vec<usize>)>> = (0..samples)
        .into_par_iter()
        .map(|idx| {
            let mut rng = stream(seed, idx as u64);
            let j_groups: Vec<usize> = index_sample(&mut rng, m, s).into_vec();
            let mut j_set = vec![false; m];
            for &g in &j_groups {
                j_set[g] = true;
            }
            let delta = match idx % 3 {
                // uniform mass on the selected groups, empty complement;
                // exact minimizer shape for orthonormal designs
                0 => {
                    let mut d = DVector::<f64>::zeros(p);
                    for &g in &j_groups {
                        for &j in groups.group(g) {
                            d[j] = 1.0;
                        }
                    }
                    d
                }
                // random group-supported parts, complement rescaled near the
                // cone boundary
                1 => cone_draw(&mut rng, groups, &j_set, 0.999),
                // random parts with light complement mass
                _ => {
                    let u: f64 = rng.random_range(0.0..0.5);
                    cone_draw(&mut rng, groups, &j_set, u)
                }
            };
            problem.ratio(&delta, &j_set).map(|r| (r, delta, j_groups))
        })
        .collect();

    let mut best: Option<(f64, DVector<f64>, Vec<usize>)> = None;
    let mut skipped = 0;
    for cand in candidates {
        match cand {
            None => skipped += 1,
            Some((r, d, j)) => {
                if best.as_ref().map(|(b, _, _)| r < *b).unwrap_or(true) {
                    best = Some((r, d, j));
                }
            }
        }
    }
    let (mut best_ratio, mut witness, witness_groups) = best.ok_or_else(|| {
        Error::InvalidParameter("no cone-feasible sample survived; raise the sample count".into())
    })?;

    // stochastic local refinement around the best candidate
    let mut j_set = vec![false; m];
    for &g in &witness_groups {
        j_set[g] = true;
    }
    let mut rng = stream(seed, samples as u64 + 1);
    let mut step = 0.25;
    for _ in 0..400 {
        let mut proposal = witness.clone();
        let scale = witness.norm() / (p as f64).sqrt();
        for j in 0..p {
            let g: f64 = rng.sample(StandardNormal);
            proposal[j] += step * scale * g;
        }
        match problem.ratio(&proposal, &j_set) {
            Some(r) if r < best_ratio => {
                best_ratio = r;
                witness = proposal;
                step = (step * 1.3).min(1.0);
            }
            _ => {
                step *= 0.7;
                if step < 1e-5 {
                    break;
                }
            }
        }
    }

    let eig = SymmetricEigen::new(gram.clone());
    let rho_x = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let kappa_sufficient = (rho_x.max(0.0) / (m as f64 * groups.overlap_degree() as f64)).sqrt();

    Ok(KappaEstimate {
        kappa_hat: best_ratio,
        witness,
        witness_groups,
        kappa_sufficient,
        samples_used: samples - skipped,
        skipped,
    })
}

/// Random direction with Gaussian parts on the selected groups and the
/// complement parts rescaled so their norm sum is `u·3` times the selected
/// sum.
fn cone_draw<R: Rng>(
    rng: &mut R,
    groups: &GroupCollection,
    j_set: &[bool],
    u: f64,
) -> DVector<f64> {
    let p = groups.p();
    let mut inside_sum = 0.0;
    let mut inside = DVector::<f64>::zeros(p);
    let mut outside = DVector::<f64>::zeros(p);
    let mut outside_sum = 0.0;
    for (gi, g) in groups.iter().enumerate() {
        let mut part = DVector::<f64>::zeros(p);
        let mut norm2 = 0.0;
        for &j in g {
            let v: f64 = rng.sample(StandardNormal);
            part[j] = v;
            norm2 += v * v;
        }
        let norm = norm2.sqrt();
        if j_set[gi] {
            inside_sum += norm;
            inside += part;
        } else {
            outside_sum += norm;
            outside += part;
        }
    }
    if outside_sum > 0.0 {
        let target = u * 3.0 * inside_sum;
        outside *= target / outside_sum;
    }
    inside + outside
}

/// One Monte Carlo trial of the finite-sample bounds.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub prediction_lhs: f64,
    pub estimation_lhs: f64,
    pub holds_prediction: bool,
    pub holds_estimation: bool,
    pub converged: bool,
}

/// Aggregate report of a bound-verification run.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub lambda: f64,
    pub q: f64,
    pub kappa: f64,
    pub prediction_rhs: f64,
    pub estimation_rhs: f64,
    pub trials: usize,
    pub excluded: usize,
    /// False when more than 5% of trials were excluded for non-convergence.
    pub valid: bool,
    pub prediction_hold_rate: f64,
    pub estimation_hold_rate: f64,
    /// Fraction of included trials where both inequalities hold.
    pub empirical_hold_rate: f64,
    pub nominal_rate: f64,
    pub outcomes: Vec<TrialOutcome>,
}

/// Redraws noise around the instance's fixed design and ground truth, refits
/// at the variant's regularization level, and evaluates both bound sides.
pub fn verify_theorem1(
    instance: &ProblemInstance,
    groups: &GroupCollection,
    constants: &TheoryConstants,
    kappa: f64,
    variant: LambdaVariant,
    trials: usize,
    seed: u64,
) -> Result<BoundReport> {
    if variant == LambdaVariant::LemmaFour {
        return Err(Error::InvalidParameter(
            "the oracle-inequality level has no prediction/estimation bound; \
             use the theorem or alternate variant"
                .into(),
        ));
    }
    let beta0 = instance
        .beta0()
        .ok_or_else(|| Error::InvalidParameter("verification requires beta0".into()))?
        .clone();
    let sigma = constants.sigma;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter("kappa must be positive".into()));
    }
    let lambda = constants.lambda(variant);
    let prediction_rhs = constants.prediction_bound(kappa);
    let estimation_rhs = constants.estimation_bound(kappa);
    let nf = instance.n() as f64;
    let signal = instance.x() * &beta0;

    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let mut y = signal.clone();
            for i in 0..y.len() {
                let e: f64 = rng.sample(StandardNormal);
                y[i] += sigma * e;
            }
            let trial_instance = instance
                .with_response(y)
                .expect("response swap preserves dimensions");
            let config = SolverConfig {
                lambda,
                tolerance: 1e-7,
                max_sweeps: 20_000,
                ..SolverConfig::default()
            };
            let res = fit(&trial_instance, groups, &config).expect("validated inputs");
            if !res.converged {
                return TrialOutcome {
                    prediction_lhs: f64::NAN,
                    estimation_lhs: f64::NAN,
                    holds_prediction: false,
                    holds_estimation: false,
                    converged: false,
                };
            }
            let err = &res.beta_hat - &beta0;
            let prediction_lhs = (instance.x() * &err).norm_squared() / nf;
            let estimation_lhs = overlap_norm(&err, groups, 1e-8)
                .expect("error vector is decomposable")
                .value;
            TrialOutcome {
                prediction_lhs,
                estimation_lhs,
                holds_prediction: prediction_lhs <= prediction_rhs,
                holds_estimation: estimation_lhs <= estimation_rhs,
                converged: true,
            }
        })
        .collect();

    let excluded = outcomes.iter().filter(|o| !o.converged).count();
    let included = (trials - excluded).max(1);
    let pred_holds = outcomes
        .iter()
        .filter(|o| o.converged && o.holds_prediction)
        .count();
    let est_holds = outcomes
        .iter()
        .filter(|o| o.converged && o.holds_estimation)
        .count();
    let both = outcomes
        .iter()
        .filter(|o| o.converged && o.holds_prediction && o.holds_estimation)
        .count();

    Ok(BoundReport {
        lambda,
        q: constants.q(variant),
        kappa,
        prediction_rhs,
        estimation_rhs,
        trials,
        excluded,
        valid: (excluded as f64) <= 0.05 * trials as f64,
        prediction_hold_rate: pred_holds as f64 / included as f64,
        estimation_hold_rate: est_holds as f64 / included as f64,
        empirical_hold_rate: both as f64 / included as f64,
        nominal_rate: constants.nominal_rate(variant),
        outcomes,
    })
}

/// Tail bound `exp(-min(x, x²/D)/8)` for the upper deviation of a
/// chi-squared variable with `D` degrees of freedom above `D + x`.
pub fn chi2_tail_bound(d: usize, x: f64) -> Result<f64> {
    if d < 1 {
        return Err(Error::InvalidParameter(
            "degrees of freedom must be at least 1".into(),
        ));
    }
    if !(x > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "the deviation x must be positive, got {}",
            x
        )));
    }
    Ok((-(x.min(x * x / d as f64)) / 8.0).exp())
}

/// Outcome of the grouped Hölder inequality check
/// `αᵀβ ≤ √overlap_degree · max_g‖α_g‖ · ‖β‖₂,₁,𝒢`.
#[derive(Debug, Clone)]
pub struct HolderCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn holder_extension_check(
    alpha: &DVector<f64>,
    beta: &DVector<f64>,
    groups: &GroupCollection,
) -> Result<HolderCheck> {
    if alpha.len() != groups.p() || beta.len() != groups.p() {
        return Err(Error::DimensionMismatch(
            "vectors must have length p".into(),
        ));
    }
    let lhs = alpha.dot(beta);
    let max_block = groups
        .iter()
        .map(|g| g.iter().map(|&j| alpha[j] * alpha[j]).sum::<f64>().sqrt())
        .fold(0.0_f64, f64::max);
    let norm = overlap_norm(beta, groups, 1e-9)?;
    let rhs = (groups.overlap_degree() as f64).sqrt() * max_block * norm.value;
    Ok(HolderCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-8,
    })
}

/// One trial of the oracle inequality at the true coefficient vector.
#[derive(Debug, Clone)]
pub struct OracleTrial {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub converged: bool,
}

/// Aggregate report for the oracle-inequality verification.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub lambda: f64,
    pub q: f64,
    pub nominal_rate: f64,
    pub hold_rate: f64,
    pub trials: usize,
    pub excluded: usize,
    pub valid: bool,
    /// Whether `√(max|g|)·log M + max|g| < log p` for this configuration.
    pub advantage_regime: bool,
    pub outcomes: Vec<OracleTrial>,
}

/// Per trial: fit at the variant's level and check
/// `(1/n)‖X(β̂-β⁰)‖² + λ‖β̂-β⁰‖₂,₁,𝒢 ≤ 4λ Σ_{g∈J(β⁰)} ‖v_g^{β̂-β⁰}‖`.
pub fn verify_oracle_inequality(
    instance: &ProblemInstance,
    groups: &GroupCollection,
    constants: &TheoryConstants,
    variant: LambdaVariant,
    trials: usize,
    seed: u64,
) -> Result<OracleReport> {
    let beta0 = instance
        .beta0()
        .ok_or_else(|| Error::InvalidParameter("verification requires beta0".into()))?
        .clone();
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let lambda = constants.lambda(variant);
    let sigma = constants.sigma;
    let nf = instance.n() as f64;
    let signal = instance.x() * &beta0;

    // J(beta0): active groups of the norm-minimizing decomposition
    let sparsity = structured_sparsity(&beta0, groups, 1e-8)?;
    let mut j_set = vec![false; groups.group_count()];
    for &g in &sparsity.active_set {
        j_set[g] = true;
    }

    let outcomes: Vec<OracleTrial> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let mut y = signal.clone();
            for i in 0..y.len() {
                let e: f64 = rng.sample(StandardNormal);
                y[i] += sigma * e;
            }
            let trial_instance = instance
                .with_response(y)
                .expect("response swap preserves dimensions");
            let config = SolverConfig {
                lambda,
                tolerance: 1e-7,
                max_sweeps: 20_000,
                ..SolverConfig::default()
            };
            let res = fit(&trial_instance, groups, &config).expect("validated inputs");
            if !res.converged {
                return OracleTrial {
                    lhs: f64::NAN,
                    rhs: f64::NAN,
                    holds: false,
                    converged: false,
                };
            }
            let err = &res.beta_hat - &beta0;
            let norm = overlap_norm(&err, groups, 1e-8).expect("error vector is decomposable");
            let lhs = (instance.x() * &err).norm_squared() / nf + lambda * norm.value;
            let inside: f64 = norm
                .decomposition
                .part_norms()
                .iter()
                .enumerate()
                .filter(|(g, _)| j_set[*g])
                .map(|(_, nm)| nm)
                .sum();
            let rhs = 4.0 * lambda * inside;
            OracleTrial {
                lhs,
                rhs,
                holds: lhs <= rhs + 1e-12,
                converged: true,
            }
        })
        .collect();

    let excluded = outcomes.iter().filter(|o| !o.converged).count();
    let included = (trials - excluded).max(1);
    let holds = outcomes.iter().filter(|o| o.converged && o.holds).count();
    Ok(OracleReport {
        lambda,
        q: constants.q(variant),
        nominal_rate: constants.nominal_rate(variant),
        hold_rate: holds as f64 / included as f64,
        trials,
        excluded,
        valid: (excluded as f64) <= 0.05 * trials as f64,
        advantage_regime: constants.lasso_advantage_regime(instance.p()),
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_instance_with;
    use approx::assert_relative_eq;

    fn unit_diag_instance(
        p: usize,
        size: usize,
        overlap: usize,
        n: usize,
        k: usize,
        sigma: f64,
        seed: u64,
    ) -> (ProblemInstance, GroupCollection) {
        let gc = GroupCollection::contiguous(p, size, overlap).unwrap();
        let inst =
            generate_instance_with(&gc, n, k, sigma, seed, Normalization::ColumnUnitDiag).unwrap();
        (inst, gc)
    }

    #[test]
    fn lambda_formula_cross_checked_against_direct_evaluation() {
        // p = 31, size-4 groups with overlap 2: M = 10, max|g| = 4
        let (inst, gc) = unit_diag_instance(31, 4, 2, 100, 1, 1.0, 21);
        assert_eq!(gc.group_count(), 10);
        assert_eq!(gc.overlap_degree(), 2);
        let c = compute_constants(&inst, &gc, 9.0, 1.0, 2).unwrap();
        // independently coded evaluation through logs
        let expected = (2.0_f64.ln() + 0.5 * (4.0_f64 * 2.0).ln() - 0.5 * 100.0_f64.ln()
            + 0.5 * (1.0 + 9.0 * 10.0_f64.ln() / 2.0).ln())
        .exp();
        assert_relative_eq!(c.lambda_theorem, expected, epsilon = 1e-12);

        // doubling sigma doubles the level exactly
        let c2 = compute_constants(&inst, &gc, 9.0, 2.0, 2).unwrap();
        assert_eq!(c2.lambda_theorem, 2.0 * c.lambda_theorem);
        assert_eq!(c2.lambda_alt, 2.0 * c.lambda_alt);
        assert_eq!(c2.lambda_lemma4, 2.0 * c.lambda_lemma4);
        // q does not involve sigma
        assert_eq!(c2.q, c.q);
    }

    #[test]
    fn constants_reject_bad_inputs() {
        let (inst, gc) = unit_diag_instance(16, 4, 1, 40, 1, 0.5, 22);
        assert!(compute_constants(&inst, &gc, 8.0, 0.5, 1).is_err());
        assert!(compute_constants(&inst, &gc, 9.0, 0.0, 1).is_err());
        assert!(compute_constants(&inst, &gc, 9.0, 0.5, 9).is_err());
        let row_norm = crate::instance::generate_instance(&gc, 40, 1, 0.5, 22).unwrap();
        assert!(compute_constants(&row_norm, &gc, 9.0, 0.5, 1).is_err());
    }

    #[test]
    fn orthonormal_group_grams_give_unit_rho() {
        // identity design: X = sqrt(n) I with n = p
        let p = 12;
        let x = DMatrix::<f64>::identity(p, p) * (p as f64).sqrt();
        let y = DVector::<f64>::zeros(p);
        let inst = ProblemInstance::new(
            x,
            y,
            Some(DVector::zeros(p)),
            Some(1.0),
            Normalization::ColumnUnitDiag,
        )
        .unwrap();
        let gc = GroupCollection::contiguous(p, 4, 1).unwrap();
        let c = compute_constants(&inst, &gc, 9.0, 1.0, 1).unwrap();
        for r in &c.rho_g {
            assert_relative_eq!(*r, 1.0, epsilon = 1e-10);
        }
        assert_relative_eq!(c.rho_x, 1.0, epsilon = 1e-10);
        // singleton groups reduce the level to the disjoint case with unit sizes
        let singles = GroupCollection::singletons(p);
        let cs = compute_constants(&inst, &singles, 9.0, 1.0, 1).unwrap();
        let expected = 2.0 / (p as f64).sqrt() * (1.0 + 9.0 * (p as f64).ln()).sqrt();
        assert_relative_eq!(cs.lambda_theorem, expected, epsilon = 1e-12);
    }

    #[test]
    fn chi2_bound_values() {
        assert_relative_eq!(
            chi2_tail_bound(1, 1.0).unwrap(),
            (-0.125_f64).exp(),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            chi2_tail_bound(4, 8.0).unwrap(),
            (-1.0_f64).exp(),
            epsilon = 1e-12
        );
        assert!(chi2_tail_bound(3, 1e-9).unwrap() > 0.999999);
        assert!(chi2_tail_bound(3, 0.0).is_err());
        assert!(chi2_tail_bound(0, 1.0).is_err());
    }

    #[test]
    fn holder_check_basic_cases() {
        let gc = GroupCollection::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let zero = holder_extension_check(
            &DVector::zeros(3),
            &DVector::from_vec(vec![1.0, 2.0, 3.0]),
            &gc,
        )
        .unwrap();
        assert!(zero.holds);
        assert_eq!(zero.lhs, 0.0);

        // single-group support with alpha = beta: Cauchy-Schwarz equality up
        // to the overlap factor
        let gc_dis = GroupCollection::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let v = DVector::from_vec(vec![1.0, 2.0, 0.0, 0.0]);
        let check = holder_extension_check(&v, &v, &gc_dis).unwrap();
        assert!(check.holds);
        assert_relative_eq!(check.lhs, check.rhs, epsilon = 1e-9);
    }

    #[test]
    fn holder_holds_on_random_draws() {
        // starts 0,3,6,9 with size 4 cover all of p = 13
        let gc = GroupCollection::contiguous(13, 4, 2).unwrap();
        assert!(gc.covers_all());
        let mut rng = stream(77, 0);
        for _ in 0..50 {
            let a = DVector::from_fn(13, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = DVector::from_fn(13, |_, _| rng.sample::<f64, _>(StandardNormal));
            assert!(holder_extension_check(&a, &b, &gc).unwrap().holds);
        }
    }

    #[test]
    fn kappa_identity_singletons_matches_inverse_sqrt_s() {
        // X'X/n = I via X = sqrt(n) I
        let p = 64;
        let x = DMatrix::<f64>::identity(p, p) * (p as f64).sqrt();
        let inst = ProblemInstance::new(
            x,
            DVector::zeros(p),
            None,
            None,
            Normalization::ColumnUnitDiag,
        )
        .unwrap();
        let gc = GroupCollection::singletons(p);
        for s in [1usize, 2, 4] {
            let est = estimate_kappa(&inst, &gc, s, 300, 5).unwrap();
            let target = 1.0 / (s as f64).sqrt();
            assert!(
                est.kappa_hat >= target - 1e-9,
                "estimate below the analytic minimum"
            );
            assert!(
                est.kappa_hat <= target * 1.05,
                "s = {}: estimate {} not within 5% of {}",
                s,
                est.kappa_hat,
                target
            );
        }
        // s = M: uniform direction meets the sufficiency floor exactly
        let est = estimate_kappa(&inst, &gc, p, 200, 6).unwrap();
        assert_relative_eq!(est.kappa_hat, est.kappa_sufficient, epsilon = 1e-8);
    }

    #[test]
    fn kappa_estimate_respects_sufficiency_floor() {
        let (inst, gc) = unit_diag_instance(24, 6, 2, 60, 1, 0.5, 30);
        let est = estimate_kappa(&inst, &gc, 2, 400, 9).unwrap();
        assert!(est.kappa_hat > 0.0);
        assert!(
            est.kappa_hat >= est.kappa_sufficient - 1e-8,
            "sampled ratio {} under the positive-definite floor {}",
            est.kappa_hat,
            est.kappa_sufficient
        );
    }

    #[test]
    fn enlarging_groups_never_relaxes_the_constants() {
        // adding an overlapping group: kappa_sufficient cannot grow and the
        // level cannot shrink once M and the overlap degree grow
        let (inst, _) = unit_diag_instance(12, 4, 1, 48, 1, 0.5, 31);
        let base = GroupCollection::new(
            12,
            vec![(0..4).collect(), (4..8).collect(), (8..12).collect()],
        )
        .unwrap();
        let larger = GroupCollection::new(
            12,
            vec![
                (0..4).collect(),
                (4..8).collect(),
                (8..12).collect(),
                (2..6).collect(),
            ],
        )
        .unwrap();
        let c0 = compute_constants(&inst, &base, 9.0, 0.5, 1).unwrap();
        let c1 = compute_constants(&inst, &larger, 9.0, 0.5, 1).unwrap();
        assert!(c1.kappa_sufficient <= c0.kappa_sufficient + 1e-12);
        assert!(c1.lambda_theorem >= c0.lambda_theorem - 1e-12);
    }

    #[test]
    fn theorem_bounds_hold_in_a_small_monte_carlo() {
        let (inst, gc) = unit_diag_instance(24, 6, 2, 72, 1, 0.1, 33);
        let sp = structured_sparsity(inst.beta0().unwrap(), &gc, 1e-8).unwrap();
        let s = sp.group_count.max(1);
        let c = compute_constants(&inst, &gc, 9.0, 0.1, s).unwrap();
        let kappa = estimate_kappa(&inst, &gc, s, 300, 12).unwrap();
        let report = verify_theorem1(
            &inst,
            &gc,
            &c,
            kappa.kappa_hat,
            LambdaVariant::Theorem,
            40,
            13,
        )
        .unwrap();
        assert!(report.valid);
        assert!(
            report.empirical_hold_rate >= report.nominal_rate,
            "hold rate {} under nominal {}",
            report.empirical_hold_rate,
            report.nominal_rate
        );
    }

    #[test]
    fn oracle_inequality_holds_in_a_small_monte_carlo() {
        let (inst, gc) = unit_diag_instance(24, 6, 2, 72, 1, 0.1, 34);
        let c = compute_constants(&inst, &gc, 9.0, 0.1, 1).unwrap();
        for variant in [LambdaVariant::LemmaFour, LambdaVariant::Theorem] {
            let report = verify_oracle_inequality(&inst, &gc, &c, variant, 40, 14).unwrap();
            assert!(report.valid);
            assert!(
                report.hold_rate >= report.nominal_rate,
                "hold rate {} under nominal {}",
                report.hold_rate,
                report.nominal_rate
            );
        }
    }
}
