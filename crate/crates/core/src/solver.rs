//! The overlapping grouped lasso estimator.
//!
//! Minimizes `(1/n)‖y − Xβ‖² + 2λ Σ_g λ_g ‖v_g‖` through the duplicated
//! design: one latent coefficient per (group, member) pair, so the penalty
//! becomes an ordinary disjoint group penalty and cyclic block coordinate
//! descent applies. Each block update solves its subproblem exactly: a group
//! soft-threshold when the block Gram is the identity, otherwise a one
//! dimensional root-find on the block norm after a cached eigendecomposition
//! of `X_gᵀX_g/n`. The stopping rule is the maximum blockwise KKT residual.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::decomposition::{zero_threshold, Decomposition};
use crate::error::{Error, Result};
use crate::groups::GroupCollection;
use crate::instance::{ols_fit, ProblemInstance};
use crate::norm::overlap_norm;

/// The duplicated design `X̃ = [X_g]_g`: group sub-matrices concatenated
/// column-wise, with maps between duplicated and original coordinates.
#[derive(Debug, Clone)]
pub struct DuplicatedDesign {
    x_tilde: DMatrix<f64>,
    offsets: Vec<usize>,
    back: Vec<usize>,
    p: usize,
}

/// Builds the duplicated design for an instance under a group collection.
pub fn duplicate_design(
    instance: &ProblemInstance,
    groups: &GroupCollection,
) -> Result<DuplicatedDesign> {
    if groups.p() != instance.p() {
        return Err(Error::DimensionMismatch(format!(
            "groups are over p = {} but the instance has p = {}",
            groups.p(),
            instance.p()
        )));
    }
    let n = instance.n();
    let total = groups.duplicated_len();
    let mut x_tilde = DMatrix::<f64>::zeros(n, total);
    let mut offsets = Vec::with_capacity(groups.group_count());
    let mut back = Vec::with_capacity(total);
    let mut col = 0;
    for g in groups.iter() {
        offsets.push(col);
        for &j in g {
            x_tilde.set_column(col, &instance.x().column(j));
            back.push(j);
            col += 1;
        }
    }
    Ok(DuplicatedDesign {
        x_tilde,
        offsets,
        back,
        p: instance.p(),
    })
}

impl DuplicatedDesign {
    pub fn x_tilde(&self) -> &DMatrix<f64> {
        &self.x_tilde
    }

    pub fn column_count(&self) -> usize {
        self.x_tilde.ncols()
    }

    /// Column range of group `g` inside the duplicated matrix.
    pub fn block_range(&self, g: usize) -> std::ops::Range<usize> {
        let start = self.offsets[g];
        let end = if g + 1 < self.offsets.len() {
            self.offsets[g + 1]
        } else {
            self.x_tilde.ncols()
        };
        start..end
    }

    /// Original predictor index of each duplicated column.
    pub fn back_map(&self) -> &[usize] {
        &self.back
    }

    /// Sums duplicated coefficients back to a length-`p` vector.
    pub fn fold(&self, dup: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::<f64>::zeros(self.p);
        for (col, &j) in self.back.iter().enumerate() {
            out[j] += dup[col];
        }
        out
    }
}

/// Fit configuration.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Stopping threshold on the maximum blockwise KKT residual.
    pub tolerance: f64,
    /// Cap on full block-coordinate sweeps.
    pub max_sweeps: usize,
    /// Per-group weights `λ_g`; `f64::INFINITY` freezes a group at zero.
    pub weights: Option<Vec<f64>>,
    /// Duplicated coefficients to start from (path fitting).
    pub warm_start: Option<DVector<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            tolerance: 1e-8,
            max_sweeps: 50_000,
            weights: None,
            warm_start: None,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }
}

/// Outcome of a fit: the estimate, its latent decomposition, and convergence
/// diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta_hat: DVector<f64>,
    pub decomposition: Decomposition,
    pub lambda: f64,
    pub weights: Option<Vec<f64>>,
    /// Block-coordinate sweeps performed.
    pub iterations: usize,
    pub objective: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    /// Objective value at the end of every sweep, for descent checks.
    pub objective_sweeps: Vec<f64>,
}

struct BlockCache {
    /// eigenvectors of X_gᵀX_g/n
    q: DMatrix<f64>,
    /// eigenvalues, nonnegative up to roundoff
    d: DVector<f64>,
    identity: bool,
}

fn block_caches(instance: &ProblemInstance, groups: &GroupCollection) -> Vec<BlockCache> {
    let n = instance.n() as f64;
    groups
        .iter()
        .map(|g| {
            let len = g.len();
            let mut gram = DMatrix::<f64>::zeros(len, len);
            for (a, &ja) in g.iter().enumerate() {
                for (b, &jb) in g.iter().enumerate().skip(a) {
                    let v = instance.x().column(ja).dot(&instance.x().column(jb)) / n;
                    gram[(a, b)] = v;
                    gram[(b, a)] = v;
                }
            }
            let mut identity = true;
            'outer: for a in 0..len {
                for b in 0..len {
                    let target = if a == b { 1.0 } else { 0.0 };
                    if (gram[(a, b)] - target).abs() > 1e-12 {
                        identity = false;
                        break 'outer;
                    }
                }
            }
            let eig = SymmetricEigen::new(gram);
            BlockCache {
                q: eig.eigenvectors,
                d: eig.eigenvalues,
                identity,
            }
        })
        .collect()
}

/// Exact minimizer of `(1/n)‖r − X_g w‖² + 2θ‖w‖` given the block score
/// `b = X_gᵀ r_partial / n` and the cached Gram eigendecomposition.
fn block_update(cache: &BlockCache, b: &DVector<f64>, theta: f64) -> DVector<f64> {
    let bnorm = b.norm();
    if theta > 0.0 && bnorm <= theta {
        return DVector::zeros(b.len());
    }
    if cache.identity {
        if theta == 0.0 {
            return b.clone();
        }
        return b * (1.0 - theta / bnorm);
    }
    let dmax = cache.d.iter().cloned().fold(0.0_f64, f64::max);
    if dmax <= 1e-14 {
        return DVector::zeros(b.len());
    }
    let cutoff = 1e-12 * dmax;
    let mut c = cache.q.transpose() * b;
    for i in 0..c.len() {
        if cache.d[i] <= cutoff {
            c[i] = 0.0;
        }
    }
    if theta == 0.0 {
        // least-norm block minimizer
        let mut scaled = c;
        for i in 0..scaled.len() {
            scaled[i] = if cache.d[i] > cutoff {
                scaled[i] / cache.d[i]
            } else {
                0.0
            };
        }
        return &cache.q * scaled;
    }
    // solve sum_i c_i^2 / (d_i nu + theta)^2 = 1 for the block norm nu
    let cnorm = c.norm();
    if cnorm <= theta {
        return DVector::zeros(b.len());
    }
    let g_of = |nu: f64| -> (f64, f64) {
        let mut val = 0.0;
        let mut deriv = 0.0;
        for i in 0..c.len() {
            if c[i] == 0.0 {
                continue;
            }
            let den = cache.d[i] * nu + theta;
            let t = c[i] / den;
            val += t * t;
            deriv += -2.0 * c[i] * c[i] * cache.d[i] / (den * den * den);
        }
        (val, deriv)
    };
    let mut lo = 0.0_f64;
    let mut hi = ((cnorm - theta) / dmax).max(1e-300);
    for _ in 0..200 {
        if g_of(hi).0 <= 1.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    let mut nu = 0.5 * (lo + hi);
    for _ in 0..100 {
        let (val, deriv) = g_of(nu);
        if (val - 1.0).abs() <= 1e-14 {
            break;
        }
        if val > 1.0 {
            lo = nu;
        } else {
            hi = nu;
        }
        let cand = if deriv != 0.0 {
            nu - (val - 1.0) / deriv
        } else {
            nu
        };
        nu = if cand > lo && cand < hi {
            cand
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * (1.0 + hi) {
            break;
        }
    }
    let mut w = c;
    for i in 0..w.len() {
        let den = cache.d[i] * nu + theta;
        w[i] = w[i] * nu / den;
    }
    &cache.q * w
}

/// Blockwise first-order residual at the current iterate.
fn block_kkt(score: &DVector<f64>, w: &DVector<f64>, theta: f64) -> f64 {
    let wn = w.norm();
    if wn > 0.0 {
        (score - w * (theta / wn)).norm()
    } else {
        (score.norm() - theta).max(0.0)
    }
}

fn validate_config(groups: &GroupCollection, config: &SolverConfig) -> Result<Vec<f64>> {
    if config.lambda < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lambda must be nonnegative, got {}",
            config.lambda
        )));
    }
    if !(config.tolerance > 0.0) {
        return Err(Error::InvalidParameter(
            "solver tolerance must be positive".into(),
        ));
    }
    let weights = match &config.weights {
        None => vec![1.0; groups.group_count()],
        Some(w) => {
            if w.len() != groups.group_count() {
                return Err(Error::DimensionMismatch(format!(
                    "{} weights for {} groups",
                    w.len(),
                    groups.group_count()
                )));
            }
            for (g, &wg) in w.iter().enumerate() {
                if wg.is_nan() || wg < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "weight for group {} must be nonnegative, got {}",
                        g + 1,
                        wg
                    )));
                }
            }
            w.clone()
        }
    };
    Ok(weights)
}

/// Fits the overlapping grouped lasso at `config.lambda`.
pub fn fit(
    instance: &ProblemInstance,
    groups: &GroupCollection,
    config: &SolverConfig,
) -> Result<FitResult> {
    if groups.p() != instance.p() {
        return Err(Error::DimensionMismatch(format!(
            "groups are over p = {} but the instance has p = {}",
            groups.p(),
            instance.p()
        )));
    }
    let weights = validate_config(groups, config)?;
    let caches = block_caches(instance, groups);
    fit_with_caches(instance, groups, config, &weights, &caches)
}

fn fit_with_caches(
    instance: &ProblemInstance,
    groups: &GroupCollection,
    config: &SolverConfig,
    weights: &[f64],
    caches: &[BlockCache],
) -> Result<FitResult> {
    let n = instance.n();
    let nf = n as f64;
    let m = groups.group_count();
    let total = groups.duplicated_len();
    let lambda = config.lambda;

    let mut blocks: Vec<DVector<f64>> = match &config.warm_start {
        None => groups.iter().map(|g| DVector::zeros(g.len())).collect(),
        Some(start) => {
            if start.len() != total {
                return Err(Error::DimensionMismatch(format!(
                    "warm start has {} duplicated coefficients, expected {}",
                    start.len(),
                    total
                )));
            }
            let mut out = Vec::with_capacity(m);
            let mut off = 0;
            for g in groups.iter() {
                out.push(DVector::from_iterator(
                    g.len(),
                    (0..g.len()).map(|k| start[off + k]),
                ));
                off += g.len();
            }
            out
        }
    };
    // frozen groups hold zero regardless of the start
    for (gi, &wg) in weights.iter().enumerate() {
        if wg.is_infinite() {
            blocks[gi].fill(0.0);
        }
    }

    let residual_from = |blocks: &[DVector<f64>]| -> DVector<f64> {
        let mut fitted = DVector::<f64>::zeros(n);
        for (gi, g) in groups.iter().enumerate() {
            for (k, &j) in g.iter().enumerate() {
                let w = blocks[gi][k];
                if w != 0.0 {
                    fitted.axpy(w, &instance.x().column(j).clone_owned(), 1.0);
                }
            }
        }
        instance.y() - fitted
    };

    let mut r = residual_from(&blocks);

    let penalty = |blocks: &[DVector<f64>]| -> f64 {
        weights
            .iter()
            .enumerate()
            .filter(|(_, wg)| wg.is_finite())
            .map(|(gi, wg)| wg * blocks[gi].norm())
            .sum::<f64>()
    };

    let mut objective_sweeps = Vec::new();
    let mut converged = false;
    let mut kkt = f64::INFINITY;
    let mut sweeps = 0;

    while sweeps < config.max_sweeps {
        sweeps += 1;
        for (gi, g) in groups.iter().enumerate() {
            if weights[gi].is_infinite() {
                continue;
            }
            let theta = lambda * weights[gi];
            // score at the partial residual: X_g^T r / n + G_g w_g
            let mut b = DVector::<f64>::zeros(g.len());
            for (k, &j) in g.iter().enumerate() {
                b[k] = instance.x().column(j).dot(&r) / nf;
            }
            if blocks[gi].iter().any(|&x| x != 0.0) {
                let c = &caches[gi];
                let mut scaled = c.q.transpose() * &blocks[gi];
                for i in 0..scaled.len() {
                    scaled[i] *= c.d[i];
                }
                b += &c.q * scaled;
            }
            let w_new = block_update(&caches[gi], &b, theta);
            let delta = &w_new - &blocks[gi];
            if delta.iter().any(|&x| x != 0.0) {
                for (k, &j) in g.iter().enumerate() {
                    if delta[k] != 0.0 {
                        r.axpy(-delta[k], &instance.x().column(j).clone_owned(), 1.0);
                    }
                }
                blocks[gi] = w_new;
            }
        }

        // exact residual refresh guards against drift from incremental updates
        r = residual_from(&blocks);
        let obj = r.norm_squared() / nf + 2.0 * lambda * penalty(&blocks);
        objective_sweeps.push(obj);

        kkt = 0.0;
        for (gi, g) in groups.iter().enumerate() {
            if weights[gi].is_infinite() {
                continue;
            }
            let theta = lambda * weights[gi];
            let mut score = DVector::<f64>::zeros(g.len());
            for (k, &j) in g.iter().enumerate() {
                score[k] = instance.x().column(j).dot(&r) / nf;
            }
            kkt = kkt.max(block_kkt(&score, &blocks[gi], theta));
        }
        if kkt <= config.tolerance {
            converged = true;
            break;
        }
    }

    let decomposition = Decomposition::from_blocks(groups, &blocks)?;
    let beta_hat = decomposition.sum();
    let objective = *objective_sweeps.last().expect("at least one sweep");
    Ok(FitResult {
        beta_hat,
        decomposition,
        lambda,
        weights: config.weights.clone(),
        iterations: sweeps,
        objective,
        kkt_residual: kkt,
        converged,
        objective_sweeps,
    })
}

/// Warm-started fits along a strictly descending nonnegative lambda grid.
pub fn fit_path(
    instance: &ProblemInstance,
    groups: &GroupCollection,
    lambdas: &[f64],
    base: &SolverConfig,
) -> Result<Vec<FitResult>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    for pair in lambdas.windows(2) {
        if !(pair[0] > pair[1]) {
            return Err(Error::InvalidParameter(format!(
                "lambdas must be strictly descending, got {} before {}",
                pair[0], pair[1]
            )));
        }
    }
    if lambdas[lambdas.len() - 1] < 0.0 {
        return Err(Error::InvalidParameter(
            "lambdas must be nonnegative".into(),
        ));
    }
    let weights = validate_config(groups, base)?;
    let caches = block_caches(instance, groups);
    let mut results = Vec::with_capacity(lambdas.len());
    let mut warm: Option<DVector<f64>> = base.warm_start.clone();
    for &lambda in lambdas {
        let config = SolverConfig {
            lambda,
            warm_start: warm.clone(),
            ..base.clone()
        };
        let res = fit_with_caches(instance, groups, &config, &weights, &caches)?;
        let blocks = res.decomposition.blocks(groups);
        let mut dup = DVector::<f64>::zeros(groups.duplicated_len());
        let mut off = 0;
        for (gi, g) in groups.iter().enumerate() {
            for k in 0..g.len() {
                dup[off + k] = blocks[gi][k];
            }
            off += g.len();
        }
        warm = Some(dup);
        results.push(res);
    }
    Ok(results)
}

/// Per-group stationarity report for a fit. Active groups measure
/// `‖(1/n)X_gᵀ(y − Xβ̂) − λλ_g v_g/‖v_g‖‖`; inactive groups measure the
/// excess of the score norm over the threshold. Frozen groups report zero.
#[derive(Debug, Clone)]
pub struct KktReport {
    pub per_group: Vec<f64>,
    pub max_residual: f64,
}

pub fn kkt_check(
    instance: &ProblemInstance,
    groups: &GroupCollection,
    fit: &FitResult,
) -> Result<KktReport> {
    if groups.p() != instance.p() || fit.beta_hat.len() != instance.p() {
        return Err(Error::DimensionMismatch(
            "fit, groups, and instance disagree on p".into(),
        ));
    }
    let nf = instance.n() as f64;
    let weights = match &fit.weights {
        None => vec![1.0; groups.group_count()],
        Some(w) => w.clone(),
    };
    let r = instance.y() - instance.x() * &fit.beta_hat;
    let blocks = fit.decomposition.blocks(groups);
    let mut per_group = Vec::with_capacity(groups.group_count());
    for (gi, g) in groups.iter().enumerate() {
        if weights[gi].is_infinite() {
            per_group.push(0.0);
            continue;
        }
        let theta = fit.lambda * weights[gi];
        let mut score = DVector::<f64>::zeros(g.len());
        for (k, &j) in g.iter().enumerate() {
            score[k] = instance.x().column(j).dot(&r) / nf;
        }
        per_group.push(block_kkt(&score, &blocks[gi], theta));
    }
    let max_residual = per_group.iter().cloned().fold(0.0_f64, f64::max);
    Ok(KktReport {
        per_group,
        max_residual,
    })
}

/// Smallest lambda at which the zero vector is stationary:
/// `max_g ‖X_gᵀy‖ / (n λ_g)` over unfrozen groups.
pub fn lambda_max(
    instance: &ProblemInstance,
    groups: &GroupCollection,
    weights: Option<&[f64]>,
) -> f64 {
    let nf = instance.n() as f64;
    let mut best = 0.0_f64;
    for (gi, g) in groups.iter().enumerate() {
        let wg = weights.map(|w| w[gi]).unwrap_or(1.0);
        if wg.is_infinite() {
            continue;
        }
        let mut norm2 = 0.0;
        for &j in g {
            let s = instance.x().column(j).dot(instance.y()) / nf;
            norm2 += s * s;
        }
        let score = norm2.sqrt();
        if wg == 0.0 {
            if score > 0.0 {
                return f64::INFINITY;
            }
        } else {
            best = best.max(score / wg);
        }
    }
    best
}

/// Adaptive weights `λ_g = 1/‖v_g^OLS‖^γ` from a norm-minimizing
/// decomposition of the least-squares estimate. Groups whose latent part
/// vanishes receive `f64::INFINITY` and are frozen at zero by the solver.
pub fn adaptive_weights(
    instance: &ProblemInstance,
    groups: &GroupCollection,
    gamma: f64,
) -> Result<Vec<f64>> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {}",
            gamma
        )));
    }
    let beta_ols = ols_fit(instance)?;
    let norm = overlap_norm(&beta_ols, groups, 1e-9)?;
    let thresh = zero_threshold(beta_ols.norm());
    Ok(norm
        .decomposition
        .part_norms()
        .iter()
        .map(|&m| {
            if m <= thresh {
                f64::INFINITY
            } else {
                1.0 / m.powf(gamma)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, recovery_error, Normalization};
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_instance(n: usize, p: usize, seed: u64) -> ProblemInstance {
        let mut rng = stream(seed, 0);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let beta = DVector::from_fn(p, |i, _| if i < p / 2 { 1.0 } else { 0.0 });
        let mut y = &x * &beta;
        for i in 0..n {
            y[i] += 0.1 * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        ProblemInstance::new(x, y, Some(beta), Some(0.1), Normalization::None).unwrap()
    }

    /// plain lasso by scalar coordinate descent, written independently of the
    /// block solver
    fn lasso_cd(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, iters: usize) -> DVector<f64> {
        let n = x.nrows() as f64;
        let p = x.ncols();
        let mut beta = DVector::<f64>::zeros(p);
        let mut r = y.clone();
        let col_norms: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared() / n).collect();
        for _ in 0..iters {
            for j in 0..p {
                let old = beta[j];
                let z = x.column(j).dot(&r) / n + col_norms[j] * old;
                let new = if z.abs() <= lambda {
                    0.0
                } else {
                    (z - lambda * z.signum()) / col_norms[j]
                };
                if new != old {
                    r.axpy(old - new, &x.column(j).clone_owned(), 1.0);
                    beta[j] = new;
                }
            }
        }
        beta
    }

    #[test]
    fn duplicated_design_examples() {
        let gc = GroupCollection::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let inst = random_instance(6, 3, 1);
        let dup = duplicate_design(&inst, &gc).unwrap();
        assert_eq!(dup.column_count(), 4);
        assert_eq!(dup.back_map(), &[0, 1, 1, 2]);
        // every duplicated column is bit-identical to its source
        for (col, &j) in dup.back_map().iter().enumerate() {
            assert_eq!(
                dup.x_tilde().column(col).clone_owned(),
                inst.x().column(j).clone_owned()
            );
        }

        let singles = GroupCollection::singletons(3);
        let dup = duplicate_design(&inst, &singles).unwrap();
        assert_eq!(dup.x_tilde(), inst.x());

        let nested =
            GroupCollection::new(5, vec![vec![0, 1], vec![2, 3], vec![0, 1, 2, 3], vec![4]])
                .unwrap();
        let inst5 = random_instance(6, 5, 2);
        let dup = duplicate_design(&inst5, &nested).unwrap();
        assert_eq!(dup.column_count(), 9);

        // fold sums duplicated blocks back to length p
        let w = DVector::from_fn(9, |i, _| (i + 1) as f64);
        let folded = dup.fold(&w);
        assert_eq!(folded.len(), 5);
        assert_eq!(folded[0], 1.0 + 5.0);
    }

    #[test]
    fn unpenalized_singleton_fit_matches_ols() {
        let inst = random_instance(40, 8, 3);
        let gc = GroupCollection::singletons(8);
        let res = fit(&inst, &gc, &SolverConfig::with_lambda(0.0)).unwrap();
        assert!(res.converged);
        let ols = ols_fit(&inst).unwrap();
        assert!((res.beta_hat - ols).norm() < 1e-6);
    }

    #[test]
    fn above_threshold_lambda_gives_exact_zero() {
        let inst = random_instance(30, 9, 4);
        let gc =
            GroupCollection::new(9, vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]]).unwrap();
        let lmax = lambda_max(&inst, &gc, None);
        let res = fit(&inst, &gc, &SolverConfig::with_lambda(lmax * 1.0001)).unwrap();
        assert!(res.converged);
        assert!(res.beta_hat.iter().all(|&b| b == 0.0));
        // all inactive residuals vanish at this level
        let report = kkt_check(&inst, &gc, &res).unwrap();
        assert!(report.max_residual <= 1e-12);
        // just below the threshold something activates
        let res = fit(&inst, &gc, &SolverConfig::with_lambda(lmax * 0.99)).unwrap();
        assert!(res.beta_hat.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn objective_decreases_every_sweep() {
        let inst = random_instance(25, 10, 5);
        let gc = GroupCollection::new(
            10,
            vec![vec![0, 1, 2, 3], vec![2, 3, 4, 5, 6], vec![6, 7, 8, 9]],
        )
        .unwrap();
        let res = fit(&inst, &gc, &SolverConfig::with_lambda(0.05)).unwrap();
        for w in res.objective_sweeps.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective rose: {} -> {}", w[0], w[1]);
        }
        // the fitted decomposition reconstructs beta_hat
        assert!((res.decomposition.sum() - &res.beta_hat).norm() < 1e-8);
        for (gi, part) in res.decomposition.parts().iter().enumerate() {
            for j in 0..10 {
                if part[j] != 0.0 {
                    assert!(gc.group(gi).contains(&j));
                }
            }
        }
    }

    #[test]
    fn converged_fits_pass_kkt_at_ten_tolerances() {
        let inst = random_instance(30, 12, 6);
        let gc = GroupCollection::new(
            12,
            vec![
                vec![0, 1, 2, 3],
                vec![3, 4, 5, 6],
                vec![6, 7, 8, 9],
                vec![9, 10, 11],
            ],
        )
        .unwrap();
        for lambda in [0.5, 0.1, 0.02] {
            let config = SolverConfig {
                lambda,
                tolerance: 1e-9,
                ..SolverConfig::default()
            };
            let res = fit(&inst, &gc, &config).unwrap();
            assert!(res.converged);
            let report = kkt_check(&inst, &gc, &res).unwrap();
            assert!(report.max_residual <= 10.0 * config.tolerance);
        }
    }

    #[test]
    fn singleton_groups_match_independent_lasso() {
        for seed in [7, 8, 9] {
            let inst = random_instance(40, 10, seed);
            let gc = GroupCollection::singletons(10);
            let lambda = 0.3 * lambda_max(&inst, &gc, None);
            let config = SolverConfig {
                lambda,
                tolerance: 1e-10,
                ..SolverConfig::default()
            };
            let ours = fit(&inst, &gc, &config).unwrap();
            let reference = lasso_cd(inst.x(), inst.y(), lambda, 4000);
            assert!(
                (ours.beta_hat - reference).amax() < 1e-6,
                "seed {} mismatch",
                seed
            );
        }
    }

    #[test]
    fn path_is_warm_start_consistent_and_loss_monotone() {
        let gc = GroupCollection::contiguous(12, 4, 2).unwrap();
        let inst = generate_instance(&gc, 30, 1, 0.05, 10).unwrap();
        let lmax = lambda_max(&inst, &gc, None);
        let lambdas: Vec<f64> = (0..8).map(|i| lmax * 0.9 * 0.7_f64.powi(i)).collect();
        let base = SolverConfig {
            tolerance: 1e-9,
            ..SolverConfig::default()
        };
        let path = fit_path(&inst, &gc, &lambdas, &base).unwrap();
        let nf = inst.n() as f64;
        let mut prev_loss = f64::INFINITY;
        for (i, res) in path.iter().enumerate() {
            let cold = fit(
                &inst,
                &gc,
                &SolverConfig {
                    lambda: lambdas[i],
                    tolerance: 1e-9,
                    ..SolverConfig::default()
                },
            )
            .unwrap();
            assert!(
                (res.objective - cold.objective).abs() <= 2.0 * base.tolerance,
                "warm and cold objectives diverge at lambda {}",
                lambdas[i]
            );
            let loss = (inst.y() - inst.x() * &res.beta_hat).norm_squared() / nf;
            assert!(loss <= prev_loss + 1e-10);
            prev_loss = loss;
        }

        let unsorted = fit_path(&inst, &gc, &[0.1, 0.2], &base);
        assert!(unsorted.is_err());
    }

    #[test]
    fn group_order_does_not_move_beta_hat() {
        let inst = random_instance(30, 8, 11);
        let groups_fwd =
            GroupCollection::new(8, vec![vec![0, 1, 2], vec![2, 3, 4], vec![4, 5, 6, 7]]).unwrap();
        let groups_rev =
            GroupCollection::new(8, vec![vec![4, 5, 6, 7], vec![2, 3, 4], vec![0, 1, 2]]).unwrap();
        let config = SolverConfig {
            lambda: 0.05,
            tolerance: 1e-10,
            ..SolverConfig::default()
        };
        let a = fit(&inst, &groups_fwd, &config).unwrap();
        let b = fit(&inst, &groups_rev, &config).unwrap();
        assert!((a.beta_hat - b.beta_hat).norm() < 1e-6);
    }

    #[test]
    fn objective_beats_trivial_candidates() {
        let inst = random_instance(40, 10, 12);
        let gc =
            GroupCollection::new(10, vec![vec![0, 1, 2, 3, 4], vec![4, 5, 6, 7, 8, 9]]).unwrap();
        let lambda = 0.1;
        let res = fit(&inst, &gc, &SolverConfig::with_lambda(lambda)).unwrap();
        let nf = inst.n() as f64;
        let objective_at = |beta: &DVector<f64>| -> f64 {
            let loss = (inst.y() - inst.x() * beta).norm_squared() / nf;
            let norm = overlap_norm(beta, &gc, 1e-9).unwrap().value;
            loss + 2.0 * lambda * norm
        };
        assert!(res.objective <= objective_at(&DVector::zeros(10)) + 1e-9);
        let ols = ols_fit(&inst).unwrap();
        assert!(res.objective <= objective_at(&ols) + 1e-9);
    }

    #[test]
    fn adaptive_weights_on_disjoint_groups() {
        let gc = GroupCollection::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let inst = generate_instance(&gc, 60, 1, 0.01, 13).unwrap();
        let w = adaptive_weights(&inst, &gc, 1.0).unwrap();
        let ols = ols_fit(&inst).unwrap();
        for (gi, g) in gc.iter().enumerate() {
            let norm: f64 = g.iter().map(|&j| ols[j] * ols[j]).sum::<f64>().sqrt();
            assert_relative_eq!(w[gi], 1.0 / norm, epsilon = 1e-9);
        }

        // gamma = 1 and a latent norm of 2 gives weight one half
        let x = DMatrix::<f64>::identity(2, 2);
        let y = DVector::from_vec(vec![2.0, 0.0]);
        let inst2 = ProblemInstance::new(x, y, None, None, Normalization::None).unwrap();
        let gc2 = GroupCollection::new(2, vec![vec![0], vec![1]]).unwrap();
        let w2 = adaptive_weights(&inst2, &gc2, 1.0).unwrap();
        assert_relative_eq!(w2[0], 0.5, epsilon = 1e-12);
        assert!(w2[1].is_infinite(), "zero OLS part freezes the group");
    }

    #[test]
    fn frozen_groups_stay_zero_and_recovery_uses_rest() {
        let gc = GroupCollection::new(6, vec![vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        let inst = generate_instance(&gc, 40, 2, 0.01, 14).unwrap();
        let config = SolverConfig {
            lambda: 0.01,
            weights: Some(vec![1.0, f64::INFINITY]),
            ..SolverConfig::default()
        };
        let res = fit(&inst, &gc, &config).unwrap();
        for j in 3..6 {
            assert_eq!(res.beta_hat[j], 0.0);
        }
        assert!(recovery_error(&res.beta_hat, inst.beta0().unwrap()).unwrap() > 0.0);
    }
}
