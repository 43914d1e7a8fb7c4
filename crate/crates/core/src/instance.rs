//! Linear-model instances: the design matrix, response, optional ground
//! truth, synthetic generation, and the least-squares baseline.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::GroupCollection;
use crate::rng::stream;

/// Design-matrix scaling recorded on an instance.
///
/// `ColumnUnitDiag` means every diagonal entry of `XᵀX/n` equals one (the
/// finite-sample bound setting); `RowUnitNorm` means every row of `X` has unit
/// Euclidean length (the simulation-study setting).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    #[serde(rename = "column-unit-diag")]
    ColumnUnitDiag,
    #[serde(rename = "row-unit-norm")]
    RowUnitNorm,
    #[serde(rename = "none")]
    None,
}

const NORMALIZATION_TOL: f64 = 1e-10;

/// A regression problem `y = Xβ⁰ + ε`, with the ground truth and noise level
/// kept when known (synthetic data).
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    x: DMatrix<f64>,
    y: DVector<f64>,
    beta0: Option<DVector<f64>>,
    sigma: Option<f64>,
    normalization: Normalization,
}

impl ProblemInstance {
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        beta0: Option<DVector<f64>>,
        sigma: Option<f64>,
        normalization: Normalization,
    ) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if n == 0 || p == 0 {
            return Err(Error::DimensionMismatch(
                "design matrix must have at least one row and column".into(),
            ));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has length {} but X has {} rows",
                y.len(),
                n
            )));
        }
        if let Some(b) = &beta0 {
            if b.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "beta0 has length {} but X has {} columns",
                    b.len(),
                    p
                )));
            }
        }
        if let Some(s) = sigma {
            if !(s >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "sigma must be nonnegative, got {}",
                    s
                )));
            }
        }
        let inst = Self {
            x,
            y,
            beta0,
            sigma,
            normalization,
        };
        inst.check_normalization(NORMALIZATION_TOL)?;
        Ok(inst)
    }

    /// Verifies the recorded normalization against the actual matrix.
    pub fn check_normalization(&self, tol: f64) -> Result<()> {
        let n = self.n() as f64;
        match self.normalization {
            Normalization::ColumnUnitDiag => {
                for j in 0..self.p() {
                    let d = self.x.column(j).norm_squared() / n;
                    if (d - 1.0).abs() > tol {
                        return Err(Error::InvalidParameter(format!(
                            "column {} of XᵀX/n has diagonal {} (expected 1 within {})",
                            j + 1,
                            d,
                            tol
                        )));
                    }
                }
            }
            Normalization::RowUnitNorm => {
                for i in 0..self.n() {
                    let r = self.x.row(i).norm();
                    if (r - 1.0).abs() > tol {
                        return Err(Error::InvalidParameter(format!(
                            "row {} of X has norm {} (expected 1 within {})",
                            i + 1,
                            r,
                            tol
                        )));
                    }
                }
            }
            Normalization::None => {}
        }
        Ok(())
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn beta0(&self) -> Option<&DVector<f64>> {
        self.beta0.as_ref()
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Copy of the instance with a replaced response vector. Used by the
    /// Monte Carlo verifiers, which redraw noise around a fixed design.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        Self::new(
            self.x.clone(),
            y,
            self.beta0.clone(),
            self.sigma,
            self.normalization,
        )
    }
}

/// Synthetic instance following the simulation-study recipe: i.i.d. standard
/// normal design with unit-norm rows, `supp(β⁰)` equal to the union of the
/// first `k_active` groups, signal entries i.i.d. N(0,1), and Gaussian noise
/// of standard deviation `sigma`. Deterministic in `seed`.
pub fn generate_instance(
    groups: &GroupCollection,
    n: usize,
    k_active: usize,
    sigma: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    generate_instance_with(groups, n, k_active, sigma, seed, Normalization::RowUnitNorm)
}

/// As [`generate_instance`] but with an explicit normalization mode.
pub fn generate_instance_with(
    groups: &GroupCollection,
    n: usize,
    k_active: usize,
    sigma: f64,
    seed: u64,
    normalization: Normalization,
) -> Result<ProblemInstance> {
    let p = groups.p();
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if k_active > groups.group_count() {
        return Err(Error::InvalidParameter(format!(
            "k_active = {} exceeds the number of groups M = {}",
            k_active,
            groups.group_count()
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be nonnegative, got {}",
            sigma
        )));
    }

    let mut rng = stream(seed, 0);
    let mut x = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            x[(i, j)] = rng.sample(StandardNormal);
        }
    }
    match normalization {
        Normalization::RowUnitNorm => {
            for i in 0..n {
                let norm = x.row(i).norm();
                if norm == 0.0 {
                    return Err(Error::SingularDesign(format!("row {} is zero", i + 1)));
                }
                let mut row = x.row_mut(i);
                row /= norm;
            }
        }
        Normalization::ColumnUnitDiag => {
            let sqrt_n = (n as f64).sqrt();
            for j in 0..p {
                let norm = x.column(j).norm();
                if norm == 0.0 {
                    return Err(Error::SingularDesign(format!("column {} is zero", j + 1)));
                }
                let mut col = x.column_mut(j);
                col *= sqrt_n / norm;
            }
        }
        Normalization::None => {}
    }

    // supp(beta0) = union of the first k_active groups, signal drawn in
    // ascending index order so the stream layout is stable
    let mut support: Vec<usize> = groups
        .groups()
        .iter()
        .take(k_active)
        .flatten()
        .copied()
        .collect();
    support.sort_unstable();
    support.dedup();
    let mut beta0 = DVector::<f64>::zeros(p);
    for &j in &support {
        beta0[j] = rng.sample(StandardNormal);
    }

    let mut y = &x * &beta0;
    for i in 0..n {
        let e: f64 = rng.sample(StandardNormal);
        y[i] += sigma * e;
    }

    ProblemInstance::new(x, y, Some(beta0), Some(sigma), normalization)
}

/// Ordinary least squares via the singular value decomposition.
///
/// Fails when `n < p` or when the smallest singular value of `X` falls below
/// `1e-10` times the largest.
pub fn ols_fit(instance: &ProblemInstance) -> Result<DVector<f64>> {
    let (n, p) = (instance.n(), instance.p());
    if n < p {
        return Err(Error::SingularDesign(format!(
            "OLS needs n >= p, got n = {}, p = {}",
            n, p
        )));
    }
    let svd = instance.x.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if smax == 0.0 || smin < 1e-10 * smax {
        return Err(Error::SingularDesign(format!(
            "smallest singular value {:.3e} below 1e-10 of largest {:.3e}",
            smin, smax
        )));
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut coeffs = u.transpose() * &instance.y;
    for i in 0..coeffs.len() {
        coeffs[i] /= svd.singular_values[i];
    }
    Ok(v_t.transpose() * coeffs)
}

/// Relative recovery error `‖β⁰ − β̂‖₂ / ‖β⁰‖₂`.
pub fn recovery_error(beta_hat: &DVector<f64>, beta0: &DVector<f64>) -> Result<f64> {
    if beta_hat.len() != beta0.len() {
        return Err(Error::DimensionMismatch(format!(
            "beta_hat has length {}, beta0 has length {}",
            beta_hat.len(),
            beta0.len()
        )));
    }
    let denom = beta0.norm();
    if denom == 0.0 {
        return Err(Error::InvalidParameter(
            "recovery error undefined for beta0 = 0".into(),
        ));
    }
    Ok((beta0 - beta_hat).norm() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn generated_support_is_union_of_first_groups() {
        // size-8 groups with overlap 4 have stride 5; the first 6 cover 1..33
        let gc = GroupCollection::contiguous(512, 8, 4).unwrap();
        let inst = generate_instance(&gc, 24, 6, 0.01, 42).unwrap();
        let beta0 = inst.beta0().unwrap();
        for j in 0..512 {
            if j < 33 {
                assert!(beta0[j] != 0.0, "coordinate {} should carry signal", j);
            } else {
                assert_eq!(beta0[j], 0.0);
            }
        }
    }

    #[test]
    fn generated_rows_have_unit_norm_and_seed_is_bit_stable() {
        let gc = GroupCollection::contiguous(32, 8, 2).unwrap();
        let a = generate_instance(&gc, 10, 2, 0.5, 7).unwrap();
        let b = generate_instance(&gc, 10, 2, 0.5, 7).unwrap();
        for i in 0..10 {
            assert_relative_eq!(a.x().row(i).norm(), 1.0, epsilon = 1e-10);
        }
        assert_eq!(a.x(), b.x());
        assert_eq!(a.y(), b.y());
        assert_eq!(a.beta0().unwrap(), b.beta0().unwrap());
    }

    #[test]
    fn noiseless_and_null_cases() {
        let gc = GroupCollection::contiguous(16, 4, 1).unwrap();
        let inst = generate_instance(&gc, 8, 1, 0.0, 3).unwrap();
        let resid = inst.y() - inst.x() * inst.beta0().unwrap();
        assert!(resid.norm() == 0.0, "sigma = 0 must give y = X beta0 exactly");

        let null = generate_instance(&gc, 8, 0, 1.0, 3).unwrap();
        assert_eq!(null.beta0().unwrap().norm(), 0.0);
    }

    #[test]
    fn rejects_k_active_above_group_count() {
        let gc = GroupCollection::contiguous(16, 4, 1).unwrap();
        assert!(generate_instance(&gc, 8, 5, 0.1, 1).is_err());
    }

    #[test]
    fn column_unit_diag_generation() {
        let gc = GroupCollection::contiguous(12, 4, 2).unwrap();
        let inst =
            generate_instance_with(&gc, 30, 1, 0.1, 5, Normalization::ColumnUnitDiag).unwrap();
        for j in 0..12 {
            let d = inst.x().column(j).norm_squared() / 30.0;
            assert_relative_eq!(d, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn ols_identity_design_returns_response() {
        let x = DMatrix::<f64>::identity(4, 4);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let inst = ProblemInstance::new(x, y.clone(), None, None, Normalization::None).unwrap();
        let beta = ols_fit(&inst).unwrap();
        assert_relative_eq!((beta - y).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ols_recovers_noiseless_truth_and_matches_normal_equations() {
        let gc = GroupCollection::contiguous(10, 5, 1).unwrap();
        let inst = generate_instance(&gc, 50, 1, 0.0, 11).unwrap();
        let beta = ols_fit(&inst).unwrap();
        assert!((inst.beta0().unwrap() - &beta).norm() < 1e-8);

        // independent dense route: solve XᵀX b = Xᵀy by Cholesky
        let noisy = generate_instance(&gc, 50, 2, 0.3, 12).unwrap();
        let beta = ols_fit(&noisy).unwrap();
        let xtx = noisy.x().transpose() * noisy.x();
        let xty = noisy.x().transpose() * noisy.y();
        let chol = nalgebra::Cholesky::new(xtx).unwrap();
        let reference = chol.solve(&xty);
        assert!((reference - &beta).norm() < 1e-8);
        // first-order optimality
        let score = noisy.x().transpose() * (noisy.y() - noisy.x() * &beta);
        assert!(score.norm() < 1e-8);
    }

    #[test]
    fn ols_rejects_singular_and_underdetermined() {
        let mut x = DMatrix::<f64>::zeros(4, 2);
        for i in 0..4 {
            x[(i, 0)] = 1.0 + i as f64;
            x[(i, 1)] = 2.0 * (1.0 + i as f64);
        }
        let y = DVector::zeros(4);
        let inst = ProblemInstance::new(x, y, None, None, Normalization::None).unwrap();
        assert!(matches!(ols_fit(&inst), Err(Error::SingularDesign(_))));

        let wide = ProblemInstance::new(
            DMatrix::<f64>::from_fn(2, 5, |i, j| (i + 2 * j + 1) as f64),
            DVector::zeros(2),
            None,
            None,
            Normalization::None,
        )
        .unwrap();
        assert!(ols_fit(&wide).is_err());
    }

    #[test]
    fn recovery_error_hand_values() {
        let b0 = DVector::from_vec(vec![3.0, 4.0]);
        let exact = recovery_error(&b0, &b0).unwrap();
        assert_eq!(exact, 0.0);
        let zero = recovery_error(&DVector::zeros(2), &b0).unwrap();
        assert_relative_eq!(zero, 1.0, epsilon = 1e-15);
        let partial = recovery_error(&DVector::from_vec(vec![0.0, 4.0]), &b0).unwrap();
        assert_relative_eq!(partial, 0.6, epsilon = 1e-15);
        assert!(recovery_error(&b0, &DVector::zeros(2)).is_err());
    }
}
