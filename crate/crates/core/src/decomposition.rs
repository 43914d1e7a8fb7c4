//! Latent decompositions of a coefficient vector into group-supported parts.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::groups::GroupCollection;

/// Scale-aware threshold below which a part counts as zero.
pub fn zero_threshold(target_norm: f64) -> f64 {
    1e-8 * (1.0 + target_norm)
}

/// A collection `{v_g}` with `supp(v_g) ⊆ g` and `Σ_g v_g` equal to the
/// decomposed vector. The active set holds the groups whose part norm exceeds
/// the scale-aware zero threshold.
#[derive(Debug, Clone)]
pub struct Decomposition {
    parts: Vec<DVector<f64>>,
    active: Vec<usize>,
}

impl Decomposition {
    /// Builds from compact per-group blocks (`blocks[g]` has length `|g|`).
    pub fn from_blocks(groups: &GroupCollection, blocks: &[DVector<f64>]) -> Result<Self> {
        if blocks.len() != groups.group_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} blocks for {} groups",
                blocks.len(),
                groups.group_count()
            )));
        }
        let p = groups.p();
        let mut parts = Vec::with_capacity(blocks.len());
        for (gi, block) in blocks.iter().enumerate() {
            let g = groups.group(gi);
            if block.len() != g.len() {
                return Err(Error::DimensionMismatch(format!(
                    "block {} has length {} but group has {} members",
                    gi + 1,
                    block.len(),
                    g.len()
                )));
            }
            let mut v = DVector::<f64>::zeros(p);
            for (k, &j) in g.iter().enumerate() {
                v[j] = block[k];
            }
            parts.push(v);
        }
        Ok(Self::from_parts_unchecked(parts))
    }

    /// Builds from full-length parts, validating support containment and that
    /// the parts sum to `expected` within `tol`.
    pub fn new(
        groups: &GroupCollection,
        parts: Vec<DVector<f64>>,
        expected: &DVector<f64>,
        tol: f64,
    ) -> Result<Self> {
        if parts.len() != groups.group_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} parts for {} groups",
                parts.len(),
                groups.group_count()
            )));
        }
        let p = groups.p();
        for (gi, v) in parts.iter().enumerate() {
            if v.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "part {} has length {}, expected {}",
                    gi + 1,
                    v.len(),
                    p
                )));
            }
            let members = groups.group(gi);
            for j in 0..p {
                if v[j] != 0.0 && !members.contains(&j) {
                    return Err(Error::InvalidParameter(format!(
                        "part {} has mass on predictor {} outside its group",
                        gi + 1,
                        j + 1
                    )));
                }
            }
        }
        let mut sum = DVector::<f64>::zeros(p);
        for v in &parts {
            sum += v;
        }
        if (&sum - expected).norm() > tol {
            return Err(Error::InvalidParameter(format!(
                "parts sum deviates from the target by {:.3e} (tol {:.3e})",
                (&sum - expected).norm(),
                tol
            )));
        }
        Ok(Self::from_parts_unchecked(parts))
    }

    fn from_parts_unchecked(parts: Vec<DVector<f64>>) -> Self {
        let sum = parts
            .iter()
            .fold(DVector::<f64>::zeros(parts[0].len()), |acc, v| acc + v);
        let thresh = zero_threshold(sum.norm());
        let active = parts
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm() > thresh)
            .map(|(g, _)| g)
            .collect();
        Self { parts, active }
    }

    pub fn parts(&self) -> &[DVector<f64>] {
        &self.parts
    }

    pub fn part(&self, g: usize) -> &DVector<f64> {
        &self.parts[g]
    }

    /// Per-group Euclidean norms `‖v_g‖`.
    pub fn part_norms(&self) -> Vec<f64> {
        self.parts.iter().map(|v| v.norm()).collect()
    }

    /// `Σ_g ‖v_g‖`, the quantity the overlap norm minimizes.
    pub fn total_norm(&self) -> f64 {
        self.parts.iter().map(|v| v.norm()).sum()
    }

    pub fn sum(&self) -> DVector<f64> {
        self.parts
            .iter()
            .fold(DVector::<f64>::zeros(self.parts[0].len()), |acc, v| acc + v)
    }

    /// Active set `J_v`: groups with a nonzero part.
    pub fn active_set(&self) -> &[usize] {
        &self.active
    }

    /// `M_v = |J_v|`.
    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    /// Compact blocks (part restricted to its group's members), the layout
    /// the duplicated-design solver works in.
    pub fn blocks(&self, groups: &GroupCollection) -> Vec<DVector<f64>> {
        self.parts
            .iter()
            .enumerate()
            .map(|(gi, v)| {
                DVector::from_iterator(
                    groups.group(gi).len(),
                    groups.group(gi).iter().map(|&j| v[j]),
                )
            })
            .collect()
    }
}
