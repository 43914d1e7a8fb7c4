//! Collections of predictor groups.
//!
//! A [`GroupCollection`] is an ordered list of index subsets of `{0..p}` that
//! together cover every predictor. Groups may overlap. Indices are 0-based in
//! the API; the JSON layer converts to the 1-based convention used in files.

use crate::error::{Error, Result};

/// An ordered collection of (possibly overlapping) predictor groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupCollection {
    p: usize,
    groups: Vec<Vec<usize>>,
    /// predictor -> indices of the groups containing it
    membership: Vec<Vec<usize>>,
}

impl GroupCollection {
    /// Validates and builds a collection. Each group must be a nonempty
    /// subset of `{0..p}`, the union must cover all predictors, and no two
    /// groups may contain the same index set.
    pub fn new(p: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidGroups("p must be at least 1".into()));
        }
        if groups.is_empty() {
            return Err(Error::InvalidGroups("at least one group required".into()));
        }
        let mut sorted: Vec<Vec<usize>> = Vec::with_capacity(groups.len());
        for (i, g) in groups.into_iter().enumerate() {
            if g.is_empty() {
                return Err(Error::InvalidGroups(format!("group {} is empty", i + 1)));
            }
            let mut g = g;
            g.sort_unstable();
            g.dedup();
            if let Some(&max) = g.last() {
                if max >= p {
                    return Err(Error::InvalidGroups(format!(
                        "group {} references predictor {} but p = {}",
                        i + 1,
                        max + 1,
                        p
                    )));
                }
            }
            sorted.push(g);
        }
        for i in 0..sorted.len() {
            for j in (i + 1)..sorted.len() {
                if sorted[i] == sorted[j] {
                    return Err(Error::InvalidGroups(format!(
                        "groups {} and {} are identical",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let mut membership = vec![Vec::new(); p];
        for (gi, g) in sorted.iter().enumerate() {
            for &j in g {
                membership[j].push(gi);
            }
        }
        Ok(Self {
            p,
            groups: sorted,
            membership,
        })
    }

    /// One singleton group per predictor; the collection under which the
    /// penalty reduces to the plain lasso.
    pub fn singletons(p: usize) -> Self {
        Self::new(p, (0..p).map(|j| vec![j]).collect()).expect("singleton cover is always valid")
    }

    /// Contiguous groups of `group_size` consecutive predictors with start
    /// stride `group_size + 1 - overlap`, included while the group fits in
    /// `{0..p}`. `overlap = 1` gives disjoint blocks; consecutive groups share
    /// `overlap - 1` predictors.
    pub fn contiguous(p: usize, group_size: usize, overlap: usize) -> Result<Self> {
        if overlap < 1 || overlap > group_size {
            return Err(Error::InvalidParameter(format!(
                "overlap must lie in [1, {}], got {}",
                group_size, overlap
            )));
        }
        if group_size > p {
            return Err(Error::InvalidParameter(format!(
                "group size {} exceeds p = {}",
                group_size, p
            )));
        }
        let stride = group_size + 1 - overlap;
        let mut groups = Vec::new();
        let mut start = 0usize;
        while start + group_size <= p {
            groups.push((start..start + group_size).collect());
            start += stride;
        }
        Self::new(p, groups)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of groups, `M`.
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.groups[g]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.groups.iter().map(|g| g.as_slice())
    }

    /// Groups containing predictor `j`.
    pub fn membership(&self, j: usize) -> &[usize] {
        &self.membership[j]
    }

    /// Per-predictor membership counts.
    pub fn membership_counts(&self) -> Vec<usize> {
        self.membership.iter().map(|m| m.len()).collect()
    }

    /// Maximal number of groups any single predictor belongs to.
    pub fn overlap_degree(&self) -> usize {
        self.membership.iter().map(|m| m.len()).max().unwrap_or(0)
    }

    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(|g| g.len()).max().unwrap_or(0)
    }

    pub fn min_group_size(&self) -> usize {
        self.groups.iter().map(|g| g.len()).min().unwrap_or(0)
    }

    /// Total duplicated column count, the sum of all group sizes.
    pub fn duplicated_len(&self) -> usize {
        self.groups.iter().map(|g| g.len()).sum()
    }

    /// True when the groups partition the predictors (no index is shared).
    pub fn is_partition(&self) -> bool {
        self.membership.iter().all(|m| m.len() == 1)
    }

    /// True when every predictor belongs to at least one group. Contiguous
    /// families can leave a short tail of predictors uncovered when the
    /// stride does not divide `p - group_size`; such predictors can never be
    /// selected and only vectors vanishing there have a finite overlap norm.
    pub fn covers_all(&self) -> bool {
        self.membership.iter().all(|m| !m.is_empty())
    }

    /// Predictors not contained in any group.
    pub fn uncovered(&self) -> Vec<usize> {
        self.membership
            .iter()
            .enumerate()
            .filter(|(_, m)| m.is_empty())
            .map(|(j, _)| j)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contiguous_matches_disjoint_example() {
        // p=16, size 8, overlap 1 -> {1..8}, {9..16} in 1-based terms
        let gc = GroupCollection::contiguous(16, 8, 1).unwrap();
        assert_eq!(gc.group_count(), 2);
        assert_eq!(gc.group(0), (0..8).collect::<Vec<_>>().as_slice());
        assert_eq!(gc.group(1), (8..16).collect::<Vec<_>>().as_slice());
        assert!(gc.is_partition());
        assert_eq!(gc.overlap_degree(), 1);
    }

    #[test]
    fn contiguous_matches_shared_boundary_example() {
        // p=15, size 8, overlap 2 -> {1..8}, {8..15}
        let gc = GroupCollection::contiguous(15, 8, 2).unwrap();
        assert_eq!(gc.group_count(), 2);
        assert_eq!(gc.group(0), (0..8).collect::<Vec<_>>().as_slice());
        assert_eq!(gc.group(1), (7..15).collect::<Vec<_>>().as_slice());
        assert_eq!(gc.overlap_degree(), 2);
    }

    #[test]
    fn contiguous_single_group_when_only_one_fits() {
        let gc = GroupCollection::contiguous(8, 8, 4).unwrap();
        assert_eq!(gc.group_count(), 1);
        assert_eq!(gc.group(0), (0..8).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn contiguous_stride_one_reaches_full_membership() {
        // overlap = group_size gives stride 1, so interior predictors sit in
        // group_size many groups
        let gc = GroupCollection::contiguous(24, 8, 8).unwrap();
        assert_eq!(gc.overlap_degree(), 8);
    }

    #[test]
    fn contiguous_rejects_bad_parameters() {
        assert!(GroupCollection::contiguous(16, 8, 0).is_err());
        assert!(GroupCollection::contiguous(16, 8, 9).is_err());
        assert!(GroupCollection::contiguous(4, 8, 1).is_err());
    }

    #[test]
    fn full_scale_overlap_four_has_101_groups() {
        let gc = GroupCollection::contiguous(512, 8, 4).unwrap();
        assert_eq!(gc.group_count(), 101);
        // stride 5 leaves 509..512 outside every group
        assert_eq!(gc.uncovered(), vec![508, 509, 510, 511]);
        assert!(!gc.covers_all());
    }

    #[test]
    fn duplicates_and_ranges_are_validated() {
        assert!(GroupCollection::new(3, vec![vec![0, 1], vec![1, 0], vec![2]]).is_err());
        assert!(GroupCollection::new(3, vec![vec![0, 1], vec![]]).is_err());
        assert!(GroupCollection::new(3, vec![vec![0, 1], vec![1, 3]]).is_err());
        let partial = GroupCollection::new(3, vec![vec![0, 1]]).unwrap();
        assert_eq!(partial.uncovered(), vec![2]);
    }

    #[test]
    fn membership_counts_on_chain() {
        let gc = GroupCollection::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        assert_eq!(gc.membership_counts(), vec![1, 2, 1]);
        assert_eq!(gc.overlap_degree(), 2);
        assert_eq!(gc.duplicated_len(), 4);
        assert!(!gc.is_partition());
    }
}
