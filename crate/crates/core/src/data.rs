//! Dataset and model types shared by the rest of the crate.
//!
//! A dataset is held "by feature": each worker owns a [`FeatureShard`], the
//! posting lists of a disjoint subset of feature ids. Labels are a dense
//! vector replicated on every worker.

use crate::error::{Error, Result};

/// One nonzero entry `x_ij` of a feature's posting list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeaturePosting {
    pub example: usize,
    pub value: f64,
}

/// The posting lists of the features owned by one worker.
///
/// Columns are stored contiguously (compressed sparse column layout) in
/// ascending feature-id order; each column is sorted by example id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureShard {
    shard_id: usize,
    num_shards: usize,
    n: usize,
    p: usize,
    features: Vec<usize>,
    offsets: Vec<usize>,
    postings: Vec<FeaturePosting>,
}

impl FeatureShard {
    /// Builds a shard from `(feature_id, postings)` columns, checking every
    /// structural invariant.
    pub fn new(
        shard_id: usize,
        num_shards: usize,
        n: usize,
        p: usize,
        columns: Vec<(usize, Vec<FeaturePosting>)>,
    ) -> Result<Self> {
        if num_shards == 0 || shard_id >= num_shards {
            return Err(Error::Consistency(format!(
                "shard id {shard_id} out of range for {num_shards} shards"
            )));
        }
        let mut builder = ShardBuilder::new(shard_id, num_shards, n, p);
        for (feature, column) in columns {
            builder.push_feature(feature)?;
            for posting in column {
                builder.push_posting(posting.example, posting.value)?;
            }
        }
        Ok(builder.finish())
    }

    pub fn empty(shard_id: usize, num_shards: usize, n: usize, p: usize) -> Self {
        ShardBuilder::new(shard_id, num_shards, n, p).finish()
    }

    pub fn shard_id(&self) -> usize {
        self.shard_id
    }

    pub fn num_shards(&self) -> usize {
        self.num_shards
    }

    /// Total number of examples in the dataset.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of features in the dataset.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Owned feature ids, ascending.
    pub fn features(&self) -> &[usize] {
        &self.features
    }

    /// Posting list of the `k`-th owned feature.
    pub fn postings(&self, k: usize) -> &[FeaturePosting] {
        &self.postings[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn columns(&self) -> impl Iterator<Item = (usize, &[FeaturePosting])> + '_ {
        self.features
            .iter()
            .enumerate()
            .map(move |(k, &j)| (j, self.postings(k)))
    }

    /// Number of stored postings.
    pub fn nnz(&self) -> usize {
        self.postings.len()
    }

    /// All `(example, feature, value)` triples of the shard.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.columns()
            .flat_map(|(j, col)| col.iter().map(move |e| (e.example, j, e.value)))
    }

    /// Adds `Σ_j coef[j] · x_ij` over owned features into `out` (length n).
    pub fn accumulate_margins(&self, coef: &[f64], out: &mut [f64]) {
        for (j, col) in self.columns() {
            let c = coef[j];
            if c == 0.0 {
                continue;
            }
            for e in col {
                out[e.example] += c * e.value;
            }
        }
    }
}

/// Incremental, validating constructor for [`FeatureShard`]. Used by the
/// in-memory transpose and by the streaming shard loader.
#[derive(Debug)]
pub struct ShardBuilder {
    shard: FeatureShard,
}

impl ShardBuilder {
    pub fn new(shard_id: usize, num_shards: usize, n: usize, p: usize) -> Self {
        Self {
            shard: FeatureShard {
                shard_id,
                num_shards,
                n,
                p,
                features: Vec::new(),
                offsets: vec![0],
                postings: Vec::new(),
            },
        }
    }

    /// Opens the posting list of `feature`. Features must arrive in strictly
    /// increasing order.
    pub fn push_feature(&mut self, feature: usize) -> Result<()> {
        let s = &mut self.shard;
        if feature >= s.p {
            return Err(Error::Consistency(format!(
                "feature id {feature} out of range (p = {})",
                s.p
            )));
        }
        if let Some(&last) = s.features.last() {
            if feature <= last {
                return Err(Error::Consistency(format!(
                    "feature id {feature} follows {last}; features must be strictly increasing"
                )));
            }
        }
        s.features.push(feature);
        s.offsets.push(s.postings.len());
        Ok(())
    }

    /// Appends a posting to the most recently opened feature.
    pub fn push_posting(&mut self, example: usize, value: f64) -> Result<()> {
        let s = &mut self.shard;
        let Some(&feature) = s.features.last() else {
            return Err(Error::Consistency("posting before any feature".into()));
        };
        if example >= s.n {
            return Err(Error::Consistency(format!(
                "feature {feature}: example id {example} out of range (n = {})",
                s.n
            )));
        }
        if value == 0.0 || !value.is_finite() {
            return Err(Error::Consistency(format!(
                "feature {feature}, example {example}: stored value must be finite and nonzero, got {value}"
            )));
        }
        let start = s.offsets[s.offsets.len() - 2];
        if s.postings.len() > start {
            let prev = s.postings[s.postings.len() - 1].example;
            if example <= prev {
                return Err(Error::Consistency(format!(
                    "feature {feature}: example id {example} follows {prev}; postings must be strictly increasing"
                )));
            }
        }
        s.postings.push(FeaturePosting { example, value });
        *s.offsets.last_mut().unwrap() = s.postings.len();
        Ok(())
    }

    pub fn finish(self) -> FeatureShard {
        self.shard
    }
}

/// Checks that `shards` form a partition of the feature ids `0..p`, all with
/// the same `n`, `p` and shard count.
pub fn check_shard_cover(shards: &[FeatureShard]) -> Result<()> {
    let Some(first) = shards.first() else {
        return Err(Error::Consistency("no shards".into()));
    };
    let (n, p, m) = (first.n, first.p, shards.len());
    let mut owner = vec![usize::MAX; p];
    for (idx, shard) in shards.iter().enumerate() {
        if shard.n != n || shard.p != p || shard.num_shards != m || shard.shard_id != idx {
            return Err(Error::Consistency(format!(
                "shard {idx} disagrees on (shard id, n, p, M): ({}, {}, {}, {}) vs ({idx}, {n}, {p}, {m})",
                shard.shard_id, shard.n, shard.p, shard.num_shards
            )));
        }
        for &j in &shard.features {
            if owner[j] != usize::MAX {
                return Err(Error::Consistency(format!(
                    "feature {j} owned by shards {} and {idx}",
                    owner[j]
                )));
            }
            owner[j] = idx;
        }
    }
    if let Some(j) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(Error::Consistency(format!("feature {j} is not owned by any shard")));
    }
    Ok(())
}

/// Class labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector(Vec<f64>);

impl LabelVector {
    pub fn new(labels: Vec<f64>) -> Result<Self> {
        if let Some((i, y)) = labels
            .iter()
            .enumerate()
            .find(|(_, &y)| y != 1.0 && y != -1.0)
        {
            return Err(Error::InvalidInput(format!(
                "label {i} is {y}; labels must be -1 or +1"
            )));
        }
        Ok(Self(labels))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn positives(&self) -> usize {
        self.0.iter().filter(|&&y| y > 0.0).count()
    }
}

impl std::ops::Index<usize> for LabelVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Solver state: coefficients, the margin cache `βᵀx_i`, and the current
/// direction with its margin cache `Δβᵀx_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub beta: Vec<f64>,
    pub margins: Vec<f64>,
    pub delta_beta: Vec<f64>,
    pub delta_margins: Vec<f64>,
}

impl ModelState {
    pub fn zeros(n: usize, p: usize) -> Self {
        Self {
            beta: vec![0.0; p],
            margins: vec![0.0; n],
            delta_beta: vec![0.0; p],
            delta_margins: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.margins.len()
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// `β ← β + αΔβ`, `margins ← margins + α·Δmargins`.
    pub fn apply_step(&mut self, alpha: f64) {
        for (b, d) in self.beta.iter_mut().zip(&self.delta_beta) {
            *b += alpha * d;
        }
        for (m, d) in self.margins.iter_mut().zip(&self.delta_margins) {
            *m += alpha * d;
        }
    }
}

/// Number of nonzero coefficients. Zeros written by the solver are exact.
pub fn nnz(beta: &[f64]) -> usize {
    beta.iter().filter(|b| b.abs() > 0.0).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn posting(example: usize, value: f64) -> FeaturePosting {
        FeaturePosting { example, value }
    }

    #[test]
    fn nnz_counts_exact_nonzeros() {
        assert_eq!(nnz(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(nnz(&[0.5, 0.0, -1.2]), 2);
        assert_eq!(nnz(&[-0.0, f64::MIN_POSITIVE]), 1);
    }

    #[test]
    fn shard_rejects_unsorted_postings() {
        let err = FeatureShard::new(0, 1, 3, 1, vec![(0, vec![posting(2, 1.0), posting(1, 1.0)])]);
        assert!(matches!(err, Err(Error::Consistency(_))));
    }

    #[test]
    fn shard_rejects_out_of_range_example() {
        let err = FeatureShard::new(0, 1, 3, 1, vec![(0, vec![posting(3, 1.0)])]);
        assert!(matches!(err, Err(Error::Consistency(_))));
    }

    #[test]
    fn shard_rejects_zero_value() {
        let err = FeatureShard::new(0, 1, 3, 1, vec![(0, vec![posting(0, 0.0)])]);
        assert!(matches!(err, Err(Error::Consistency(_))));
    }

    #[test]
    fn shard_allows_empty_columns() {
        let shard =
            FeatureShard::new(0, 1, 2, 3, vec![(0, vec![]), (2, vec![posting(1, 2.0)])]).unwrap();
        assert_eq!(shard.features(), &[0, 2]);
        assert!(shard.postings(0).is_empty());
        assert_eq!(shard.postings(1), &[posting(1, 2.0)]);
        assert_eq!(shard.nnz(), 1);
    }

    #[test]
    fn cover_detects_overlap_and_gaps() {
        let a = FeatureShard::new(0, 2, 1, 3, vec![(0, vec![]), (1, vec![])]).unwrap();
        let b = FeatureShard::new(1, 2, 1, 3, vec![(1, vec![])]).unwrap();
        assert!(check_shard_cover(&[a.clone(), b]).is_err());
        let c = FeatureShard::new(1, 2, 1, 3, vec![]).unwrap();
        assert!(check_shard_cover(&[a.clone(), c]).is_err());
        let d = FeatureShard::new(1, 2, 1, 3, vec![(2, vec![])]).unwrap();
        check_shard_cover(&[a, d]).unwrap();
    }

    #[test]
    fn labels_must_be_signs() {
        assert!(LabelVector::new(vec![1.0, -1.0]).is_ok());
        assert!(LabelVector::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn accumulate_margins_matches_dense_product() {
        let shard = FeatureShard::new(
            0,
            1,
            3,
            2,
            vec![
                (0, vec![posting(0, 1.0), posting(2, -2.0)]),
                (1, vec![posting(1, 3.0), posting(2, 0.5)]),
            ],
        )
        .unwrap();
        let mut out = vec![0.0; 3];
        shard.accumulate_margins(&[2.0, -1.0], &mut out);
        assert_eq!(out, vec![2.0, -3.0, -4.5]);
    }
}
