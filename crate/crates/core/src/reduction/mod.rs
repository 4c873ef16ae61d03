//! All-reduce summation across the workers of one job.
//!
//! Both transports sum over the same binary tree rooted at rank 0 (children
//! of rank `r` are `2r + 1` and `2r + 2`): every node adds its children's
//! subtree sums to its own vector, left child first, and the root's result
//! is broadcast back down. The summation order depends only on the group
//! size, so results are bitwise reproducible and identical across
//! transports.

use std::time::Duration;

use crate::error::Result;

mod local;
mod tcp;
pub mod wire;

pub use local::{LocalGroup, LocalMember};
pub use tcp::{TcpGroup, TcpOptions};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// One participant's endpoint of an `M`-way collective.
pub trait ReductionGroup: Send {
    fn rank(&self) -> usize;

    fn size(&self) -> usize;

    /// Elementwise sum of every participant's `local`, delivered identically
    /// to all ranks. Blocks until all participants have contributed.
    fn allreduce_sum(&mut self, local: &[f64]) -> Result<Vec<f64>>;

    /// Returns once all participants have arrived.
    fn barrier(&mut self) -> Result<()>;
}

impl<G: ReductionGroup + ?Sized> ReductionGroup for &mut G {
    fn rank(&self) -> usize {
        (**self).rank()
    }

    fn size(&self) -> usize {
        (**self).size()
    }

    fn allreduce_sum(&mut self, local: &[f64]) -> Result<Vec<f64>> {
        (**self).allreduce_sum(local)
    }

    fn barrier(&mut self) -> Result<()> {
        (**self).barrier()
    }
}

pub fn tree_parent(rank: usize) -> Option<usize> {
    (rank > 0).then(|| (rank - 1) / 2)
}

/// Children of `rank` in a tree of `size` nodes, left first.
pub fn tree_children(rank: usize, size: usize) -> impl Iterator<Item = usize> {
    [2 * rank + 1, 2 * rank + 2]
        .into_iter()
        .filter(move |&c| c < size)
}

/// Adds `other` into `acc` elementwise.
pub(crate) fn add_into(acc: &mut [f64], other: &[f64]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}

/// Tree-order sum of all contributions, indexed by rank.
pub(crate) fn tree_sum(contributions: &[&[f64]]) -> Vec<f64> {
    let size = contributions.len();
    // Post-order over the heap layout: highest ranks first so every child's
    // subtree sum is ready before its parent.
    let mut partial: Vec<Option<Vec<f64>>> = vec![None; size];
    for rank in (0..size).rev() {
        let mut acc = contributions[rank].to_vec();
        for child in tree_children(rank, size) {
            let sub = partial[child].take().expect("child reduced before parent");
            add_into(&mut acc, &sub);
        }
        partial[rank] = Some(acc);
    }
    partial[0].take().unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology() {
        assert_eq!(tree_parent(0), None);
        assert_eq!(tree_parent(1), Some(0));
        assert_eq!(tree_parent(2), Some(0));
        assert_eq!(tree_parent(5), Some(2));
        assert_eq!(tree_children(0, 3).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(tree_children(1, 4).collect::<Vec<_>>(), vec![3]);
        assert_eq!(tree_children(2, 4).count(), 0);
    }

    #[test]
    fn tree_sum_of_three() {
        let out = tree_sum(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(out, vec![9.0, 12.0]);
    }

    #[test]
    fn tree_sum_groups_by_subtree() {
        // rank 0 + (rank 1 + rank 3) + rank 2
        let big = 1e16;
        let out = tree_sum(&[&[big], &[1.0], &[-big], &[1.0]]);
        let expected = (big + (1.0 + 1.0)) + -big;
        assert_eq!(out[0].to_bits(), expected.to_bits());
    }
}
