//! Neighbor orderings and the majority-vote classifier.
//!
//! The table stores, for every point `i`, the full ordering of the other
//! points by nondecreasing Euclidean distance to `X_i`. Equal distances are
//! broken by the smaller point index, so every ordering is a deterministic
//! total order and all downstream counts and estimators are reproducible.
//! Queries against arbitrary training subsets scan this ordering, which is
//! what the exact leave-p-out recursion needs anyway.

use rayon::prelude::*;

use crate::dataset::{squared_distance, Dataset};
use crate::error::{Error, Result};

/// Per-point total orderings of all other points by distance, plus the
/// inverse rank maps.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    n: usize,
    /// `order[i]` lists the indices `j != i` by nondecreasing distance to
    /// `X_i` (ties by smaller index).
    order: Vec<Vec<u32>>,
    /// `rank[i][j]` is the 1-based position of `j` in `order[i]`
    /// (`usize::MAX` sentinel squeezed into u32 is avoided by storing the
    /// self-rank as 0).
    rank: Vec<Vec<u32>>,
}

impl NeighborTable {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Indices `j != i` ordered by nondecreasing distance to `X_i`.
    pub fn order_of(&self, i: usize) -> &[u32] {
        &self.order[i]
    }

    /// 1-based rank of `j` in the ordering around `i`; `rank_of(i, i)` is 0.
    pub fn rank_of(&self, i: usize, j: usize) -> usize {
        self.rank[i][j] as usize
    }

    /// The k-nearest-neighbor index set `V_k(X_i)` within the full sample.
    pub fn neighbors(&self, i: usize, k: usize) -> &[u32] {
        &self.order[i][..k]
    }
}

/// Builds the neighbor table by full pairwise distances and a per-row sort,
/// `O(n^2 log n)`. Rows are computed in parallel; the result does not depend
/// on scheduling.
pub fn build_neighbor_table(dataset: &Dataset) -> NeighborTable {
    let n = dataset.len();
    let order: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = dataset.features(i);
            let mut row: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(xi, dataset.features(j)), j as u32))
                .collect();
            // Lexicographic (distance, index): the index component breaks
            // distance ties deterministically. Distances are finite by the
            // Dataset invariant, so total_cmp == partial order here.
            row.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            row.into_iter().map(|(_, j)| j).collect()
        })
        .collect();
    let rank: Vec<Vec<u32>> = order
        .par_iter()
        .map(|row| {
            let mut inv = vec![0u32; n];
            for (pos, &j) in row.iter().enumerate() {
                inv[j as usize] = pos as u32 + 1;
            }
            inv
        })
        .collect();
    NeighborTable { n, order, rank }
}

/// Majority vote over `ones` positive labels among `k` neighbors: predicts 1
/// iff the label mean exceeds 1/2; an exact split votes 0.
#[inline]
pub fn vote(ones: usize, k: usize) -> u8 {
    u8::from(2 * ones > k)
}

/// Classifies the held-out point `i` using the `k` nearest members of
/// `subset` (a membership mask over point indices).
///
/// Scans the precomputed ordering around `i` and collects the first `k`
/// entries lying in the subset; those are exactly the k nearest training
/// points under the table's tie-break.
pub fn knn_classify(
    table: &NeighborTable,
    labels: &[u8],
    subset: &[bool],
    i: usize,
    k: usize,
) -> Result<u8> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let mut found = 0usize;
    let mut ones = 0usize;
    for &j in table.order_of(i) {
        let j = j as usize;
        if subset[j] {
            ones += usize::from(labels[j]);
            found += 1;
            if found == k {
                return Ok(vote(ones, k));
            }
        }
    }
    Err(Error::InsufficientNeighbors {
        subset_len: subset.iter().filter(|&&b| b).count(),
        k,
    })
}

/// Classifies an off-sample query point against the training points listed
/// in `subset_mask` (or all points when the mask is `None`).
///
/// Used where building a full table would be wasteful: one-shot queries in
/// the stability experiment and test-set risk estimates. Applies the same
/// (distance, index) tie-break as the table.
pub fn knn_predict_query(
    dataset: &Dataset,
    subset_mask: Option<&[bool]>,
    query: &[f64],
    k: usize,
) -> Result<u8> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let mut cand: Vec<(f64, u32)> = (0..dataset.len())
        .filter(|&j| subset_mask.map_or(true, |m| m[j]))
        .map(|j| (squared_distance(query, dataset.features(j)), j as u32))
        .collect();
    if cand.len() < k {
        return Err(Error::InsufficientNeighbors { subset_len: cand.len(), k });
    }
    cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let ones = cand[..k]
        .iter()
        .filter(|&&(_, j)| dataset.label(j as usize) == 1)
        .count();
    Ok(vote(ones, k))
}

/// Membership mask over `0..n` for an index list.
pub fn subset_mask(n: usize, indices: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; n];
    for &i in indices {
        mask[i] = true;
    }
    mask
}

/// Mask selecting everything except `i`.
pub fn mask_all_but(n: usize, i: usize) -> Vec<bool> {
    let mut mask = vec![true; n];
    mask[i] = false;
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line3() -> Dataset {
        Dataset::from_1d(&[0.0, 1.0, 2.0], &[0, 0, 1]).unwrap()
    }

    #[test]
    fn orders_points_on_a_line() {
        let table = build_neighbor_table(&line3());
        // 0-based: point 0 sees (1, 2); point 2 sees (1, 0).
        assert_eq!(table.order_of(0), &[1, 2]);
        assert_eq!(table.order_of(2), &[1, 0]);
    }

    #[test]
    fn equidistant_flanks_break_to_smaller_index() {
        let table = build_neighbor_table(&line3());
        // Middle point: 0 and 2 are both at distance 1; index 0 comes first.
        assert_eq!(table.order_of(1), &[0, 2]);
    }

    #[test]
    fn rank_inverts_order() {
        let table = build_neighbor_table(&line3());
        for i in 0..3 {
            for (pos, &j) in table.order_of(i).iter().enumerate() {
                assert_eq!(table.rank_of(i, j as usize), pos + 1);
            }
            assert_eq!(table.rank_of(i, i), 0);
        }
    }

    #[test]
    fn single_neighbor_vote() {
        let ds = Dataset::from_1d(&[0.0, 1.0], &[0, 1]).unwrap();
        let table = build_neighbor_table(&ds);
        let labels = ds.labels();
        let mask = subset_mask(2, &[1]);
        assert_eq!(knn_classify(&table, &labels, &mask, 0, 1).unwrap(), 1);
    }

    #[test]
    fn split_vote_goes_to_zero() {
        // Neighbors' labels (1, 0) with k = 2: mean exactly 0.5 is not > 0.5.
        let ds = Dataset::from_1d(&[0.0, 1.0, 2.0], &[0, 1, 0]).unwrap();
        let table = build_neighbor_table(&ds);
        let labels = ds.labels();
        let mask = subset_mask(3, &[1, 2]);
        assert_eq!(knn_classify(&table, &labels, &mask, 0, 2).unwrap(), 0);
    }

    #[test]
    fn classifies_against_restricted_subset() {
        // Points (0,1,2,3), labels (0,0,1,1); test index 1 (x=1) against
        // subset {2,3}: nearest is x=2 with label 1.
        let ds = Dataset::from_1d(&[0.0, 1.0, 2.0, 3.0], &[0, 0, 1, 1]).unwrap();
        let table = build_neighbor_table(&ds);
        let labels = ds.labels();
        let mask = subset_mask(4, &[2, 3]);
        assert_eq!(knn_classify(&table, &labels, &mask, 1, 1).unwrap(), 1);
    }

    #[test]
    fn too_small_subset_errors() {
        let ds = line3();
        let table = build_neighbor_table(&ds);
        let labels = ds.labels();
        let mask = subset_mask(3, &[2]);
        assert!(matches!(
            knn_classify(&table, &labels, &mask, 0, 2),
            Err(Error::InsufficientNeighbors { .. })
        ));
    }

    #[test]
    fn query_prediction_matches_in_sample_scan() {
        let ds = Dataset::from_1d(&[0.0, 1.0, 2.0, 3.0], &[0, 0, 1, 1]).unwrap();
        let table = build_neighbor_table(&ds);
        let labels = ds.labels();
        for i in 0..4 {
            let mask = mask_all_but(4, i);
            let a = knn_classify(&table, &labels, &mask, i, 2).unwrap();
            let b = knn_predict_query(&ds, Some(&mask), ds.features(i), 2).unwrap();
            assert_eq!(a, b);
        }
    }
}
