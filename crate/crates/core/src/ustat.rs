//! The U-statistic view of leave-p-out.
//!
//! Leave-p-out over n points is a U-statistic of order `m = n - p + 1` whose
//! kernel is the leave-one-out risk of an m-point sample. Averaging, over
//! all permutations of the sample, the mean kernel value across
//! `floor(n/m)` disjoint blocks therefore reproduces the leave-p-out value
//! exactly; truncating that permutation average to a seeded Monte-Carlo
//! draw gives an unbiased estimator whose cost is controlled by the
//! replicate count instead of `C(n, m)`.

use itertools::Itertools;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::lpo::{l1o, EstimateMethod, LpOEstimate};
use crate::seeding::replicate_rng;

/// Mean kernel value over the disjoint blocks of one permuted sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStatistic {
    pub value: f64,
    /// Block length `m = n - p + 1`.
    pub m: usize,
    /// Number of blocks `floor(n / m)`.
    pub block_count: usize,
    /// Seed of the permutation when drawn by the Monte-Carlo driver.
    pub permutation_seed: Option<u64>,
}

/// The order-m kernel: the leave-one-out risk of the m-point sample.
pub fn kernel_h(sample: &Dataset, k: usize) -> Result<f64> {
    if k + 1 > sample.len() {
        return Err(Error::Infeasible(format!(
            "kernel needs k <= m - 1, got k = {k}, m = {}",
            sample.len()
        )));
    }
    Ok(l1o(sample, k)?.value)
}

fn block_layout(n: usize, k: usize, p: usize) -> Result<(usize, usize)> {
    if p == 0 || p > n - 1 {
        return Err(Error::Infeasible(format!("need 1 <= p <= n-1, got p = {p}, n = {n}")));
    }
    let m = n - p + 1;
    if k + 1 > m {
        return Err(Error::Infeasible(format!(
            "block length m = {m} cannot hold k = {k} neighbors plus a test point"
        )));
    }
    Ok((m, n / m))
}

/// Splits the permuted sample into `floor(n/m)` consecutive blocks of
/// length `m = n - p + 1` and averages the kernel over them. Leftover
/// points beyond the last full block are unused.
pub fn hoeffding_block_estimate(
    dataset: &Dataset,
    k: usize,
    p: usize,
    permutation: &[usize],
) -> Result<BlockStatistic> {
    let n = dataset.len();
    if permutation.len() != n {
        return Err(Error::InvalidArgument(format!(
            "permutation length {} != n = {n}",
            permutation.len()
        )));
    }
    let (m, blocks) = block_layout(n, k, p)?;
    let mut acc = 0.0;
    for b in 0..blocks {
        let idx = &permutation[b * m..(b + 1) * m];
        acc += kernel_h(&dataset.subset(idx)?, k)?;
    }
    Ok(BlockStatistic { value: acc / blocks as f64, m, block_count: blocks, permutation_seed: None })
}

/// Exhaustive mean of [`hoeffding_block_estimate`] over all `n!`
/// permutations. Reproduces the exact leave-p-out value; only usable for
/// tiny n (guarded by `max_n`).
pub fn permutation_average(dataset: &Dataset, k: usize, p: usize, max_n: usize) -> Result<f64> {
    let n = dataset.len();
    let factorial = |v: usize| (2..=v as u128).fold(1u128, |a, t| a.saturating_mul(t));
    if n > max_n {
        return Err(Error::EnumerationCapExceeded {
            required: factorial(n),
            cap: factorial(max_n),
        });
    }
    block_layout(n, k, p)?;
    let mut total = 0.0;
    let mut count = 0u64;
    for perm in (0..n).permutations(n) {
        total += hoeffding_block_estimate(dataset, k, p, &perm)?.value;
        count += 1;
    }
    Ok(total / count as f64)
}

/// Monte-Carlo truncation of the permutation average: the mean of
/// `replicates` block statistics under independently seeded permutations,
/// with its sample standard error.
///
/// Replicates run in parallel; the reduction is in replicate order, so the
/// result is identical for any worker count.
pub fn incomplete_ustat_estimate(
    dataset: &Dataset,
    k: usize,
    p: usize,
    replicates: usize,
    seed: u64,
) -> Result<LpOEstimate> {
    if replicates < 2 {
        return Err(Error::InvalidArgument("need at least 2 replicates".into()));
    }
    let n = dataset.len();
    block_layout(n, k, p)?;
    let values: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            hoeffding_block_estimate(dataset, k, p, &perm).map(|b| b.value)
        })
        .collect::<Result<_>>()?;
    let r = replicates as f64;
    let mean = values.iter().sum::<f64>() / r;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
    Ok(LpOEstimate {
        value: mean,
        n,
        p,
        k,
        method: EstimateMethod::HoeffdingMc,
        std_error: Some((var / r).sqrt()),
    })
}
