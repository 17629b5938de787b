//! Exact leave-p-out risk of the k-NN classifier.
//!
//! Averaging the test error over all `C(n, p)` train/test splits never
//! requires enumerating them: conditioned on the global rank `r` of the k-th
//! nearest training neighbor of a held-out point, the training set is a
//! uniform draw, the rank distribution is hypergeometric-like, and the vote
//! among the k−1 closer neighbors is hypergeometric in the label counts.
//! Only ranks `r <= k+p-1` are reachable, so each point costs
//! `O((k+p)·k)` after the neighbor table is built.
//!
//! A definition-level oracle ([`lpo_bruteforce`]) enumerates every split in
//! exact rational arithmetic; it is deliberately independent of both the
//! recursion and the neighbor table.

use num::{BigInt, BigRational, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{squared_distance, Dataset};
use crate::error::{Error, Result};
use crate::neighbors::{build_neighbor_table, vote, NeighborTable};

/// Default ceiling on the number of training subsets the brute-force oracle
/// will enumerate.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// How a leave-p-out value was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    /// Rank-conditioned closed-form recursion.
    ExactDp,
    /// Exhaustive enumeration of all splits (exact rationals).
    BruteForce,
    /// Monte-Carlo average of Hoeffding block statistics.
    HoeffdingMc,
}

/// A leave-p-out risk value together with its context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpOEstimate {
    pub value: f64,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub method: EstimateMethod,
    /// Sample standard error, present for Monte-Carlo estimates only.
    pub std_error: Option<f64>,
}

/// Conditional misclassification probability of one held-out point over a
/// uniform random training set of size `n - p` drawn from the other points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerPointError {
    pub index: usize,
    pub prob: f64,
}

fn check_feasible(n: usize, k: usize, p: usize) -> Result<()> {
    if k == 0 || p == 0 {
        return Err(Error::InvalidArgument("k and p must be >= 1".into()));
    }
    if p + k > n {
        return Err(Error::Infeasible(format!(
            "p + k = {} exceeds n = {n}; training sets of size {} cannot hold k = {k} neighbors",
            p + k,
            n.saturating_sub(p)
        )));
    }
    Ok(())
}

/// Probability masses of the rank of the k-th training neighbor.
///
/// `mass(r) = C(r-1, k-1) · C(n-1-r, n-p-k) / C(n-1, n-p)` for
/// `r = k ..= k+p-1`, evaluated by a multiplicative recurrence so no raw
/// binomial is ever materialized:
/// `mass(k) = prod_{t=0}^{p-2} (n-1-k-t)/(n-1-t)` and
/// `mass(r+1)/mass(r) = r·(k+p-1-r) / ((r-k+1)·(n-1-r))`.
struct RankMasses {
    k: usize,
    mass: f64,
}

impl RankMasses {
    fn start(n: usize, k: usize, p: usize) -> Self {
        let mut mass = 1.0;
        for t in 0..p.saturating_sub(1) {
            mass *= (n - 1 - k - t) as f64 / (n - 1 - t) as f64;
        }
        RankMasses { k, mass }
    }

    fn at(&self, r: usize) -> f64 {
        debug_assert!(r >= self.k);
        self.mass
    }

    fn advance(&mut self, r: usize, n: usize, k: usize, p: usize) {
        self.mass *= (r * (k + p - 1 - r)) as f64 / ((r - k + 1) * (n - 1 - r)) as f64;
    }
}

/// Hypergeometric pmf of the number of positive labels among the k-1 closer
/// training neighbors: population `r-1` split into `n1` ones and `n0` zeros,
/// draw of size `k-1`.
///
/// The support endpoint is started from a telescoping product of ratios
/// `<= 1` (no large intermediates), then advanced by the exact pmf ratio.
fn hypergeom_fold<F: FnMut(usize, f64)>(n1: usize, n0: usize, draw: usize, mut f: F) {
    debug_assert!(draw <= n1 + n0);
    let pop = n1 + n0;
    let j_lo = draw.saturating_sub(n0);
    let j_hi = draw.min(n1);
    // pmf(j_lo): either C(n0, draw)/C(pop, draw) when j_lo = 0, or
    // C(n1, j_lo)/C(pop, draw) with all n0 zeros drawn; both telescope.
    let mut pmf = 1.0;
    if j_lo == 0 {
        for t in 0..draw {
            pmf *= (n0 - t) as f64 / (pop - t) as f64;
        }
    } else {
        for t in 0..n0 {
            pmf *= (draw - t) as f64 / (pop - t) as f64;
        }
    }
    let mut j = j_lo;
    loop {
        f(j, pmf);
        if j == j_hi {
            break;
        }
        pmf *= ((n1 - j) * (draw - j)) as f64 / ((j + 1) * (n0 + j + 1 - draw)) as f64;
        j += 1;
    }
}

/// Exact conditional misclassification probability of point `i` under a
/// uniform random training set `e` with `i ∉ e`, `|e| = n - p`.
///
/// Marginalizes the split indicator over the rank of the k-th training
/// neighbor (at most `k+p-1`) and the label composition of the k-1 closer
/// ones. The weight system sums to one, which the tests assert.
pub fn per_point_error_prob(
    table: &NeighborTable,
    labels: &[u8],
    i: usize,
    k: usize,
    p: usize,
) -> Result<PerPointError> {
    let n = table.len();
    check_feasible(n, k, p)?;
    let sigma = table.order_of(i);
    let y_i = labels[i];

    // ones_prefix[s] = number of 1-labels among the first s entries of sigma.
    let horizon = k + p - 1;
    let mut ones_prefix = vec![0usize; horizon + 1];
    for s in 1..=horizon {
        ones_prefix[s] = ones_prefix[s - 1] + usize::from(labels[sigma[s - 1] as usize]);
    }

    let mut masses = RankMasses::start(n, k, p);
    let mut prob = 0.0;
    for r in k..=horizon {
        let y_r = labels[sigma[r - 1] as usize] as usize;
        let n1 = ones_prefix[r - 1];
        let n0 = (r - 1) - n1;
        let mut err_given_rank = 0.0;
        hypergeom_fold(n1, n0, k - 1, |j, pmf| {
            if vote(j + y_r, k) != y_i {
                err_given_rank += pmf;
            }
        });
        prob += err_given_rank * masses.at(r);
        if r < horizon {
            masses.advance(r, n, k, p);
        }
    }
    Ok(PerPointError { index: i, prob })
}

/// Total mass of the rank/label weight system for point `i`; equals 1 up to
/// rounding. Exposed so conservation can be audited directly.
pub fn per_point_mass(table: &NeighborTable, labels: &[u8], i: usize, k: usize, p: usize) -> Result<f64> {
    let n = table.len();
    check_feasible(n, k, p)?;
    let sigma = table.order_of(i);
    let horizon = k + p - 1;
    let mut ones_prefix = vec![0usize; horizon + 1];
    for s in 1..=horizon {
        ones_prefix[s] = ones_prefix[s - 1] + usize::from(labels[sigma[s - 1] as usize]);
    }
    let mut masses = RankMasses::start(n, k, p);
    let mut total = 0.0;
    for r in k..=horizon {
        let n1 = ones_prefix[r - 1];
        let n0 = (r - 1) - n1;
        let mut inner = 0.0;
        hypergeom_fold(n1, n0, k - 1, |_, pmf| inner += pmf);
        total += inner * masses.at(r);
        if r < horizon {
            masses.advance(r, n, k, p);
        }
    }
    Ok(total)
}

/// Exact leave-p-out risk by the rank recursion: the mean of the per-point
/// conditional error probabilities, which equals the average over all
/// `C(n, p)` splits because each point is held out with probability `p/n`.
pub fn lpo_exact(dataset: &Dataset, k: usize, p: usize) -> Result<LpOEstimate> {
    let table = build_neighbor_table(dataset);
    lpo_exact_with_table(&table, &dataset.labels(), k, p)
}

/// [`lpo_exact`] against a prebuilt table; used by simulation campaigns and
/// the selection grid to avoid rebuilding orderings.
pub fn lpo_exact_with_table(
    table: &NeighborTable,
    labels: &[u8],
    k: usize,
    p: usize,
) -> Result<LpOEstimate> {
    let n = table.len();
    check_feasible(n, k, p)?;
    let probs: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| per_point_error_prob(table, labels, i, k, p).map(|e| e.prob))
        .collect::<Result<_>>()?;
    // Fixed-order reduction keeps the value independent of thread count.
    let value = probs.iter().sum::<f64>() / n as f64;
    Ok(LpOEstimate { value, n, p, k, method: EstimateMethod::ExactDp, std_error: None })
}

/// Number of p-subsets of an n-set, saturating at `u128::MAX` on overflow.
fn binomial_u128(n: usize, p: usize) -> u128 {
    let p = p.min(n - p);
    let mut acc: u128 = 1;
    for t in 0..p {
        match acc.checked_mul((n - t) as u128) {
            Some(v) => acc = v / (t as u128 + 1),
            None => return u128::MAX,
        }
    }
    acc
}

/// Stand-alone k-NN prediction used only by the brute-force oracle: sorts
/// (distance, index) pairs from scratch for each split instead of touching
/// the neighbor table, so the two routes share nothing but the tie-break
/// convention.
fn naive_predict(dataset: &Dataset, training: &[usize], i: usize, k: usize) -> u8 {
    let xi = dataset.features(i);
    let mut cand: Vec<(f64, usize)> = training
        .iter()
        .map(|&j| (squared_distance(xi, dataset.features(j)), j))
        .collect();
    cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let ones = cand[..k].iter().filter(|&&(_, j)| dataset.label(j) == 1).count();
    vote(ones, k)
}

/// Literal evaluation of the leave-p-out definition as an exact rational:
/// enumerate every training subset, count misclassified test points, divide
/// by `C(n, p) · p`.
pub fn lpo_bruteforce_rational(
    dataset: &Dataset,
    k: usize,
    p: usize,
    cap: u128,
) -> Result<BigRational> {
    let n = dataset.len();
    check_feasible(n, k, p)?;
    let splits = binomial_u128(n, p);
    if splits > cap {
        return Err(Error::EnumerationCapExceeded { required: splits, cap });
    }
    let mut errors: u64 = 0;
    let mut seen: u128 = 0;
    for training in itertools::Itertools::combinations(0..n, n - p) {
        seen += 1;
        for i in 0..n {
            if !training.contains(&i) && naive_predict(dataset, &training, i, k) != dataset.label(i)
            {
                errors += 1;
            }
        }
    }
    debug_assert_eq!(seen, splits);
    let denom = BigInt::from(splits) * BigInt::from(p as u64);
    Ok(BigRational::new(BigInt::from(errors), denom))
}

/// [`lpo_bruteforce_rational`] rounded to f64 and wrapped as an estimate.
pub fn lpo_bruteforce(dataset: &Dataset, k: usize, p: usize, cap: u128) -> Result<LpOEstimate> {
    let value = rational_to_f64(&lpo_bruteforce_rational(dataset, k, p, cap)?);
    Ok(LpOEstimate {
        value,
        n: dataset.len(),
        p,
        k,
        method: EstimateMethod::BruteForce,
        std_error: None,
    })
}

/// Exact rational version of [`per_point_error_prob`]: enumerates the
/// `C(n-1, n-p)` training sets avoiding `i`. Oracle for the recursion.
pub fn per_point_error_bruteforce(
    dataset: &Dataset,
    i: usize,
    k: usize,
    p: usize,
    cap: u128,
) -> Result<BigRational> {
    let n = dataset.len();
    check_feasible(n, k, p)?;
    let splits = binomial_u128(n - 1, n - p);
    if splits > cap {
        return Err(Error::EnumerationCapExceeded { required: splits, cap });
    }
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let mut errors: u64 = 0;
    for training in itertools::Itertools::combinations(others.into_iter(), n - p) {
        if naive_predict(dataset, &training, i, k) != dataset.label(i) {
            errors += 1;
        }
    }
    Ok(BigRational::new(BigInt::from(errors), BigInt::from(splits)))
}

/// Converts an exact rational to the nearest f64. Numerator and denominator
/// stay below the enumeration cap times n, far from f64 overflow.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(num), Some(den)) => num / den,
        _ => f64::NAN,
    }
}

/// Leave-one-out risk: the p = 1 case of the exact recursion.
pub fn l1o(dataset: &Dataset, k: usize) -> Result<LpOEstimate> {
    lpo_exact(dataset, k, 1)
}

/// Plain leave-one-out loop: classify each point from everything else and
/// count mistakes. Reference path for the p = 1 reduction.
pub fn l1o_direct(dataset: &Dataset, k: usize) -> Result<LpOEstimate> {
    let n = dataset.len();
    check_feasible(n, k, 1)?;
    let table = build_neighbor_table(dataset);
    let labels = dataset.labels();
    let mut errors = 0usize;
    let mut mask = vec![true; n];
    for i in 0..n {
        mask[i] = false;
        let pred = crate::neighbors::knn_classify(&table, &labels, &mask, i, k)?;
        if pred != labels[i] {
            errors += 1;
        }
        mask[i] = true;
    }
    Ok(LpOEstimate {
        value: errors as f64 / n as f64,
        n,
        p: 1,
        k,
        method: EstimateMethod::ExactDp,
        std_error: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn four_points() -> Dataset {
        Dataset::from_1d(&[0.0, 1.0, 2.0, 3.0], &[0, 0, 1, 1]).unwrap()
    }

    fn random_dataset(rng: &mut StdRng, n: usize, d: usize) -> Dataset {
        let features: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        // Avoid all-equal labels so votes are non-degenerate now and then.
        Dataset::from_parts(features, labels).unwrap()
    }

    #[test]
    fn three_point_l1o_is_one_third() {
        let ds = Dataset::from_1d(&[0.0, 1.0, 2.0], &[0, 0, 1]).unwrap();
        let est = lpo_exact(&ds, 1, 1).unwrap();
        assert_abs_diff_eq!(est.value, 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn three_point_last_index_always_errs() {
        let ds = Dataset::from_1d(&[0.0, 1.0, 2.0], &[0, 0, 1]).unwrap();
        let table = build_neighbor_table(&ds);
        let e = per_point_error_prob(&table, &ds.labels(), 2, 1, 1).unwrap();
        assert_eq!(e.prob, 1.0);
    }

    #[test]
    fn four_point_instance_is_five_twelfths() {
        let ds = four_points();
        let est = lpo_exact(&ds, 1, 2).unwrap();
        assert_abs_diff_eq!(est.value, 5.0 / 12.0, epsilon = 1e-15);
        let bf = lpo_bruteforce_rational(&ds, 1, 2, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(bf, BigRational::new(5.into(), 12.into()));
    }

    #[test]
    fn four_point_per_point_probs_match_enumeration() {
        // Conditional per-point error probabilities (training set avoids the
        // point); frozen from the exact enumeration oracle below.
        let ds = four_points();
        let table = build_neighbor_table(&ds);
        let labels = ds.labels();
        let expected = [1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0];
        for i in 0..4 {
            let dp = per_point_error_prob(&table, &labels, i, 1, 2).unwrap().prob;
            let oracle = per_point_error_bruteforce(&ds, i, 1, 2, 1000).unwrap();
            assert_abs_diff_eq!(dp, rational_to_f64(&oracle), epsilon = 1e-15);
            assert_abs_diff_eq!(dp, expected[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn all_equal_labels_give_zero() {
        let ds = Dataset::from_1d(&[0.0, 1.0, 2.0, 3.0, 4.0], &[1, 1, 1, 1, 1]).unwrap();
        for (k, p) in [(1, 1), (2, 2), (1, 3), (3, 1)] {
            assert_eq!(lpo_exact(&ds, k, p).unwrap().value, 0.0);
        }
    }

    #[test]
    fn mass_conservation_small_and_moderate() {
        let mut rng = StdRng::seed_from_u64(7);
        for &(n, k, p) in &[(6, 2, 3), (10, 3, 5), (40, 5, 20), (120, 4, 80), (90, 3, 86)] {
            let ds = random_dataset(&mut rng, n, 2);
            let table = build_neighbor_table(&ds);
            let labels = ds.labels();
            for i in 0..n {
                let mass = per_point_mass(&table, &labels, i, k, p).unwrap();
                assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn infeasible_parameters_are_rejected() {
        let ds = four_points();
        assert!(matches!(lpo_exact(&ds, 2, 3), Err(Error::Infeasible(_))));
        assert!(matches!(lpo_exact(&ds, 4, 1), Err(Error::Infeasible(_))));
        assert!(lpo_exact(&ds, 3, 1).is_ok());
    }

    #[test]
    fn enumeration_cap_refuses() {
        let mut rng = StdRng::seed_from_u64(3);
        let ds = random_dataset(&mut rng, 30, 1);
        assert!(matches!(
            lpo_bruteforce(&ds, 1, 15, 1000),
            Err(Error::EnumerationCapExceeded { .. })
        ));
    }

    #[test]
    fn l1o_equals_p1_exact_bit_for_bit() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..10 {
            let ds = random_dataset(&mut rng, 25, 2);
            for k in [1, 2, 5] {
                let a = l1o(&ds, k).unwrap().value;
                let b = lpo_exact(&ds, k, 1).unwrap().value;
                let c = l1o_direct(&ds, k).unwrap().value;
                assert_eq!(a.to_bits(), b.to_bits());
                assert_eq!(a.to_bits(), c.to_bits());
            }
        }
    }

    #[test]
    fn label_flip_symmetry_for_odd_k() {
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..5 {
            let ds = random_dataset(&mut rng, 20, 1);
            let flipped = Dataset::from_parts(
                (0..ds.len()).map(|i| ds.features(i).to_vec()).collect(),
                ds.labels().iter().map(|&y| 1 - y).collect(),
            )
            .unwrap();
            for (k, p) in [(1, 1), (3, 4), (5, 2)] {
                let a = lpo_exact(&ds, k, p).unwrap().value;
                let b = lpo_exact(&flipped, k, p).unwrap().value;
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn exact_matches_bruteforce_on_random_instances() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..8 {
            let n = rng.random_range(5..=9);
            let d = rng.random_range(1..=2);
            let ds = random_dataset(&mut rng, n, d);
            for k in 1..=3usize {
                for p in 1..=(n - k) {
                    let exact = lpo_exact(&ds, k, p).unwrap().value;
                    let brute = rational_to_f64(
                        &lpo_bruteforce_rational(&ds, k, p, DEFAULT_ENUMERATION_CAP).unwrap(),
                    );
                    assert_abs_diff_eq!(exact, brute, epsilon = 1e-12);
                }
            }
        }
    }
}
