//! Monte-Carlo verification of the bound catalogue.
//!
//! Samples synthetic binary-classification problems, measures empirical
//! moments, tails, bias, stability, and neighbor in-degrees of the exact
//! leave-p-out estimator, and compares each measurement against its proved
//! envelope. Every comparison allows three Monte-Carlo standard errors on
//! the empirical side; the bound side is deterministic. A violation flag is
//! therefore evidence of an implementation bug, not of sampling noise.
//!
//! Replication is seeded per replicate (see [`crate::seeding`]) and all
//! aggregation runs in replicate order, so a report is byte-identical for a
//! given `(spec, sizes, seed)` regardless of worker count.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::bounds::{self, BoundConstants};
use crate::dataset::{Dataset, LabeledPoint};
use crate::error::{Error, Result};
use crate::lpo::lpo_exact_with_table;
use crate::neighbors::{build_neighbor_table, knn_predict_query, NeighborTable};
use crate::seeding::replicate_rng;

/// Synthetic data-generating processes with a computable regression
/// function in one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    /// `Y ~ Bernoulli(class_prior)`, `X | Y=y ~ N(mean_y, std_y)`.
    GaussianMixture1d {
        class_prior: f64,
        mean0: f64,
        std0: f64,
        mean1: f64,
        std1: f64,
    },
    /// Isotropic Gaussian blobs in `R^d`.
    GaussianMixtureMd {
        class_prior: f64,
        mean0: Vec<f64>,
        mean1: Vec<f64>,
        std: f64,
    },
    /// `X ~ U[0,1)`; `eta(x)` alternates between `eta_high` and
    /// `1 - eta_high` across `cells` equal intervals.
    UniformChecker1d { cells: usize, eta_high: f64 },
}

impl DistributionSpec {
    /// The default 1-d benchmark: balanced classes, unit-variance Gaussians
    /// at -1 and +1.
    pub fn default_1d() -> Self {
        DistributionSpec::GaussianMixture1d {
            class_prior: 0.5,
            mean0: -1.0,
            std0: 1.0,
            mean1: 1.0,
            std1: 1.0,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            DistributionSpec::GaussianMixture1d { .. } => 1,
            DistributionSpec::GaussianMixtureMd { mean0, .. } => mean0.len(),
            DistributionSpec::UniformChecker1d { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prior_ok = |p: f64| p > 0.0 && p < 1.0;
        match self {
            DistributionSpec::GaussianMixture1d { class_prior, std0, std1, .. } => {
                if !prior_ok(*class_prior) {
                    return Err(Error::InvalidInput("class_prior must lie in (0,1)".into()));
                }
                if *std0 <= 0.0 || *std1 <= 0.0 {
                    return Err(Error::InvalidInput("standard deviations must be > 0".into()));
                }
            }
            DistributionSpec::GaussianMixtureMd { class_prior, mean0, mean1, std } => {
                if !prior_ok(*class_prior) {
                    return Err(Error::InvalidInput("class_prior must lie in (0,1)".into()));
                }
                if mean0.is_empty() || mean0.len() != mean1.len() {
                    return Err(Error::InvalidInput(
                        "mean vectors must be nonempty and of equal length".into(),
                    ));
                }
                if *std <= 0.0 {
                    return Err(Error::InvalidInput("std must be > 0".into()));
                }
            }
            DistributionSpec::UniformChecker1d { cells, eta_high } => {
                if *cells == 0 {
                    return Err(Error::InvalidInput("cells must be >= 1".into()));
                }
                if !(0.0..=1.0).contains(eta_high) {
                    return Err(Error::InvalidInput("eta_high must lie in [0,1]".into()));
                }
            }
        }
        Ok(())
    }

    /// Regression function `eta(x) = P(Y = 1 | X = x)`, closed form for the
    /// 1-d kinds.
    pub fn eta(&self, x: f64) -> Result<f64> {
        match self {
            DistributionSpec::GaussianMixture1d { class_prior, mean0, std0, mean1, std1 } => {
                let phi = |x: f64, m: f64, s: f64| {
                    (-((x - m) / s).powi(2) / 2.0).exp() / s
                };
                let num = class_prior * phi(x, *mean1, *std1);
                let den = num + (1.0 - class_prior) * phi(x, *mean0, *std0);
                Ok(num / den)
            }
            DistributionSpec::UniformChecker1d { cells, eta_high } => {
                if !(0.0..1.0).contains(&x) {
                    return Ok(0.0);
                }
                let c = (x * *cells as f64) as usize;
                Ok(if c % 2 == 0 { *eta_high } else { 1.0 - *eta_high })
            }
            DistributionSpec::GaussianMixtureMd { .. } => Err(Error::InvalidArgument(
                "closed-form eta is only available for 1-d specs".into(),
            )),
        }
    }

    /// Marginal probability of class 1.
    pub fn class_prior(&self) -> f64 {
        match self {
            DistributionSpec::GaussianMixture1d { class_prior, .. }
            | DistributionSpec::GaussianMixtureMd { class_prior, .. } => *class_prior,
            DistributionSpec::UniformChecker1d { cells, eta_high } => {
                let w = 1.0 / *cells as f64;
                (0..*cells)
                    .map(|c| if c % 2 == 0 { *eta_high } else { 1.0 - *eta_high } * w)
                    .sum()
            }
        }
    }

    /// `P(X <= x, Y = y)` for the 1-d kinds; `x` may be infinite.
    fn joint_cdf(&self, x: f64, y: u8) -> Result<f64> {
        match self {
            DistributionSpec::GaussianMixture1d { class_prior, mean0, std0, mean1, std1 } => {
                let (prior, mean, std) = if y == 1 {
                    (*class_prior, *mean1, *std1)
                } else {
                    (1.0 - *class_prior, *mean0, *std0)
                };
                let cdf = if x == f64::NEG_INFINITY {
                    0.0
                } else if x == f64::INFINITY {
                    1.0
                } else {
                    statrs::distribution::Normal::new(mean, std)
                        .expect("validated spec")
                        .cdf(x)
                };
                Ok(prior * cdf)
            }
            DistributionSpec::UniformChecker1d { cells, eta_high } => {
                let xx = x.clamp(0.0, 1.0);
                let w = 1.0 / *cells as f64;
                let eta_c = |c: usize| if c % 2 == 0 { *eta_high } else { 1.0 - *eta_high };
                let full = (xx * *cells as f64).floor() as usize;
                let full = full.min(*cells);
                let mut mass1: f64 = (0..full).map(|c| eta_c(c) * w).sum();
                if full < *cells {
                    mass1 += eta_c(full) * (xx - full as f64 * w);
                }
                Ok(if y == 1 { mass1 } else { xx - mass1 })
            }
            DistributionSpec::GaussianMixtureMd { .. } => Err(Error::InvalidArgument(
                "closed-form integration is only available for 1-d specs".into(),
            )),
        }
    }

    fn sample_point<R: Rng>(&self, rng: &mut R) -> LabeledPoint {
        match self {
            DistributionSpec::GaussianMixture1d { class_prior, mean0, std0, mean1, std1 } => {
                let y = u8::from(rng.random_bool(*class_prior));
                let (m, s) = if y == 1 { (*mean1, *std1) } else { (*mean0, *std0) };
                let x = Normal::new(m, s).expect("validated spec").sample(rng);
                LabeledPoint { features: vec![x], label: y }
            }
            DistributionSpec::GaussianMixtureMd { class_prior, mean0, mean1, std } => {
                let y = u8::from(rng.random_bool(*class_prior));
                let mean = if y == 1 { mean1 } else { mean0 };
                let noise = Normal::new(0.0, *std).expect("validated spec");
                let features = mean.iter().map(|&m| m + noise.sample(rng)).collect();
                LabeledPoint { features, label: y }
            }
            DistributionSpec::UniformChecker1d { .. } => {
                let x: f64 = rng.random_range(0.0..1.0);
                let eta = self.eta(x).expect("1-d spec");
                LabeledPoint { features: vec![x], label: u8::from(rng.random_bool(eta)) }
            }
        }
    }
}

/// Draws n i.i.d. points; deterministic under the seed.
pub fn sample_dataset(spec: &DistributionSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = replicate_rng(seed, 0);
    sample_dataset_with_rng(spec, n, &mut rng)
}

pub(crate) fn sample_dataset_with_rng<R: Rng>(
    spec: &DistributionSpec,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    Dataset::new((0..n).map(|_| spec.sample_point(rng)).collect())
}

/// How to evaluate the conditional error of a fitted classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMethod {
    /// Exact integration of the mixture over the decision cells (1-d only).
    ClosedForm1d,
    /// Plug-in frequency on an independent seeded test set.
    TestSet { size: usize, seed: u64 },
}

/// Conditional error `P(fit(X) != Y | training sample)` of the k-NN fit on
/// `dataset`.
///
/// In one dimension the fitted rule is piecewise constant: scanning the
/// sorted training points, the k-neighbor window of a query shifts exactly
/// at the midpoints `(x_(j) + x_(j+k))/2`, so the error is a finite sum of
/// per-cell joint masses (Gaussian cells via the normal CDF, checker cells
/// by piecewise-linear integration). Distance ties sit on a null set and
/// cannot affect the integral.
pub fn conditional_error(
    dataset: &Dataset,
    k: usize,
    spec: &DistributionSpec,
    method: RiskMethod,
) -> Result<f64> {
    spec.validate()?;
    let n = dataset.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    match method {
        RiskMethod::ClosedForm1d => {
            if spec.dimension() != 1 || dataset.dimension() != 1 {
                return Err(Error::InvalidArgument(
                    "closed-form risk is only available in one dimension".into(),
                ));
            }
            let mut pts: Vec<(f64, u8)> =
                (0..n).map(|i| (dataset.features(i)[0], dataset.label(i))).collect();
            pts.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let ones: Vec<usize> = {
                let mut acc = 0;
                let mut v = Vec::with_capacity(n + 1);
                v.push(0);
                for &(_, y) in &pts {
                    acc += usize::from(y);
                    v.push(acc);
                }
                v
            };
            let window_pred = |j: usize| crate::neighbors::vote(ones[j + k] - ones[j], k);
            let mut error = 0.0;
            let mut left = f64::NEG_INFINITY;
            for j in 0..=(n - k) {
                let right = if j == n - k {
                    f64::INFINITY
                } else {
                    (pts[j].0 + pts[j + k].0) / 2.0
                };
                if right > left {
                    let wrong: u8 = 1 - window_pred(j);
                    error += spec.joint_cdf(right, wrong)? - spec.joint_cdf(left, wrong)?;
                    left = right;
                }
            }
            Ok(error)
        }
        RiskMethod::TestSet { size, seed } => {
            if size == 0 {
                return Err(Error::InvalidArgument("test set size must be >= 1".into()));
            }
            let mut rng = replicate_rng(seed, u64::MAX);
            let mut wrong = 0usize;
            for _ in 0..size {
                let pt = spec.sample_point(&mut rng);
                let pred = knn_predict_query(dataset, None, &pt.features, k)?;
                wrong += usize::from(pred != pt.label);
            }
            Ok(wrong as f64 / size as f64)
        }
    }
}

/// Largest k-NN in-degree: `max_j #{i != j : j in V_k(X_i)}` under the
/// table's tie-break. Stone's lemma says this never exceeds `k * gamma_d`.
pub fn stone_counter(table: &NeighborTable, k: usize) -> usize {
    let n = table.len();
    let mut indegree = vec![0usize; n];
    for i in 0..n {
        for &j in table.neighbors(i, k) {
            indegree[j as usize] += 1;
        }
    }
    indegree.into_iter().max().unwrap_or(0)
}

/// [`stone_counter`] for a dataset without a prebuilt table.
pub fn stone_counter_dataset(dataset: &Dataset, k: usize) -> usize {
    stone_counter(&build_neighbor_table(dataset), k)
}

/// Result of the fit-stability experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult {
    pub frequency: f64,
    pub std_error: f64,
    /// The proved envelope `4/sqrt(2 pi) p sqrt(k) / n`.
    pub bound: f64,
    pub replicates: usize,
}

/// Frequency, over fresh samples and an independent query, that the k-NN
/// fits on all n points and on the first n-p points disagree at the query.
pub fn stability_experiment(
    spec: &DistributionSpec,
    n: usize,
    p: usize,
    k: usize,
    replicates: usize,
    seed: u64,
) -> Result<StabilityResult> {
    spec.validate()?;
    if p + k > n {
        return Err(Error::Infeasible(format!("need p + k <= n, got p = {p}, k = {k}, n = {n}")));
    }
    if replicates == 0 {
        return Err(Error::InvalidArgument("need at least 1 replicate".into()));
    }
    let disagreements: Vec<u8> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep);
            let ds = sample_dataset_with_rng(spec, n, &mut rng)?;
            let query = spec.sample_point(&mut rng);
            let full = knn_predict_query(&ds, None, &query.features, k)?;
            let mut mask = vec![false; n];
            mask[..n - p].fill(true);
            let reduced = knn_predict_query(&ds, Some(&mask), &query.features, k)?;
            Ok(u8::from(full != reduced))
        })
        .collect::<Result<_>>()?;
    let r = replicates as f64;
    let frequency = disagreements.iter().map(|&d| d as f64).sum::<f64>() / r;
    Ok(StabilityResult {
        frequency,
        std_error: (frequency * (1.0 - frequency) / r).sqrt(),
        bound: bounds::stability_bound(n, p, k),
        replicates,
    })
}

/// One tail envelope evaluated at a grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeValue {
    pub id: String,
    pub value: f64,
}

/// Empirical tail frequency at one t, with every applicable envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub t: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub envelopes: Vec<EnvelopeValue>,
}

/// One envelope comparison: empirical value against bound plus three
/// standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationCheck {
    pub id: String,
    pub empirical: f64,
    pub bound: f64,
    /// Three Monte-Carlo standard errors of the empirical side.
    pub tolerance: f64,
    /// Bound divided by empirical value; absent when the empirical side is
    /// zero.
    pub slack_ratio: Option<f64>,
    pub violated: bool,
}

impl ViolationCheck {
    fn new(id: impl Into<String>, empirical: f64, bound: f64, tolerance: f64) -> Self {
        ViolationCheck {
            id: id.into(),
            empirical,
            bound,
            tolerance,
            slack_ratio: (empirical > 0.0).then(|| bound / empirical),
            violated: empirical > bound + tolerance,
        }
    }
}

/// Campaign configuration; see [`empirical_campaign`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub replicates: usize,
    /// Deviation grid for tail frequencies; `None` derives one covering the
    /// observed deviations.
    pub t_grid: Option<Vec<f64>>,
    /// Highest central-moment order checked (>= 2).
    pub q_max: usize,
    pub seed: u64,
    /// Stone constant; defaults to the built-in value for the spec's
    /// dimension.
    pub gamma_d: Option<f64>,
    /// Test-set size for risk evaluation when no closed form exists (d >= 2).
    pub risk_test_points: usize,
}

impl CampaignConfig {
    pub fn new(n: usize, p: usize, k: usize, replicates: usize, seed: u64) -> Self {
        CampaignConfig {
            n,
            p,
            k,
            replicates,
            t_grid: None,
            q_max: 4,
            seed,
            gamma_d: None,
            risk_test_points: 10_000,
        }
    }
}

/// Full empirical verification report for one campaign cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub spec: DistributionSpec,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub gamma_d: f64,
    pub replicates: usize,
    pub seed: u64,
    pub constants: BoundConstants,
    pub mean_estimate: f64,
    pub mean_conditional_error: f64,
    /// Signed first central moment of the estimates; zero up to rounding by
    /// construction, reported as a numerical sanity value.
    pub first_central_moment: f64,
    /// Sample variance of the estimates.
    pub variance: f64,
    /// Absolute central moments `E|e - mean|^q` for q = 2..=q_max.
    pub central_abs_moments: Vec<MomentValue>,
    pub bias: f64,
    pub bias_std_error: f64,
    pub mse: f64,
    pub mse_std_error: f64,
    pub stability_frequency: f64,
    pub stability_std_error: f64,
    pub stone_max_indegree: usize,
    pub tails: Vec<TailRow>,
    pub checks: Vec<ViolationCheck>,
    pub violations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentValue {
    pub order: usize,
    pub value: f64,
    pub std_error: f64,
}

fn is_large_p(n: usize, p: usize) -> bool {
    p as f64 > n as f64 / 2.0 + 1.0
}

/// The tail envelopes applicable at `(n, p, k, gamma_d)`, as valid
/// two-sided bounds: the one-sided statements are doubled, the
/// bounded-differences and block-decomposition bounds are two-sided as
/// stated.
pub fn tail_envelopes(n: usize, p: usize, k: usize, gamma_d: f64, t: f64) -> Vec<EnvelopeValue> {
    let mut env = vec![
        EnvelopeValue { id: "mcdiarmid_tail".into(), value: bounds::mcdiarmid_tail(n, p, k, gamma_d, t) },
        EnvelopeValue {
            id: "concentration_tail_poly_x2".into(),
            value: 2.0 * bounds::concentration_tail_poly(n, p, k, gamma_d, t),
        },
        EnvelopeValue {
            id: "concentration_tail_small_p_x2".into(),
            value: 2.0 * bounds::concentration_tail_small_p(n, p, k, gamma_d, t),
        },
    ];
    if let Ok(v) = bounds::concentration_tail_large_p(n, p, k, gamma_d, t) {
        env.push(EnvelopeValue { id: "concentration_tail_large_p".into(), value: v });
    }
    env
}

fn auto_t_grid(deviations: &[f64]) -> Vec<f64> {
    let max_dev = deviations.iter().cloned().fold(0.0f64, f64::max);
    if max_dev <= 0.0 {
        return vec![1e-9];
    }
    (1..=8).map(|i| 1.05 * max_dev * i as f64 / 8.0).collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sd_of_mean(values: &[f64]) -> f64 {
    let r = values.len() as f64;
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (r - 1.0);
    (var / r).sqrt()
}

/// Runs one verification campaign: `replicates` fresh datasets, the exact
/// leave-p-out value and the conditional error of each, then every
/// applicable envelope check at tolerance 3 standard errors.
pub fn empirical_campaign(
    spec: &DistributionSpec,
    cfg: &CampaignConfig,
) -> Result<ReplicationReport> {
    spec.validate()?;
    let &CampaignConfig { n, p, k, replicates, q_max, seed, .. } = cfg;
    if replicates < 2 {
        return Err(Error::InvalidArgument("need at least 2 replicates".into()));
    }
    if q_max < 2 {
        return Err(Error::InvalidArgument("q_max must be >= 2".into()));
    }
    let gamma_d = match cfg.gamma_d {
        Some(g) => bounds::stone_gamma(spec.dimension(), Some(g))?,
        None => bounds::stone_gamma(spec.dimension(), None)?,
    };
    let closed_form = spec.dimension() == 1;

    struct ReplicateOutcome {
        estimate: f64,
        conditional_error: f64,
        stability_disagree: u8,
        stone: usize,
    }

    let outcomes: Vec<ReplicateOutcome> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep);
            let ds = sample_dataset_with_rng(spec, n, &mut rng)?;
            let query = spec.sample_point(&mut rng);
            let table = build_neighbor_table(&ds);
            let estimate = lpo_exact_with_table(&table, &ds.labels(), k, p)?.value;
            let method = if closed_form {
                RiskMethod::ClosedForm1d
            } else {
                RiskMethod::TestSet {
                    size: cfg.risk_test_points,
                    seed: crate::seeding::splitmix64(seed ^ rep),
                }
            };
            let conditional_error = conditional_error(&ds, k, spec, method)?;
            let full = knn_predict_query(&ds, None, &query.features, k)?;
            let mut mask = vec![false; n];
            mask[..n - p].fill(true);
            let reduced = knn_predict_query(&ds, Some(&mask), &query.features, k)?;
            Ok(ReplicateOutcome {
                estimate,
                conditional_error,
                stability_disagree: u8::from(full != reduced),
                stone: stone_counter(&table, k),
            })
        })
        .collect::<Result<_>>()?;

    let estimates: Vec<f64> = outcomes.iter().map(|o| o.estimate).collect();
    let errors: Vec<f64> = outcomes.iter().map(|o| o.conditional_error).collect();
    let r = replicates as f64;
    let mean_estimate = mean(&estimates);
    let mean_conditional_error = mean(&errors);

    let deviations: Vec<f64> = estimates.iter().map(|e| (e - mean_estimate).abs()).collect();
    let abs_moment = |q: usize| deviations.iter().map(|d| d.powi(q as i32)).sum::<f64>() / r;
    // Delta-method standard error of an empirical central moment.
    let moment_se = |q: usize| ((abs_moment(2 * q) - abs_moment(q).powi(2)).max(0.0) / r).sqrt();

    let first_central_moment =
        estimates.iter().map(|e| e - mean_estimate).sum::<f64>() / r;
    let variance =
        estimates.iter().map(|e| (e - mean_estimate).powi(2)).sum::<f64>() / (r - 1.0);

    let diffs: Vec<f64> = estimates.iter().zip(&errors).map(|(e, l)| e - l).collect();
    let sq_diffs: Vec<f64> = diffs.iter().map(|d| d * d).collect();
    let bias = mean(&diffs);
    let bias_std_error = sd_of_mean(&diffs);
    let mse = mean(&sq_diffs);
    let mse_std_error = sd_of_mean(&sq_diffs);

    let stability_frequency =
        outcomes.iter().map(|o| o.stability_disagree as f64).sum::<f64>() / r;
    let stability_std_error = (stability_frequency * (1.0 - stability_frequency) / r).sqrt();
    let stone_max_indegree = outcomes.iter().map(|o| o.stone).max().unwrap_or(0);

    let t_grid = cfg.t_grid.clone().unwrap_or_else(|| auto_t_grid(&deviations));
    let tails: Vec<TailRow> = t_grid
        .iter()
        .map(|&t| {
            let hits = deviations.iter().filter(|&&d| d > t).count();
            let empirical = hits as f64 / r;
            TailRow {
                t,
                empirical,
                std_error: (empirical * (1.0 - empirical) / r).sqrt(),
                envelopes: tail_envelopes(n, p, k, gamma_d, t),
            }
        })
        .collect();

    let mut checks = vec![
        ViolationCheck::new(
            "bias",
            bias.abs(),
            bounds::bias_bound(n, p, k),
            3.0 * bias_std_error,
        ),
        ViolationCheck::new("mse", mse, bounds::mse_bound(n, p, k), 3.0 * mse_std_error),
        ViolationCheck::new(
            "variance_lpo",
            variance,
            bounds::moment_bound_lpo(2.0, n, p, k, gamma_d),
            3.0 * moment_se(2),
        ),
        ViolationCheck::new(
            "stability",
            stability_frequency,
            bounds::stability_bound(n, p, k),
            3.0 * stability_std_error,
        ),
        ViolationCheck::new(
            "stone_ceiling",
            stone_max_indegree as f64,
            k as f64 * gamma_d,
            0.0,
        ),
    ];
    if is_large_p(n, p) {
        checks.push(ViolationCheck::new(
            "variance_lpo_large_p",
            variance,
            bounds::moment_bound_lpo_large_p(2.0, n, p, k, gamma_d)?,
            3.0 * moment_se(2),
        ));
    }
    let mut central_abs_moments = Vec::new();
    for q in 2..=q_max {
        central_abs_moments.push(MomentValue {
            order: q,
            value: abs_moment(q),
            std_error: moment_se(q),
        });
        if q > 2 {
            checks.push(ViolationCheck::new(
                format!("moment_lpo_q{q}"),
                abs_moment(q),
                bounds::moment_bound_lpo(q as f64, n, p, k, gamma_d),
                3.0 * moment_se(q),
            ));
            if is_large_p(n, p) {
                checks.push(ViolationCheck::new(
                    format!("moment_lpo_large_p_q{q}"),
                    abs_moment(q),
                    bounds::moment_bound_lpo_large_p(q as f64, n, p, k, gamma_d)?,
                    3.0 * moment_se(q),
                ));
            }
        }
    }
    for row in &tails {
        for env in &row.envelopes {
            checks.push(ViolationCheck::new(
                format!("{}[t={}]", env.id, row.t),
                row.empirical,
                env.value,
                3.0 * row.std_error,
            ));
        }
    }
    let violations = checks.iter().filter(|c| c.violated).count();

    Ok(ReplicationReport {
        spec: spec.clone(),
        n,
        p,
        k,
        gamma_d,
        replicates,
        seed,
        constants: BoundConstants::from_gamma(gamma_d),
        mean_estimate,
        mean_conditional_error,
        first_central_moment,
        variance,
        central_abs_moments,
        bias,
        bias_std_error,
        mse,
        mse_std_error,
        stability_frequency,
        stability_std_error,
        stone_max_indegree,
        tails,
        checks,
        violations,
    })
}

/// Lean tail-only campaign: replicated exact leave-p-out values, their
/// empirical tail frequencies on the grid, and every applicable envelope.
pub fn tail_experiment(
    spec: &DistributionSpec,
    n: usize,
    p: usize,
    k: usize,
    replicates: usize,
    t_grid: Option<Vec<f64>>,
    seed: u64,
) -> Result<Vec<TailRow>> {
    spec.validate()?;
    if replicates < 2 {
        return Err(Error::InvalidArgument("need at least 2 replicates".into()));
    }
    let gamma_d = bounds::stone_gamma(spec.dimension(), None)?;
    let estimates: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep);
            let ds = sample_dataset_with_rng(spec, n, &mut rng)?;
            Ok(crate::lpo::lpo_exact(&ds, k, p)?.value)
        })
        .collect::<Result<_>>()?;
    let m = mean(&estimates);
    let deviations: Vec<f64> = estimates.iter().map(|e| (e - m).abs()).collect();
    let grid = t_grid.unwrap_or_else(|| auto_t_grid(&deviations));
    let r = replicates as f64;
    Ok(grid
        .into_iter()
        .map(|t| {
            let empirical = deviations.iter().filter(|&&d| d > t).count() as f64 / r;
            TailRow {
                t,
                empirical,
                std_error: (empirical * (1.0 - empirical) / r).sqrt(),
                envelopes: tail_envelopes(n, p, k, gamma_d, t),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sampling_is_deterministic_and_balanced() {
        let spec = DistributionSpec::default_1d();
        let a = sample_dataset(&spec, 100, 7).unwrap();
        let b = sample_dataset(&spec, 100, 7).unwrap();
        assert_eq!(a, b);
        let big = sample_dataset(&spec, 100_000, 11).unwrap();
        let ones = big.labels().iter().map(|&y| y as f64).sum::<f64>();
        let se = (0.25f64 * 100_000.0).sqrt();
        assert!((ones - 50_000.0).abs() < 3.0 * se, "ones = {ones}");
    }

    #[test]
    fn eta_checker_and_mixture() {
        let checker = DistributionSpec::UniformChecker1d { cells: 2, eta_high: 1.0 };
        assert_eq!(checker.eta(0.25).unwrap(), 1.0);
        assert_eq!(checker.eta(0.75).unwrap(), 0.0);
        assert_abs_diff_eq!(checker.class_prior(), 0.5, epsilon = 1e-15);
        let mix = DistributionSpec::default_1d();
        assert_abs_diff_eq!(mix.eta(0.0).unwrap(), 0.5, epsilon = 1e-12);
        assert!(mix.eta(3.0).unwrap() > 0.99);
    }

    #[test]
    fn constant_zero_classifier_errs_at_prior() {
        // All labels 0 forces the constant-0 prediction everywhere; its
        // conditional error is P(Y = 1) = 1/2.
        let spec = DistributionSpec::default_1d();
        let ds = Dataset::from_1d(&[-2.0, -1.0, 0.5, 1.5], &[0, 0, 0, 0]).unwrap();
        let err = conditional_error(&ds, 3, &spec, RiskMethod::ClosedForm1d).unwrap();
        assert_abs_diff_eq!(err, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_matches_test_set() {
        let spec = DistributionSpec::default_1d();
        let ds = sample_dataset(&spec, 60, 3).unwrap();
        for k in [1, 3, 7] {
            let exact = conditional_error(&ds, k, &spec, RiskMethod::ClosedForm1d).unwrap();
            let size = 200_000;
            let plugin =
                conditional_error(&ds, k, &spec, RiskMethod::TestSet { size, seed: 5 }).unwrap();
            let se = (exact * (1.0 - exact) / size as f64).sqrt();
            assert!(
                (exact - plugin).abs() <= 4.0 * se + 1e-9,
                "k = {k}: closed {exact} vs plug-in {plugin}"
            );
        }
    }

    #[test]
    fn perfect_separation_risk_vanishes() {
        let spec = DistributionSpec::UniformChecker1d { cells: 2, eta_high: 1.0 };
        let ds = sample_dataset(&spec, 500, 21).unwrap();
        let err = conditional_error(&ds, 1, &spec, RiskMethod::ClosedForm1d).unwrap();
        assert!(err < 0.01, "risk {err}");
    }

    #[test]
    fn closed_form_rejects_multidimensional() {
        let spec = DistributionSpec::GaussianMixtureMd {
            class_prior: 0.5,
            mean0: vec![0.0, 0.0],
            mean1: vec![1.0, 1.0],
            std: 1.0,
        };
        let ds = sample_dataset(&spec, 20, 3).unwrap();
        assert!(conditional_error(&ds, 1, &spec, RiskMethod::ClosedForm1d).is_err());
        assert!(
            conditional_error(&ds, 1, &spec, RiskMethod::TestSet { size: 100, seed: 1 }).is_ok()
        );
    }

    #[test]
    fn stone_counts_on_pair_and_grid() {
        let pair = Dataset::from_1d(&[0.0, 1.0], &[0, 1]).unwrap();
        assert_eq!(stone_counter(&build_neighbor_table(&pair), 1), 1);
        // Equally spaced grid, k = 1: interior ties resolve to the smaller
        // index, capping the in-degree at 2.
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let grid = Dataset::from_1d(&xs, &[0; 10]).unwrap();
        assert_eq!(stone_counter(&build_neighbor_table(&grid), 1), 2);
    }

    #[test]
    fn stability_degenerate_duplicates_never_disagree() {
        // Removing points that are duplicated inside the retained prefix
        // cannot change any prediction.
        let xs = [0.0, 1.0, 2.0, 3.0, 0.0, 1.0];
        let ys = [0, 1, 0, 1, 0, 1];
        let ds = Dataset::from_1d(&xs, &ys).unwrap();
        for q in [-0.7, 0.2, 1.4, 2.9, 5.0] {
            let full = knn_predict_query(&ds, None, &[q], 1).unwrap();
            let mask = [true, true, true, true, false, false];
            let reduced = knn_predict_query(&ds, Some(&mask), &[q], 1).unwrap();
            assert_eq!(full, reduced);
        }
    }

    #[test]
    fn stability_experiment_respects_envelope() {
        let spec = DistributionSpec::default_1d();
        let res = stability_experiment(&spec, 100, 5, 1, 400, 13).unwrap();
        assert!(res.frequency <= res.bound + 3.0 * res.std_error);
        let rerun = stability_experiment(&spec, 100, 5, 1, 400, 13).unwrap();
        assert_eq!(res, rerun);
    }

    #[test]
    fn small_campaign_has_no_violations_and_is_reproducible() {
        let spec = DistributionSpec::default_1d();
        let cfg = CampaignConfig::new(40, 5, 3, 120, 2024);
        let report = empirical_campaign(&spec, &cfg).unwrap();
        assert_eq!(report.violations, 0, "checks: {:?}", report.checks);
        assert!(report.first_central_moment.abs() < 1e-12);
        for w in report.tails.windows(2) {
            assert!(w[1].empirical <= w[0].empirical);
        }
        let again = empirical_campaign(&spec, &cfg).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn large_p_campaign_exercises_block_regime() {
        let spec = DistributionSpec::default_1d();
        let mut cfg = CampaignConfig::new(30, 26, 2, 80, 5);
        cfg.q_max = 4;
        let report = empirical_campaign(&spec, &cfg).unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.checks.iter().any(|c| c.id == "variance_lpo_large_p"));
        assert!(report
            .tails
            .iter()
            .all(|row| row.envelopes.iter().any(|e| e.id == "concentration_tail_large_p")));
    }
}
