//! Closed-form risk, moment, and concentration bounds for the leave-p-out
//! estimator of the k-NN classifier.
//!
//! Everything here is a pure function of `(n, p, k)` plus a moment order
//! `q`, a deviation `t`, a confidence exponent `x`, and the dimension
//! constant `gamma_d` (the ceiling on how many points can count a given
//! point among their k nearest, divided by k). Two distinct `C_1` constants
//! coexist upstream — one calibrated for leave-one-out, one for
//! leave-p-out — and they are deliberately kept apart as `c1_loo` and
//! `c1_lpo` rather than reconciled.
//!
//! Formulas whose statements only cover `p > n/2 + 1` (or only
//! `p <= n/2 + 1`) return a regime error outside their domain; the report
//! builder marks such entries as out of regime instead of failing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Universal constant of the generalized Efron-Stein moment inequality.
/// Fixed at its stated ceiling so reports stay comparable across runs.
pub const KAPPA: f64 = 1.271;

/// Dimension constant of Stone's lemma: a point belongs to the k nearest
/// neighbors of at most `k * gamma_d` other points.
///
/// Only the 1-d value (2) is built in; higher dimensions must be supplied by
/// the caller. Note the 1-d value relies on the deterministic index
/// tie-break used by this crate's neighbor orderings.
pub fn stone_gamma(d: usize, override_value: Option<f64>) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    if let Some(g) = override_value {
        if !(g.is_finite() && g >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma_d must be finite and >= 1, got {g}"
            )));
        }
        return Ok(g);
    }
    match d {
        1 => Ok(2.0),
        _ => Err(Error::MissingConstant(format!(
            "no built-in Stone constant for dimension {d}; supply gamma_d explicitly"
        ))),
    }
}

/// The constant pack derived from `gamma_d` (and the fixed kappa).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub gamma_d: f64,
    pub kappa: f64,
    /// `2 + 16 gamma_d`: variance constant of the leave-one-out moment bound.
    pub c1_loo: f64,
    /// `4 gamma_d sqrt(2 kappa)`: higher-moment constant (shared).
    pub c2: f64,
    /// `128 kappa gamma_d / sqrt(2 pi)`: variance constant of the
    /// leave-p-out moment bound.
    pub c1_lpo: f64,
    /// `4 sqrt(e) max(c2, sqrt(c1_loo))`: sub-Gaussian tail constant.
    pub delta: f64,
    /// `2 sqrt(2e) max(sqrt(2 c1_lpo), 2 c2)`: large-p tail constant.
    pub gamma_large_p: f64,
    /// `1024 e kappa (1 + gamma_d)`: polynomial-regime tail constant.
    pub square: f64,
}

impl BoundConstants {
    pub fn from_gamma(gamma_d: f64) -> Self {
        let c1_loo = 2.0 + 16.0 * gamma_d;
        let c2 = 4.0 * gamma_d * (2.0 * KAPPA).sqrt();
        let c1_lpo = 128.0 * KAPPA * gamma_d / (2.0 * std::f64::consts::PI).sqrt();
        let delta = 4.0 * std::f64::consts::E.sqrt() * c2.max(c1_loo.sqrt());
        let gamma_large_p =
            2.0 * (2.0 * std::f64::consts::E).sqrt() * (2.0 * c1_lpo).sqrt().max(2.0 * c2);
        let square = 1024.0 * std::f64::consts::E * KAPPA * (1.0 + gamma_d);
        BoundConstants { gamma_d, kappa: KAPPA, c1_loo, c2, c1_lpo, delta, gamma_large_p, square }
    }
}

fn require_feasible(n: usize, p: usize, k: usize) -> Result<()> {
    if n < 2 || p == 0 || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "need n >= 2, p >= 1, k >= 1; got n = {n}, p = {p}, k = {k}"
        )));
    }
    if p + k > n {
        return Err(Error::Infeasible(format!("p + k = {} > n = {n}", p + k)));
    }
    Ok(())
}

fn is_large_p(n: usize, p: usize) -> bool {
    (p as f64) > n as f64 / 2.0 + 1.0
}

fn require_large_p(n: usize, p: usize) -> Result<()> {
    if !is_large_p(n, p) {
        return Err(Error::OutOfRegime(format!(
            "requires p > n/2 + 1, got p = {p}, n = {n}"
        )));
    }
    Ok(())
}

/// Block count `floor(n / (n - p + 1))` of the Hoeffding decomposition.
pub fn block_count(n: usize, p: usize) -> usize {
    n / (n - p + 1)
}

/// The three subset-resampling identities: a point is held out with
/// probability `p/n`; summed over candidates, a held-out point's k training
/// neighbors carry mass `kp/n`, of which `(kp/n) * (p-1)/(n-1)` sits on
/// neighbors beyond global rank k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResamplingProbs {
    pub p_test: f64,
    pub neighbor_sum: f64,
    pub far_rank_sum: f64,
}

pub fn resampling_probs(n: usize, p: usize, k: usize) -> Result<ResamplingProbs> {
    require_feasible(n, p, k)?;
    let (nf, pf, kf) = (n as f64, p as f64, k as f64);
    let neighbor_sum = kf * pf / nf;
    Ok(ResamplingProbs {
        p_test: pf / nf,
        neighbor_sum,
        far_rank_sum: neighbor_sum * (pf - 1.0) / (nf - 1.0),
    })
}

/// Bias envelope `4/sqrt(2 pi) * p sqrt(k) / n` on
/// `|E[lpo] - E[conditional error]|`.
pub fn bias_bound(n: usize, p: usize, k: usize) -> f64 {
    4.0 / (2.0 * std::f64::consts::PI).sqrt() * (p as f64) * (k as f64).sqrt() / n as f64
}

/// Mean-squared-gap envelope `(2 sqrt2/sqrt pi)(2p+3) sqrt(k)/n + 1/n` on
/// `E[(lpo - conditional error)^2]`.
pub fn mse_bound(n: usize, p: usize, k: usize) -> f64 {
    let nf = n as f64;
    2.0 * 2.0f64.sqrt() / std::f64::consts::PI.sqrt() * (2.0 * p as f64 + 3.0)
        * (k as f64).sqrt()
        / nf
        + 1.0 / nf
}

/// Probability that the k-NN fits on n and on n-p points disagree at an
/// independent query; same right-hand side as [`bias_bound`], kept as a
/// separately named bound for reporting.
pub fn stability_bound(n: usize, p: usize, k: usize) -> f64 {
    bias_bound(n, p, k)
}

/// Bounded-differences tail `2 exp(-n t^2 / (8 (k+p-1)^2 gamma_d^2))`.
pub fn mcdiarmid_tail(n: usize, p: usize, k: usize, gamma_d: f64, t: f64) -> f64 {
    let c = (k + p - 1) as f64 * gamma_d;
    2.0 * (-(n as f64) * t * t / (8.0 * c * c)).exp()
}

/// One-sided tail `exp(-n t^2 / (square k^2 [1 + (k+p)(p-1)/(n-1)]))` from
/// the generalized Efron-Stein route.
pub fn concentration_tail_poly(n: usize, p: usize, k: usize, gamma_d: f64, t: f64) -> f64 {
    let consts = BoundConstants::from_gamma(gamma_d);
    let bracket = 1.0 + (k + p) as f64 * (p as f64 - 1.0) / (n as f64 - 1.0);
    let kf = k as f64;
    (-(n as f64) * t * t / (consts.square * kf * kf * bracket)).exp()
}

/// One-sided sub-Gaussian tail `exp(-(n-p+1) t^2 / (delta^2 k^2))`; valid
/// for every feasible p.
pub fn concentration_tail_small_p(n: usize, p: usize, k: usize, gamma_d: f64, t: f64) -> f64 {
    let delta = BoundConstants::from_gamma(gamma_d).delta;
    let kf = k as f64;
    (-((n - p + 1) as f64) * t * t / (delta * delta * kf * kf)).exp()
}

/// Two-sided tail for the `p > n/2 + 1` regime:
/// `e floor(n/m) exp(-(1/2e) min{ m floor(n/m) t^2 / (4 Gamma^2 k sqrt k),
/// (m floor(n/m)^2 t^2 / (4 Gamma^2 k^2))^(1/3) })` with `m = n-p+1`.
pub fn concentration_tail_large_p(
    n: usize,
    p: usize,
    k: usize,
    gamma_d: f64,
    t: f64,
) -> Result<f64> {
    require_feasible(n, p, k)?;
    require_large_p(n, p)?;
    let gamma = BoundConstants::from_gamma(gamma_d).gamma_large_p;
    let m = (n - p + 1) as f64;
    let blocks = block_count(n, p) as f64;
    let kf = k as f64;
    let e = std::f64::consts::E;
    let sub_gaussian_arg = m * blocks * t * t / (4.0 * gamma * gamma * kf * kf.sqrt());
    let heavy_arg = (m * blocks * blocks * t * t / (4.0 * gamma * gamma * kf * kf)).cbrt();
    Ok(e * blocks * (-(sub_gaussian_arg.min(heavy_arg)) / (2.0 * e)).exp())
}

/// The two deviation scales of the large-p tail, at confidence exponent x:
/// the deviation `sub_gaussian_term + heavy_term` is exceeded with
/// probability at most `prefactor * exp(-x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationTerms {
    pub sub_gaussian_term: f64,
    pub heavy_term: f64,
    pub prefactor: f64,
}

pub fn deviation_terms_large_p(
    n: usize,
    p: usize,
    k: usize,
    gamma_d: f64,
    x: f64,
) -> Result<DeviationTerms> {
    require_feasible(n, p, k)?;
    require_large_p(n, p)?;
    let gamma = BoundConstants::from_gamma(gamma_d).gamma_large_p;
    let m = (n - p + 1) as f64;
    let blocks = block_count(n, p) as f64;
    let kf = k as f64;
    let two_e = 2.0 * std::f64::consts::E;
    Ok(DeviationTerms {
        sub_gaussian_term: two_e.sqrt() * gamma * (kf * kf.sqrt() / (m * blocks)).sqrt() * x.sqrt(),
        heavy_term: two_e.powf(1.5)
            * gamma
            * (kf * kf / (m * blocks * blocks)).sqrt()
            * x.powf(1.5),
        prefactor: std::f64::consts::E * blocks,
    })
}

/// Leave-one-out central moment bound on an m-point sample:
/// `c1_loo k^{3/2} / m` at q = 2, `(c2 sqrt(q) k / sqrt(m))^q` for q > 2.
pub fn moment_bound_loo(q: f64, k: usize, m: usize, gamma_d: f64) -> f64 {
    let consts = BoundConstants::from_gamma(gamma_d);
    let kf = k as f64;
    let mf = m as f64;
    if q <= 2.0 {
        consts.c1_loo * kf * kf.sqrt() / mf
    } else {
        (consts.c2 * q.sqrt() * kf / mf.sqrt()).powf(q)
    }
}

/// Leave-p-out central moment bound, all `1 <= p <= n-k`:
/// `c1_lpo k^{3/2} / (n-p+1)` at q = 2,
/// `(c2 sqrt(k^2/(n-p+1)) sqrt(q))^q` for q > 2.
pub fn moment_bound_lpo(q: f64, n: usize, p: usize, k: usize, gamma_d: f64) -> f64 {
    let consts = BoundConstants::from_gamma(gamma_d);
    let kf = k as f64;
    let m = (n - p + 1) as f64;
    if q <= 2.0 {
        consts.c1_lpo * kf * kf.sqrt() / m
    } else {
        (consts.c2 * (kf * kf / m).sqrt() * q.sqrt()).powf(q)
    }
}

/// Sharper leave-p-out moment bound in the `p > n/2 + 1` regime, where the
/// Hoeffding blocks multiply: the q = 2 bound gains a `1/floor(n/m)` and the
/// q > 2 bound becomes the Rosenthal max of a sub-Gaussian and a heavy term.
pub fn moment_bound_lpo_large_p(
    q: f64,
    n: usize,
    p: usize,
    k: usize,
    gamma_d: f64,
) -> Result<f64> {
    require_feasible(n, p, k)?;
    require_large_p(n, p)?;
    let consts = BoundConstants::from_gamma(gamma_d);
    let kf = k as f64;
    let m = (n - p + 1) as f64;
    let blocks = block_count(n, p) as f64;
    if q <= 2.0 {
        Ok(consts.c1_lpo * kf * kf.sqrt() / (m * blocks))
    } else {
        let gamma = consts.gamma_large_p;
        let sub_gaussian = (kf * kf.sqrt() / (m * blocks)).sqrt() * q.sqrt();
        let heavy = (kf * kf / (m * blocks * blocks)).sqrt() * q.powf(1.5);
        Ok(blocks * (gamma * sub_gaussian.max(heavy)).powf(q))
    }
}

/// Transfers leave-one-out moments (on m = n-p+1 points) to leave-p-out
/// moments: a plain pass-through unless `p > n/2 + 1`, where the variance
/// shrinks by `1/floor(n/m)` and higher moments go through the
/// symmetrized Rosenthal inequality.
pub fn moment_transfer_lpo_from_loo(
    q: f64,
    n: usize,
    p: usize,
    loo_moment_q: f64,
    loo_variance: f64,
) -> f64 {
    if !is_large_p(n, p) {
        return loo_moment_q;
    }
    let blocks = block_count(n, p) as f64;
    if q <= 2.0 {
        loo_variance / blocks
    } else {
        let base = (2.0 * (2.0 * std::f64::consts::E).sqrt()).powf(q);
        let moment_route = q.powf(q) * 2.0f64.powf(q) * blocks.powf(1.0 - q) * loo_moment_q;
        let variance_route =
            q.powf(q / 2.0) * blocks.powf(-q / 2.0) * (2.0 * loo_variance).powf(q / 2.0);
        base * moment_route.max(variance_route)
    }
}

/// The optimized Rosenthal constant for sums of independent symmetric
/// variables: `(2 sqrt(2e))^q { q^q sum E|X_i|^q  v  (sqrt q)^q (sum E X_i^2)^{q/2} }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosenthalConstant {
    /// `(2 sqrt(2e))^q`.
    pub base: f64,
    /// Weight `q^q` on the summed q-th moments.
    pub weight_moment: f64,
    /// Weight `(sqrt q)^q` on the variance-sum term.
    pub weight_variance: f64,
}

impl RosenthalConstant {
    /// Convenience scalar `(2 sqrt(2e) sqrt(q))^q`.
    pub fn scalar(&self) -> f64 {
        self.base * self.weight_variance
    }
}

pub fn rosenthal_constant(q: f64) -> Result<RosenthalConstant> {
    if q <= 2.0 {
        return Err(Error::InvalidArgument(format!(
            "Rosenthal constant is defined for q > 2, got q = {q}"
        )));
    }
    let base = (2.0 * (2.0 * std::f64::consts::E).sqrt()).powf(q);
    Ok(RosenthalConstant {
        base,
        weight_moment: q.powf(q),
        weight_variance: q.powf(q / 2.0),
    })
}

fn check_moment_shape(lambdas: &[f64], alphas: &[f64]) -> Result<()> {
    if lambdas.is_empty() || lambdas.len() != alphas.len() {
        return Err(Error::InvalidArgument(format!(
            "need matching nonempty lambda/alpha lists, got {} and {}",
            lambdas.len(),
            alphas.len()
        )));
    }
    if lambdas.iter().chain(alphas).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidArgument(
            "lambdas and alphas must be positive and finite".into(),
        ));
    }
    Ok(())
}

/// Converts moment envelopes `E|X|^q <= C (sum_i lambda_i q^{alpha_i})^q`
/// (for q >= q0) into the tail bound
/// `P(|X| > t) <= C e^{q0 min alpha} exp(-(min alpha) e^{-1} min_j (t / (N lambda_j))^{1/alpha_j})`.
pub fn tail_from_moments(
    c: f64,
    q0: f64,
    lambdas: &[f64],
    alphas: &[f64],
    t: f64,
) -> Result<f64> {
    check_moment_shape(lambdas, alphas)?;
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be > 0, got {t}")));
    }
    let n = lambdas.len() as f64;
    let min_alpha = alphas.iter().cloned().fold(f64::INFINITY, f64::min);
    let rate = lambdas
        .iter()
        .zip(alphas)
        .map(|(&l, &a)| (t / (n * l)).powf(1.0 / a))
        .fold(f64::INFINITY, f64::min);
    Ok(c * (q0 * min_alpha).exp() * (-min_alpha / std::f64::consts::E * rate).exp())
}

/// The inverse form of [`tail_from_moments`]: the deviation
/// `sum_i lambda_i (e x / min alpha)^{alpha_i}` is exceeded with probability
/// at most `C e^{q0 min alpha} e^{-x}`. Returns `(deviation, probability)`.
pub fn deviation_from_moments(
    c: f64,
    q0: f64,
    lambdas: &[f64],
    alphas: &[f64],
    x: f64,
) -> Result<(f64, f64)> {
    check_moment_shape(lambdas, alphas)?;
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!("x must be >= 0, got {x}")));
    }
    let min_alpha = alphas.iter().cloned().fold(f64::INFINITY, f64::min);
    let deviation = lambdas
        .iter()
        .zip(alphas)
        .map(|(&l, &a)| l * (std::f64::consts::E * x / min_alpha).powf(a))
        .sum();
    Ok((deviation, c * (q0 * min_alpha).exp() * (-x).exp()))
}

/// Classical leave-one-out tail `2 exp(-n eps / (gamma_d^2 k^2))`,
/// transcribed exactly as stated (the exponent is linear in eps, not
/// quadratic).
pub fn l1o_concentration_devroye(n: usize, k: usize, gamma_d: f64, eps: f64) -> f64 {
    let kf = k as f64;
    2.0 * (-(n as f64) * eps / (gamma_d * gamma_d * kf * kf)).exp()
}

/// High-probability gap between the leave-p-out estimate and the risk, for
/// `p <= n/2 + 1`: with probability at least `1 - 2 e^{-x}`,
/// `|risk - lpo| <= sqrt(delta^2 k^2 x / (n (1 - (p-1)/n))) + bias_bound`.
pub fn confidence_gap_bound(n: usize, p: usize, k: usize, gamma_d: f64, x: f64) -> Result<f64> {
    require_feasible(n, p, k)?;
    if is_large_p(n, p) {
        return Err(Error::OutOfRegime(format!(
            "requires p <= n/2 + 1, got p = {p}, n = {n}"
        )));
    }
    let delta = BoundConstants::from_gamma(gamma_d).delta;
    let nf = n as f64;
    let kf = k as f64;
    let effective_n = nf * (1.0 - (p as f64 - 1.0) / nf);
    Ok((delta * delta * kf * kf * x / effective_n).sqrt() + bias_bound(n, p, k))
}

/// Inputs shared by every bound in a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    /// Moment order, >= 2.
    pub q: f64,
    /// Deviation scale for tail bounds, > 0. Also reused as the epsilon of
    /// the classical leave-one-out tail.
    pub t: f64,
    /// Confidence exponent, > 0.
    pub x: f64,
    pub gamma_d: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        require_feasible(self.n, self.p, self.k)?;
        if !(self.q >= 2.0) {
            return Err(Error::InvalidArgument(format!("q must be >= 2, got {}", self.q)));
        }
        if !(self.t > 0.0) {
            return Err(Error::InvalidArgument(format!("t must be > 0, got {}", self.t)));
        }
        if !(self.x > 0.0) {
            return Err(Error::InvalidArgument(format!("x must be > 0, got {}", self.x)));
        }
        if !(self.gamma_d >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma_d must be >= 1, got {}",
                self.gamma_d
            )));
        }
        Ok(())
    }
}

/// One evaluated bound. Probability-scale bounds carry the raw value and a
/// `[0, 1]`-clipped companion (the raw value documents slack); entries whose
/// formula does not cover the input regime have no value and a note instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub id: String,
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clipped: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundEntry {
    fn plain(id: &str, value: f64) -> Self {
        BoundEntry { id: id.into(), value: Some(value), clipped: None, note: None }
    }

    fn probability(id: &str, value: f64) -> Self {
        BoundEntry {
            id: id.into(),
            value: Some(value),
            clipped: Some(value.clamp(0.0, 1.0)),
            note: None,
        }
    }

    fn out_of_regime(id: &str, why: impl Into<String>) -> Self {
        BoundEntry { id: id.into(), value: None, clipped: None, note: Some(why.into()) }
    }
}

/// Every bound evaluated at one input tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub constants: BoundConstants,
    pub entries: Vec<BoundEntry>,
}

impl BoundReport {
    pub fn entry(&self, id: &str) -> Option<&BoundEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// Evaluates the full bound catalogue; inapplicable regimes are marked, not
/// errored.
pub fn evaluate_all(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    let &BoundInputs { n, p, k, q, t, x, gamma_d } = inputs;
    let m = n - p + 1;
    let mut entries = vec![
        BoundEntry::plain("bias", bias_bound(n, p, k)),
        BoundEntry::plain("mse", mse_bound(n, p, k)),
        BoundEntry::probability("stability", stability_bound(n, p, k)),
        BoundEntry::probability("mcdiarmid_tail", mcdiarmid_tail(n, p, k, gamma_d, t)),
        BoundEntry::probability(
            "concentration_tail_poly",
            concentration_tail_poly(n, p, k, gamma_d, t),
        ),
        BoundEntry::probability(
            "concentration_tail_small_p",
            concentration_tail_small_p(n, p, k, gamma_d, t),
        ),
    ];
    match concentration_tail_large_p(n, p, k, gamma_d, t) {
        Ok(v) => entries.push(BoundEntry::probability("concentration_tail_large_p", v)),
        Err(e) => entries.push(BoundEntry::out_of_regime("concentration_tail_large_p", e.to_string())),
    }
    match deviation_terms_large_p(n, p, k, gamma_d, x) {
        Ok(d) => {
            entries.push(BoundEntry::plain("deviation_sub_gaussian", d.sub_gaussian_term));
            entries.push(BoundEntry::plain("deviation_heavy", d.heavy_term));
            entries.push(BoundEntry::plain("deviation_prefactor", d.prefactor));
        }
        Err(e) => {
            let note = e.to_string();
            entries.push(BoundEntry::out_of_regime("deviation_sub_gaussian", note.clone()));
            entries.push(BoundEntry::out_of_regime("deviation_heavy", note.clone()));
            entries.push(BoundEntry::out_of_regime("deviation_prefactor", note));
        }
    }
    entries.push(BoundEntry::plain("variance_loo", moment_bound_loo(2.0, k, m, gamma_d)));
    entries.push(BoundEntry::plain("variance_lpo", moment_bound_lpo(2.0, n, p, k, gamma_d)));
    match moment_bound_lpo_large_p(2.0, n, p, k, gamma_d) {
        Ok(v) => entries.push(BoundEntry::plain("variance_lpo_large_p", v)),
        Err(e) => entries.push(BoundEntry::out_of_regime("variance_lpo_large_p", e.to_string())),
    }
    if q > 2.0 {
        entries.push(BoundEntry::plain("moment_loo", moment_bound_loo(q, k, m, gamma_d)));
        entries.push(BoundEntry::plain("moment_lpo", moment_bound_lpo(q, n, p, k, gamma_d)));
        match moment_bound_lpo_large_p(q, n, p, k, gamma_d) {
            Ok(v) => entries.push(BoundEntry::plain("moment_lpo_large_p", v)),
            Err(e) => {
                entries.push(BoundEntry::out_of_regime("moment_lpo_large_p", e.to_string()))
            }
        }
        match rosenthal_constant(q) {
            Ok(r) => entries.push(BoundEntry::plain("rosenthal_scalar", r.scalar())),
            Err(e) => entries.push(BoundEntry::out_of_regime("rosenthal_scalar", e.to_string())),
        }
    }
    entries.push(BoundEntry::probability(
        "l1o_tail_devroye",
        l1o_concentration_devroye(n, k, gamma_d, t),
    ));
    match confidence_gap_bound(n, p, k, gamma_d, x) {
        Ok(v) => entries.push(BoundEntry::plain("confidence_gap", v)),
        Err(e) => entries.push(BoundEntry::out_of_regime("confidence_gap", e.to_string())),
    }
    let rp = resampling_probs(n, p, k)?;
    entries.push(BoundEntry::plain("resampling_p_test", rp.p_test));
    entries.push(BoundEntry::plain("resampling_neighbor_sum", rp.neighbor_sum));
    entries.push(BoundEntry::plain("resampling_far_rank_sum", rp.far_rank_sum));
    Ok(BoundReport {
        inputs: *inputs,
        constants: BoundConstants::from_gamma(gamma_d),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{E, PI};

    #[test]
    fn stone_gamma_defaults_and_guards() {
        assert_eq!(stone_gamma(1, None).unwrap(), 2.0);
        assert_eq!(stone_gamma(3, Some(20.0)).unwrap(), 20.0);
        assert!(matches!(stone_gamma(2, None), Err(Error::MissingConstant(_))));
    }

    #[test]
    fn constant_pack_at_gamma_two() {
        // Independent arithmetic for each constant; the struct must agree to
        // machine precision. Four-digit published roundings are checked at
        // their own precision.
        let c = BoundConstants::from_gamma(2.0);
        assert_abs_diff_eq!(c.c1_loo, 34.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.c2, 8.0 * (2.0 * 1.271f64).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(c.c1_lpo, 128.0 * 1.271 * 2.0 / (2.0 * PI).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(c.delta, 4.0 * E.sqrt() * 8.0 * (2.542f64).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(c.square, 1024.0 * E * 1.271 * 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.c2, 12.7554, epsilon = 2e-3);
        assert_abs_diff_eq!(c.delta, 84.132, epsilon = 3e-2);
        assert_abs_diff_eq!(c.c1_lpo, 129.807, epsilon = 1e-3);
    }

    #[test]
    fn resampling_identities_by_substitution() {
        let r = resampling_probs(10, 3, 2).unwrap();
        assert_abs_diff_eq!(r.p_test, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(r.neighbor_sum, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(r.far_rank_sum, 0.6 * 2.0 / 9.0, epsilon = 1e-15);
        let p1 = resampling_probs(10, 1, 2).unwrap();
        assert_eq!(p1.far_rank_sum, 0.0);
    }

    #[test]
    fn bias_and_mse_examples() {
        assert_abs_diff_eq!(bias_bound(100, 10, 4), 0.319154, epsilon = 1e-6);
        assert_abs_diff_eq!(bias_bound(100, 1, 1), 0.0159577, epsilon = 1e-6);
        assert_abs_diff_eq!(bias_bound(100, 20, 4), 2.0 * bias_bound(100, 10, 4), epsilon = 1e-12);
        assert_abs_diff_eq!(mse_bound(100, 1, 1), 0.0897885, epsilon = 1e-6);
        assert_eq!(stability_bound(50, 7, 3), bias_bound(50, 7, 3));
        // 1/n scaling at fixed (p, k), net of the additive 1/n term.
        let shape = |n: usize| (mse_bound(n, 2, 3) - 1.0 / n as f64) * n as f64;
        assert_abs_diff_eq!(shape(100), shape(1000), epsilon = 1e-9);
    }

    #[test]
    fn mcdiarmid_examples_and_limits() {
        let v = mcdiarmid_tail(100, 1, 1, 2.0, 0.5);
        assert_abs_diff_eq!(v, 2.0 * (-25.0f64 / 32.0).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.9157, epsilon = 1e-4);
        assert!(mcdiarmid_tail(100, 1, 1, 2.0, 1e9) < 1e-300);
        assert_abs_diff_eq!(mcdiarmid_tail(100, 1, 1, 2.0, 1e-12), 2.0, epsilon = 1e-9);
        assert!(mcdiarmid_tail(100, 1, 1, 2.0, 0.6) < v);
    }

    #[test]
    fn poly_tail_examples() {
        // p = 1 collapses the bracket to 1.
        let square = 1024.0 * E * 1.271 * 3.0;
        let v = concentration_tail_poly(100, 1, 1, 2.0, 0.5);
        assert_abs_diff_eq!(v, (-25.0 / square).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.99765, epsilon = 1e-4);
        assert!(concentration_tail_poly(100, 10, 1, 2.0, 0.5) > v);
    }

    #[test]
    fn small_p_tail_example() {
        let delta = 4.0 * E.sqrt() * 8.0 * 2.542f64.sqrt();
        let v = concentration_tail_small_p(100, 1, 1, 2.0, 0.5);
        assert_abs_diff_eq!(v, (-100.0 * 0.25 / (delta * delta)).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.99648, epsilon = 1e-4);
    }

    #[test]
    fn small_p_tail_eventually_beats_poly_at_half_n() {
        // At p close to n/2 the block-product route wins for large t.
        let (n, p, k, g) = (100, 50, 3, 2.0);
        let mut found = false;
        for i in 1..=40 {
            let t = i as f64 * 0.05;
            if concentration_tail_small_p(n, p, k, g, t) < concentration_tail_poly(n, p, k, g, t) {
                found = true;
            }
        }
        assert!(found);
    }

    #[test]
    fn large_p_tail_regime_and_prefactor() {
        assert!(matches!(
            concentration_tail_large_p(100, 40, 2, 2.0, 0.5),
            Err(Error::OutOfRegime(_))
        ));
        let v = concentration_tail_large_p(100, 98, 2, 2.0, 0.05).unwrap();
        assert!(v.is_finite() && v > 0.0);
        // Prefactor e * floor(100/3) = e * 33.
        assert_abs_diff_eq!(
            concentration_tail_large_p(100, 98, 2, 2.0, 1e-12).unwrap(),
            E * 33.0,
            epsilon = 1e-4
        );
        let lo = concentration_tail_large_p(100, 98, 2, 2.0, 0.3).unwrap();
        let hi = concentration_tail_large_p(100, 98, 2, 2.0, 0.1).unwrap();
        assert!(lo < hi);
    }

    #[test]
    fn deviation_terms_match_prop_forms() {
        let (n, p, k, g) = (100usize, 98usize, 2usize, 2.0);
        let gamma = BoundConstants::from_gamma(g).gamma_large_p;
        let d = deviation_terms_large_p(n, p, k, g, 1.7).unwrap();
        let m = 3.0;
        let blocks = 33.0;
        let kf = 2.0f64;
        assert_abs_diff_eq!(
            d.sub_gaussian_term,
            (2.0 * E).sqrt() * gamma * (kf * kf.sqrt() / (m * blocks)).sqrt() * 1.7f64.sqrt(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            d.heavy_term,
            (2.0 * E).powf(1.5) * gamma * (kf * kf / (m * blocks * blocks)).sqrt() * 1.7f64.powf(1.5),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(d.prefactor, E * blocks, epsilon = 1e-12);
        let zero = deviation_terms_large_p(n, p, k, g, 0.0).unwrap();
        assert_eq!((zero.sub_gaussian_term, zero.heavy_term), (0.0, 0.0));
    }

    #[test]
    fn loo_moment_examples() {
        assert_abs_diff_eq!(moment_bound_loo(2.0, 1, 100, 2.0), 0.34, epsilon = 1e-12);
        let c2 = 8.0 * 2.542f64.sqrt();
        assert_abs_diff_eq!(
            moment_bound_loo(4.0, 1, 100, 2.0),
            (2.0 * c2).powi(4) / 1e4,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(moment_bound_loo(4.0, 1, 100, 2.0), 42.35, epsilon = 2e-2);
        let ratio = moment_bound_loo(2.0, 3, 100, 2.0) / moment_bound_loo(2.0, 3, 200, 2.0);
        assert_abs_diff_eq!(ratio, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn lpo_moment_examples_and_monotonicity() {
        assert_abs_diff_eq!(moment_bound_lpo(2.0, 100, 1, 1, 2.0), 1.29807, epsilon = 1e-4);
        let mut prev = 0.0;
        for p in 1..=97 {
            let v = moment_bound_lpo(2.0, 100, p, 3, 2.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn large_p_moment_boundary_and_regime() {
        assert!(moment_bound_lpo_large_p(2.0, 100, 40, 2, 2.0).is_err());
        // p = n - k with k = 1: floor(n/2) blocks, finite value.
        let v = moment_bound_lpo_large_p(2.0, 100, 99, 1, 2.0).unwrap();
        assert!(v.is_finite() && v > 0.0);
        assert_eq!(block_count(100, 99), 50);
    }

    #[test]
    fn transfer_examples() {
        // q = 2, n = 100, p = 98: factor 1/33.
        let var = 0.123;
        assert_abs_diff_eq!(
            moment_transfer_lpo_from_loo(2.0, 100, 98, var, var),
            var / 33.0,
            epsilon = 1e-15
        );
        // Pass-through outside the large-p regime.
        assert_eq!(moment_transfer_lpo_from_loo(4.0, 100, 30, 0.5, 0.1), 0.5);
        // Never larger than pass-through for q = 2 in regime.
        assert!(moment_transfer_lpo_from_loo(2.0, 100, 98, var, var) <= var);
    }

    #[test]
    fn rosenthal_examples() {
        assert!(rosenthal_constant(2.0).is_err());
        let r4 = rosenthal_constant(4.0).unwrap();
        assert_abs_diff_eq!(r4.scalar(), 7566.0, epsilon = 1.0);
        let r3 = rosenthal_constant(3.0).unwrap();
        assert_abs_diff_eq!(r3.scalar(), (2.0 * (2.0 * E).sqrt() * 3.0f64.sqrt()).powi(3), epsilon = 1e-9);
        assert_abs_diff_eq!(r3.scalar(), 527.0, epsilon = 1.0);
        let mut prev = 0.0;
        for i in 3..12 {
            let v = rosenthal_constant(i as f64).unwrap().scalar();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn moment_to_tail_example() {
        let v = tail_from_moments(1.0, 2.0, &[1.0], &[1.0], E).unwrap();
        assert_abs_diff_eq!(v, E, epsilon = 1e-12);
        assert!(tail_from_moments(1.0, 2.0, &[1.0], &[1.0, 2.0], 1.0).is_err());
        let hi = tail_from_moments(2.0, 2.0, &[0.5, 1.0], &[0.5, 1.5], 0.7).unwrap();
        let lo = tail_from_moments(2.0, 2.0, &[0.5, 1.0], &[0.5, 1.5], 1.4).unwrap();
        assert!(lo < hi);
    }

    #[test]
    fn devroye_tail_examples() {
        let v = l1o_concentration_devroye(100, 1, 2.0, 0.1);
        assert_abs_diff_eq!(v, 2.0 * (-2.5f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.1642, epsilon = 1e-4);
        assert_abs_diff_eq!(l1o_concentration_devroye(100, 1, 2.0, 1e-15), 2.0, epsilon = 1e-10);
        assert!(l1o_concentration_devroye(200, 1, 2.0, 0.1) < v);
    }

    #[test]
    fn confidence_gap_example_and_regime() {
        let v = confidence_gap_bound(100, 1, 1, 2.0, 1.0).unwrap();
        let delta = 4.0 * E.sqrt() * 8.0 * 2.542f64.sqrt();
        assert_abs_diff_eq!(v, delta / 10.0 + 0.0159577, epsilon = 1e-6);
        assert_abs_diff_eq!(v, 8.429, epsilon = 3e-3);
        // x = 0 leaves only the bias term.
        assert_abs_diff_eq!(
            confidence_gap_bound(100, 1, 1, 2.0, 0.0).unwrap(),
            bias_bound(100, 1, 1),
            epsilon = 1e-15
        );
        assert!(confidence_gap_bound(100, 98, 1, 2.0, 1.0).is_err());
    }

    #[test]
    fn report_marks_regimes_and_clips() {
        let small = evaluate_all(&BoundInputs {
            n: 100, p: 10, k: 4, q: 4.0, t: 0.5, x: 1.0, gamma_d: 2.0,
        })
        .unwrap();
        assert!(small.entry("concentration_tail_large_p").unwrap().value.is_none());
        assert!(small.entry("confidence_gap").unwrap().value.is_some());
        assert_abs_diff_eq!(small.entry("bias").unwrap().value.unwrap(), 0.319154, epsilon = 1e-6);
        let mc = small.entry("mcdiarmid_tail").unwrap();
        assert!(mc.value.unwrap() > 1.0);
        assert_eq!(mc.clipped.unwrap(), 1.0);

        let large = evaluate_all(&BoundInputs {
            n: 100, p: 98, k: 2, q: 4.0, t: 0.5, x: 1.0, gamma_d: 2.0,
        })
        .unwrap();
        assert!(large.entry("concentration_tail_large_p").unwrap().value.is_some());
        assert!(large.entry("confidence_gap").unwrap().value.is_none());
    }

    #[test]
    fn all_report_values_finite_nonnegative() {
        for &(n, p, k) in &[(20usize, 3usize, 2usize), (50, 30, 5), (60, 52, 2), (100, 98, 1)] {
            let rep = evaluate_all(&BoundInputs {
                n, p, k, q: 4.0, t: 0.3, x: 2.0, gamma_d: 2.0,
            })
            .unwrap();
            for e in &rep.entries {
                if let Some(v) = e.value {
                    assert!(v.is_finite() && v >= 0.0, "{} = {v}", e.id);
                }
            }
        }
    }
}
