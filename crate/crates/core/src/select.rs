//! Choosing k by minimizing the exact leave-p-out risk.

use serde::{Deserialize, Serialize};

use crate::bounds::confidence_gap_bound;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::lpo::{lpo_exact_with_table, LpOEstimate};
use crate::neighbors::build_neighbor_table;

/// Default confidence exponent: a 95% coverage target, `x = ln(2 / 0.05)`,
/// so the gap bound fails with probability at most `2 e^{-x} = 0.05`.
pub fn default_confidence_exponent() -> f64 {
    (2.0 / 0.05f64).ln()
}

/// One grid point of a selection curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub estimate: LpOEstimate,
    /// High-probability radius around the estimate; absent outside the
    /// `p <= n/2 + 1` regime or when no Stone constant is available.
    pub confidence_radius: Option<f64>,
}

/// Exact leave-p-out risk across a k grid with the risk-minimizing choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCurve {
    pub p: usize,
    pub points: Vec<CurvePoint>,
    /// The k attaining the minimal estimate; ties go to the smallest k.
    pub chosen_k: usize,
    /// Confidence exponent used for the radii.
    pub x: f64,
}

/// Evaluates the exact leave-p-out risk for every k in the grid and picks
/// the minimizer (smallest k on ties). When `gamma_d` is supplied and
/// `p <= n/2 + 1`, each point carries the high-probability gap radius at
/// exponent `x`.
pub fn select_k(
    dataset: &Dataset,
    p: usize,
    k_grid: &[usize],
    gamma_d: Option<f64>,
    x: Option<f64>,
) -> Result<SelectionCurve> {
    if k_grid.is_empty() {
        return Err(Error::InvalidArgument("empty k grid".into()));
    }
    let n = dataset.len();
    for &k in k_grid {
        if k == 0 || p + k > n {
            return Err(Error::Infeasible(format!(
                "grid value k = {k} violates 1 <= k and p + k <= n (p = {p}, n = {n})"
            )));
        }
    }
    let x = x.unwrap_or_else(default_confidence_exponent);
    let table = build_neighbor_table(dataset);
    let labels = dataset.labels();
    let points: Vec<CurvePoint> = k_grid
        .iter()
        .map(|&k| {
            let estimate = lpo_exact_with_table(&table, &labels, k, p)?;
            let confidence_radius =
                gamma_d.and_then(|g| confidence_gap_bound(n, p, k, g, x).ok());
            Ok(CurvePoint { k, estimate, confidence_radius })
        })
        .collect::<Result<_>>()?;
    let chosen_k = points
        .iter()
        .min_by(|a, b| {
            a.estimate
                .value
                .total_cmp(&b.estimate.value)
                .then(a.k.cmp(&b.k))
        })
        .expect("nonempty grid")
        .k;
    Ok(SelectionCurve { p, points, chosen_k, x })
}

/// Argmin with the smallest-k tie rule over raw (k, value) pairs. The
/// selection depends only on the ordering of the values, which the property
/// tests exercise with monotone transformations.
pub fn argmin_k(pairs: &[(usize, f64)]) -> Option<usize> {
    pairs
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|&(k, _)| k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::{sample_dataset, DistributionSpec};
    use proptest::prelude::*;

    #[test]
    fn single_element_grid() {
        let ds = sample_dataset(&DistributionSpec::default_1d(), 30, 1).unwrap();
        let curve = select_k(&ds, 3, &[5], Some(2.0), None).unwrap();
        assert_eq!(curve.chosen_k, 5);
        assert!(curve.points[0].confidence_radius.is_some());
    }

    #[test]
    fn ties_prefer_smaller_k() {
        // All labels equal: every k gives risk 0, so the tie rule decides.
        let ds = Dataset::from_1d(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], &[1; 6]).unwrap();
        let curve = select_k(&ds, 1, &[3, 1, 2], None, None).unwrap();
        assert_eq!(curve.chosen_k, 1);
        assert!(curve.points.iter().all(|pt| pt.confidence_radius.is_none()));
    }

    #[test]
    fn chosen_k_attains_minimum() {
        let ds = sample_dataset(&DistributionSpec::default_1d(), 80, 9).unwrap();
        let grid: Vec<usize> = (1..=21).step_by(2).collect();
        let curve = select_k(&ds, 10, &grid, Some(2.0), None).unwrap();
        let chosen = curve.points.iter().find(|pt| pt.k == curve.chosen_k).unwrap();
        for pt in &curve.points {
            assert!(chosen.estimate.value <= pt.estimate.value);
        }
    }

    #[test]
    fn radius_unavailable_in_large_p_regime() {
        let ds = sample_dataset(&DistributionSpec::default_1d(), 30, 2).unwrap();
        let curve = select_k(&ds, 26, &[1, 2], Some(2.0), None).unwrap();
        assert!(curve.points.iter().all(|pt| pt.confidence_radius.is_none()));
    }

    #[test]
    fn rejects_empty_and_infeasible_grids() {
        let ds = sample_dataset(&DistributionSpec::default_1d(), 20, 3).unwrap();
        assert!(select_k(&ds, 2, &[], None, None).is_err());
        assert!(select_k(&ds, 2, &[19], None, None).is_err());
    }

    proptest! {
        #[test]
        fn argmin_invariant_under_monotone_maps(
            values in proptest::collection::vec(0.0f64..1.0, 1..12),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let pairs: Vec<(usize, f64)> =
                values.iter().enumerate().map(|(i, &v)| (i + 1, v)).collect();
            let mapped: Vec<(usize, f64)> =
                pairs.iter().map(|&(k, v)| (k, scale * v + shift)).collect();
            prop_assert_eq!(argmin_k(&pairs), argmin_k(&mapped));
        }
    }
}
