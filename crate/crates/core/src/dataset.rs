//! Labeled samples in `R^d` with binary labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation: a feature vector in `R^d` and a label in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub features: Vec<f64>,
    pub label: u8,
}

impl LabeledPoint {
    pub fn new(features: Vec<f64>, label: u8) -> Result<Self> {
        if label > 1 {
            return Err(Error::InvalidInput(format!(
                "label must be 0 or 1, got {label}"
            )));
        }
        if features.is_empty() {
            return Err(Error::InvalidInput("empty feature vector".into()));
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite coordinate {bad}"
            )));
        }
        Ok(Self { features, label })
    }
}

/// An ordered sample of labeled points, all of the same dimension.
///
/// Point order is significant: every index-based API in this crate (neighbor
/// orderings, training subsets, tie-breaking) refers to the position of a
/// point in this list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    points: Vec<LabeledPoint>,
    dimension: usize,
}

impl Dataset {
    /// Builds a dataset, validating that every point is finite, labels are
    /// binary, dimensions agree, and `n >= 2`.
    pub fn new(points: Vec<LabeledPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        let dimension = points[0].features.len();
        for (i, pt) in points.iter().enumerate() {
            if pt.features.len() != dimension {
                return Err(Error::InvalidInput(format!(
                    "point {i} has dimension {}, expected {dimension}",
                    pt.features.len()
                )));
            }
            if pt.label > 1 {
                return Err(Error::InvalidInput(format!(
                    "point {i} has label {}, expected 0 or 1",
                    pt.label
                )));
            }
            if pt.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "point {i} has a non-finite coordinate"
                )));
            }
        }
        Ok(Self { points, dimension })
    }

    /// Builds a dataset from parallel feature/label slices.
    pub fn from_parts(features: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} feature rows vs {} labels",
                features.len(),
                labels.len()
            )));
        }
        let points = features
            .into_iter()
            .zip(labels)
            .map(|(f, y)| LabeledPoint { features: f, label: y })
            .collect();
        Self::new(points)
    }

    /// Convenience constructor for 1-d data.
    pub fn from_1d(xs: &[f64], labels: &[u8]) -> Result<Self> {
        Self::from_parts(xs.iter().map(|&x| vec![x]).collect(), labels.to_vec())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn point(&self, i: usize) -> &LabeledPoint {
        &self.points[i]
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.points[i].features
    }

    pub fn label(&self, i: usize) -> u8 {
        self.points[i].label
    }

    /// Labels in point order.
    pub fn labels(&self) -> Vec<u8> {
        self.points.iter().map(|p| p.label).collect()
    }

    /// The sub-dataset made of `indices`, in the order given.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let points = indices.iter().map(|&i| self.points[i].clone()).collect();
        Dataset::new(points)
    }
}

/// Squared Euclidean distance. Monotone in the true distance, so orderings
/// and tie patterns are unchanged while the square root is skipped.
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Euclidean distance between feature vectors.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_labels_and_nan() {
        assert!(LabeledPoint::new(vec![0.0], 2).is_err());
        assert!(LabeledPoint::new(vec![f64::NAN], 0).is_err());
        assert!(Dataset::from_1d(&[0.0, f64::INFINITY], &[0, 1]).is_err());
        assert!(Dataset::from_1d(&[0.0], &[0]).is_err());
    }

    #[test]
    fn rejects_mixed_dimensions() {
        let pts = vec![
            LabeledPoint { features: vec![0.0, 1.0], label: 0 },
            LabeledPoint { features: vec![0.0], label: 1 },
        ];
        assert!(Dataset::new(pts).is_err());
    }

    #[test]
    fn subset_preserves_order() {
        let ds = Dataset::from_1d(&[0.0, 1.0, 2.0, 3.0], &[0, 0, 1, 1]).unwrap();
        let sub = ds.subset(&[3, 1]).unwrap();
        assert_eq!(sub.features(0), &[3.0]);
        assert_eq!(sub.label(1), 0);
    }
}
