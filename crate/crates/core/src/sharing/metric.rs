//! Mahalanobis metric with trace-scaled identity shrinkage.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Covariance-aware distance over context vectors.
///
/// Holds the inverse of the shrunk covariance
/// `(1 - w) * S + w * (tr(S) / d) * I` together with the whitening map
/// `L^-1` of its Cholesky factor, so distances are Euclidean after
/// [`MetricModel::whiten`].
#[derive(Debug, Clone, PartialEq)]
pub struct MetricModel {
    mean: DVector<f64>,
    inverse_covariance: DMatrix<f64>,
    whitening: DMatrix<f64>,
    shrinkage: f64,
}

impl MetricModel {
    /// Fits the metric to a sample of equal-length vectors.
    pub fn fit<P: AsRef<[f64]>>(points: &[P], shrinkage: f64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::DegenerateMetric(format!(
                "need at least 2 samples, got {}",
                points.len()
            )));
        }
        let d = points[0].as_ref().len();
        if d == 0 {
            return Err(Error::DegenerateMetric("zero-dimensional samples".into()));
        }
        if points.iter().any(|p| p.as_ref().len() != d) {
            return Err(Error::DegenerateMetric("samples differ in dimension".into()));
        }
        if !(0.0..=1.0).contains(&shrinkage) {
            return Err(Error::DegenerateMetric(format!("shrinkage {shrinkage} outside [0, 1]")));
        }
        let n = points.len() as f64;
        let mut mean = DVector::zeros(d);
        for p in points {
            mean += DVector::from_column_slice(p.as_ref());
        }
        mean /= n;
        let mut cov = DMatrix::zeros(d, d);
        for p in points {
            let c = DVector::from_column_slice(p.as_ref()) - &mean;
            cov.ger(1.0, &c, &c, 1.0);
        }
        cov /= n - 1.0;
        let target = cov.trace() / d as f64;
        let shrunk = if target <= f64::MIN_POSITIVE {
            // every sample identical: all distances are zero whatever the scale
            DMatrix::identity(d, d)
        } else {
            cov * (1.0 - shrinkage) + DMatrix::identity(d, d) * (shrinkage * target)
        };
        let mut model = Self::from_covariance(mean.as_slice(), &shrunk)?;
        model.shrinkage = shrinkage;
        Ok(model)
    }

    /// Builds the metric from an explicit mean and covariance matrix.
    pub fn from_covariance(mean: &[f64], covariance: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DegenerateMetric("covariance shape mismatch".into()));
        }
        let sym = (covariance + covariance.transpose()) * 0.5;
        let chol = sym
            .cholesky()
            .ok_or_else(|| Error::DegenerateMetric("covariance is not positive definite".into()))?;
        let l = chol.l();
        let whitening = l
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or_else(|| Error::DegenerateMetric("singular Cholesky factor".into()))?;
        let inverse_covariance = whitening.transpose() * &whitening;
        Ok(Self {
            mean: DVector::from_column_slice(mean),
            inverse_covariance,
            whitening,
            shrinkage: 0.0,
        })
    }

    /// Plain Euclidean distance in `d` dimensions.
    pub fn euclidean(d: usize) -> Self {
        Self {
            mean: DVector::zeros(d),
            inverse_covariance: DMatrix::identity(d, d),
            whitening: DMatrix::identity(d, d),
            shrinkage: 0.0,
        }
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn inverse_covariance(&self) -> &DMatrix<f64> {
        &self.inverse_covariance
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    /// Maps `x` into the space where this metric is Euclidean.
    pub fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let centered = DVector::from_column_slice(x) - &self.mean;
        (&self.whitening * centered).as_slice().to_vec()
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(x) - DVector::from_column_slice(y);
        let q = diff.dot(&(&self.inverse_covariance * &diff));
        q.max(0.0).sqrt()
    }
}
