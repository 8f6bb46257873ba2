//! Comparison scores computed from logits or features alone: maximum softmax
//! probability, energy, Mahalanobis, Gaussian mixture (GEM) and k-nearest
//! neighbours. Larger is more in-distribution for every score.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::{check_labels, normalize_in_place, FeatureMatrix};
use crate::error::{OodError, Result};
use crate::math::log_sum_exp;

/// Ridge scale used when the pooled scatter has zero trace.
pub const TRACE_FLOOR: f64 = 1e-12;
pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_KNN_K: usize = 50;

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|x| !x.is_finite()) {
        return Err(OodError::Data(format!("{what} contain non-finite values")));
    }
    Ok(())
}

/// Largest softmax probability of one logit row.
pub fn msp_score(logits: &[f64]) -> Result<f64> {
    if logits.len() < 2 {
        return Err(OodError::Data(format!(
            "softmax score needs at least 2 classes, got {}",
            logits.len()
        )));
    }
    check_finite(logits, "logits")?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((max - log_sum_exp(logits)).exp())
}

/// `T * log sum_k exp(f_k / T)`, the negated free energy.
pub fn energy_score(logits: &[f64], temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(OodError::Config(format!(
            "temperature must be finite and > 0, got {temperature}"
        )));
    }
    check_finite(logits, "logits")?;
    let scaled: Vec<f64> = logits.iter().map(|f| f / temperature).collect();
    Ok(temperature * log_sum_exp(&scaled))
}

/// Pooled within-class covariance with ridge shrinkage, factorized once.
#[derive(Debug, Clone)]
pub struct SharedCovariance {
    sigma: DMatrix<f64>,
    cholesky: Cholesky<f64, Dyn>,
    log_det: f64,
    epsilon: f64,
}

impl SharedCovariance {
    /// `Sigma = (1/N) sum_k sum_{y_i = k} (z_i - mu_k)(z_i - mu_k)^T
    ///          + epsilon * (trace / d) * I`.
    ///
    /// When the scatter has zero trace the ridge is the absolute floor
    /// [`TRACE_FLOOR`] instead.
    pub fn fit(features: &FeatureMatrix, labels: &[i32], epsilon: f64) -> Result<Self> {
        check_labels(features, labels)?;
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(OodError::Config(format!("epsilon must be >= 0, got {epsilon}")));
        }
        let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1).max(0) as usize;
        let n = features.rows();
        if n <= n_classes || n_classes == 0 {
            return Err(OodError::Data(format!(
                "covariance needs N > K >= 1, got N = {n} and K = {n_classes}"
            )));
        }
        let d = features.cols();
        let mut means = vec![0.0; n_classes * d];
        let mut counts = vec![0usize; n_classes];
        for (i, (row, &label)) in features.iter_rows().zip(labels).enumerate() {
            if label < 0 {
                return Err(OodError::Data(format!("unlabeled row {i} in covariance fit")));
            }
            let k = label as usize;
            counts[k] += 1;
            for (m, x) in means[k * d..(k + 1) * d].iter_mut().zip(row) {
                *m += x;
            }
        }
        if let Some(class) = counts.iter().position(|&c| c == 0) {
            return Err(OodError::EmptyClass { class });
        }
        for (k, &c) in counts.iter().enumerate() {
            means[k * d..(k + 1) * d].iter_mut().for_each(|m| *m /= c as f64);
        }
        let mut scatter = DMatrix::<f64>::zeros(d, d);
        let mut centered = DVector::<f64>::zeros(d);
        for (row, &label) in features.iter_rows().zip(labels) {
            let k = label as usize;
            for j in 0..d {
                centered[j] = row[j] - means[k * d + j];
            }
            scatter.syger(1.0, &centered, &centered, 1.0);
        }
        // syger fills the lower triangle only.
        scatter.fill_upper_triangle_with_lower_triangle();
        scatter /= n as f64;
        let trace = scatter.trace();
        let ridge = if trace > 0.0 {
            epsilon * trace / d as f64
        } else {
            TRACE_FLOOR
        };
        for j in 0..d {
            scatter[(j, j)] += ridge;
        }
        Self::from_matrix_with_epsilon(scatter, epsilon)
    }

    /// Wraps an explicit symmetric positive-definite matrix.
    pub fn from_matrix(sigma: DMatrix<f64>) -> Result<Self> {
        Self::from_matrix_with_epsilon(sigma, 0.0)
    }

    fn from_matrix_with_epsilon(sigma: DMatrix<f64>, epsilon: f64) -> Result<Self> {
        if !sigma.is_square() {
            return Err(OodError::shape("square covariance", format!("{:?}", sigma.shape())));
        }
        let asym = (&sigma - sigma.transpose()).abs().max();
        if asym > 1e-10 * sigma.abs().max().max(1.0) {
            return Err(OodError::Numerical(format!("covariance is not symmetric ({asym:e})")));
        }
        let cholesky = Cholesky::new(sigma.clone()).ok_or_else(|| {
            OodError::Numerical(format!(
                "covariance is not positive definite with epsilon = {epsilon:e}; increase epsilon"
            ))
        })?;
        let log_det = 2.0 * cholesky.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        Ok(Self {
            sigma,
            cholesky,
            log_det,
            epsilon,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self::from_matrix(DMatrix::identity(d, d)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `log |Sigma|` from the Cholesky factor.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `(z - mu)^T Sigma^{-1} (z - mu)` via a triangular solve.
    pub fn mahalanobis_sq(&self, z: &[f64], mu: &[f64]) -> f64 {
        let diff = DVector::from_iterator(z.len(), z.iter().zip(mu).map(|(a, b)| a - b));
        let y = self
            .cholesky
            .l_dirty()
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        y.norm_squared()
    }

    fn check(&self, z: &[f64], prototypes: &FeatureMatrix) -> Result<()> {
        let d = self.dim();
        if z.len() != d {
            return Err(OodError::shape(format!("{d} components"), format!("{} components", z.len())));
        }
        prototypes.check_cols(d)?;
        if prototypes.is_empty() {
            return Err(OodError::Data("no prototypes".into()));
        }
        Ok(())
    }
}

/// `max_k -(z - mu_k)^T Sigma^{-1} (z - mu_k)`.
pub fn maha_score(z: &[f64], prototypes: &FeatureMatrix, cov: &SharedCovariance) -> Result<f64> {
    cov.check(z, prototypes)?;
    Ok(prototypes
        .iter_rows()
        .map(|mu| -cov.mahalanobis_sq(z, mu))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `log sum_k exp(-0.5 (z - mu_k)^T Sigma^{-1} (z - mu_k)) - 0.5 log((2 pi)^d |Sigma|)`.
pub fn gem_score(z: &[f64], prototypes: &FeatureMatrix, cov: &SharedCovariance) -> Result<f64> {
    cov.check(z, prototypes)?;
    let terms: Vec<f64> = prototypes
        .iter_rows()
        .map(|mu| -0.5 * cov.mahalanobis_sq(z, mu))
        .collect();
    let d = cov.dim() as f64;
    let log_norm = 0.5 * (d * (2.0 * std::f64::consts::PI).ln() + cov.log_det());
    Ok(log_sum_exp(&terms) - log_norm)
}

/// Negative distance from the unit-normalized query to its `k`-th nearest
/// neighbour among `train_unit` (rows already unit-normalized). Exact scan.
pub fn knn_score(z: &[f64], train_unit: &FeatureMatrix, k: usize) -> Result<f64> {
    if k == 0 || k > train_unit.rows() {
        return Err(OodError::Config(format!(
            "k = {k} must lie in 1..={} (training rows)",
            train_unit.rows()
        )));
    }
    if z.len() != train_unit.cols() {
        return Err(OodError::shape(
            format!("{} components", train_unit.cols()),
            format!("{} components", z.len()),
        ));
    }
    let mut query = z.to_vec();
    normalize_in_place(&mut query);
    let mut dist_sq: Vec<f64> = train_unit
        .iter_rows()
        .map(|r| r.iter().zip(&query).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    let (_, kth, _) = dist_sq.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(-kth.sqrt())
}
