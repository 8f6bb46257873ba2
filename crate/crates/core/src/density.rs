//! Conjugate-norm class densities and their partition functions.
//!
//! Each class `k` gets an unnormalized density `g(z, k) = exp(-d(z, mu_k))`
//! where `d` is the Bregman divergence of `0.5 * ||.||_q^2` and `mu_k` is the
//! empirical class mean. The score of a query is
//! `log sum_k g(z, k) / Phi(k)`, with `Phi` estimated by one of three
//! strategies: self-normalization, importance sampling over the training
//! rows, or the kernel-density formula (which depends on the query).
//!
//! Scores live in the log domain and omit the `-log K` constant. They are
//! only comparable within one model configuration.

use rand::seq::index;
use rayon::prelude::*;

use crate::data::{check_labels, FeatureMatrix};
use crate::error::{OodError, Result};
use crate::math::{log_sum_exp, log_sum_exp_sorted, CenteredDivergence, NormCoefficient};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Smoothing kernel for the KDE partition estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// `exp(-u^2 / 2) / sqrt(2 pi)`
    #[default]
    Gaussian,
    /// `exp(-|u|) / 2`
    Laplace,
}

impl Kernel {
    fn log_value(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => -0.5 * u * u - LN_SQRT_2PI,
            Kernel::Laplace => -u.abs() - std::f64::consts::LN_2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gaussian => "gaussian",
            Kernel::Laplace => "laplace",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(Kernel::Gaussian),
            "laplace" | "exponential" => Ok(Kernel::Laplace),
            other => Err(OodError::Config(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionKind {
    SelfNormalized,
    ImportanceSampling,
    Kde,
}

impl PartitionKind {
    pub fn name(self) -> &'static str {
        match self {
            PartitionKind::SelfNormalized => "sn",
            PartitionKind::ImportanceSampling => "is",
            PartitionKind::Kde => "kde",
        }
    }
}

/// Estimated normalizers `Phi(k)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionEstimate {
    /// `Phi(k)` is the same constant for every class; `log Phi = 0`.
    SelfNormalized,
    /// `log Phi(k) = log((N / n) * sum_{i in S} g(z_i, k))` over a uniform
    /// subset `S` of `n = ceil(alpha * N)` training rows.
    ImportanceSampling {
        log_phi: Vec<f64>,
        alpha: f64,
        seed: u64,
        n_samples: usize,
    },
    /// Query-dependent kernel estimate; one bandwidth per class.
    Kde { bandwidths: Vec<f64>, kernel: Kernel },
}

impl PartitionEstimate {
    pub fn kind(&self) -> PartitionKind {
        match self {
            PartitionEstimate::SelfNormalized => PartitionKind::SelfNormalized,
            PartitionEstimate::ImportanceSampling { .. } => PartitionKind::ImportanceSampling,
            PartitionEstimate::Kde { .. } => PartitionKind::Kde,
        }
    }

    /// `log Phi(k)` for the query-independent estimators.
    pub fn log_phi(&self, k: usize) -> Option<f64> {
        match self {
            PartitionEstimate::SelfNormalized => Some(0.0),
            PartitionEstimate::ImportanceSampling { log_phi, .. } => log_phi.get(k).copied(),
            PartitionEstimate::Kde { .. } => None,
        }
    }
}

/// Class prototypes plus the norm exponent and partition estimate.
#[derive(Debug, Clone)]
pub struct PrototypeModel {
    means: FeatureMatrix,
    counts: Vec<usize>,
    coeff: NormCoefficient,
    q_override: Option<f64>,
    partition: Option<PartitionEstimate>,
    centers: Vec<CenteredDivergence>,
}

/// Fits one prototype per class; the class count is `max(label) + 1`.
pub fn fit_prototypes(
    features: &FeatureMatrix,
    labels: &[i32],
    coeff: NormCoefficient,
) -> Result<PrototypeModel> {
    let n_classes = labels.iter().copied().max().map_or(0, |m| m.max(-1) + 1) as usize;
    PrototypeModel::fit_with_classes(features, labels, n_classes, coeff)
}

impl PrototypeModel {
    /// Fits prototypes for exactly `n_classes` classes.
    pub fn fit_with_classes(
        features: &FeatureMatrix,
        labels: &[i32],
        n_classes: usize,
        coeff: NormCoefficient,
    ) -> Result<Self> {
        check_labels(features, labels)?;
        if n_classes == 0 || features.rows() < n_classes {
            return Err(OodError::Data(format!(
                "need N >= K >= 1, got N = {} and K = {n_classes}",
                features.rows()
            )));
        }
        let d = features.cols();
        let mut sums = vec![0.0; n_classes * d];
        let mut counts = vec![0usize; n_classes];
        for (i, (row, &label)) in features.iter_rows().zip(labels).enumerate() {
            if label < 0 || label as usize >= n_classes {
                return Err(OodError::Data(format!(
                    "label {label} at row {i} is outside 0..{n_classes}"
                )));
            }
            let k = label as usize;
            counts[k] += 1;
            for (s, x) in sums[k * d..(k + 1) * d].iter_mut().zip(row) {
                *s += x;
            }
        }
        if let Some(class) = counts.iter().position(|&c| c == 0) {
            return Err(OodError::EmptyClass { class });
        }
        for (k, &c) in counts.iter().enumerate() {
            sums[k * d..(k + 1) * d].iter_mut().for_each(|s| *s /= c as f64);
        }
        let means = FeatureMatrix::new(n_classes, d, sums)?;
        Self::from_parts(means, counts, coeff, None)
    }

    /// Rebuilds a model from stored prototypes.
    pub fn from_parts(
        means: FeatureMatrix,
        counts: Vec<usize>,
        coeff: NormCoefficient,
        q_override: Option<f64>,
    ) -> Result<Self> {
        if counts.len() != means.rows() {
            return Err(OodError::shape(
                format!("{} class counts", means.rows()),
                format!("{} class counts", counts.len()),
            ));
        }
        if let Some(class) = counts.iter().position(|&c| c == 0) {
            return Err(OodError::EmptyClass { class });
        }
        if let Some(q) = q_override {
            if !q.is_finite() || q <= 1.0 {
                return Err(OodError::Domain(format!("q override must be > 1, got {q}")));
            }
        }
        let mut model = Self {
            means,
            counts,
            coeff,
            q_override,
            partition: None,
            centers: Vec::new(),
        };
        model.rebuild_centers();
        Ok(model)
    }

    fn rebuild_centers(&mut self) {
        let q = self.divergence_q();
        self.centers = self
            .means
            .iter_rows()
            .map(|mu| CenteredDivergence::new(mu, q))
            .collect();
    }

    /// Same prototypes under a different exponent pair. Drops the partition
    /// estimate and any `q` override, since both depend on the exponent.
    pub fn with_coefficient(&self, coeff: NormCoefficient) -> Self {
        let mut m = self.clone();
        m.coeff = coeff;
        m.q_override = None;
        m.partition = None;
        m.rebuild_centers();
        m
    }

    /// Same prototypes, divergence evaluated with a `q` that need not be
    /// conjugate to `p`. Drops the partition estimate.
    pub fn with_q_override(&self, q: f64) -> Result<Self> {
        Self::from_parts(self.means.clone(), self.counts.clone(), self.coeff, Some(q))
    }

    pub fn with_partition(mut self, partition: PartitionEstimate) -> Self {
        self.partition = Some(partition);
        self
    }

    pub fn n_classes(&self) -> usize {
        self.means.rows()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn means(&self) -> &FeatureMatrix {
        &self.means
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        self.means.row(k)
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn coefficient(&self) -> NormCoefficient {
        self.coeff
    }

    pub fn q_override(&self) -> Option<f64> {
        self.q_override
    }

    /// Exponent used inside the divergence.
    pub fn divergence_q(&self) -> f64 {
        self.q_override.unwrap_or(self.coeff.q())
    }

    pub fn partition(&self) -> Option<&PartitionEstimate> {
        self.partition.as_ref()
    }

    fn check_query(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(OodError::shape(
                format!("{} components", self.dim()),
                format!("{} components", z.len()),
            ));
        }
        Ok(())
    }

    /// `log g(z, k)` without argument checks.
    pub(crate) fn log_g_unchecked(&self, z: &[f64], k: usize) -> f64 {
        -self.centers[k].eval(z).max(0.0)
    }
}

/// `log g(z, k) = -d(z, mu_k)`; never positive.
pub fn log_g(z: &[f64], k: usize, model: &PrototypeModel) -> Result<f64> {
    model.check_query(z)?;
    if k >= model.n_classes() {
        return Err(OodError::Data(format!(
            "class {k} out of range for {} classes",
            model.n_classes()
        )));
    }
    Ok(model.log_g_unchecked(z, k))
}

pub fn estimate_partition_sn(_model: &PrototypeModel) -> PartitionEstimate {
    PartitionEstimate::SelfNormalized
}

/// Number of rows drawn for a sampling ratio `alpha`.
pub fn importance_sample_size(n_rows: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(OodError::Config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    // The tolerance keeps products such as 0.1 * 2000 from rounding up.
    let n = ((alpha * n_rows as f64) - 1e-9).ceil().max(0.0) as usize;
    let n = n.min(n_rows);
    if n == 0 {
        return Err(OodError::Config(format!(
            "alpha = {alpha} over {n_rows} rows draws no samples"
        )));
    }
    Ok(n)
}

/// Sorted row indices of the importance-sampling subset.
pub fn importance_sample_indices(n_rows: usize, alpha: f64, seed: u64) -> Result<Vec<usize>> {
    let n = importance_sample_size(n_rows, alpha)?;
    let mut rng = crate::rng::stream(seed, "importance-sampling");
    let mut idx = index::sample(&mut rng, n_rows, n).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// `log Phi_IS(k)` for every class from a per-row lookup of `log g(z_i, k)`.
pub(crate) fn is_log_phi_from<F>(
    n_rows: usize,
    n_classes: usize,
    indices: &[usize],
    log_g_at: F,
) -> Vec<f64>
where
    F: Fn(usize, usize) -> f64,
{
    let log_ratio = (n_rows as f64 / indices.len() as f64).ln();
    (0..n_classes)
        .map(|k| {
            let vals: Vec<f64> = indices.iter().map(|&i| log_g_at(i, k)).collect();
            log_ratio + log_sum_exp_sorted(vals)
        })
        .collect()
}

/// Importance-sampling partition estimate with a uniform proposal over the
/// training rows.
pub fn estimate_partition_is(
    model: &PrototypeModel,
    train: &FeatureMatrix,
    alpha: f64,
    seed: u64,
) -> Result<PartitionEstimate> {
    train.check_cols(model.dim())?;
    if train.is_empty() {
        return Err(OodError::Config("importance sampling needs training rows".into()));
    }
    let indices = importance_sample_indices(train.rows(), alpha, seed)?;
    let log_phi = is_log_phi_from(train.rows(), model.n_classes(), &indices, |i, k| {
        model.log_g_unchecked(train.row(i), k)
    });
    Ok(PartitionEstimate::ImportanceSampling {
        log_phi,
        alpha,
        seed,
        n_samples: indices.len(),
    })
}

/// Scott's rule on a one-dimensional sample: `sigma * n^(-1/5)`.
///
/// A sample with zero spread uses `sigma = 1`, the natural scale of
/// densities in `(0, 1]`.
pub fn scott_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let sigma = if values.len() > 1 {
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        var.sqrt()
    } else {
        0.0
    };
    let sigma = if sigma > 0.0 { sigma } else { 1.0 };
    sigma * n.max(1.0).powf(-0.2)
}

/// Per-class `g(z', k)` for the training rows of class `k`.
fn class_g_values(
    model: &PrototypeModel,
    train: &FeatureMatrix,
    labels: &[i32],
) -> Result<Vec<Vec<f64>>> {
    check_labels(train, labels)?;
    train.check_cols(model.dim())?;
    let mut per_class = vec![Vec::new(); model.n_classes()];
    for (row, &label) in train.iter_rows().zip(labels) {
        if label >= 0 && (label as usize) < model.n_classes() {
            let k = label as usize;
            per_class[k].push(model.log_g_unchecked(row, k).exp());
        }
    }
    if let Some(class) = per_class.iter().position(Vec::is_empty) {
        return Err(OodError::EmptyClass { class });
    }
    Ok(per_class)
}

/// KDE partition settings. `bandwidth = None` picks Scott's rule per class.
pub fn estimate_partition_kde(
    model: &PrototypeModel,
    train: &FeatureMatrix,
    labels: &[i32],
    bandwidth: Option<f64>,
    kernel: Kernel,
) -> Result<PartitionEstimate> {
    let bandwidths = match bandwidth {
        Some(h) => {
            check_bandwidth(h)?;
            vec![h; model.n_classes()]
        }
        None => class_g_values(model, train, labels)?
            .iter()
            .map(|g| scott_bandwidth(g))
            .collect(),
    };
    Ok(PartitionEstimate::Kde { bandwidths, kernel })
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(OodError::Config(format!("bandwidth must be finite and > 0, got {h}")));
    }
    Ok(())
}

/// `log Phi_KDE(k)` at query `z` given the class's training `g` values:
/// `-log(h |D_k|) - log g(z, k) + log sum_j K((g(z, k) - g_j) / h)`.
fn kde_log_phi(log_g_z: f64, class_g: &[f64], h: f64, kernel: Kernel) -> f64 {
    let g_z = log_g_z.exp();
    let log_kernels: Vec<f64> = class_g
        .iter()
        .map(|&g| kernel.log_value((g_z - g) / h))
        .collect();
    -(h * class_g.len() as f64).ln() - log_g_z + log_sum_exp(&log_kernels)
}

/// Query-dependent KDE partition estimate for class `k`, in the log domain.
pub fn kde_log_partition_at(
    z: &[f64],
    k: usize,
    model: &PrototypeModel,
    train: &FeatureMatrix,
    labels: &[i32],
    h: f64,
    kernel: Kernel,
) -> Result<f64> {
    check_bandwidth(h)?;
    let lg = log_g(z, k, model)?;
    let g_values = class_g_values(model, train, labels)?;
    Ok(kde_log_phi(lg, &g_values[k], h, kernel))
}

/// Scores queries against a fitted model. For the KDE estimator the
/// per-class training `g` values are computed once at construction.
#[derive(Debug)]
pub struct ConjNormScorer<'a> {
    model: &'a PrototypeModel,
    partition: &'a PartitionEstimate,
    kde_reference: Option<Vec<Vec<f64>>>,
}

impl<'a> ConjNormScorer<'a> {
    pub fn new(
        model: &'a PrototypeModel,
        training: Option<(&FeatureMatrix, &[i32])>,
    ) -> Result<Self> {
        let partition = model.partition().ok_or_else(|| {
            OodError::Usage("model has no partition estimate; run an estimator first".into())
        })?;
        let kde_reference = match partition {
            PartitionEstimate::Kde { bandwidths, .. } => {
                if bandwidths.len() != model.n_classes() {
                    return Err(OodError::shape(
                        format!("{} bandwidths", model.n_classes()),
                        format!("{} bandwidths", bandwidths.len()),
                    ));
                }
                bandwidths.iter().try_for_each(|&h| check_bandwidth(h))?;
                let (train, labels) = training.ok_or_else(|| {
                    OodError::Usage("KDE partition scoring needs the training features and labels".into())
                })?;
                Some(class_g_values(model, train, labels)?)
            }
            PartitionEstimate::ImportanceSampling { log_phi, .. } => {
                if log_phi.len() != model.n_classes() {
                    return Err(OodError::shape(
                        format!("{} partition values", model.n_classes()),
                        format!("{} partition values", log_phi.len()),
                    ));
                }
                None
            }
            PartitionEstimate::SelfNormalized => None,
        };
        Ok(Self {
            model,
            partition,
            kde_reference,
        })
    }

    pub fn score(&self, z: &[f64]) -> Result<f64> {
        self.model.check_query(z)?;
        Ok(self.score_unchecked(z))
    }

    fn score_unchecked(&self, z: &[f64]) -> f64 {
        let k_count = self.model.n_classes();
        let terms: Vec<f64> = match (self.partition, &self.kde_reference) {
            (PartitionEstimate::Kde { bandwidths, kernel }, Some(reference)) => (0..k_count)
                .map(|k| {
                    let lg = self.model.log_g_unchecked(z, k);
                    lg - kde_log_phi(lg, &reference[k], bandwidths[k], *kernel)
                })
                .collect(),
            (estimate, _) => (0..k_count)
                .map(|k| {
                    let log_phi = estimate.log_phi(k).unwrap_or(0.0);
                    self.model.log_g_unchecked(z, k) - log_phi
                })
                .collect(),
        };
        log_sum_exp(&terms)
    }

    /// Scores every row; rows are processed in parallel on the current
    /// rayon pool, each with a serial reduction.
    pub fn score_all(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        features.check_cols(self.model.dim())?;
        Ok((0..features.rows())
            .into_par_iter()
            .map(|i| self.score_unchecked(features.row(i)))
            .collect())
    }
}

/// Log-domain density score of one query. Training data is needed only for
/// the KDE estimator.
pub fn conjnorm_score(
    z: &[f64],
    model: &PrototypeModel,
    training: Option<(&FeatureMatrix, &[i32])>,
) -> Result<f64> {
    ConjNormScorer::new(model, training)?.score(z)
}
