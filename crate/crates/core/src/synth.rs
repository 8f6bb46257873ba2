//! Synthetic data with known densities, plus Monte Carlo checks of the
//! importance-sampling estimator and of the ID/OOD separation bound.
//!
//! All samplers are deterministic in `(spec, seed)`; components are assigned
//! round-robin (`label = i % K`) so class sizes are balanced exactly.

use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaSampler, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{Continuous, Gamma as GammaPdf};

use crate::data::FeatureMatrix;
use crate::density::{fit_prototypes, importance_sample_indices, is_log_phi_from};
use crate::error::{OodError, Result};
use crate::math::{bregman_divergence, lp_norm_unchecked, CenteredDivergence, NormCoefficient};
use crate::rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Generating distribution of a synthetic data set.
#[derive(Debug, Clone, PartialEq)]
pub enum SynthCase {
    /// Two isotropic 2-D Gaussians centred at `(mu1, mu1)` and `(mu2, mu2)`.
    GaussianMixture2D {
        mu1: f64,
        mu2: f64,
        sigma1: f64,
        sigma2: f64,
    },
    /// Class 0: both coordinates i.i.d. Gamma(shape, scale). Class 1: an
    /// isotropic 2-D Gaussian centred at `(gauss_mean, gauss_mean)`.
    GammaGaussianMixture2D {
        shape: f64,
        scale: f64,
        gauss_mean: f64,
        gauss_sigma: f64,
    },
    /// `n_classes` isotropic Gaussians in `dim` dimensions. Centres are drawn
    /// from `N(0, center_scale^2 I)` from the sampling seed.
    IsotropicBlobs {
        n_classes: usize,
        dim: usize,
        center_scale: f64,
        cluster_std: f64,
    },
    /// Classes with density proportional to `exp(-d_q(z, mean_k))`.
    ExpFamilyKnownQ { means: Vec<Vec<f64>>, q: f64 },
}

impl SynthCase {
    /// Means 4 and 8 with unit variances.
    pub fn gaussian_mixture() -> Self {
        SynthCase::GaussianMixture2D {
            mu1: 4.0,
            mu2: 8.0,
            sigma1: 1.0,
            sigma2: 1.0,
        }
    }

    /// Gamma(2, 2) bump (mean 4) beside a unit Gaussian at 8.
    pub fn gamma_gaussian() -> Self {
        SynthCase::GammaGaussianMixture2D {
            shape: 2.0,
            scale: 2.0,
            gauss_mean: 8.0,
            gauss_sigma: 1.0,
        }
    }

    /// Ten overlapping blobs in 16 dimensions.
    pub fn blobs() -> Self {
        SynthCase::IsotropicBlobs {
            n_classes: 10,
            dim: 16,
            center_scale: 0.25,
            cluster_std: 0.25,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SynthCase::GaussianMixture2D { .. } => "gaussian-mixture",
            SynthCase::GammaGaussianMixture2D { .. } => "gamma-gaussian",
            SynthCase::IsotropicBlobs { .. } => "blobs",
            SynthCase::ExpFamilyKnownQ { .. } => "expfam",
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            SynthCase::GaussianMixture2D { .. } | SynthCase::GammaGaussianMixture2D { .. } => 2,
            SynthCase::IsotropicBlobs { n_classes, .. } => *n_classes,
            SynthCase::ExpFamilyKnownQ { means, .. } => means.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SynthCase::GaussianMixture2D { .. } | SynthCase::GammaGaussianMixture2D { .. } => 2,
            SynthCase::IsotropicBlobs { dim, .. } => *dim,
            SynthCase::ExpFamilyKnownQ { means, .. } => means.first().map_or(0, Vec::len),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub case: SynthCase,
    pub n: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(case: SynthCase, n: usize, seed: u64) -> Self {
        Self { case, n, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(OodError::Config(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        if self.n == 0 {
            return Err(OodError::Config("sample count must be >= 1".into()));
        }
        match &self.case {
            SynthCase::GaussianMixture2D { mu1, mu2, sigma1, sigma2 } => {
                if !(mu1.is_finite() && mu2.is_finite()) {
                    return Err(OodError::Config("means must be finite".into()));
                }
                positive("sigma1", *sigma1)?;
                positive("sigma2", *sigma2)
            }
            SynthCase::GammaGaussianMixture2D { shape, scale, gauss_mean, gauss_sigma } => {
                positive("shape", *shape)?;
                positive("scale", *scale)?;
                positive("gauss_sigma", *gauss_sigma)?;
                if gauss_mean.is_finite() {
                    Ok(())
                } else {
                    Err(OodError::Config("gauss_mean must be finite".into()))
                }
            }
            SynthCase::IsotropicBlobs { n_classes, dim, center_scale, cluster_std } => {
                if *n_classes == 0 || *dim == 0 {
                    return Err(OodError::Config("blobs need n_classes >= 1 and dim >= 1".into()));
                }
                if !(*center_scale >= 0.0 && center_scale.is_finite()) {
                    return Err(OodError::Config("center_scale must be >= 0".into()));
                }
                positive("cluster_std", *cluster_std)
            }
            SynthCase::ExpFamilyKnownQ { means, q } => {
                if means.is_empty() || means[0].is_empty() {
                    return Err(OodError::Config("expfam needs at least one nonempty mean".into()));
                }
                let d = means[0].len();
                if means.iter().any(|m| m.len() != d || m.iter().any(|x| !x.is_finite())) {
                    return Err(OodError::Config("expfam means must share one finite dimension".into()));
                }
                if !(*q > 1.0) || !q.is_finite() {
                    return Err(OodError::Config(format!("q must be > 1, got {q}")));
                }
                if *q != 2.0 && d > 2 {
                    return Err(OodError::Config(
                        "expfam densities with q != 2 are normalized by quadrature and need dim <= 2".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// One mixture component with an exact density.
#[derive(Debug, Clone)]
pub enum Component {
    Gaussian { mean: Vec<f64>, sigma: f64 },
    GammaProduct { shape: f64, scale: f64, dim: usize },
    ExpFamily(ExpFamilyComponent),
}

impl Component {
    pub fn log_pdf(&self, z: &[f64]) -> f64 {
        match self {
            Component::Gaussian { mean, sigma } => {
                let d = mean.len() as f64;
                let sq: f64 = z.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
                -0.5 * sq / (sigma * sigma) - d * sigma.ln() - 0.5 * d * LN_2PI
            }
            Component::GammaProduct { shape, scale, .. } => {
                let g = GammaPdf::new(*shape, 1.0 / scale).expect("validated gamma parameters");
                z.iter().map(|&x| g.ln_pdf(x)).sum()
            }
            Component::ExpFamily(c) => c.log_pdf(z),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            Component::Gaussian { mean, sigma } => Ok(mean
                .iter()
                .map(|m| m + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect()),
            Component::GammaProduct { shape, scale, dim } => {
                let g = GammaSampler::new(*shape, *scale)
                    .map_err(|e| OodError::Config(format!("gamma parameters: {e}")))?;
                Ok((0..*dim).map(|_| g.sample(rng)).collect())
            }
            Component::ExpFamily(c) => c.sample(rng),
        }
    }
}

/// Density proportional to `exp(-d_q(z, mean))`, with its log-normalizer.
#[derive(Debug, Clone)]
pub struct ExpFamilyComponent {
    mean: Vec<f64>,
    q: f64,
    divergence: CenteredDivergence,
    log_partition: f64,
    envelope: Envelope,
}

impl ExpFamilyComponent {
    pub fn new(mean: &[f64], q: f64) -> Result<Self> {
        if !(q > 1.0) || !q.is_finite() {
            return Err(OodError::Domain(format!("q must be > 1, got {q}")));
        }
        let dim = mean.len();
        let divergence = CenteredDivergence::new(mean, q);
        let envelope = Envelope::new(mean, q)?;
        let mut c = Self {
            mean: mean.to_vec(),
            q,
            divergence,
            log_partition: 0.0,
            envelope,
        };
        c.log_partition = if q == 2.0 {
            0.5 * dim as f64 * LN_2PI
        } else if dim <= 2 {
            c.quadrature_log_partition()
        } else {
            return Err(OodError::Config(
                "normalizing exp(-d_q) with q != 2 needs dim <= 2".into(),
            ));
        };
        Ok(c)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn log_unnormalized(&self, z: &[f64]) -> f64 {
        -self.divergence.eval(z).max(0.0)
    }

    pub fn log_pdf(&self, z: &[f64]) -> f64 {
        self.log_unnormalized(z) - self.log_partition
    }

    /// Half-width of a box around the mean outside which the unnormalized
    /// density stays below `exp(-40)`.
    fn support_radius(&self) -> f64 {
        let e = &self.envelope;
        let offset: f64 = e.center.iter().zip(&self.mean).map(|(a, b)| (a - b) * (a - b)).sum();
        offset.sqrt() + ((40.0 + e.log_c) / e.rate).sqrt()
    }

    /// Trapezoid rule on a box holding all but `exp(-40)` of the mass.
    fn quadrature_log_partition(&self) -> f64 {
        let r = self.support_radius();
        match self.mean.len() {
            1 => {
                let nodes = 20_001;
                let h = 2.0 * r / (nodes - 1) as f64;
                let s: f64 = (0..nodes)
                    .map(|i| {
                        let w = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
                        let x = self.mean[0] - r + i as f64 * h;
                        w * self.log_unnormalized(&[x]).exp()
                    })
                    .sum();
                (s * h).ln()
            }
            2 => {
                let nodes = 1_201;
                let h = 2.0 * r / (nodes - 1) as f64;
                let s: f64 = (0..nodes)
                    .into_par_iter()
                    .map(|i| {
                        let wi = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
                        let x = self.mean[0] - r + i as f64 * h;
                        let mut row = 0.0;
                        for j in 0..nodes {
                            let wj = if j == 0 || j == nodes - 1 { 0.5 } else { 1.0 };
                            let y = self.mean[1] - r + j as f64 * h;
                            row += wj * self.log_unnormalized(&[x, y]).exp();
                        }
                        wi * row
                    })
                    .collect::<Vec<_>>()
                    .iter()
                    .sum();
                (s * h * h).ln()
            }
            _ => unreachable!("quadrature is limited to dim <= 2"),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let e = &self.envelope;
        let sd = (0.5 / e.rate).sqrt();
        let draw = |rng: &mut R| -> Vec<f64> {
            e.center
                .iter()
                .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        if self.q == 2.0 {
            return Ok(draw(rng));
        }
        let mut attempts = 0u64;
        loop {
            attempts += 1;
            let z = draw(rng);
            let log_ratio = self.log_unnormalized(&z) - e.log_bound(&z);
            debug_assert!(log_ratio <= 1e-9, "envelope violated: {log_ratio}");
            if rng.random::<f64>().ln() < log_ratio {
                return Ok(z);
            }
            if attempts >= 100_000 {
                return Err(OodError::Numerical(format!(
                    "rejection sampler acceptance fell below 1e-5 (q = {})",
                    self.q
                )));
            }
        }
    }
}

/// Gaussian bound `exp(-d_q(z, mu)) <= exp(log_c - rate * |z - center|^2)`.
///
/// For `q <= 2`, `0.5 ||.||_q^2` is `(q-1)`-strongly convex in the l_q norm,
/// which dominates l_2, so the bound is centred on `mu` with `log_c = 0`.
/// For `q > 2`, `phi(z) >= a |z|^2` with `a = 0.5 d^(2/q - 1)`; completing
/// the square in `d = phi(z) - <z, g> + phi(mu)`, `g = grad phi(mu)`, gives
/// `center = g / (2a)` and `log_c = |g|^2 / (4a) - phi(mu)`.
#[derive(Debug, Clone)]
struct Envelope {
    rate: f64,
    center: Vec<f64>,
    log_c: f64,
}

impl Envelope {
    fn new(mu: &[f64], q: f64) -> Result<Self> {
        if q <= 2.0 {
            return Ok(Self {
                rate: 0.5 * (q - 1.0),
                center: mu.to_vec(),
                log_c: 0.0,
            });
        }
        let a = 0.5 * (mu.len() as f64).powf(2.0 / q - 1.0);
        let g = crate::math::phi_gradient(mu, q)?;
        let g2: f64 = g.iter().map(|x| x * x).sum();
        let mq = lp_norm_unchecked(mu, q);
        Ok(Self {
            rate: a,
            center: g.iter().map(|x| x / (2.0 * a)).collect(),
            log_c: (g2 / (4.0 * a) - 0.5 * mq * mq).max(0.0),
        })
    }

    fn log_bound(&self, z: &[f64]) -> f64 {
        let r2: f64 = z.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        self.log_c - self.rate * r2
    }
}

/// Equal-weight mixture with an exact density.
#[derive(Debug, Clone)]
pub struct MixtureDensity {
    components: Vec<Component>,
}

impl MixtureDensity {
    pub fn new(components: Vec<Component>) -> Self {
        Self { components }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn log_pdf(&self, z: &[f64]) -> f64 {
        let terms: Vec<f64> = self.components.iter().map(|c| c.log_pdf(z)).collect();
        crate::math::log_sum_exp(&terms) - (self.components.len() as f64).ln()
    }

    pub fn pdf(&self, z: &[f64]) -> f64 {
        self.log_pdf(z).exp()
    }
}

/// Samples, round-robin labels and the generating density.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub features: FeatureMatrix,
    pub labels: Vec<i32>,
    pub density: MixtureDensity,
}

fn components_for(spec: &SynthSpec) -> Result<Vec<Component>> {
    Ok(match &spec.case {
        SynthCase::GaussianMixture2D { mu1, mu2, sigma1, sigma2 } => vec![
            Component::Gaussian { mean: vec![*mu1; 2], sigma: *sigma1 },
            Component::Gaussian { mean: vec![*mu2; 2], sigma: *sigma2 },
        ],
        SynthCase::GammaGaussianMixture2D { shape, scale, gauss_mean, gauss_sigma } => vec![
            Component::GammaProduct { shape: *shape, scale: *scale, dim: 2 },
            Component::Gaussian { mean: vec![*gauss_mean; 2], sigma: *gauss_sigma },
        ],
        SynthCase::IsotropicBlobs { n_classes, dim, center_scale, cluster_std } => {
            let mut crng = rng::stream(spec.seed, "blob-centres");
            (0..*n_classes)
                .map(|_| Component::Gaussian {
                    mean: (0..*dim)
                        .map(|_| center_scale * crng.sample::<f64, _>(StandardNormal))
                        .collect(),
                    sigma: *cluster_std,
                })
                .collect()
        }
        SynthCase::ExpFamilyKnownQ { means, q } => means
            .iter()
            .map(|m| ExpFamilyComponent::new(m, *q).map(Component::ExpFamily))
            .collect::<Result<_>>()?,
    })
}

/// Draws `spec.n` labelled samples. Same spec, same bits.
pub fn sample_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let components = components_for(spec)?;
    let k = components.len();
    let mut srng = rng::stream(spec.seed, "synthetic-samples");
    let mut data = Vec::with_capacity(spec.n * spec.case.dim());
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let c = i % k;
        data.extend(components[c].sample(&mut srng)?);
        labels.push(c as i32);
    }
    Ok(SynthData {
        features: FeatureMatrix::new(spec.n, spec.case.dim(), data)?,
        labels,
        density: MixtureDensity::new(components),
    })
}

/// Draws `n` points uniformly from the box `[lo, hi]^dim`.
pub fn sample_uniform_box(n: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Result<FeatureMatrix> {
    if !(hi > lo) {
        return Err(OodError::Config(format!("box needs hi > lo, got [{lo}, {hi}]")));
    }
    let mut r = rng::stream(seed, "uniform-box");
    let data = (0..n * dim).map(|_| r.random_range(lo..hi)).collect();
    FeatureMatrix::new(n, dim, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDeviation {
    pub class: usize,
    /// `log Phi(k)` from every training row.
    pub reference_log_phi: f64,
    /// Mean over resamples of `Phi_IS(k) / Phi(k)`.
    pub mean_ratio: f64,
    pub relative_deviation: f64,
    /// Standard error of `mean_ratio`.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnbiasednessReport {
    pub alpha: f64,
    pub n_resamples: usize,
    pub n_samples: usize,
    pub tolerance: f64,
    pub classes: Vec<ClassDeviation>,
    pub max_deviation: f64,
    pub pass: bool,
}

fn resample_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add((r as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Averages the importance-sampling normalizer over `n_resamples` seeds and
/// compares it with the all-rows value, class by class.
pub fn verify_is_unbiasedness(
    spec: &SynthSpec,
    p: f64,
    alpha: f64,
    n_resamples: usize,
    tolerance: f64,
) -> Result<UnbiasednessReport> {
    if n_resamples < 100 {
        return Err(OodError::Config(format!("need at least 100 resamples, got {n_resamples}")));
    }
    if !(tolerance >= 0.0) {
        return Err(OodError::Config(format!("tolerance must be >= 0, got {tolerance}")));
    }
    let data = sample_synthetic(spec)?;
    let model = fit_prototypes(&data.features, &data.labels, NormCoefficient::new(p)?)?;
    let (n, k) = (data.features.rows(), model.n_classes());
    let table: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let row = data.features.row(i);
            (0..k).map(|c| model.log_g_unchecked(row, c)).collect::<Vec<_>>()
        })
        .collect();
    let lookup = |i: usize, c: usize| table[i * k + c];
    let all: Vec<usize> = (0..n).collect();
    let reference = is_log_phi_from(n, k, &all, lookup);

    let draws = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let idx = importance_sample_indices(n, alpha, resample_seed(spec.seed, r))?;
            let lp = is_log_phi_from(n, k, &idx, lookup);
            Ok(lp
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).exp())
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;

    let classes: Vec<ClassDeviation> = (0..k)
        .map(|c| {
            let m = n_resamples as f64;
            let mean = draws.iter().map(|d| d[c]).sum::<f64>() / m;
            let var = draws.iter().map(|d| (d[c] - mean).powi(2)).sum::<f64>() / (m - 1.0);
            ClassDeviation {
                class: c,
                reference_log_phi: reference[c],
                mean_ratio: mean,
                relative_deviation: (mean - 1.0).abs(),
                stderr: (var / m).sqrt(),
            }
        })
        .collect();
    let max_deviation = classes.iter().map(|c| c.relative_deviation).fold(0.0, f64::max);
    Ok(UnbiasednessReport {
        alpha,
        n_resamples,
        n_samples: crate::density::importance_sample_size(n, alpha)?,
        tolerance,
        pass: max_deviation <= tolerance,
        classes,
        max_deviation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundVerdict {
    Pass,
    Fail,
    /// The density exceeds 1 somewhere, so the bound's premise that scores
    /// lie in `[0, 1]` does not hold.
    PreconditionViolated,
}

impl BoundVerdict {
    /// Verdict for an estimated gap against the bound, allowing three
    /// standard errors of Monte Carlo noise.
    pub fn judge(gap: f64, bound: f64, stderr: f64, max_density: f64) -> Self {
        if max_density > 1.0 {
            BoundVerdict::PreconditionViolated
        } else if gap <= bound + 3.0 * stderr {
            BoundVerdict::Pass
        } else {
            BoundVerdict::Fail
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundVerdict::Pass => "pass",
            BoundVerdict::Fail => "fail",
            BoundVerdict::PreconditionViolated => "precondition-violated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// Monte Carlo estimate of `E_in[p(z)] - E_out[p(z)]`.
    pub gap: f64,
    pub stderr: f64,
    /// `(1/K) sum_k sqrt(0.5 * d(mu_k, mu_out))`
    pub bound: f64,
    pub max_density: f64,
    pub n_mc: usize,
    pub verdict: BoundVerdict,
}

const MC_BATCH: usize = 10_000;

/// Per-batch `(sum, sum of squares)` of the mixture density at points drawn
/// from `source`. Batches use their own sub-streams; the combination order is
/// fixed.
fn density_moments(
    density: &MixtureDensity,
    source: &[Component],
    n: usize,
    seed: u64,
    tag: &str,
) -> Result<(f64, f64)> {
    let batches = n.div_ceil(MC_BATCH);
    let sums = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::substream(seed, tag, b as u64);
            let start = b * MC_BATCH;
            let end = (start + MC_BATCH).min(n);
            let (mut s, mut s2) = (0.0, 0.0);
            for i in start..end {
                let z = source[i % source.len()].sample(&mut r)?;
                let v = density.pdf(&z);
                s += v;
                s2 += v * v;
            }
            Ok((s, s2))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sums.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1)))
}

/// Largest mixture density: exact bound for `q = 2`, grid search otherwise.
fn max_density(density: &MixtureDensity, comps: &[ExpFamilyComponent], q: f64) -> f64 {
    let d = comps[0].mean().len() as f64;
    if q == 2.0 {
        // Each unit Gaussian peaks at (2 pi)^(-d/2); a mixture cannot exceed that.
        return (-0.5 * d * LN_2PI).exp();
    }
    let r = comps.iter().map(|c| c.support_radius()).fold(0.0, f64::max);
    let lo: Vec<f64> = (0..comps[0].mean().len())
        .map(|j| comps.iter().map(|c| c.mean()[j]).fold(f64::INFINITY, f64::min) - r)
        .collect();
    let hi: Vec<f64> = (0..comps[0].mean().len())
        .map(|j| comps.iter().map(|c| c.mean()[j]).fold(f64::NEG_INFINITY, f64::max) + r)
        .collect();
    let nodes = 401;
    let at = |j: usize, i: usize| lo[j] + (hi[j] - lo[j]) * i as f64 / (nodes - 1) as f64;
    let mut best = comps
        .iter()
        .map(|c| density.pdf(c.mean()))
        .fold(0.0, f64::max);
    if lo.len() == 1 {
        for i in 0..nodes {
            best = best.max(density.pdf(&[at(0, i)]));
        }
    } else {
        for i in 0..nodes {
            for j in 0..nodes {
                best = best.max(density.pdf(&[at(0, i), at(1, j)]));
            }
        }
    }
    best
}

/// Monte Carlo check of `E_in[p] - E_out[p] <= (1/K) sum_k sqrt(d(mu_k, mu_out) / 2)`
/// where ID classes and the OOD population follow `exp(-d_q(., mu))` and `p`
/// is the normalized ID mixture. Passes when the estimate is within three
/// standard errors of the bound.
pub fn verify_t2_bound(
    mu_in: &[Vec<f64>],
    mu_out: &[f64],
    q: f64,
    n_mc: usize,
    seed: u64,
) -> Result<BoundReport> {
    if mu_in.is_empty() {
        return Err(OodError::Config("need at least one ID mean".into()));
    }
    if n_mc < 2 {
        return Err(OodError::Config("need at least 2 Monte Carlo samples".into()));
    }
    let d = mu_out.len();
    if let Some(bad) = mu_in.iter().find(|m| m.len() != d) {
        return Err(OodError::shape(format!("{d} components"), format!("{} components", bad.len())));
    }
    let comps: Vec<ExpFamilyComponent> = mu_in
        .iter()
        .map(|m| ExpFamilyComponent::new(m, q))
        .collect::<Result<_>>()?;
    let out = ExpFamilyComponent::new(mu_out, q)?;
    let density = MixtureDensity::new(comps.iter().cloned().map(Component::ExpFamily).collect());
    let in_sources: Vec<Component> = comps.iter().cloned().map(Component::ExpFamily).collect();
    let out_sources = [Component::ExpFamily(out)];

    let (s_in, s2_in) = density_moments(&density, &in_sources, n_mc, seed, "t2-in")?;
    let (s_out, s2_out) = density_moments(&density, &out_sources, n_mc, seed, "t2-out")?;
    let n = n_mc as f64;
    let (m_in, m_out) = (s_in / n, s_out / n);
    let var_in = ((s2_in - n * m_in * m_in) / (n - 1.0)).max(0.0);
    let var_out = ((s2_out - n * m_out * m_out) / (n - 1.0)).max(0.0);
    let stderr = (var_in / n + var_out / n).sqrt();

    let bound = mu_in
        .iter()
        .map(|m| bregman_divergence(m, mu_out, q).map(|div| (0.5 * div.max(0.0)).sqrt()))
        .sum::<Result<f64>>()?
        / mu_in.len() as f64;

    let max_density = max_density(&density, &comps, q);
    let gap = m_in - m_out;
    let verdict = BoundVerdict::judge(gap, bound, stderr, max_density);
    Ok(BoundReport {
        gap,
        stderr,
        bound,
        max_density,
        n_mc,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub q: f64,
    pub dim: usize,
    pub trials: usize,
    /// Largest `|numeric - analytic| / max(1, |analytic|)` over all components.
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares the analytic gradient of `0.5 ||z||_q^2` with central finite
/// differences at random points whose components lie in `[0.1, 3]` in
/// absolute value.
pub fn verify_gradient(q: f64, dim: usize, trials: usize, seed: u64, tolerance: f64) -> Result<GradientReport> {
    if dim == 0 || trials == 0 {
        return Err(OodError::Config("gradient check needs dim >= 1 and trials >= 1".into()));
    }
    let mut r = rng::stream(seed, "gradient-check");
    let mut max_error: f64 = 0.0;
    for _ in 0..trials {
        let z: Vec<f64> = (0..dim)
            .map(|_| {
                let mag = r.random_range(0.1..3.0);
                if r.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        let grad = crate::math::phi_gradient(&z, q)?;
        for i in 0..dim {
            let h = 1e-5 * z[i].abs().max(1.0);
            let mut up = z.clone();
            let mut down = z.clone();
            up[i] += h;
            down[i] -= h;
            let numeric = (crate::math::phi(&up, q)? - crate::math::phi(&down, q)?) / (2.0 * h);
            max_error = max_error.max((numeric - grad[i]).abs() / grad[i].abs().max(1.0));
        }
    }
    Ok(GradientReport {
        q,
        dim,
        trials,
        max_error,
        tolerance,
        pass: max_error <= tolerance,
    })
}
