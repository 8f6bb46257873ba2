//! Norm and divergence primitives.
//!
//! The generator is `phi(z) = 0.5 * ||z||_q^2`, the convex conjugate of
//! `psi(eta) = 0.5 * ||eta||_p^2` when `1/p + 1/q = 1`. Everything here works
//! in `f64` regardless of how features were stored.

use crate::error::{OodError, Result};

/// Smallest admissible distance of `p` (or `q`) above 1.
pub const EXPONENT_GUARD: f64 = 1e-9;

/// A conjugate exponent pair `(p, q)` with `1/p + 1/q = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormCoefficient {
    p: f64,
    q: f64,
}

impl NormCoefficient {
    /// Builds the pair from the primal exponent `p`.
    pub fn new(p: f64) -> Result<Self> {
        let q = conjugate_exponent(p)?;
        Ok(Self { p, q })
    }

    /// Builds the pair from the dual exponent `q`.
    pub fn from_q(q: f64) -> Result<Self> {
        let p = conjugate_exponent(q)?;
        Ok(Self { p, q })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }
}

/// Returns `q = p / (p - 1)`.
pub fn conjugate_exponent(p: f64) -> Result<f64> {
    if !p.is_finite() || p <= 1.0 + EXPONENT_GUARD {
        return Err(OodError::Domain(format!(
            "conjugate exponent needs finite p > 1 (+{EXPONENT_GUARD:e}), got {p}"
        )));
    }
    Ok(p / (p - 1.0))
}

fn check_dual_exponent(q: f64) -> Result<()> {
    if !q.is_finite() || q <= 1.0 {
        return Err(OodError::Domain(format!("q must be finite and > 1, got {q}")));
    }
    Ok(())
}

/// `(sum_i |v_i|^p)^(1/p)`, scaled by the largest magnitude to avoid overflow.
pub fn lp_norm(v: &[f64], p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(OodError::Domain(format!("lp norm needs finite p >= 1, got {p}")));
    }
    Ok(lp_norm_unchecked(v, p))
}

pub(crate) fn lp_norm_unchecked(v: &[f64], p: f64) -> f64 {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    if p == 2.0 {
        let s: f64 = v.iter().map(|x| (x / scale) * (x / scale)).sum();
        return scale * s.sqrt();
    }
    let s: f64 = v.iter().map(|x| (x.abs() / scale).powf(p)).sum();
    scale * s.powf(1.0 / p)
}

/// `phi(v) = 0.5 * ||v||_q^2`.
pub fn phi(v: &[f64], q: f64) -> Result<f64> {
    check_dual_exponent(q)?;
    let n = lp_norm_unchecked(v, q);
    Ok(0.5 * n * n)
}

/// Gradient of `0.5 * ||v||_q^2`.
///
/// Component `i` is `||v||_q^(2-q) * sign(v_i) * |v_i|^(q-1)`. The zero
/// vector maps to the zero vector.
pub fn phi_gradient(v: &[f64], q: f64) -> Result<Vec<f64>> {
    check_dual_exponent(q)?;
    let mut out = vec![0.0; v.len()];
    phi_gradient_into(v, q, &mut out);
    Ok(out)
}

pub(crate) fn phi_gradient_into(v: &[f64], q: f64, out: &mut [f64]) {
    let norm = lp_norm_unchecked(v, q);
    if norm == 0.0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    // ||v||^(2-q) |v_i|^(q-1) = ||v|| (|v_i| / ||v||)^(q-1); the ratio form
    // stays in [0, 1] and cannot overflow.
    for (o, &x) in out.iter_mut().zip(v) {
        let r = x.abs() / norm;
        *o = norm * r.powf(q - 1.0) * x.signum();
        if x == 0.0 {
            *o = 0.0;
        }
    }
}

/// Bregman divergence of `phi = 0.5 * ||.||_q^2` between `z` and `mu`.
///
/// Evaluated as `phi(z) - phi(mu) - <z - mu, grad phi(mu)>`, which equals
/// `phi(z) + phi(mu) - <z, grad phi(mu)>` because `phi` is 2-homogeneous.
/// The difference form is exactly zero at `z == mu`.
pub fn bregman_divergence(z: &[f64], mu: &[f64], q: f64) -> Result<f64> {
    if z.len() != mu.len() {
        return Err(OodError::shape(
            format!("{} components", mu.len()),
            format!("{} components", z.len()),
        ));
    }
    check_dual_exponent(q)?;
    Ok(CenteredDivergence::new(mu, q).eval(z))
}

/// `phi(mu)` and `grad phi(mu)` cached for repeated divergences to one centre.
#[derive(Debug, Clone)]
pub(crate) struct CenteredDivergence {
    mu: Vec<f64>,
    phi_mu: f64,
    grad: Vec<f64>,
    q: f64,
}

impl CenteredDivergence {
    pub(crate) fn new(mu: &[f64], q: f64) -> Self {
        let mut grad = vec![0.0; mu.len()];
        phi_gradient_into(mu, q, &mut grad);
        let n = lp_norm_unchecked(mu, q);
        Self {
            mu: mu.to_vec(),
            phi_mu: 0.5 * n * n,
            grad,
            q,
        }
    }

    pub(crate) fn eval(&self, z: &[f64]) -> f64 {
        let n = lp_norm_unchecked(z, self.q);
        let linear: f64 = z
            .iter()
            .zip(&self.mu)
            .zip(&self.grad)
            .map(|((zi, mi), gi)| (zi - mi) * gi)
            .sum();
        0.5 * n * n - self.phi_mu - linear
    }
}

/// Numerically stable `log(sum_i exp(x_i))`. Returns `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}

/// `log_sum_exp` after sorting ascending, so the result does not depend on
/// the order of `xs`.
pub(crate) fn log_sum_exp_sorted(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    log_sum_exp(&xs)
}
