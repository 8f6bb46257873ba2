//! Threshold-free detection metrics and the thresholded decision rule.
//!
//! In-distribution samples are the positive class. Higher scores must mean
//! "more in-distribution".

use crate::error::{OodError, Result};

pub const DEFAULT_TPR: f64 = 0.95;

/// Outcome of thresholding a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    InDistribution,
    OutOfDistribution,
}

/// In-distribution iff `score >= lambda`.
pub fn decide(score: f64, lambda: f64) -> Decision {
    if score >= lambda {
        Decision::InDistribution
    } else {
        Decision::OutOfDistribution
    }
}

fn check_populations(id: &[f64], ood: &[f64]) -> Result<()> {
    if id.is_empty() || ood.is_empty() {
        return Err(OodError::Usage(format!(
            "both score sets must be nonempty (id: {}, ood: {})",
            id.len(),
            ood.len()
        )));
    }
    if id.iter().chain(ood).any(|s| s.is_nan()) {
        return Err(OodError::Data("scores contain NaN".into()));
    }
    Ok(())
}

/// `P(S_id > S_ood) + 0.5 P(S_id = S_ood)` from mid-ranks (Mann-Whitney U).
///
/// Ranks are kept doubled as integers so the result equals the pair-count
/// definition exactly.
pub fn auroc(id: &[f64], ood: &[f64]) -> Result<f64> {
    check_populations(id, ood)?;
    let mut all: Vec<(f64, bool)> = id
        .iter()
        .map(|&s| (s, true))
        .chain(ood.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sum over ID samples of 2 * midrank (1-based).
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < all.len() {
        let mut end = start + 1;
        while end < all.len() && all[end].0 == all[start].0 {
            end += 1;
        }
        // Tied block occupies 1-based ranks start+1..=end; 2*midrank = start+1+end.
        let doubled_mid = (start + 1 + end) as u128;
        let id_in_block = all[start..end].iter().filter(|x| x.1).count() as u128;
        doubled_rank_sum += doubled_mid * id_in_block;
        start = end;
    }
    let (n, m) = (id.len() as u128, ood.len() as u128);
    // 2U = 2 * rank_sum - n(n+1); AUROC = 2U / (2nm)
    let doubled_u = doubled_rank_sum - n * (n + 1);
    Ok(doubled_u as f64 / (2 * n * m) as f64)
}

/// Number of ID samples that must pass for a TPR target.
pub fn required_passes(n_id: usize, tpr_target: f64) -> Result<usize> {
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(OodError::Config(format!(
            "TPR target must lie in (0, 1], got {tpr_target}"
        )));
    }
    // The tolerance keeps products such as 0.95 * 20 from rounding up.
    let need = (tpr_target * n_id as f64 - 1e-9).ceil() as usize;
    Ok(need.clamp(1, n_id))
}

/// FPR when the ID true-positive rate first reaches `tpr_target`.
///
/// `lambda` is the `ceil(tpr_target * n_id)`-th largest ID score, the largest
/// threshold at which enough ID scores satisfy `score >= lambda`. Returns
/// `(fpr, lambda)`.
pub fn fpr_at_tpr(id: &[f64], ood: &[f64], tpr_target: f64) -> Result<(f64, f64)> {
    check_populations(id, ood)?;
    let need = required_passes(id.len(), tpr_target)?;
    let mut sorted = id.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let lambda = sorted[need - 1];
    let false_pos = ood.iter().filter(|&&s| s >= lambda).count();
    Ok((false_pos as f64 / ood.len() as f64, lambda))
}

/// Summary of one ID-versus-OOD evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub auroc: f64,
    pub fpr95: f64,
    pub threshold: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

impl EvalReport {
    pub fn compute(id: &[f64], ood: &[f64]) -> Result<Self> {
        Self::compute_at(id, ood, DEFAULT_TPR)
    }

    /// Same as [`EvalReport::compute`] at a custom TPR target; the `fpr95`
    /// field then holds the FPR at that target.
    pub fn compute_at(id: &[f64], ood: &[f64], tpr_target: f64) -> Result<Self> {
        let (fpr95, threshold) = fpr_at_tpr(id, ood, tpr_target)?;
        Ok(Self {
            auroc: auroc(id, ood)?,
            fpr95,
            threshold,
            n_id: id.len(),
            n_ood: ood.len(),
        })
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(OodError::shape(
            "two samples of equal length >= 2",
            format!("lengths {} and {}", a.len(), b.len()),
        ));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(OodError::Numerical("constant sample has no rank correlation".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}
