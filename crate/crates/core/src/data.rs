use crate::error::{OodError, Result};

/// Label used for unlabeled or out-of-distribution rows.
pub const UNLABELED: i32 = -1;

/// Dense row-major `N x d` matrix of feature embeddings (one row per sample).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(OodError::shape(
                format!("{rows}x{cols} = {} values", rows.saturating_mul(cols)),
                format!("{} values", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(OodError::Data(format!(
                "non-finite value at row {}, column {}",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(OodError::shape(
                    format!("{cols} columns"),
                    format!("{} columns in row {i}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Rows selected by `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols && !self.is_empty() && !other.is_empty() {
            return Err(OodError::shape(
                format!("{} columns", self.cols),
                format!("{} columns", other.cols),
            ));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self {
            rows: self.rows + other.rows,
            cols: self.cols.max(other.cols),
            data,
        })
    }

    /// Copy with every row scaled to unit l2 norm. Zero rows stay zero.
    pub fn unit_normalized(&self) -> Self {
        let mut out = self.clone();
        for i in 0..out.rows {
            normalize_in_place(out.row_mut(i));
        }
        out
    }

    pub(crate) fn check_cols(&self, cols: usize) -> Result<()> {
        if self.cols != cols {
            return Err(OodError::shape(
                format!("{cols} feature columns"),
                format!("{} feature columns", self.cols),
            ));
        }
        Ok(())
    }
}

pub(crate) fn normalize_in_place(v: &mut [f64]) {
    let n = crate::math::lp_norm_unchecked(v, 2.0);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Checks that `labels` has one entry per feature row.
pub(crate) fn check_labels(features: &FeatureMatrix, labels: &[i32]) -> Result<()> {
    if labels.len() != features.rows() {
        return Err(OodError::shape(
            format!("{} labels", features.rows()),
            format!("{} labels", labels.len()),
        ));
    }
    Ok(())
}

/// Drops rows whose label is in `excluded`, e.g. auxiliary outliers that
/// share a class with the in-distribution data.
pub fn exclude_labels(
    features: &FeatureMatrix,
    labels: &[i32],
    excluded: &[i32],
) -> Result<(FeatureMatrix, Vec<i32>)> {
    check_labels(features, labels)?;
    let keep: Vec<usize> = (0..labels.len())
        .filter(|&i| !excluded.contains(&labels[i]))
        .collect();
    let kept_labels = keep.iter().map(|&i| labels[i]).collect();
    Ok((features.select_rows(&keep), kept_labels))
}
