//! Grid search over the norm exponent.
//!
//! Each grid point refits the partition estimate for a new exponent (the
//! class means do not depend on it), scores held-out ID rows and auxiliary
//! outliers, and evaluates the pair. The table comes back in grid order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::FeatureMatrix;
use crate::density::{
    estimate_partition_is, estimate_partition_kde, ConjNormScorer, Kernel, PartitionEstimate,
    PrototypeModel,
};
use crate::error::{OodError, Result};
use crate::math::{conjugate_exponent, NormCoefficient};
use crate::metrics::EvalReport;

/// Evenly spaced values `start, start + step, ..., <= stop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    /// The default exponent grid over `(1, 3]`.
    pub const DEFAULT_P: Grid = Grid {
        start: 1.1,
        stop: 3.0,
        step: 0.1,
    };

    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return Err(OodError::Config("grid bounds must be finite".into()));
        }
        if stop < start {
            return Err(OodError::Config(format!("grid stop {stop} is below start {start}")));
        }
        if !(step > 0.0) && stop > start {
            return Err(OodError::Config(format!("grid step must be > 0, got {step}")));
        }
        Ok(Self { start, stop, step })
    }

    /// Grid values rounded to 12 decimals so that `1.1 + 2 * 0.1` prints as
    /// `1.3`.
    pub fn values(&self) -> Vec<f64> {
        if self.stop == self.start || !(self.step > 0.0) {
            return vec![self.start];
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| round12(self.start + i as f64 * self.step))
            .collect()
    }
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

impl FromStr for Grid {
    type Err = OodError;

    /// Parses `start:stop:step`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(OodError::Config(format!("grid '{s}' is not start:stop:step")));
        }
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| OodError::Config(format!("grid '{s}': bad number '{t}'")))
        };
        Grid::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionMetric {
    #[default]
    Fpr95,
    Auroc,
}

impl SelectionMetric {
    pub fn name(self) -> &'static str {
        match self {
            SelectionMetric::Fpr95 => "fpr95",
            SelectionMetric::Auroc => "auroc",
        }
    }

    /// True if `a` is strictly better than `b`.
    fn better(self, a: &EvalReport, b: &EvalReport) -> bool {
        match self {
            SelectionMetric::Fpr95 => a.fpr95 < b.fpr95,
            SelectionMetric::Auroc => a.auroc > b.auroc,
        }
    }

    fn tied(self, a: &EvalReport, b: &EvalReport) -> bool {
        match self {
            SelectionMetric::Fpr95 => a.fpr95 == b.fpr95,
            SelectionMetric::Auroc => a.auroc == b.auroc,
        }
    }
}

impl FromStr for SelectionMetric {
    type Err = OodError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fpr95" | "FPR95" => Ok(SelectionMetric::Fpr95),
            "auroc" | "AUROC" => Ok(SelectionMetric::Auroc),
            other => Err(OodError::Config(format!("unknown metric '{other}'"))),
        }
    }
}

/// Which partition estimator to fit at each grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorConfig {
    SelfNormalized,
    ImportanceSampling { alpha: f64, seed: u64 },
    Kde { bandwidth: Option<f64>, kernel: Kernel },
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig::ImportanceSampling {
            alpha: 0.1,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn estimate(
        &self,
        model: &PrototypeModel,
        train: &FeatureMatrix,
        labels: &[i32],
    ) -> Result<PartitionEstimate> {
        match *self {
            EstimatorConfig::SelfNormalized => Ok(PartitionEstimate::SelfNormalized),
            EstimatorConfig::ImportanceSampling { alpha, seed } => {
                estimate_partition_is(model, train, alpha, seed)
            }
            EstimatorConfig::Kde { bandwidth, kernel } => {
                estimate_partition_kde(model, train, labels, bandwidth, kernel)
            }
        }
    }

    pub fn needs_training_data_at_score_time(&self) -> bool {
        matches!(self, EstimatorConfig::Kde { .. })
    }
}

/// Inputs shared by every grid point.
#[derive(Debug, Clone, Copy)]
pub struct SweepData<'a> {
    pub train: &'a FeatureMatrix,
    pub train_labels: &'a [i32],
    pub id_eval: &'a FeatureMatrix,
    pub aux_ood: &'a FeatureMatrix,
}

impl SweepData<'_> {
    fn validate(&self) -> Result<()> {
        if self.aux_ood.is_empty() {
            return Err(OodError::Config("auxiliary OOD set is empty".into()));
        }
        if self.id_eval.is_empty() {
            return Err(OodError::Config("ID evaluation set is empty".into()));
        }
        let d = self.train.cols();
        self.id_eval.check_cols(d)?;
        self.aux_ood.check_cols(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweptParameter {
    P,
    Q,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub report: EvalReport,
    /// For q sweeps: this row is the conjugate of the fixed `p`.
    pub conjugate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub parameter: SweptParameter,
    pub metric: SelectionMetric,
    pub rows: Vec<SweepRow>,
    pub best_value: f64,
    /// Fixed `p` and its conjugate `q` for q sweeps.
    pub fixed_p: Option<f64>,
    pub conjugate_q: Option<f64>,
}

impl SweepResult {
    pub fn best_row(&self) -> &SweepRow {
        self.rows
            .iter()
            .find(|r| r.value == self.best_value)
            .expect("best value comes from the table")
    }
}

/// Index of the optimal row; ties go to the smaller grid value.
fn select_best(rows: &[SweepRow], metric: SelectionMetric) -> usize {
    let mut best = 0;
    for (i, row) in rows.iter().enumerate().skip(1) {
        let cur = &rows[best];
        if metric.better(&row.report, &cur.report)
            || (metric.tied(&row.report, &cur.report) && row.value < cur.value)
        {
            best = i;
        }
    }
    best
}

fn evaluate_model(
    model: PrototypeModel,
    data: &SweepData<'_>,
    estimator: &EstimatorConfig,
) -> Result<EvalReport> {
    let partition = estimator.estimate(&model, data.train, data.train_labels)?;
    let model = model.with_partition(partition);
    let training = estimator
        .needs_training_data_at_score_time()
        .then_some((data.train, data.train_labels));
    let scorer = ConjNormScorer::new(&model, training)?;
    let id = scorer.score_all(data.id_eval)?;
    let ood = scorer.score_all(data.aux_ood)?;
    EvalReport::compute(&id, &ood)
}

/// Evaluates each `p` in `grid` and picks the best under `metric`.
pub fn sweep_p(
    data: &SweepData<'_>,
    grid: &[f64],
    estimator: &EstimatorConfig,
    metric: SelectionMetric,
) -> Result<SweepResult> {
    data.validate()?;
    if grid.is_empty() {
        return Err(OodError::Config("empty grid".into()));
    }
    if let Some(&p) = grid.iter().find(|&&p| conjugate_exponent(p).is_err()) {
        return Err(OodError::Config(format!("grid value p = {p} must exceed 1")));
    }
    let base = PrototypeModel::fit_with_classes(
        data.train,
        data.train_labels,
        class_count(data.train_labels),
        NormCoefficient::new(grid[0])?,
    )?;
    let rows = grid
        .par_iter()
        .map(|&p| {
            let model = base.with_coefficient(NormCoefficient::new(p)?);
            Ok(SweepRow {
                value: p,
                report: evaluate_model(model, data, estimator)?,
                conjugate: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = select_best(&rows, metric);
    Ok(SweepResult {
        parameter: SweptParameter::P,
        metric,
        best_value: rows[best].value,
        rows,
        fixed_p: None,
        conjugate_q: None,
    })
}

/// Holds `p` fixed and evaluates the divergence with each (possibly
/// non-conjugate) `q` in `q_grid`.
pub fn sweep_q_fixed_p(
    data: &SweepData<'_>,
    p_fixed: f64,
    q_grid: &[f64],
    estimator: &EstimatorConfig,
    metric: SelectionMetric,
) -> Result<SweepResult> {
    data.validate()?;
    let coeff = NormCoefficient::new(p_fixed)
        .map_err(|_| OodError::Config(format!("fixed p = {p_fixed} must exceed 1")))?;
    if q_grid.is_empty() {
        return Err(OodError::Config("empty grid".into()));
    }
    if let Some(&q) = q_grid.iter().find(|&&q| !(q > 1.0) || !q.is_finite()) {
        return Err(OodError::Config(format!("grid value q = {q} must exceed 1")));
    }
    let conj = coeff.q();
    let base = PrototypeModel::fit_with_classes(
        data.train,
        data.train_labels,
        class_count(data.train_labels),
        coeff,
    )?;
    let rows = q_grid
        .par_iter()
        .map(|&q| {
            let model = base.with_q_override(q)?;
            Ok(SweepRow {
                value: q,
                report: evaluate_model(model, data, estimator)?,
                conjugate: is_conjugate(q, conj),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = select_best(&rows, metric);
    Ok(SweepResult {
        parameter: SweptParameter::Q,
        metric,
        best_value: rows[best].value,
        rows,
        fixed_p: Some(p_fixed),
        conjugate_q: Some(conj),
    })
}

/// Grid values are rounded to 12 decimals; match to within that.
fn is_conjugate(q: f64, conj: f64) -> bool {
    (q - conj).abs() <= 1e-9 * conj.max(1.0)
}

fn class_count(labels: &[i32]) -> usize {
    labels.iter().copied().max().map_or(0, |m| m + 1).max(0) as usize
}
