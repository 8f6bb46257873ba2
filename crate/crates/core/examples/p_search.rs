//! Sweeps the norm exponent, then holds p fixed and sweeps q.

use oodkit::search::{sweep_p, sweep_q_fixed_p, EstimatorConfig, Grid, SelectionMetric, SweepData};
use oodkit::synth::{sample_synthetic, sample_uniform_box, SynthCase, SynthSpec};

fn main() -> oodkit::Result<()> {
    let case = SynthCase::IsotropicBlobs { n_classes: 4, dim: 8, center_scale: 2.0, cluster_std: 1.0 };
    let all = sample_synthetic(&SynthSpec::new(case, 2000, 81))?;
    let fit: Vec<usize> = (0..1500).collect();
    let held: Vec<usize> = (1500..2000).collect();
    let train = all.features.select_rows(&fit);
    let id_eval = all.features.select_rows(&held);
    let aux = sample_uniform_box(500, 8, -6.0, 6.0, 82)?;
    let data = SweepData { train: &train, train_labels: &all.labels[..1500], id_eval: &id_eval, aux_ood: &aux };
    let est = EstimatorConfig::default();

    let result = sweep_p(&data, &Grid::DEFAULT_P.values(), &est, SelectionMetric::Fpr95)?;
    for row in &result.rows {
        println!("p={:<4} AUROC {:.4}  FPR95 {:.4}", row.value, row.report.auroc, row.report.fpr95);
    }
    println!("best p = {}", result.best_value);

    let mut q_grid = Grid::new(1.2, 3.0, 0.2)?.values();
    q_grid.push(5.0 / 3.0);
    q_grid.sort_by(f64::total_cmp);
    let q = sweep_q_fixed_p(&data, 2.5, &q_grid, &est, SelectionMetric::Fpr95)?;
    for row in &q.rows {
        let mark = if row.conjugate { "  <- conjugate" } else { "" };
        println!("q={:.4} FPR95 {:.4}{mark}", row.value, row.report.fpr95);
    }
    println!("best q = {:.4}", q.best_value);
    Ok(())
}
