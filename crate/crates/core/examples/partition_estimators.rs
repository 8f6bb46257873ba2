//! Fits class prototypes on synthetic blobs and compares the three
//! partition estimators on the same held-out split.

use oodkit::density::{
    estimate_partition_is, estimate_partition_kde, fit_prototypes, ConjNormScorer, Kernel,
    PartitionEstimate,
};
use oodkit::math::NormCoefficient;
use oodkit::metrics::EvalReport;
use oodkit::synth::{sample_synthetic, sample_uniform_box, SynthCase, SynthSpec};

fn main() -> oodkit::Result<()> {
    let case = SynthCase::IsotropicBlobs { n_classes: 4, dim: 8, center_scale: 2.0, cluster_std: 1.0 };
    let data = sample_synthetic(&SynthSpec::new(case, 2000, 7))?;
    let fit: Vec<usize> = (0..1500).collect();
    let held: Vec<usize> = (1500..2000).collect();
    let train = data.features.select_rows(&fit);
    let labels = &data.labels[..1500];
    let id_eval = data.features.select_rows(&held);
    let ood = sample_uniform_box(500, 8, -6.0, 6.0, 8)?;

    let model = fit_prototypes(&train, labels, NormCoefficient::new(2.2)?)?;
    let estimates = [
        ("sn", PartitionEstimate::SelfNormalized),
        ("is", estimate_partition_is(&model, &train, 0.1, 0)?),
        ("kde", estimate_partition_kde(&model, &train, labels, None, Kernel::Gaussian)?),
    ];
    for (name, estimate) in estimates {
        if let Some(log_phi) = (0..model.n_classes()).map(|k| estimate.log_phi(k)).collect::<Option<Vec<_>>>() {
            println!("{name}: log Phi = {log_phi:.3?}");
        }
        let fitted = model.clone().with_partition(estimate);
        let scorer = ConjNormScorer::new(&fitted, Some((&train, labels)))?;
        let report = EvalReport::compute(&scorer.score_all(&id_eval)?, &scorer.score_all(&ood)?)?;
        println!("{name}: AUROC {:.4}  FPR95 {:.4}", report.auroc, report.fpr95);
    }
    Ok(())
}
