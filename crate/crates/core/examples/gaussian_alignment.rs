//! At p = 2 the score ranks points like the log mixture density
//! `log sum_k exp(-||z - mu_k||^2 / 2)` computed from the sample means.

use oodkit::density::{fit_prototypes, ConjNormScorer, PartitionEstimate};
use oodkit::math::{log_sum_exp, NormCoefficient};
use oodkit::metrics::spearman;
use oodkit::synth::{sample_synthetic, sample_uniform_box, SynthCase, SynthSpec};

fn main() -> oodkit::Result<()> {
    let train = sample_synthetic(&SynthSpec::new(SynthCase::gaussian_mixture(), 4000, 1))?;
    let model = fit_prototypes(&train.features, &train.labels, NormCoefficient::new(2.0)?)?
        .with_partition(PartitionEstimate::SelfNormalized);
    let scorer = ConjNormScorer::new(&model, None)?;
    let probe = sample_uniform_box(1000, 2, -2.0, 14.0, 2)?;
    let scores = scorer.score_all(&probe)?;
    let oracle: Vec<f64> = probe
        .iter_rows()
        .map(|z| {
            let terms: Vec<f64> = (0..model.n_classes())
                .map(|k| -0.5 * z.iter().zip(model.mean(k)).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .collect();
            log_sum_exp(&terms)
        })
        .collect();
    let max_gap = scores.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("Spearman {:.6}, max |score - oracle| {max_gap:.2e}", spearman(&scores, &oracle)?);

    let truth: Vec<f64> = probe.iter_rows().map(|z| train.density.log_pdf(z)).collect();
    println!("Spearman against the true mixture density {:.4}", spearman(&scores, &truth)?);
    Ok(())
}
