//! Scores one ID and one far-away point with every baseline.

use oodkit::baselines::{energy_score, gem_score, knn_score, maha_score, msp_score, SharedCovariance};
use oodkit::density::fit_prototypes;
use oodkit::math::NormCoefficient;
use oodkit::synth::{sample_synthetic, SynthCase, SynthSpec};

fn main() -> oodkit::Result<()> {
    let logits = [3.0, 0.5, -1.0];
    println!("MSP {:.4}  energy(T=1) {:.4}", msp_score(&logits)?, energy_score(&logits, 1.0)?);

    let data = sample_synthetic(&SynthSpec::new(SynthCase::gaussian_mixture(), 2000, 3))?;
    let protos = fit_prototypes(&data.features, &data.labels, NormCoefficient::new(2.0)?)?;
    let cov = SharedCovariance::fit(&data.features, &data.labels, 1e-6)?;
    let unit = data.features.unit_normalized();

    for (name, z) in [("id", [4.0, 4.0]), ("far", [-10.0, 20.0])] {
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let z_unit = [z[0] / norm, z[1] / norm];
        println!(
            "{name}: maha {:.3}  gem {:.3}  knn(k=50) {:.4}",
            maha_score(&z, protos.means(), &cov)?,
            gem_score(&z, protos.means(), &cov)?,
            knn_score(&z_unit, &unit, 50)?,
        );
    }
    Ok(())
}
