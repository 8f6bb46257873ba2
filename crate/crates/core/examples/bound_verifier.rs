//! Runs the three numerical verifiers: score gap bound, IS unbiasedness
//! and the gradient check.

use oodkit::synth::{verify_gradient, verify_is_unbiasedness, verify_t2_bound, SynthCase, SynthSpec};

fn main() -> oodkit::Result<()> {
    for (mu_out, q) in [([4.0, 0.0], 2.0), ([3.0, 3.0], 1.5), ([0.0, 6.0], 3.0)] {
        let r = verify_t2_bound(&[vec![0.0, 0.0]], &mu_out, q, 50_000, 1)?;
        println!(
            "q={q} mu_out={mu_out:?}: gap {:.4} +- {:.4}, bound {:.4}, verdict {}",
            r.gap, r.stderr, r.bound, r.verdict.name()
        );
    }

    let spec = SynthSpec::new(SynthCase::blobs(), 2000, 11);
    let r = verify_is_unbiasedness(&spec, 2.0, 0.1, 200, 0.02)?;
    println!("IS: {} samples, max deviation {:.4}, passed {}", r.n_samples, r.max_deviation, r.pass);

    let g = verify_gradient(2.5, 8, 50, 3, 1e-6)?;
    println!("gradient: max error {:.2e}, passed {}", g.max_error, g.pass);
    Ok(())
}
