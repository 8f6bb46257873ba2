//! Conjugate exponents, the potential and its divergence on a few vectors.

use oodkit::math::{bregman_divergence, conjugate_exponent, lp_norm, phi, phi_gradient};

fn main() -> oodkit::Result<()> {
    for p in [1.5, 2.0, 3.0] {
        println!("p = {p}  ->  q = {:.6}", conjugate_exponent(p)?);
    }

    let z = [1.0, -2.0, 0.5];
    let mu = [0.5, -1.0, 0.0];
    let q = 3.0;
    println!("||z||_q = {:.6}", lp_norm(&z, q)?);
    println!("phi(z) = {:.6}", phi(&z, q)?);
    println!("grad phi(z) = {:?}", phi_gradient(&z, q)?);
    println!("d(z, mu) = {:.6}", bregman_divergence(&z, &mu, q)?);
    println!("d(z, z) = {:.6}", bregman_divergence(&z, &z, q)?);

    // At q = 2 the divergence is half the squared distance.
    let half_sq: f64 = z.iter().zip(&mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 2.0;
    println!("q = 2: d = {:.6}, half squared distance = {half_sq:.6}", bregman_divergence(&z, &mu, 2.0)?);
    Ok(())
}
