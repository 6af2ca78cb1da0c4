//! Sketching a Jacobian with basis sampling and Rademacher projection.

use ndarray::Array2;
use rand::Rng;
use radiff::injection::{apply_right, reduced_dim, SamplingMatrix};
use radiff::rng;

fn main() -> radiff::Result<()> {
    let mut r = rng::seeded(7);
    let (m, d) = (8, 64);
    let j = Array2::from_shape_simple_fn((m, d), || r.random_range(-1.0..1.0));
    let k = reduced_dim(0.1, d)?;
    println!("J is {m}×{d}; keeping k = {k} columns or projections");

    for name in ["basis", "rademacher"] {
        let draws = 5000;
        let mut mean = Array2::<f64>::zeros((m, d));
        let mut bytes = 0;
        for _ in 0..draws {
            let p = if name == "basis" {
                SamplingMatrix::sample_basis(d, k, &mut r)?
            } else {
                SamplingMatrix::sample_rademacher(d, k, &mut r)?
            };
            let s = apply_right(j.view(), &p)?;
            bytes = s.byte_size();
            mean.scaled_add(1.0 / draws as f64, &s.reconstruct());
        }
        let err = (&mean - &j).iter().map(|x| x * x).sum::<f64>().sqrt() / j.iter().map(|x| x * x).sum::<f64>().sqrt();
        println!("{name:>10}: {bytes} stored bytes vs {} dense; relative error of the mean {err:.3}", 8 * m * d);
    }
    Ok(())
}
