//! Exact reverse mode, the path sum, and the path-sampling estimator on a
//! small scalar function.

use ndarray::array;
use radiff::graph::example_function_graph;
use radiff::path_sampler::{estimator_moments_exact, rad_gradient_path_sampling};
use radiff::rng;

fn main() -> radiff::Result<()> {
    let mut g = example_function_graph();
    let f = g.forward(&[array![0.5], array![1.0]])?;
    let exact = g.input_gradients()?;
    println!("f(0.5, 1.0) = {f:.6}");
    println!("reverse mode: df/dx1 = {:.6}, df/dx2 = {:.6}", exact[0][0], exact[1][0]);
    for (i, &v) in g.inputs().iter().enumerate() {
        let s = g.path_sum_bruteforce(v, 1000)?;
        println!("path sum over {} paths from x{}: {:.6}", g.count_paths(v), i + 1, s[0]);
    }

    let inputs = g.inputs().to_vec();
    for k in [1, 2, 4] {
        let n = 20_000;
        let mut r = rng::seeded(k as u64);
        let mut mean = [0.0; 2];
        for _ in 0..n {
            let est = rad_gradient_path_sampling(&g, &inputs, k, &mut r)?;
            mean[0] += est[0][0] / n as f64;
            mean[1] += est[1][0] / n as f64;
        }
        let m = estimator_moments_exact(&g, k, 1_000_000)?;
        println!(
            "k={k}: sample mean ({:.4}, {:.4}) over {n} draws; exact variance ({:.4}, {:.4})",
            mean[0], mean[1], m[0].variance[0], m[1].variance[0]
        );
    }
    Ok(())
}
