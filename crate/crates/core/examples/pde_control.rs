//! Fits the reaction-diffusion control source with exact and randomized
//! gradients on the desk grid.

use radiff::optim::OptimizerConfig;
use radiff::pde::{train, GradientMethod, Injection, Problem, SimulationConfig};
use radiff::rng;

fn main() -> radiff::Result<()> {
    let cfg = SimulationConfig::desk();
    let problem = Problem::new(cfg)?;
    println!("{}×{} interior, {} steps, D·dt/dx² = {:.3}", cfg.interior(), cfg.interior(), cfg.steps(), cfg.ratio());
    let theta0 = problem.initial_theta(0.1, &mut rng::seeded(0));
    for (label, method) in [
        ("exact", GradientMethod::Exact),
        ("f=0.01 independent", GradientMethod::Randomized { fraction: 0.01, injection: Injection::Independent }),
        ("f=0.01 shared", GradientMethod::Randomized { fraction: 0.01, injection: Injection::Shared }),
        ("f=0.1 independent", GradientMethod::Randomized { fraction: 0.1, injection: Injection::Independent }),
    ] {
        let mut theta = theta0.clone();
        let rows = train(&problem, &mut theta, method, 200, OptimizerConfig::adam(0.03), 1)?;
        let last = rows.last().expect("rows");
        println!(
            "{label:<20} loss {:.4} -> {:.4}, stored {} kB per gradient",
            rows[0].loss,
            last.loss,
            last.stored_bytes as f64 / 1000.0
        );
    }
    Ok(())
}
