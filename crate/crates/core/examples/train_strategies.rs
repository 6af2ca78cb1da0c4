//! Trains a small MLP on synthetic digits with each gradient strategy and
//! reports the final losses and activation memory.
//!
//! `cargo run --release --example train_strategies [iters]`

use radiff::harness::{synth_dataset, SynthSpec};
use radiff::memory::{estimate, matched_batch};
use radiff::nn::noise::select;
use radiff::nn::{Architecture, Model, Strategy, StrategyKind};
use radiff::optim::{Optimizer, OptimizerConfig};
use radiff::rng;
use rand::Rng;

fn main() -> radiff::Result<()> {
    let iters: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let data = synth_dataset(&SynthSpec::mnist_like(3000, 500), 0)?;
    let arch = Architecture::mlp(784, &[128, 128], 10);
    let batch = 64;
    for kind in StrategyKind::ALL {
        let strategy = Strategy::new(kind, 0.1)?;
        let b = if kind == StrategyKind::ReducedBatch {
            matched_batch(&arch, &Strategy::new(StrategyKind::DifferentSample, 0.1)?, batch)?
        } else {
            batch
        };
        let mut model = Model::new(&arch, &mut rng::seeded(1))?;
        let mut opt = Optimizer::new(OptimizerConfig::adam(1e-3));
        let mut r = rng::seeded(2);
        for _ in 0..iters {
            let idx: Vec<usize> = (0..b).map(|_| r.random_range(0..data.train.len())).collect();
            let (_, g) = model.gradient(&select(&data.train, &idx)?, &strategy, &mut r)?;
            opt.step(model.param_slots(), &g.blocks)?;
        }
        let (loss, acc) = model.evaluate(&data.test)?;
        let mem = estimate(&arch, &strategy, b)?.activations;
        println!(
            "{:<18} batch {b:>3}  activations {:>8.1} kB  test loss {loss:.4}  acc {:.3}",
            kind.name(),
            mem.kilobytes(),
            acc
        );
    }
    Ok(())
}
