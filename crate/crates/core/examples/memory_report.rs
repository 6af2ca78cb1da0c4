//! Per-element activation memory of the reference networks and the
//! training-memory table at batch 150.

use radiff::memory::{estimate, matched_batch, table1, write_table_csv, TABLE_FRACTIONS};
use radiff::nn::{Architecture, Strategy, StrategyKind};

fn main() -> radiff::Result<()> {
    let rad = Strategy::new(StrategyKind::DifferentSample, 0.1)?;
    for (name, arch) in [
        ("MLP", Architecture::mnist_mlp()),
        ("ConvNet", Architecture::cifar_convnet()),
        ("IRNN", Architecture::sequential_mnist_irnn()),
    ] {
        let base = estimate(&arch, &Strategy::baseline(), 1)?;
        let r = estimate(&arch, &rad, 1)?;
        println!(
            "{name:<8} per element: baseline {:.3} kB, f=0.1 {:.3} kB; matched reduced batch {}",
            base.per_element.kilobytes(),
            r.per_element.kilobytes(),
            matched_batch(&arch, &rad, 150)?
        );
        for l in &r.layers {
            println!("    {:<10} {:>10.1} B", l.name, l.per_element.bytes());
        }
    }
    println!();
    write_table_csv(&table1(&TABLE_FRACTIONS, 150)?, std::io::stdout().lock())
}
