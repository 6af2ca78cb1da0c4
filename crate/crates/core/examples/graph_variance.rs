//! Path-sampling variance against depth on independent-path and fully
//! interleaved graph families.

use radiff::graph::EdgeDistribution;
use radiff::harness::{study::family_name, variance_vs_depth};

fn main() -> radiff::Result<()> {
    let rows = variance_vs_depth(3, &[1, 2, 4, 6, 8], 1, 20_000, EdgeDistribution::RandomSign, 0, true)?;
    println!("{:<18} {:>5} {:>12} {:>14}", "family", "depth", "paths", "variance");
    for r in rows {
        println!("{:<18} {:>5} {:>12} {:>14.4e}", family_name(r.family), r.depth, r.paths, r.empirical_variance);
    }
    Ok(())
}
