//! Synthetic image data, and loading MNIST IDX files written to disk.
//!
//! Pass a directory with the four MNIST files to load the real digits:
//! `cargo run --release --example datasets /path/to/mnist`

use std::path::Path;

use radiff::harness::{load_idx, load_mnist_dir, synth_dataset, SynthSpec};

fn write_idx(dir: &Path, images: &[[u8; 4]], labels: &[u8]) -> std::io::Result<()> {
    let mut img = vec![0, 0, 8, 3];
    for n in [images.len() as u32, 2, 2] {
        img.extend(n.to_be_bytes());
    }
    images.iter().for_each(|i| img.extend(i));
    std::fs::write(dir.join("images.idx"), img)?;
    let mut lab = vec![0, 0, 8, 1];
    lab.extend((labels.len() as u32).to_be_bytes());
    lab.extend(labels);
    std::fs::write(dir.join("labels.idx"), lab)
}

fn main() -> radiff::Result<()> {
    let synth = synth_dataset(&SynthSpec::mnist_like(1000, 200), 0)?;
    let counts = (0..synth.classes).map(|c| synth.train.labels.iter().filter(|&&y| y == c).count()).collect::<Vec<_>>();
    println!("synthetic: {} train / {} test, shape {:?}, class counts {counts:?}", synth.train.len(), synth.test.len(), synth.shape);

    let dir = std::env::temp_dir().join(format!("radiff-idx-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    write_idx(&dir, &[[0, 255, 255, 0], [255, 0, 0, 255]], &[3, 7])?;
    let (batch, shape) = load_idx(&dir.join("images.idx"), &dir.join("labels.idx"))?;
    println!("idx fixture: {:?}, labels {:?}, first row {:?}", shape, batch.labels, batch.inputs.row(0).to_vec());
    std::fs::remove_dir_all(&dir)?;

    if let Some(mnist) = std::env::args().nth(1) {
        let d = load_mnist_dir(Path::new(&mnist), 10_000, 2_000)?;
        println!("mnist: {} train / {} test", d.train.len(), d.test.len());
    }
    Ok(())
}
