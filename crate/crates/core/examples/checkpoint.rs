//! Saves a model to the binary checkpoint format and reads it back.

use std::fs::File;
use std::io::{BufReader, BufWriter};

use radiff::nn::checkpoint::{read_checkpoint, write_checkpoint};
use radiff::nn::{Architecture, Model};
use radiff::rng;

fn main() -> radiff::Result<()> {
    let model = Model::new(&Architecture::mlp(784, &[300, 300, 300], 10), &mut rng::seeded(3))?;
    let path = std::env::temp_dir().join("radiff-example.ckpt");
    write_checkpoint(&model, BufWriter::new(File::create(&path)?))?;
    let size = std::fs::metadata(&path)?.len();
    let back = read_checkpoint(BufReader::new(File::open(&path)?))?;
    println!("{} bytes written to {}; identical after reload: {}", size, path.display(), back == model);
    std::fs::remove_file(path)?;
    Ok(())
}
