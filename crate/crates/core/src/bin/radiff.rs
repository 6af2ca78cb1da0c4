use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use radiff::harness::{self, ExperimentConfig};

/// Train with randomized reverse-mode gradients and write metrics CSV.
///
/// Settings come from the defaults, then `--config`, then `--set`, then the
/// named flags.
#[derive(Parser, Debug)]
#[command(name = "radiff", version)]
struct Cli {
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// mlp | convnet | rnn | pde | graph-study
    #[arg(long)]
    task: Option<String>,
    /// Shorthand for `--task pde`.
    #[arg(long)]
    pde: bool,
    /// baseline | same-sample | different-sample | project | different-project | reduced-batch
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    fraction: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    log_every: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    l2: Option<String>,
    #[arg(long)]
    decay_factor: Option<String>,
    #[arg(long)]
    decay_every: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// `synthetic` or a directory of MNIST IDX files.
    #[arg(long)]
    data: Option<String>,
    /// Samples per vertex for path sampling.
    #[arg(long)]
    k: Option<String>,
    /// exact | randomized (alias: path-sampling, rad)
    #[arg(long)]
    estimator: Option<String>,

    /// desk | full
    #[arg(long)]
    pde_preset: Option<String>,
    #[arg(long)]
    dx: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    t_end: Option<String>,
    /// independent | shared | identity
    #[arg(long)]
    injection: Option<String>,
    /// Write `grid.bin` with every n-th step of the final trajectory.
    #[arg(long)]
    snapshot_every: Option<String>,

    /// Run this many consecutive seeds in parallel.
    #[arg(long)]
    repeats: Option<usize>,
    /// Print the training-memory table as CSV and exit.
    #[arg(long)]
    memory_report: bool,
    /// Write the configured graph family in text form to this file and exit.
    #[arg(long, value_name = "PATH")]
    dump_graph: Option<PathBuf>,
}

fn configure(cli: &Cli) -> radiff::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => harness::read_config(p)?,
        None => ExperimentConfig::default(),
    };
    for s in &cli.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| radiff::Error::InvalidParameter(format!("`--set {s}` is not key=value")))?;
        cfg.set(k, v)?;
    }
    if cli.pde {
        cfg.set("task", "pde")?;
    }
    let flags = [
        ("task", &cli.task),
        ("strategy", &cli.strategy),
        ("fraction", &cli.fraction),
        ("batch", &cli.batch),
        ("iters", &cli.iters),
        ("log_every", &cli.log_every),
        ("lr", &cli.lr),
        ("l2", &cli.l2),
        ("decay_factor", &cli.decay_factor),
        ("decay_every", &cli.decay_every),
        ("seed", &cli.seed),
        ("out", &cli.out),
        ("data", &cli.data),
        ("k", &cli.k),
        ("estimator", &cli.estimator),
        ("pde_preset", &cli.pde_preset),
        ("dx", &cli.dx),
        ("dt", &cli.dt),
        ("t_end", &cli.t_end),
        ("injection", &cli.injection),
        ("snapshot_every", &cli.snapshot_every),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> radiff::Result<()> {
    let cfg = configure(&cli)?;
    if cli.memory_report {
        return harness::memory_report(cfg.batch, io::stdout().lock());
    }
    if let Some(path) = &cli.dump_graph {
        return harness::dump_graph(&cfg, BufWriter::new(File::create(path)?));
    }
    match cli.repeats {
        Some(n) if n > 1 => {
            for r in harness::run_repeats(&cfg, n)? {
                println!("seed {}: {} rows, loss {} -> {} ({})", r.seed, r.rows, r.first_loss, r.final_loss, r.dir.display());
            }
        }
        _ => {
            let r = harness::run_experiment(&cfg)?;
            println!("{} rows, loss {} -> {} ({})", r.rows, r.first_loss, r.final_loss, r.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("radiff: {e}");
            ExitCode::FAILURE
        }
    }
}
