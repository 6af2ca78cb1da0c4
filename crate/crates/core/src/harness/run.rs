//! Seeded experiment runs and their output directories.
//!
//! A run directory holds `config.txt` (the resolved configuration),
//! `metrics.csv`, and `VERSION`. PDE runs may add `grid.bin`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::config::{DataSource, Estimator, ExperimentConfig, Task};
use super::data::{load_mnist_dir, synth_dataset, Dataset, SynthSpec};
use super::study::{family_name, variance_vs_depth};
use crate::error::{Error, Result};
use crate::graph::{build_graph_family, write_graph};
use crate::memory;
use crate::nn::noise::select;
use crate::nn::{Architecture, Batch, Model, RecurrentSpec, Strategy, StrategyKind};
use crate::optim::Optimizer;
use crate::pde::{self, GradientMethod, Problem, Snapshot};
use crate::rng;

pub const VERSION_STAMP: &str = concat!("radiff ", env!("CARGO_PKG_VERSION"));
pub const CONFIG_FILE: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const VERSION_FILE: &str = "VERSION";
pub const SNAPSHOT_FILE: &str = "grid.bin";

const EVAL_CHUNK: usize = 500;

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub seed: u64,
    /// Data rows written to the metrics CSV.
    pub rows: usize,
    /// Loss in the first and last rows (train loss for networks, variance
    /// for the graph study).
    pub first_loss: f64,
    pub final_loss: f64,
}

struct Metrics<W: Write> {
    csv: csv::Writer<W>,
    rows: usize,
    first: f64,
    last: f64,
}

impl<W: Write> Metrics<W> {
    fn new(out: W, header: &[&str]) -> Result<Self> {
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record(header)?;
        Ok(Self { csv, rows: 0, first: f64::NAN, last: f64::NAN })
    }

    fn row(&mut self, loss: f64, fields: &[String]) -> Result<()> {
        self.csv.write_record(fields)?;
        if self.rows == 0 {
            self.first = loss;
        }
        self.last = loss;
        self.rows += 1;
        Ok(())
    }
}

fn logged(it: usize, every: usize, last: usize) -> bool {
    it == last || (every > 0 && it % every == 0) || it == 0
}

/// Runs one experiment and writes its directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    let cfg = config.resolved();
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join(CONFIG_FILE), cfg.to_text())?;
    fs::write(cfg.out.join(VERSION_FILE), format!("{VERSION_STAMP}\n"))?;
    let file = BufWriter::new(File::create(cfg.out.join(METRICS_FILE))?);
    let mut m = match cfg.task {
        Task::Pde => Metrics::new(file, &["iteration", "loss", "fraction", "stored_bytes"])?,
        Task::GraphStudy => Metrics::new(
            file,
            &["family", "depth", "width", "k", "paths", "gradient", "empirical_variance", "exact_variance", "draws"],
        )?,
        _ => Metrics::new(
            file,
            &["iteration", "train_loss", "test_loss", "train_acc", "test_acc", "bytes_per_element"],
        )?,
    };
    let result = match cfg.task {
        Task::Pde => run_pde(&cfg, &mut m),
        Task::GraphStudy => run_graph_study(&cfg, &mut m),
        _ => run_network(&cfg, &mut m),
    };
    // Rows logged before a failure stay on disk.
    m.csv.flush()?;
    result?;
    Ok(RunSummary { dir: cfg.out.clone(), seed: cfg.seed, rows: m.rows, first_loss: m.first, final_loss: m.last })
}

/// Runs seeds `seed .. seed + repeats` in parallel, each under
/// `out/seed-<n>`, and writes `out/summary.csv` in seed order.
pub fn run_repeats(config: &ExperimentConfig, repeats: usize) -> Result<Vec<RunSummary>> {
    let runs = (0..repeats as u64)
        .into_par_iter()
        .map(|r| {
            let seed = config.seed + r;
            let cfg = ExperimentConfig { seed, out: config.out.join(format!("seed-{seed}")), ..config.clone() };
            run_experiment(&cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_path(config.out.join("summary.csv"))?;
    w.write_record(["seed", "rows", "first_loss", "final_loss", "dir"])?;
    for r in &runs {
        w.write_record([
            r.seed.to_string(),
            r.rows.to_string(),
            r.first_loss.to_string(),
            r.final_loss.to_string(),
            r.dir.display().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(runs)
}

/// Training and test data for a network task.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Idx(dir) => load_mnist_dir(dir, cfg.train_size, cfg.test_size),
        DataSource::Synthetic => {
            let spec = match cfg.task {
                Task::Convnet => SynthSpec::cifar_like(cfg.image_side, cfg.train_size, cfg.test_size),
                _ => SynthSpec::mnist_like(cfg.train_size, cfg.test_size),
            };
            synth_dataset(&spec, cfg.data_seed)
        }
    }
}

pub fn architecture(cfg: &ExperimentConfig, data: &Dataset) -> Result<Architecture> {
    match cfg.task {
        Task::Mlp => Ok(Architecture::mlp(data.shape.len(), &cfg.hidden, data.classes)),
        Task::Convnet => Ok(Architecture::convnet(data.shape, cfg.maps, data.classes)),
        Task::Rnn => {
            let len = data.shape.len();
            if cfg.seq_len == 0 || len % cfg.seq_len != 0 {
                return Err(Error::InvalidParameter(format!("seq_len {} does not divide input length {len}", cfg.seq_len)));
            }
            Ok(Architecture::Recurrent(RecurrentSpec {
                seq_len: cfg.seq_len,
                input_dim: len / cfg.seq_len,
                hidden: cfg.rnn_hidden,
                classes: data.classes,
            }))
        }
        t => Err(Error::InvalidParameter(format!("task `{}` has no network", t.name()))),
    }
}

/// Mini-batch size actually trained with: reduced-batch runs shrink `batch`
/// to the activation memory of different-sample at the same fraction.
pub fn effective_batch(cfg: &ExperimentConfig, arch: &Architecture) -> Result<usize> {
    if cfg.strategy == StrategyKind::ReducedBatch {
        memory::matched_batch(arch, &Strategy::new(StrategyKind::DifferentSample, cfg.fraction)?, cfg.batch)
    } else {
        Ok(cfg.batch)
    }
}

fn head(b: &Batch, n: usize) -> Result<Batch> {
    let idx: Vec<usize> = (0..n.clamp(1, b.len())).collect();
    select(b, &idx)
}

/// Mean loss and accuracy, evaluated in chunks.
pub fn evaluate_chunked(model: &Model, data: &Batch) -> Result<(f64, f64)> {
    let (mut loss, mut acc) = (0.0, 0.0);
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_CHUNK).min(data.len());
        let (l, a) = model.evaluate(&select(data, &(start..end).collect::<Vec<_>>())?)?;
        let w = (end - start) as f64 / data.len() as f64;
        loss += w * l;
        acc += w * a;
        start = end;
    }
    Ok((loss, acc))
}

fn run_network<W: Write>(cfg: &ExperimentConfig, m: &mut Metrics<W>) -> Result<()> {
    let data = load_dataset(cfg)?;
    let arch = architecture(cfg, &data)?;
    let strategy = Strategy::new(cfg.strategy, cfg.fraction)?.with_timestep_resampling(cfg.resample_per_timestep);
    let batch = effective_batch(cfg, &arch)?;
    let bytes = memory::estimate(&arch, &strategy, 1)?.per_element.bytes();
    let mut model = Model::new(&arch, &mut rng::stream(cfg.seed, 0))?;
    let mut order_rng = rng::stream(cfg.seed, 1);
    let mut grad_rng = rng::stream(cfg.seed, 2);
    let mut opt = Optimizer::new(cfg.optimizer_config());
    let eval_train = head(&data.train, cfg.eval_size)?;
    let eval_test = head(&data.test, cfg.eval_size)?;
    let mut order: Vec<usize> = Vec::new();
    for it in 0..=cfg.iters {
        if logged(it, cfg.log_every, cfg.iters) {
            let (tl, ta) = evaluate_chunked(&model, &eval_train)?;
            let (vl, va) = evaluate_chunked(&model, &eval_test)?;
            m.row(tl, &[it.to_string(), tl.to_string(), vl.to_string(), ta.to_string(), va.to_string(), bytes.to_string()])?;
        }
        if it == cfg.iters {
            break;
        }
        // Epoch-wise shuffling without replacement.
        let mut idx = Vec::with_capacity(batch);
        while idx.len() < batch {
            if order.is_empty() {
                order = (0..data.train.len()).collect();
                order.shuffle(&mut order_rng);
            }
            idx.push(order.pop().expect("refilled"));
        }
        let (_, g) = model.gradient(&select(&data.train, &idx)?, &strategy, &mut grad_rng)?;
        opt.step(model.param_slots(), &g.blocks)?;
    }
    Ok(())
}

fn run_pde<W: Write>(cfg: &ExperimentConfig, m: &mut Metrics<W>) -> Result<()> {
    let sim = cfg.simulation();
    let problem = Problem::new(sim)?;
    let mut theta = problem.initial_theta(cfg.theta_range, &mut rng::stream(cfg.seed, 0));
    let method = match cfg.estimator {
        Estimator::Exact => GradientMethod::Exact,
        Estimator::Randomized => GradientMethod::Randomized { fraction: cfg.fraction, injection: cfg.injection },
    };
    let sample_seed = rng::stream(cfg.seed, 1).random();
    pde::train_with(&problem, &mut theta, method, cfg.iters, cfg.optimizer_config(), sample_seed, |r| {
        if logged(r.iteration, cfg.log_every, cfg.iters) {
            m.row(r.loss, &[r.iteration.to_string(), r.loss.to_string(), r.fraction.to_string(), r.stored_bytes.to_string()])?;
        }
        Ok(())
    })?;
    if cfg.snapshot_every > 0 {
        let traj = problem.simulate(&theta)?;
        let last = traj.fields.len() - 1;
        let snaps: Vec<Snapshot> = traj
            .fields
            .into_iter()
            .enumerate()
            .filter(|(s, _)| s % cfg.snapshot_every == 0 || *s == last)
            .map(|(s, field)| Snapshot { step: s as u32, time: problem.time(s), field })
            .collect();
        pde::write_snapshots(&sim, &snaps, BufWriter::new(File::create(cfg.out.join(SNAPSHOT_FILE))?))?;
    }
    Ok(())
}

fn run_graph_study<W: Write>(cfg: &ExperimentConfig, m: &mut Metrics<W>) -> Result<()> {
    if cfg.estimator == Estimator::Exact {
        return Err(Error::InvalidParameter("the graph study measures the path-sampling estimator".into()));
    }
    for r in variance_vs_depth(cfg.width, &cfg.depths, cfg.k, cfg.draws, cfg.edges, cfg.seed, cfg.joint)? {
        m.row(
            r.empirical_variance,
            &[
                family_name(r.family).to_string(),
                r.depth.to_string(),
                r.width.to_string(),
                r.k.to_string(),
                r.paths.to_string(),
                r.gradient.to_string(),
                r.empirical_variance.to_string(),
                r.exact_variance.map_or(String::new(), |v| v.to_string()),
                r.draws.to_string(),
            ],
        )?;
    }
    Ok(())
}

/// Writes the configured graph family at the first configured depth.
pub fn dump_graph<W: Write>(cfg: &ExperimentConfig, out: W) -> Result<()> {
    let depth = *cfg.depths.first().ok_or_else(|| Error::InvalidParameter("no depth configured".into()))?;
    let graph = build_graph_family(cfg.family, cfg.width, depth, cfg.edges, cfg.seed)?;
    write_graph(&graph, out)
}

/// Training-memory table for the reference nets at `batch`, as CSV.
pub fn memory_report<W: Write>(batch: usize, out: W) -> Result<()> {
    memory::write_table_csv(&memory::table1(&memory::TABLE_FRACTIONS, batch)?, out)
}

/// Reads a config file.
pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_text(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(task: Task, dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            task,
            iters: 6,
            log_every: 2,
            batch: 8,
            train_size: 40,
            test_size: 20,
            eval_size: 20,
            hidden: vec![12],
            maps: [2, 2, 2, 2],
            image_side: 8,
            seq_len: 28,
            rnn_hidden: 6,
            draws: 50,
            depths: vec![1, 2],
            out: dir.to_path_buf(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn run_directory_contents() {
        let dir = tempfile::tempdir().unwrap();
        for task in [Task::Mlp, Task::Convnet, Task::Rnn, Task::GraphStudy] {
            let out = dir.path().join(task.name());
            let s = run_experiment(&small(task, &out)).unwrap();
            assert!(s.rows > 0);
            for f in [CONFIG_FILE, METRICS_FILE, VERSION_FILE] {
                assert!(out.join(f).exists(), "{task:?} {f}");
            }
            let back = read_config(&out.join(CONFIG_FILE)).unwrap();
            assert_eq!(back, small(task, &out).resolved());
        }
    }

    #[test]
    fn iteration_zero_loss_is_strategy_independent() {
        let dir = tempfile::tempdir().unwrap();
        let first = |kind: StrategyKind| {
            let out = dir.path().join(kind.name());
            let cfg = ExperimentConfig { strategy: kind, ..small(Task::Mlp, &out) };
            run_experiment(&cfg).unwrap().first_loss
        };
        assert_eq!(first(StrategyKind::Baseline), first(StrategyKind::DifferentSample));
    }

    #[test]
    fn pde_run_with_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            task: Task::Pde,
            iters: 30,
            log_every: 10,
            dx: Some(0.125),
            t_end: Some(0.5),
            snapshot_every: 10,
            out: dir.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        let s = run_experiment(&cfg).unwrap();
        assert_eq!(s.rows, 4);
        assert!(s.final_loss < s.first_loss);
        let (n, _, _, snaps) = pde::read_snapshots(File::open(dir.path().join(SNAPSHOT_FILE)).unwrap()).unwrap();
        assert_eq!(n, 7);
        assert!(snaps.len() >= 2);
    }

    #[test]
    fn failed_run_keeps_partial_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            task: Task::Mlp,
            lr: Some(f64::INFINITY),
            ..small(Task::Mlp, dir.path())
        };
        assert!(run_experiment(&cfg).is_err());
        let text = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn repeats_merge_in_seed_order() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { seed: 4, ..small(Task::GraphStudy, dir.path()) };
        let runs = run_repeats(&cfg, 3).unwrap();
        assert_eq!(runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![4, 5, 6]);
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 4);
    }
}
