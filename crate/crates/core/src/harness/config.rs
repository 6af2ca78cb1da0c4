//! Experiment configuration and its `key = value` text form.
//!
//! One setting per line, UTF-8. Blank lines and lines starting with `#` are
//! ignored. Keys not listed in the file keep their defaults. Lists are
//! comma separated. Writing emits every key in a fixed order, so a written
//! file is the fully resolved configuration.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{EdgeDistribution, GraphFamily};
use crate::nn::StrategyKind;
use crate::optim::OptimizerConfig;
use crate::pde::{Injection, SimulationConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Mlp,
    Convnet,
    Rnn,
    Pde,
    GraphStudy,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Mlp => "mlp",
            Task::Convnet => "convnet",
            Task::Rnn => "rnn",
            Task::Pde => "pde",
            Task::GraphStudy => "graph-study",
        }
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "mlp" => Ok(Task::Mlp),
            "convnet" => Ok(Task::Convnet),
            "rnn" => Ok(Task::Rnn),
            "pde" => Ok(Task::Pde),
            "graph-study" => Ok(Task::GraphStudy),
            _ => Err(Error::InvalidParameter(format!("unknown task `{s}`"))),
        }
    }
}

/// Exact gradients or the task's randomized estimator (activation sampling,
/// PDE trajectory sampling, or path sampling).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    Exact,
    Randomized,
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "exact" => Ok(Estimator::Exact),
            "rad" | "randomized" | "path-sampling" => Ok(Estimator::Randomized),
            _ => Err(Error::InvalidParameter(format!("unknown estimator `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerChoice {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PdePreset {
    Desk,
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic,
    /// Directory holding MNIST-named IDX files.
    Idx(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub strategy: StrategyKind,
    pub fraction: f64,
    pub batch: usize,
    pub iters: usize,
    pub log_every: usize,
    pub optimizer: OptimizerChoice,
    /// Unset means the task default (1e-3 for networks, 0.03 for the PDE).
    pub lr: Option<f64>,
    pub l2: f64,
    pub decay_factor: f64,
    /// 0 disables step decay.
    pub decay_every: u64,
    pub seed: u64,
    pub out: PathBuf,

    pub data: DataSource,
    pub data_seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    /// Training elements used for the logged train loss.
    pub eval_size: usize,
    pub hidden: Vec<usize>,
    pub maps: [usize; 4],
    pub image_side: usize,
    pub seq_len: usize,
    pub rnn_hidden: usize,
    pub resample_per_timestep: bool,

    pub pde_preset: PdePreset,
    pub dx: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub injection: Injection,
    pub snapshot_every: usize,
    pub theta_range: f64,

    pub estimator: Estimator,
    pub k: usize,
    pub width: usize,
    pub depths: Vec<usize>,
    pub draws: usize,
    pub edges: EdgeDistribution,
    /// Redraw graph weights on every draw.
    pub joint: bool,
    /// Family written by the graph dump.
    pub family: GraphFamily,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Mlp,
            strategy: StrategyKind::DifferentSample,
            fraction: 0.1,
            batch: 150,
            iters: 2000,
            log_every: 100,
            optimizer: OptimizerChoice::Adam,
            lr: None,
            l2: 0.0,
            decay_factor: 1.0,
            decay_every: 0,
            seed: 0,
            out: PathBuf::from("runs/latest"),
            data: DataSource::Synthetic,
            data_seed: 0,
            train_size: 10_000,
            test_size: 2_000,
            eval_size: 2_000,
            hidden: vec![300, 300, 300],
            maps: [16, 32, 32, 32],
            image_side: 16,
            seq_len: 784,
            rnn_hidden: 100,
            resample_per_timestep: true,
            pde_preset: PdePreset::Desk,
            dx: None,
            dt: None,
            t_end: None,
            injection: Injection::Independent,
            snapshot_every: 0,
            theta_range: 0.1,
            estimator: Estimator::Randomized,
            k: 1,
            width: 3,
            depths: vec![2, 5, 10],
            draws: 10_000,
            edges: EdgeDistribution::RandomSign,
            joint: true,
            family: GraphFamily::FullyInterleaved,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("bad value `{v}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse(key, x)).collect()
}

fn parse_opt(key: &str, v: &str) -> Result<Option<f64>> {
    match v.trim() {
        "" | "auto" => Ok(None),
        x => parse(key, x).map(Some),
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_edges(v: &str) -> Result<EdgeDistribution> {
    let v = v.trim().to_ascii_lowercase();
    if v == "random-sign" || v == "random_sign" {
        return Ok(EdgeDistribution::RandomSign);
    }
    if let Some(rest) = v.strip_prefix("uniform:") {
        let b: Vec<f64> = parse_list("edges", rest)?;
        if let [low, high] = b[..] {
            return Ok(EdgeDistribution::Uniform { low, high });
        }
    }
    if let Some(c) = v.strip_prefix("constant:") {
        return Ok(EdgeDistribution::Constant(parse("edges", c)?));
    }
    Err(Error::InvalidParameter(format!("bad edge distribution `{v}`")))
}

fn edges_text(e: &EdgeDistribution) -> String {
    match e {
        EdgeDistribution::RandomSign => "random-sign".into(),
        EdgeDistribution::Uniform { low, high } => format!("uniform:{low},{high}"),
        EdgeDistribution::Constant(c) => format!("constant:{c}"),
    }
}

impl ExperimentConfig {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        let k = key.as_str();
        match k {
            "task" => self.task = v.parse()?,
            "strategy" => self.strategy = v.parse()?,
            "fraction" => self.fraction = parse(k, v)?,
            "batch" => self.batch = parse(k, v)?,
            "iters" => self.iters = parse(k, v)?,
            "log_every" => self.log_every = parse(k, v)?,
            "optimizer" => {
                self.optimizer = match v.to_ascii_lowercase().as_str() {
                    "adam" => OptimizerChoice::Adam,
                    "sgd" => OptimizerChoice::Sgd,
                    _ => return Err(Error::InvalidParameter(format!("unknown optimizer `{v}`"))),
                }
            }
            "lr" => self.lr = parse_opt(k, v)?,
            "l2" => self.l2 = parse(k, v)?,
            "decay_factor" => self.decay_factor = parse(k, v)?,
            "decay_every" => self.decay_every = parse(k, v)?,
            "seed" => self.seed = parse(k, v)?,
            "out" => self.out = PathBuf::from(v),
            "data" => {
                self.data = match v {
                    "synthetic" => DataSource::Synthetic,
                    _ => DataSource::Idx(PathBuf::from(v.strip_prefix("idx:").unwrap_or(v))),
                }
            }
            "data_seed" => self.data_seed = parse(k, v)?,
            "train_size" => self.train_size = parse(k, v)?,
            "test_size" => self.test_size = parse(k, v)?,
            "eval_size" => self.eval_size = parse(k, v)?,
            "hidden" => self.hidden = parse_list(k, v)?,
            "maps" => {
                let m: Vec<usize> = parse_list(k, v)?;
                self.maps = m
                    .try_into()
                    .map_err(|_| Error::InvalidParameter("`maps` needs four channel counts".into()))?;
            }
            "image_side" => self.image_side = parse(k, v)?,
            "seq_len" => self.seq_len = parse(k, v)?,
            "rnn_hidden" => self.rnn_hidden = parse(k, v)?,
            "resample_per_timestep" => self.resample_per_timestep = parse(k, v)?,
            "pde_preset" => {
                self.pde_preset = match v.to_ascii_lowercase().as_str() {
                    "desk" => PdePreset::Desk,
                    "full" => PdePreset::Full,
                    _ => return Err(Error::InvalidParameter(format!("unknown preset `{v}`"))),
                }
            }
            "dx" => self.dx = parse_opt(k, v)?,
            "dt" => self.dt = parse_opt(k, v)?,
            "t_end" => self.t_end = parse_opt(k, v)?,
            "injection" => self.injection = v.parse()?,
            "snapshot_every" => self.snapshot_every = parse(k, v)?,
            "theta_range" => self.theta_range = parse(k, v)?,
            "estimator" => self.estimator = v.parse()?,
            "k" => self.k = parse(k, v)?,
            "width" => self.width = parse(k, v)?,
            "depths" => self.depths = parse_list(k, v)?,
            "draws" => self.draws = parse(k, v)?,
            "edges" => self.edges = parse_edges(v)?,
            "joint" => self.joint = parse(k, v)?,
            "family" => {
                self.family = match v.to_ascii_lowercase().replace('_', "-").as_str() {
                    "independent-paths" => GraphFamily::IndependentPaths,
                    "fully-interleaved" => GraphFamily::FullyInterleaved,
                    _ => return Err(Error::InvalidParameter(format!("unknown graph family `{v}`"))),
                }
            }
            _ => return Err(Error::InvalidParameter(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses a config file on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected `key = value`, got `{line}`") })?;
            cfg.set(k, v).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let opt = |x: Option<f64>| x.map_or("auto".to_string(), |v| v.to_string());
        let data = match &self.data {
            DataSource::Synthetic => "synthetic".to_string(),
            DataSource::Idx(p) => format!("idx:{}", p.display()),
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("task", self.task.name().into());
        kv("strategy", self.strategy.name().into());
        kv("fraction", self.fraction.to_string());
        kv("batch", self.batch.to_string());
        kv("iters", self.iters.to_string());
        kv("log_every", self.log_every.to_string());
        kv("optimizer", if self.optimizer == OptimizerChoice::Adam { "adam" } else { "sgd" }.into());
        kv("lr", opt(self.lr));
        kv("l2", self.l2.to_string());
        kv("decay_factor", self.decay_factor.to_string());
        kv("decay_every", self.decay_every.to_string());
        kv("seed", self.seed.to_string());
        kv("out", self.out.display().to_string());
        kv("data", data);
        kv("data_seed", self.data_seed.to_string());
        kv("train_size", self.train_size.to_string());
        kv("test_size", self.test_size.to_string());
        kv("eval_size", self.eval_size.to_string());
        kv("hidden", join(&self.hidden));
        kv("maps", join(&self.maps));
        kv("image_side", self.image_side.to_string());
        kv("seq_len", self.seq_len.to_string());
        kv("rnn_hidden", self.rnn_hidden.to_string());
        kv("resample_per_timestep", self.resample_per_timestep.to_string());
        kv("pde_preset", if self.pde_preset == PdePreset::Desk { "desk" } else { "full" }.into());
        kv("dx", opt(self.dx));
        kv("dt", opt(self.dt));
        kv("t_end", opt(self.t_end));
        kv(
            "injection",
            match self.injection {
                Injection::Identity => "identity",
                Injection::Shared => "shared",
                Injection::Independent => "independent",
            }
            .into(),
        );
        kv("snapshot_every", self.snapshot_every.to_string());
        kv("theta_range", self.theta_range.to_string());
        kv("estimator", if self.estimator == Estimator::Exact { "exact" } else { "randomized" }.into());
        kv("k", self.k.to_string());
        kv("width", self.width.to_string());
        kv("depths", join(&self.depths));
        kv("draws", self.draws.to_string());
        kv("edges", edges_text(&self.edges));
        kv("joint", self.joint.to_string());
        kv("family", crate::harness::study::family_name(self.family).into());
        s
    }

    /// Fills task-dependent defaults.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if c.lr.is_none() {
            c.lr = Some(if c.task == Task::Pde { 0.03 } else { 1e-3 });
        }
        let sim = c.simulation();
        c.dx.get_or_insert(sim.dx);
        c.dt.get_or_insert(sim.dt);
        c.t_end.get_or_insert(sim.t_end);
        c
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let lr = self.lr.unwrap_or(if self.task == Task::Pde { 0.03 } else { 1e-3 });
        let mut o = match self.optimizer {
            OptimizerChoice::Adam => OptimizerConfig::adam(lr),
            OptimizerChoice::Sgd => OptimizerConfig::sgd(lr),
        }
        .with_l2(self.l2);
        if self.decay_every > 0 {
            o = o.with_decay(self.decay_factor, self.decay_every);
        }
        o
    }

    /// Preset with any explicit `dx`, `dt`, `t_end` overrides. An overridden
    /// `dx` without an explicit `dt` keeps the preset's stability margin.
    pub fn simulation(&self) -> SimulationConfig {
        let base = match self.pde_preset {
            PdePreset::Desk => SimulationConfig::desk(),
            PdePreset::Full => SimulationConfig::full(),
        };
        let dx = self.dx.unwrap_or(base.dx);
        let dt = self.dt.unwrap_or(base.dt * (dx / base.dx).powi(2));
        SimulationConfig { dx, dt, t_end: self.t_end.unwrap_or(base.t_end), ..base }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::default();
        c.set("task", "graph-study").unwrap();
        c.set("lr", "0.5").unwrap();
        c.set("depths", "1,4").unwrap();
        c.set("edges", "uniform:0.5,1.5").unwrap();
        c.set("data", "idx:/tmp/mnist").unwrap();
        c.set("maps", "2,3,4,5").unwrap();
        let back = ExperimentConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(ExperimentConfig::from_text(&ExperimentConfig::default().to_text()).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn comments_and_errors() {
        let c = ExperimentConfig::from_text("# run\n\nstrategy = reduced_batch\n  batch=20 \n").unwrap();
        assert_eq!(c.strategy, StrategyKind::ReducedBatch);
        assert_eq!(c.batch, 20);
        assert!(matches!(ExperimentConfig::from_text("a\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(ExperimentConfig::from_text("\nnope = 1"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(ExperimentConfig::from_text("batch = x"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn task_defaults() {
        let mut c = ExperimentConfig::default();
        assert_eq!(c.resolved().lr, Some(1e-3));
        c.task = Task::Pde;
        let r = c.resolved();
        assert_eq!(r.lr, Some(0.03));
        assert_eq!(r.simulation(), SimulationConfig::desk());
        c.dx = Some(1.0 / 8.0);
        assert!((c.simulation().ratio() - SimulationConfig::desk().ratio()).abs() < 1e-15);
    }
}
