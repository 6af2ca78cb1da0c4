//! Reaction-diffusion control on the unit square.
//!
//! `∂φ/∂t = D ∇²φ + C(x, t; θ) φ` with `φ = 0` on the boundary, integrated
//! with forward-time centred-space steps on the interior nodes of a uniform
//! grid. The loss `L = (1/T) Σ_{t=1..T} ‖φ_t − φ_t^target‖²` is
//! differentiated with respect to the seven Fourier coefficients of `C`.
//!
//! The exact gradient stores the whole trajectory. The randomized estimator
//! injects basis sampling matrices on the loss adjoint `∂L/∂φ_t` and on the
//! control Jacobian `∂φ_{t+1}/∂C_t = Δt·diag(φ_t)`, so only `k` entries of
//! each `φ_t` are kept. The transition Jacobian `M + Δt·diag(C_t)` does not
//! depend on `φ` and is applied exactly.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::injection::reduced_dim;
use crate::optim::{Optimizer, OptimizerConfig, ParamSlot};
use crate::rng;

/// Number of control coefficients.
pub const N_THETA: usize = 7;
/// Largest stable `D·Δt/Δx²`.
pub const STABILITY_LIMIT: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulationConfig {
    pub diffusion: f64,
    pub dx: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Reject unstable step sizes instead of running them.
    pub strict: bool,
}

impl SimulationConfig {
    /// `D = 1/4`, `Δx = 1/32`, `Δt = 1/4096`, `t_end = 10`.
    pub fn full() -> Self {
        Self { diffusion: 0.25, dx: 1.0 / 32.0, dt: 1.0 / 4096.0, t_end: 10.0, strict: true }
    }

    /// `Δx = 1/16`, `Δt` at 0.9 of the stability bound, `t_end = 2`.
    pub fn desk() -> Self {
        let (d, dx) = (0.25, 1.0 / 16.0);
        Self { diffusion: d, dx, dt: 0.9 * STABILITY_LIMIT * dx * dx / d, t_end: 2.0, strict: true }
    }

    /// Interior nodes per side.
    pub fn interior(&self) -> usize {
        ((1.0 / self.dx).round() as usize).saturating_sub(1)
    }

    pub fn steps(&self) -> usize {
        let raw = self.t_end / self.dt;
        (raw - 1e-9 * raw.max(1.0)).ceil().max(0.0) as usize
    }

    pub fn ratio(&self) -> f64 {
        self.diffusion * self.dt / (self.dx * self.dx)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0 && self.dx < 1.0 && self.dt > 0.0 && self.t_end > 0.0 && self.diffusion >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid simulation constants {self:?}")));
        }
        if self.interior() == 0 || self.steps() == 0 {
            return Err(Error::InvalidParameter("grid or time axis is empty".into()));
        }
        if self.strict && self.ratio() > STABILITY_LIMIT {
            return Err(Error::Unstable { ratio: self.ratio() });
        }
        Ok(())
    }

    /// Coordinate of interior node `i` (0-based).
    pub fn coordinate(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dx
    }
}

/// Fourier terms `[1, sπt, cπt, s2πx·sπt, s2πx·cπt, c2πx·sπt, c2πx·cπt]`.
pub fn control_basis(x: f64, t: f64) -> [f64; N_THETA] {
    let (st, ct) = (PI * t).sin_cos();
    let (sx, cx) = (2.0 * PI * x).sin_cos();
    [1.0, st, ct, sx * st, sx * ct, cx * st, cx * ct]
}

fn check_theta(theta: &[f64]) -> Result<()> {
    if theta.len() != N_THETA {
        return Err(Error::DimensionMismatch(format!("θ has {} entries, expected {N_THETA}", theta.len())));
    }
    Ok(())
}

/// `C(x, t; θ)` on the interior nodes, index `i·n + j` for node `(x_i, y_j)`.
pub fn control_field(theta: &[f64], t: f64, config: &SimulationConfig) -> Result<Vec<f64>> {
    check_theta(theta)?;
    let n = config.interior();
    let mut c = Vec::with_capacity(n * n);
    for i in 0..n {
        let b = control_basis(config.coordinate(i), t);
        let v: f64 = b.iter().zip(theta).map(|(b, t)| b * t).sum();
        c.extend(std::iter::repeat_n(v, n));
    }
    Ok(c)
}

/// Five-point Laplacian times `Δx²` with zero boundary values.
fn laplacian(phi: &[f64], n: usize) -> Vec<f64> {
    let at = |i: isize, j: isize| {
        if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
            0.0
        } else {
            phi[i as usize * n + j as usize]
        }
    };
    let mut out = vec![0.0; n * n];
    for i in 0..n as isize {
        for j in 0..n as isize {
            out[i as usize * n + j as usize] = at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1) - 4.0 * at(i, j);
        }
    }
    out
}

/// `(M + Δt·diag(C)) φ`; the matrix is symmetric, so this is also its transpose.
fn transition(phi: &[f64], c: &[f64], config: &SimulationConfig) -> Vec<f64> {
    let r = config.ratio();
    let lap = laplacian(phi, config.interior());
    phi.iter()
        .zip(&lap)
        .zip(c)
        .map(|((p, l), ci)| p + r * l + config.dt * ci * p)
        .collect()
}

/// One explicit step.
pub fn ftcs_step(phi: &[f64], c: &[f64], config: &SimulationConfig) -> Result<Vec<f64>> {
    let n = config.interior();
    if phi.len() != n * n || c.len() != n * n {
        return Err(Error::DimensionMismatch(format!(
            "field has {} values and control {}, grid needs {}",
            phi.len(),
            c.len(),
            n * n
        )));
    }
    if config.strict && config.ratio() > STABILITY_LIMIT {
        return Err(Error::Unstable { ratio: config.ratio() });
    }
    Ok(transition(phi, c, config))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// `φ₀ + ¼ sin(πt) sin(2πx) sin(πy)`.
    Default,
    /// Explicit fields for steps `0..=T`.
    Trajectory(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `φ_0 ..= φ_T`.
    pub fields: Vec<Vec<f64>>,
    pub loss: f64,
}

/// Which sampling matrices the randomized estimator injects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Injection {
    /// No sampling; reproduces the exact gradient.
    Identity,
    /// One index set per time index, used by both injections that touch `φ_t`.
    Shared,
    /// Separate index sets for the loss adjoint and the control Jacobian.
    Independent,
}

impl std::str::FromStr for Injection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" => Ok(Injection::Identity),
            "shared" => Ok(Injection::Shared),
            "independent" => Ok(Injection::Independent),
            _ => Err(Error::InvalidParameter(format!("unknown injection `{s}`"))),
        }
    }
}

/// The factor an index set is drawn for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    /// `∂L/∂φ_t`.
    Loss,
    /// `∂φ_{t+1}/∂C_t`.
    Control,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub loss: f64,
    pub gradient: Vec<f64>,
    /// Field entries kept for the backward pass.
    pub stored_entries: usize,
}

impl GradientEstimate {
    /// Stored bytes at 64 bits per entry.
    pub fn stored_bytes(&self) -> usize {
        8 * self.stored_entries
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub config: SimulationConfig,
    pub initial: Vec<f64>,
    pub target: Target,
}

impl Problem {
    /// `φ₀ = sin(πx) sin(πy)` with the default target.
    pub fn new(config: SimulationConfig) -> Result<Self> {
        config.validate()?;
        let n = config.interior();
        let mut initial = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                initial.push((PI * config.coordinate(i)).sin() * (PI * config.coordinate(j)).sin());
            }
        }
        Ok(Self { config, initial, target: Target::Default })
    }

    pub fn with_initial(mut self, initial: Vec<f64>) -> Result<Self> {
        let n = self.config.interior();
        if initial.len() != n * n {
            return Err(Error::DimensionMismatch(format!("initial field has {} values, grid needs {}", initial.len(), n * n)));
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn with_target(mut self, target: Target) -> Result<Self> {
        if let Target::Trajectory(t) = &target {
            let n = self.config.interior();
            if t.len() != self.config.steps() + 1 || t.iter().any(|f| f.len() != n * n) {
                return Err(Error::DimensionMismatch("target trajectory has the wrong shape".into()));
            }
        }
        self.target = target;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.initial.len()
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.config.dt
    }

    pub fn target_at(&self, step: usize) -> Vec<f64> {
        match &self.target {
            Target::Trajectory(t) => t[step].clone(),
            Target::Default => {
                let n = self.config.interior();
                let s = 0.25 * (PI * self.time(step)).sin();
                let mut out = self.initial.clone();
                for i in 0..n {
                    let sx = (2.0 * PI * self.config.coordinate(i)).sin();
                    for j in 0..n {
                        out[i * n + j] += s * sx * (PI * self.config.coordinate(j)).sin();
                    }
                }
                out
            }
        }
    }

    /// Runs the solver, calling `visit(step, φ_step)` for `step = 0..=T`.
    fn run<F: FnMut(usize, &[f64]) -> Result<()>>(&self, theta: &[f64], mut visit: F) -> Result<f64> {
        check_theta(theta)?;
        self.config.validate()?;
        let steps = self.config.steps();
        let mut phi = self.initial.clone();
        visit(0, &phi)?;
        let mut loss = 0.0;
        for t in 1..=steps {
            let c = control_field(theta, self.time(t - 1), &self.config)?;
            phi = ftcs_step(&phi, &c, &self.config)?;
            if phi.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteField { step: t });
            }
            let y = self.target_at(t);
            loss += phi.iter().zip(&y).map(|(p, y)| (p - y).powi(2)).sum::<f64>();
            visit(t, &phi)?;
        }
        Ok(loss / steps as f64)
    }

    pub fn simulate(&self, theta: &[f64]) -> Result<Trajectory> {
        let mut fields = Vec::with_capacity(self.config.steps() + 1);
        let loss = self.run(theta, |_, phi| {
            fields.push(phi.to_vec());
            Ok(())
        })?;
        Ok(Trajectory { fields, loss })
    }

    /// Loss without keeping the trajectory.
    pub fn loss(&self, theta: &[f64]) -> Result<f64> {
        self.run(theta, |_, _| Ok(()))
    }

    fn basis_rows(&self, step: usize) -> Vec<[f64; N_THETA]> {
        let t = self.time(step);
        (0..self.config.interior()).map(|i| control_basis(self.config.coordinate(i), t)).collect()
    }

    /// Reverse accumulation over the stored trajectory.
    pub fn exact_gradient(&self, theta: &[f64]) -> Result<GradientEstimate> {
        let traj = self.simulate(theta)?;
        let stored = traj.fields.len() * self.dim();
        let gradient = self.reverse(theta, |t, lambda, grad| {
            // λ_tᵀ Δt diag(φ_{t-1}) B_{t-1}
            let phi = &traj.fields[t - 1];
            let rows = self.basis_rows(t - 1);
            let n = self.config.interior();
            for (p, (&l, &f)) in lambda.iter().zip(phi).enumerate() {
                let w = self.config.dt * l * f;
                grad.iter_mut().zip(&rows[p / n]).for_each(|(g, b)| *g += w * b);
            }
        }, |t| {
            let y = self.target_at(t);
            let scale = 2.0 / self.config.steps() as f64;
            traj.fields[t].iter().zip(&y).map(|(p, y)| scale * (p - y)).collect()
        })?;
        Ok(GradientEstimate { loss: traj.loss, gradient, stored_entries: stored })
    }

    /// Shared reverse sweep: `λ_T = g_T`, `λ_{t-1} = A_{t-1}ᵀ λ_t + g_{t-1}`;
    /// `control(t, λ_t, grad)` adds the step-`t` control contribution.
    fn reverse<C, G>(&self, theta: &[f64], mut control: C, mut loss_adjoint: G) -> Result<Vec<f64>>
    where
        C: FnMut(usize, &[f64], &mut [f64]),
        G: FnMut(usize) -> Vec<f64>,
    {
        let steps = self.config.steps();
        let mut grad = vec![0.0; N_THETA];
        let mut lambda = loss_adjoint(steps);
        for t in (1..=steps).rev() {
            control(t, &lambda, &mut grad);
            if t > 1 {
                let c = control_field(theta, self.time(t - 1), &self.config)?;
                lambda = transition(&lambda, &c, &self.config);
                lambda.iter_mut().zip(loss_adjoint(t - 1)).for_each(|(l, g)| *l += g);
            }
        }
        Ok(grad)
    }

    /// Randomized estimate with `k = ceil(f·d)` sampled entries per injection.
    pub fn rad_gradient<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        fraction: f64,
        injection: Injection,
        rng: &mut R,
    ) -> Result<GradientEstimate> {
        let k = reduced_dim(fraction, self.dim())?;
        self.rad_gradient_with(theta, k, injection, |_, _, d, k| (0..k).map(|_| rng.random_range(0..d)).collect())
    }

    /// Randomized estimate with caller-supplied index sets:
    /// `draw(step, role, d, k)` returns `k` indices for `φ_step`.
    pub fn rad_gradient_with<F>(&self, theta: &[f64], k: usize, injection: Injection, mut draw: F) -> Result<GradientEstimate>
    where
        F: FnMut(usize, Role, usize, usize) -> Vec<usize>,
    {
        if injection == Injection::Identity {
            return self.exact_gradient(theta);
        }
        let d = self.dim();
        if k == 0 || k > d {
            return Err(Error::InvalidParameter(format!("k = {k} outside 1..={d}")));
        }
        let steps = self.config.steps();
        let scale = d as f64 / k as f64;
        // Per step: sampled (index, φ value) pairs for each role.
        let mut kept: Vec<[Vec<(usize, f64)>; 2]> = Vec::with_capacity(steps + 1);
        let mut bad_index = None;
        let loss = self.run(theta, |t, phi| {
            let mut pick = |role| {
                let idx = draw(t, role, d, k);
                if idx.len() != k || idx.iter().any(|&i| i >= d) {
                    bad_index = Some(t);
                }
                idx.into_iter().filter(|&i| i < d).map(|i| (i, phi[i])).collect::<Vec<_>>()
            };
            let control = if t < steps { pick(Role::Control) } else { Vec::new() };
            let loss = match injection {
                _ if t == 0 => Vec::new(),
                Injection::Shared if t < steps => control.clone(),
                _ => pick(Role::Loss),
            };
            kept.push([loss, control]);
            Ok(())
        })?;
        if let Some(t) = bad_index {
            return Err(Error::InvalidParameter(format!("index set for step {t} is malformed")));
        }
        let stored_entries = match injection {
            Injection::Shared => (steps + 1) * k,
            _ => 2 * steps * k,
        };
        let n = self.config.interior();
        let two_over_t = 2.0 / steps as f64;
        let gradient = self.reverse(
            theta,
            |t, lambda, grad| {
                let rows = self.basis_rows(t - 1);
                for &(p, f) in &kept[t - 1][1] {
                    let w = scale * self.config.dt * lambda[p] * f;
                    grad.iter_mut().zip(&rows[p / n]).for_each(|(g, b)| *g += w * b);
                }
            },
            |t| {
                let mut g = vec![0.0; d];
                if t == 0 {
                    return g;
                }
                let y = self.target_at(t);
                for &(p, f) in &kept[t][0] {
                    g[p] += scale * two_over_t * (f - y[p]);
                }
                g
            },
        )?;
        Ok(GradientEstimate { loss, gradient, stored_entries })
    }

    /// `θ₀` that holds the discrete fundamental mode steady:
    /// `−D ⟨φ₀, ∇²_h φ₀⟩ / ⟨φ₀, φ₀⟩` evaluated on the grid.
    pub fn fundamental_rate(&self) -> f64 {
        let n = self.config.interior();
        let dx2 = self.config.dx * self.config.dx;
        let lap = laplacian(&self.initial, n);
        let num: f64 = self.initial.iter().zip(&lap).map(|(a, b)| a * b / dx2).sum();
        let den: f64 = self.initial.iter().map(|a| a * a).sum();
        -self.config.diffusion * num / den
    }

    /// `θ₀` from [`Self::fundamental_rate`], the rest uniform on `(−a, a)`.
    pub fn initial_theta<R: Rng + ?Sized>(&self, a: f64, rng: &mut R) -> Vec<f64> {
        let mut theta = vec![self.fundamental_rate()];
        theta.extend((1..N_THETA).map(|_| if a > 0.0 { rng.random_range(-a..a) } else { 0.0 }));
        theta
    }
}

/// Gradient source for [`train`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradientMethod {
    Exact,
    Randomized { fraction: f64, injection: Injection },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRow {
    pub iteration: usize,
    pub loss: f64,
    pub fraction: f64,
    pub stored_bytes: usize,
}

/// Optimizes `θ` for `iters` steps, logging the loss before each update
/// and once after the last one.
pub fn train(
    problem: &Problem,
    theta: &mut [f64],
    method: GradientMethod,
    iters: usize,
    optimizer: OptimizerConfig,
    seed: u64,
) -> Result<Vec<TrainRow>> {
    let mut rows = Vec::with_capacity(iters + 1);
    train_with(problem, theta, method, iters, optimizer, seed, |r| {
        rows.push(r.clone());
        Ok(())
    })?;
    Ok(rows)
}

/// [`train`] that hands each row to `on_row` as soon as it is known.
pub fn train_with<F>(
    problem: &Problem,
    theta: &mut [f64],
    method: GradientMethod,
    iters: usize,
    optimizer: OptimizerConfig,
    seed: u64,
    mut on_row: F,
) -> Result<()>
where
    F: FnMut(&TrainRow) -> Result<()>,
{
    let mut opt = Optimizer::new(optimizer);
    let mut r = rng::seeded(seed);
    let fraction = match method {
        GradientMethod::Exact => 1.0,
        GradientMethod::Randomized { fraction, .. } => fraction,
    };
    let mut stored = 0;
    for it in 0..iters {
        let est = match method {
            GradientMethod::Exact => problem.exact_gradient(theta)?,
            GradientMethod::Randomized { fraction, injection } => problem.rad_gradient(theta, fraction, injection, &mut r)?,
        };
        stored = est.stored_bytes();
        on_row(&TrainRow { iteration: it, loss: est.loss, fraction, stored_bytes: stored })?;
        opt.step(vec![ParamSlot { name: "theta", values: theta }], &[est.gradient])?;
    }
    on_row(&TrainRow { iteration: iters, loss: problem.loss(theta)?, fraction, stored_bytes: stored })
}

/// Grid snapshot file magic ("RADG", little-endian).
pub const SNAPSHOT_MAGIC: u32 = 0x4744_4152;

/// A field at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub step: u32,
    pub time: f64,
    pub field: Vec<f64>,
}

/// Writes snapshots. Little-endian layout: magic u32, version u32 (1),
/// interior side `n` u32, snapshot count u32, `Δx` f64, `Δt` f64, then per
/// snapshot: step u32, time f64, `n²` f64 values (index `i·n + j`).
pub fn write_snapshots<W: Write>(config: &SimulationConfig, snaps: &[Snapshot], mut out: W) -> Result<()> {
    let n = config.interior();
    let mut buf = Vec::new();
    buf.extend(SNAPSHOT_MAGIC.to_le_bytes());
    buf.extend(1u32.to_le_bytes());
    buf.extend((n as u32).to_le_bytes());
    buf.extend((snaps.len() as u32).to_le_bytes());
    buf.extend(config.dx.to_le_bytes());
    buf.extend(config.dt.to_le_bytes());
    for s in snaps {
        if s.field.len() != n * n {
            return Err(Error::DimensionMismatch(format!("snapshot at step {} has {} values", s.step, s.field.len())));
        }
        buf.extend(s.step.to_le_bytes());
        buf.extend(s.time.to_le_bytes());
        s.field.iter().for_each(|v| buf.extend(v.to_le_bytes()));
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads snapshots; returns `(n, Δx, Δt, snapshots)`.
pub fn read_snapshots<R: Read>(mut input: R) -> Result<(usize, f64, f64, Vec<Snapshot>)> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut pos = 0;
    let mut take = |len: usize| -> Result<&[u8]> {
        if pos + len > data.len() {
            return Err(Error::Truncated { expected: pos + len, found: data.len() });
        }
        pos += len;
        Ok(&data[pos - len..pos])
    };
    let mut word = [0u8; 4];
    let head = take(4).unwrap_or(&[]);
    word[..head.len()].copy_from_slice(head);
    let magic = u32::from_le_bytes(word);
    if magic != SNAPSHOT_MAGIC {
        return Err(Error::BadMagic { found: magic, expected: SNAPSHOT_MAGIC });
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
    let version = u32_at(take(4)?);
    if version != 1 {
        return Err(Error::InvalidParameter(format!("unsupported snapshot version {version}")));
    }
    let n = u32_at(take(4)?) as usize;
    let count = u32_at(take(4)?) as usize;
    let dx = f64_at(take(8)?);
    let dt = f64_at(take(8)?);
    let mut snaps = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let step = u32_at(take(4)?);
        let time = f64_at(take(8)?);
        let field = take(8 * n * n)?.chunks_exact(8).map(f64_at).collect();
        snaps.push(Snapshot { step, time, field });
    }
    Ok((n, dx, dt, snaps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dx: f64, steps: usize) -> SimulationConfig {
        let dt = 0.2 * dx * dx;
        SimulationConfig { diffusion: 0.25, dx, dt, t_end: steps as f64 * dt, strict: true }
    }

    #[test]
    fn presets() {
        let p = SimulationConfig::full();
        assert_eq!(p.interior(), 31);
        assert_eq!(p.steps(), 40960);
        assert!(p.validate().is_ok());
        let d = SimulationConfig::desk();
        assert_eq!(d.interior(), 15);
        assert!((d.ratio() - 0.225).abs() < 1e-15);
        assert_eq!(d.steps(), 569);
    }

    #[test]
    fn control_field_examples() {
        let cfg = tiny(0.25, 1);
        let c = control_field(&[2.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.7, &cfg).unwrap();
        assert!(c.iter().all(|&v| v == 2.5));
        let c = control_field(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.5, &cfg).unwrap();
        assert!(c.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        // x = 0.25 is interior node 0.
        let c = control_field(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0], 0.5, &cfg).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15);
        assert!(control_field(&[1.0; 6], 0.0, &cfg).is_err());
    }

    #[test]
    fn ftcs_examples() {
        let cfg = SimulationConfig { diffusion: 0.25, dx: 0.5, dt: 0.25, t_end: 0.25, strict: true };
        assert_eq!(cfg.interior(), 1);
        assert_eq!(ftcs_step(&[1.0], &[0.0], &cfg).unwrap(), vec![0.0]);
        assert_eq!(ftcs_step(&[0.0], &[3.0], &cfg).unwrap(), vec![0.0]);
        let still = SimulationConfig { diffusion: 0.0, ..tiny(0.25, 1) };
        let phi: Vec<f64> = (0..9).map(|i| i as f64).collect();
        assert_eq!(ftcs_step(&phi, &[0.0; 9], &still).unwrap(), phi);
        let unstable = SimulationConfig { dt: 1.0, ..cfg };
        assert!(matches!(ftcs_step(&[1.0], &[0.0], &unstable), Err(Error::Unstable { .. })));
    }

    #[test]
    fn fundamental_mode_is_steady() {
        let p = Problem::new(tiny(1.0 / 8.0, 1)).unwrap();
        let rate = p.fundamental_rate();
        assert!((rate - 2.0 * PI * PI * 0.25).abs() < 0.1);
        let c = vec![rate; p.dim()];
        let next = ftcs_step(&p.initial, &c, &p.config).unwrap();
        for (a, b) in next.iter().zip(&p.initial) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn self_target_has_zero_loss_and_gradient() {
        let p = Problem::new(tiny(0.25, 6)).unwrap();
        let theta = [0.3, -0.2, 0.1, 0.05, 0.0, -0.1, 0.2];
        let traj = p.simulate(&theta).unwrap();
        assert!(traj.loss > 0.0);
        let p = p.with_target(Target::Trajectory(traj.fields)).unwrap();
        assert_eq!(p.loss(&theta).unwrap(), 0.0);
        assert!(p.exact_gradient(&theta).unwrap().gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_step_closed_form() {
        let p = Problem::new(tiny(0.25, 1)).unwrap();
        let theta = [0.4, 0.1, -0.3, 0.2, 0.1, 0.0, -0.2];
        let traj = p.simulate(&theta).unwrap();
        let g = p.exact_gradient(&theta).unwrap().gradient;
        let y = p.target_at(1);
        let n = p.config.interior();
        for k in 0..N_THETA {
            let mut expect = 0.0;
            for i in 0..n {
                let b = control_basis(p.config.coordinate(i), 0.0)[k];
                for j in 0..n {
                    let q = i * n + j;
                    expect += 2.0 * (traj.fields[1][q] - y[q]) * p.config.dt * p.initial[q] * b;
                }
            }
            assert!((g[k] - expect).abs() < 1e-14 * expect.abs().max(1.0), "k={k}");
        }
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        let p = Problem::new(tiny(0.2, 12)).unwrap();
        let theta = [1.2, 0.3, -0.4, 0.2, -0.1, 0.3, 0.1];
        let g = p.exact_gradient(&theta).unwrap().gradient;
        for k in 0..N_THETA {
            let h = 1e-5;
            let mut up = theta;
            up[k] += h;
            let mut down = theta;
            down[k] -= h;
            let fd = (p.loss(&up).unwrap() - p.loss(&down).unwrap()) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6 * g[k].abs().max(1e-8), "k={k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn identity_injection_is_exact() {
        let p = Problem::new(tiny(0.25, 4)).unwrap();
        let theta = [0.5, 0.1, 0.2, -0.1, 0.3, 0.0, 0.1];
        let a = p.exact_gradient(&theta).unwrap();
        let b = p.rad_gradient(&theta, 1.0, Injection::Identity, &mut rng::seeded(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stored_entries_scale_with_fraction() {
        let p = Problem::new(tiny(1.0 / 11.0, 5)).unwrap();
        let theta = [0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut r = rng::seeded(2);
        let est = p.rad_gradient(&theta, 0.1, Injection::Shared, &mut r).unwrap();
        assert_eq!(est.stored_entries, 6 * 10);
        let ind = p.rad_gradient(&theta, 0.1, Injection::Independent, &mut r).unwrap();
        assert_eq!(ind.stored_entries, 2 * 5 * 10);
        assert_eq!(p.exact_gradient(&theta).unwrap().stored_entries, 6 * 100);
        assert_eq!(est.loss, p.loss(&theta).unwrap());
    }

    #[test]
    fn snapshot_round_trip() {
        let cfg = tiny(0.25, 2);
        let p = Problem::new(cfg).unwrap();
        let traj = p.simulate(&[0.1; 7]).unwrap();
        let snaps: Vec<Snapshot> = traj
            .fields
            .iter()
            .enumerate()
            .map(|(s, f)| Snapshot { step: s as u32, time: p.time(s), field: f.clone() })
            .collect();
        let mut buf = Vec::new();
        write_snapshots(&cfg, &snaps, &mut buf).unwrap();
        let (n, dx, dt, back) = read_snapshots(&buf[..]).unwrap();
        assert_eq!((n, dx, dt), (3, cfg.dx, cfg.dt));
        assert_eq!(back, snaps);
        assert!(matches!(read_snapshots(&buf[..buf.len() - 1]), Err(Error::Truncated { .. })));
        assert!(matches!(read_snapshots(&[][..]), Err(Error::BadMagic { .. })));
    }
}
