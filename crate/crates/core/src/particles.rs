//! Interacting particle approximation of the McKean–Vlasov SDE
//!
//! ```text
//! dX = b(X, u(t, X)) dt + √(2 Φ(u(t, X))) dW,   u(t) = density of X(t)
//! ```
//!
//! The unknown density is replaced by an estimate refitted from the ensemble
//! at every step (histogram or Gaussian kernel on the PDE grid), so the
//! particle generator `Φ(û)Δ + b(·, û)·∇` matches the PDE's diffusion and
//! transport terms.
//!
//! Randomness is counter-based: particle `p` at step `k` reads its normals
//! from ChaCha8 stream `p` at word offset `(k + 1) · 2¹⁶` (the initial sample
//! uses offset 0). Results therefore do not depend on thread scheduling.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::{l1_distance, mass, PeriodicGrid, ScalarField, Spectral};
use crate::model::ModelProblem;
use crate::pde::Trajectory;

/// Floor applied to density estimates before evaluating `Φ`.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Smallest tolerated negative value in an initial density.
pub const NEGATIVE_DENSITY_TOL: f64 = 1e-12;

const WORDS_PER_STEP: u128 = 1 << 16;

/// Particles binned per work item; fixed so that the summation order is too.
const BIN_CHUNK: usize = 4096;

/// Particle positions, wrapped into the periodic box.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    grid: PeriodicGrid,
    /// Particle-major: `positions[p * dim + axis]`.
    positions: Vec<f64>,
    seed: u64,
    /// Number of steps taken; selects the random-number block.
    step: u64,
    time: f64,
    /// Total mass carried by the ensemble (each particle weighs `mass / N`).
    mass: f64,
}

impl ParticleEnsemble {
    /// Wrap user positions into an ensemble. `positions.len()` must be a multiple of `grid.dim()`.
    pub fn from_positions(grid: PeriodicGrid, positions: Vec<f64>, mass: f64, seed: u64) -> Result<Self> {
        if positions.is_empty() || positions.len() % grid.dim() != 0 {
            return Err(Error::invalid(format!(
                "{} coordinates do not form whole {}-d particles",
                positions.len(),
                grid.dim()
            )));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::invalid(format!("ensemble mass must be positive, got {mass}")));
        }
        if let Some(bad) = positions.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite particle coordinate {bad}")));
        }
        let positions = positions.into_iter().map(|x| grid.wrap(x)).collect();
        Ok(Self {
            grid,
            positions,
            seed,
            step: 0,
            time: 0.0,
            mass,
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.grid.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Coordinates of particle `p` (second entry unused in 1D).
    pub fn particle(&self, p: usize) -> [f64; 2] {
        let d = self.grid.dim();
        let mut x = [0.0; 2];
        x[..d].copy_from_slice(&self.positions[p * d..(p + 1) * d]);
        x
    }

    /// Per-axis sample mean and variance.
    pub fn moments(&self) -> ([f64; 2], [f64; 2]) {
        let d = self.grid.dim();
        let n = self.len() as f64;
        let mut mean = [0.0; 2];
        let mut var = [0.0; 2];
        for axis in 0..d {
            let m = self.positions.iter().skip(axis).step_by(d).sum::<f64>() / n;
            let v = self
                .positions
                .iter()
                .skip(axis)
                .step_by(d)
                .map(|x| (x - m) * (x - m))
                .sum::<f64>()
                / n;
            mean[axis] = m;
            var[axis] = v;
        }
        (mean, var)
    }

    /// Advance by `dt` with the density `density` frozen during the step.
    pub fn step(
        &self,
        dt: f64,
        model: &ModelProblem,
        density: &ScalarField,
        exec: Execution,
    ) -> Result<ParticleEnsemble> {
        let base = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = |p: usize| normals_from(&base, p, self.step, self.grid.dim());
        self.advance(dt, model, density, exec, noise)
    }

    /// Euler–Maruyama update with caller-supplied standard normals.
    pub(crate) fn advance(
        &self,
        dt: f64,
        model: &ModelProblem,
        density: &ScalarField,
        exec: Execution,
        noise: impl Fn(usize) -> [f64; 2] + Sync + Send,
    ) -> Result<ParticleEnsemble> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("particle time step must be positive, got {dt}")));
        }
        if *density.grid() != self.grid {
            return Err(Error::Mismatch("density is not on the ensemble grid".into()));
        }
        if model.dimension != self.grid.dim() {
            return Err(Error::Mismatch(format!(
                "model is {}-dimensional, ensemble is {}-dimensional",
                model.dimension,
                self.grid.dim()
            )));
        }
        let d = self.grid.dim();
        let sqrt_dt = dt.sqrt();
        let moved: Vec<Result<[f64; 2]>> = exec::map_indexed(exec, self.len(), |p| {
            let x = self.particle(p);
            let raw = interpolate(density, x);
            if !raw.is_finite() {
                return Err(Error::DegenerateDensity { particle: p, value: raw });
            }
            let u = raw.max(DENSITY_FLOOR);
            let b = model.drift.b(x, u);
            let sigma = (2.0 * model.phi(u)).sqrt();
            let xi = noise(p);
            let mut y = [0.0; 2];
            for a in 0..d {
                y[a] = self.grid.wrap(x[a] + b[a] * dt + sigma * sqrt_dt * xi[a]);
            }
            Ok(y)
        });
        let mut positions = Vec::with_capacity(self.positions.len());
        for y in moved {
            positions.extend_from_slice(&y?[..d]);
        }
        Ok(ParticleEnsemble {
            grid: self.grid,
            positions,
            seed: self.seed,
            step: self.step + 1,
            time: self.time + dt,
            mass: self.mass,
        })
    }
}

/// The standard normals drawn by particle `p` at step `step`.
#[cfg(test)]
fn normals(seed: u64, p: usize, step: u64, dim: usize) -> [f64; 2] {
    normals_from(&ChaCha8Rng::seed_from_u64(seed), p, step, dim)
}

fn normals_from(base: &ChaCha8Rng, p: usize, step: u64, dim: usize) -> [f64; 2] {
    let mut rng = base.clone();
    rng.set_stream(p as u64);
    rng.set_word_pos((step as u128 + 1) * WORDS_PER_STEP);
    let mut xi = [0.0; 2];
    for v in xi.iter_mut().take(dim) {
        *v = rng.sample(StandardNormal);
    }
    xi
}

fn particle_rng(seed: u64, p: usize, word_pos: u128) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(p as u64);
    rng.set_word_pos(word_pos);
    rng
}

/// Linear interpolation of a grid field at an arbitrary point (periodic).
pub fn interpolate(f: &ScalarField, x: [f64; 2]) -> f64 {
    let g = f.grid();
    let n = g.n();
    let v = f.values();
    let (i0, w0) = cell(g, x[0]);
    let i1 = (i0 + 1) % n;
    if g.dim() == 1 {
        return (1.0 - w0) * v[i0] + w0 * v[i1];
    }
    let (j0, w1) = cell(g, x[1]);
    let j1 = (j0 + 1) % n;
    (1.0 - w1) * ((1.0 - w0) * v[j0 * n + i0] + w0 * v[j0 * n + i1])
        + w1 * ((1.0 - w0) * v[j1 * n + i0] + w0 * v[j1 * n + i1])
}

/// Left node index and fractional offset of a coordinate.
fn cell(g: &PeriodicGrid, x: f64) -> (usize, f64) {
    let s = (g.wrap(x) + g.half_width()) / g.dx();
    let i = s.floor();
    let w = s - i;
    ((i as usize) % g.n(), w)
}

/// Draw `n` i.i.d. positions from `u0 / mass(u0)`.
///
/// The field is read as piecewise constant on the cells centred at the grid
/// nodes. In 2D a row is drawn from the marginal first and then a column from
/// the conditional distribution of that row.
pub fn sample_initial(u0: &ScalarField, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::invalid("particle count must be positive"));
    }
    if let Some(v) = u0.values().iter().find(|v| !(**v >= -NEGATIVE_DENSITY_TOL)) {
        return Err(Error::invalid(format!("initial density has negative value {v}")));
    }
    let total = mass(u0);
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::invalid(format!("initial density must have positive mass, got {total}")));
    }
    let g = *u0.grid();
    let nn = g.n();
    let dx = g.dx();
    let w: Vec<f64> = u0.values().iter().map(|v| v.max(0.0)).collect();
    let jitter = |rng: &mut ChaCha8Rng, j: usize| g.wrap(g.coord(j) + (rng.random::<f64>() - 0.5) * dx);
    let positions: Vec<f64> = if g.dim() == 1 {
        let cdf = cumulative(&w);
        (0..n)
            .flat_map(|p| {
                let mut rng = particle_rng(seed, p, 0);
                let j = pick(&cdf, rng.random());
                [jitter(&mut rng, j)]
            })
            .collect()
    } else {
        let rows: Vec<f64> = w.chunks(nn).map(|r| r.iter().sum()).collect();
        let row_cdf = cumulative(&rows);
        let col_cdfs: Vec<Vec<f64>> = w.chunks(nn).map(cumulative).collect();
        (0..n)
            .flat_map(|p| {
                let mut rng = particle_rng(seed, p, 0);
                let jy = pick(&row_cdf, rng.random());
                let jx = pick(&col_cdfs[jy], rng.random());
                let x = jitter(&mut rng, jx);
                let y = jitter(&mut rng, jy);
                [x, y]
            })
            .collect()
    };
    ParticleEnsemble::from_positions(g, positions, total, seed)
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    w.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// First index whose cumulative weight exceeds `q · total`, skipping empty cells.
fn pick(cdf: &[f64], q: f64) -> usize {
    let target = q * cdf[cdf.len() - 1];
    cdf.partition_point(|c| *c <= target).min(cdf.len() - 1)
}

/// Kernel bandwidth selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    /// Silverman's rule `(4/(d+2))^{1/(d+4)} · σ̂ · N^{-1/(d+4)}`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Particle counts per grid cell.
    Histogram,
    /// Cloud-in-cell deposit convolved with a periodised Gaussian.
    GaussianKernel(Bandwidth),
}

/// Grid-based estimator of the ensemble's density, scaled by its mass.
#[derive(Debug)]
pub struct DensityEstimator {
    kind: EstimatorKind,
    spectral: Spectral,
}

impl DensityEstimator {
    pub fn new(kind: EstimatorKind, grid: PeriodicGrid) -> Result<Self> {
        if let EstimatorKind::GaussianKernel(Bandwidth::Fixed(h)) = kind {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
            }
        }
        Ok(Self {
            kind,
            spectral: Spectral::new(grid),
        })
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.spectral.grid()
    }

    /// Bandwidth that will be used for `ens`, if this is a kernel estimator.
    pub fn bandwidth(&self, ens: &ParticleEnsemble) -> Option<f64> {
        match self.kind {
            EstimatorKind::Histogram => None,
            EstimatorKind::GaussianKernel(Bandwidth::Fixed(h)) => Some(h),
            EstimatorKind::GaussianKernel(Bandwidth::Auto) => Some(silverman(ens)),
        }
    }

    pub fn estimate(&self, ens: &ParticleEnsemble, exec: Execution) -> Result<ScalarField> {
        let g = *self.grid();
        if *ens.grid() != g {
            return Err(Error::Mismatch("ensemble and estimator grids differ".into()));
        }
        let weight = ens.mass() / ens.len() as f64 / g.cell_volume();
        let density = match self.kind {
            EstimatorKind::Histogram => {
                deposit(ens, exec, |x, out| {
                    let (i, wx) = cell(&g, x[0]);
                    let ix = if wx >= 0.5 { (i + 1) % g.n() } else { i };
                    let iy = if g.dim() == 2 {
                        let (j, wy) = cell(&g, x[1]);
                        if wy >= 0.5 {
                            (j + 1) % g.n()
                        } else {
                            j
                        }
                    } else {
                        0
                    };
                    out[iy * g.n() + ix] += 1.0;
                })
                .into_iter()
                .map(|c| c * weight)
                .collect()
            }
            EstimatorKind::GaussianKernel(_) => {
                let h = self.bandwidth(ens).expect("kernel estimator");
                let counts: Vec<f64> = deposit(ens, exec, |x, out| cic(&g, x, out))
                    .into_iter()
                    .map(|c| c * weight)
                    .collect();
                self.convolve(&counts, h)
            }
        };
        ScalarField::new(g, density)
    }

    /// Periodic convolution with a normalised Gaussian of standard deviation `h`.
    fn convolve(&self, values: &[f64], h: f64) -> Vec<f64> {
        let g = self.grid();
        let n = g.n();
        let kernel_1d = periodic_gaussian(g, h);
        let kernel: Vec<f64> = if g.dim() == 1 {
            kernel_1d
        } else {
            (0..g.len())
                .map(|i| kernel_1d[i % n] * kernel_1d[i / n])
                .collect()
        };
        let kf = self.spectral.forward(&kernel);
        let mut vf = self.spectral.forward(values);
        for (a, b) in vf.iter_mut().zip(&kf) {
            *a *= *b;
        }
        let scale = g.cell_volume();
        let total: f64 = values.iter().sum();
        let mut out: Vec<f64> = self
            .spectral
            .inverse(vf)
            .into_iter()
            .map(|v| (v * scale).max(0.0))
            .collect();
        // clipping FFT round-off can shift the mass in the last digits
        let got: f64 = out.iter().sum();
        if got > 0.0 {
            let fix = total / got;
            out.iter_mut().for_each(|v| *v *= fix);
        }
        out
    }
}

/// `k(x_j) = Σ_images exp(-x²/2h²)` on one axis, normalised to `Σ k Δx = 1`.
fn periodic_gaussian(g: &PeriodicGrid, h: f64) -> Vec<f64> {
    let n = g.n();
    let period = 2.0 * g.half_width();
    let images = (6.0 * h / period).ceil() as i64 + 1;
    let mut k: Vec<f64> = (0..n)
        .map(|j| {
            let x = g.signed_mode(j) as f64 * g.dx();
            (-images..=images)
                .map(|m| {
                    let y = x + m as f64 * period;
                    (-0.5 * y * y / (h * h)).exp()
                })
                .sum()
        })
        .collect();
    let norm: f64 = k.iter().sum::<f64>() * g.dx();
    k.iter_mut().for_each(|v| *v /= norm);
    k
}

/// Cloud-in-cell weights onto the nodes surrounding `x`.
fn cic(g: &PeriodicGrid, x: [f64; 2], out: &mut [f64]) {
    let n = g.n();
    let (i0, wx) = cell(g, x[0]);
    let i1 = (i0 + 1) % n;
    if g.dim() == 1 {
        out[i0] += 1.0 - wx;
        out[i1] += wx;
        return;
    }
    let (j0, wy) = cell(g, x[1]);
    let j1 = (j0 + 1) % n;
    out[j0 * n + i0] += (1.0 - wx) * (1.0 - wy);
    out[j0 * n + i1] += wx * (1.0 - wy);
    out[j1 * n + i0] += (1.0 - wx) * wy;
    out[j1 * n + i1] += wx * wy;
}

/// Sum per-particle deposits in fixed chunks, combined in chunk order.
fn deposit(
    ens: &ParticleEnsemble,
    exec: Execution,
    f: impl Fn([f64; 2], &mut [f64]) + Sync + Send,
) -> Vec<f64> {
    let len = ens.grid().len();
    let chunks = ens.len().div_ceil(BIN_CHUNK);
    let partial = exec::map_indexed(exec, chunks, |c| {
        let mut out = vec![0.0; len];
        for p in c * BIN_CHUNK..((c + 1) * BIN_CHUNK).min(ens.len()) {
            f(ens.particle(p), &mut out);
        }
        out
    });
    let mut total = vec![0.0; len];
    for part in partial {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    total
}

fn silverman(ens: &ParticleEnsemble) -> f64 {
    let d = ens.grid().dim() as f64;
    let (_, var) = ens.moments();
    let sd = var[..ens.grid().dim()].iter().map(|v| v.sqrt()).sum::<f64>() / d;
    let sd = if sd > 0.0 { sd } else { ens.grid().dx() };
    (4.0 / (d + 2.0)).powf(1.0 / (d + 4.0)) * sd * (ens.len() as f64).powf(-1.0 / (d + 4.0))
}

/// Densities at increasing times on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySeries {
    pub times: Vec<f64>,
    pub fields: Vec<ScalarField>,
}

impl From<&Trajectory> for DensitySeries {
    fn from(t: &Trajectory) -> Self {
        Self {
            times: t.times.clone(),
            fields: t.fields.clone(),
        }
    }
}

/// Settings of one particle simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleConfig {
    pub particles: usize,
    pub time_step: f64,
    pub seed: u64,
    pub estimator: EstimatorKind,
    pub execution: Execution,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self {
            particles: 10_000,
            time_step: 1e-3,
            seed: 0,
            estimator: EstimatorKind::GaussianKernel(Bandwidth::Auto),
            execution: Execution::default(),
        }
    }
}

/// Output of [`simulate`].
#[derive(Debug, Clone)]
pub struct ParticleRun {
    pub series: DensitySeries,
    pub ensemble: ParticleEnsemble,
    pub steps: u64,
}

/// Run the particle system from `u0` up to `t_end`, recording the density
/// estimate at each of `snapshot_times` (which must be sorted within `[0, t_end]`).
///
/// Steps are shortened where needed so that every snapshot time is hit exactly.
pub fn simulate(
    u0: &ScalarField,
    t_end: f64,
    model: &ModelProblem,
    cfg: &ParticleConfig,
    snapshot_times: &[f64],
) -> Result<ParticleRun> {
    let dt = cfg.time_step;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("particle time step must be positive, got {dt}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::invalid(format!("final time must be >= 0, got {t_end}")));
    }
    if snapshot_times.windows(2).any(|w| w[1] < w[0])
        || snapshot_times.iter().any(|s| !(*s >= 0.0 && *s <= t_end))
    {
        return Err(Error::invalid("snapshot times must be sorted within [0, T]"));
    }
    let estimator = DensityEstimator::new(cfg.estimator, *u0.grid())?;
    let mut ens = sample_initial(u0, cfg.particles, cfg.seed)?;
    let mut series = DensitySeries {
        times: Vec::new(),
        fields: Vec::new(),
    };
    let mut pending = snapshot_times.iter().copied().peekable();
    let mut t = 0.0;
    let mut density = estimator.estimate(&ens, cfg.execution)?;
    loop {
        while let Some(&s) = pending.peek() {
            if s <= t {
                series.times.push(s);
                series.fields.push(density.clone());
                pending.next();
            } else {
                break;
            }
        }
        if t >= t_end {
            break;
        }
        let mut target = (t + dt).min(t_end);
        if let Some(&s) = pending.peek() {
            target = target.min(s);
        }
        // absorb slivers left by rounding
        if t_end - target < 1e-9 * dt {
            target = t_end;
        }
        ens = ens.step(target - t, model, &density, cfg.execution)?;
        t = target;
        ens.time = t;
        density = estimator.estimate(&ens, cfg.execution)?;
    }
    Ok(ParticleRun {
        series,
        steps: ens.step,
        ensemble: ens,
    })
}

/// `|a(t) - b(t)|₁` at each common snapshot.
pub fn law_distance(a: &DensitySeries, b: &DensitySeries) -> Result<Vec<f64>> {
    if a.times.len() != b.times.len() {
        return Err(Error::Mismatch(format!(
            "{} snapshots vs {}",
            a.times.len(),
            b.times.len()
        )));
    }
    for (s, t) in a.times.iter().zip(&b.times) {
        if (s - t).abs() > 1e-12 * (1.0 + s.abs()) {
            return Err(Error::Mismatch(format!("snapshot times differ: {s} vs {t}")));
        }
    }
    a.fields
        .iter()
        .zip(&b.fields)
        .map(|(f, g)| l1_distance(f, g))
        .collect()
}

/// Raw dump: `u64` particle count, `u32` dimension, then the coordinates, little-endian.
pub fn write_particles_binary<W: Write>(ens: &ParticleEnsemble, mut w: W) -> Result<()> {
    w.write_all(&(ens.len() as u64).to_le_bytes())?;
    w.write_all(&(ens.grid().dim() as u32).to_le_bytes())?;
    for x in &ens.positions {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Read a dump written by [`write_particles_binary`]; returns `(dim, positions)`.
pub fn read_particles_binary<R: Read>(mut r: R) -> Result<(usize, Vec<f64>)> {
    let mut b8 = [0u8; 8];
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b4)?;
    let d = u32::from_le_bytes(b4) as usize;
    if !(d == 1 || d == 2) {
        return Err(Error::Format(format!("particle dimension {d}")));
    }
    let mut pos = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        r.read_exact(&mut b8)?;
        pos.push(f64::from_le_bytes(b8));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", rest.len())));
    }
    Ok((d, pos))
}
