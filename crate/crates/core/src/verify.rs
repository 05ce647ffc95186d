//! Executable checks over solver output: weak form, narrow continuity,
//! `H⁻²` Grönwall growth, `L¹` contraction, the `L∞` barrier, refinement
//! Cauchy behaviour and PDE/particle agreement.
//!
//! Each check produces [`VerificationReport`]s with `pass ⇔ measured ≤ bound + tolerance`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::grid::{l1_distance, PeriodicGrid, ScalarField, Spectral, VectorField};
use crate::model::{lipschitz_constants, InitialCondition, ModelProblem};
use crate::particles::{law_distance, simulate, DensitySeries, ParticleConfig};
use crate::pde::{
    barrier_eta, barrier_tolerance, fit_order, solve_linearized, solve_mild, FrozenCoefficients,
    SolverConfig, Trajectory,
};

/// `D(t)` values below this are treated as exactly zero in the Grönwall slope.
pub const GRONWALL_FLOOR: f64 = 1e-24;

/// Slack of the `L¹` contraction and order checks.
pub const CONTRACTION_SLACK: f64 = 1e-8;

/// Smallest acceptable decay order when the step is halved.
pub const MIN_ORDER: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub bound: f64,
    pub tolerance: f64,
    /// Run configuration that reproduces the numbers.
    pub provenance: String,
    /// Auxiliary named quantities (fitted orders, constants, ...).
    pub details: Vec<(String, f64)>,
}

impl VerificationReport {
    pub fn new(name: &str, measured: f64, bound: f64, tolerance: f64, provenance: String) -> Self {
        Self {
            name: name.to_string(),
            pass: measured <= bound + tolerance,
            measured,
            bound,
            tolerance,
            provenance,
            details: Vec::new(),
        }
    }

    pub fn with_detail(mut self, key: &str, value: f64) -> Self {
        self.details.push((key.to_string(), value));
        self
    }

    pub fn detail(&self, key: &str) -> Option<f64> {
        self.details.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

fn provenance(model: &ModelProblem, grid: &PeriodicGrid, t_end: f64, cfg: &SolverConfig) -> String {
    format!(
        "model={} d={} L={} n={} T={} h={} newton_tol={:e}",
        model.name,
        grid.dim(),
        grid.half_width(),
        grid.n(),
        t_end,
        cfg.time_step,
        cfg.newton_tol
    )
}

// ---------------------------------------------------------------------------
// weak formulation

/// `φ(t, x) = θ(t) χ(x)` with `θ(t) = 16 s²(1-s)²(1 + a s)`, `s = t/T`.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub a: f64,
    pub chi: ScalarField,
}

impl TestFunction {
    /// Random `χ = bump(|x - c|/ρ) · cos(k·x + phase)` with `k` a box mode.
    pub fn random<R: Rng>(rng: &mut R, grid: &PeriodicGrid) -> Self {
        let l = grid.half_width();
        let d = grid.dim();
        let a = rng.random_range(-0.5..0.5);
        let c = [rng.random_range(-l..l), rng.random_range(-l..l)];
        let rho = rng.random_range(0.2 * l..0.6 * l);
        let m = [rng.random_range(0..4) as f64, rng.random_range(0..4) as f64];
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let k = std::f64::consts::PI / l;
        let chi = ScalarField::from_fn(*grid, |x| {
            let mut r2 = 0.0;
            let mut arg = phase;
            for i in 0..d {
                let y = grid.wrap(x[i] - c[i]);
                r2 += y * y;
                arg += k * m[i] * x[i];
            }
            let s = r2 / (rho * rho);
            if s >= 1.0 {
                0.0
            } else {
                (1.0 - 1.0 / (1.0 - s)).exp() * arg.cos()
            }
        });
        Self { a, chi }
    }

    fn theta(&self, s: f64) -> f64 {
        16.0 * s * s * (1.0 - s) * (1.0 - s) * (1.0 + self.a * s)
    }

    /// `∫₀^{sT} θ dt / T`.
    fn theta_integral(&self, s: f64) -> f64 {
        let a = self.a;
        16.0 * (s.powi(3) / 3.0
            + (a - 2.0) * s.powi(4) / 4.0
            + (1.0 - 2.0 * a) * s.powi(5) / 5.0
            + a * s.powi(6) / 6.0)
    }
}

/// Space-time quadrature of `∫∫ u φ_t + β(u)Δφ + b(x,u)u·∇φ` for one test function,
/// with `u` piecewise constant in time (`u_{i+1}` on `(t_i, t_{i+1}]`).
pub fn weak_residual_for(traj: &Trajectory, model: &ModelProblem, phi: &TestFunction) -> Result<f64> {
    let g = traj.grid;
    if *phi.chi.grid() != g {
        return Err(Error::Mismatch("test function is not on the trajectory grid".into()));
    }
    let t_end = traj.final_time();
    if t_end <= 0.0 {
        return Ok(0.0);
    }
    let sp = Spectral::new(g);
    let lap = sp.laplacian_values(phi.chi.values());
    let grad = sp.gradient_values(phi.chi.values());
    let w = g.cell_volume();
    let mut total = 0.0;
    for i in 0..traj.times.len() - 1 {
        let (s0, s1) = (traj.times[i] / t_end, traj.times[i + 1] / t_end);
        let d_theta = phi.theta(s1) - phi.theta(s0);
        let int_theta = t_end * (phi.theta_integral(s1) - phi.theta_integral(s0));
        let u = &traj.fields[i + 1];
        let mut time_part = 0.0;
        let mut space_part = 0.0;
        for (j, &r) in u.values().iter().enumerate() {
            time_part += r * phi.chi.values()[j];
            space_part += model.nonlinearity.beta(r) * lap[j];
            if !model.drift.is_zero() {
                let f = model.flux(g.point(j), r);
                for (a, comp) in grad.iter().enumerate() {
                    space_part += f[a] * comp[j];
                }
            }
        }
        total += w * (d_theta * time_part + int_theta * space_part);
    }
    Ok(total)
}

/// Largest `|residual|` over `n_test` seeded random test functions.
pub fn weak_residual(traj: &Trajectory, model: &ModelProblem, n_test: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tests: Vec<TestFunction> = (0..n_test)
        .map(|_| TestFunction::random(&mut rng, &traj.grid))
        .collect();
    let r = map_indexed(traj.config.execution, tests.len(), |i| {
        weak_residual_for(traj, model, &tests[i])
    });
    r.into_iter()
        .try_fold(0.0_f64, |m, v| Ok(m.max(v?.abs())))
}

// ---------------------------------------------------------------------------
// narrow continuity

/// `1`, the first two Fourier modes per axis and a centred bump.
pub fn default_test_set(grid: &PeriodicGrid) -> Vec<ScalarField> {
    let k = std::f64::consts::PI / grid.half_width();
    let d = grid.dim();
    let mut set = vec![ScalarField::constant(*grid, 1.0)];
    for axis in 0..d {
        for m in [1.0, 2.0] {
            set.push(ScalarField::from_fn(*grid, |x| (m * k * x[axis]).cos()));
            set.push(ScalarField::from_fn(*grid, |x| (m * k * x[axis]).sin()));
        }
    }
    let r = 0.5 * grid.half_width();
    set.push(ScalarField::from_fn(*grid, |x| {
        let s = (x[0] * x[0] + if d == 2 { x[1] * x[1] } else { 0.0 }) / (r * r);
        if s >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s)).exp()
        }
    }));
    set
}

/// `max_{ψ, i} |∫ (u_{i+1} - u_i) ψ dx|` over adjacent snapshots.
pub fn narrow_continuity_modulus(traj: &Trajectory, psi_set: &[ScalarField]) -> Result<f64> {
    if traj.fields.len() < 2 {
        return Err(Error::invalid("need at least two snapshots"));
    }
    let mut worst = 0.0_f64;
    for psi in psi_set {
        for w in traj.fields.windows(2) {
            let jump = w[1].sub(&w[0])?.dot(psi)?;
            worst = worst.max(jump.abs());
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Grönwall

/// `C = 27 K⁴ / (128 γ₀³)`, twice `max_a K a^{3/2} - γ₀ a²`.
pub fn gronwall_constant(k: f64, gamma0: f64) -> f64 {
    27.0 * k.powi(4) / (128.0 * gamma0.powi(3))
}

/// Twice the maximum of `a ↦ K a^{3/2} - γ₀ a²` found by scanning and golden-section refinement.
pub fn gronwall_constant_brute_force(k: f64, gamma0: f64) -> f64 {
    let f = |a: f64| k * a.powf(1.5) - gamma0 * a * a;
    // the maximiser lies below (K/γ₀)²
    let hi = 4.0 * (k / gamma0).powi(2) + 1.0;
    let n = 20_000;
    let best = (0..=n)
        .map(|i| hi * i as f64 / n as f64)
        .fold(0.0_f64, |b, a| if f(a) > f(b) { a } else { b });
    let step = hi / n as f64;
    let (mut lo, mut up) = ((best - step).max(0.0), best + step);
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = up - gr * (up - lo);
        let x2 = lo + gr * (up - lo);
        if f(x1) > f(x2) {
            up = x2;
        } else {
            lo = x1;
        }
    }
    2.0 * f(0.5 * (lo + up))
}

#[derive(Debug, Clone)]
pub struct GronwallOutcome {
    pub report: VerificationReport,
    pub times: Vec<f64>,
    /// `|u₁(t) - u₂(t)|²₋₂` per snapshot.
    pub distances: Vec<f64>,
    /// Largest centred log-slope, `None` when fewer than three snapshots are above the floor.
    pub slope: Option<f64>,
    pub c_theory: f64,
}

/// Largest centred difference of `log D` over snapshot triples with `D ≥ floor`.
pub fn max_log_slope(times: &[f64], d: &[f64]) -> Option<f64> {
    (1..d.len().saturating_sub(1))
        .filter(|&i| d[i - 1] >= GRONWALL_FLOOR && d[i + 1] >= GRONWALL_FLOOR)
        .map(|i| (d[i + 1].ln() - d[i - 1].ln()) / (times[i + 1] - times[i - 1]))
        .reduce(f64::max)
}

pub fn gronwall_check(
    u0a: &ScalarField,
    u0b: &ScalarField,
    t_end: f64,
    model: &ModelProblem,
    cfg: &SolverConfig,
) -> Result<GronwallOutcome> {
    let sup = |f: &ScalarField| f.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let m = (2.0 * sup(u0a).max(sup(u0b))).max(1e-12);
    let (beta_m, b_m) = lipschitz_constants(model, m)?;
    let ta = solve_mild(u0a, t_end, model, cfg)?;
    let tb = solve_mild(u0b, t_end, model, cfg)?;
    let u1_sup = ta.fields.iter().map(sup).fold(0.0, f64::max);
    let k = beta_m + 2.0 * (model.drift.b_sup() + b_m * u1_sup);
    let gamma0 = model.nonlinearity.gamma0();
    let c_theory = gronwall_constant(k, gamma0);
    let c_check = gronwall_constant_brute_force(k, gamma0);

    let sp = Spectral::new(*u0a.grid());
    let distances = ta
        .fields
        .iter()
        .zip(&tb.fields)
        .map(|(a, b)| sp.neg_sobolev_norm(&a.sub(b)?, 2).map(|v| v * v))
        .collect::<Result<Vec<_>>>()?;
    let slope = max_log_slope(&ta.times, &distances);
    let identical = u0a == u0b;
    // identical data must give bitwise identical runs
    let measured = if identical && ta.fields != tb.fields {
        f64::INFINITY
    } else {
        slope.unwrap_or(0.0)
    };
    let report = VerificationReport::new(
        "gronwall",
        measured,
        c_theory,
        0.0,
        provenance(model, u0a.grid(), t_end, cfg),
    )
    .with_detail("K", k)
    .with_detail("beta_M", beta_m)
    .with_detail("b_M", b_m)
    .with_detail("c_brute_force", c_check)
    .with_detail("identical_data", identical as u8 as f64);
    Ok(GronwallOutcome {
        report,
        times: ta.times,
        distances,
        slope,
        c_theory,
    })
}

// ---------------------------------------------------------------------------
// L¹ contraction and barrier

/// `max_t |u₁(t) - u₂(t)|₁ - |u0a - u0b|₁ ≤ 1e-8`.
pub fn l1_contraction_check(
    u0a: &ScalarField,
    u0b: &ScalarField,
    t_end: f64,
    model: &ModelProblem,
    cfg: &SolverConfig,
) -> Result<VerificationReport> {
    let ta = solve_mild(u0a, t_end, model, cfg)?;
    let tb = solve_mild(u0b, t_end, model, cfg)?;
    let d0 = l1_distance(u0a, u0b)?;
    let mut excess = f64::NEG_INFINITY;
    for (a, b) in ta.fields.iter().zip(&tb.fields) {
        excess = excess.max(l1_distance(a, b)? - d0);
    }
    Ok(VerificationReport::new(
        "l1_contraction",
        excess,
        0.0,
        CONTRACTION_SLACK,
        provenance(model, u0a.grid(), t_end, cfg),
    )
    .with_detail("initial_distance", d0))
}

/// `-η(t) - tol ≤ min u(t)` and `max u(t) ≤ η(t) + tol` with `tol = 1e-6 + 10h`.
pub fn barrier_check(traj: &Trajectory, model: &ModelProblem) -> Result<VerificationReport> {
    let u0 = &traj.fields[0];
    let sup = u0.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let steps = (4 * traj.steps).max(1000);
    let eta = barrier_eta(sup, traj.final_time(), model, steps)?;
    let mut excess = f64::NEG_INFINITY;
    for (t, u) in traj.times.iter().zip(&traj.fields) {
        let e = eta.eval(*t);
        excess = excess.max(u.max() - e).max(-e - u.min());
    }
    let tol = barrier_tolerance(traj.config.time_step);
    Ok(VerificationReport::new(
        "barrier",
        excess,
        0.0,
        tol,
        provenance(model, &traj.grid, traj.final_time(), &traj.config),
    )
    .with_detail("eta_T", eta.eval(traj.final_time())))
}

// ---------------------------------------------------------------------------
// refinement

#[derive(Debug, Clone)]
pub struct UniquenessOutcome {
    pub report: VerificationReport,
    /// Distances between consecutive resolutions of the nonlinear scheme.
    pub nonlinear: Vec<f64>,
    /// Same for the linearised equation with `Ψ = Φ(u₀)` and drift `b(x, u₀)` frozen.
    pub linearized: Vec<f64>,
}

/// Solve at each `(h, n)` resolution, interpolate to the finest grid and
/// require consecutive distances not to grow.
#[allow(clippy::too_many_arguments)]
pub fn uniqueness_probe(
    ic: &InitialCondition,
    half_width: f64,
    t_end: f64,
    model: &ModelProblem,
    resolutions: &[(f64, usize)],
    cfg: &SolverConfig,
) -> Result<UniquenessOutcome> {
    if resolutions.len() < 2 {
        return Err(Error::invalid("need at least two resolutions"));
    }
    let dim = model.dimension;
    let n_fine = resolutions.iter().map(|r| r.1).max().unwrap_or(0);
    let fine = PeriodicGrid::new(dim, half_width, n_fine)?;
    let runs = map_indexed(cfg.execution, resolutions.len(), |i| -> Result<(ScalarField, ScalarField)> {
        let (h, n) = resolutions[i];
        let g = PeriodicGrid::new(dim, half_width, n)?;
        let c = SolverConfig {
            time_step: h,
            snapshot_stride: usize::MAX,
            ..*cfg
        };
        let u0 = ic.sample(&g);
        let u = solve_mild(&u0, t_end, model, &c)?.final_field().clone();
        let psi = u0.map(|r| model.phi(r));
        let drift = (!model.drift.is_zero()).then(|| {
            VectorField::from_fn(g, |x| model.drift.b(x, ic.eval(dim, x)))
        });
        let coeffs = FrozenCoefficients::constant(psi, drift)?;
        let v = solve_linearized(&u0, &coeffs, t_end, &c)?.final_field().clone();
        let sp = Spectral::new(g);
        Ok((sp.interpolate_to(&u, &fine)?, sp.interpolate_to(&v, &fine)?))
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let dist = |pick: fn(&(ScalarField, ScalarField)) -> &ScalarField| {
        runs.windows(2)
            .map(|w| l1_distance(pick(&w[0]), pick(&w[1])))
            .collect::<Result<Vec<f64>>>()
    };
    let nonlinear = dist(|r| &r.0)?;
    let linearized = dist(|r| &r.1)?;
    let growth = |d: &[f64]| {
        d.windows(2)
            .map(|w| if w[1] == 0.0 { 0.0 } else { w[1] / w[0] })
            .fold(0.0, f64::max)
    };
    let measured = growth(&nonlinear).max(growth(&linearized));
    let steps: Vec<f64> = resolutions.iter().map(|r| r.0).collect();
    let mut report = VerificationReport::new(
        "uniqueness",
        measured,
        1.0,
        0.0,
        format!(
            "model={} d={} L={} T={} resolutions={:?}",
            model.name, dim, half_width, t_end, resolutions
        ),
    );
    if let Some(o) = fit_order(&steps[..nonlinear.len()], &nonlinear) {
        report = report.with_detail("order", o);
    }
    Ok(UniquenessOutcome {
        report,
        nonlinear,
        linearized,
    })
}

// ---------------------------------------------------------------------------
// particles

#[derive(Debug, Clone)]
pub struct ConsistencyOutcome {
    /// `pde_particle_cap`, `pde_particle_monotone` and (with ≥ 2 seeds) `pde_particle_seeds`.
    pub reports: Vec<VerificationReport>,
    /// Seed-averaged distance to the PDE at `T`, one per particle count.
    pub mean_distances: Vec<f64>,
    /// Distance between the first two seeds at the largest particle count.
    pub seed_gap: Option<f64>,
}

/// Compare particle density estimates at `T` against [`solve_mild`].
///
/// Seeds `seed, seed + 1, ..` are used for each particle count in `n_list`.
#[allow(clippy::too_many_arguments)]
pub fn pde_particle_consistency(
    u0: &ScalarField,
    t_end: f64,
    model: &ModelProblem,
    n_list: &[usize],
    seeds: usize,
    pcfg: &ParticleConfig,
    scfg: &SolverConfig,
    cap: f64,
) -> Result<ConsistencyOutcome> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("particle counts must be increasing"));
    }
    if seeds == 0 {
        return Err(Error::invalid("need at least one seed"));
    }
    let pde = solve_mild(
        u0,
        t_end,
        model,
        &SolverConfig {
            snapshot_stride: usize::MAX,
            ..*scfg
        },
    )?;
    let reference = DensitySeries {
        times: vec![t_end],
        fields: vec![pde.final_field().clone()],
    };
    let mut mean_distances = Vec::new();
    let mut last = Vec::new();
    for &n in n_list {
        let mut finals = Vec::new();
        for s in 0..seeds {
            let c = ParticleConfig {
                particles: n,
                seed: pcfg.seed.wrapping_add(s as u64),
                ..*pcfg
            };
            finals.push(simulate(u0, t_end, model, &c, &[t_end])?.series);
        }
        let d: Vec<f64> = finals
            .iter()
            .map(|f| law_distance(f, &reference).map(|v| v[0]))
            .collect::<Result<_>>()?;
        mean_distances.push(d.iter().sum::<f64>() / d.len() as f64);
        last = finals.into_iter().zip(d).collect();
    }
    let prov = format!(
        "model={} n={} T={} h={} dt={} N={:?} seeds={}..{} estimator={:?}",
        model.name,
        u0.grid().n(),
        t_end,
        scfg.time_step,
        pcfg.time_step,
        n_list,
        pcfg.seed,
        pcfg.seed.wrapping_add(seeds as u64),
        pcfg.estimator
    );
    let top = *mean_distances.last().expect("nonempty");
    let increase = mean_distances
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut reports = vec![
        VerificationReport::new("pde_particle_cap", top, cap, 0.0, prov.clone()),
        VerificationReport::new(
            "pde_particle_monotone",
            if n_list.len() > 1 { increase } else { 0.0 },
            0.0,
            0.0,
            prov.clone(),
        ),
    ];
    let mut seed_gap = None;
    if last.len() >= 2 {
        let gap = law_distance(&last[0].0, &last[1].0)?[0];
        let pde_gap = 0.5 * (last[0].1 + last[1].1);
        reports.push(
            VerificationReport::new("pde_particle_seeds", gap, 2.0 * pde_gap, 0.0, prov)
                .with_detail("pde_gap", pde_gap),
        );
        seed_gap = Some(gap);
    }
    Ok(ConsistencyOutcome {
        reports,
        mean_distances,
        seed_gap,
    })
}

// ---------------------------------------------------------------------------
// named suite

/// Names accepted by [`run_check`].
pub const CHECKS: [&str; 7] = [
    "weak_residual",
    "narrow_continuity",
    "gronwall",
    "l1_contraction",
    "barrier",
    "uniqueness",
    "pde_particle",
];

/// Everything a named check needs.
#[derive(Debug, Clone)]
pub struct CheckContext {
    pub model: ModelProblem,
    pub grid: PeriodicGrid,
    pub t_end: f64,
    pub solver: SolverConfig,
    pub particles: ParticleConfig,
    /// Seeds the random test functions and the perturbation of the second datum.
    pub seed: u64,
    pub n_test: usize,
    pub particle_cap: f64,
}

impl CheckContext {
    /// The model's initial datum and a seeded perturbation of it.
    pub fn initial_pair(&self) -> (ScalarField, ScalarField) {
        let u0 = self.model.initial_field(&self.grid);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let extra = InitialCondition::random_bumps(&mut rng, self.grid.dim(), 2, 0.4 * self.grid.half_width())
            .sample(&self.grid);
        let v0 = u0.add_scaled(0.3, &extra).expect("same grid");
        (u0, v0)
    }

    fn halved(&self) -> [SolverConfig; 2] {
        let h = self.solver.time_step;
        [
            SolverConfig {
                snapshot_stride: 1,
                ..self.solver
            },
            SolverConfig {
                time_step: h / 2.0,
                snapshot_stride: 1,
                ..self.solver
            },
        ]
    }
}

fn order_report(name: &str, coarse: f64, fine: f64, prov: String) -> VerificationReport {
    // ratio ≤ 2^{-0.9} is an observed order of at least 0.9
    let ratio = if coarse == 0.0 { 0.0 } else { fine / coarse };
    VerificationReport::new(name, ratio, 0.5_f64.powf(MIN_ORDER), 0.0, prov)
        .with_detail("coarse", coarse)
        .with_detail("fine", fine)
        .with_detail("order", -(ratio.log2()))
}

/// Run one named check on the context.
pub fn run_check(name: &str, ctx: &CheckContext) -> Result<Vec<VerificationReport>> {
    let model = &ctx.model;
    let prov = provenance(model, &ctx.grid, ctx.t_end, &ctx.solver);
    let (u0, v0) = ctx.initial_pair();
    match name {
        "weak_residual" => {
            let r = ctx
                .halved()
                .map(|c| solve_mild(&u0, ctx.t_end, model, &c).and_then(|t| weak_residual(&t, model, ctx.n_test, ctx.seed)));
            let [a, b] = r;
            Ok(vec![order_report(name, a?, b?, prov)])
        }
        "narrow_continuity" => {
            let set = default_test_set(&ctx.grid);
            let r = ctx
                .halved()
                .map(|c| solve_mild(&u0, ctx.t_end, model, &c).and_then(|t| narrow_continuity_modulus(&t, &set)));
            let [a, b] = r;
            Ok(vec![order_report(name, a?, b?, prov)])
        }
        "gronwall" => Ok(vec![gronwall_check(&u0, &v0, ctx.t_end, model, &ctx.solver)?.report]),
        "l1_contraction" => Ok(vec![l1_contraction_check(&u0, &v0, ctx.t_end, model, &ctx.solver)?]),
        "barrier" => {
            let traj = solve_mild(&u0, ctx.t_end, model, &ctx.solver)?;
            Ok(vec![barrier_check(&traj, model)?])
        }
        "uniqueness" => {
            let h = ctx.solver.time_step;
            let n = ctx.grid.n();
            let res = [(4.0 * h, (n / 2).max(16)), (2.0 * h, n), (h, n)];
            Ok(vec![
                uniqueness_probe(&model.initial_condition, ctx.grid.half_width(), ctx.t_end, model, &res, &ctx.solver)?.report,
            ])
        }
        "pde_particle" => {
            let n = ctx.particles.particles;
            let list: Vec<usize> = [n / 100, n / 10, n].into_iter().filter(|&k| k >= 10).collect();
            let mut list = list;
            list.dedup();
            Ok(pde_particle_consistency(&u0, ctx.t_end, model, &list, 2, &ctx.particles, &ctx.solver, ctx.particle_cap)?.reports)
        }
        _ => Err(Error::Unknown {
            kind: "check",
            name: name.to_string(),
            known: CHECKS.join(", "),
        }),
    }
}

// ---------------------------------------------------------------------------
// output

/// One block per report: `check`, `pass`, `measured`, `bound`, `tolerance`, `provenance`, details.
pub fn write_reports_text<W: Write>(reports: &[VerificationReport], mut w: W) -> Result<()> {
    for r in reports {
        writeln!(w, "check: {}", r.name)?;
        writeln!(w, "pass: {}", r.pass)?;
        writeln!(w, "measured: {:.16e}", r.measured)?;
        writeln!(w, "bound: {:.16e}", r.bound)?;
        writeln!(w, "tolerance: {:.16e}", r.tolerance)?;
        writeln!(w, "provenance: {}", r.provenance)?;
        for (k, v) in &r.details {
            writeln!(w, "detail.{k}: {v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_reports_csv<W: Write>(reports: &[VerificationReport], mut w: W) -> Result<()> {
    writeln!(w, "check,pass,measured,bound,tolerance,provenance")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{:.16e},{:.16e},{:.16e},\"{}\"",
            r.name,
            r.pass,
            r.measured,
            r.bound,
            r.tolerance,
            r.provenance.replace('"', "\"\"")
        )?;
    }
    Ok(())
}
