//! Implicit time marching for `u_t - Δβ(u) + div(b(x,u)u) = 0`: the
//! backward-Euler ("mild") scheme, its regularised variant, the frozen
//! coefficient linearisation, and the `L∞` barrier ODE.

mod barrier;
mod linearized;
mod stage;

pub use barrier::{barrier_eta, barrier_tolerance, BarrierTable};
pub use linearized::{solve_linearized, FrozenCoefficients};
pub use stage::{implicit_step, StageStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::grid::{l1_distance, PeriodicGrid, ScalarField, Spectral};
use crate::model::ModelProblem;

use stage::StageProblem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Time step `h`.
    pub time_step: f64,
    /// Stage residual tolerance in discrete `L²`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Initial Newton step length in `(0, 1]`.
    pub damping: f64,
    /// `ε` of the regularised equation.
    pub epsilon_reg: f64,
    /// Standard deviation of the Gaussian mollifier applied to the drift.
    pub mollifier_width: f64,
    /// 2/3-rule truncation of the nonlinear terms.
    pub dealias: bool,
    pub krylov_restart: usize,
    pub krylov_max_iter: usize,
    /// Keep every `snapshot_stride`-th step (the final step is always kept).
    pub snapshot_stride: usize,
    /// Used by batch helpers that run several independent solves.
    pub execution: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            time_step: 1e-3,
            newton_tol: 1e-11,
            newton_max_iter: 50,
            damping: 1.0,
            epsilon_reg: 0.0,
            mollifier_width: 0.0,
            dealias: false,
            krylov_restart: 40,
            krylov_max_iter: 400,
            snapshot_stride: 1,
            execution: Execution::Parallel,
        }
    }
}

impl SolverConfig {
    pub fn with_step(h: f64) -> Self {
        Self {
            time_step: h,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if !(self.time_step.is_finite() && self.time_step > 0.0) {
            return bad(format!("time step must be positive, got {}", self.time_step));
        }
        if !(self.newton_tol >= 1e-14) {
            return bad(format!("newton_tol must be >= 1e-14, got {:e}", self.newton_tol));
        }
        if self.newton_max_iter == 0 || self.krylov_restart == 0 || self.krylov_max_iter == 0 {
            return bad("iteration limits must be positive".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if !(self.epsilon_reg >= 0.0 && self.epsilon_reg.is_finite()) {
            return bad(format!("epsilon_reg must be >= 0, got {}", self.epsilon_reg));
        }
        if !(self.mollifier_width >= 0.0 && self.mollifier_width.is_finite()) {
            return bad(format!("mollifier_width must be >= 0, got {}", self.mollifier_width));
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be >= 1".into());
        }
        Ok(())
    }
}

/// Solver output: snapshots at increasing times starting from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: PeriodicGrid,
    pub times: Vec<f64>,
    pub fields: Vec<ScalarField>,
    pub model: String,
    pub config: SolverConfig,
    /// Number of time steps taken (not snapshots).
    pub steps: usize,
    pub stats: StageStats,
}

impl Trajectory {
    pub fn final_field(&self) -> &ScalarField {
        self.fields.last().expect("trajectory holds at least u0")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds at least u0")
    }

    /// `max_i |mass(u_i) - mass(u_0)| / |mass(u_0)|` (absolute when the mass vanishes).
    pub fn relative_mass_drift(&self) -> f64 {
        let m0 = crate::grid::mass(&self.fields[0]);
        let scale = if m0 == 0.0 { 1.0 } else { m0.abs() };
        self.fields
            .iter()
            .map(|f| (crate::grid::mass(f) - m0).abs() / scale)
            .fold(0.0, f64::max)
    }
}

/// Step sizes reaching `t_end` exactly: `⌈T/h⌉` steps, the last one shortened.
pub fn step_schedule(t_end: f64, h: f64) -> Vec<f64> {
    if t_end <= 0.0 {
        return Vec::new();
    }
    let n = ((t_end / h) - 1e-9).ceil().max(1.0) as usize;
    (0..n)
        .map(|i| if i + 1 == n { t_end - h * (n - 1) as f64 } else { h })
        .collect()
}

fn check_inputs(u0: &ScalarField, t_end: f64, model: &ModelProblem, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::invalid(format!("horizon must be >= 0, got {t_end}")));
    }
    if model.dimension != u0.grid().dim() {
        return Err(Error::Mismatch("model and grid dimensions differ".into()));
    }
    if !u0.is_finite() {
        return Err(Error::invalid("initial data is not finite"));
    }
    Ok(())
}

fn march(
    u0: &ScalarField,
    t_end: f64,
    model: &ModelProblem,
    cfg: &SolverConfig,
    stage: &StageProblem<'_>,
) -> Result<Trajectory> {
    let schedule = step_schedule(t_end, cfg.time_step);
    let n = schedule.len();
    let mut times = vec![0.0];
    let mut fields = vec![u0.clone()];
    let mut stats = StageStats::default();
    let mut current = u0.values().to_vec();
    for (i, &dt) in schedule.iter().enumerate() {
        let (next, s) = stage
            .solve(&current, dt, cfg)
            .map_err(|e| e.at_step(i))?;
        stats += s;
        current = next;
        if (i + 1) % cfg.snapshot_stride == 0 || i + 1 == n {
            times.push(if i + 1 == n {
                t_end
            } else {
                (i + 1) as f64 * cfg.time_step
            });
            fields.push(ScalarField::new(*u0.grid(), current.clone())?);
        }
    }
    Ok(Trajectory {
        grid: *u0.grid(),
        times,
        fields,
        model: model.name.clone(),
        config: *cfg,
        steps: n,
        stats,
    })
}

/// Backward-Euler marching `u^{i+1} - hΔβ(u^{i+1}) + h div(b(x,u^{i+1})u^{i+1}) = u^i`.
///
/// `epsilon_reg` and `mollifier_width` of `cfg` are ignored.
pub fn solve_mild(
    u0: &ScalarField,
    t_end: f64,
    model: &ModelProblem,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    check_inputs(u0, t_end, model, cfg)?;
    let sp = Spectral::new(*u0.grid());
    let stage = StageProblem::new(model, &sp, 0.0, 0.0, 0.0, cfg.dealias);
    march(u0, t_end, model, cfg, &stage)
}

/// Marching for `u_t - Δβ(u) + εβ(u) + div(b_ε(x,u)u) = 0`, where `b_ε` is
/// `b` smoothed in `x` by a Gaussian of width `mollifier_width`.
///
/// With `ε = 0` and zero width this is exactly [`solve_mild`].
pub fn solve_regularized(
    u0: &ScalarField,
    t_end: f64,
    model: &ModelProblem,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    check_inputs(u0, t_end, model, cfg)?;
    let sp = Spectral::new(*u0.grid());
    // the mollified drift is tabulated beyond the barrier bound of the data
    let sup = u0.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let eta = barrier_eta(sup, t_end.max(1e-12), model, 1000)?;
    let range = 1.5 * eta.max_value() + 1.0;
    let stage = StageProblem::new(
        model,
        &sp,
        cfg.epsilon_reg,
        cfg.mollifier_width,
        range,
        cfg.dealias,
    );
    march(u0, t_end, model, cfg, &stage)
}

/// Successive-resolution distances at the final time and their fitted order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub steps: Vec<f64>,
    /// `|u_{h_i}(T) - u_{h_{i+1}}(T)|₁`, one per consecutive pair.
    pub distances: Vec<f64>,
    /// Least-squares slope of `log d_i` against `log h_i`; `None` when a
    /// distance vanishes.
    pub order: Option<f64>,
}

/// Run with each step of `h_list` (each half the previous) and fit the
/// convergence order in `h`.
pub fn self_convergence(
    u0: &ScalarField,
    t_end: f64,
    model: &ModelProblem,
    cfg: &SolverConfig,
    h_list: &[f64],
) -> Result<ConvergenceReport> {
    if h_list.len() < 3 {
        return Err(Error::invalid("need at least three step sizes"));
    }
    for w in h_list.windows(2) {
        if ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "step sizes must halve: {} -> {}",
                w[0], w[1]
            )));
        }
    }
    let runs: Vec<Result<ScalarField>> = map_indexed(cfg.execution, h_list.len(), |i| {
        let c = SolverConfig {
            time_step: h_list[i],
            snapshot_stride: usize::MAX,
            ..*cfg
        };
        solve_mild(u0, t_end, model, &c).map(|t| t.final_field().clone())
    });
    let finals = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let distances = finals
        .windows(2)
        .map(|w| l1_distance(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    let order = fit_order(&h_list[..distances.len()], &distances);
    Ok(ConvergenceReport {
        steps: h_list.to_vec(),
        distances,
        order,
    })
}

/// Slope of the least-squares line through `(log x_i, log y_i)`.
pub fn fit_order(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || y.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Some(sxy / sxx)
}
