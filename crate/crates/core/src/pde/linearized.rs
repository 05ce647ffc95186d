use crate::error::{Error, Result};
use crate::grid::{ScalarField, Spectral, VectorField};
use crate::krylov::{gmres, GmresParams};
use crate::model::ModelProblem;

use super::{step_schedule, SolverConfig, StageStats, Trajectory};

/// Time-indexed coefficients `Ψ(t, x)` and `b(t, x)` of the linear equation
/// `v_t - Δ(Ψ v) + div(b v) = 0`.
///
/// A step ending at time `t` uses the first sample at or after `t`
/// (the last sample beyond the table); a single sample is constant in time.
#[derive(Debug, Clone)]
pub struct FrozenCoefficients {
    times: Vec<f64>,
    psi: Vec<ScalarField>,
    drift: Option<Vec<VectorField>>,
}

impl FrozenCoefficients {
    pub fn new(
        times: Vec<f64>,
        psi: Vec<ScalarField>,
        drift: Option<Vec<VectorField>>,
    ) -> Result<Self> {
        if times.is_empty() || times.len() != psi.len() {
            return Err(Error::Mismatch("need one Ψ sample per time".into()));
        }
        if let Some(d) = &drift {
            if d.len() != times.len() {
                return Err(Error::Mismatch("need one drift sample per time".into()));
            }
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("coefficient times must increase"));
        }
        let grid = *psi[0].grid();
        if psi.iter().any(|p| *p.grid() != grid)
            || drift
                .iter()
                .flatten()
                .any(|d| *d.grid() != grid)
        {
            return Err(Error::Mismatch("coefficients live on different grids".into()));
        }
        for p in &psi {
            if p.min() <= 0.0 {
                return Err(Error::invalid(format!(
                    "Ψ must be positive, found {}",
                    p.min()
                )));
            }
        }
        Ok(Self { times, psi, drift })
    }

    pub fn constant(psi: ScalarField, drift: Option<VectorField>) -> Result<Self> {
        Self::new(vec![0.0], vec![psi], drift.map(|d| vec![d]))
    }

    /// `Ψ = Φ(u)` and `b(x, u)` sampled along a trajectory.
    pub fn from_trajectory(traj: &Trajectory, model: &ModelProblem) -> Result<Self> {
        let psi = traj.fields.iter().map(|u| u.map(|r| model.phi(r))).collect();
        let drift = if model.drift.is_zero() {
            None
        } else {
            Some(
                traj.fields
                    .iter()
                    .map(|u| {
                        let g = *u.grid();
                        let vals = u.values();
                        let comps = (0..g.dim())
                            .map(|a| {
                                (0..g.len())
                                    .map(|i| model.drift.b(g.point(i), vals[i])[a])
                                    .collect()
                            })
                            .collect();
                        VectorField::new(g, comps)
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        };
        Self::new(traj.times.clone(), psi, drift)
    }

    fn index_at(&self, t: f64) -> usize {
        if self.times.len() == 1 {
            return 0;
        }
        let tol = 1e-12 * t.abs().max(1.0);
        self.times
            .iter()
            .position(|&s| s >= t - tol)
            .unwrap_or(self.times.len() - 1)
    }

    pub fn at(&self, t: f64) -> (&ScalarField, Option<&VectorField>) {
        let i = self.index_at(t);
        (&self.psi[i], self.drift.as_ref().map(|d| &d[i]))
    }
}

/// Fully implicit Euler for `v_t - Δ(Ψ v) + div(b v) = 0` with coefficients
/// frozen at the new time level; each stage is a GMRES solve.
pub fn solve_linearized(
    v0: &ScalarField,
    coeffs: &FrozenCoefficients,
    t_end: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = *v0.grid();
    if *coeffs.psi[0].grid() != grid {
        return Err(Error::Mismatch("coefficients and data live on different grids".into()));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::invalid(format!("horizon must be >= 0, got {t_end}")));
    }
    let sp = Spectral::new(grid);
    let w = grid.cell_volume();
    let schedule = step_schedule(t_end, cfg.time_step);
    let n = schedule.len();
    let mut times = vec![0.0];
    let mut fields = vec![v0.clone()];
    let mut stats = StageStats::default();
    let mut v = v0.values().to_vec();
    let mut t;
    for (i, &dt) in schedule.iter().enumerate() {
        t = if i + 1 == n {
            t_end
        } else {
            (i + 1) as f64 * cfg.time_step
        };
        let (psi, drift) = coeffs.at(t);
        let psi = psi.values();
        let apply = |x: &[f64]| -> Vec<f64> {
            let px: Vec<f64> = x.iter().zip(psi).map(|(a, b)| a * b).collect();
            let lap = sp.laplacian_values(&px);
            let mut out: Vec<f64> = x.iter().zip(&lap).map(|(a, l)| a - dt * l).collect();
            if let Some(d) = drift {
                let comps: Vec<Vec<f64>> = d
                    .components()
                    .iter()
                    .map(|c| c.iter().zip(x).map(|(a, b)| a * b).collect())
                    .collect();
                let div = sp.divergence_values(&comps);
                for (o, dv) in out.iter_mut().zip(&div) {
                    *o += dt * dv;
                }
            }
            out
        };
        let psi_mean = psi.iter().sum::<f64>() / psi.len() as f64;
        // solve for the correction to v_old, whose mean is exactly zero
        let av = apply(&v);
        let r: Vec<f64> = v.iter().zip(&av).map(|(a, b)| a - b).collect();
        let mut delta = vec![0.0; v.len()];
        let out = gmres(
            &apply,
            |x| sp.resolvent_values(x, dt * psi_mean),
            &r,
            &mut delta,
            GmresParams {
                rtol: 0.0,
                atol: cfg.newton_tol,
                restart: cfg.krylov_restart,
                max_iter: cfg.krylov_max_iter,
                weight: w,
            },
        );
        stats.krylov_iterations += out.iterations;
        if !out.converged {
            return Err(Error::LinearSolveFailure {
                step: Some(i),
                residual: out.residual,
                iterations: out.iterations,
            });
        }
        let shift = delta.iter().sum::<f64>() / delta.len() as f64;
        for (vi, d) in v.iter_mut().zip(&delta) {
            *vi += d - shift;
        }
        if (i + 1) % cfg.snapshot_stride == 0 || i + 1 == n {
            times.push(t);
            fields.push(ScalarField::new(grid, v.clone())?);
        }
    }
    Ok(Trajectory {
        grid,
        times,
        fields,
        model: "linearized".into(),
        config: *cfg,
        steps: n,
        stats,
    })
}
