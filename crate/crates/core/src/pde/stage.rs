//! One implicit stage `u - hΔβ(u) + hεβ(u) + h div(b_ε(x,u) u) = g`.
//!
//! Newton's method with a GMRES inner solve preconditioned by the spectral
//! inverse of `I - hγ₀Δ`, backtracking on the residual norm, and a
//! contraction fixed point as fallback. With `ε = 0` every correction is
//! projected so that the mean of `u` equals the mean of `g` exactly.

use crate::error::{Error, Result};
use crate::grid::{Point, ScalarField, Spectral};
use crate::krylov::{gmres, GmresParams};
use crate::model::ModelProblem;

use super::SolverConfig;

/// Nodes of the `r` table used for the mollified drift.
const MOLLIFIER_NODES: usize = 129;

/// Iteration counts of one stage solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct StageStats {
    pub newton_iterations: usize,
    pub krylov_iterations: usize,
    pub fixed_point_iterations: usize,
    pub used_fallback: bool,
}

impl std::ops::AddAssign for StageStats {
    fn add_assign(&mut self, o: Self) {
        self.newton_iterations += o.newton_iterations;
        self.krylov_iterations += o.krylov_iterations;
        self.fixed_point_iterations += o.fixed_point_iterations;
        self.used_fallback |= o.used_fallback;
    }
}

/// `b(·, r)` convolved with a Gaussian in `x`, tabulated on `r` nodes and
/// interpolated by cubic Hermite polynomials (values and `r`-derivatives).
struct MollifiedDrift {
    r_min: f64,
    dr: f64,
    /// `[node][axis][point]`
    b: Vec<Vec<Vec<f64>>>,
    b_r: Vec<Vec<Vec<f64>>>,
}

impl MollifiedDrift {
    fn new(model: &ModelProblem, sp: &Spectral, width: f64, range: f64) -> Self {
        let grid = sp.grid();
        let dim = grid.dim();
        let points: Vec<Point> = (0..grid.len()).map(|i| grid.point(i)).collect();
        let r_min = -range;
        let dr = 2.0 * range / (MOLLIFIER_NODES - 1) as f64;
        let smooth_table = |f: &dyn Fn(Point, f64) -> [f64; 2], r: f64| -> Vec<Vec<f64>> {
            (0..dim)
                .map(|a| {
                    let raw: Vec<f64> = points.iter().map(|&x| f(x, r)[a]).collect();
                    sp.smooth_values(&raw, width)
                })
                .collect()
        };
        let mut b = Vec::with_capacity(MOLLIFIER_NODES);
        let mut b_r = Vec::with_capacity(MOLLIFIER_NODES);
        for j in 0..MOLLIFIER_NODES {
            let r = r_min + j as f64 * dr;
            b.push(smooth_table(&|x, r| model.drift.b(x, r), r));
            b_r.push(smooth_table(&|x, r| model.drift.b_r(x, r), r));
        }
        Self { r_min, dr, b, b_r }
    }

    /// `(b_ε, ∂_r b_ε)` at grid point `idx`, axis `a`, or `None` outside the table.
    fn eval(&self, idx: usize, a: usize, r: f64) -> Option<(f64, f64)> {
        let s = (r - self.r_min) / self.dr;
        if !(0.0..=(MOLLIFIER_NODES - 1) as f64).contains(&s) {
            return None;
        }
        let j = (s.floor() as usize).min(MOLLIFIER_NODES - 2);
        let t = s - j as f64;
        let (p0, p1) = (self.b[j][a][idx], self.b[j + 1][a][idx]);
        let (m0, m1) = (self.b_r[j][a][idx] * self.dr, self.b_r[j + 1][a][idx] * self.dr);
        let t2 = t * t;
        let t3 = t2 * t;
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * m1;
        let dv = (6.0 * t2 - 6.0 * t) * p0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * p1
            + (3.0 * t2 - 2.0 * t) * m1;
        Some((v, dv / self.dr))
    }
}

enum DriftSampler {
    Zero,
    Exact,
    Mollified(MollifiedDrift),
}

/// Coefficients of the stage equation on one grid; reusable across steps.
pub(crate) struct StageProblem<'a> {
    model: &'a ModelProblem,
    sp: &'a Spectral,
    points: Vec<Point>,
    drift: DriftSampler,
    epsilon: f64,
    dealias: bool,
}

impl<'a> StageProblem<'a> {
    /// `epsilon` adds `εβ(u)`; `mollifier_width > 0` smooths the drift in `x`
    /// on `|r| ≤ r_range` (the exact drift is used outside).
    pub(crate) fn new(
        model: &'a ModelProblem,
        sp: &'a Spectral,
        epsilon: f64,
        mollifier_width: f64,
        r_range: f64,
        dealias: bool,
    ) -> Self {
        let grid = sp.grid();
        let drift = if model.drift.is_zero() {
            DriftSampler::Zero
        } else if mollifier_width > 0.0 {
            DriftSampler::Mollified(MollifiedDrift::new(model, sp, mollifier_width, r_range))
        } else {
            DriftSampler::Exact
        };
        Self {
            model,
            sp,
            points: (0..grid.len()).map(|i| grid.point(i)).collect(),
            drift,
            epsilon,
            dealias,
        }
    }

    fn dim(&self) -> usize {
        self.sp.grid().dim()
    }

    fn weight(&self) -> f64 {
        self.sp.grid().cell_volume()
    }

    pub(crate) fn conserves_mass(&self) -> bool {
        self.epsilon == 0.0
    }

    /// `(b(x_i, r), ∂_r b(x_i, r))` for axis `a`.
    fn drift_at(&self, idx: usize, a: usize, r: f64) -> (f64, f64) {
        match &self.drift {
            DriftSampler::Zero => (0.0, 0.0),
            DriftSampler::Exact => {
                let x = self.points[idx];
                (self.model.drift.b(x, r)[a], self.model.drift.b_r(x, r)[a])
            }
            DriftSampler::Mollified(m) => m.eval(idx, a, r).unwrap_or_else(|| {
                let x = self.points[idx];
                (self.model.drift.b(x, r)[a], self.model.drift.b_r(x, r)[a])
            }),
        }
    }

    fn lap(&self, v: &[f64]) -> Vec<f64> {
        if self.dealias {
            self.sp.laplacian_values(&self.sp.dealias_values(v))
        } else {
            self.sp.laplacian_values(v)
        }
    }

    fn div(&self, comps: &[Vec<f64>]) -> Vec<f64> {
        if self.dealias {
            let c: Vec<Vec<f64>> = comps.iter().map(|c| self.sp.dealias_values(c)).collect();
            self.sp.divergence_values(&c)
        } else {
            self.sp.divergence_values(comps)
        }
    }

    /// `b*(x, u) = b(x, u) u` per axis.
    fn flux(&self, u: &[f64]) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|a| {
                u.iter()
                    .enumerate()
                    .map(|(i, &r)| self.drift_at(i, a, r).0 * r)
                    .collect()
            })
            .collect()
    }

    /// `F(u) = u - hΔβ(u) + hεβ(u) + h div b*(u) - g`.
    pub(crate) fn residual(&self, u: &[f64], g: &[f64], h: f64) -> Vec<f64> {
        let nl = &self.model.nonlinearity;
        let beta: Vec<f64> = u.iter().map(|&r| nl.beta(r)).collect();
        let lap = self.lap(&beta);
        let mut f: Vec<f64> = u
            .iter()
            .zip(&lap)
            .zip(g)
            .map(|((ui, li), gi)| ui - h * li - gi)
            .collect();
        if self.epsilon != 0.0 {
            for (fi, bi) in f.iter_mut().zip(&beta) {
                *fi += h * self.epsilon * bi;
            }
        }
        if !matches!(self.drift, DriftSampler::Zero) {
            let div = self.div(&self.flux(u));
            for (fi, di) in f.iter_mut().zip(&div) {
                *fi += h * di;
            }
        }
        f
    }

    fn norm(&self, v: &[f64]) -> f64 {
        (v.iter().map(|x| x * x).sum::<f64>() * self.weight()).sqrt()
    }

    /// Jacobian of `F` at `u`, as a closure.
    fn jacobian(&self, u: &[f64], h: f64) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        let nl = &self.model.nonlinearity;
        let bp: Vec<f64> = u.iter().map(|&r| nl.beta_prime(r)).collect();
        let with_drift = !matches!(self.drift, DriftSampler::Zero);
        // d(b* )/dr = b + b_r r
        let flux_r: Vec<Vec<f64>> = if with_drift {
            (0..self.dim())
                .map(|a| {
                    u.iter()
                        .enumerate()
                        .map(|(i, &r)| {
                            let (b, br) = self.drift_at(i, a, r);
                            b + br * r
                        })
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        let eps = self.epsilon;
        move |v: &[f64]| {
            let bv: Vec<f64> = v.iter().zip(&bp).map(|(a, b)| a * b).collect();
            let lap = self.lap(&bv);
            let mut out: Vec<f64> = v.iter().zip(&lap).map(|(vi, li)| vi - h * li).collect();
            if eps != 0.0 {
                for (o, b) in out.iter_mut().zip(&bv) {
                    *o += h * eps * b;
                }
            }
            if with_drift {
                let comps: Vec<Vec<f64>> = flux_r
                    .iter()
                    .map(|c| c.iter().zip(v).map(|(a, b)| a * b).collect())
                    .collect();
                let div = self.div(&comps);
                for (o, d) in out.iter_mut().zip(&div) {
                    *o += h * d;
                }
            }
            out
        }
    }

    /// Solve the stage equation for `u` given `g`.
    pub(crate) fn solve(
        &self,
        g: &[f64],
        h: f64,
        cfg: &SolverConfig,
    ) -> Result<(Vec<f64>, StageStats)> {
        let mut stats = StageStats::default();
        let gamma0 = self.model.nonlinearity.gamma0();
        let g_mean = mean(g);
        let mut u = g.to_vec();
        let mut f = self.residual(&u, g, h);
        let mut fnorm = self.norm(&f);
        let tol = cfg.newton_tol;

        let mut newton_ok = true;
        while fnorm > tol {
            if stats.newton_iterations >= cfg.newton_max_iter {
                newton_ok = false;
                break;
            }
            stats.newton_iterations += 1;
            let jac = self.jacobian(&u, h);
            let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
            let mut delta = vec![0.0; u.len()];
            let out = gmres(
                &jac,
                |v| self.sp.resolvent_values(v, h * gamma0),
                &rhs,
                &mut delta,
                GmresParams {
                    rtol: 1e-10,
                    atol: 0.1 * tol,
                    restart: cfg.krylov_restart,
                    max_iter: cfg.krylov_max_iter,
                    weight: self.weight(),
                },
            );
            stats.krylov_iterations += out.iterations;
            if self.conserves_mass() {
                // the zero mode of J δ is mean(δ): pin it to -mean(F)
                let shift = mean(&delta) + mean(&f);
                delta.iter_mut().for_each(|d| *d -= shift);
            }
            let mut lambda = cfg.damping;
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
                let ft = self.residual(&trial, g, h);
                let nt = self.norm(&ft);
                if nt.is_finite() && (nt <= tol || nt < (1.0 - 1e-4 * lambda) * fnorm) {
                    u = trial;
                    f = ft;
                    fnorm = nt;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                newton_ok = false;
                break;
            }
        }
        if !newton_ok {
            stats.used_fallback = true;
            self.fixed_point(&mut u, g, h, cfg, &mut stats)?;
        }
        if self.conserves_mass() {
            let shift = mean(&u) - g_mean;
            u.iter_mut().for_each(|x| *x -= shift);
        }
        Ok((u, stats))
    }

    /// `u ← (I - hcΔ)⁻¹ [g + hΔ(β(u) - cu) - hεβ(u) - h div b*(u)]` with
    /// `c = (max β' + γ₀)/2`, a contraction on high modes.
    fn fixed_point(
        &self,
        u: &mut Vec<f64>,
        g: &[f64],
        h: f64,
        cfg: &SolverConfig,
        stats: &mut StageStats,
    ) -> Result<()> {
        let nl = &self.model.nonlinearity;
        let gamma0 = nl.gamma0();
        let max_iter = cfg.newton_max_iter * 200;
        let mut c = gamma0;
        loop {
            let fnorm = self.norm(&self.residual(u, g, h));
            if fnorm <= cfg.newton_tol {
                return Ok(());
            }
            if stats.fixed_point_iterations >= max_iter || !fnorm.is_finite() {
                return Err(Error::NonConvergence {
                    step: None,
                    residual: fnorm,
                    iterations: stats.newton_iterations + stats.fixed_point_iterations,
                });
            }
            stats.fixed_point_iterations += 1;
            let bmax = u
                .iter()
                .chain(g)
                .map(|&r| nl.beta_prime(r))
                .fold(gamma0, f64::max);
            c = c.max(0.5 * (bmax + gamma0));
            let shifted: Vec<f64> = u.iter().map(|&r| nl.beta(r) - c * r).collect();
            let lap = self.lap(&shifted);
            let mut rhs: Vec<f64> = g.iter().zip(&lap).map(|(gi, li)| gi + h * li).collect();
            if self.epsilon != 0.0 {
                for (r, &ui) in rhs.iter_mut().zip(u.iter()) {
                    *r -= h * self.epsilon * nl.beta(ui);
                }
            }
            if !matches!(self.drift, DriftSampler::Zero) {
                let div = self.div(&self.flux(u));
                for (r, d) in rhs.iter_mut().zip(&div) {
                    *r -= h * d;
                }
            }
            *u = self.sp.resolvent_values(&rhs, h * c);
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Solve one implicit stage `u - hΔβ(u) + h div(b(x,u)u) = g`.
pub fn implicit_step(
    g: &ScalarField,
    h: f64,
    model: &ModelProblem,
    cfg: &SolverConfig,
) -> Result<(ScalarField, StageStats)> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("time step must be positive, got {h}")));
    }
    if model.dimension != g.grid().dim() {
        return Err(Error::Mismatch("model and grid dimensions differ".into()));
    }
    if !g.is_finite() {
        return Err(Error::invalid("stage data is not finite"));
    }
    cfg.validate()?;
    let sp = Spectral::new(*g.grid());
    let stage = StageProblem::new(model, &sp, 0.0, 0.0, 0.0, cfg.dealias);
    let (u, stats) = stage.solve(g.values(), h, cfg)?;
    Ok((ScalarField::new(*g.grid(), u)?, stats))
}
