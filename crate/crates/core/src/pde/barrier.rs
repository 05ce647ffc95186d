use crate::error::{Error, Result};
use crate::model::{delta_of, ModelProblem};

/// Allowed excess of `max |u(t)|` over `η(t)` for time step `h`.
pub fn barrier_tolerance(h: f64) -> f64 {
    1e-6 + 10.0 * h
}

/// Tabulated solution of `η' = δ(η) η`, `η(0) = |u₀|_∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierTable {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    slopes: Vec<f64>,
}

impl BarrierTable {
    /// Cubic Hermite interpolation between RK4 nodes; constant beyond the ends.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let j = match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(j) => return self.values[j],
            Err(j) => j - 1,
        };
        let dt = self.times[j + 1] - self.times[j];
        let s = (t - self.times[j]) / dt;
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.values[j]
            + (s3 - 2.0 * s2 + s) * dt * self.slopes[j]
            + (-2.0 * s3 + 3.0 * s2) * self.values[j + 1]
            + (s3 - s2) * dt * self.slopes[j + 1]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Classical RK4 for the barrier ODE on `[0, T]` with `ode_steps` uniform steps.
pub fn barrier_eta(
    u0_sup: f64,
    t_end: f64,
    model: &ModelProblem,
    ode_steps: usize,
) -> Result<BarrierTable> {
    if !(u0_sup >= 0.0 && u0_sup.is_finite()) {
        return Err(Error::invalid(format!("sup of u0 must be >= 0, got {u0_sup}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::invalid(format!("horizon must be >= 0, got {t_end}")));
    }
    if ode_steps == 0 {
        return Err(Error::invalid("ode_steps must be positive"));
    }
    let rhs = |eta: f64| delta_of(model, eta) * eta;
    if t_end == 0.0 {
        return Ok(BarrierTable {
            times: vec![0.0],
            values: vec![u0_sup],
            slopes: vec![rhs(u0_sup)],
        });
    }
    let dt = t_end / ode_steps as f64;
    let mut times = Vec::with_capacity(ode_steps + 1);
    let mut values = Vec::with_capacity(ode_steps + 1);
    let mut slopes = Vec::with_capacity(ode_steps + 1);
    let mut eta = u0_sup;
    let mut k1 = rhs(eta);
    times.push(0.0);
    values.push(eta);
    slopes.push(k1);
    for i in 0..ode_steps {
        let k2 = rhs(eta + 0.5 * dt * k1);
        let k3 = rhs(eta + 0.5 * dt * k2);
        let k4 = rhs(eta + dt * k3);
        eta += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        k1 = rhs(eta);
        times.push(if i + 1 == ode_steps {
            t_end
        } else {
            (i + 1) as f64 * dt
        });
        values.push(eta);
        slopes.push(k1);
    }
    Ok(BarrierTable {
        times,
        values,
        slopes,
    })
}
