//! Problem coefficients: the diffusion nonlinearity `β`, the drift `b(x, r)`,
//! the derived diffusivity `Φ(r) = β(r)/r` and drift modulus
//! `δ(r) = sup_x |∂ₓ b(x, r)|`, plus a registry of closed-form problems.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, Point, ScalarField};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type DriftFn = Arc<dyn Fn(Point, f64) -> [f64; 2] + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(Point, f64) -> [[f64; 2]; 2] + Send + Sync>;

/// Below this magnitude `Φ(r)` returns `β'(0)` instead of `β(r)/r`.
pub const PHI_THRESHOLD: f64 = 1e-8;

/// Half width of the box on which spatial suprema are sampled.
pub const SAMPLE_HALF_WIDTH: f64 = 10.0;

/// Relative tolerance for derivative spot checks against central differences.
pub const DERIVATIVE_RTOL: f64 = 1e-5;

/// Strongly monotone `β` with its derivative.
#[derive(Clone)]
pub struct Nonlinearity {
    beta: ScalarFn,
    beta_prime: ScalarFn,
    gamma0: f64,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("gamma0", &self.gamma0)
            .finish_non_exhaustive()
    }
}

impl Nonlinearity {
    pub fn new(
        beta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        beta_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        gamma0: f64,
    ) -> Result<Self> {
        if !(gamma0.is_finite() && gamma0 > 0.0) {
            return Err(Error::invalid(format!("gamma0 must be positive, got {gamma0}")));
        }
        Ok(Self {
            beta: Arc::new(beta),
            beta_prime: Arc::new(beta_prime),
            gamma0,
        })
    }

    /// `β(r) = c r`.
    pub fn linear(c: f64) -> Self {
        Self::new(move |r| c * r, move |_| c, c).expect("positive slope")
    }

    /// `β(r) = r + r³`.
    pub fn cubic() -> Self {
        Self::new(|r| r + r * r * r, |r| 1.0 + 3.0 * r * r, 1.0).unwrap()
    }

    pub fn beta(&self, r: f64) -> f64 {
        (self.beta)(r)
    }

    pub fn beta_prime(&self, r: f64) -> f64 {
        (self.beta_prime)(r)
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    /// `Φ(r) = β(r)/r`, continued by `β'(0)` at the origin.
    pub fn phi(&self, r: f64) -> f64 {
        if r.abs() < PHI_THRESHOLD {
            self.beta_prime(0.0)
        } else {
            self.beta(r) / r
        }
    }
}

/// Bounded drift `b(x, r)` with `b(x, 0) = 0`.
#[derive(Clone)]
pub struct DriftField {
    b: DriftFn,
    b_r: DriftFn,
    b_x: JacobianFn,
    delta: Option<ScalarFn>,
    b_sup: f64,
    is_zero: bool,
}

impl fmt::Debug for DriftField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftField")
            .field("b_sup", &self.b_sup)
            .field("is_zero", &self.is_zero)
            .field("closed_form_delta", &self.delta.is_some())
            .finish_non_exhaustive()
    }
}

impl DriftField {
    pub fn zero() -> Self {
        Self {
            b: Arc::new(|_, _| [0.0; 2]),
            b_r: Arc::new(|_, _| [0.0; 2]),
            b_x: Arc::new(|_, _| [[0.0; 2]; 2]),
            delta: Some(Arc::new(|_| 0.0)),
            b_sup: 0.0,
            is_zero: true,
        }
    }

    /// A drift from its value, `∂_r` derivative, spatial Jacobian
    /// (`[i][j] = ∂b_i/∂x_j`) and global bound `sup |b|`.
    pub fn new(
        b: impl Fn(Point, f64) -> [f64; 2] + Send + Sync + 'static,
        b_r: impl Fn(Point, f64) -> [f64; 2] + Send + Sync + 'static,
        b_x: impl Fn(Point, f64) -> [[f64; 2]; 2] + Send + Sync + 'static,
        b_sup: f64,
    ) -> Self {
        Self {
            b: Arc::new(b),
            b_r: Arc::new(b_r),
            b_x: Arc::new(b_x),
            delta: None,
            b_sup,
            is_zero: false,
        }
    }

    /// Register a closed-form `δ(r)`.
    pub fn with_delta(mut self, delta: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.delta = Some(Arc::new(delta));
        self
    }

    pub fn b(&self, x: Point, r: f64) -> [f64; 2] {
        (self.b)(x, r)
    }

    pub fn b_r(&self, x: Point, r: f64) -> [f64; 2] {
        (self.b_r)(x, r)
    }

    pub fn b_x(&self, x: Point, r: f64) -> [[f64; 2]; 2] {
        (self.b_x)(x, r)
    }

    pub fn b_sup(&self) -> f64 {
        self.b_sup
    }

    pub fn is_zero(&self) -> bool {
        self.is_zero
    }

    pub fn closed_form_delta(&self) -> Option<&ScalarFn> {
        self.delta.as_ref()
    }
}

/// Smooth bump used to build initial data.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Bump {
    pub center: Point,
    pub sigma: f64,
    pub amplitude: f64,
}

/// Closed-form initial density.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum InitialCondition {
    /// Normal density with total mass `mass`.
    Gaussian { center: Point, sigma: f64, mass: f64 },
    Constant(f64),
    /// Sum of `amplitude · exp(-|x - c|² / 2σ²)`.
    Bumps(Vec<Bump>),
}

impl InitialCondition {
    pub fn gaussian(sigma: f64, mass: f64) -> Self {
        InitialCondition::Gaussian {
            center: [0.0; 2],
            sigma,
            mass,
        }
    }

    pub fn eval(&self, dim: usize, x: Point) -> f64 {
        let r2 = |c: Point| {
            let dx = x[0] - c[0];
            let dy = if dim == 2 { x[1] - c[1] } else { 0.0 };
            dx * dx + dy * dy
        };
        match self {
            InitialCondition::Gaussian {
                center,
                sigma,
                mass,
            } => {
                let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(dim as f64 / 2.0);
                mass * (-0.5 * r2(*center) / (sigma * sigma)).exp() / norm
            }
            InitialCondition::Constant(c) => *c,
            InitialCondition::Bumps(bumps) => bumps
                .iter()
                .map(|b| b.amplitude * (-0.5 * r2(b.center) / (b.sigma * b.sigma)).exp())
                .sum(),
        }
    }

    pub fn sample(&self, grid: &PeriodicGrid) -> ScalarField {
        let dim = grid.dim();
        ScalarField::from_fn(*grid, |x| self.eval(dim, x))
    }

    /// Sum of `count` random nonnegative bumps inside `[-spread, spread]^d`.
    pub fn random_bumps<R: Rng>(rng: &mut R, dim: usize, count: usize, spread: f64) -> Self {
        let bumps = (0..count)
            .map(|_| {
                let cx = rng.random_range(-spread..spread);
                let cy = if dim == 2 {
                    rng.random_range(-spread..spread)
                } else {
                    0.0
                };
                Bump {
                    center: [cx, cy],
                    sigma: rng.random_range(0.5..1.5),
                    amplitude: rng.random_range(0.1..1.0),
                }
            })
            .collect();
        InitialCondition::Bumps(bumps)
    }
}

/// The coefficient pair `(β, b)` together with a default initial density.
#[derive(Debug, Clone)]
pub struct ModelProblem {
    pub name: String,
    pub nonlinearity: Nonlinearity,
    pub drift: DriftField,
    pub dimension: usize,
    pub initial_condition: InitialCondition,
}

impl ModelProblem {
    pub fn phi(&self, r: f64) -> f64 {
        self.nonlinearity.phi(r)
    }

    /// `b*(x, r) = b(x, r) r`.
    pub fn flux(&self, x: Point, r: f64) -> [f64; 2] {
        let b = self.drift.b(x, r);
        [b[0] * r, b[1] * r]
    }

    pub fn initial_field(&self, grid: &PeriodicGrid) -> ScalarField {
        self.initial_condition.sample(grid)
    }
}

/// Names accepted by [`registered`].
pub const REGISTRY: [&str; 4] = ["LINEAR", "CUBIC", "CUBIC-DRIFT", "LINEAR-DRIFT"];

/// Radius of the compactly supported bump that shapes the registered drifts.
pub const BUMP_RADIUS: f64 = 3.0;

/// Build a registered model in dimension `dim`.
pub fn registered(name: &str, dim: usize) -> Result<ModelProblem> {
    if !(dim == 1 || dim == 2) {
        return Err(Error::invalid(format!("dimension must be 1 or 2, got {dim}")));
    }
    let centered = InitialCondition::gaussian(1.0, 1.0);
    let shifted = |mass| InitialCondition::Gaussian {
        center: [-1.0, if dim == 2 { -1.0 } else { 0.0 }],
        sigma: 1.0,
        mass,
    };
    let (nonlinearity, drift, ic) = match name {
        "LINEAR" => (Nonlinearity::linear(1.0), DriftField::zero(), centered),
        "CUBIC" => (
            Nonlinearity::cubic(),
            DriftField::zero(),
            InitialCondition::gaussian(1.0, 2.5),
        ),
        "CUBIC-DRIFT" => (Nonlinearity::cubic(), bump_drift(dim, 1.0), shifted(2.5)),
        "LINEAR-DRIFT" => (Nonlinearity::linear(1.0), bump_drift(dim, 1.0), shifted(1.0)),
        _ => {
            return Err(Error::Unknown {
                kind: "model",
                name: name.to_string(),
                known: REGISTRY.join(", "),
            })
        }
    };
    Ok(ModelProblem {
        name: name.to_string(),
        nonlinearity,
        drift,
        dimension: dim,
        initial_condition: ic,
    })
}

/// `ψ(x) = exp(1 - 1/(1 - |x|²/a²))` on `|x| < a`, zero outside; `ψ(0) = 1`.
pub fn bump(x: Point, dim: usize) -> f64 {
    let s = radius_sq(x, dim) / (BUMP_RADIUS * BUMP_RADIUS);
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s)).exp()
    }
}

pub fn bump_gradient(x: Point, dim: usize) -> [f64; 2] {
    let a2 = BUMP_RADIUS * BUMP_RADIUS;
    let s = radius_sq(x, dim) / a2;
    if s >= 1.0 {
        return [0.0; 2];
    }
    let psi = (1.0 - 1.0 / (1.0 - s)).exp();
    let c = -2.0 * psi / (a2 * (1.0 - s) * (1.0 - s));
    [c * x[0], if dim == 2 { c * x[1] } else { 0.0 }]
}

fn radius_sq(x: Point, dim: usize) -> f64 {
    if dim == 2 {
        x[0] * x[0] + x[1] * x[1]
    } else {
        x[0] * x[0]
    }
}

/// `sup_x |∇ψ|`, found by dense sampling of the radial profile plus
/// golden-section refinement.
pub fn bump_gradient_sup() -> f64 {
    let g = |rho: f64| {
        let v = bump_gradient([rho, 0.0], 1);
        v[0].abs()
    };
    let a = BUMP_RADIUS;
    let samples = 20_000;
    let (mut best, mut arg) = (0.0, 0.0);
    for i in 1..samples {
        let rho = a * i as f64 / samples as f64;
        let v = g(rho);
        if v > best {
            best = v;
            arg = rho;
        }
    }
    let step = a / samples as f64;
    let (mut lo, mut hi) = ((arg - step).max(0.0), (arg + step).min(a));
    let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    for _ in 0..100 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if g(m1) < g(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    best.max(g(0.5 * (lo + hi)))
}

/// `b(x, r) = A tanh(r) ψ(x) ê` with `ê = (1, 1)/√2` in two dimensions.
fn bump_drift(dim: usize, amplitude: f64) -> DriftField {
    let e = if dim == 2 {
        [std::f64::consts::FRAC_1_SQRT_2; 2]
    } else {
        [1.0, 0.0]
    };
    let g = bump_gradient_sup();
    DriftField::new(
        move |x, r| {
            let s = amplitude * r.tanh() * bump(x, dim);
            [s * e[0], s * e[1]]
        },
        move |x, r| {
            let c = r.cosh();
            let s = amplitude * bump(x, dim) / (c * c);
            [s * e[0], s * e[1]]
        },
        move |x, r| {
            let t = amplitude * r.tanh();
            let gp = bump_gradient(x, dim);
            [
                [t * e[0] * gp[0], t * e[0] * gp[1]],
                [t * e[1] * gp[0], t * e[1] * gp[1]],
            ]
        },
        amplitude,
    )
    .with_delta(move |r| amplitude * r.tanh().abs() * g)
}

/// Largest singular value of the leading `dim × dim` block.
pub fn operator_norm(j: [[f64; 2]; 2], dim: usize) -> f64 {
    if dim == 1 {
        return j[0][0].abs();
    }
    let [[a, b], [c, d]] = j;
    let s = 0.5 * (a * a + b * b + c * c + d * d);
    let det = a * d - b * c;
    (s + (s * s - det * det).max(0.0).sqrt()).sqrt()
}

fn vec_norm(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Sample points of the spatial box used for suprema over `x`.
pub fn spatial_samples(dim: usize, per_axis: usize) -> Vec<Point> {
    let m = per_axis.max(2);
    let axis: Vec<f64> = (0..m)
        .map(|i| -SAMPLE_HALF_WIDTH + 2.0 * SAMPLE_HALF_WIDTH * i as f64 / (m - 1) as f64)
        .collect();
    if dim == 1 {
        axis.iter().map(|&x| [x, 0.0]).collect()
    } else {
        axis.iter()
            .flat_map(|&y| axis.iter().map(move |&x| [x, y]))
            .collect()
    }
}

/// `Φ(r)`.
pub fn phi(model: &ModelProblem, r: f64) -> f64 {
    model.phi(r)
}

/// Spatial grid on which `δ` is maximised when no closed form is registered.
fn delta_samples(dim: usize) -> Vec<Point> {
    spatial_samples(dim, if dim == 1 { 4001 } else { 201 })
}

/// `δ(r) = sup_x |b_x(x, r)|`: the registered closed form, otherwise a grid maximum.
pub fn delta_of(model: &ModelProblem, r: f64) -> f64 {
    if let Some(d) = model.drift.closed_form_delta() {
        return d(r);
    }
    delta_sampled(model, r)
}

fn delta_sampled(model: &ModelProblem, r: f64) -> f64 {
    delta_samples(model.dimension)
        .into_iter()
        .map(|x| operator_norm(model.drift.b_x(x, r), model.dimension))
        .fold(0.0, f64::max)
}

/// `(β_M, b_M)`: `max β'` and `max |b_r|` over `|r| ≤ M`.
pub fn lipschitz_constants(model: &ModelProblem, m: f64) -> Result<(f64, f64)> {
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::invalid(format!("M must be positive, got {m}")));
    }
    let rs = symmetric_grid(m, 2000);
    let beta_m = rs
        .iter()
        .map(|&r| model.nonlinearity.beta_prime(r))
        .fold(f64::NEG_INFINITY, f64::max);
    let b_m = if model.drift.is_zero() {
        0.0
    } else {
        let xs = spatial_samples(model.dimension, if model.dimension == 1 { 401 } else { 61 });
        let rs = symmetric_grid(m, 200);
        let mut best = 0.0_f64;
        for x in &xs {
            for &r in &rs {
                best = best.max(vec_norm(model.drift.b_r(*x, r)));
            }
        }
        best
    };
    Ok((beta_m, b_m))
}

/// `-M, .., 0, .., M` with `2 half + 1` points.
fn symmetric_grid(m: f64, half: usize) -> Vec<f64> {
    (0..=2 * half)
        .map(|i| m * (i as f64 - half as f64) / half as f64)
        .collect()
}

/// Outcome of one assumption check. `worst` is the largest violation
/// measure found (non-positive when the check passes).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub pass: bool,
    pub worst: f64,
    pub at: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub bound: f64,
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passes(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Tracks the worst sample of a check.
struct Worst {
    name: &'static str,
    value: f64,
    at: String,
}

impl Worst {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            value: f64::NEG_INFINITY,
            at: String::new(),
        }
    }

    fn update(&mut self, value: f64, at: impl FnOnce() -> String) {
        // NaN counts as a violation
        let v = if value.is_nan() { f64::INFINITY } else { value };
        if v > self.value {
            self.value = v;
            self.at = at();
        }
    }

    fn finish(self) -> AssumptionCheck {
        AssumptionCheck {
            name: self.name,
            pass: self.value <= 0.0,
            worst: self.value,
            at: self.at,
        }
    }
}

/// Sample the standing assumptions on `[-M, M]` and the spatial box.
pub fn validate_assumptions(
    model: &ModelProblem,
    m: f64,
    n_samples: usize,
) -> Result<ValidationReport> {
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::invalid(format!("M must be positive, got {m}")));
    }
    if n_samples < 100 {
        return Err(Error::invalid(format!("need at least 100 samples, got {n_samples}")));
    }
    let nl = &model.nonlinearity;
    let g0 = nl.gamma0();
    let dim = model.dimension;
    let rs: Vec<f64> = (0..n_samples)
        .map(|i| -m + 2.0 * m * i as f64 / (n_samples - 1) as f64)
        .collect();
    let mut checks = Vec::new();

    let mut w = Worst::new("beta_vanishes_at_zero");
    w.update(nl.beta(0.0).abs() - 1e-14, || "r=0".into());
    checks.push(w.finish());

    // (β(r1) - β(r2))(r1 - r2) ≥ γ₀ |r1 - r2|², as a difference-quotient bound
    let mut w = Worst::new("strong_monotonicity");
    let pair_rs: Vec<f64> = rs.iter().step_by((n_samples / 400).max(1)).copied().collect();
    for (i, &r1) in pair_rs.iter().enumerate() {
        for &r2 in &pair_rs[i + 1..] {
            let q = (nl.beta(r1) - nl.beta(r2)) / (r1 - r2);
            w.update(g0 * (1.0 - 1e-12) - q, || format!("r1={r1:e}, r2={r2:e}"));
        }
    }
    checks.push(w.finish());

    let mut w = Worst::new("beta_prime_bounded_below");
    for &r in &rs {
        w.update(g0 * (1.0 - 1e-12) - nl.beta_prime(r), || format!("r={r:e}"));
    }
    checks.push(w.finish());

    let mut w = Worst::new("beta_prime_consistent");
    for &r in &rs {
        let h = 1e-5 * r.abs().max(1.0);
        let fd = (nl.beta(r + h) - nl.beta(r - h)) / (2.0 * h);
        let d = nl.beta_prime(r);
        w.update((d - fd).abs() - DERIVATIVE_RTOL * (1.0 + d.abs()), || format!("r={r:e}"));
    }
    checks.push(w.finish());

    let mut w = Worst::new("phi_bounded_below");
    for &r in &rs {
        w.update(g0 * (1.0 - 1e-12) - nl.phi(r), || format!("r={r:e}"));
    }
    checks.push(w.finish());

    // C² probe: second differences at two step sizes must agree
    let mut w = Worst::new("phi_twice_differentiable");
    let s = 1e-2 * m.max(1.0);
    for &r in rs.iter().step_by((n_samples / 200).max(1)) {
        let d2 = |h: f64| (nl.phi(r + h) - 2.0 * nl.phi(r) + nl.phi(r - h)) / (h * h);
        let (a, b) = (d2(s), d2(0.5 * s));
        w.update((a - b).abs() - 1e-2 * (1.0 + b.abs()), || format!("r={r:e}"));
    }
    checks.push(w.finish());

    let xs = spatial_samples(dim, if dim == 1 { n_samples } else { (n_samples as f64).sqrt().ceil() as usize });
    let drs: Vec<f64> = rs.iter().step_by((n_samples / 100).max(1)).copied().collect();

    let mut w = Worst::new("drift_vanishes_at_zero");
    for x in &xs {
        w.update(vec_norm(model.drift.b(*x, 0.0)) - 1e-14, || format!("x={x:?}"));
    }
    checks.push(w.finish());

    let mut w_bound = Worst::new("drift_bounded");
    let mut w_deriv = Worst::new("drift_derivatives_consistent");
    let mut w_delta = Worst::new("delta_dominates_jacobian");
    let b_sup = model.drift.b_sup();
    let deltas: Vec<f64> = drs.iter().map(|&r| delta_of(model, r)).collect();
    for x in &xs {
        for (&r, &delta) in drs.iter().zip(&deltas) {
            let b = model.drift.b(*x, r);
            w_bound.update(vec_norm(b) - b_sup * (1.0 + 1e-12), || format!("x={x:?}, r={r:e}"));

            let h = 1e-5 * r.abs().max(1.0);
            let bp = model.drift.b(*x, r + h);
            let bm = model.drift.b(*x, r - h);
            let br = model.drift.b_r(*x, r);
            let jac = model.drift.b_x(*x, r);
            let mut err = 0.0_f64;
            for i in 0..dim {
                let fd = (bp[i] - bm[i]) / (2.0 * h);
                err = err.max((br[i] - fd).abs() - DERIVATIVE_RTOL * (1.0 + br[i].abs()));
            }
            let hx = 1e-5;
            for j in 0..dim {
                let mut xp = *x;
                let mut xm = *x;
                xp[j] += hx;
                xm[j] -= hx;
                let (fp, fm) = (model.drift.b(xp, r), model.drift.b(xm, r));
                for i in 0..dim {
                    let fd = (fp[i] - fm[i]) / (2.0 * hx);
                    err = err.max((jac[i][j] - fd).abs() - DERIVATIVE_RTOL * (1.0 + jac[i][j].abs()));
                }
            }
            w_deriv.update(err, || format!("x={x:?}, r={r:e}"));

            let norm = operator_norm(jac, dim);
            w_delta.update(norm - delta * (1.0 + 1e-9) - 1e-14, || format!("x={x:?}, r={r:e}"));
        }
    }
    if deltas.iter().any(|d| !d.is_finite()) {
        w_delta.update(f64::INFINITY, || "delta not finite".into());
    }
    checks.push(w_bound.finish());
    checks.push(w_deriv.finish());
    checks.push(w_delta.finish());

    let mut w = Worst::new("initial_condition_admissible");
    for x in &xs {
        let u = model.initial_condition.eval(dim, *x);
        let v = if u.is_finite() { -u } else { f64::INFINITY };
        w.update(v, || format!("x={x:?}"));
    }
    checks.push(w.finish());

    Ok(ValidationReport {
        model: model.name.clone(),
        bound: m,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn custom(nl: Nonlinearity, drift: DriftField, dim: usize) -> ModelProblem {
        ModelProblem {
            name: "custom".into(),
            nonlinearity: nl,
            drift,
            dimension: dim,
            initial_condition: InitialCondition::gaussian(1.0, 1.0),
        }
    }

    #[test]
    fn identity_model_passes() {
        let m = custom(Nonlinearity::linear(1.0), DriftField::zero(), 1);
        let r = validate_assumptions(&m, 3.0, 200).unwrap();
        assert!(r.passes(), "{r:#?}");
    }

    #[test]
    fn pure_cube_fails_monotonicity() {
        let nl = Nonlinearity::new(|r| r * r * r, |r| 3.0 * r * r, 1.0).unwrap();
        let m = custom(nl, DriftField::zero(), 1);
        let r = validate_assumptions(&m, 2.0, 201).unwrap();
        assert!(!r.passes());
        let c = r.check("strong_monotonicity").unwrap();
        assert!(!c.pass);
        assert!(!r.check("beta_prime_bounded_below").unwrap().pass);
        assert!(r.check("beta_prime_consistent").unwrap().pass);
    }

    #[test]
    fn gaussian_drift_model_passes() {
        for dim in [1, 2] {
            let e = if dim == 2 {
                [std::f64::consts::FRAC_1_SQRT_2; 2]
            } else {
                [1.0, 0.0]
            };
            let g = move |x: Point| (-(x[0] * x[0] + x[1] * x[1])).exp();
            let drift = DriftField::new(
                move |x, r| [r.tanh() * g(x) * e[0], r.tanh() * g(x) * e[1]],
                move |x, r| {
                    let s = g(x) / (r.cosh() * r.cosh());
                    [s * e[0], s * e[1]]
                },
                move |x, r| {
                    let t = r.tanh() * g(x);
                    let gp = [-2.0 * x[0], -2.0 * x[1]];
                    [
                        [t * e[0] * gp[0], t * e[0] * gp[1]],
                        [t * e[1] * gp[0], t * e[1] * gp[1]],
                    ]
                },
                1.0,
            );
            let m = custom(Nonlinearity::cubic(), drift, dim);
            let r = validate_assumptions(&m, 2.0, 400).unwrap();
            assert!(r.passes(), "{r:#?}");
        }
    }

    #[test]
    fn validation_rejects_bad_arguments() {
        let m = registered("LINEAR", 1).unwrap();
        assert!(validate_assumptions(&m, 0.0, 200).is_err());
        assert!(validate_assumptions(&m, -1.0, 200).is_err());
        assert!(validate_assumptions(&m, 1.0, 0).is_err());
        assert!(lipschitz_constants(&m, 0.0).is_err());
    }

    #[test]
    fn registry_models_validate() {
        for dim in [1, 2] {
            for name in REGISTRY {
                let m = registered(name, dim).unwrap();
                let g = PeriodicGrid::new(dim, 10.0, 64).unwrap();
                let sup = m.initial_field(&g).max();
                let r = validate_assumptions(&m, 2.0 * sup + 1.0, 200).unwrap();
                assert!(r.passes(), "{name} d={dim}: {r:#?}");
            }
        }
        assert!(matches!(registered("QUARTIC", 1), Err(Error::Unknown { .. })));
    }

    #[test]
    fn lipschitz_examples() {
        let cubic = registered("CUBIC", 1).unwrap();
        let (bm, dm) = lipschitz_constants(&cubic, 2.0).unwrap();
        assert!((bm - 13.0).abs() < 1e-12);
        assert_eq!(dm, 0.0);
        let (bm, _) = lipschitz_constants(&cubic, 0.5).unwrap();
        assert!((bm - 1.75).abs() < 1e-12);
        let drift = registered("CUBIC-DRIFT", 1).unwrap();
        let (_, dm) = lipschitz_constants(&drift, 1.0).unwrap();
        // sech²(0) ψ(0) = 1
        assert!((dm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phi_examples() {
        let lin = registered("LINEAR", 1).unwrap();
        assert_eq!(phi(&lin, 3.7), 1.0);
        let cubic = registered("CUBIC", 1).unwrap();
        assert!((phi(&cubic, 2.0) - 5.0).abs() < 1e-15);
        assert_eq!(phi(&cubic, 0.0), 1.0);
    }

    #[test]
    fn delta_examples() {
        let lin = registered("LINEAR", 1).unwrap();
        assert_eq!(delta_of(&lin, 0.3), 0.0);

        // b = r sin(x), registered without a closed-form δ
        let sine = custom(
            Nonlinearity::linear(1.0),
            DriftField::new(
                |x, r| [r * x[0].sin(), 0.0],
                |x, _| [x[0].sin(), 0.0],
                |x, r| [[r * x[0].cos(), 0.0], [0.0; 2]],
                f64::INFINITY,
            ),
            1,
        );
        for r in [-2.0, -0.5, 0.0, 0.25, 1.5] {
            assert!((delta_of(&sine, r) - r.abs()).abs() < 1e-12);
        }

        // closed form against the dense grid oracle
        for dim in [1, 2] {
            let m = registered("CUBIC-DRIFT", dim).unwrap();
            for r in [-1.5, -0.3, 0.0, 0.7, 2.0] {
                let closed = delta_of(&m, r);
                let mut oracle = 0.0_f64;
                let k = 3001;
                for i in 0..k {
                    let rho = BUMP_RADIUS * i as f64 / (k - 1) as f64;
                    let x = if dim == 1 {
                        [rho, 0.0]
                    } else {
                        [rho * std::f64::consts::FRAC_1_SQRT_2; 2]
                    };
                    oracle = oracle.max(operator_norm(m.drift.b_x(x, r), dim));
                }
                assert!(closed >= oracle - 1e-12);
                assert!((closed - oracle).abs() < 1e-6, "{closed} vs {oracle}");
            }
        }
    }

    proptest! {
        #[test]
        fn phi_times_r_is_beta(r in prop_oneof![-50.0f64..-1e-7, 1e-7f64..50.0]) {
            let nl = Nonlinearity::cubic();
            let lhs = nl.phi(r) * r;
            prop_assert!((lhs - nl.beta(r)).abs() <= 4.0 * f64::EPSILON * nl.beta(r).abs());
        }

        #[test]
        fn lipschitz_monotone_in_bound(m1 in 0.01f64..3.0, extra in 0.0f64..3.0) {
            for name in ["CUBIC", "CUBIC-DRIFT"] {
                let model = registered(name, 1).unwrap();
                let (b1, d1) = lipschitz_constants(&model, m1).unwrap();
                let (b2, d2) = lipschitz_constants(&model, m1 + extra).unwrap();
                prop_assert!(b1 <= b2);
                prop_assert!(d1 <= d2);
            }
        }
    }
}
