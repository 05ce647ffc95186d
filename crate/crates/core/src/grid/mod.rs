//! Periodic box `[-L, L)^d`, discrete fields on it, and the spectral
//! operators (derivatives, `(I - Δ)^{-k}`, negative Sobolev norms).

mod io;
mod spectral;

pub use io::{read_field_binary, write_field_binary, write_field_csv, FIELD_HEADER_BYTES};
pub use spectral::{InequalityReport, Spectral, INEQUALITY_SLACK};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the box; the second coordinate is unused in one dimension.
pub type Point = [f64; 2];

/// Uniform periodic grid on `[-L, L)^d` with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    dim: usize,
    half_width: f64,
    n: usize,
}

impl PeriodicGrid {
    pub const MIN_POINTS: usize = 16;

    pub fn new(dim: usize, half_width: f64, n: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::invalid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::invalid(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        if n < Self::MIN_POINTS || !n.is_power_of_two() {
            return Err(Error::invalid(format!(
                "points per axis must be a power of two >= {}, got {n}",
                Self::MIN_POINTS
            )));
        }
        Ok(Self { dim, half_width, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of grid points, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Quadrature weight of one grid point, `Δx^d`.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    /// Box volume `(2L)^d`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim as i32)
    }

    /// Coordinate of grid index `j` along one axis.
    pub fn coord(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    /// Physical point of the flattened (row-major, x fastest) index.
    pub fn point(&self, index: usize) -> Point {
        let ix = index % self.n;
        let iy = index / self.n;
        if self.dim == 1 {
            [self.coord(ix), 0.0]
        } else {
            [self.coord(ix), self.coord(iy)]
        }
    }

    /// Signed mode number of FFT index `m`: `0, 1, .., n/2-1, -n/2, .., -1`.
    pub fn signed_mode(&self, m: usize) -> i64 {
        if m < self.n / 2 {
            m as i64
        } else {
            m as i64 - self.n as i64
        }
    }

    /// Wavenumber `π m' / L` of FFT index `m`.
    pub fn wavenumber(&self, m: usize) -> f64 {
        std::f64::consts::PI * self.signed_mode(m) as f64 / self.half_width
    }

    /// Map a coordinate into `[-L, L)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let w = 2.0 * self.half_width;
        let y = (x + self.half_width).rem_euclid(w) - self.half_width;
        // rem_euclid can round up to exactly w
        if y >= self.half_width {
            -self.half_width
        } else {
            y
        }
    }
}

/// Values of a real function at the grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl ScalarField {
    /// Checked constructor: length must be `n^d` and every value finite.
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Mismatch(format!(
                "field has {} values, grid expects {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value {} at index {i}",
                values[i]
            )));
        }
        Ok(Self { grid, values })
    }

    /// Unchecked constructor for values produced by the crate's own kernels.
    pub(crate) fn from_vec(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// `self + a * other`.
    pub fn add_scaled(&self, a: f64, other: &ScalarField) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self::from_vec(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x + a * y)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.add_scaled(-1.0, other)
    }

    /// Discrete `L²` inner product with `Δx^d` weighting.
    pub fn dot(&self, other: &ScalarField) -> Result<f64> {
        self.same_grid(other)?;
        Ok(weighted_dot(&self.values, &other.values, self.grid.cell_volume()))
    }

    pub(crate) fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Mismatch("fields live on different grids".into()));
        }
        Ok(())
    }
}

/// `d` component arrays on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: PeriodicGrid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: PeriodicGrid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::Mismatch(format!(
                "vector field has {} components on a {}-d grid",
                components.len(),
                grid.dim()
            )));
        }
        for c in &components {
            if c.len() != grid.len() {
                return Err(Error::Mismatch("component length differs from grid".into()));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite vector field component"));
            }
        }
        Ok(Self { grid, components })
    }

    pub(crate) fn from_vecs(grid: PeriodicGrid, components: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(components.len(), grid.dim());
        Self { grid, components }
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(Point) -> Point) -> Self {
        let mut components = vec![Vec::with_capacity(grid.len()); grid.dim()];
        for i in 0..grid.len() {
            let v = f(grid.point(i));
            for (a, c) in components.iter_mut().enumerate() {
                c.push(v[a]);
            }
        }
        Self { grid, components }
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self::from_vecs(grid, vec![vec![0.0; grid.len()]; grid.dim()])
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// `(Σ_a |F_a|₂²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let w = self.grid.cell_volume();
        self.components
            .iter()
            .map(|c| weighted_dot(c, c, w))
            .sum::<f64>()
            .sqrt()
    }
}

/// Which discrete `Lᵖ` norm to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    Inf,
}

/// `Σ f Δx^d`.
pub fn mass(f: &ScalarField) -> f64 {
    f.values.iter().sum::<f64>() * f.grid.cell_volume()
}

pub fn lp_norm(f: &ScalarField, p: Norm) -> f64 {
    let w = f.grid.cell_volume();
    match p {
        Norm::L1 => f.values.iter().map(|v| v.abs()).sum::<f64>() * w,
        Norm::L2 => weighted_dot(&f.values, &f.values, w).sqrt(),
        Norm::Inf => f.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
    }
}

/// `|a - b|₁`.
pub fn l1_distance(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.same_grid(b)?;
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        * a.grid.cell_volume())
}

pub(crate) fn weighted_dot(a: &[f64], b: &[f64], w: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(l: f64, n: usize) -> PeriodicGrid {
        PeriodicGrid::new(1, l, n).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(PeriodicGrid::new(3, 1.0, 64).is_err());
        assert!(PeriodicGrid::new(1, 0.0, 64).is_err());
        assert!(PeriodicGrid::new(1, 1.0, 8).is_err());
        assert!(PeriodicGrid::new(1, 1.0, 48).is_err());
        assert!(PeriodicGrid::new(2, 1.0, 16).is_ok());
    }

    #[test]
    fn wavenumber_set() {
        let g = g1(2.0, 16);
        let mut ms: Vec<i64> = (0..16).map(|m| g.signed_mode(m)).collect();
        ms.sort();
        assert_eq!(ms, (-8..8).collect::<Vec<_>>());
        assert!((g.wavenumber(3) - 3.0 * std::f64::consts::PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn mass_examples() {
        let g = g1(1.0, 64);
        assert_eq!(mass(&ScalarField::zeros(g)), 0.0);
        assert!((mass(&ScalarField::constant(g, 1.0)) - 2.0).abs() < 1e-14);

        let g = g1(10.0, 256);
        let gauss = ScalarField::from_fn(g, |x| {
            (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt()
        });
        assert!((mass(&gauss) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn norms_of_constants() {
        for dim in [1, 2] {
            let g = PeriodicGrid::new(dim, 1.5, 32).unwrap();
            assert_eq!(lp_norm(&ScalarField::zeros(g), Norm::L1), 0.0);
            assert_eq!(lp_norm(&ScalarField::zeros(g), Norm::L2), 0.0);
            assert_eq!(lp_norm(&ScalarField::zeros(g), Norm::Inf), 0.0);
            let c = -0.7;
            let f = ScalarField::constant(g, c);
            let vol = 3.0_f64.powi(dim as i32);
            assert!((lp_norm(&f, Norm::L1) - c.abs() * vol).abs() < 1e-12);
            assert!((lp_norm(&f, Norm::L2) - c.abs() * vol.sqrt()).abs() < 1e-12);
            assert_eq!(lp_norm(&f, Norm::Inf), 0.7);
        }
    }

    #[test]
    fn wrap_stays_in_box() {
        let g = g1(1.0, 16);
        for x in [-3.0, -1.0, -0.2, 0.999_999, 1.0, 2.5, 1e-17 - 1.0] {
            let y = g.wrap(x);
            assert!((-1.0..1.0).contains(&y), "{x} -> {y}");
        }
        assert!((g.wrap(1.25) + 0.75).abs() < 1e-15);
    }

    #[test]
    fn constructor_rejects_nan() {
        let g = g1(1.0, 16);
        let mut v = vec![0.0; 16];
        v[3] = f64::NAN;
        assert!(ScalarField::new(g, v).is_err());
        assert!(ScalarField::new(g, vec![0.0; 15]).is_err());
    }
}
