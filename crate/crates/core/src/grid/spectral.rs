use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{weighted_dot, PeriodicGrid, ScalarField, VectorField};
use crate::error::{Error, Result};

/// Relative slack allowed when asserting the discrete functional inequalities.
pub const INEQUALITY_SLACK: f64 = 1e-12;

/// FFT plans and wavenumber tables for one grid.
///
/// Transform convention: `forward` is the raw DFT `F_m = Σ_j f_j e^{-2πi jm/n}`
/// (per axis); [`Spectral::coefficients`] rescales by `Δx^d` so the zero mode
/// equals the field's mass. With that scaling `|f|₂² = Σ_m |c_m|² / (2L)^d`.
///
/// The Laplacian uses `-|κ|²` on every mode, including the Nyquist mode.
/// First derivatives cannot map the Nyquist mode of a real field to a real
/// field, so gradient and divergence drop it.
pub struct Spectral {
    grid: PeriodicGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Per-axis wavenumbers.
    k: Vec<f64>,
    /// Per-axis first-derivative wavenumbers (Nyquist zeroed).
    kd: Vec<f64>,
    /// `|κ|²` per flattened mode.
    k2: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: PeriodicGrid) -> Self {
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let k: Vec<f64> = (0..n).map(|m| grid.wavenumber(m)).collect();
        let kd: Vec<f64> = (0..n)
            .map(|m| if m == n / 2 { 0.0 } else { k[m] })
            .collect();
        let k2 = (0..grid.len())
            .map(|idx| {
                let (mx, my) = (idx % n, idx / n);
                if grid.dim() == 1 {
                    k[mx] * k[mx]
                } else {
                    k[mx] * k[mx] + k[my] * k[my]
                }
            })
            .collect();
        Self {
            grid,
            fwd,
            inv,
            k,
            kd,
            k2,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    /// `|κ|²` for every flattened mode index.
    pub fn k_squared(&self) -> &[f64] {
        &self.k2
    }

    /// Per-axis wavenumber of FFT index `m`.
    pub fn wavenumber(&self, m: usize) -> f64 {
        self.k[m]
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        // rustfft processes consecutive length-n chunks: the rows
        plan.process(buf);
        if self.grid.dim() == 2 {
            transpose(buf, n);
            plan.process(buf);
            transpose(buf, n);
        }
    }

    /// Raw DFT of real samples.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(values.len(), self.grid.len());
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.fwd);
        buf
    }

    /// Inverse of [`Spectral::forward`], keeping the real part.
    pub fn inverse(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        debug_assert_eq!(spectrum.len(), self.grid.len());
        self.transform(&mut spectrum, &self.inv);
        let scale = 1.0 / self.grid.len() as f64;
        spectrum.into_iter().map(|c| c.re * scale).collect()
    }

    /// Fourier coefficients scaled so that `c_0 = mass(f)`.
    pub fn coefficients(&self, f: &ScalarField) -> Vec<Complex64> {
        let w = self.grid.cell_volume();
        self.forward(f.values()).into_iter().map(|c| c * w).collect()
    }

    /// Multiply the spectrum by a real symbol.
    pub fn apply_symbol(&self, values: &[f64], symbol: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut s = self.forward(values);
        for (i, c) in s.iter_mut().enumerate() {
            *c *= symbol(i);
        }
        self.inverse(s)
    }

    pub fn laplacian_values(&self, values: &[f64]) -> Vec<f64> {
        self.apply_symbol(values, |i| -self.k2[i])
    }

    pub fn laplacian(&self, f: &ScalarField) -> ScalarField {
        ScalarField::from_vec(self.grid, self.laplacian_values(f.values()))
    }

    /// Derivative wavenumber of flattened mode `idx` along `axis`.
    fn kd_axis(&self, idx: usize, axis: usize) -> f64 {
        let n = self.grid.n();
        if axis == 0 {
            self.kd[idx % n]
        } else {
            self.kd[idx / n]
        }
    }

    pub fn gradient_values(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let s = self.forward(values);
        (0..self.grid.dim())
            .map(|axis| {
                let d = s
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c * Complex64::new(0.0, self.kd_axis(i, axis)))
                    .collect();
                self.inverse(d)
            })
            .collect()
    }

    pub fn gradient(&self, f: &ScalarField) -> VectorField {
        VectorField::from_vecs(self.grid, self.gradient_values(f.values()))
    }

    /// Spectral divergence; the result has zero mean to rounding.
    pub fn divergence_values(&self, components: &[Vec<f64>]) -> Vec<f64> {
        debug_assert_eq!(components.len(), self.grid.dim());
        let mut acc = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        for (axis, comp) in components.iter().enumerate() {
            let s = self.forward(comp);
            for (i, (a, c)) in acc.iter_mut().zip(s).enumerate() {
                *a += c * Complex64::new(0.0, self.kd_axis(i, axis));
            }
        }
        self.inverse(acc)
    }

    pub fn divergence(&self, field: &VectorField) -> ScalarField {
        ScalarField::from_vec(self.grid, self.divergence_values(field.components()))
    }

    /// `(I - aΔ)^{-1}` for `a ≥ 0`.
    pub fn resolvent_values(&self, values: &[f64], a: f64) -> Vec<f64> {
        self.apply_symbol(values, |i| 1.0 / (1.0 + a * self.k2[i]))
    }

    /// `Γ^k f = (I - Δ)^{-k} f`, `k ∈ {1, 2}`.
    pub fn apply_gamma(&self, f: &ScalarField, k: u32) -> Result<ScalarField> {
        check_order(k)?;
        let values = self.apply_symbol(f.values(), |i| (1.0 + self.k2[i]).powi(-(k as i32)));
        Ok(ScalarField::from_vec(self.grid, values))
    }

    /// `(I - Δ) f`.
    pub fn apply_helmholtz(&self, f: &ScalarField) -> ScalarField {
        ScalarField::from_vec(
            self.grid,
            self.apply_symbol(f.values(), |i| 1.0 + self.k2[i]),
        )
    }

    /// `|f|₋ₖ = (Σ |c_κ|² / (1 + |κ|²)^k / (2L)^d)^{1/2}`; `k = 0` gives `|f|₂`.
    pub fn neg_sobolev_norm(&self, f: &ScalarField, k: u32) -> Result<f64> {
        if k > 2 {
            return Err(Error::invalid(format!("Sobolev order must be 0, 1 or 2, got {k}")));
        }
        Ok(self.weighted_spectral_norm(&self.coefficients(f), k))
    }

    fn weighted_spectral_norm(&self, coeffs: &[Complex64], k: u32) -> f64 {
        let v = self.grid.volume();
        (coeffs
            .iter()
            .zip(&self.k2)
            .map(|(c, k2)| c.norm_sqr() / (1.0 + k2).powi(k as i32))
            .sum::<f64>()
            / v)
            .sqrt()
    }

    /// `|f|₂` evaluated through Parseval.
    pub fn l2_norm_spectral(&self, f: &ScalarField) -> f64 {
        self.weighted_spectral_norm(&self.coefficients(f), 0)
    }

    /// Convolution with a Gaussian of standard deviation `width`.
    pub fn smooth_values(&self, values: &[f64], width: f64) -> Vec<f64> {
        if width == 0.0 {
            return values.to_vec();
        }
        let s2 = width * width;
        self.apply_symbol(values, |i| (-0.5 * s2 * self.k2[i]).exp())
    }

    /// Zero every mode with `|m'| > n/3` on some axis.
    pub fn dealias_values(&self, values: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        let cut = (n / 3) as i64;
        let keep = |m: usize| self.grid.signed_mode(m).abs() <= cut;
        self.apply_symbol(values, |i| {
            let ok = if self.grid.dim() == 1 {
                keep(i)
            } else {
                keep(i % n) && keep(i / n)
            };
            if ok {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Trigonometric interpolation onto a finer grid with the same box.
    pub fn interpolate_to(&self, f: &ScalarField, target: &PeriodicGrid) -> Result<ScalarField> {
        let src = self.grid;
        if target.dim() != src.dim() || target.half_width() != src.half_width() {
            return Err(Error::Mismatch("interpolation target must share box and dimension".into()));
        }
        if target.n() < src.n() {
            return Err(Error::Mismatch("interpolation target must not be coarser".into()));
        }
        if *target == src {
            return Ok(f.clone());
        }
        let (nc, nf) = (src.n(), target.n());
        let spec = self.forward(f.values());
        let scale = (nf as f64 / nc as f64).powi(src.dim() as i32);
        // a coarse Nyquist mode is split evenly between +n/2 and -n/2 on the fine grid
        let targets = |m: usize| -> Vec<(usize, f64)> {
            let s = src.signed_mode(m);
            if m == nc / 2 {
                vec![(nc / 2, 0.5), (nf - nc / 2, 0.5)]
            } else {
                vec![(s.rem_euclid(nf as i64) as usize, 1.0)]
            }
        };
        let mut out = vec![Complex64::new(0.0, 0.0); target.len()];
        for (idx, c) in spec.iter().enumerate() {
            if src.dim() == 1 {
                for (t, w) in targets(idx) {
                    out[t] += c * (w * scale);
                }
            } else {
                for (tx, wx) in targets(idx % nc) {
                    for (ty, wy) in targets(idx / nc) {
                        out[ty * nf + tx] += c * (wx * wy * scale);
                    }
                }
            }
        }
        Ok(ScalarField::from_vec(*target, Spectral::new(*target).inverse(out)))
    }

    /// Evaluate the embedding `|f|₋₁ ≤ |f|₂`, the divergence bound
    /// `|div F|₋₁ ≤ 2|F|₂` and the interpolation bound `|f|₋₁² ≤ |f|₂ |f|₋₂`.
    pub fn check_functional_inequalities(
        &self,
        f: &ScalarField,
        flux: &VectorField,
    ) -> Result<InequalityReport> {
        if f.grid() != &self.grid || flux.grid() != &self.grid {
            return Err(Error::Mismatch("fields must live on the operator's grid".into()));
        }
        let c = self.coefficients(f);
        let l2 = self.weighted_spectral_norm(&c, 0);
        let m1 = self.weighted_spectral_norm(&c, 1);
        let m2 = self.weighted_spectral_norm(&c, 2);
        let div = self.divergence(flux);
        let div_m1 = self.neg_sobolev_norm(&div, 1)?;
        let flux_l2 = flux.l2_norm();
        Ok(InequalityReport {
            l2,
            neg1: m1,
            neg2: m2,
            div_neg1: div_m1,
            flux_l2,
            embedding_ratio: ratio(m1, l2),
            divergence_ratio: ratio(div_m1, 2.0 * flux_l2),
            interpolation_ratio: ratio(m1, (l2 * m2).sqrt()),
        })
    }

    /// `⟨f, g⟩₂` on this grid.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        weighted_dot(f, g, self.grid.cell_volume())
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn check_order(k: u32) -> Result<()> {
    if k == 1 || k == 2 {
        Ok(())
    } else {
        Err(Error::invalid(format!("order must be 1 or 2, got {k}")))
    }
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// Measured norms and ratios; each ratio must stay `≤ 1 + INEQUALITY_SLACK`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct InequalityReport {
    pub l2: f64,
    pub neg1: f64,
    pub neg2: f64,
    pub div_neg1: f64,
    pub flux_l2: f64,
    pub embedding_ratio: f64,
    pub divergence_ratio: f64,
    pub interpolation_ratio: f64,
}

impl InequalityReport {
    pub fn passes(&self) -> bool {
        let ok = |r: f64| r <= 1.0 + INEQUALITY_SLACK;
        ok(self.embedding_ratio) && ok(self.divergence_ratio) && ok(self.interpolation_ratio)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{lp_norm, mass, Norm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(dim: usize, n: usize) -> PeriodicGrid {
        PeriodicGrid::new(dim, 3.0, n).unwrap()
    }

    fn random_field(g: PeriodicGrid, rng: &mut ChaCha8Rng) -> ScalarField {
        ScalarField::from_vec(g, (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn strip_nyquist(sp: &Spectral, f: &ScalarField) -> ScalarField {
        let n = sp.grid().n();
        let v = sp.apply_symbol(f.values(), |i| {
            if i % n == n / 2 || (sp.grid().dim() == 2 && i / n == n / 2) {
                0.0
            } else {
                1.0
            }
        });
        ScalarField::from_vec(*sp.grid(), v)
    }

    #[test]
    fn laplacian_of_sine_is_eigenfunction() {
        let g = grid(1, 64);
        let sp = Spectral::new(g);
        let w = PI / g.half_width();
        let f = ScalarField::from_fn(g, |x| (w * x[0]).sin());
        let lap = sp.laplacian(&f);
        let expect: Vec<f64> = f.values().iter().map(|v| -w * w * v).collect();
        assert!(max_abs_diff(lap.values(), &expect) < 1e-10);
    }

    #[test]
    fn divergence_of_constant_is_zero() {
        for dim in [1, 2] {
            let g = grid(dim, 32);
            let sp = Spectral::new(g);
            let c = VectorField::from_fn(g, |_| [1.3, -0.4]);
            assert!(lp_norm(&sp.divergence(&c), Norm::Inf) < 1e-14);
        }
    }

    #[test]
    fn div_grad_is_laplacian_off_nyquist() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [1, 2] {
            let g = grid(dim, 64);
            let sp = Spectral::new(g);
            let f = strip_nyquist(&sp, &random_field(g, &mut rng));
            let a = sp.divergence(&sp.gradient(&f));
            let b = sp.laplacian(&f);
            assert!(max_abs_diff(a.values(), b.values()) < 1e-10);
        }
    }

    #[test]
    fn gamma_round_trip_and_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in [1, 2] {
            let g = grid(dim, 32);
            let sp = Spectral::new(g);
            let f = random_field(g, &mut rng);
            let back = sp.apply_helmholtz(&sp.apply_gamma(&f, 1).unwrap());
            assert!(max_abs_diff(back.values(), f.values()) < 1e-10);
            let c = ScalarField::constant(g, 2.5);
            assert!(max_abs_diff(sp.apply_gamma(&c, 2).unwrap().values(), c.values()) < 1e-14);
        }
        let g = grid(1, 64);
        let sp = Spectral::new(g);
        let w = PI / g.half_width();
        let f = ScalarField::from_fn(g, |x| (w * x[0]).sin());
        let gf = sp.apply_gamma(&f, 1).unwrap();
        let expect: Vec<f64> = f.values().iter().map(|v| v / (1.0 + w * w)).collect();
        assert!(max_abs_diff(gf.values(), &expect) < 1e-12);
        assert!(sp.apply_gamma(&f, 3).is_err());
    }

    #[test]
    fn negative_norms_of_simple_fields() {
        let g = grid(1, 64);
        let sp = Spectral::new(g);
        let c = ScalarField::constant(g, -1.2);
        let l2 = lp_norm(&c, Norm::L2);
        for k in [1, 2] {
            assert!((sp.neg_sobolev_norm(&c, k).unwrap() - l2).abs() < 1e-12 * l2);
        }
        assert_eq!(sp.neg_sobolev_norm(&ScalarField::zeros(g), 1).unwrap(), 0.0);

        let w = PI / g.half_width();
        let f = ScalarField::from_fn(g, |x| (w * x[0]).sin());
        let expect = lp_norm(&f, Norm::L2) / (1.0 + w * w).sqrt();
        assert!((sp.neg_sobolev_norm(&f, 1).unwrap() - expect).abs() < 1e-12);
        assert!(sp.neg_sobolev_norm(&f, 3).is_err());
    }

    #[test]
    fn gamma_quadratic_form_matches_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = grid(2, 32);
        let sp = Spectral::new(g);
        let f = random_field(g, &mut rng);
        for k in [1, 2] {
            let q = sp.apply_gamma(&f, k).unwrap().dot(&f).unwrap();
            let n = sp.neg_sobolev_norm(&f, k).unwrap();
            assert!((q - n * n).abs() < 1e-12 * q.abs());
        }
    }

    #[test]
    fn divergence_preserves_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = grid(2, 32);
        let sp = Spectral::new(g);
        let f = random_field(g, &mut rng);
        let flux = VectorField::from_vecs(
            g,
            (0..2)
                .map(|_| (0..g.len()).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect(),
        );
        let h = 0.37;
        let moved = f.add_scaled(h, &sp.divergence(&flux)).unwrap();
        assert!((mass(&moved) - mass(&f)).abs() < 1e-12);
    }

    #[test]
    fn inequality_extremes() {
        let g = grid(1, 64);
        let sp = Spectral::new(g);
        let w = 3.0 * PI / g.half_width();
        let f = ScalarField::from_fn(g, |x| (w * x[0]).cos());
        let zero = VectorField::zeros(g);
        let r = sp.check_functional_inequalities(&f, &zero).unwrap();
        assert!((r.interpolation_ratio - 1.0).abs() < 1e-12);
        assert!(r.passes());

        let c = ScalarField::constant(g, 0.3);
        let r = sp.check_functional_inequalities(&c, &zero).unwrap();
        assert!((r.embedding_ratio - 1.0).abs() < 1e-12);
        assert_eq!(r.divergence_ratio, 0.0);
    }

    #[test]
    fn interpolation_is_exact_for_band_limited() {
        for dim in [1, 2] {
            let coarse = grid(dim, 16);
            let fine = grid(dim, 64);
            let w = PI / coarse.half_width();
            let f = |x: [f64; 2]| (2.0 * w * x[0]).sin() + 0.5 * (w * x[1]).cos() + 0.1;
            let up = Spectral::new(coarse)
                .interpolate_to(&ScalarField::from_fn(coarse, f), &fine)
                .unwrap();
            let exact = ScalarField::from_fn(fine, f);
            assert!(max_abs_diff(up.values(), exact.values()) < 1e-12);
        }
    }

    #[test]
    fn two_d_transform_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = grid(2, 16);
        let sp = Spectral::new(g);
        let f = random_field(g, &mut rng);
        let back = sp.inverse(sp.forward(f.values()));
        assert!(max_abs_diff(&back, f.values()) < 1e-14);
        let c = sp.coefficients(&f);
        assert!((c[0].re - mass(&f)).abs() < 1e-12);
    }
}
