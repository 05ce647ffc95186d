//! Restarted GMRES with right preconditioning.

/// Convergence record of a Krylov solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Parameters of [`gmres`]. Norms are discrete `L²` norms with quadrature weight `weight`.
#[derive(Debug, Clone, Copy)]
pub struct GmresParams {
    pub rtol: f64,
    pub atol: f64,
    pub restart: usize,
    pub max_iter: usize,
    pub weight: f64,
}

fn dot(a: &[f64], b: &[f64], w: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * w
}

/// Solve `A x = b` starting from `x`; the preconditioner `M⁻¹` is applied
/// on the right, so the reported residual is the true one.
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x: &mut [f64],
    p: GmresParams,
) -> KrylovOutcome {
    let n = b.len();
    let w = p.weight;
    let b_norm = dot(b, b, w).sqrt();
    let target = (p.rtol * b_norm).max(p.atol);
    let mut total = 0;

    loop {
        let ax = apply(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = dot(&r, &r, w).sqrt();
        if beta <= target || total >= p.max_iter {
            return KrylovOutcome {
                iterations: total,
                residual: beta,
                converged: beta <= target,
            };
        }
        let m = p.restart.min(p.max_iter - total).max(1);
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        v.push(r.iter().map(|ri| ri / beta).collect());
        // Hessenberg columns, Givens rotations and the rotated rhs
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m {
            let zk = precond(&v[k]);
            let mut wk = apply(&zk);
            z.push(zk);
            let mut col = vec![0.0; k + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&wk, vi, w);
                col[i] = hij;
                for (a, b) in wk.iter_mut().zip(vi) {
                    *a -= hij * b;
                }
            }
            let hnext = dot(&wk, &wk, w).sqrt();
            col[k + 1] = hnext;
            for i in 0..k {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = (col[k] * col[k] + col[k + 1] * col[k + 1]).sqrt();
            let (c, s) = if denom == 0.0 {
                (1.0, 0.0)
            } else {
                (col[k] / denom, col[k + 1] / denom)
            };
            cs.push(c);
            sn.push(s);
            col[k] = c * col[k] + s * col[k + 1];
            col[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            h.push(col);
            k += 1;
            total += 1;
            if g[k].abs() <= target || hnext == 0.0 {
                break;
            }
            v.push(wk.iter().map(|a| a / hnext).collect());
        }
        // back substitution on the k×k triangle
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in (i + 1)..k {
                s -= h[j][i] * y[j];
            }
            y[i] = if h[i][i] == 0.0 { 0.0 } else { s / h[i][i] };
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, zi) in x.iter_mut().zip(&z[j]) {
                *xi += yj * zi;
            }
        }
        debug_assert_eq!(x.len(), n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_tridiagonal() {
        let n = 50;
        let apply = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let l = if i > 0 { x[i - 1] } else { 0.0 };
                    let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                    3.0 * x[i] - 1.2 * l - 0.5 * r
                })
                .collect()
        };
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = apply(&xs);
        let mut x = vec![0.0; n];
        let out = gmres(
            apply,
            |v| v.to_vec(),
            &b,
            &mut x,
            GmresParams {
                rtol: 1e-12,
                atol: 0.0,
                restart: 10,
                max_iter: 500,
                weight: 1.0,
            },
        );
        assert!(out.converged, "{out:?}");
        let err = x.iter().zip(&xs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let d: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| (i as f64).cos()).collect();
        let mut x = vec![0.0; 20];
        let out = gmres(
            |v| v.iter().zip(&d).map(|(a, b)| a * b).collect(),
            |v| v.iter().zip(&d).map(|(a, b)| a / b).collect(),
            &b,
            &mut x,
            GmresParams {
                rtol: 1e-14,
                atol: 0.0,
                restart: 5,
                max_iter: 10,
                weight: 0.1,
            },
        );
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn zero_rhs_returns_immediately() {
        let mut x = vec![0.0; 4];
        let out = gmres(
            |v| v.to_vec(),
            |v| v.to_vec(),
            &[0.0; 4],
            &mut x,
            GmresParams {
                rtol: 1e-10,
                atol: 0.0,
                restart: 4,
                max_iter: 4,
                weight: 1.0,
            },
        );
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(x, vec![0.0; 4]);
    }
}
