//! Small dense-free linear algebra: tridiagonal solves and preconditioned
//! MINRES for symmetric indefinite operators.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric or general tridiagonal matrix; `lower[i]` couples rows
/// `i+1` and `i`, `upper[i]` couples rows `i` and `i+1`.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
        y
    }

    /// Thomas algorithm without pivoting.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::LinearSolve(format!(
                "right-hand side has length {} for a {n}x{n} system",
                rhs.len()
            )));
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::LinearSolve("zero pivot in row 0".into()));
        }
        if n > 1 {
            c[0] = self.upper[0] / pivot;
        }
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i - 1] * c[i - 1];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::LinearSolve(format!("zero pivot in row {i}")));
            }
            if i + 1 < n {
                c[i] = self.upper[i] / pivot;
            }
            d[i] = (rhs[i] - self.lower[i - 1] * d[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(d)
    }
}

/// Solves `A x = b` for a small dense symmetric `A` by Cholesky; `None`
/// when `A` is not positive definite.
pub fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    for i in (0..n).rev() {
        y[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * y[k]).sum::<f64>()) / l[i][i];
    }
    Some(y)
}

#[derive(Debug, Clone)]
pub struct MinresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Preconditioned residual norm relative to that of `b`.
    pub relative_residual: f64,
}

/// Preconditioned MINRES for `A x = b` with symmetric `A` and symmetric
/// positive definite preconditioner `M` (applied as `M⁻¹`).
pub fn minres(
    op: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<MinresOutcome> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut v_old = vec![0.0; n];
    let mut v = b.to_vec();
    let mut z = precond(&v)?;
    let gamma0 = dot(&z, &v);
    if gamma0 < 0.0 {
        return Err(Error::LinearSolve("preconditioner is not positive definite".into()));
    }
    let mut gamma = gamma0.sqrt();
    if gamma == 0.0 {
        return Ok(MinresOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let beta0 = gamma;
    let mut gamma_old = 1.0;
    let mut eta = gamma;
    let (mut s_old, mut s) = (0.0, 0.0);
    let (mut c_old, mut c) = (1.0, 1.0);
    let mut w_old = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut relative = 1.0;
    for it in 1..=max_iter {
        for zi in z.iter_mut() {
            *zi /= gamma;
        }
        let az = op(&z);
        let delta = dot(&az, &z);
        let v_new: Vec<f64> = (0..n)
            .map(|i| az[i] - delta / gamma * v[i] - gamma / gamma_old * v_old[i])
            .collect();
        let z_new = precond(&v_new)?;
        let g2 = dot(&z_new, &v_new);
        if g2 < -1e-14 * beta0 * beta0 {
            return Err(Error::LinearSolve("preconditioner is not positive definite".into()));
        }
        let gamma_new = g2.max(0.0).sqrt();
        let alpha0 = c * delta - c_old * s * gamma;
        let alpha1 = (alpha0 * alpha0 + gamma_new * gamma_new).sqrt();
        let alpha2 = s * delta + c_old * c * gamma;
        let alpha3 = s_old * gamma;
        if alpha1 == 0.0 {
            return Err(Error::LinearSolve("MINRES breakdown".into()));
        }
        let c_new = alpha0 / alpha1;
        let s_new = gamma_new / alpha1;
        let w_new: Vec<f64> = (0..n)
            .map(|i| (z[i] - alpha3 * w_old[i] - alpha2 * w[i]) / alpha1)
            .collect();
        for i in 0..n {
            x[i] += c_new * eta * w_new[i];
        }
        eta *= -s_new;
        relative = eta.abs() / beta0;
        if relative <= tol || gamma_new == 0.0 {
            return Ok(MinresOutcome {
                x,
                iterations: it,
                relative_residual: relative,
            });
        }
        v_old = std::mem::replace(&mut v, v_new);
        z = z_new;
        gamma_old = gamma;
        gamma = gamma_new;
        c_old = c;
        c = c_new;
        s_old = s;
        s = s_new;
        w_old = std::mem::replace(&mut w, w_new);
    }
    Ok(MinresOutcome {
        x,
        iterations: max_iter,
        relative_residual: relative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian(n: usize, shift: f64) -> Tridiagonal {
        Tridiagonal {
            lower: vec![-1.0; n - 1],
            diag: vec![2.0 + shift; n],
            upper: vec![-1.0; n - 1],
        }
    }

    #[test]
    fn thomas_inverts_apply() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = laplacian(50, 0.1);
        let x: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let back = t.solve(&t.apply(&x)).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn thomas_reports_zero_pivot() {
        let t = Tridiagonal {
            lower: vec![1.0],
            diag: vec![0.0, 1.0],
            upper: vec![1.0],
        };
        assert!(t.solve(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn minres_solves_indefinite_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 80;
        let base = laplacian(n, 0.0);
        // Indefinite: subtract a shift between eigenvalues.
        let op = |x: &[f64]| -> Vec<f64> {
            base.apply(x).iter().zip(x).map(|(y, xi)| y - 0.3 * xi).collect()
        };
        let pre = laplacian(n, 0.05);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = minres(op, |v| pre.solve(v), &b, 1e-12, 500).unwrap();
        let res: f64 = op(&out.x)
            .iter()
            .zip(&b)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(res < 1e-8, "{res}");
    }

    #[test]
    fn cholesky_matches_known_solution() {
        let a = vec![vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]];
        let x = [1.0, -2.0, 0.5];
        let b: Vec<f64> = a.iter().map(|row| dot(row, &x)).collect();
        let got = cholesky_solve(&a, &b).unwrap();
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-12);
        }
        assert!(cholesky_solve(&[vec![1.0, 2.0], vec![2.0, 1.0]], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn minres_zero_rhs() {
        let t = laplacian(5, 1.0);
        let out = minres(|x| t.apply(x), |v| Ok(v.to_vec()), &[0.0; 5], 1e-12, 10).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.x.iter().all(|&v| v == 0.0));
    }
}
