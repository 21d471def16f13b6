//! Restarted GMRES and Anderson-accelerated fixed-point iteration.

use nalgebra::{DMatrix, DVector};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Right-preconditioned restarted GMRES for `A x = b`. `precond` applies an
/// approximation of `A^{-1}`.
pub fn gmres<A, P>(
    mut apply: A,
    mut precond: P,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> GmresOutcome
where
    A: FnMut(&[f64]) -> Vec<f64>,
    P: FnMut(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut total = 0;
    loop {
        let ax = apply(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        if beta / bnorm <= tol || total >= max_iter {
            return GmresOutcome { iterations: total, relative_residual: beta / bnorm, converged: beta / bnorm <= tol };
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            total += 1;
            let z = precond(&basis[k]);
            let mut w = apply(&z);
            for (i, q) in basis.iter().enumerate() {
                let h = dot(&w, q);
                hess[i][k] = h;
                for (wj, qj) in w.iter_mut().zip(q) {
                    *wj -= h * qj;
                }
            }
            // second Gram-Schmidt pass for stability
            for (i, q) in basis.iter().enumerate() {
                let h = dot(&w, q);
                hess[i][k] += h;
                for (wj, qj) in w.iter_mut().zip(q) {
                    *wj -= h * qj;
                }
            }
            let hn = norm(&w);
            hess[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let rho = (hess[k][k].powi(2) + hess[k + 1][k].powi(2)).sqrt();
            cs[k] = hess[k][k] / rho;
            sn[k] = hess[k + 1][k] / rho;
            hess[k][k] = rho;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if hn > 0.0 {
                basis.push(w.iter().map(|v| v / hn).collect());
            }
            if (g[k + 1]).abs() / bnorm <= tol || hn == 0.0 || total >= max_iter {
                break;
            }
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= hess[i][j] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            for (u, q) in update.iter_mut().zip(&basis[j]) {
                *u += yj * q;
            }
        }
        let pu = precond(&update);
        for (xi, d) in x.iter_mut().zip(&pu) {
            *xi += d;
        }
    }
}

/// Anderson mixing for `x = G(x)` with a bounded history.
pub struct Anderson {
    depth: usize,
    dx: Vec<Vec<f64>>,
    df: Vec<Vec<f64>>,
    last: Option<(Vec<f64>, Vec<f64>)>,
}

impl Anderson {
    pub fn new(depth: usize) -> Self {
        Self { depth, dx: Vec::new(), df: Vec::new(), last: None }
    }

    pub fn reset(&mut self) {
        self.dx.clear();
        self.df.clear();
        self.last = None;
    }

    /// Given the current iterate `x` and `g = G(x)`, return the next iterate.
    pub fn next(&mut self, x: &[f64], g: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = g.iter().zip(x).map(|(a, b)| a - b).collect();
        if self.depth == 0 {
            return g.to_vec();
        }
        if let Some((xp, fp)) = self.last.take() {
            self.dx.push(x.iter().zip(&xp).map(|(a, b)| a - b).collect());
            self.df.push(f.iter().zip(&fp).map(|(a, b)| a - b).collect());
            if self.dx.len() > self.depth {
                self.dx.remove(0);
                self.df.remove(0);
            }
        }
        self.last = Some((x.to_vec(), f.clone()));
        let m = self.df.len();
        if m == 0 {
            return g.to_vec();
        }
        let n = x.len();
        let a = DMatrix::from_fn(n, m, |i, j| self.df[j][i]);
        let rhs = DVector::from_column_slice(&f);
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let gamma = match svd.solve(&rhs, 1e-12 * smax.max(f64::MIN_POSITIVE)) {
            Ok(v) => v,
            Err(_) => return g.to_vec(),
        };
        let mut out = g.to_vec();
        for j in 0..m {
            let gj = gamma[j];
            for i in 0..n {
                out[i] -= gj * (self.dx[j][i] + self.df[j][i]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 40;
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                4.0 + i as f64 * 0.1
            } else if j == i + 1 {
                -1.0
            } else if i == j + 2 {
                0.7
            } else {
                0.0
            }
        });
        let xs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (&a * DVector::from_vec(xs.clone())).iter().copied().collect();
        let mut x = vec![0.0; n];
        let apply = |v: &[f64]| (&a * DVector::from_column_slice(v)).iter().copied().collect::<Vec<f64>>();
        let out = gmres(apply, |v: &[f64]| v.to_vec(), &b, &mut x, 1e-12, 10, 500);
        assert!(out.converged);
        for i in 0..n {
            assert!((x[i] - xs[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn anderson_accelerates_slow_linear_contraction() {
        // x = M x + b with spectral radius 0.99
        let n = 20;
        let diag: Vec<f64> = (0..n).map(|i| 0.99 - 0.04 * i as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let exact: Vec<f64> = (0..n).map(|i| b[i] / (1.0 - diag[i])).collect();
        let mut x = vec![0.0; n];
        let mut acc = Anderson::new(20);
        let mut iters = 0;
        loop {
            let g: Vec<f64> = (0..n).map(|i| diag[i] * x[i] + b[i]).collect();
            let res = g.iter().zip(&x).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
            if res < 1e-10 {
                break;
            }
            x = acc.next(&x, &g);
            iters += 1;
            assert!(iters < 100);
        }
        for i in 0..n {
            assert!((x[i] - exact[i]).abs() < 1e-8 * exact[i]);
        }
    }
}
