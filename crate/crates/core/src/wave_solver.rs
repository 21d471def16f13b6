//! Travelling waves of the rescaled lattice.
//!
//! A travelling wave `w(n - c t)` with `c^2 = 1 + eps^2 lambda` solves the
//! fixed-point problem `w = (1 + eps^2 lambda)^{-1} Lambda * V'_eps(w)`,
//! where `Lambda` is the unit hat kernel. The two-scale solver splits the
//! spectrum at `|k| = eps^p`: the high band is eliminated by an inner
//! fixed-point iteration and the low band is found by Newton's method on a
//! small dense even-mode block. An independent full Newton-Krylov solve on
//! all even modes serves as the oracle.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::{big_l2_norm, hat_symbol, sup_norm, Parity, SpectralGrid, VariableTag, WaveProfile};
use crate::krylov::{gmres, Anderson};
use crate::nonlinearities::{force_raw, n_raw, stiffness_raw};
use crate::params::{Family, ModelParams};
use crate::profiles::dilate;
use crate::rng::{seeded, uniform};

/// Tolerances and limits of the two-scale solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveSolverOptions {
    pub inner_tol: f64,
    pub inner_max: usize,
    /// History length of the Anderson mixing applied to the inner map
    /// (0 gives the plain contraction).
    pub inner_depth: usize,
    pub outer_tol: f64,
    pub outer_max: usize,
    pub max_halvings: usize,
    pub linear_tol: f64,
}

impl Default for WaveSolverOptions {
    fn default() -> Self {
        Self {
            inner_tol: 1e-12,
            inner_max: 200,
            inner_depth: 20,
            outer_tol: 1e-10,
            outer_max: 50,
            max_halvings: 8,
            linear_tol: 1e-13,
        }
    }
}

/// Diagnostics of one inner solve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InnerOutcome {
    pub iterations: usize,
    pub residual: f64,
    /// Largest observed `||G(v_m) - G(v_{m-1})|| / ||v_m - v_{m-1}||`.
    pub lipschitz_estimate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverDiagnostics {
    pub outer_iterations: usize,
    /// Norm of `f_eps(u) - h_eps(u, v(u))` after each outer iteration.
    pub outer_residuals: Vec<f64>,
    pub inner_iterations: usize,
    pub inner_lipschitz_max: f64,
    pub halvings: usize,
    pub low_modes: usize,
    pub linear_iterations: usize,
}

/// Discretised travelling-wave problem on a z-grid.
pub struct TravellingProblem {
    pub params: ModelParams,
    pub grid: SpectralGrid,
    /// `hat(k) / (1 + mu)` per FFT slot.
    scaled_hat: Vec<f64>,
    low: Vec<bool>,
    low_basis: Vec<Vec<f64>>,
}

fn check_strain(w: &[f64]) -> Result<()> {
    match w.iter().find(|&&x| !(x > -1.0)) {
        Some(x) => Err(CoreError::Domain(format!("strain {x} outside (-1, inf)"))),
        None => Ok(()),
    }
}

impl TravellingProblem {
    pub fn new(params: ModelParams, grid: SpectralGrid) -> Result<Self> {
        if params.family != Family::HertzLog {
            return Err(CoreError::InvalidParameter("travelling-wave solver supports the hertz-log family only".into()));
        }
        let n = grid.n_points();
        let mu = params.mu();
        let edge = params.low_band_edge();
        let scaled_hat = (0..n).map(|m| hat_symbol(grid.wavenumber(m)) / (1.0 + mu)).collect();
        let low: Vec<bool> = (0..n).map(|m| grid.wavenumber(m).abs() <= edge).collect();
        let nodes = grid.nodes();
        let low_basis = (0..=n / 2)
            .filter(|&m| low[m])
            .map(|m| {
                let k = grid.wavenumber(m);
                nodes.iter().map(|z| (k * z).cos()).collect()
            })
            .collect();
        Ok(Self { params, grid, scaled_hat, low, low_basis })
    }

    pub fn low_mode_count(&self) -> usize {
        self.low_basis.len()
    }

    /// `A(w) = (1 + mu)^{-1} Lambda * V'(w)`.
    pub fn fixed_point_map(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_strain(w)?;
        let e2 = self.params.eps2();
        let f: Vec<f64> = w.iter().map(|&x| force_raw(x, e2)).collect();
        let mut out = self.grid.apply_multiplier(&f, |m, _| Complex64::new(self.scaled_hat[m], 0.0));
        self.grid.symmetrize(&mut out, Parity::Even);
        Ok(out)
    }

    /// `w - A(w)`.
    pub fn fixed_point_residual(&self, w: &[f64]) -> Result<Vec<f64>> {
        let a = self.fixed_point_map(w)?;
        Ok(w.iter().zip(&a).map(|(x, y)| x - y).collect())
    }

    fn band_multiply(&self, values: &[f64], low_band: bool, scale_hat: bool) -> Vec<f64> {
        let mut out = self.grid.apply_multiplier(values, |m, _| {
            if self.low[m] == low_band {
                Complex64::new(if scale_hat { self.scaled_hat[m] } else { 1.0 }, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        self.grid.symmetrize(&mut out, Parity::Even);
        out
    }

    /// Inner map `v -> (1 + mu)^{-1} Lambda_J (v + chi_J N_eps(u + v))`.
    pub fn inner_map(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let e2 = self.params.eps2();
        let mut s = Vec::with_capacity(u.len());
        for (&a, &b) in u.iter().zip(v) {
            let w = a + b;
            if !(w > -1.0) {
                return Err(CoreError::Domain(format!("strain {w} outside (-1, inf)")));
            }
            s.push(b + n_raw(w, e2));
        }
        Ok(self.band_multiply(&s, false, true))
    }

    /// Fixed point of the inner map for a given low-band part `u`.
    pub fn inner_contraction(&self, u: &[f64], v0: &[f64], opts: &WaveSolverOptions) -> Result<(Vec<f64>, InnerOutcome)> {
        let mut v = self.band_multiply(v0, false, false);
        let mut acc = Anderson::new(opts.inner_depth);
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut lipschitz: f64 = 0.0;
        let mut expanding = 0;
        for it in 1..=opts.inner_max {
            let g = self.inner_map(u, &v)?;
            let res = g.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if let Some((vp, gp)) = &prev {
                let dv = big_l2_norm(&self.grid, &v.iter().zip(vp).map(|(a, b)| a - b).collect::<Vec<_>>());
                let dg = big_l2_norm(&self.grid, &g.iter().zip(gp).map(|(a, b)| a - b).collect::<Vec<_>>());
                if dv > 1e-9 * (1.0 + big_l2_norm(&self.grid, &v)) {
                    let ratio = dg / dv;
                    lipschitz = lipschitz.max(ratio);
                    expanding = if ratio >= 1.0 { expanding + 1 } else { 0 };
                    if expanding >= 3 {
                        return Err(CoreError::NonContraction(format!(
                            "inner map ratio {ratio:.4} >= 1 for 3 consecutive iterations"
                        )));
                    }
                }
            }
            if res <= opts.inner_tol {
                return Ok((g, InnerOutcome { iterations: it, residual: res, lipschitz_estimate: lipschitz }));
            }
            let mut next = acc.next(&v, &g);
            self.grid.symmetrize(&mut next, Parity::Even);
            prev = Some((v, g));
            v = next;
        }
        Err(CoreError::NotConverged(format!("inner iteration exceeded {} steps", opts.inner_max)))
    }

    fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let a1 = 1.0 + self.params.eps2();
        self.grid.apply_multiplier(r, |m, _| Complex64::new(1.0 / (1.0 - self.scaled_hat[m] * a1), 0.0))
    }

    /// Derivative `V = dv/du [U]` of the inner fixed point at `w = u + v(u)`.
    fn inner_derivative(&self, w: &[f64], dir: &[f64], opts: &WaveSolverOptions) -> Result<(Vec<f64>, usize)> {
        let e2 = self.params.eps2();
        let dn: Vec<f64> = w.iter().map(|&x| stiffness_raw(x, e2) - 1.0).collect();
        let rhs_src: Vec<f64> = dn.iter().zip(dir).map(|(a, b)| a * b).collect();
        let rhs = self.band_multiply(&rhs_src, false, true);
        let a1 = 1.0 + e2;
        let apply = |x: &[f64]| {
            let s: Vec<f64> = x.iter().zip(&dn).map(|(a, b)| a * (1.0 + b)).collect();
            let t = self.band_multiply(&s, false, true);
            x.iter().zip(&t).map(|(a, b)| a - b).collect::<Vec<f64>>()
        };
        let precond = |r: &[f64]| {
            self.grid.apply_multiplier(r, |m, _| {
                if self.low[m] {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(1.0 / (1.0 - self.scaled_hat[m] * a1), 0.0)
                }
            })
        };
        let mut x = vec![0.0; w.len()];
        let out = gmres(apply, precond, &rhs, &mut x, opts.linear_tol, 60, 600);
        if !out.converged && out.relative_residual > 1e-9 {
            return Err(CoreError::NotConverged(format!(
                "inner linear solve stalled at relative residual {:.3e}",
                out.relative_residual
            )));
        }
        Ok((x, out.iterations))
    }

    fn low_coefficients(&self, f: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.low_basis.len(),
            self.low_basis.iter().map(|b| {
                let num: f64 = b.iter().zip(f).map(|(x, y)| x * y).sum();
                let den: f64 = b.iter().map(|x| x * x).sum();
                num / den
            }),
        )
    }

    fn from_low_coefficients(&self, c: &DVector<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_points()];
        for (b, ci) in self.low_basis.iter().zip(c.iter()) {
            for (o, x) in out.iter_mut().zip(b) {
                *o += ci * x;
            }
        }
        out
    }

    /// Positive multiplier turning the low-band fixed-point residual into
    /// `f_eps - h_eps`.
    fn outer_weight(&self, k: f64) -> f64 {
        let e2 = self.params.eps2();
        (1.0 + self.params.mu()) * (1.0 + k * k / 12.0) / (e2 * (self.params.lambda - 1.0) + k * k / 12.0)
    }

    fn outer_norm(&self, r_low: &DVector<f64>) -> f64 {
        let mut idx = 0;
        let mut worst: f64 = 0.0;
        for m in 0..=self.grid.n_points() / 2 {
            if self.low[m] {
                worst = worst.max((self.outer_weight(self.grid.wavenumber(m)) * r_low[idx]).abs());
                idx += 1;
            }
        }
        worst
    }

    fn check_ball(&self, w: &[f64]) -> Result<()> {
        let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = sup_norm(w);
        let (r, big_r) = (self.params.ball_r, self.params.ball_big_r);
        if lo <= r || hi >= big_r {
            return Err(CoreError::BallViolation(format!(
                "iterate has min {lo:.4e}, sup {hi:.4e}; admissible range is ({r}, {big_r})"
            )));
        }
        Ok(())
    }

    /// Newton iteration for the low band starting from `w_app`.
    pub fn outer_newton(&self, w_app: &[f64], opts: &WaveSolverOptions) -> Result<(Vec<f64>, SolverDiagnostics)> {
        let mut u = self.band_multiply(w_app, true, false);
        let mut v = self.band_multiply(w_app, false, false);
        let mut diag = SolverDiagnostics {
            outer_iterations: 0,
            outer_residuals: Vec::new(),
            inner_iterations: 0,
            inner_lipschitz_max: 0.0,
            halvings: 0,
            low_modes: self.low_basis.len(),
            linear_iterations: 0,
        };
        let evaluate = |u: &[f64], v0: &[f64], diag: &mut SolverDiagnostics| -> Result<(Vec<f64>, Vec<f64>, DVector<f64>)> {
            let (v, inner) = self.inner_contraction(u, v0, opts)?;
            diag.inner_iterations += inner.iterations;
            diag.inner_lipschitz_max = diag.inner_lipschitz_max.max(inner.lipschitz_estimate);
            let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            self.check_ball(&w)?;
            let r = self.fixed_point_residual(&w)?;
            let r_low = self.low_coefficients(&self.band_multiply(&r, true, false));
            Ok((v, w, r_low))
        };
        let (nv, mut w, mut r_low) = evaluate(&u, &v, &mut diag)?;
        v = nv;
        let mut norm = self.outer_norm(&r_low);
        diag.outer_residuals.push(norm);
        let e2 = self.params.eps2();
        for it in 1..=opts.outer_max {
            if norm <= opts.outer_tol {
                break;
            }
            diag.outer_iterations = it;
            let stiff: Vec<f64> = w.iter().map(|&x| stiffness_raw(x, e2)).collect();
            let m = self.low_basis.len();
            let mut jac = DMatrix::zeros(m, m);
            for (col, basis) in self.low_basis.iter().enumerate() {
                let (dv, its) = self.inner_derivative(&w, basis, opts)?;
                diag.linear_iterations += its;
                let s: Vec<f64> = basis.iter().zip(&dv).zip(&stiff).map(|((a, b), c)| c * (a + b)).collect();
                let a_lin = self.band_multiply(&s, true, true);
                let jcol: Vec<f64> = basis.iter().zip(&a_lin).map(|(a, b)| a - b).collect();
                jac.set_column(col, &self.low_coefficients(&jcol));
            }
            let lu = jac.lu();
            let delta = lu.solve(&(-&r_low)).ok_or_else(|| {
                CoreError::Singular(format!("low-band Jacobian singular at iterate with sup {:.4e}", sup_norm(&w)))
            })?;
            let du = self.from_low_coefficients(&delta);
            let mut step = 1.0;
            let mut accepted = false;
            for h in 0..=opts.max_halvings {
                let trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + step * b).collect();
                match evaluate(&trial, &v, &mut diag) {
                    Ok((tv, tw, tr)) => {
                        let tn = self.outer_norm(&tr);
                        if tn < norm {
                            u = trial;
                            v = tv;
                            w = tw;
                            r_low = tr;
                            norm = tn;
                            diag.halvings += h;
                            accepted = true;
                            break;
                        }
                    }
                    Err(CoreError::Domain(_)) | Err(CoreError::BallViolation(_)) if h < opts.max_halvings => {}
                    Err(e) => return Err(e),
                }
                step *= 0.5;
            }
            diag.outer_residuals.push(norm);
            if !accepted {
                if norm <= 1e3 * opts.outer_tol {
                    break;
                }
                return Err(CoreError::NotConverged(format!(
                    "outer Newton stalled at residual {norm:.3e} after {} halvings",
                    opts.max_halvings
                )));
            }
        }
        if norm > opts.outer_tol && diag.outer_iterations >= opts.outer_max {
            return Err(CoreError::NotConverged(format!("outer Newton residual {norm:.3e} after {} steps", opts.outer_max)));
        }
        let mut w = w;
        self.grid.symmetrize(&mut w, Parity::Even);
        Ok((w, diag))
    }
}

/// Converged travelling wave with its momentum profile.
#[derive(Debug, Clone)]
pub struct TravellingWave {
    pub params: ModelParams,
    pub strain: WaveProfile,
    pub momentum: WaveProfile,
    /// Sup norm of `w - A(w)`.
    pub residual: f64,
    /// Sup norms of the two advance-delay equation residuals.
    pub advance_delay_residuals: (f64, f64),
    pub diagnostics: SolverDiagnostics,
}

impl TravellingWave {
    fn assemble(params: ModelParams, grid: &SpectralGrid, w: Vec<f64>, diagnostics: SolverDiagnostics) -> Result<Self> {
        let problem = TravellingProblem::new(params, grid.clone())?;
        let residual = sup_norm(&problem.fixed_point_residual(&w)?);
        let strain = WaveProfile::new(grid.clone(), w, VariableTag::Z, Parity::Even)?;
        let momentum = momentum_from_strain(&strain, params.speed());
        let advance_delay_residuals = advance_delay_residual(&strain, &momentum, &params)?;
        Ok(Self { params, strain, momentum, residual, advance_delay_residuals, diagnostics })
    }
}

/// Two-scale solve started from the dilated stationary log-KdV wave.
pub fn solve_travelling_wave(
    params: ModelParams,
    z_grid: &SpectralGrid,
    w_stat: &WaveProfile,
    opts: &WaveSolverOptions,
) -> Result<TravellingWave> {
    let w_app = dilate(w_stat, params.epsilon, z_grid);
    let problem = TravellingProblem::new(params, z_grid.clone())?;
    let (w, diag) = problem.outer_newton(&w_app.values, opts)?;
    TravellingWave::assemble(params, z_grid, w, diag)
}

/// Damped Newton-Krylov on all even modes of `w = A(w)`.
pub fn full_newton_oracle(
    params: ModelParams,
    z_grid: &SpectralGrid,
    initial: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<TravellingWave> {
    let problem = TravellingProblem::new(params, z_grid.clone())?;
    let e2 = params.eps2();
    let mut w = initial.to_vec();
    z_grid.symmetrize(&mut w, Parity::Even);
    let mut r = problem.fixed_point_residual(&w)?;
    let mut norm = sup_norm(&r);
    let mut diag = SolverDiagnostics {
        outer_iterations: 0,
        outer_residuals: vec![norm],
        inner_iterations: 0,
        inner_lipschitz_max: 0.0,
        halvings: 0,
        low_modes: 0,
        linear_iterations: 0,
    };
    for it in 1..=max_iter {
        if norm <= tol {
            break;
        }
        diag.outer_iterations = it;
        let stiff: Vec<f64> = w.iter().map(|&x| stiffness_raw(x, e2)).collect();
        let apply = |x: &[f64]| {
            let s: Vec<f64> = x.iter().zip(&stiff).map(|(a, b)| a * b).collect();
            let t = problem.grid.apply_multiplier(&s, |m, _| Complex64::new(problem.scaled_hat[m], 0.0));
            x.iter().zip(&t).map(|(a, b)| a - b).collect::<Vec<f64>>()
        };
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let mut dx = vec![0.0; w.len()];
        let out = gmres(apply, |v: &[f64]| problem.precondition(v), &rhs, &mut dx, 1e-14, 80, 800);
        diag.linear_iterations += out.iterations;
        let mut step = 1.0;
        let mut accepted = false;
        for h in 0..=8 {
            let mut trial: Vec<f64> = w.iter().zip(&dx).map(|(a, b)| a + step * b).collect();
            z_grid.symmetrize(&mut trial, Parity::Even);
            if let Ok(tr) = problem.fixed_point_residual(&trial) {
                let tn = sup_norm(&tr);
                if tn < norm {
                    w = trial;
                    r = tr;
                    norm = tn;
                    diag.halvings += h;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        diag.outer_residuals.push(norm);
        if !accepted {
            break;
        }
    }
    if norm > tol.max(1e-13) {
        return Err(CoreError::NotConverged(format!("full Newton residual {norm:.3e}")));
    }
    TravellingWave::assemble(params, z_grid, w, diag)
}

/// Momentum profile from `-c w' = p(z + 1) - p(z)`:
/// `p_hat(k) = -c i k w_hat(k) / (e^{ik} - 1)`, `p_hat(0) = -c w_hat(0)`.
/// Modes with `e^{ik}` within `1e-6` of one carry no decaying solution and are set to zero.
pub fn momentum_from_strain(w: &WaveProfile, speed: f64) -> WaveProfile {
    let i = Complex64::new(0.0, 1.0);
    let values = w.grid.apply_multiplier(&w.values, |m, k| {
        if m == 0 {
            return Complex64::new(-speed, 0.0);
        }
        let denom = (i * k).exp() - 1.0;
        if denom.norm() < 1e-6 {
            Complex64::new(0.0, 0.0)
        } else {
            -speed * i * k / denom
        }
    });
    WaveProfile { grid: w.grid.clone(), values, tag: w.tag, parity: Parity::None }
}

/// Sup norms of `-c w' - (p(z+1) - p(z))` and `-c p' - (V'(w(z)) - V'(w(z-1)))`.
pub fn advance_delay_residual(w: &WaveProfile, p: &WaveProfile, params: &ModelParams) -> Result<(f64, f64)> {
    w.same_grid(p)?;
    check_strain(&w.values)?;
    let grid = &w.grid;
    let c = params.speed();
    let wp = grid.derivative(&w.values, 1);
    let pp = grid.derivative(&p.values, 1);
    let p_fwd = grid.shift(&p.values, 1.0);
    let f: Vec<f64> = w.values.iter().map(|&x| force_raw(x, params.eps2())).collect();
    let f_back = grid.shift(&f, -1.0);
    let mut r1: f64 = 0.0;
    let mut r2: f64 = 0.0;
    for j in 0..grid.n_points() {
        r1 = r1.max((-c * wp[j] - (p_fwd[j] - p.values[j])).abs());
        r2 = r2.max((-c * pp[j] - (f[j] - f_back[j])).abs());
    }
    Ok((r1, r2))
}

/// Outcome of iterating `A` from one random start.
#[derive(Debug, Clone, Serialize)]
pub struct SmallTrial {
    pub seed_stream: u64,
    pub initial_size: f64,
    pub iterations: usize,
    pub final_sup: f64,
    pub converged: bool,
    /// Largest observed `||x_{m+1} - x_m|| / ||x_m - x_{m-1}||` in `L^2`.
    pub lipschitz_estimate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallSolutionReport {
    pub lambda: f64,
    pub epsilon: f64,
    pub radius: f64,
    /// `(1 + eps^2)(1 + R)^{eps^2} / (1 + eps^2 lambda)`, the Lipschitz bound of `A` on nonnegative data below `R`.
    pub lipschitz_bound: f64,
    pub trials: Vec<SmallTrial>,
    pub all_converged: bool,
    pub lipschitz_within_bound: bool,
}

/// Iterate the full map `A` from seeded random nonnegative data of size
/// `max(||x||_{L^2}, ||x||_sup) <= R` and check that every orbit decays to zero.
pub fn small_solution_check(
    params: ModelParams,
    z_grid: &SpectralGrid,
    radius: f64,
    trials: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<SmallSolutionReport> {
    if !(radius > 0.0) {
        return Err(CoreError::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    let problem = TravellingProblem::new(params, z_grid.clone())?;
    let e2 = params.eps2();
    let apply = |x: &[f64]| -> Result<Vec<f64>> {
        check_strain(x)?;
        let f: Vec<f64> = x.iter().map(|&v| force_raw(v, e2)).collect();
        Ok(z_grid.apply_multiplier(&f, |m, _| Complex64::new(problem.scaled_hat[m], 0.0)))
    };
    let nodes = z_grid.nodes();
    let lipschitz_bound = (1.0 + e2) * (1.0 + radius).powf(e2) / (1.0 + params.mu());
    let mut out = Vec::with_capacity(trials);
    for t in 0..trials as u64 {
        let mut rng = seeded(seed, t);
        let mut x: Vec<f64> =
            nodes.iter().map(|z| if z.abs() <= 10.0 { uniform(&mut rng) } else { 0.0 }).collect();
        let size = sup_norm(&x).max(big_l2_norm(z_grid, &x));
        let target = radius * (0.5 + 0.5 * uniform(&mut rng));
        x.iter_mut().for_each(|v| *v *= target / size);
        let initial_size = sup_norm(&x).max(big_l2_norm(z_grid, &x));
        let mut lip: f64 = 0.0;
        let mut prev_step: Option<f64> = None;
        let mut iterations = 0;
        let mut converged = sup_norm(&x) <= tol;
        while !converged && iterations < max_iter {
            let next = apply(&x)?;
            let step = big_l2_norm(z_grid, &next.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
            if let Some(ps) = prev_step {
                if ps > 1e-200 {
                    lip = lip.max(step / ps);
                }
            }
            prev_step = Some(step);
            x = next;
            iterations += 1;
            converged = sup_norm(&x) <= tol;
        }
        out.push(SmallTrial {
            seed_stream: t,
            initial_size,
            iterations,
            final_sup: sup_norm(&x),
            converged,
            lipschitz_estimate: lip,
        });
    }
    let all_converged = out.iter().all(|t| t.converged);
    let lipschitz_within_bound = out.iter().all(|t| t.lipschitz_estimate <= 1.1 * lipschitz_bound);
    Ok(SmallSolutionReport {
        lambda: params.lambda,
        epsilon: params.epsilon,
        radius,
        lipschitz_bound,
        trials: out,
        all_converged,
        lipschitz_within_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::solve_stationary;

    fn setup(eps: f64) -> (ModelParams, SpectralGrid, WaveProfile) {
        let params = ModelParams::new(2.0, eps).unwrap();
        let x = SpectralGrid::default_x_grid(2.0).unwrap();
        let w = solve_stationary(2.0, &x).unwrap().profile;
        let z = SpectralGrid::default_z_grid(2.0, eps).unwrap();
        (params, z, w)
    }

    #[test]
    fn fixed_point_map_of_zero_is_zero() {
        let (params, z, _) = setup(0.2);
        let p = TravellingProblem::new(params, z.clone()).unwrap();
        let a = p.fixed_point_map(&vec![0.0; z.n_points()]).unwrap();
        assert_eq!(sup_norm(&a), 0.0);
        assert!(matches!(p.fixed_point_map(&vec![-1.0; z.n_points()]), Err(CoreError::Domain(_))));
    }

    #[test]
    fn two_scale_solver_converges_and_matches_oracle() {
        let (params, z, w_stat) = setup(0.2);
        let tw = solve_travelling_wave(params, &z, &w_stat, &WaveSolverOptions::default()).unwrap();
        assert!(tw.residual <= 1e-10, "residual {}", tw.residual);
        assert!(tw.advance_delay_residuals.0 <= 1e-10 && tw.advance_delay_residuals.1 <= 1e-10);
        for j in 0..z.n_points() {
            assert_eq!(tw.strain.values[j], tw.strain.values[z.mirror(j)]);
        }
        let app = dilate(&w_stat, 0.2, &z);
        let oracle = full_newton_oracle(params, &z, &app.values, 1e-13, 30).unwrap();
        let diff = tw
            .strain
            .values
            .iter()
            .zip(&oracle.strain.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff <= 1e-8, "two-scale vs oracle {diff:e}");
    }

    #[test]
    fn small_data_decays_to_zero() {
        let params = ModelParams::new(3.0, 0.2).unwrap();
        let z = SpectralGrid::default_z_grid(3.0, 0.2).unwrap();
        let rep = small_solution_check(params, &z, 0.5, 3, 7, 1e-12, 500).unwrap();
        assert!(rep.all_converged && rep.lipschitz_within_bound, "{rep:?}");
    }

    #[test]
    fn momentum_of_constant_strain() {
        let z = SpectralGrid::new(64, 16.0).unwrap();
        let w = WaveProfile::new(z, vec![0.3; 64], VariableTag::Z, Parity::Even).unwrap();
        let p = momentum_from_strain(&w, 1.1);
        for v in &p.values {
            assert!((v + 0.33).abs() < 1e-14);
        }
    }
}
