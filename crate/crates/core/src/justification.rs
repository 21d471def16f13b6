//! Lattice approximation built from a log-KdV solution `W(xi, tau)`:
//! `w_n(t) ~ W(eps (n - t), eps^3 t)`, `p_n(t) ~ P_eps(eps (n - t), eps^3 t)`,
//! with the momentum profile expanded to third order in `eps`.

use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::evolution::{Flux, LogKdvSolver, PdeState};
use crate::grid::{l2_norm, sobolev_norm, sample_to_lattice, SpectralGrid, WaveProfile};
use crate::lattice::{LatticeState, RingProfile};
use crate::nonlinearities::g_raw;

/// Spectral energy fraction above which a profile counts as under-resolved
/// for third derivatives.
pub const RESOLUTION_TOLERANCE: f64 = 1e-10;

/// Fraction of spectral energy in the top third of the modes.
pub fn spectral_tail_fraction(grid: &SpectralGrid, values: &[f64]) -> f64 {
    let c = grid.forward(values);
    let n = grid.n_points();
    let mut total = 0.0;
    let mut tail = 0.0;
    for (m, cm) in c.iter().enumerate() {
        let e = cm.norm_sqr();
        total += e;
        if 3 * grid.mode_index(m).unsigned_abs() as usize > n {
            tail += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

fn check_resolved(grid: &SpectralGrid, values: &[f64]) -> Result<()> {
    let tail = spectral_tail_fraction(grid, values);
    if tail > RESOLUTION_TOLERANCE {
        return Err(CoreError::InvalidGrid(format!(
            "profile under-resolved: {tail:.3e} of its spectral energy sits in the top third of the modes"
        )));
    }
    if values.iter().any(|&w| !(w > -1.0)) {
        return Err(CoreError::Domain("profile reaches W <= -1".into()));
    }
    Ok(())
}

/// The four coefficients `P^(0..3)` of the momentum expansion:
/// `-W`, `W'/2`, `-W''/8 - g(W)/2`, `W'''/48 + g(W)'/4`.
pub fn ansatz_terms(grid: &SpectralGrid, w: &[f64]) -> Result<[Vec<f64>; 4]> {
    check_resolved(grid, w)?;
    let g: Vec<f64> = w.iter().map(|&x| g_raw(x)).collect();
    let d1 = grid.derivative(w, 1);
    let d2 = grid.derivative(w, 2);
    let d3 = grid.derivative(w, 3);
    let g1 = grid.derivative(&g, 1);
    let n = w.len();
    Ok([
        w.iter().map(|x| -x).collect(),
        d1.iter().map(|x| 0.5 * x).collect(),
        (0..n).map(|j| -d2[j] / 8.0 - 0.5 * g[j]).collect(),
        (0..n).map(|j| d3[j] / 48.0 + 0.25 * g1[j]).collect(),
    ])
}

/// `(W, P_eps)` on a common grid.
#[derive(Debug, Clone)]
pub struct AnsatzPair {
    pub w: WaveProfile,
    pub p: WaveProfile,
    pub epsilon: f64,
}

pub fn build_ansatz(w: &WaveProfile, epsilon: f64) -> Result<AnsatzPair> {
    let p = ansatz_momentum(&w.grid, &w.values, epsilon)?;
    Ok(AnsatzPair { w: w.clone(), p: w.with_values(p, crate::grid::Parity::None), epsilon })
}

pub fn ansatz_momentum(grid: &SpectralGrid, w: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let t = ansatz_terms(grid, w)?;
    let (e1, e2, e3) = (epsilon, epsilon * epsilon, epsilon.powi(3));
    Ok((0..w.len()).map(|j| t[0][j] + e1 * t[1][j] + e2 * t[2][j] + e3 * t[3][j]).collect())
}

/// `W_tau = -W_xixixi / 24 - g(W)_xi / 2`.
pub fn log_kdv_rate(grid: &SpectralGrid, w: &[f64]) -> Vec<f64> {
    let d3 = grid.derivative(w, 3);
    let g: Vec<f64> = w.iter().map(|&x| g_raw(x)).collect();
    let g1 = grid.derivative(&g, 1);
    d3.iter().zip(&g1).map(|(a, b)| -a / 24.0 - 0.5 * b).collect()
}

/// Residuals of the lattice equations left by the approximation, sampled at
/// the sites (time `t = 0`).
#[derive(Debug, Clone, Serialize)]
pub struct LatticeResiduals {
    pub epsilon: f64,
    pub res1: Vec<f64>,
    pub res2: Vec<f64>,
    pub res1_l2: f64,
    pub res2_l2: f64,
}

impl LatticeResiduals {
    pub fn total(&self) -> f64 {
        self.res1_l2 + self.res2_l2
    }
}

fn roll(values: &[f64], by: isize) -> Vec<f64> {
    let n = values.len() as isize;
    (0..n).map(|i| values[(i + by).rem_euclid(n) as usize]).collect()
}

/// Residuals for `W` solving the log-KdV equation at the current instant:
/// `Res1 = P(xi + eps) - P(xi) + eps W_xi - eps^3 W_tau`,
/// `Res2 = eps P_xi - eps^3 P_tau + W(xi) - W(xi - eps) + eps^2 (g(W(xi)) - g(W(xi - eps)))`.
/// `w` must live on a ring whose sites are `eps` apart.
pub fn lattice_residuals(w: &RingProfile) -> Result<LatticeResiduals> {
    let eps = w.scale;
    let grid = &w.grid;
    let m = w.oversample as isize;
    let v = &w.values;
    check_resolved(grid, v)?;
    let n = v.len();
    let (e2, e3) = (eps * eps, eps.powi(3));
    let p = ansatz_momentum(grid, v, eps)?;
    let wt = log_kdv_rate(grid, v);
    // P_tau by the chain rule through every term of the expansion
    let g: Vec<f64> = v.iter().map(|&x| g_raw(x)).collect();
    let gp_wt: Vec<f64> = v.iter().zip(&wt).map(|(&x, &r)| (1.0 + x.ln_1p()) * r).collect();
    let wt1 = grid.derivative(&wt, 1);
    let wt2 = grid.derivative(&wt, 2);
    let wt3 = grid.derivative(&wt, 3);
    let gt1 = grid.derivative(&gp_wt, 1);
    let pt: Vec<f64> = (0..n)
        .map(|j| {
            -wt[j] + 0.5 * eps * wt1[j] + e2 * (-wt2[j] / 8.0 - 0.5 * gp_wt[j]) + e3 * (wt3[j] / 48.0 + 0.25 * gt1[j])
        })
        .collect();
    let w1 = grid.derivative(v, 1);
    let p1 = grid.derivative(&p, 1);
    let p_fwd = roll(&p, m);
    let w_back = roll(v, -m);
    let g_back = roll(&g, -m);
    let r1: Vec<f64> = (0..n).map(|j| p_fwd[j] - p[j] + eps * w1[j] - e3 * wt[j]).collect();
    let r2: Vec<f64> = (0..n)
        .map(|j| eps * p1[j] - e3 * pt[j] + v[j] - w_back[j] + e2 * (g[j] - g_back[j]))
        .collect();
    let res1: Vec<f64> = r1.iter().step_by(w.oversample).copied().collect();
    let res2: Vec<f64> = r2.iter().step_by(w.oversample).copied().collect();
    Ok(LatticeResiduals { epsilon: eps, res1_l2: l2_norm(&res1), res2_l2: l2_norm(&res2), res1, res2 })
}

/// Source of the log-KdV solution used as a lattice reference.
pub enum KdvSource {
    /// `W_stat(xi - lambda tau / 2)`, exact.
    Stationary { lambda: f64 },
    /// Numerical solution of the log-KdV equation on the ring grid.
    Pde { solver: LogKdvSolver, state: PdeState },
}

/// Approximation `(W(eps (n - t), eps^3 t), P_eps(eps (n - t), eps^3 t))` on a ring.
pub struct KdvReference {
    pub w: RingProfile,
    pub p: RingProfile,
    pub source: KdvSource,
    pub epsilon: f64,
}

impl KdvReference {
    /// `w0` is `W(., 0)` on a ring with scale `eps`.
    pub fn stationary(w0: RingProfile, lambda: f64) -> Result<Self> {
        let p = w0.with_values(ansatz_momentum(&w0.grid, &w0.values, w0.scale)?);
        let epsilon = w0.scale;
        Ok(Self { w: w0, p, source: KdvSource::Stationary { lambda }, epsilon })
    }

    pub fn pde(w0: RingProfile, dtau: f64) -> Result<Self> {
        let p = w0.with_values(ansatz_momentum(&w0.grid, &w0.values, w0.scale)?);
        let solver = LogKdvSolver::new(w0.grid.clone(), Flux::BackgroundG, dtau)?;
        let profile = WaveProfile::new(w0.grid.clone(), w0.values.clone(), crate::grid::VariableTag::Xi, crate::grid::Parity::None)?;
        let state = PdeState::new(profile, 0.0, Flux::BackgroundG)?;
        let epsilon = w0.scale;
        Ok(Self { w: w0, p, source: KdvSource::Pde { solver, state }, epsilon })
    }

    /// Lattice values `(w, p, eps^2 g'(W))` at time `t`; the PDE source only moves forward.
    pub fn at(&mut self, t: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let eps = self.epsilon;
        let tau = eps.powi(3) * t;
        let shift = match &mut self.source {
            KdvSource::Stationary { lambda } => -eps * t - 0.5 * *lambda * tau,
            KdvSource::Pde { solver, state } => {
                if tau < state.tau - 1e-12 {
                    return Err(CoreError::InvalidParameter(format!(
                        "PDE reference is at tau = {}, cannot go back to {tau}",
                        state.tau
                    )));
                }
                if tau > state.tau {
                    let span = tau - state.tau;
                    solver.evolve(state, tau, span, |_| Ok(()))?;
                    self.w.values = state.profile.values.clone();
                    self.p.values = ansatz_momentum(&self.w.grid, &self.w.values, eps)?;
                }
                -eps * t
            }
        };
        let w = self.w.sample(shift);
        let p = self.p.sample(shift);
        let gp = w.iter().map(|&x| eps * eps * (1.0 + x.ln_1p())).collect();
        Ok((w, p, gp))
    }
}

/// Energy-type quantity `E = (1/2) sum [P^2 + W^2 + eps^2 g'(W_ref) W^2]` of
/// the deviation `(W, P) = (w - w_ref, p - p_ref)`, with `||W||^2 + ||P||^2`.
pub fn energy_type(state: &LatticeState, w_ref: &[f64], p_ref: &[f64], eps2_gprime: &[f64]) -> (f64, f64) {
    let mut e = 0.0;
    let mut sq = 0.0;
    for j in 0..state.n_sites() {
        let dw = state.w[j] - w_ref[j];
        let dp = state.p[j] - p_ref[j];
        e += 0.5 * (dp * dp + dw * dw + eps2_gprime[j] * dw * dw);
        sq += dp * dp + dw * dw;
    }
    (e, sq)
}

/// Test functions for the sampling inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingTest {
    Gaussian,
    Sech,
}

impl SamplingTest {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            SamplingTest::Gaussian => (-x * x).exp(),
            SamplingTest::Sech => 1.0 / x.cosh(),
        }
    }
}

/// `C(eps) = eps^{1/2} ||x||_{l^2} / ||X||_{H^1}` with `x_n = X(eps n)`,
/// computed on an x-grid wide enough for the function to have decayed.
pub fn sampling_constant(test: SamplingTest, grid: &SpectralGrid, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(CoreError::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let values: Vec<f64> = grid.nodes().iter().map(|&x| test.eval(x)).collect();
    let edge = test.eval(grid.half_width());
    if edge > 1e-15 {
        return Err(CoreError::InvalidGrid(format!("test function is {edge:.3e} at the domain edge")));
    }
    let profile = WaveProfile::new(grid.clone(), values, crate::grid::VariableTag::X, crate::grid::Parity::Even)?;
    let n_max = (grid.half_width() / epsilon).floor() as i64;
    let x = sample_to_lattice(&profile, epsilon, -n_max..n_max);
    Ok(epsilon.sqrt() * l2_norm(&x) / sobolev_norm(grid, &profile.values, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Parity, VariableTag};
    use crate::profiles::solve_stationary;

    #[test]
    fn ansatz_limits() {
        let grid = SpectralGrid::new(256, 10.0).unwrap();
        let w = WaveProfile::from_fn(&grid, VariableTag::Xi, Parity::Even, |x| 0.5 * (-x * x).exp());
        let pair = build_ansatz(&w, 0.0).unwrap();
        for (a, b) in pair.p.values.iter().zip(&w.values) {
            assert_eq!(*a, -b);
        }
        let zero = w.zeros_like();
        assert!(build_ansatz(&zero, 0.3).unwrap().p.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ansatz_terms_assemble_to_momentum() {
        let grid = SpectralGrid::new(256, 10.0).unwrap();
        let w: Vec<f64> = grid.nodes().iter().map(|x| 0.8 * (-x * x).exp()).collect();
        let eps: f64 = 0.2;
        let t = ansatz_terms(&grid, &w).unwrap();
        let p = ansatz_momentum(&grid, &w, eps).unwrap();
        let g: Vec<f64> = w.iter().map(|&x| g_raw(x)).collect();
        let d = |v: &[f64], k| grid.derivative(v, k);
        let (w1, w2, w3, g1) = (d(&w, 1), d(&w, 2), d(&w, 3), d(&g, 1));
        for j in 0..256 {
            let direct = -w[j] + eps / 2.0 * w1[j] - eps * eps / 8.0 * w2[j] - eps * eps / 2.0 * g[j]
                + eps.powi(3) / 48.0 * w3[j]
                + eps.powi(3) / 4.0 * g1[j];
            let summed = t[0][j] + eps * t[1][j] + eps * eps * t[2][j] + eps.powi(3) * t[3][j];
            assert!((direct - p[j]).abs() < 1e-13 && (summed - p[j]).abs() < 1e-13);
        }
    }

    #[test]
    fn under_resolved_profile_is_rejected() {
        let grid = SpectralGrid::new(64, 10.0).unwrap();
        let w: Vec<f64> = (0..64).map(|j| if j == 32 { 0.5 } else { 0.0 }).collect();
        assert!(matches!(ansatz_terms(&grid, &w), Err(CoreError::InvalidGrid(_))));
    }

    #[test]
    fn zero_profile_has_zero_residuals() {
        let grid = SpectralGrid::new(64, 1.0).unwrap();
        let ring = RingProfile::from_profile(&grid, &vec![0.0; 64], 256, 2, 0.1).unwrap();
        let r = lattice_residuals(&ring).unwrap();
        assert_eq!(r.total(), 0.0);
    }

    #[test]
    fn residuals_shrink_fast_with_eps() {
        let x = SpectralGrid::default_x_grid(2.0).unwrap();
        let w = solve_stationary(2.0, &x).unwrap().profile;
        let norm = |eps: f64| {
            let ring = RingProfile::from_profile(&x, &w.values, 1024, 2, eps).unwrap();
            lattice_residuals(&ring).unwrap().total()
        };
        let slope = (norm(0.2) / norm(0.1)).ln() / 2f64.ln();
        assert!(slope > 4.0, "slope {slope}");
    }

    #[test]
    fn sampling_constant_is_flat_in_eps() {
        let grid = SpectralGrid::new(2048, 40.0).unwrap();
        for test in [SamplingTest::Gaussian, SamplingTest::Sech] {
            let a = sampling_constant(test, &grid, 0.02).unwrap();
            let b = sampling_constant(test, &grid, 0.2).unwrap();
            assert!((a / b - 1.0).abs() < 0.05, "{test:?}: {a} vs {b}");
        }
    }
}
