//! Pseudospectral integration of `2 W_tau + W_xixixi / 12 + (F(W))_xi = 0`
//! on a periodic interval. Dispersion is integrated exactly through an
//! integrating factor; the flux term is advanced by classical RK4 with
//! 2/3-rule dealiasing.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::{SpectralGrid, WaveProfile};
use crate::nonlinearities::g_raw;

/// Flux `F(W)` of the evolution equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Flux {
    /// `(1 + W) log(1 + W)`, the precompressed background.
    BackgroundG,
    /// `v log|v|`, the zero background.
    VLogV,
    /// `W^p`.
    Power { p: u32 },
    /// No flux; pure linear dispersion.
    Linear,
}

impl Flux {
    #[inline]
    fn eval(self, w: f64) -> f64 {
        match self {
            Flux::BackgroundG => g_raw(w),
            Flux::VLogV => {
                if w.abs() < f64::MIN_POSITIVE {
                    0.0
                } else {
                    w * w.abs().ln()
                }
            }
            Flux::Power { p } => w.powi(p as i32),
            Flux::Linear => 0.0,
        }
    }
}

/// Solution snapshot at slow time `tau`.
#[derive(Debug, Clone)]
pub struct PdeState {
    pub profile: WaveProfile,
    pub tau: f64,
    pub flux: Flux,
}

impl PdeState {
    pub fn new(profile: WaveProfile, tau: f64, flux: Flux) -> Result<Self> {
        check_admissible(&profile.values, flux, tau)?;
        Ok(Self { profile, tau, flux })
    }
}

/// Negative excursions below this fraction of the peak are accepted as
/// round-off in the zero-background flow.
pub const VLOGV_NEGATIVE_TOLERANCE: f64 = 1e-8;

fn check_admissible(values: &[f64], flux: Flux, tau: f64) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::BlowUp(format!("non-finite value at tau = {tau}")));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    match flux {
        Flux::BackgroundG if !(min > -1.0) => {
            Err(CoreError::Guard(format!("minimum {min:.6e} reached -1 at tau = {tau}")))
        }
        Flux::VLogV => {
            let max = values.iter().copied().fold(0.0f64, f64::max);
            if min < -VLOGV_NEGATIVE_TOLERANCE * max.max(f64::MIN_POSITIVE) {
                Err(CoreError::Guard(format!("value {min:.6e} turned negative at tau = {tau}")))
            } else {
                Ok(())
            }
        }
        _ => Ok(()),
    }
}

/// Diagnostics recorded at each checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdeCheckpoint {
    pub tau: f64,
    pub center: f64,
    pub mass: f64,
    pub l2: f64,
    pub min: f64,
    pub max: f64,
}

impl PdeCheckpoint {
    pub fn of(profile: &WaveProfile, tau: f64) -> Self {
        let (mass, l2) = conserved_quantities(profile);
        Self {
            tau,
            center: locate_peak(profile),
            mass,
            l2,
            min: profile.values.iter().copied().fold(f64::INFINITY, f64::min),
            max: profile.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Default slow-time step: `0.5 * 24 h^3`, capped at `1e-3`.
pub fn default_dtau(grid: &SpectralGrid) -> f64 {
    (12.0 * grid.spacing().powi(3)).min(1e-3)
}

pub struct LogKdvSolver {
    pub grid: SpectralGrid,
    pub flux: Flux,
    pub dtau: f64,
    dealias: Vec<bool>,
}

impl LogKdvSolver {
    pub fn new(grid: SpectralGrid, flux: Flux, dtau: f64) -> Result<Self> {
        if !(dtau > 0.0 && dtau.is_finite()) {
            return Err(CoreError::InvalidParameter(format!("dtau must be positive, got {dtau}")));
        }
        let n = grid.n_points();
        let dealias = (0..n).map(|m| 3 * grid.mode_index(m).unsigned_abs() as usize <= n).collect();
        Ok(Self { grid, flux, dtau, dealias })
    }

    /// `-(ik/2) F(flux(W))`, dealiased.
    fn nonlinear(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n_points();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        if self.flux == Flux::Linear {
            return out;
        }
        let w = self.grid.inverse_real(coeffs.to_vec());
        let f: Vec<f64> = w.iter().map(|&x| self.flux.eval(x)).collect();
        let fh = self.grid.forward(&f);
        for m in 0..n {
            if self.dealias[m] && !self.grid.is_nyquist(m) {
                out[m] = Complex64::new(0.0, -0.5 * self.grid.wavenumber(m)) * fh[m];
            }
        }
        out
    }

    fn advance(&self, coeffs: &mut [Complex64], h: f64) {
        let n = coeffs.len();
        let e_half: Vec<Complex64> = (0..n)
            .map(|m| {
                let k = self.grid.wavenumber(m);
                Complex64::from_polar(1.0, k * k * k / 24.0 * 0.5 * h)
            })
            .collect();
        let a = self.nonlinear(coeffs);
        let s2: Vec<Complex64> = (0..n).map(|m| e_half[m] * (coeffs[m] + 0.5 * h * a[m])).collect();
        let b = self.nonlinear(&s2);
        let s3: Vec<Complex64> = (0..n).map(|m| e_half[m] * coeffs[m] + 0.5 * h * b[m]).collect();
        let c = self.nonlinear(&s3);
        let s4: Vec<Complex64> =
            (0..n).map(|m| e_half[m] * (e_half[m] * coeffs[m] + h * c[m])).collect();
        let d = self.nonlinear(&s4);
        for m in 0..n {
            let e = e_half[m] * e_half[m];
            coeffs[m] = e * coeffs[m] + h / 6.0 * (e * a[m] + 2.0 * e_half[m] * (b[m] + c[m]) + d[m]);
        }
    }

    /// Advance by one step of size `h`.
    pub fn step(&self, state: &mut PdeState, h: f64) -> Result<()> {
        let mut c = self.grid.forward(&state.profile.values);
        self.advance(&mut c, h);
        let values = self.grid.inverse_real(c);
        let tau = state.tau + h;
        check_admissible(&values, self.flux, tau)?;
        state.profile.values = values;
        state.tau = tau;
        Ok(())
    }

    /// Advance to `tau_end`, reporting at multiples of `every` (and at the
    /// start). Each interval is split into equal steps no larger than `dtau`.
    pub fn evolve<F>(&self, state: &mut PdeState, tau_end: f64, every: f64, mut observer: F) -> Result<()>
    where
        F: FnMut(&PdeState) -> Result<()>,
    {
        if !(every > 0.0) || tau_end < state.tau {
            return Err(CoreError::InvalidParameter(format!(
                "need every > 0 and tau_end >= tau, got {every}, {tau_end}"
            )));
        }
        if state.flux != self.flux {
            return Err(CoreError::InvalidParameter("state flux differs from solver flux".into()));
        }
        let tau0 = state.tau;
        let intervals = ((tau_end - tau0) / every - 1e-9).ceil().max(0.0) as usize;
        observer(state)?;
        let mut coeffs = self.grid.forward(&state.profile.values);
        for i in 0..intervals {
            let target = (tau0 + (i + 1) as f64 * every).min(tau_end);
            let span = target - state.tau;
            let steps = (span / self.dtau - 1e-9).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for s in 0..steps {
                self.advance(&mut coeffs, h);
                if s + 1 < steps && s % 16 == 15 {
                    let w = self.grid.inverse_real(coeffs.clone());
                    check_admissible(&w, self.flux, state.tau + (s + 1) as f64 * h)?;
                }
            }
            state.profile.values = self.grid.inverse_real(coeffs.clone());
            state.tau = target;
            check_admissible(&state.profile.values, self.flux, target)?;
            observer(state)?;
        }
        Ok(())
    }

    /// Fraction of spectral energy in the modes removed by dealiasing.
    pub fn spectral_tail(&self, values: &[f64]) -> f64 {
        let c = self.grid.forward(values);
        let total: f64 = c.iter().map(|x| x.norm_sqr()).sum();
        let tail: f64 = c.iter().zip(&self.dealias).filter(|(_, &keep)| !keep).map(|(x, _)| x.norm_sqr()).sum();
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }
}

/// `(integral of W, integral of W^2)` by the trapezoid rule, which is
/// spectrally accurate for periodic data.
pub fn conserved_quantities(profile: &WaveProfile) -> (f64, f64) {
    let h = profile.grid.spacing();
    let mass = h * profile.values.iter().sum::<f64>();
    let l2 = h * profile.values.iter().map(|x| x * x).sum::<f64>();
    (mass, l2)
}

/// Position of the maximum: discrete argmax, refined by Newton iteration on
/// the band-limited derivative.
pub fn locate_peak(profile: &WaveProfile) -> f64 {
    let grid = &profile.grid;
    let (j, _) = profile
        .values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    let n = grid.n_points();
    let h = grid.spacing();
    let (a, b, c) = (profile.values[(j + n - 1) % n], profile.values[j], profile.values[(j + 1) % n]);
    let denom = a - 2.0 * b + c;
    let mut x = grid.node(j) + if denom != 0.0 { 0.5 * h * (a - c) / denom } else { 0.0 };
    let d1 = grid.derivative(&profile.values, 1);
    let d2 = grid.derivative(&profile.values, 2);
    for _ in 0..4 {
        let f1 = grid.evaluate_periodic(&d1, &[x])[0];
        let f2 = grid.evaluate_periodic(&d2, &[x])[0];
        if f2 >= 0.0 {
            break;
        }
        let dx = -f1 / f2;
        if dx.abs() > h {
            break;
        }
        x += dx;
        if dx.abs() < 1e-14 {
            break;
        }
    }
    let period = 2.0 * grid.half_width();
    (x + grid.half_width()).rem_euclid(period) - grid.half_width()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Parity, VariableTag};
    use crate::profiles::{gaussian_profile, gausson, solve_stationary};

    #[test]
    fn zero_state_is_fixed() {
        let grid = SpectralGrid::new(128, 10.0).unwrap();
        let solver = LogKdvSolver::new(grid.clone(), Flux::BackgroundG, 1e-3).unwrap();
        let mut s = PdeState::new(WaveProfile::from_fn(&grid, VariableTag::Xi, Parity::None, |_| 0.0), 0.0, Flux::BackgroundG).unwrap();
        solver.evolve(&mut s, 0.1, 0.1, |_| Ok(())).unwrap();
        assert!(s.profile.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn linear_plane_wave_has_exact_phase() {
        let grid = SpectralGrid::new(64, std::f64::consts::PI).unwrap();
        let k = 5.0;
        let solver = LogKdvSolver::new(grid.clone(), Flux::Linear, 0.01).unwrap();
        let init = WaveProfile::from_fn(&grid, VariableTag::Xi, Parity::None, |x| (k * x).cos());
        let mut s = PdeState::new(init, 0.0, Flux::Linear).unwrap();
        solver.evolve(&mut s, 1.0, 1.0, |_| Ok(())).unwrap();
        // W_tau = -W_xixixi / 24 moves cos(k x) to cos(k x + k^3 tau / 24)
        for (j, v) in s.profile.values.iter().enumerate() {
            let x = grid.node(j);
            assert!((v - (k * x + k * k * k / 24.0).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn fourth_order_in_time() {
        let grid = SpectralGrid::new(256, 20.0).unwrap();
        let init = WaveProfile::from_fn(&grid, VariableTag::Xi, Parity::None, |x| 0.8 * (-(x * x) / 2.0).exp());
        let run = |dtau: f64| {
            let solver = LogKdvSolver::new(grid.clone(), Flux::BackgroundG, dtau).unwrap();
            let mut s = PdeState::new(init.clone(), 0.0, Flux::BackgroundG).unwrap();
            solver.evolve(&mut s, 0.5, 0.5, |_| Ok(())).unwrap();
            s.profile.values
        };
        let reference = run(0.01 / 8.0);
        let err = |v: Vec<f64>| v.iter().zip(&reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let ratio = err(run(0.02)) / err(run(0.01));
        assert!((ratio - 16.0).abs() < 2.0, "ratio {ratio}");
    }

    #[test]
    fn gaussian_is_steady_under_zero_background_flow() {
        let grid = SpectralGrid::new(1024, 10.0).unwrap();
        let init = gaussian_profile(&grid).with_values(gaussian_profile(&grid).values, Parity::None);
        let mut s = PdeState::new(init.clone(), 0.0, Flux::VLogV).unwrap();
        let solver = LogKdvSolver::new(grid, Flux::VLogV, 5e-4).unwrap();
        solver.evolve(&mut s, 1.0, 0.5, |_| Ok(())).unwrap();
        let d = s.profile.values.iter().zip(&init.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(d <= 1e-5, "drift {d}");
    }

    #[test]
    fn gausson_moves_at_its_speed() {
        let grid = SpectralGrid::new(1024, 10.0).unwrap();
        for b in [0.05, 0.1] {
            let init = gausson(&grid, 0.0, b, 0.0);
            let mut s = PdeState::new(init, 0.0, Flux::VLogV).unwrap();
            let solver = LogKdvSolver::new(grid.clone(), Flux::VLogV, 5e-4).unwrap();
            solver.evolve(&mut s, 1.0, 1.0, |_| Ok(())).unwrap();
            let speed = locate_peak(&s.profile);
            assert!((speed / b - 1.0).abs() < 0.01, "b {b}: measured {speed}");
        }
    }

    #[test]
    fn stationary_wave_translates_with_invariants() {
        let grid = SpectralGrid::default_x_grid(2.0).unwrap();
        let w = solve_stationary(2.0, &grid).unwrap().profile;
        let init = w.with_values(w.values.clone(), Parity::None);
        let mut s = PdeState::new(init, 0.0, Flux::BackgroundG).unwrap();
        let solver = LogKdvSolver::new(grid.clone(), Flux::BackgroundG, 5e-4).unwrap();
        let mut marks = Vec::new();
        solver
            .evolve(&mut s, 1.0, 0.25, |st| {
                marks.push(PdeCheckpoint::of(&st.profile, st.tau));
                Ok(())
            })
            .unwrap();
        let last = marks.last().unwrap();
        assert!((last.center - 1.0).abs() < 0.005, "center {}", last.center);
        assert!(((last.mass - marks[0].mass) / marks[0].mass).abs() < 1e-10);
        assert!(((last.l2 - marks[0].l2) / marks[0].l2).abs() < 1e-8);
        let back = grid.shift(&s.profile.values, 1.0);
        let diff: Vec<f64> = back.iter().zip(&w.values).map(|(a, b)| a - b).collect();
        let rel = crate::grid::l2_norm(&diff) / crate::grid::l2_norm(&w.values);
        assert!(rel < 1e-4, "shape drift {rel}");
        assert!(solver.spectral_tail(&s.profile.values) < 1e-10);
    }
}
