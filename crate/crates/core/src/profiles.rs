//! Stationary solitary wave of the log-KdV equation and the Gaussian family.
//!
//! The stationary wave solves `lambda W = W''/12 + (1+W) log(1+W)`, is even,
//! positive and decays like `exp(-kappa |x|)` with `kappa = sqrt(12(lambda-1))`.
//! It is obtained by shooting from the turning point `(W0, 0)` on the zero
//! level set `E = -1/4` of the first integral.

use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::grid::{Parity, SpectralGrid, VariableTag, WaveProfile};
use crate::nonlinearities::g_raw;
use crate::ode::{Dopri5, StepStats};

/// Tail decay rate `sqrt(12(lambda - 1))`.
pub fn decay_rate(lambda: f64) -> Result<f64> {
    if !(lambda > 1.0) {
        return Err(CoreError::InvalidParameter(format!("lambda must exceed 1, got {lambda}")));
    }
    Ok((12.0 * (lambda - 1.0)).sqrt())
}

/// First integral `W'^2/24 + (1+W)^2 log(1+W)/2 - (1+W)^2/4 - lambda W^2/2`.
pub fn first_integral(w: f64, wp: f64, lambda: f64) -> f64 {
    let q = 1.0 + w;
    wp * wp / 24.0 + 0.5 * q * q * w.ln_1p() - 0.25 * q * q - 0.5 * lambda * w * w
}

/// `G(W)/W^2` where `G(W) = int_0^W (1+s) log(1+s) ds`.
fn g_integral_over_square(w: f64) -> f64 {
    if w.abs() < 0.3 {
        // G(W) = W^2/2 + sum_{n>=2} (-1)^n W^(n+1) / ((n+1) n (n-1))
        let mut sum = 0.5;
        let mut power = -1.0;
        let mut n = 2.0;
        loop {
            power *= -w;
            let term = power / ((n + 1.0) * n * (n - 1.0));
            sum += term;
            if term.abs() < 1e-19 {
                break;
            }
            n += 1.0;
        }
        sum
    } else {
        let q = 1.0 + w;
        (0.5 * q * q * w.ln_1p() - 0.25 * q * q + 0.25) / (w * w)
    }
}

/// `(-1/4 - U(W)) / W^2`, so that on the zero level set `W'^2 = 24 W^2 q(W)`.
fn level_ratio(w: f64, lambda: f64) -> f64 {
    0.5 * lambda - g_integral_over_square(w)
}

/// Positive turning point `W0` with `E(W0, 0) = -1/4`.
pub fn turning_point(lambda: f64) -> Result<f64> {
    decay_rate(lambda)?;
    let upper = (2.0 * lambda).exp().max(10.0);
    let mut a = 1e-3;
    if level_ratio(a, lambda) <= 0.0 {
        return Err(CoreError::NoBracket(format!("no positive turning point for lambda = {lambda}")));
    }
    let mut b = a;
    loop {
        b *= 1.5;
        if b > upper {
            return Err(CoreError::NoBracket(format!(
                "first integral has no sign change in (0, {upper}] for lambda = {lambda}"
            )));
        }
        if level_ratio(b, lambda) < 0.0 {
            break;
        }
        a = b;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if level_ratio(mid, lambda) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Options of the shooting solver.
#[derive(Debug, Clone, Copy)]
pub struct ShootingOptions {
    /// Local error tolerance of the integrator.
    pub tolerance: f64,
    /// Amplitude below which the exponential tail takes over.
    pub tail_threshold: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self { tolerance: 1e-12, tail_threshold: 1e-13 }
    }
}

/// Stationary log-KdV wave with diagnostics.
#[derive(Debug, Clone)]
pub struct StationaryWave {
    pub lambda: f64,
    pub profile: WaveProfile,
    pub amplitude: f64,
    pub kappa: f64,
    /// Sup norm of the spectrally evaluated residual.
    pub residual: f64,
    pub diagnostics: StationaryDiagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryDiagnostics {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Position where the integrated orbit hands over to the exponential tail.
    pub tail_cut: f64,
    /// Decay rate fitted on the integrated tail.
    pub fitted_decay_rate: f64,
    /// Prefactor `C` in `W ~ C exp(-kappa |x|)` from the same fit.
    pub tail_prefactor: f64,
    pub first_integral_drift: f64,
}

/// Solve for the stationary wave on an x-scale grid.
///
/// The orbit is integrated from the turning point with the second order
/// equation until the amplitude halves; from there the first integral gives
/// `(log W)' = -sqrt(24 q(W))`, which is stable towards the tail and is
/// integrated in `log W` until the tail threshold. The remaining nodes get
/// the linear tail `W_cut exp(-kappa (x - x_cut))`.
pub fn solve_stationary(lambda: f64, grid: &SpectralGrid) -> Result<StationaryWave> {
    solve_stationary_with(lambda, grid, ShootingOptions::default())
}

pub fn solve_stationary_with(lambda: f64, grid: &SpectralGrid, opts: ShootingOptions) -> Result<StationaryWave> {
    let kappa = decay_rate(lambda)?;
    let w0 = turning_point(lambda)?;
    let n = grid.n_points();
    let h = grid.spacing();
    let half = n / 2;
    let solver = Dopri5 { rtol: opts.tolerance, atol: opts.tolerance * 1e-2, max_steps: 10_000_000 };
    let mut stats = StepStats::default();

    // right half including x = 0 (node n/2) and x = L (identified with node 0)
    let mut right = vec![0.0; half + 1];
    right[0] = w0;
    let mut step = 0.1 * h;
    let mut second_order = |_x: f64, y: &[f64; 2]| [y[1], 12.0 * (lambda * y[0] - g_raw(y[0]))];
    let mut state = [w0, 0.0];
    let mut j = 0;
    let mut max_drift: f64 = 0.0;
    while state[0] > 0.5 * w0 {
        if j == half {
            return Err(CoreError::OrbitEscape("orbit did not descend within the grid".into()));
        }
        state = solver.integrate(&mut second_order, j as f64 * h, state, (j + 1) as f64 * h, &mut step, &mut stats)?;
        j += 1;
        if !(state[0] > 0.0) || state[0] > w0 * (1.0 + 1e-9) || !state[0].is_finite() {
            return Err(CoreError::OrbitEscape(format!("orbit left the level set at x = {}", j as f64 * h)));
        }
        right[j] = state[0];
        max_drift = max_drift.max((first_integral(state[0], state[1], lambda) + 0.25).abs());
    }

    let mut log_rhs = |_x: f64, y: &[f64; 1]| {
        let w = y[0].exp();
        let q = level_ratio(w, lambda);
        [-(24.0 * q.max(0.0)).sqrt()]
    };
    let mut psi = [state[0].ln()];
    let ln_threshold = opts.tail_threshold.ln();
    let mut cut = j;
    while j < half && psi[0] > ln_threshold {
        psi = solver.integrate(&mut log_rhs, j as f64 * h, psi, (j + 1) as f64 * h, &mut step, &mut stats)?;
        j += 1;
        right[j] = psi[0].exp();
        cut = j;
    }
    let w_cut = right[cut];
    for (i, r) in right.iter_mut().enumerate().skip(cut + 1) {
        *r = w_cut * (-kappa * (i - cut) as f64 * h).exp();
    }

    let mut values = vec![0.0; n];
    for (i, &r) in right.iter().enumerate() {
        let jr = (half + i) % n;
        values[jr] = r;
        values[grid.mirror(jr)] = r;
    }
    let profile = WaveProfile::new(grid.clone(), values, VariableTag::X, Parity::Even)?;
    let residual = stationary_residual(&profile, lambda)?.sup();
    let (fitted, prefactor) = fit_tail(&right, h);
    Ok(StationaryWave {
        lambda,
        profile,
        amplitude: w0,
        kappa,
        residual,
        diagnostics: StationaryDiagnostics {
            accepted_steps: stats.accepted,
            rejected_steps: stats.rejected,
            tail_cut: cut as f64 * h,
            fitted_decay_rate: fitted,
            tail_prefactor: prefactor,
            first_integral_drift: max_drift,
        },
    })
}

/// Least-squares fit of `log W = log C - kappa x` over `1e-10 <= W <= 1e-4`.
fn fit_tail(right: &[f64], h: f64) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = right
        .iter()
        .enumerate()
        .filter(|(_, &w)| (1e-10..=1e-4).contains(&w))
        .map(|(i, &w)| (i as f64 * h, w.ln()))
        .collect();
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let intercept = (sy - slope * sx) / m;
    (-slope, intercept.exp())
}

/// Pointwise residual `W''/12 + g(W) - lambda W` with a spectral second derivative.
pub fn stationary_residual(profile: &WaveProfile, lambda: f64) -> Result<WaveProfile> {
    if profile.values.iter().any(|&w| w <= -1.0) {
        return Err(CoreError::Domain("profile reaches W <= -1".into()));
    }
    let d2 = profile.grid.derivative(&profile.values, 2);
    let r = profile
        .values
        .iter()
        .zip(&d2)
        .map(|(&w, &w2)| w2 / 12.0 + g_raw(w) - lambda * w)
        .collect();
    Ok(profile.with_values(r, profile.parity))
}

/// Gaussian `v_G(x) = sqrt(e) exp(-3 x^2)`, which solves `v''/12 + v log v = 0`.
pub fn gaussian_profile(grid: &SpectralGrid) -> WaveProfile {
    let amp = 0.5f64.exp();
    WaveProfile::from_fn(grid, VariableTag::X, Parity::Even, |x| amp * (-3.0 * x * x).exp())
}

/// Member `exp(2b) v_G(x - b tau - a)` of the Gaussian family.
pub fn gausson(grid: &SpectralGrid, shift: f64, speed: f64, tau: f64) -> WaveProfile {
    let amp = (2.0 * speed).exp() * 0.5f64.exp();
    let parity = if shift == 0.0 && speed * tau == 0.0 { Parity::Even } else { Parity::None };
    WaveProfile::from_fn(grid, VariableTag::X, parity, |x| {
        let y = x - speed * tau - shift;
        amp * (-3.0 * y * y).exp()
    })
}

/// Residual `v''/12 + v log v` of the Gaussian identity.
pub fn gaussian_identity_residual(profile: &WaveProfile) -> Result<WaveProfile> {
    if profile.values.iter().any(|&v| v < 0.0) {
        return Err(CoreError::Domain("negative value in v log v".into()));
    }
    let d2 = profile.grid.derivative(&profile.values, 2);
    let r = profile
        .values
        .iter()
        .zip(&d2)
        .map(|(&v, &v2)| v2 / 12.0 + crate::nonlinearities::vlogv_raw(v))
        .collect();
    Ok(profile.with_values(r, profile.parity))
}

/// Resample an x-scale profile at `x = eps z` on a z-scale grid; points
/// outside the x-domain are treated as part of the decayed tail.
pub fn dilate(profile: &WaveProfile, epsilon: f64, z_grid: &SpectralGrid) -> WaveProfile {
    let points: Vec<f64> = z_grid.nodes().iter().map(|z| epsilon * z).collect();
    let mut values = profile.grid.evaluate_localized(&profile.values, &points);
    z_grid.symmetrize(&mut values, profile.parity);
    WaveProfile { grid: z_grid.clone(), values, tag: VariableTag::Z, parity: profile.parity }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_rate_values() {
        assert!((decay_rate(2.0).unwrap() - 3.4641016151377544).abs() < 1e-15);
        assert!(matches!(decay_rate(1.0), Err(CoreError::InvalidParameter(_))));
        assert!(decay_rate(0.5).is_err());
    }

    #[test]
    fn level_ratio_series_matches_closed_form() {
        for &w in &[0.05, 0.1, 0.29] {
            let q = 1.0 + w;
            let closed = (0.5 * q * q * f64::ln_1p(w) - 0.25 * q * q + 0.25) / (w * w);
            assert!((g_integral_over_square(w) - closed).abs() < 1e-12);
        }
        // near zero G(W)/W^2 -> 1/2 + W/6
        assert!((g_integral_over_square(1e-8) - (0.5 + 1e-8 / 6.0)).abs() < 1e-16);
    }

    #[test]
    fn turning_point_on_level_set() {
        for &lambda in &[1.5, 2.0, 3.0] {
            let w0 = turning_point(lambda).unwrap();
            assert!((first_integral(w0, 0.0, lambda) + 0.25).abs() < 1e-12, "lambda = {lambda}");
            assert!(w0 > 0.0);
        }
    }

    #[test]
    fn gaussian_value_at_origin() {
        let g = SpectralGrid::default_x_grid(2.0).unwrap();
        let v = gaussian_profile(&g);
        assert!((v.values[1024] - 1.6487212707001282).abs() < 1e-15);
    }

    #[test]
    fn gaussian_identity_holds_spectrally() {
        let g = SpectralGrid::default_x_grid(2.0).unwrap();
        let r = gaussian_identity_residual(&gaussian_profile(&g)).unwrap();
        assert!(r.sup() <= 1e-8, "residual {}", r.sup());
        let moving = gausson(&g, 0.7, 0.3, 2.0);
        let r = gaussian_identity_residual(&moving).unwrap();
        // exp(2b) v_G solves the identity with an extra 2b v term
        let extra: f64 = moving
            .values
            .iter()
            .zip(&r.values)
            .map(|(v, rv)| (rv - 0.6 * v).abs())
            .fold(0.0, f64::max);
        assert!(extra <= 1e-8);
    }

    #[test]
    fn stationary_wave_properties() {
        let grid = SpectralGrid::default_x_grid(2.0).unwrap();
        let wave = solve_stationary(2.0, &grid).unwrap();
        assert!(wave.residual <= 1e-7, "residual {}", wave.residual);
        let v = &wave.profile.values;
        let half = grid.n_points() / 2;
        assert!((v[half] - wave.amplitude).abs() < 1e-14);
        for j in 0..grid.n_points() {
            assert!(v[j] >= 0.0);
            assert_eq!(v[j], v[grid.mirror(j)]);
        }
        for j in half..grid.n_points() - 1 {
            assert!(v[j + 1] <= v[j]);
        }
        let rel = (wave.diagnostics.fitted_decay_rate - wave.kappa).abs() / wave.kappa;
        assert!(rel < 0.02, "fitted {}", wave.diagnostics.fitted_decay_rate);
        assert!(wave.diagnostics.first_integral_drift < 1e-9);
    }

    #[test]
    fn dilation_samples_scaled_profile() {
        let grid = SpectralGrid::default_x_grid(2.0).unwrap();
        let wave = solve_stationary(2.0, &grid).unwrap();
        let z = SpectralGrid::default_z_grid(2.0, 0.1).unwrap();
        let d = dilate(&wave.profile, 0.1, &z);
        assert!((d.values[z.n_points() / 2] - wave.amplitude).abs() < 1e-12);
        assert!(d.values[0].abs() < 1e-12);
    }
}
