//! Periodic spectral grids, wave profiles and the norms used throughout.
//!
//! A grid of `n` points on `[-L, L)` has nodes `x_j = -L + j h`, `h = 2L/n`,
//! and wavenumbers `k_m = pi m / L` in FFT order. Fourier multipliers are
//! applied with a complex transform of the real samples; the Nyquist mode is
//! kept for even symbols and dropped for odd-order derivatives.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Clone)]
struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic grid with cached FFT plans.
#[derive(Clone)]
pub struct SpectralGrid {
    n: usize,
    half_width: f64,
    fft: FftPair,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("n_points", &self.n)
            .field("half_width", &self.half_width)
            .finish()
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.half_width == other.half_width
    }
}

impl SpectralGrid {
    pub fn new(n_points: usize, half_width: f64) -> Result<Self> {
        if n_points < 16 || !n_points.is_power_of_two() {
            return Err(CoreError::InvalidGrid(format!(
                "n_points must be a power of two >= 16, got {n_points}"
            )));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(CoreError::InvalidGrid(format!("half_width must be positive, got {half_width}")));
        }
        let mut planner = FftPlanner::new();
        let fft = FftPair {
            forward: planner.plan_fft_forward(n_points),
            inverse: planner.plan_fft_inverse(n_points),
        };
        Ok(Self { n: n_points, half_width, fft })
    }

    /// Default x-scale grid for the stationary log-KdV wave.
    pub fn default_x_grid(lambda: f64) -> Result<Self> {
        let kappa = (12.0 * (lambda - 1.0)).sqrt();
        Self::new(2048, f64::max(20.0, 12.0 / kappa))
    }

    /// Default z-scale (lattice variable) grid: half-width
    /// `max(40/(eps kappa), 50)` and the smallest power of two with `h <= 0.25`.
    pub fn default_z_grid(lambda: f64, epsilon: f64) -> Result<Self> {
        let kappa = (12.0 * (lambda - 1.0)).sqrt();
        let half_width = f64::max(40.0 / (epsilon * kappa), 50.0);
        let mut n = 16;
        while 2.0 * half_width / n as f64 > 0.25 {
            n *= 2;
        }
        Self::new(n, half_width)
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Signed mode index of FFT slot `m`.
    pub fn mode_index(&self, m: usize) -> i64 {
        if m <= self.n / 2 {
            m as i64
        } else {
            m as i64 - self.n as i64
        }
    }

    pub fn wavenumber(&self, m: usize) -> f64 {
        std::f64::consts::PI * self.mode_index(m) as f64 / self.half_width
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.wavenumber(m)).collect()
    }

    pub fn is_nyquist(&self, m: usize) -> bool {
        m == self.n / 2
    }

    /// Index of the mirror node `-x_j`.
    pub fn mirror(&self, j: usize) -> usize {
        (self.n - j) % self.n
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(values.len(), self.n);
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward.process(&mut buf);
        buf
    }

    /// Inverse transform keeping the real part, normalised by `1/n`.
    pub fn inverse_real(&self, mut coeffs: Vec<Complex64>) -> Vec<f64> {
        self.fft.inverse.process(&mut coeffs);
        let scale = 1.0 / self.n as f64;
        coeffs.iter().map(|c| c.re * scale).collect()
    }

    /// Apply a Fourier multiplier given as a function of `(slot, k)`.
    pub fn apply_multiplier<F>(&self, values: &[f64], mut symbol: F) -> Vec<f64>
    where
        F: FnMut(usize, f64) -> Complex64,
    {
        let mut c = self.forward(values);
        for (m, cm) in c.iter_mut().enumerate() {
            *cm *= symbol(m, self.wavenumber(m));
        }
        self.inverse_real(c)
    }

    /// Spectral derivative of given order.
    pub fn derivative(&self, values: &[f64], order: u32) -> Vec<f64> {
        if order == 0 {
            return values.to_vec();
        }
        let i = Complex64::new(0.0, 1.0);
        self.apply_multiplier(values, |m, k| {
            if order % 2 == 1 && self.is_nyquist(m) {
                Complex64::new(0.0, 0.0)
            } else {
                (i * k).powu(order)
            }
        })
    }

    /// Shift `f(x) -> f(x + a)` through the exact band-limited interpolant.
    pub fn shift(&self, values: &[f64], a: f64) -> Vec<f64> {
        self.apply_multiplier(values, |_, k| Complex64::from_polar(1.0, k * a))
    }

    /// Replace samples by the average with their mirror images.
    pub fn symmetrize(&self, values: &mut [f64], parity: Parity) {
        let sign = match parity {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
            Parity::None => return,
        };
        for j in 0..=self.n / 2 {
            let r = self.mirror(j);
            let avg = 0.5 * (values[j] + sign * values[r]);
            values[j] = avg;
            values[r] = sign * avg;
        }
        if sign < 0.0 {
            values[0] = 0.0;
            values[self.n / 2] = 0.0;
        }
    }

    /// Evaluate the trigonometric interpolant of `values` at arbitrary points,
    /// reduced into the periodic domain.
    pub fn evaluate_periodic(&self, values: &[f64], points: &[f64]) -> Vec<f64> {
        let coeffs = self.interpolation_coefficients(values);
        points.iter().map(|&x| self.eval_coeffs(&coeffs, x)).collect()
    }

    /// Evaluate the interpolant at points; points outside `[-L, L)` give zero.
    /// Intended for profiles that have decayed at the domain edge.
    pub fn evaluate_localized(&self, values: &[f64], points: &[f64]) -> Vec<f64> {
        let coeffs = self.interpolation_coefficients(values);
        points
            .iter()
            .map(|&x| {
                if x < -self.half_width || x >= self.half_width {
                    0.0
                } else {
                    self.eval_coeffs(&coeffs, x)
                }
            })
            .collect()
    }

    /// Coefficients of `f(x) = sum_m c_m exp(i k_m (x + L))` for `m` in
    /// `-n/2..=n/2` (Nyquist split evenly between the two ends).
    fn interpolation_coefficients(&self, values: &[f64]) -> Vec<(f64, Complex64)> {
        let c = self.forward(values);
        let scale = 1.0 / self.n as f64;
        let mut out = Vec::with_capacity(self.n + 1);
        for (m, cm) in c.iter().enumerate() {
            let k = self.wavenumber(m);
            if self.is_nyquist(m) {
                out.push((k, cm * (0.5 * scale)));
                out.push((-k, cm * (0.5 * scale)));
            } else {
                out.push((k, cm * scale));
            }
        }
        out
    }

    fn eval_coeffs(&self, coeffs: &[(f64, Complex64)], x: f64) -> f64 {
        let period = 2.0 * self.half_width;
        let s = (x + self.half_width).rem_euclid(period);
        coeffs
            .iter()
            .map(|(k, c)| {
                let (sn, cs) = (k * s).sin_cos();
                c.re * cs - c.im * sn
            })
            .sum()
    }
}

/// Reflection parity of a profile about `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    None,
}

/// Which independent variable a profile is sampled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableTag {
    /// Macroscopic variable of the stationary log-KdV wave.
    X,
    /// Lattice travelling-wave variable `z = n - c t`.
    Z,
    /// Moving-frame variable `xi = eps (n - t)`.
    Xi,
}

/// Samples of a real function on a spectral grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveProfile {
    pub grid: SpectralGrid,
    pub values: Vec<f64>,
    pub tag: VariableTag,
    pub parity: Parity,
}

impl WaveProfile {
    pub fn new(grid: SpectralGrid, values: Vec<f64>, tag: VariableTag, parity: Parity) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(CoreError::GridMismatch(format!(
                "{} samples for a grid of {} points",
                values.len(),
                grid.n_points()
            )));
        }
        Ok(Self { grid, values, tag, parity })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &SpectralGrid, tag: VariableTag, parity: Parity, f: F) -> Self {
        let values = grid.nodes().into_iter().map(f).collect();
        Self { grid: grid.clone(), values, tag, parity }
    }

    pub fn zeros_like(&self) -> Self {
        Self { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    pub fn with_values(&self, values: Vec<f64>, parity: Parity) -> Self {
        Self { grid: self.grid.clone(), values, tag: self.tag, parity }
    }

    pub fn same_grid(&self, other: &WaveProfile) -> Result<()> {
        if self.grid != other.grid {
            return Err(CoreError::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    pub fn l2(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn big_l2(&self) -> f64 {
        self.l2() * self.grid.spacing().sqrt()
    }

    pub fn sup(&self) -> f64 {
        sup_norm(&self.values)
    }

    pub fn sobolev(&self, s: f64) -> f64 {
        sobolev_norm(&self.grid, &self.values, s)
    }

    /// Trapezoidal integral over the periodic domain (spectrally accurate).
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.spacing()
    }
}

/// Discrete `l^2` norm `sqrt(sum |x_j|^2)`.
pub fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Continuous `L^2` norm approximated by `sqrt(h sum |f_j|^2)`.
pub fn big_l2_norm(grid: &SpectralGrid, values: &[f64]) -> f64 {
    l2_norm(values) * grid.spacing().sqrt()
}

pub fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `H^s` norm with Fourier weight `(1 + k^2)^(s/2)`, consistent with
/// `big_l2_norm` at `s = 0`.
pub fn sobolev_norm(grid: &SpectralGrid, values: &[f64], s: f64) -> f64 {
    let c = grid.forward(values);
    let sum: f64 = c
        .iter()
        .enumerate()
        .map(|(m, cm)| {
            let k = grid.wavenumber(m);
            (1.0 + k * k).powf(s) * cm.norm_sqr()
        })
        .sum();
    (sum * grid.spacing() / grid.n_points() as f64).sqrt()
}

/// Fourier symbol of the unit hat kernel, `4 sin^2(k/2) / k^2`.
pub fn hat_symbol(k: f64) -> f64 {
    if k.abs() < 1e-4 {
        let k2 = k * k;
        1.0 - k2 / 12.0 + k2 * k2 / 360.0
    } else {
        let s = (0.5 * k).sin();
        4.0 * s * s / (k * k)
    }
}

/// Spectral derivative of a profile. Parity flips for odd orders.
pub fn spectral_derivative(profile: &WaveProfile, order: u32) -> WaveProfile {
    let values = profile.grid.derivative(&profile.values, order);
    let parity = match (profile.parity, order % 2) {
        (p, 0) => p,
        (Parity::Even, _) => Parity::Odd,
        (Parity::Odd, _) => Parity::Even,
        (Parity::None, _) => Parity::None,
    };
    profile.with_values(values, parity)
}

/// Convolution with the unit hat kernel via its Fourier symbol.
pub fn hat_convolve(profile: &WaveProfile) -> WaveProfile {
    let values = profile
        .grid
        .apply_multiplier(&profile.values, |_, k| Complex64::new(hat_symbol(k), 0.0));
    profile.with_values(values, profile.parity)
}

/// Exact band-limited shift `f(x) -> f(x + a)`.
pub fn band_shift(profile: &WaveProfile, a: f64) -> WaveProfile {
    let parity = if a == 0.0 { profile.parity } else { Parity::None };
    profile.with_values(profile.grid.shift(&profile.values, a), parity)
}

/// Split into the parts with `|k| <= cutoff` and `|k| > cutoff`.
pub fn low_pass_split(profile: &WaveProfile, cutoff: f64) -> (WaveProfile, WaveProfile) {
    let grid = &profile.grid;
    let c = grid.forward(&profile.values);
    let mut low = c.clone();
    let mut high = c;
    for m in 0..grid.n_points() {
        if grid.wavenumber(m).abs() <= cutoff {
            high[m] = Complex64::new(0.0, 0.0);
        } else {
            low[m] = Complex64::new(0.0, 0.0);
        }
    }
    (
        profile.with_values(grid.inverse_real(low), profile.parity),
        profile.with_values(grid.inverse_real(high), profile.parity),
    )
}

/// Sample a profile at the lattice points `x = eps n` for `n` in the range,
/// using band-limited evaluation; points wrap by periodicity.
pub fn sample_to_lattice(profile: &WaveProfile, epsilon: f64, n_range: std::ops::Range<i64>) -> Vec<f64> {
    let points: Vec<f64> = n_range.map(|n| epsilon * n as f64).collect();
    profile.grid.evaluate_periodic(&profile.values, &points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(SpectralGrid::new(1000, 1.0), Err(CoreError::InvalidGrid(_))));
        assert!(SpectralGrid::new(8, 1.0).is_err());
        assert!(SpectralGrid::new(64, 0.0).is_err());
    }

    #[test]
    fn nodes_and_wavenumbers() {
        let g = SpectralGrid::new(16, 4.0).unwrap();
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.node(0), -4.0);
        assert_eq!(g.node(8), 0.0);
        assert_eq!(g.wavenumber(1), std::f64::consts::PI / 4.0);
        assert_eq!(g.wavenumber(15), -std::f64::consts::PI / 4.0);
        assert_eq!(g.mirror(3), 13);
        assert_eq!(g.mirror(0), 0);
    }

    #[test]
    fn default_grids() {
        let x = SpectralGrid::default_x_grid(2.0).unwrap();
        assert_eq!(x.n_points(), 2048);
        assert_eq!(x.half_width(), 20.0);
        let z = SpectralGrid::default_z_grid(2.0, 0.1).unwrap();
        assert!(z.spacing() <= 0.25);
        assert!((z.half_width() - 40.0 / (0.1 * 12f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn gaussian_derivative_is_spectrally_accurate() {
        let g = SpectralGrid::new(256, 10.0).unwrap();
        let f = WaveProfile::from_fn(&g, VariableTag::X, Parity::Even, |x| (-x * x).exp());
        let d = spectral_derivative(&f, 1);
        let err = g
            .nodes()
            .iter()
            .zip(&d.values)
            .map(|(x, v)| (v + 2.0 * x * (-x * x).exp()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-12, "err = {err}");
        assert_eq!(d.parity, Parity::Odd);
    }

    #[test]
    fn hat_symbol_values() {
        assert!((hat_symbol(std::f64::consts::PI) - 4.0 / std::f64::consts::PI.powi(2)).abs() < 1e-15);
        assert!((hat_symbol(std::f64::consts::PI) - 0.4052847).abs() < 1e-7);
        assert_eq!(hat_symbol(0.0), 1.0);
        // the Taylor branch and the closed form agree at the switch point
        let k: f64 = 1e-4;
        let s = (0.5f64 * k).sin();
        assert!((hat_symbol(k * 0.999_999) - 4.0 * s * s / (k * k)).abs() < 1e-12);
    }

    #[test]
    fn hat_symbol_l2_norm() {
        // int |hat(k)|^2 dk / (2 pi) = int Lambda(x)^2 dx = 2/3
        let dk = 1e-3;
        let kmax = 4000.0;
        let mut sum = 0.0;
        let mut k = -kmax;
        while k < kmax {
            sum += hat_symbol(k + 0.5 * dk).powi(2) * dk;
            k += dk;
        }
        let norm = (sum / (2.0 * std::f64::consts::PI)).sqrt();
        assert!((norm - (2.0f64 / 3.0).sqrt()).abs() < 1e-4, "norm = {norm}");
    }

    #[test]
    fn hat_convolve_matches_direct_average() {
        // (Lambda * f)(x) = int_{-1}^{1} (1 - |y|) f(x - y) dy; for f = cos(a x) it is hat(a) cos(a x)
        let g = SpectralGrid::new(64, 8.0).unwrap();
        let a = 3.0 * std::f64::consts::PI / 8.0;
        let f = WaveProfile::from_fn(&g, VariableTag::Z, Parity::Even, |x| (a * x).cos());
        let h = hat_convolve(&f);
        for (x, v) in g.nodes().iter().zip(&h.values) {
            assert!((v - hat_symbol(a) * (a * x).cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn band_shift_integer_node_is_roll() {
        let g = SpectralGrid::new(64, 8.0).unwrap();
        let f = WaveProfile::from_fn(&g, VariableTag::X, Parity::Even, |x| (-(x - 0.3).powi(2)).exp());
        let s = band_shift(&f, 3.0 * g.spacing());
        for j in 0..64 {
            assert!((s.values[j] - f.values[(j + 3) % 64]).abs() < 1e-13);
        }
        let back = band_shift(&band_shift(&f, 0.37), -0.37);
        for j in 0..64 {
            assert!((back.values[j] - f.values[j]).abs() < 1e-13);
        }
    }

    #[test]
    fn low_pass_split_reconstructs() {
        let g = SpectralGrid::new(128, 10.0).unwrap();
        let f = WaveProfile::from_fn(&g, VariableTag::X, Parity::Even, |x| 1.0 / (x * x).cosh());
        let (lo, hi) = low_pass_split(&f, 1.3);
        for j in 0..128 {
            assert!((lo.values[j] + hi.values[j] - f.values[j]).abs() < 1e-14);
        }
        let c = g.forward(&hi.values);
        for m in 0..128 {
            if g.wavenumber(m).abs() <= 1.3 {
                assert!(c[m].norm() < 1e-12);
            }
        }
    }

    #[test]
    fn sample_to_lattice_hits_nodes() {
        let g = SpectralGrid::new(128, 8.0).unwrap();
        let f = WaveProfile::from_fn(&g, VariableTag::X, Parity::Even, |x| (-x * x).exp());
        let eps = 2.0 * g.spacing();
        let s = sample_to_lattice(&f, eps, -10..11);
        for (i, n) in (-10..11).enumerate() {
            assert!((s[i] - (-(eps * n as f64).powi(2)).exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn evaluate_off_grid() {
        let g = SpectralGrid::new(256, 10.0).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|x| (-x * x).exp()).collect();
        let pts = [0.1234, -3.3, 9.99, 15.0];
        let v = g.evaluate_periodic(&f, &pts);
        for (x, y) in pts.iter().zip(&v).take(3) {
            assert!((y - (-x * x).exp()).abs() < 1e-13);
        }
        // wraps to -5
        assert!((v[3] - (-25.0f64).exp()).abs() < 1e-13);
        let loc = g.evaluate_localized(&f, &pts);
        assert_eq!(loc[3], 0.0);
    }

    #[test]
    fn norms_of_constant() {
        let g = SpectralGrid::new(32, 4.0).unwrap();
        let f = vec![2.0; 32];
        assert!((l2_norm(&f) - (4.0f64 * 32.0).sqrt()).abs() < 1e-12);
        assert!((big_l2_norm(&g, &f) - (4.0f64 * 8.0).sqrt()).abs() < 1e-12);
        assert!((sobolev_norm(&g, &f, 1.0) - big_l2_norm(&g, &f)).abs() < 1e-12);
        assert_eq!(sup_norm(&[-3.0, 1.0]), 3.0);
    }

    #[test]
    fn symmetrize_even_and_odd() {
        let g = SpectralGrid::new(16, 4.0).unwrap();
        let mut v: Vec<f64> = (0..16).map(|j| j as f64).collect();
        g.symmetrize(&mut v, Parity::Even);
        for j in 0..16 {
            assert_eq!(v[j], v[g.mirror(j)]);
        }
        let mut o: Vec<f64> = (0..16).map(|j| (j * j) as f64).collect();
        g.symmetrize(&mut o, Parity::Odd);
        for j in 0..16 {
            assert_eq!(o[j], -o[g.mirror(j)]);
        }
    }

    proptest! {
        #[test]
        fn derivative_kills_constants(c in -10.0f64..10.0, order in 1u32..4) {
            let g = SpectralGrid::new(32, 3.0).unwrap();
            let d = g.derivative(&vec![c; 32], order);
            prop_assert!(sup_norm(&d) <= 1e-12 * (1.0 + c.abs()));
        }

        #[test]
        fn parseval(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = SpectralGrid::new(64, 5.0).unwrap();
            let v: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
            prop_assert!((sobolev_norm(&g, &v, 0.0) - big_l2_norm(&g, &v)).abs() <= 1e-12);
        }

        #[test]
        fn hat_symbol_bounded(k in -200.0f64..200.0) {
            let h = hat_symbol(k);
            prop_assert!((0.0..=1.0).contains(&h));
        }
    }
}
