//! Linearized operators around the stationary wave and their spectra.
//!
//! `L = -(1/12) d^2 + lambda - 1 - log(1 + W)` is the linearization of the
//! stationary equation. `S = K^{-1} log(1 + W)` with `K = -(1/12) d^2 + lambda - 1`
//! is studied through its symmetric form `K^{-1/2} log(1 + W) K^{-1/2}`,
//! which has the same spectrum. Dense matrices are assembled on the x-grid
//! and diagonalised blockwise on the even and odd reflection subspaces.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::grid::{big_l2_norm, Parity, SpectralGrid, WaveProfile};

fn log_potential(w_stat: &WaveProfile) -> Result<Vec<f64>> {
    w_stat
        .values
        .iter()
        .map(|&w| {
            if w <= -1.0 {
                Err(CoreError::Domain("stationary profile reaches -1".into()))
            } else {
                Ok(w.ln_1p())
            }
        })
        .collect()
}

/// Circulant matrix of an even Fourier symbol on the grid.
fn circulant<F: Fn(f64) -> f64>(grid: &SpectralGrid, symbol: F) -> DMatrix<f64> {
    let n = grid.n_points();
    let coeffs: Vec<Complex64> = (0..n).map(|m| Complex64::new(symbol(grid.wavenumber(m)), 0.0)).collect();
    let col = grid.inverse_real(coeffs);
    DMatrix::from_fn(n, n, |i, j| col[(i + n - j) % n])
}

/// Dense matrix of `L_lambda` on the grid of `w_stat`.
pub fn build_linearized_operator(w_stat: &WaveProfile, lambda: f64) -> Result<DMatrix<f64>> {
    let ell = log_potential(w_stat)?;
    let mut m = circulant(&w_stat.grid, |k| k * k / 12.0 + lambda - 1.0);
    for (i, l) in ell.iter().enumerate() {
        m[(i, i)] -= l;
    }
    Ok(m)
}

/// Dense symmetric form of `S_lambda` (or of `S_lambda,p` when a frequency
/// cutoff on the x-scale is given).
pub fn build_s_operator(w_stat: &WaveProfile, lambda: f64, cutoff: Option<f64>) -> Result<DMatrix<f64>> {
    if !(lambda > 1.0) {
        return Err(CoreError::InvalidParameter(format!("lambda must exceed 1, got {lambda}")));
    }
    let ell = log_potential(w_stat)?;
    let half = circulant(&w_stat.grid, |k| {
        let pass = cutoff.map_or(true, |c| k.abs() <= c);
        if pass {
            (k * k / 12.0 + lambda - 1.0).powf(-0.5)
        } else {
            0.0
        }
    });
    let mut scaled = half.clone();
    for (j, l) in ell.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*l);
    }
    let mut s = &scaled * &half;
    // enforce exact symmetry against rounding in the product
    let st = s.transpose();
    s += st;
    s *= 0.5;
    Ok(s)
}

/// Apply `L_lambda` to a profile via FFT.
pub fn apply_linearized_operator(w_stat: &WaveProfile, lambda: f64, u: &[f64]) -> Result<Vec<f64>> {
    let ell = log_potential(w_stat)?;
    let d2 = w_stat.grid.derivative(u, 2);
    Ok(u.iter()
        .zip(&d2)
        .zip(&ell)
        .map(|((&ui, &d), &l)| -d / 12.0 + (lambda - 1.0 - l) * ui)
        .collect())
}

/// Apply `K^s` for a real power `s` via FFT.
pub fn apply_resolvent_power(grid: &SpectralGrid, lambda: f64, u: &[f64], power: f64) -> Vec<f64> {
    grid.apply_multiplier(u, |_, k| Complex64::new((k * k / 12.0 + lambda - 1.0).powf(power), 0.0))
}

/// Eigen-decomposition of a symmetric matrix that commutes with the grid
/// reflection `x -> -x`. Eigenvalues ascending, eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct ParityEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub parities: Vec<Parity>,
}

fn parity_basis(n: usize, parity: Parity) -> Vec<Vec<(usize, f64)>> {
    let h = n / 2;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    match parity {
        Parity::Even => (0..=h)
            .map(|j| if j == 0 || j == h { vec![(j, 1.0)] } else { vec![(j, r), (n - j, r)] })
            .collect(),
        Parity::Odd => (1..h).map(|j| vec![(j, r), (n - j, -r)]).collect(),
        Parity::None => unreachable!(),
    }
}

/// Diagonalise on the even and odd subspaces separately.
pub fn parity_eigen(matrix: &DMatrix<f64>) -> Result<ParityEigen> {
    let n = matrix.nrows();
    if n != matrix.ncols() || n % 2 != 0 || n < 4 {
        return Err(CoreError::InvalidParameter("parity_eigen needs a square matrix of even size".into()));
    }
    let mut pairs: Vec<(f64, DVector<f64>, Parity)> = Vec::with_capacity(n);
    for parity in [Parity::Even, Parity::Odd] {
        let basis = parity_basis(n, parity);
        let m = basis.len();
        let block = DMatrix::from_fn(m, m, |a, b| {
            let mut s = 0.0;
            for &(i, wi) in &basis[a] {
                for &(j, wj) in &basis[b] {
                    s += wi * wj * matrix[(i, j)];
                }
            }
            s
        });
        let eig = SymmetricEigen::new(block);
        for (idx, &ev) in eig.eigenvalues.iter().enumerate() {
            let mut v = DVector::zeros(n);
            for (a, entries) in basis.iter().enumerate() {
                for &(i, wi) in entries {
                    v[i] += wi * eig.eigenvectors[(a, idx)];
                }
            }
            pairs.push((ev, v, parity));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let eigenvalues = pairs.iter().map(|p| p.0).collect();
    let parities = pairs.iter().map(|p| p.2).collect();
    let cols: Vec<DVector<f64>> = pairs.into_iter().map(|p| p.1).collect();
    Ok(ParityEigen { eigenvalues, eigenvectors: DMatrix::from_columns(&cols), parities })
}

/// |cos| of the angle between two vectors.
pub fn alignment(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).abs()
}

/// Spectral structure of `L_lambda` and `S_lambda` around one stationary wave.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub lambda: f64,
    /// Eigenvalues of `L` below `-zero_tolerance`.
    pub l_negative_count: usize,
    pub l_lowest: f64,
    /// `L` eigenvalue closest to zero.
    pub l_zero_eigenvalue: f64,
    /// Alignment of its eigenvector with `W'`.
    pub l_zero_alignment: f64,
    /// Whether the eigenvector of the negative eigenvalue has one sign.
    pub l_ground_state_positive: bool,
    /// Eigenvalues of `L` in `(zero_tolerance, lambda - 1)`.
    pub l_eigenvalues_below_continuum: Vec<f64>,
    pub s_above_one_count: usize,
    pub s_largest: f64,
    pub s_near_one_count: usize,
    pub s_one_alignment: f64,
    pub s_min: f64,
    pub zero_tolerance: f64,
    pub l_eigenvalues: Vec<f64>,
    pub s_eigenvalues: Vec<f64>,
}

/// Tolerance separating the zero mode from genuinely signed eigenvalues.
pub const ZERO_MODE_TOLERANCE: f64 = 1e-6;

/// Assemble and diagonalise both operators for the given stationary wave.
pub fn spectral_report(w_stat: &WaveProfile, lambda: f64) -> Result<SpectralReport> {
    let grid = &w_stat.grid;
    let wp = grid.derivative(&w_stat.values, 1);

    let l = build_linearized_operator(w_stat, lambda)?;
    let le = parity_eigen(&l)?;
    let tol = ZERO_MODE_TOLERANCE;
    let l_negative_count = le.eigenvalues.iter().filter(|&&e| e < -tol).count();
    let (zi, &l_zero) = le
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("non-empty spectrum");
    let zero_vec: Vec<f64> = le.eigenvectors.column(zi).iter().copied().collect();
    let ground: Vec<f64> = le.eigenvectors.column(0).iter().copied().collect();
    let gmax = ground.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gsign = ground[grid.n_points() / 2].signum();
    let l_ground_state_positive = ground.iter().all(|&v| v * gsign >= -1e-8 * gmax);
    let below: Vec<f64> = le
        .eigenvalues
        .iter()
        .copied()
        .filter(|&e| e > tol && e < lambda - 1.0)
        .collect();

    let s = build_s_operator(w_stat, lambda, None)?;
    let se = parity_eigen(&s)?;
    let s_above_one_count = se.eigenvalues.iter().filter(|&&e| e > 1.0 + tol).count();
    let s_near_one_count = se.eigenvalues.iter().filter(|&&e| (e - 1.0).abs() <= tol).count();
    let (oi, _) = se
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 1.0).abs().total_cmp(&(b.1 - 1.0).abs()))
        .expect("non-empty spectrum");
    let one_vec: Vec<f64> = se.eigenvectors.column(oi).iter().copied().collect();
    let k_half_wp = apply_resolvent_power(grid, lambda, &wp, 0.5);

    Ok(SpectralReport {
        lambda,
        l_negative_count,
        l_lowest: le.eigenvalues[0],
        l_zero_eigenvalue: l_zero,
        l_zero_alignment: alignment(&zero_vec, &wp),
        l_ground_state_positive,
        l_eigenvalues_below_continuum: below,
        s_above_one_count,
        s_largest: *se.eigenvalues.last().expect("non-empty spectrum"),
        s_near_one_count,
        s_one_alignment: alignment(&one_vec, &k_half_wp),
        s_min: se.eigenvalues[0],
        zero_tolerance: tol,
        l_eigenvalues: le.eigenvalues,
        s_eigenvalues: se.eigenvalues,
    })
}

/// Outcome of the low-pass truncation check for `S_lambda`.
#[derive(Debug, Clone, Serialize)]
pub struct TruncationReport {
    pub epsilon: f64,
    pub p_cut: f64,
    /// Cutoff `eps^(p-1)` on the x-scale.
    pub cutoff: f64,
    pub trials: usize,
    /// Largest `||(S - S_p) U|| / ||U||` over the trials.
    pub max_ratio: f64,
    /// `12 eps^(2-2p) ||W||_sup`.
    pub bound: f64,
}

/// Measure `||(S_lambda - S_lambda,p) U||_{L2}` over random `U` against the
/// bound `12 eps^(2-2p) ||W||_sup ||U||`.
pub fn truncation_deviation<R: Rng>(
    w_stat: &WaveProfile,
    lambda: f64,
    epsilon: f64,
    p_cut: f64,
    trials: usize,
    rng: &mut R,
) -> Result<TruncationReport> {
    let grid = &w_stat.grid;
    let ell = log_potential(w_stat)?;
    let cutoff = epsilon.powf(p_cut - 1.0);
    let mut max_ratio: f64 = 0.0;
    for _ in 0..trials {
        let u: Vec<f64> = (0..grid.n_points()).map(|_| crate::rng::standard_normal(rng)).collect();
        let lu: Vec<f64> = u.iter().zip(&ell).map(|(a, b)| a * b).collect();
        let diff = grid.apply_multiplier(&lu, |_, k| {
            if k.abs() > cutoff {
                Complex64::new(1.0 / (k * k / 12.0 + lambda - 1.0), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        max_ratio = max_ratio.max(big_l2_norm(grid, &diff) / big_l2_norm(grid, &u));
    }
    Ok(TruncationReport {
        epsilon,
        p_cut,
        cutoff,
        trials,
        max_ratio,
        bound: 12.0 * epsilon.powf(2.0 - 2.0 * p_cut) * w_stat.sup(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VariableTag;
    use crate::profiles::solve_stationary;

    fn small_wave(lambda: f64) -> WaveProfile {
        let grid = SpectralGrid::new(256, 12.0).unwrap();
        solve_stationary(lambda, &grid).unwrap().profile
    }

    #[test]
    fn parity_eigen_reconstructs() {
        let w = small_wave(2.0);
        let l = build_linearized_operator(&w, 2.0).unwrap();
        let e = parity_eigen(&l).unwrap();
        let d = DMatrix::from_diagonal(&DVector::from_vec(e.eigenvalues.clone()));
        let rec = &e.eigenvectors * d * e.eigenvectors.transpose();
        let err = (&rec - &l).abs().max();
        assert!(err <= 1e-10 * l.abs().max(), "reconstruction error {err}");
        let orth = (e.eigenvectors.transpose() * &e.eigenvectors - DMatrix::identity(256, 256)).abs().max();
        assert!(orth < 1e-10);
    }

    #[test]
    fn dense_operator_matches_fft_application() {
        let w = small_wave(2.0);
        let l = build_linearized_operator(&w, 2.0).unwrap();
        let u: Vec<f64> = w.grid.nodes().iter().map(|x| (-(x - 0.5).powi(2)).exp()).collect();
        let dense = &l * DVector::from_vec(u.clone());
        let fft = apply_linearized_operator(&w, 2.0, &u).unwrap();
        for i in 0..u.len() {
            assert!((dense[i] - fft[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn structure_on_small_grid() {
        let w = small_wave(2.0);
        let r = spectral_report(&w, 2.0).unwrap();
        assert_eq!(r.l_negative_count, 1);
        assert!(r.l_ground_state_positive);
        assert!(r.l_zero_eigenvalue.abs() < 1e-6);
        assert!(r.l_zero_alignment > 0.999);
        assert_eq!(r.s_above_one_count, 1);
        assert_eq!(r.s_near_one_count, 1);
        assert!(r.s_one_alignment > 0.999);
    }

    #[test]
    fn s_operator_vanishes_for_zero_background() {
        let grid = SpectralGrid::new(64, 8.0).unwrap();
        let zero = WaveProfile::new(grid, vec![0.0; 64], VariableTag::X, Parity::Even).unwrap();
        let s = build_s_operator(&zero, 2.0, None).unwrap();
        assert_eq!(s.abs().max(), 0.0);
        assert!(matches!(build_s_operator(&zero, 1.0, None), Err(CoreError::InvalidParameter(_))));
    }

    #[test]
    fn truncation_within_bound() {
        use rand::SeedableRng;
        let w = small_wave(2.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let r = truncation_deviation(&w, 2.0, 0.1, 2.0 / 3.0, 20, &mut rng).unwrap();
        assert!(r.max_ratio <= r.bound);
    }
}
