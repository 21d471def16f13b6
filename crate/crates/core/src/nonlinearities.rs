//! Scalar nonlinearities of the rescaled lattice and of the log-KdV limit.
//!
//! The lattice potential is `V(w) = ((1+w)^(2+eps^2) - 1)/(2+eps^2) - w` with
//! force `V'(w) = (1+w)^(1+eps^2) - 1`. All evaluations go through `log1p`
//! and `expm1` so that small strains keep full relative accuracy.

use crate::error::{CoreError, Result};

fn check_strain(w: f64) -> Result<()> {
    if w.is_nan() || w <= -1.0 {
        return Err(CoreError::Domain(format!("strain must exceed -1, got {w}")));
    }
    Ok(())
}

/// `e^s - 1 - s` without cancellation for small `s`.
pub fn expm1_minus_x(s: f64) -> f64 {
    if s.abs() < 0.5 {
        let mut term = s * s / 2.0;
        let mut sum = term;
        let mut n = 2.0;
        while term.abs() > 1e-18 * sum.abs() {
            n += 1.0;
            term *= s / n;
            sum += term;
        }
        sum
    } else {
        s.exp_m1() - s
    }
}

/// `w - log(1+w)` without cancellation for small `w`.
pub fn x_minus_log1p(w: f64) -> f64 {
    if w.abs() < 0.25 {
        let mut power = w * w;
        let mut sum = 0.0;
        let mut n = 2.0;
        loop {
            let term = power / n;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            power *= -w;
            n += 1.0;
        }
        sum
    } else {
        w - w.ln_1p()
    }
}

/// Lattice potential `V_eps(w)`.
pub fn potential(w: f64, eps: f64) -> Result<f64> {
    check_strain(w)?;
    Ok(potential_raw(w, eps * eps))
}

/// Lattice force `V'_eps(w) = (1+w)^(1+eps^2) - 1`.
pub fn force(w: f64, eps: f64) -> Result<f64> {
    check_strain(w)?;
    Ok(force_raw(w, eps * eps))
}

/// `V''_eps(w) = (1+eps^2)(1+w)^(eps^2)`.
pub fn stiffness(w: f64, eps: f64) -> Result<f64> {
    check_strain(w)?;
    Ok(stiffness_raw(w, eps * eps))
}

/// `V'''_eps(w) = eps^2 (1+eps^2)(1+w)^(eps^2-1)`.
pub fn third_derivative(w: f64, eps: f64) -> Result<f64> {
    check_strain(w)?;
    Ok(third_raw(w, eps * eps))
}

/// `V''''_eps(w) = eps^2 (eps^2-1)(1+eps^2)(1+w)^(eps^2-2)`.
pub fn fourth_derivative(w: f64, eps: f64) -> Result<f64> {
    check_strain(w)?;
    let e2 = eps * eps;
    Ok(e2 * (e2 - 1.0) * (1.0 + e2) * ((e2 - 2.0) * w.ln_1p()).exp())
}

/// `N_eps(w) = V'_eps(w) - w = (1+w) expm1(eps^2 log1p w)`.
pub fn n_epsilon(w: f64, eps: f64) -> Result<f64> {
    check_strain(w)?;
    Ok(n_raw(w, eps * eps))
}

/// Remainder `M_eps(w) = V'_eps(w) - w - eps^2 g(w)`, of order `eps^4`.
pub fn m_epsilon(w: f64, eps: f64) -> Result<f64> {
    check_strain(w)?;
    Ok(m_raw(w, eps * eps))
}

/// `g(w) = (1+w) log(1+w)`.
pub fn g_log(w: f64) -> Result<f64> {
    check_strain(w)?;
    Ok(g_raw(w))
}

/// `g'(w) = 1 + log(1+w)`.
pub fn g_log_prime(w: f64) -> Result<f64> {
    check_strain(w)?;
    Ok(1.0 + w.ln_1p())
}

/// `g''(w) = 1/(1+w)`.
pub fn g_log_second(w: f64) -> Result<f64> {
    check_strain(w)?;
    Ok(1.0 / (1.0 + w))
}

/// `v log v` with the continuous extension `0 log 0 = 0`.
pub fn vlogv(v: f64) -> Result<f64> {
    if v.is_nan() || v < 0.0 {
        return Err(CoreError::Domain(format!("v log v needs v >= 0, got {v}")));
    }
    Ok(vlogv_raw(v))
}

/// Power-law force `w + eps^2 w^p`.
pub fn power_force(w: f64, eps: f64, p: u32) -> f64 {
    w + eps * eps * w.powi(p as i32)
}

#[inline]
pub(crate) fn potential_raw(w: f64, e2: f64) -> f64 {
    let a = 2.0 + e2;
    expm1_minus_x(a * w.ln_1p()) / a - x_minus_log1p(w)
}

#[inline]
pub(crate) fn force_raw(w: f64, e2: f64) -> f64 {
    ((1.0 + e2) * w.ln_1p()).exp_m1()
}

#[inline]
pub(crate) fn stiffness_raw(w: f64, e2: f64) -> f64 {
    (1.0 + e2) * (e2 * w.ln_1p()).exp()
}

#[inline]
pub(crate) fn third_raw(w: f64, e2: f64) -> f64 {
    e2 * (1.0 + e2) * ((e2 - 1.0) * w.ln_1p()).exp()
}

#[inline]
pub(crate) fn n_raw(w: f64, e2: f64) -> f64 {
    (1.0 + w) * (e2 * w.ln_1p()).exp_m1()
}

#[inline]
pub(crate) fn m_raw(w: f64, e2: f64) -> f64 {
    (1.0 + w) * expm1_minus_x(e2 * w.ln_1p())
}

#[inline]
pub(crate) fn g_raw(w: f64) -> f64 {
    (1.0 + w) * w.ln_1p()
}

#[inline]
pub(crate) fn vlogv_raw(v: f64) -> f64 {
    if v == 0.0 || v < f64::MIN_POSITIVE {
        0.0
    } else {
        v * v.ln()
    }
}

/// Force evaluation specialised for the lattice time-stepper.
///
/// Strains with `|w| < 0.01` use the binomial series, which is exact to
/// rounding there and avoids two transcendental calls on the flat tails.
#[derive(Debug, Clone)]
pub struct LatticeForce {
    e2: f64,
    series: [f64; 10],
}

impl LatticeForce {
    const SERIES_RADIUS: f64 = 0.01;

    pub fn new(eps: f64) -> Self {
        let e2 = eps * eps;
        let alpha = 1.0 + e2;
        let mut series = [0.0; 10];
        let mut binom = 1.0;
        for (n, c) in series.iter_mut().enumerate().skip(1) {
            binom *= (alpha - (n as f64 - 1.0)) / n as f64;
            *c = binom;
        }
        Self { e2, series }
    }

    pub fn eps2(&self) -> f64 {
        self.e2
    }

    #[inline]
    pub fn force(&self, w: f64) -> f64 {
        if w.abs() < Self::SERIES_RADIUS {
            let mut acc = self.series[9];
            for n in (1..9).rev() {
                acc = acc * w + self.series[n];
            }
            acc * w
        } else {
            force_raw(w, self.e2)
        }
    }

    #[inline]
    pub fn potential(&self, w: f64) -> f64 {
        potential_raw(w, self.e2)
    }

    #[inline]
    pub fn stiffness(&self, w: f64) -> f64 {
        stiffness_raw(w, self.e2)
    }

    #[inline]
    pub fn third(&self, w: f64) -> f64 {
        third_raw(w, self.e2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // Reference values below were computed with 50-digit mpmath arithmetic.

    #[test]
    fn force_matches_high_precision() {
        // (1.5)^1.01 - 1
        let reference = 0.5060943234498847_f64;
        assert!(rel(force(0.5, 0.1).unwrap(), reference) <= 1e-14);
    }

    #[test]
    fn force_small_strain_keeps_relative_accuracy() {
        // (1 + 1e-12)^1.01 - 1
        let reference = 1.010000000000005e-12_f64;
        assert!(rel(force(1e-12, 0.1).unwrap(), reference) <= 1e-14);
    }

    #[test]
    fn potential_matches_high_precision() {
        // ((1.5)^2.01 - 1)/2.01 - 0.5
        let reference = 0.1264385498382224_f64;
        assert!(rel(potential(0.5, 0.1).unwrap(), reference) <= 1e-13);
        // small strain: approximately (1+eps^2) w^2 / 2
        let reference_small = 5.050000016833329e-13_f64;
        assert!(rel(potential(1e-6, 0.1).unwrap(), reference_small) <= 1e-12);
    }

    #[test]
    fn force_below_minus_one_is_domain_error() {
        assert!(matches!(force(-1.0, 0.1), Err(CoreError::Domain(_))));
        assert!(matches!(potential(-1.5, 0.1), Err(CoreError::Domain(_))));
        assert!(g_log(f64::NAN).is_err());
    }

    #[test]
    fn g_values() {
        assert!((g_log(0.0).unwrap()).abs() == 0.0);
        assert!((g_log_prime(0.5).unwrap() - 1.4054651081081644).abs() < 1e-15);
        assert!((g_log_second(1.0).unwrap() - 0.5).abs() < 1e-16);
    }

    #[test]
    fn vlogv_values() {
        assert_eq!(vlogv(0.0).unwrap(), 0.0);
        assert_eq!(vlogv(1.0).unwrap(), 0.0);
        assert!((vlogv(std::f64::consts::E.recip()).unwrap() + std::f64::consts::E.recip()).abs() < 1e-16);
        assert_eq!(vlogv(1e-310).unwrap(), 0.0);
        assert!(vlogv(-1e-3).is_err());
    }

    #[test]
    fn power_force_value() {
        assert!((power_force(2.0, 0.1, 3) - 2.08).abs() < 1e-14);
    }

    #[test]
    fn m_epsilon_limit() {
        let eps = 1e-3;
        for &w in &[0.3, 1.0, 4.0] {
            let limit = (1.0 + w) * (w as f64).ln_1p().powi(2) / 2.0;
            let scaled = m_epsilon(w, eps).unwrap() / eps.powi(4);
            assert!(rel(scaled, limit) < 0.01, "w={w}: {scaled} vs {limit}");
        }
    }

    #[test]
    fn third_derivative_value() {
        // eps^2 (1+eps^2) (1+w)^(eps^2 - 1) at w = 1, eps = 0.1
        let reference = 0.00508512552778643_f64;
        assert!(rel(third_derivative(1.0, 0.1).unwrap(), reference) < 1e-14);
    }

    #[test]
    fn lattice_force_series_branch_agrees() {
        let f = LatticeForce::new(0.1);
        for &w in &[-0.0099, -1e-5, 0.0, 3e-9, 0.004, 0.0099] {
            let exact = force_raw(w, 0.01);
            assert!((f.force(w) - exact).abs() <= 1e-17 + 1e-15 * exact.abs());
        }
    }

    proptest! {
        #[test]
        fn decomposition_identities(w in -0.9f64..20.0, eps in 0.01f64..0.5) {
            let f = force(w, eps).unwrap();
            let n = n_epsilon(w, eps).unwrap();
            let m = m_epsilon(w, eps).unwrap();
            let g = g_log(w).unwrap();
            let scale = 1.0 + w.abs();
            prop_assert!((f - (w + n)).abs() <= 1e-13 * scale);
            prop_assert!((f - (w + eps * eps * g + m)).abs() <= 1e-13 * scale);
        }

        #[test]
        fn potential_nonnegative_and_convex(w in -0.99f64..50.0, eps in 0.01f64..0.5) {
            prop_assert!(potential(w, eps).unwrap() >= 0.0);
            prop_assert!(stiffness(w, eps).unwrap() > 0.0);
        }

        #[test]
        fn force_is_derivative_of_potential(w in -0.5f64..10.0, eps in 0.01f64..0.5) {
            let h = 1e-5 * (1.0 + w.abs());
            let fd = (potential(w + h, eps).unwrap() - potential(w - h, eps).unwrap()) / (2.0 * h);
            prop_assert!((fd - force(w, eps).unwrap()).abs() <= 1e-7 * (1.0 + force(w, eps).unwrap().abs()));
        }
    }
}
