//! Model parameters of the rescaled near-sonic lattice.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Interaction potential of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Family {
    /// Precompressed Hertzian contact, `V'(w) = (1 + w)^{1 + eps^2} - 1`.
    HertzLog,
    /// Polynomial potential, `V'(w) = w + eps^2 w^p`.
    Power { p: u32 },
}

/// Scaling parameters: `alpha = 1 + eps^2`, `mu = eps^2 lambda`, `c^2 = 1 + mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub epsilon: f64,
    /// Exponent of the low/high frequency split, `I_p = [-eps^p, eps^p]`.
    pub p_cut: f64,
    /// Precompression level; only enters the map back to physical variables.
    pub v0: f64,
    /// Admissible strain range `[ball_r, ball_big_r]` for solver iterates.
    pub ball_r: f64,
    pub ball_big_r: f64,
    pub family: Family,
}

pub const DEFAULT_P_CUT: f64 = 2.0 / 3.0;

impl ModelParams {
    pub fn new(lambda: f64, epsilon: f64) -> Result<Self> {
        Self::with_cut(lambda, epsilon, DEFAULT_P_CUT)
    }

    pub fn with_cut(lambda: f64, epsilon: f64, p_cut: f64) -> Result<Self> {
        let p = Self { lambda, epsilon, p_cut, v0: 1.0, ball_r: -0.5, ball_big_r: 1e3, family: Family::HertzLog };
        p.validate()?;
        Ok(p)
    }

    pub fn with_ball(mut self, ball_r: f64, ball_big_r: f64) -> Result<Self> {
        self.ball_r = ball_r;
        self.ball_big_r = ball_big_r;
        self.validate()?;
        Ok(self)
    }

    pub fn with_family(mut self, family: Family) -> Result<Self> {
        self.family = family;
        self.validate()?;
        Ok(self)
    }

    pub fn with_v0(mut self, v0: f64) -> Result<Self> {
        self.v0 = v0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::InvalidParameter(msg));
        if !(self.lambda > 1.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must exceed 1, got {}", self.lambda));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.p_cut > 0.625 && self.p_cut < 0.75) {
            return bad(format!("p_cut must lie in (5/8, 3/4), got {}", self.p_cut));
        }
        if !(self.v0 > 0.0) || !self.v0.is_finite() {
            return bad(format!("v0 must be positive, got {}", self.v0));
        }
        if !(self.ball_r > -1.0 && self.ball_r < 0.0) {
            return bad(format!("ball_r must lie in (-1, 0), got {}", self.ball_r));
        }
        if !(self.ball_big_r > 0.0) {
            return bad(format!("ball_R must be positive, got {}", self.ball_big_r));
        }
        if let Family::Power { p } = self.family {
            if p < 2 {
                return bad(format!("power exponent must be at least 2, got {p}"));
            }
        }
        Ok(())
    }

    pub fn eps2(&self) -> f64 {
        self.epsilon * self.epsilon
    }

    /// Hertzian exponent `alpha = 1 + eps^2`.
    pub fn alpha(&self) -> f64 {
        1.0 + self.eps2()
    }

    /// Speed offset `mu = eps^2 lambda`.
    pub fn mu(&self) -> f64 {
        self.eps2() * self.lambda
    }

    /// Wave speed `c = sqrt(1 + mu)`.
    pub fn speed(&self) -> f64 {
        (1.0 + self.mu()).sqrt()
    }

    /// Edge of the low-frequency band on the lattice scale.
    pub fn low_band_edge(&self) -> f64 {
        self.epsilon.powf(self.p_cut)
    }

    /// Tail decay rate of the stationary log-KdV wave on the x-scale.
    pub fn kappa(&self) -> f64 {
        (12.0 * (self.lambda - 1.0)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_quantities() {
        let p = ModelParams::new(2.0, 0.1).unwrap();
        assert!((p.alpha() - 1.01).abs() < 1e-15);
        assert!((p.mu() - 0.02).abs() < 1e-15);
        assert!((p.speed() - 1.02f64.sqrt()).abs() < 1e-15);
        assert!((p.kappa() - 12f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(ModelParams::new(1.0, 0.1).is_err());
        assert!(ModelParams::new(0.5, 0.1).is_err());
        assert!(ModelParams::new(2.0, 0.0).is_err());
        assert!(ModelParams::with_cut(2.0, 0.1, 0.6).is_err());
        assert!(ModelParams::with_cut(2.0, 0.1, 0.75).is_err());
        let p = ModelParams::new(2.0, 0.1).unwrap();
        assert!(p.with_ball(-1.0, 1.0).is_err());
        assert!(p.with_ball(-0.5, 0.0).is_err());
        assert!(p.with_family(Family::Power { p: 1 }).is_err());
        assert!(p.with_v0(0.0).is_err());
        assert!(p.with_family(Family::Power { p: 3 }).is_ok());
    }

    #[test]
    fn family_serializes_with_tag() {
        let s = serde_json::to_string(&Family::Power { p: 3 }).unwrap();
        assert_eq!(s, r#"{"kind":"power","p":3}"#);
        let f: Family = serde_json::from_str(r#"{"kind":"hertz-log"}"#).unwrap();
        assert_eq!(f, Family::HertzLog);
    }
}
