//! Periodic FPU ring in strain/momentum form,
//! `w_n' = p_{n+1} - p_n`, `p_n' = V'(w_n) - V'(w_{n-1})`.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::{l2_norm, SpectralGrid};
use crate::nonlinearities::{potential_raw, LatticeForce};
use crate::params::{Family, ModelParams};
use crate::rng::{seeded, standard_normal};
use crate::wave_solver::TravellingWave;

/// Strain and momentum on a ring of `N` sites at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    pub w: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

impl LatticeState {
    pub fn new(w: Vec<f64>, p: Vec<f64>, t: f64) -> Result<Self> {
        if w.len() != p.len() || w.len() < 2 {
            return Err(CoreError::InvalidData(format!(
                "strain and momentum need equal length >= 2, got {} and {}",
                w.len(),
                p.len()
            )));
        }
        if let Some(x) = w.iter().find(|&&x| !(x > -1.0)) {
            return Err(CoreError::Domain(format!("strain {x} outside (-1, inf)")));
        }
        Ok(Self { w, p, t })
    }

    pub fn zeros(n: usize) -> Self {
        Self { w: vec![0.0; n], p: vec![0.0; n], t: 0.0 }
    }

    pub fn n_sites(&self) -> usize {
        self.w.len()
    }

    pub fn total_strain(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn total_momentum(&self) -> f64 {
        self.p.iter().sum()
    }

    /// `||w - w_ref||_{l^2} + ||p - p_ref||_{l^2}`.
    pub fn distance(&self, w_ref: &[f64], p_ref: &[f64]) -> f64 {
        let dw: Vec<f64> = self.w.iter().zip(w_ref).map(|(a, b)| a - b).collect();
        let dp: Vec<f64> = self.p.iter().zip(p_ref).map(|(a, b)| a - b).collect();
        l2_norm(&dw) + l2_norm(&dp)
    }
}

/// Nearest-neighbour interaction of the ring.
#[derive(Debug, Clone)]
pub enum LatticePotential {
    Hertz(LatticeForce),
    Power { e2: f64, p: i32 },
}

impl LatticePotential {
    pub fn from_params(params: &ModelParams) -> Self {
        match params.family {
            Family::HertzLog => Self::Hertz(LatticeForce::new(params.epsilon)),
            Family::Power { p } => Self::Power { e2: params.eps2(), p: p as i32 },
        }
    }

    #[inline]
    pub fn force(&self, w: f64) -> f64 {
        match self {
            Self::Hertz(f) => f.force(w),
            Self::Power { e2, p } => w + e2 * w.powi(*p),
        }
    }

    #[inline]
    pub fn potential(&self, w: f64) -> f64 {
        match self {
            Self::Hertz(f) => potential_raw(w, f.eps2()),
            Self::Power { e2, p } => 0.5 * w * w + e2 / (*p as f64 + 1.0) * w.powi(p + 1),
        }
    }

    #[inline]
    pub fn stiffness(&self, w: f64) -> f64 {
        match self {
            Self::Hertz(f) => f.stiffness(w),
            Self::Power { e2, p } => 1.0 + e2 * (*p as f64) * w.powi(p - 1),
        }
    }

    #[inline]
    pub fn third(&self, w: f64) -> f64 {
        match self {
            Self::Hertz(f) => f.third(w),
            Self::Power { e2, p } => e2 * (*p as f64) * (*p as f64 - 1.0) * w.powi(p - 2),
        }
    }

    /// `V'(r + d) - V'(r) - V''(r) d - V'''(r) d^2 / 2`.
    pub fn cubic_remainder(&self, r: f64, d: f64) -> f64 {
        match self {
            Self::Hertz(f) => {
                let e2 = f.eps2();
                let x = d / (1.0 + r);
                if x.abs() < 0.1 {
                    // Taylor series in d; V^{(k+1)}(r) = V^{(k)}(r) (e2 - k + 2) / (1 + r)
                    let mut term = 0.5 * f.third(r) * d * d;
                    let mut sum = 0.0;
                    for k in 3..60 {
                        term *= (e2 - k as f64 + 2.0) * x / k as f64;
                        sum += term;
                        if term.abs() <= 1e-18 * sum.abs() {
                            break;
                        }
                    }
                    sum
                } else {
                    f.force(r + d) - f.force(r) - f.stiffness(r) * d - 0.5 * f.third(r) * d * d
                }
            }
            Self::Power { e2, p } => {
                // e2 [ (r + d)^p - r^p - p r^{p-1} d - p (p-1)/2 r^{p-2} d^2 ]
                let p = *p;
                let mut sum = 0.0;
                let mut binom = 1.0;
                for k in 1..=p {
                    binom *= (p - k + 1) as f64 / k as f64;
                    if k >= 3 {
                        sum += binom * r.powi(p - k) * d.powi(k);
                    }
                }
                e2 * sum
            }
        }
    }
}

/// Time integrators for the ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Drift-kick-drift splitting, second order.
    Strang,
    /// Classical Runge-Kutta, used as a cross-check.
    Rk4,
    /// Triple-jump composition of Strang steps, fourth order.
    Yoshida4,
    /// Seven-stage composition of Strang steps, sixth order.
    Yoshida6,
}

const YOSHIDA6_W1: f64 = -1.177_679_984_178_87;
const YOSHIDA6_W2: f64 = 0.235_573_213_359_357;
const YOSHIDA6_W3: f64 = 0.784_513_610_477_560;

impl Integrator {
    /// Strang sub-step weights of the composition.
    fn weights(self) -> Vec<f64> {
        match self {
            Self::Strang | Self::Rk4 => vec![1.0],
            Self::Yoshida4 => {
                let c = 2f64.powf(1.0 / 3.0);
                let w1 = 1.0 / (2.0 - c);
                vec![w1, -c * w1, w1]
            }
            Self::Yoshida6 => {
                let w0 = 1.0 - 2.0 * (YOSHIDA6_W1 + YOSHIDA6_W2 + YOSHIDA6_W3);
                vec![YOSHIDA6_W3, YOSHIDA6_W2, YOSHIDA6_W1, w0, YOSHIDA6_W1, YOSHIDA6_W2, YOSHIDA6_W3]
            }
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Self::Strang => 2,
            Self::Rk4 | Self::Yoshida4 => 4,
            Self::Yoshida6 => 6,
        }
    }
}

/// Ring dynamics for fixed model parameters.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub params: ModelParams,
    pub potential: LatticePotential,
    /// Integration aborts once any strain drops to or below this value.
    pub guard: f64,
}

pub const DEFAULT_GUARD: f64 = -0.95;

impl Lattice {
    pub fn new(params: ModelParams) -> Self {
        Self { params, potential: LatticePotential::from_params(&params), guard: DEFAULT_GUARD }
    }

    pub fn with_guard(mut self, guard: f64) -> Result<Self> {
        if !(guard > -1.0 && guard < 0.0) {
            return Err(CoreError::InvalidParameter(format!("guard must lie in (-1, 0), got {guard}")));
        }
        self.guard = guard;
        Ok(self)
    }

    fn check_guard(&self, w: &[f64], t: f64) -> Result<()> {
        if let Some((n, x)) = w.iter().enumerate().find(|(_, &x)| !(x > self.guard)) {
            return Err(CoreError::Guard(format!("strain {x:.6e} at site {n} crossed {} at t = {t}", self.guard)));
        }
        Ok(())
    }

    pub fn rhs(&self, state: &LatticeState) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_guard(&state.w, state.t)?;
        Ok(self.rhs_unchecked(&state.w, &state.p))
    }

    fn rhs_unchecked(&self, w: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = w.len();
        let f: Vec<f64> = w.iter().map(|&x| self.potential.force(x)).collect();
        let mut dw = vec![0.0; n];
        let mut dp = vec![0.0; n];
        for j in 0..n {
            dw[j] = p[(j + 1) % n] - p[j];
            dp[j] = f[j] - f[(j + n - 1) % n];
        }
        (dw, dp)
    }

    fn drift(w: &mut [f64], p: &[f64], h: f64) {
        let n = w.len();
        for j in 0..n - 1 {
            w[j] += h * (p[j + 1] - p[j]);
        }
        w[n - 1] += h * (p[0] - p[n - 1]);
    }

    fn kick(&self, w: &[f64], p: &mut [f64], h: f64, force: &mut [f64]) {
        let n = w.len();
        for (f, &x) in force.iter_mut().zip(w) {
            *f = self.potential.force(x);
        }
        p[0] += h * (force[0] - force[n - 1]);
        for j in 1..n {
            p[j] += h * (force[j] - force[j - 1]);
        }
    }

    /// One step of the chosen integrator. On a guard violation the state is
    /// left as it was at the moment of the violation.
    pub fn step(&self, state: &mut LatticeState, dt: f64, integrator: Integrator) -> Result<()> {
        match integrator {
            Integrator::Rk4 => self.step_rk4(state, dt),
            _ => self.step_composed(state, dt, &integrator.weights()),
        }
    }

    pub fn step_strang(&self, state: &mut LatticeState, dt: f64) -> Result<()> {
        self.step_composed(state, dt, &[1.0])
    }

    fn step_composed(&self, state: &mut LatticeState, dt: f64, weights: &[f64]) -> Result<()> {
        let t0 = state.t;
        let mut force = vec![0.0; state.n_sites()];
        let mut pending = 0.5 * weights[0];
        for (i, &c) in weights.iter().enumerate() {
            Self::drift(&mut state.w, &state.p, pending * dt);
            self.check_guard(&state.w, t0)?;
            self.kick(&state.w, &mut state.p, c * dt, &mut force);
            pending = 0.5 * c + weights.get(i + 1).map_or(0.0, |n| 0.5 * n);
        }
        Self::drift(&mut state.w, &state.p, pending * dt);
        self.check_guard(&state.w, t0 + dt)?;
        state.t = t0 + dt;
        Ok(())
    }

    pub fn step_rk4(&self, state: &mut LatticeState, dt: f64) -> Result<()> {
        let n = state.n_sites();
        let stage = |w: &[f64], p: &[f64], k: &(Vec<f64>, Vec<f64>), h: f64| -> (Vec<f64>, Vec<f64>) {
            ((0..n).map(|j| w[j] + h * k.0[j]).collect(), (0..n).map(|j| p[j] + h * k.1[j]).collect())
        };
        let k1 = self.rhs(state)?;
        let s2 = stage(&state.w, &state.p, &k1, 0.5 * dt);
        self.check_guard(&s2.0, state.t)?;
        let k2 = self.rhs_unchecked(&s2.0, &s2.1);
        let s3 = stage(&state.w, &state.p, &k2, 0.5 * dt);
        self.check_guard(&s3.0, state.t)?;
        let k3 = self.rhs_unchecked(&s3.0, &s3.1);
        let s4 = stage(&state.w, &state.p, &k3, dt);
        self.check_guard(&s4.0, state.t)?;
        let k4 = self.rhs_unchecked(&s4.0, &s4.1);
        for j in 0..n {
            state.w[j] += dt / 6.0 * (k1.0[j] + 2.0 * k2.0[j] + 2.0 * k3.0[j] + k4.0[j]);
            state.p[j] += dt / 6.0 * (k1.1[j] + 2.0 * k2.1[j] + 2.0 * k3.1[j] + k4.1[j]);
        }
        state.t += dt;
        self.check_guard(&state.w, state.t)
    }

    /// Advance by `n_steps` steps of size `dt`, calling `observer` every
    /// `every` steps (and at the start). Times are `t0 + k dt` exactly.
    pub fn evolve<F>(
        &self,
        state: &mut LatticeState,
        dt: f64,
        n_steps: usize,
        every: usize,
        integrator: Integrator,
        mut observer: F,
    ) -> Result<()>
    where
        F: FnMut(&LatticeState) -> Result<()>,
    {
        if !(dt.is_finite() && dt != 0.0) || every == 0 {
            return Err(CoreError::InvalidParameter(format!("need finite nonzero dt and every >= 1, got {dt}, {every}")));
        }
        let t0 = state.t;
        observer(state)?;
        for k in 1..=n_steps {
            self.step(state, dt, integrator)?;
            state.t = t0 + k as f64 * dt;
            if k % every == 0 {
                observer(state)?;
            }
        }
        Ok(())
    }

    /// `H = sum p^2 / 2 + sum V(w)`.
    pub fn energy(&self, state: &LatticeState) -> f64 {
        let kinetic: f64 = state.p.iter().map(|x| 0.5 * x * x).sum();
        let pot: f64 = state.w.iter().map(|&x| self.potential.potential(x)).sum();
        kinetic + pot
    }

    /// Expansion of `H` about a reference solution `(r, q)`:
    /// `H_0 = H(r, q)`, `H_1` linear, `H_2` quadratic in `(W, P) = (w - r, p - q)`.
    pub fn energy_split(&self, state: &LatticeState, r: &[f64], q: &[f64]) -> EnergySplit {
        let mut h0 = 0.0;
        let mut h1 = 0.0;
        let mut h2 = 0.0;
        let mut norm_w = 0.0;
        let mut norm_p = 0.0;
        for j in 0..state.n_sites() {
            let dw = state.w[j] - r[j];
            let dp = state.p[j] - q[j];
            h0 += 0.5 * q[j] * q[j] + self.potential.potential(r[j]);
            h1 += q[j] * dp + self.potential.force(r[j]) * dw;
            h2 += 0.5 * dp * dp + 0.5 * self.potential.stiffness(r[j]) * dw * dw;
            norm_w += dw * dw;
            norm_p += dp * dp;
        }
        let hr = self.energy(state) - h0 - h1 - h2;
        EnergySplit { h0, h1, h2, hr, norm_w: norm_w.sqrt(), norm_p: norm_p.sqrt() }
    }

    /// Split of `dH_1/dt` for a perturbation of a travelling wave:
    /// `dH_1/dt = c sum w'_s [V'(r + W) - V'(r) - V''(r) W]`, whose quadratic
    /// part is `(c/2) sum w'_s V'''(r) W^2` and the rest is cubic in `W`.
    pub fn h1_balance(&self, state: &LatticeState, r: &[f64], r_slope: &[f64]) -> H1Balance {
        let c = self.params.speed();
        let mut quadratic = 0.0;
        let mut remainder = 0.0;
        for j in 0..state.n_sites() {
            let d = state.w[j] - r[j];
            quadratic += 0.5 * c * r_slope[j] * self.potential.third(r[j]) * d * d;
            remainder += c * r_slope[j] * self.potential.cubic_remainder(r[j], d);
        }
        H1Balance { rate: quadratic + remainder, quadratic, remainder }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergySplit {
    pub h0: f64,
    pub h1: f64,
    pub h2: f64,
    pub hr: f64,
    pub norm_w: f64,
    pub norm_p: f64,
}

impl EnergySplit {
    /// Convexity margin `H_2 - (||P||^2 + ||W||^2)/2`.
    pub fn convexity_margin(&self) -> f64 {
        self.h2 - 0.5 * (self.norm_p * self.norm_p + self.norm_w * self.norm_w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct H1Balance {
    pub rate: f64,
    pub quadratic: f64,
    pub remainder: f64,
}

/// Physical displacement differences `u_n = -v0 (1 + w_n)` and the factor
/// `v0^{eps^2/2}` relating the rescaled and physical times.
pub fn to_physical(state: &LatticeState, params: &ModelParams) -> (Vec<f64>, f64) {
    let u = state.w.iter().map(|w| -params.v0 * (1.0 + w)).collect();
    (u, params.v0.powf(0.5 * params.eps2()))
}

pub fn from_physical(u: &[f64], params: &ModelParams) -> Vec<f64> {
    u.iter().map(|x| -x / params.v0 - 1.0).collect()
}

/// Default ring size: at least 4096 sites and `40 / (eps kappa)`, rounded up to a power of two.
pub fn default_ring_size(params: &ModelParams) -> usize {
    let need = (40.0 / (params.epsilon * params.kappa())).ceil() as usize;
    need.max(4096).next_power_of_two()
}

/// A band-limited profile laid over a ring: site `j` sits at grid node
/// `j * oversample`, i.e. at position `scale * (j - N/2)`.
#[derive(Debug, Clone)]
pub struct RingProfile {
    pub grid: SpectralGrid,
    pub values: Vec<f64>,
    pub n_sites: usize,
    pub oversample: usize,
    pub scale: f64,
}

impl RingProfile {
    /// Transfer a localized profile onto the ring grid (zero outside its domain).
    pub fn from_profile(
        source_grid: &SpectralGrid,
        source: &[f64],
        n_sites: usize,
        oversample: usize,
        scale: f64,
    ) -> Result<Self> {
        let grid = SpectralGrid::new(n_sites * oversample, 0.5 * scale * n_sites as f64)?;
        let values = source_grid.evaluate_localized(source, &grid.nodes());
        Ok(Self { grid, values, n_sites, oversample, scale })
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        Self { grid: self.grid.clone(), values, n_sites: self.n_sites, oversample: self.oversample, scale: self.scale }
    }

    /// Site values of `f(scale (j - N/2) + a)`.
    pub fn sample(&self, a: f64) -> Vec<f64> {
        let shifted = if a == 0.0 { self.values.clone() } else { self.grid.shift(&self.values, a) };
        shifted.iter().step_by(self.oversample).copied().collect()
    }
}

/// Exact travelling solution `(w_s(n - c t), p_s(n - c t))` on a ring.
#[derive(Debug, Clone)]
pub struct TravellingReference {
    pub strain: RingProfile,
    pub momentum: RingProfile,
    pub slope: RingProfile,
    pub speed: f64,
}

impl TravellingReference {
    pub fn new(wave: &TravellingWave, n_sites: usize, oversample: usize) -> Result<Self> {
        let g = &wave.strain.grid;
        let strain = RingProfile::from_profile(g, &wave.strain.values, n_sites, oversample, 1.0)?;
        let momentum = RingProfile::from_profile(g, &wave.momentum.values, n_sites, oversample, 1.0)?;
        let slope = strain.with_values(strain.grid.derivative(&strain.values, 1));
        Ok(Self { strain, momentum, slope, speed: wave.params.speed() })
    }

    /// `(w, p)` at time `t`.
    pub fn at(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let a = -self.speed * t;
        (self.strain.sample(a), self.momentum.sample(a))
    }

    /// `w_s'(n - c t)`.
    pub fn slope_at(&self, t: f64) -> Vec<f64> {
        self.slope.sample(-self.speed * t)
    }

    pub fn state_at(&self, t: f64) -> LatticeState {
        let (w, p) = self.at(t);
        LatticeState { w, p, t }
    }
}

/// Perturbation classes used for stability runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    /// Independent standard normals on every site of `w` and `p`.
    Gaussian,
    /// A single strain kick at the wave centre.
    SingleSite,
    /// A translate of the travelling wave.
    PhaseShift,
}

/// Initial state `reference + perturbation` with
/// `||w - w_s||_{l^2} + ||p - p_s||_{l^2} = delta`.
pub fn perturbed_state(
    reference: &TravellingReference,
    kind: Perturbation,
    delta: f64,
    seed: u64,
) -> Result<LatticeState> {
    if !(delta >= 0.0) {
        return Err(CoreError::InvalidParameter(format!("delta must be nonnegative, got {delta}")));
    }
    let (w0, p0) = reference.at(0.0);
    let n = w0.len();
    if delta == 0.0 {
        return LatticeState::new(w0, p0, 0.0);
    }
    match kind {
        Perturbation::Gaussian => {
            let mut rng = seeded(seed, 0);
            let dw: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
            let dp: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
            let s = delta / (l2_norm(&dw) + l2_norm(&dp));
            let w = w0.iter().zip(&dw).map(|(a, b)| a + s * b).collect();
            let p = p0.iter().zip(&dp).map(|(a, b)| a + s * b).collect();
            LatticeState::new(w, p, 0.0)
        }
        Perturbation::SingleSite => {
            let mut w = w0;
            w[n / 2] += delta;
            LatticeState::new(w, p0, 0.0)
        }
        Perturbation::PhaseShift => {
            // distance(a) is increasing near 0; bisect for the shift that meets delta
            let dist = |a: f64| {
                let w = reference.strain.sample(a);
                let p = reference.momentum.sample(a);
                LatticeState { w, p, t: 0.0 }.distance(&w0, &p0)
            };
            let mut hi = 1e-3;
            while dist(hi) < delta {
                hi *= 2.0;
                if hi > n as f64 {
                    return Err(CoreError::NoBracket(format!("no translate reaches distance {delta}")));
                }
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if dist(mid) < delta {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            let a = 0.5 * (lo + hi);
            LatticeState::new(reference.strain.sample(a), reference.momentum.sample(a), 0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize) -> (Lattice, LatticeState) {
        let params = ModelParams::new(2.0, 0.1).unwrap();
        let lat = Lattice::new(params);
        let w: Vec<f64> = (0..n).map(|j| 0.3 * (-(((j as f64) - n as f64 / 2.0) / 5.0).powi(2)).exp()).collect();
        let p: Vec<f64> = (0..n).map(|j| 0.1 * (2.0 * std::f64::consts::PI * j as f64 / n as f64).sin()).collect();
        (lat, LatticeState::new(w, p, 0.0).unwrap())
    }

    #[test]
    fn trivial_states_have_zero_rhs() {
        let (lat, _) = ring(64);
        let (dw, dp) = lat.rhs(&LatticeState::zeros(64)).unwrap();
        assert!(dw.iter().chain(&dp).all(|&x| x == 0.0));
        let s = LatticeState::new(vec![0.4; 64], vec![-0.2; 64], 0.0).unwrap();
        let (dw, dp) = lat.rhs(&s).unwrap();
        assert!(dw.iter().chain(&dp).all(|&x| x == 0.0));
    }

    #[test]
    fn energy_of_unit_momentum_is_half() {
        let (lat, _) = ring(16);
        let mut s = LatticeState::zeros(16);
        s.p[0] = 1.0;
        assert_eq!(lat.energy(&s), 0.5);
    }

    #[test]
    fn strang_is_time_reversible_and_conserves_sums() {
        let (lat, s0) = ring(256);
        let mut s = s0.clone();
        for _ in 0..100 {
            lat.step_strang(&mut s, 0.05).unwrap();
        }
        assert!((s.total_strain() - s0.total_strain()).abs() <= 1e-12 * 256.0);
        assert!((s.total_momentum() - s0.total_momentum()).abs() <= 1e-12 * 256.0);
        for _ in 0..100 {
            lat.step_strang(&mut s, -0.05).unwrap();
        }
        for j in 0..256 {
            assert!((s.w[j] - s0.w[j]).abs() < 1e-12 && (s.p[j] - s0.p[j]).abs() < 1e-12);
        }
    }

    fn run(lat: &Lattice, s0: &LatticeState, dt: f64, t: f64, integ: Integrator) -> LatticeState {
        let mut s = s0.clone();
        let n = (t / dt).round() as usize;
        for _ in 0..n {
            lat.step(&mut s, dt, integ).unwrap();
        }
        s
    }

    fn gap(a: &LatticeState, b: &LatticeState) -> f64 {
        a.distance(&b.w, &b.p)
    }

    #[test]
    fn integrators_reach_their_orders() {
        let (lat, s0) = ring(128);
        let reference = run(&lat, &s0, 1e-3, 4.0, Integrator::Yoshida6);
        for (integ, dt) in [
            (Integrator::Strang, 0.1),
            (Integrator::Rk4, 0.1),
            (Integrator::Yoshida4, 0.2),
            (Integrator::Yoshida6, 0.4),
        ] {
            let e1 = gap(&run(&lat, &s0, dt, 4.0, integ), &reference);
            let e2 = gap(&run(&lat, &s0, dt / 2.0, 4.0, integ), &reference);
            let expected = 2f64.powi(integ.order() as i32);
            let ratio = e1 / e2;
            assert!((ratio / expected - 1.0).abs() < 0.15, "{integ:?}: ratio {ratio}, expected {expected}");
        }
    }

    #[test]
    fn guard_stops_integration() {
        let params = ModelParams::new(2.0, 0.1).unwrap();
        let lat = Lattice::new(params);
        let mut w = vec![0.0; 16];
        w[3] = -0.96;
        let mut s = LatticeState::new(w, vec![0.0; 16], 0.0).unwrap();
        assert!(matches!(lat.step_strang(&mut s, 0.01), Err(CoreError::Guard(_))));
    }

    #[test]
    fn cubic_remainder_series_matches_direct_formula() {
        let params = ModelParams::new(2.0, 0.3).unwrap();
        let pot = LatticePotential::from_params(&params);
        let LatticePotential::Hertz(f) = &pot else { panic!() };
        for (r, d) in [(0.5, 0.04), (2.0, -0.1), (0.0, 0.09)] {
            let direct = f.force(r + d) - f.force(r) - f.stiffness(r) * d - 0.5 * f.third(r) * d * d;
            let series = pot.cubic_remainder(r, d);
            assert!((direct - series).abs() < 1e-13, "{r} {d}: {direct} vs {series}");
        }
        let power = LatticePotential::Power { e2: 0.01, p: 3 };
        assert!((power.cubic_remainder(1.0, 0.5) - 0.01 * 0.125).abs() < 1e-16);
    }

    #[test]
    fn physical_round_trip() {
        let params = ModelParams::new(2.0, 0.1).unwrap().with_v0(2.5).unwrap();
        let s = LatticeState::new(vec![0.0, 0.3, -0.2], vec![0.0; 3], 0.0).unwrap();
        let (u, factor) = to_physical(&s, &params);
        assert_eq!(u[0], -2.5);
        assert!((factor - 2.5f64.powf(0.005)).abs() < 1e-15);
        let back = from_physical(&u, &params);
        for (a, b) in back.iter().zip(&s.w) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
