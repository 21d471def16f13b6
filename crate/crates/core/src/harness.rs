//! Experiment runners. Each experiment takes a serde-configurable settings
//! struct and returns an [`ExperimentReport`] holding verdicts, fitted
//! constants and plot-ready curves.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::evolution::{conserved_quantities, Flux, LogKdvSolver, PdeCheckpoint, PdeState};
use crate::grid::{spectral_derivative, sup_norm, Parity, SpectralGrid, WaveProfile};
use crate::justification::{energy_type, lattice_residuals, sampling_constant, KdvReference, SamplingTest};
use crate::lattice::{perturbed_state, Integrator, Lattice, LatticeState, Perturbation, RingProfile, TravellingReference};
use crate::params::ModelParams;
use crate::profiles::{dilate, gaussian_identity_residual, gaussian_profile, solve_stationary, StationaryWave};
use crate::rng::seeded;
use crate::spectra::{spectral_report, truncation_deviation};
use crate::wave_solver::{full_newton_oracle, small_solution_check, solve_travelling_wave, TravellingWave, WaveSolverOptions};

/// Acceptance window of a measured value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    AtMost(f64),
    AtLeast(f64),
    Within(f64, f64),
    Equals(f64),
}

impl Tolerance {
    pub fn admits(self, x: f64) -> bool {
        match self {
            Tolerance::AtMost(b) => x <= b,
            Tolerance::AtLeast(b) => x >= b,
            Tolerance::Within(a, b) => x >= a && x <= b,
            Tolerance::Equals(b) => x == b,
        }
    }

    pub fn describe(self) -> String {
        match self {
            Tolerance::AtMost(b) => format!("<= {b:.3e}"),
            Tolerance::AtLeast(b) => format!(">= {b:.3e}"),
            Tolerance::Within(a, b) => format!("in [{a}, {b}]"),
            Tolerance::Equals(b) => format!("== {b}"),
        }
    }
}

// JSON has no NaN; serde_json writes it as null, read it back as NaN.
fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

fn nan_map_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<String, f64>, D::Error> {
    let raw = BTreeMap::<String, Option<f64>>::deserialize(d)?;
    Ok(raw.into_iter().map(|(k, v)| (k, v.unwrap_or(f64::NAN))).collect())
}

/// One pass/fail check tied to an acceptance criterion. Non-required
/// verdicts are reported but do not decide the criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: u32,
    pub check: String,
    pub pass: bool,
    #[serde(deserialize_with = "nan_from_null")]
    pub measured: f64,
    pub tolerance: Tolerance,
    pub required: bool,
}

/// Tabular data destined for one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Curve {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// CSV text with a header line, ',' separators and '\n' line endings.
    /// Floats use the shortest representation that round-trips.
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub params: serde_json::Value,
    pub verdicts: Vec<Verdict>,
    /// Fitted constants, slopes and sup ratios.
    #[serde(deserialize_with = "nan_map_from_null")]
    pub fitted: BTreeMap<String, f64>,
    #[serde(skip)]
    pub curves: Vec<Curve>,
    /// Named profiles for export with their grid metadata.
    #[serde(skip)]
    pub profiles: Vec<(String, WaveProfile)>,
    /// Named lattice states (final or aborted) for binary export.
    #[serde(skip)]
    pub snapshots: Vec<(String, LatticeState)>,
    pub curve_files: Vec<String>,
    pub seed: u64,
    pub config_hash: String,
    /// Set when a compute error cut the run short.
    pub aborted: Option<String>,
}

impl ExperimentReport {
    fn new<C: Serialize>(name: &str, config: &C, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            params: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            verdicts: Vec::new(),
            fitted: BTreeMap::new(),
            curves: Vec::new(),
            profiles: Vec::new(),
            snapshots: Vec::new(),
            curve_files: Vec::new(),
            seed,
            config_hash: String::new(),
            aborted: None,
        }
    }

    /// Report for an experiment that failed before producing results.
    pub fn compute_error(name: &str, criterion: u32, err: &CoreError) -> Self {
        let mut rep = Self::new(name, &serde_json::Value::Null, 0);
        rep.abort(criterion, "experiment", err);
        rep
    }

    fn check(&mut self, criterion: u32, check: impl Into<String>, measured: f64, tolerance: Tolerance) -> bool {
        let pass = tolerance.admits(measured);
        self.verdicts.push(Verdict { criterion, check: check.into(), pass, measured, tolerance, required: true });
        pass
    }

    fn note(&mut self, criterion: u32, check: impl Into<String>, measured: f64, tolerance: Tolerance) {
        let pass = tolerance.admits(measured);
        self.verdicts.push(Verdict { criterion, check: check.into(), pass, measured, tolerance, required: false });
    }

    fn fit(&mut self, key: impl Into<String>, value: f64) {
        self.fitted.insert(key.into(), value);
    }

    fn abort(&mut self, criterion: u32, what: &str, err: &CoreError) {
        self.aborted = Some(format!("{what}: {err}"));
        self.verdicts.push(Verdict {
            criterion,
            check: format!("{what} completed"),
            pass: false,
            measured: f64::NAN,
            tolerance: Tolerance::Equals(1.0),
            required: true,
        });
    }

    /// True when every required verdict passed and the run was not aborted.
    pub fn passed(&self) -> bool {
        self.aborted.is_none() && self.verdicts.iter().filter(|v| v.required).all(|v| v.pass)
    }

    /// Criteria touched by this report, with their pass state.
    pub fn criteria(&self) -> BTreeMap<u32, bool> {
        let mut out = BTreeMap::new();
        for v in &self.verdicts {
            let e = out.entry(v.criterion).or_insert(true);
            if v.required {
                *e &= v.pass;
            }
        }
        if self.aborted.is_some() {
            for e in out.values_mut() {
                *e = false;
            }
        }
        out
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn max_over_min(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

fn stationary(lambda: f64) -> Result<StationaryWave> {
    solve_stationary(lambda, &SpectralGrid::default_x_grid(lambda)?)
}

fn profile_curve(name: String, profiles: &[&WaveProfile], labels: &[&str]) -> Curve {
    let mut header = vec!["position"];
    header.extend_from_slice(labels);
    let mut c = Curve::new(name, &header);
    let grid = &profiles[0].grid;
    for j in 0..grid.n_points() {
        let mut row = vec![grid.node(j)];
        row.extend(profiles.iter().map(|p| p.values[j]));
        c.push(row);
    }
    c
}

fn steps_for(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && t_end >= 0.0) {
        return Err(CoreError::InvalidParameter(format!("need dt > 0 and t_end >= 0, got {dt}, {t_end}")));
    }
    Ok((t_end / dt).round() as usize)
}

fn every_for(spacing: f64, dt: f64) -> usize {
    ((spacing / dt).round() as usize).max(1)
}

// ---------------------------------------------------------------- criterion 1

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussianIdentityConfig {
    /// Selects the default x-grid.
    pub lambda: f64,
    pub tolerance: f64,
}

impl Default for GaussianIdentityConfig {
    fn default() -> Self {
        Self { lambda: 2.0, tolerance: 1e-8 }
    }
}

pub fn gaussian_identity(cfg: &GaussianIdentityConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("gaussian-identity", cfg, 0);
    let grid = SpectralGrid::default_x_grid(cfg.lambda)?;
    let v = gaussian_profile(&grid);
    let res = gaussian_identity_residual(&v)?;
    rep.check(1, "sup |v''/12 + v log v|", res.sup(), Tolerance::AtMost(cfg.tolerance));
    rep.curves.push(profile_curve("gaussian_identity".into(), &[&v, &res], &["value", "residual"]));
    Ok(rep)
}

// ---------------------------------------------------------------- criterion 2

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationaryConfig {
    pub lambdas: Vec<f64>,
    pub residual_tolerance: f64,
    /// Relative tolerance on the fitted tail decay rate.
    pub decay_tolerance: f64,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self { lambdas: vec![1.5, 2.0, 3.0], residual_tolerance: 1e-7, decay_tolerance: 0.02 }
    }
}

pub fn stationary_waves(cfg: &StationaryConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("stationary-waves", cfg, 0);
    let mut summary = Curve::new("stationary_summary", &["lambda", "amplitude", "kappa", "fitted_decay", "residual", "tail_prefactor"]);
    for &lambda in &cfg.lambdas {
        let sw = stationary(lambda)?;
        let rel = (sw.diagnostics.fitted_decay_rate / sw.kappa - 1.0).abs();
        rep.check(2, format!("lambda={lambda}: residual"), sw.residual, Tolerance::AtMost(cfg.residual_tolerance));
        rep.check(2, format!("lambda={lambda}: relative decay-rate error"), rel, Tolerance::AtMost(cfg.decay_tolerance));
        rep.fit(format!("tail_prefactor_lambda{lambda}"), sw.diagnostics.tail_prefactor);
        summary.push(vec![lambda, sw.amplitude, sw.kappa, sw.diagnostics.fitted_decay_rate, sw.residual, sw.diagnostics.tail_prefactor]);
        rep.profiles.push((format!("stationary_lambda{lambda}"), sw.profile));
    }
    rep.curves.insert(0, summary);
    Ok(rep)
}

// ---------------------------------------------------------------- criterion 3

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub lambdas: Vec<f64>,
    pub min_alignment: f64,
    /// Eigenvalues written per operator.
    pub listed: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { lambdas: vec![1.5, 2.0, 3.0], min_alignment: 0.999, listed: 32 }
    }
}

pub fn spectral_structure(cfg: &SpectrumConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("spectral-structure", cfg, 0);
    for &lambda in &cfg.lambdas {
        let sw = stationary(lambda)?;
        let r = spectral_report(&sw.profile, lambda)?;
        rep.check(3, format!("lambda={lambda}: negative eigenvalues of L"), r.l_negative_count as f64, Tolerance::Equals(1.0));
        rep.check(3, format!("lambda={lambda}: zero mode alignment with W'"), r.l_zero_alignment, Tolerance::AtLeast(cfg.min_alignment));
        rep.check(3, format!("lambda={lambda}: eigenvalues of S above 1"), r.s_above_one_count as f64, Tolerance::Equals(1.0));
        rep.check(3, format!("lambda={lambda}: eigenvalues of S at 1"), r.s_near_one_count as f64, Tolerance::Equals(1.0));
        rep.note(3, format!("lambda={lambda}: ground state of L has one sign"), f64::from(u8::from(r.l_ground_state_positive)), Tolerance::Equals(1.0));
        let gap = r.l_eigenvalues.iter().copied().filter(|&e| e > r.zero_tolerance).fold(f64::INFINITY, f64::min);
        rep.fit(format!("l_lowest_lambda{lambda}"), r.l_lowest);
        rep.fit(format!("l_zero_eigenvalue_lambda{lambda}"), r.l_zero_eigenvalue);
        rep.fit(format!("l_gap_lambda{lambda}"), gap);
        rep.fit(format!("s_largest_lambda{lambda}"), r.s_largest);
        let mut c = Curve::new(format!("eigenvalues_lambda{lambda}"), &["index", "l", "s_descending"]);
        let mut s_desc = r.s_eigenvalues.clone();
        s_desc.sort_by(|a, b| b.total_cmp(a));
        for i in 0..cfg.listed.min(r.l_eigenvalues.len()) {
            c.push(vec![i as f64, r.l_eigenvalues[i], s_desc[i]]);
        }
        rep.curves.push(c);
    }
    Ok(rep)
}

// ---------------------------------------------------------------- criterion 4

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationConfig {
    pub lambda: f64,
    pub epsilons: Vec<f64>,
    pub p_cut: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self { lambda: 2.0, epsilons: vec![0.1, 0.2], p_cut: 2.0 / 3.0, trials: 100, seed: 42 }
    }
}

pub fn truncation_bound(cfg: &TruncationConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("truncation-bound", cfg, cfg.seed);
    let sw = stationary(cfg.lambda)?;
    let mut c = Curve::new("truncation", &["epsilon", "cutoff", "max_ratio", "bound"]);
    for (i, &eps) in cfg.epsilons.iter().enumerate() {
        let mut rng = seeded(cfg.seed, i as u64);
        let r = truncation_deviation(&sw.profile, cfg.lambda, eps, cfg.p_cut, cfg.trials, &mut rng)?;
        rep.check(4, format!("epsilon={eps}: max ||(S - S_p)U|| / ||U||"), r.max_ratio, Tolerance::AtMost(r.bound));
        rep.fit(format!("bound_usage_eps{eps}"), r.max_ratio / r.bound);
        c.push(vec![eps, r.cutoff, r.max_ratio, r.bound]);
    }
    rep.curves.push(c);
    Ok(rep)
}

// ---------------------------------------------------------------- criterion 5

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TravellingSweepConfig {
    pub lambda: f64,
    pub epsilons: Vec<f64>,
    pub p_cut: f64,
    pub solver: WaveSolverOptions,
    /// Also solve with full Newton on all modes and compare.
    pub oracle: bool,
    pub oracle_tolerance: f64,
    pub residual_tolerance: f64,
    /// Ceiling on `max/min` of the scaled errors over the sweep.
    pub ratio_spread: f64,
    pub write_profiles: bool,
}

impl Default for TravellingSweepConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            epsilons: vec![0.05, 0.1, 0.15, 0.2],
            p_cut: 2.0 / 3.0,
            solver: WaveSolverOptions::default(),
            oracle: true,
            oracle_tolerance: 1e-8,
            residual_tolerance: 1e-10,
            ratio_spread: 10.0,
            write_profiles: true,
        }
    }
}

/// Sup distances of a travelling wave and its z-derivative from the dilated
/// stationary wave.
pub fn distance_to_stationary(wave: &TravellingWave, w_stat: &WaveProfile) -> (f64, f64) {
    let eps = wave.params.epsilon;
    let z = &wave.strain.grid;
    let app = dilate(w_stat, eps, z);
    let err0 = sup_norm(&wave.strain.values.iter().zip(&app.values).map(|(a, b)| a - b).collect::<Vec<_>>());
    let dw = spectral_derivative(&wave.strain, 1);
    let dapp = dilate(&spectral_derivative(w_stat, 1), eps, z);
    let err1 = sup_norm(&dw.values.iter().zip(&dapp.values).map(|(a, b)| a - eps * b).collect::<Vec<_>>());
    (err0, err1)
}

pub fn travelling_sweep(cfg: &TravellingSweepConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("travelling-sweep", cfg, 0);
    let sw = stationary(cfg.lambda)?;
    let mut c = Curve::new(
        "travelling_sweep",
        &["epsilon", "err0", "err1", "err0_over_eps_1_6", "err1_over_eps_7_6", "residual", "oracle_diff", "outer_iterations"],
    );
    let mut solved: Vec<(f64, f64, f64)> = Vec::new();
    for &eps in &cfg.epsilons {
        let outcome = (|| -> Result<(TravellingWave, f64)> {
            let params = ModelParams::with_cut(cfg.lambda, eps, cfg.p_cut)?;
            let z = SpectralGrid::default_z_grid(cfg.lambda, eps)?;
            let wave = solve_travelling_wave(params, &z, &sw.profile, &cfg.solver)?;
            let oracle_diff = if cfg.oracle {
                let start = dilate(&sw.profile, eps, &z);
                let o = full_newton_oracle(params, &z, &start.values, 1e-12, 40)?;
                sup_norm(&o.strain.values.iter().zip(&wave.strain.values).map(|(a, b)| a - b).collect::<Vec<_>>())
            } else {
                f64::NAN
            };
            Ok((wave, oracle_diff))
        })();
        let (wave, oracle_diff) = match outcome {
            Ok(v) => v,
            Err(e) => {
                rep.verdicts.push(Verdict {
                    criterion: 5,
                    check: format!("epsilon={eps}: solver converged ({e})"),
                    pass: false,
                    measured: f64::NAN,
                    tolerance: Tolerance::Equals(1.0),
                    required: true,
                });
                continue;
            }
        };
        let (err0, err1) = distance_to_stationary(&wave, &sw.profile);
        rep.check(5, format!("epsilon={eps}: fixed-point residual"), wave.residual, Tolerance::AtMost(cfg.residual_tolerance));
        if cfg.oracle {
            rep.check(5, format!("epsilon={eps}: split solver vs full Newton"), oracle_diff, Tolerance::AtMost(cfg.oracle_tolerance));
        }
        let r0 = err0 / eps.powf(1.0 / 6.0);
        let r1 = err1 / eps.powf(7.0 / 6.0);
        c.push(vec![eps, err0, err1, r0, r1, wave.residual, oracle_diff, wave.diagnostics.outer_iterations as f64]);
        solved.push((eps, err0, err1));
        if cfg.write_profiles {
            let app = dilate(&sw.profile, eps, &wave.strain.grid);
            rep.profiles.push((format!("strain_eps{eps}"), wave.strain.clone()));
            rep.profiles.push((format!("momentum_eps{eps}"), wave.momentum.clone()));
            rep.profiles.push((format!("dilated_stationary_eps{eps}"), app));
        }
    }
    solved.sort_by(|a, b| a.0.total_cmp(&b.0));
    if solved.len() >= 2 {
        let eps: Vec<f64> = solved.iter().map(|s| s.0).collect();
        let e0: Vec<f64> = solved.iter().map(|s| s.1).collect();
        let e1: Vec<f64> = solved.iter().map(|s| s.2).collect();
        let increasing = |v: &[f64]| v.windows(2).filter(|w| w[1] <= w[0]).count() as f64;
        rep.check(5, "sup error strictly decreasing as epsilon decreases (violations)", increasing(&e0), Tolerance::Equals(0.0));
        rep.check(5, "derivative error strictly decreasing as epsilon decreases (violations)", increasing(&e1), Tolerance::Equals(0.0));
        let r0: Vec<f64> = e0.iter().zip(&eps).map(|(e, x)| e / x.powf(1.0 / 6.0)).collect();
        let r1: Vec<f64> = e1.iter().zip(&eps).map(|(e, x)| e / x.powf(7.0 / 6.0)).collect();
        rep.check(5, "spread max/min of err/eps^(1/6)", max_over_min(&r0), Tolerance::AtMost(cfg.ratio_spread));
        rep.check(5, "spread max/min of err'/eps^(7/6)", max_over_min(&r1), Tolerance::AtMost(cfg.ratio_spread));
        rep.fit("error_slope", log_log_slope(&eps, &e0));
        rep.fit("derivative_error_slope", log_log_slope(&eps, &e1));
        rep.fit("max_err_over_eps_1_6", r0.iter().copied().fold(0.0, f64::max));
        rep.fit("max_derr_over_eps_7_6", r1.iter().copied().fold(0.0, f64::max));
    }
    rep.curves.insert(0, c);
    Ok(rep)
}

// ---------------------------------------------------------------- criterion 6

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmallSolutionConfig {
    pub lambda: f64,
    pub epsilon: f64,
    pub radius: f64,
    pub trials: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for SmallSolutionConfig {
    fn default() -> Self {
        Self { lambda: 3.0, epsilon: 0.2, radius: 0.5, trials: 20, tolerance: 1e-12, max_iterations: 500, seed: 42 }
    }
}

pub fn small_solutions(cfg: &SmallSolutionConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("small-solutions", cfg, cfg.seed);
    let params = ModelParams::new(cfg.lambda, cfg.epsilon)?;
    let z = SpectralGrid::default_z_grid(cfg.lambda, cfg.epsilon)?;
    let r = small_solution_check(params, &z, cfg.radius, cfg.trials, cfg.seed, cfg.tolerance, cfg.max_iterations)?;
    let converged = r.trials.iter().filter(|t| t.converged).count();
    rep.check(6, "trials contracted to zero", converged as f64, Tolerance::Equals(cfg.trials as f64));
    let worst = r.trials.iter().map(|t| t.final_sup).fold(0.0, f64::max);
    rep.check(6, "largest final sup norm", worst, Tolerance::AtMost(cfg.tolerance));
    let most = r.trials.iter().map(|t| t.iterations).max().unwrap_or(0);
    rep.check(6, "most iterations used", most as f64, Tolerance::AtMost(cfg.max_iterations as f64));
    let lip = r.trials.iter().map(|t| t.lipschitz_estimate).fold(0.0, f64::max);
    rep.note(6, "observed contraction factor below the Lipschitz bound", lip, Tolerance::AtMost(r.lipschitz_bound));
    rep.fit("lipschitz_bound", r.lipschitz_bound);
    rep.fit("lipschitz_observed", lip);
    let mut c = Curve::new("small_solutions", &["trial", "initial_size", "iterations", "final_sup", "lipschitz_estimate"]);
    for (i, t) in r.trials.iter().enumerate() {
        c.push(vec![i as f64, t.initial_size, t.iterations as f64, t.final_sup, t.lipschitz_estimate]);
    }
    rep.curves.push(c);
    Ok(rep)
}

// ------------------------------------------------------------ criteria 7 to 9

/// Lattice run settings shared by the energy and stability experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeRunConfig {
    pub lambda: f64,
    pub epsilon: f64,
    pub p_cut: f64,
    /// Ring size; 0 selects the default for the parameters.
    pub n_sites: usize,
    /// Oversampling of the ring grid used to shift reference profiles.
    pub oversample: usize,
    pub dt: f64,
    /// Slow-time horizon; the lattice runs to `tau / eps^3`.
    pub tau: f64,
    /// Time between recorded checkpoints.
    pub checkpoint_spacing: f64,
    pub integrator: Integrator,
    pub solver: WaveSolverOptions,
}

impl Default for LatticeRunConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            epsilon: 0.1,
            p_cut: 2.0 / 3.0,
            n_sites: 4096,
            oversample: 2,
            dt: 0.05,
            tau: 1.0,
            checkpoint_spacing: 1.0,
            integrator: Integrator::Yoshida6,
            solver: WaveSolverOptions::default(),
        }
    }
}

impl LatticeRunConfig {
    fn params(&self) -> Result<ModelParams> {
        ModelParams::with_cut(self.lambda, self.epsilon, self.p_cut)
    }

    fn ring_size(&self, params: &ModelParams) -> usize {
        if self.n_sites == 0 {
            crate::lattice::default_ring_size(params)
        } else {
            self.n_sites
        }
    }

    fn t_end(&self) -> f64 {
        self.tau / self.epsilon.powi(3)
    }

    fn reference(&self) -> Result<(Lattice, TravellingReference)> {
        let params = self.params()?;
        let sw = stationary(self.lambda)?;
        let z = SpectralGrid::default_z_grid(self.lambda, self.epsilon)?;
        let wave = solve_travelling_wave(params, &z, &sw.profile, &self.solver)?;
        let reference = TravellingReference::new(&wave, self.ring_size(&params), self.oversample)?;
        Ok((Lattice::new(params), reference))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConservationConfig {
    pub run: LatticeRunConfig,
    pub delta: f64,
    pub seed: u64,
    pub energy_tolerance: f64,
    /// Per-site tolerance on the drift of the conserved sums.
    pub sum_tolerance: f64,
}

impl Default for EnergyConservationConfig {
    fn default() -> Self {
        Self {
            run: LatticeRunConfig { integrator: Integrator::Strang, ..LatticeRunConfig::default() },
            delta: 1e-3,
            seed: 42,
            energy_tolerance: 1e-6,
            sum_tolerance: 1e-12,
        }
    }
}

pub fn energy_conservation(cfg: &EnergyConservationConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("energy-conservation", cfg, cfg.seed);
    let (lattice, reference) = cfg.run.reference()?;
    let mut state = perturbed_state(&reference, Perturbation::Gaussian, cfg.delta, cfg.seed)?;
    let n = state.n_sites() as f64;
    let (h0, sw0, sp0) = (lattice.energy(&state), state.total_strain(), state.total_momentum());
    let mut c = Curve::new("energy_trace", &["t", "energy", "relative_drift", "sum_w_drift", "sum_p_drift"]);
    let (mut de, mut dw, mut dp) = (0.0f64, 0.0f64, 0.0f64);
    let steps = steps_for(cfg.run.t_end(), cfg.run.dt)?;
    let every = every_for(cfg.run.checkpoint_spacing, cfg.run.dt);
    let run = lattice.evolve(&mut state, cfg.run.dt, steps, every, cfg.run.integrator, |s| {
        let h = lattice.energy(s);
        let rel = (h - h0).abs() / h0.abs();
        let (a, b) = ((s.total_strain() - sw0).abs(), (s.total_momentum() - sp0).abs());
        de = de.max(rel);
        dw = dw.max(a);
        dp = dp.max(b);
        c.push(vec![s.t, h, rel, a, b]);
        Ok(())
    });
    rep.curves.push(c);
    rep.snapshots.push(("energy_final".into(), state));
    if let Err(e) = run {
        rep.abort(7, "lattice run", &e);
        return Ok(rep);
    }
    rep.check(7, "max |H(t) - H(0)| / H(0)", de, Tolerance::AtMost(cfg.energy_tolerance));
    rep.check(7, "max |sum w(t) - sum w(0)|", dw, Tolerance::AtMost(cfg.sum_tolerance * n));
    rep.check(7, "max |sum p(t) - sum p(0)|", dp, Tolerance::AtMost(cfg.sum_tolerance * n));
    rep.fit("energy", h0);
    Ok(rep)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyDiagnosticsConfig {
    pub run: LatticeRunConfig,
    pub delta: f64,
    pub seed: u64,
    /// Tolerance on the expansion terms of the unperturbed wave.
    pub exact_tolerance: f64,
    /// Relative tolerance on the amplitude-halving ratios 4 and 8.
    pub scaling_tolerance: f64,
    /// Checkpoint spacing fine enough for differencing `H1`.
    pub fine_spacing: f64,
}

impl Default for EnergyDiagnosticsConfig {
    fn default() -> Self {
        Self {
            run: LatticeRunConfig::default(),
            delta: 1e-3,
            seed: 42,
            exact_tolerance: 1e-8,
            scaling_tolerance: 0.2,
            fine_spacing: 0.1,
        }
    }
}

struct DiagnosticTrace {
    min_margin: f64,
    max_quadratic: f64,
    max_remainder: f64,
    quadratic0: f64,
    remainder0: f64,
    /// Largest `|finite-difference dH1/dt - rate|` relative to the largest `|rate|`.
    /// Only informative at amplitudes where the rate exceeds the integrator noise.
    fd_mismatch: f64,
}

pub fn energy_diagnostics(cfg: &EnergyDiagnosticsConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("energy-diagnostics", cfg, cfg.seed);
    let (lattice, reference) = cfg.run.reference()?;
    let steps = steps_for(cfg.run.t_end(), cfg.run.dt)?;

    // unperturbed wave: every expansion term beyond H0 vanishes
    let mut state = reference.state_at(0.0);
    let mut c = Curve::new("split_unperturbed", &["t", "h0", "h1", "h2", "hr"]);
    let mut h0_ref = f64::NAN;
    let (mut h0_drift, mut h1m, mut h2m, mut hrm) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    // H1 of the unperturbed run holds the transport error of the integrator,
    // which is subtracted before differencing the perturbed H1
    let mut h1_base = Vec::new();
    let fine = every_for(cfg.fine_spacing, cfg.run.dt);
    let run = lattice.evolve(&mut state, cfg.run.dt, steps, fine, cfg.run.integrator, |s| {
        let (r, q) = reference.at(s.t);
        let sp = lattice.energy_split(s, &r, &q);
        if h0_ref.is_nan() {
            h0_ref = sp.h0;
        }
        h0_drift = h0_drift.max((sp.h0 - h0_ref).abs() / h0_ref.abs());
        h1m = h1m.max(sp.h1.abs());
        h2m = h2m.max(sp.h2.abs());
        hrm = hrm.max(sp.hr.abs());
        h1_base.push(sp.h1);
        c.push(vec![s.t, sp.h0, sp.h1, sp.h2, sp.hr]);
        Ok(())
    });
    rep.curves.push(c);
    if let Err(e) = run {
        rep.abort(8, "unperturbed run", &e);
        return Ok(rep);
    }
    rep.check(8, "unperturbed: max |H1|", h1m, Tolerance::AtMost(cfg.exact_tolerance));
    rep.check(8, "unperturbed: max |H2|", h2m, Tolerance::AtMost(cfg.exact_tolerance));
    rep.check(8, "unperturbed: max |HR|", hrm, Tolerance::AtMost(cfg.exact_tolerance));
    rep.check(8, "unperturbed: relative drift of H0", h0_drift, Tolerance::AtMost(cfg.exact_tolerance));

    let mut traces = Vec::new();
    for (label, delta) in [("delta", cfg.delta), ("half_delta", 0.5 * cfg.delta)] {
        let mut state = perturbed_state(&reference, Perturbation::Gaussian, delta, cfg.seed)?;
        let mut c = Curve::new(format!("trajectory_{label}"), &["t", "norm_w", "norm_p", "energy", "h0", "h1", "h2", "hr", "err_l2"]);
        let mut bal = Curve::new(format!("h1_balance_{label}"), &["t", "margin", "rate", "quadratic", "remainder"]);
        let mut tr = DiagnosticTrace { min_margin: f64::INFINITY, max_quadratic: 0.0, max_remainder: 0.0, quadratic0: 0.0, remainder0: 0.0, fd_mismatch: 0.0 };
        let run = lattice.evolve(&mut state, cfg.run.dt, steps, fine, cfg.run.integrator, |s| {
            let (r, q) = reference.at(s.t);
            let slope = reference.slope_at(s.t);
            let sp = lattice.energy_split(s, &r, &q);
            let b = lattice.h1_balance(s, &r, &slope);
            if s.t == 0.0 {
                tr.quadratic0 = b.quadratic;
                tr.remainder0 = b.remainder;
            }
            tr.min_margin = tr.min_margin.min(sp.convexity_margin());
            tr.max_quadratic = tr.max_quadratic.max(b.quadratic.abs());
            tr.max_remainder = tr.max_remainder.max(b.remainder.abs());
            c.push(vec![s.t, sp.norm_w, sp.norm_p, lattice.energy(s), sp.h0, sp.h1, sp.h2, sp.hr, sp.norm_w + sp.norm_p]);
            bal.push(vec![s.t, sp.convexity_margin(), b.rate, b.quadratic, b.remainder]);
            Ok(())
        });
        if let Err(e) = run {
            rep.curves.push(c);
            rep.curves.push(bal);
            rep.snapshots.push((format!("aborted_{label}"), state));
            rep.abort(8, &format!("perturbed run ({label})"), &e);
            return Ok(rep);
        }
        let (rows, rates) = (&c.rows, &bal.rows);
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 1..rows.len().saturating_sub(1).min(h1_base.len().saturating_sub(1)) {
            let dh = (rows[i + 1][5] - h1_base[i + 1]) - (rows[i - 1][5] - h1_base[i - 1]);
            let fd = dh / (rows[i + 1][0] - rows[i - 1][0]);
            worst = worst.max((fd - rates[i][2]).abs());
            scale = scale.max(rates[i][2].abs());
        }
        tr.fd_mismatch = worst / scale;
        rep.curves.push(c);
        rep.curves.push(bal);
        traces.push(tr);
    }
    let (a, b) = (&traces[0], &traces[1]);
    rep.check(8, "min over runs of H2 - (|P|^2 + |W|^2)/2", a.min_margin.min(b.min_margin), Tolerance::AtLeast(0.0));
    let t = cfg.scaling_tolerance;
    rep.check(8, "halving ratio of max |quadratic part of dH1/dt|", a.max_quadratic / b.max_quadratic, Tolerance::Within(4.0 * (1.0 - t), 4.0 * (1.0 + t)));
    rep.check(8, "halving ratio of max |cubic remainder of dH1/dt|", a.max_remainder / b.max_remainder, Tolerance::Within(8.0 * (1.0 - t), 8.0 * (1.0 + t)));
    rep.fit("quadratic_ratio_t0", a.quadratic0 / b.quadratic0);
    rep.fit("remainder_ratio_t0", a.remainder0 / b.remainder0);
    rep.fit("fd_mismatch", a.fd_mismatch.max(b.fd_mismatch));
    Ok(rep)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub run: LatticeRunConfig,
    pub delta: f64,
    pub perturbations: Vec<Perturbation>,
    pub seed: u64,
    /// Ceiling `C0` in `err(t) <= C0 delta`.
    pub c0: f64,
    /// Accepted band for `max err(delta) / max err(delta/2)`.
    pub halving_band: (f64, f64),
    /// Relative change allowed when `dt` is halved.
    pub dt_tolerance: f64,
    /// Ceiling on the transport error of the unperturbed wave.
    pub transport_tolerance: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            run: LatticeRunConfig::default(),
            delta: 1e-3,
            perturbations: vec![Perturbation::Gaussian, Perturbation::SingleSite, Perturbation::PhaseShift],
            seed: 42,
            c0: 10.0,
            halving_band: (1.6, 2.4),
            dt_tolerance: 0.1,
            transport_tolerance: 1e-8,
        }
    }
}

/// Error trace `||w - w_s||_{l2} + ||p - p_s||_{l2}` of one lattice run.
fn stability_run(
    lattice: &Lattice,
    reference: &TravellingReference,
    mut state: LatticeState,
    dt: f64,
    t_end: f64,
    spacing: f64,
    integrator: Integrator,
) -> (Vec<(f64, f64)>, Result<()>, LatticeState) {
    let mut trace = Vec::new();
    let run = steps_for(t_end, dt).and_then(|steps| {
        lattice.evolve(&mut state, dt, steps, every_for(spacing, dt), integrator, |s| {
            let (w, p) = reference.at(s.t);
            trace.push((s.t, s.distance(&w, &p)));
            Ok(())
        })
    });
    (trace, run, state)
}

fn sup_err(trace: &[(f64, f64)]) -> f64 {
    trace.iter().map(|x| x.1).fold(0.0, f64::max)
}

/// Smallest `C` with `err(t) <= err(0) exp(C eps^3 t)` on the trace.
fn gronwall_rate(trace: &[(f64, f64)], eps: f64) -> f64 {
    let e0 = trace[0].1;
    trace
        .iter()
        .filter(|(t, _)| *t > 0.0)
        .map(|(t, e)| (e / e0).ln() / (eps.powi(3) * t))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn stability(cfg: &StabilityConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("stability", cfg, cfg.seed);
    let (lattice, reference) = cfg.run.reference()?;
    let r = &cfg.run;
    let t_end = r.t_end();
    let trace_curve = |name: String, a: &[(f64, f64)], b: &[(f64, f64)]| {
        let mut c = Curve::new(name, &["t", "err", "err_half_delta"]);
        for (x, y) in a.iter().zip(b) {
            c.push(vec![x.0, x.1, y.1]);
        }
        c
    };

    let (zero, run, last) = stability_run(&lattice, &reference, reference.state_at(0.0), r.dt, t_end, r.checkpoint_spacing, r.integrator);
    if let Err(e) = run {
        rep.snapshots.push(("aborted_unperturbed".into(), last));
        rep.abort(9, "unperturbed run", &e);
        return Ok(rep);
    }
    rep.check(9, "delta=0: max transport error", sup_err(&zero), Tolerance::AtMost(cfg.transport_tolerance));

    for (k, &kind) in cfg.perturbations.iter().enumerate() {
        let label = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let seed = cfg.seed.wrapping_add(k as u64);
        let mut traces = Vec::new();
        for delta in [cfg.delta, 0.5 * cfg.delta] {
            let start = perturbed_state(&reference, kind, delta, seed)?;
            let (trace, run, last) = stability_run(&lattice, &reference, start, r.dt, t_end, r.checkpoint_spacing, r.integrator);
            if delta == cfg.delta {
                rep.snapshots.push((format!("final_{label}"), last));
            }
            if let Err(e) = run {
                rep.abort(9, &format!("{label} run with delta={delta}"), &e);
                return Ok(rep);
            }
            traces.push(trace);
        }
        let (full, half) = (sup_err(&traces[0]), sup_err(&traces[1]));
        rep.check(9, format!("{label}: max err / delta"), full / cfg.delta, Tolerance::AtMost(cfg.c0));
        rep.check(9, format!("{label}: max err(delta) / max err(delta/2)"), full / half, Tolerance::Within(cfg.halving_band.0, cfg.halving_band.1));
        rep.fit(format!("c0_{label}"), full / cfg.delta);
        rep.fit(format!("gronwall_rate_{label}"), gronwall_rate(&traces[0], r.epsilon));
        rep.curves.push(trace_curve(format!("stability_{label}"), &traces[0], &traces[1]));

        if k == 0 {
            let start = perturbed_state(&reference, kind, cfg.delta, seed)?;
            let (fine, run, _) = stability_run(&lattice, &reference, start, 0.5 * r.dt, t_end, r.checkpoint_spacing, r.integrator);
            if let Err(e) = run {
                rep.abort(9, "dt/2 rerun", &e);
                return Ok(rep);
            }
            let change = (sup_err(&fine) - full).abs() / full;
            rep.check(9, format!("{label}: relative change of max err under dt/2"), change, Tolerance::AtMost(cfg.dt_tolerance));
        }
    }
    Ok(rep)
}

// --------------------------------------------------------------- criterion 10

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualConfig {
    pub lambda: f64,
    pub epsilons: Vec<f64>,
    pub n_sites: usize,
    pub oversample: usize,
    pub slope_band: (f64, f64),
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            epsilons: vec![0.05, 0.0707, 0.1, 0.141, 0.2],
            n_sites: 4096,
            oversample: 2,
            slope_band: (4.3, 5.5),
        }
    }
}

pub fn residual_scaling(cfg: &ResidualConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("residual-scaling", cfg, 0);
    let sw = stationary(cfg.lambda)?;
    let mut c = Curve::new("residuals", &["epsilon", "res1_l2", "res2_l2", "total"]);
    let mut totals = Vec::new();
    for &eps in &cfg.epsilons {
        let ring = RingProfile::from_profile(&sw.profile.grid, &sw.profile.values, cfg.n_sites, cfg.oversample, eps)?;
        let r = lattice_residuals(&ring)?;
        c.push(vec![eps, r.res1_l2, r.res2_l2, r.total()]);
        totals.push(r.total());
    }
    let slope = log_log_slope(&cfg.epsilons, &totals);
    rep.check(10, "least-squares slope of log residual vs log epsilon", slope, Tolerance::Within(cfg.slope_band.0, cfg.slope_band.1));
    rep.fit("residual_slope", slope);
    rep.fit("residual_constant", totals.iter().zip(&cfg.epsilons).map(|(t, e)| t / e.powf(4.5)).fold(0.0, f64::max));
    rep.curves.push(c);
    Ok(rep)
}

// --------------------------------------------------------------- criterion 11

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub epsilons: Vec<f64>,
    pub n_points: usize,
    pub half_width: f64,
    /// Allowed relative spread `max/min - 1` of the constant.
    pub spread: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let epsilons = (0..7).map(|i| 0.02 * 10f64.powf(i as f64 / 6.0)).collect();
        Self { epsilons, n_points: 4096, half_width: 40.0, spread: 0.05 }
    }
}

pub fn sampling(cfg: &SamplingConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("sampling-constant", cfg, 0);
    let grid = SpectralGrid::new(cfg.n_points, cfg.half_width)?;
    let mut c = Curve::new("sampling", &["epsilon", "gaussian", "sech"]);
    let mut cols = [Vec::new(), Vec::new()];
    for &eps in &cfg.epsilons {
        let g = sampling_constant(SamplingTest::Gaussian, &grid, eps)?;
        let s = sampling_constant(SamplingTest::Sech, &grid, eps)?;
        cols[0].push(g);
        cols[1].push(s);
        c.push(vec![eps, g, s]);
    }
    for (name, col) in ["gaussian", "sech"].iter().zip(&cols) {
        rep.check(11, format!("{name}: spread max/min - 1"), max_over_min(col) - 1.0, Tolerance::AtMost(cfg.spread));
        rep.fit(format!("sampling_constant_{name}"), col.iter().copied().fold(0.0, f64::max));
    }
    rep.curves.push(c);
    Ok(rep)
}

// --------------------------------------------------------------- criterion 12

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JustificationConfig {
    pub lambda: f64,
    pub epsilons: Vec<f64>,
    pub tau: f64,
    pub dt: f64,
    pub n_sites: usize,
    pub oversample: usize,
    pub checkpoint_spacing: f64,
    pub integrator: Integrator,
    /// Ceiling on `max/min` of `sup err / eps^(3/2)` across the epsilons.
    pub ratio_max: f64,
    pub dt_tolerance: f64,
    /// Also run the first epsilon against a numerically evolved reference.
    pub pde_cross_check: bool,
    pub pde_dtau: f64,
    pub pde_tolerance: f64,
}

impl Default for JustificationConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            epsilons: vec![0.1, 0.141],
            tau: 1.0,
            dt: 0.05,
            n_sites: 4096,
            oversample: 2,
            checkpoint_spacing: 1.0,
            integrator: Integrator::Yoshida6,
            ratio_max: 4.0,
            dt_tolerance: 0.05,
            pde_cross_check: true,
            pde_dtau: 1e-3,
            pde_tolerance: 0.1,
        }
    }
}

struct JustifyTrace {
    /// `(t, err, energy-type E, |W|^2 + |P|^2)`.
    rows: Vec<[f64; 4]>,
    last: Option<LatticeState>,
}

impl JustifyTrace {
    fn sup_err(&self) -> f64 {
        self.rows.iter().map(|r| r[1]).fold(0.0, f64::max)
    }
}

fn justify_run(cfg: &JustificationConfig, w_stat: &WaveProfile, eps: f64, dt: f64, pde: bool) -> (JustifyTrace, Result<()>) {
    let mut trace = JustifyTrace { rows: Vec::new(), last: None };
    let run = (|| -> Result<()> {
        let params = ModelParams::new(cfg.lambda, eps)?;
        let ring = RingProfile::from_profile(&w_stat.grid, &w_stat.values, cfg.n_sites, cfg.oversample, eps)?;
        let mut reference = if pde { KdvReference::pde(ring, cfg.pde_dtau)? } else { KdvReference::stationary(ring, cfg.lambda)? };
        let lattice = Lattice::new(params);
        let (w, p, _) = reference.at(0.0)?;
        let mut state = LatticeState::new(w, p, 0.0)?;
        let steps = steps_for(cfg.tau / eps.powi(3), dt)?;
        let run = lattice.evolve(&mut state, dt, steps, every_for(cfg.checkpoint_spacing, dt), cfg.integrator, |s| {
            let (w, p, gp) = reference.at(s.t)?;
            let (e, sq) = energy_type(s, &w, &p, &gp);
            trace.rows.push([s.t, s.distance(&w, &p), e, sq]);
            Ok(())
        });
        trace.last = Some(state);
        run
    })();
    (trace, run)
}

/// Smallest `C` with `sqrt(E(t)) <= (sqrt(E(0)) + C eps^(9/2) t) exp(C eps^3 t)`
/// at every checkpoint.
fn envelope_constant(rows: &[[f64; 4]], eps: f64) -> f64 {
    let q0 = rows[0][2].max(0.0).sqrt();
    let mut worst: f64 = 0.0;
    for r in rows.iter().filter(|r| r[0] > 0.0) {
        let (t, q) = (r[0], r[2].max(0.0).sqrt());
        let f = |c: f64| (q0 + c * eps.powf(4.5) * t) * (c * eps.powi(3) * t).exp() - q;
        if f(0.0) >= 0.0 {
            continue;
        }
        let mut hi = 1.0;
        while f(hi) < 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        worst = worst.max(hi);
    }
    worst
}

pub fn justification(cfg: &JustificationConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("justification", cfg, 0);
    let sw = stationary(cfg.lambda)?;
    let mut scaled = Vec::new();
    let mut envelopes = Vec::new();
    let mut first_sup = f64::NAN;
    for (i, &eps) in cfg.epsilons.iter().enumerate() {
        let (trace, run) = justify_run(cfg, &sw.profile, eps, cfg.dt, false);
        let mut c = Curve::new(format!("justify_eps{eps}"), &["t", "err", "energy_type", "norm_sq"]);
        for r in &trace.rows {
            c.push(r.to_vec());
        }
        rep.curves.push(c);
        if let Err(e) = run {
            if let Some(s) = trace.last {
                rep.snapshots.push((format!("aborted_eps{eps}"), s));
            }
            rep.abort(12, &format!("epsilon={eps} run"), &e);
            return Ok(rep);
        }
        let sup = trace.sup_err();
        scaled.push(sup / eps.powf(1.5));
        rep.fit(format!("sup_err_eps{eps}"), sup);
        rep.fit(format!("c0_eps{eps}"), sup / eps.powf(1.5));
        rep.check(12, format!("epsilon={eps}: err at t=0"), trace.rows[0][1], Tolerance::AtMost(1e-14));
        let worst_bound = trace.rows.iter().map(|r| r[3] - 4.0 * r[2]).fold(f64::NEG_INFINITY, f64::max);
        rep.note(12, format!("epsilon={eps}: max (|W|^2 + |P|^2 - 4E)"), worst_bound, Tolerance::AtMost(0.0));
        let env = envelope_constant(&trace.rows, eps);
        rep.fit(format!("envelope_constant_eps{eps}"), env);
        envelopes.push(env);
        if i == 0 {
            first_sup = sup;
            let (fine, run) = justify_run(cfg, &sw.profile, eps, 0.5 * cfg.dt, false);
            if let Err(e) = run {
                rep.abort(12, "dt/2 rerun", &e);
                return Ok(rep);
            }
            let change = (fine.sup_err() - sup).abs() / sup;
            rep.check(12, format!("epsilon={eps}: relative change of sup err under dt/2"), change, Tolerance::AtMost(cfg.dt_tolerance));
        }
    }
    if scaled.len() >= 2 {
        rep.check(12, "max/min of sup err / eps^(3/2)", max_over_min(&scaled), Tolerance::AtMost(cfg.ratio_max));
        rep.note(12, "max/min of fitted envelope constant", max_over_min(&envelopes), Tolerance::AtMost(1.5));
    }
    if cfg.pde_cross_check && !cfg.epsilons.is_empty() {
        let eps = cfg.epsilons[0];
        let (trace, run) = justify_run(cfg, &sw.profile, eps, cfg.dt, true);
        match run {
            Ok(()) => {
                let diff = (trace.sup_err() - first_sup).abs() / first_sup;
                rep.note(12, format!("epsilon={eps}: evolved vs exact reference, relative difference"), diff, Tolerance::AtMost(cfg.pde_tolerance));
                rep.fit(format!("sup_err_pde_eps{eps}"), trace.sup_err());
            }
            Err(e) => rep.note(12, format!("evolved reference run failed: {e}"), f64::NAN, Tolerance::AtMost(cfg.pde_tolerance)),
        }
    }
    Ok(rep)
}

// --------------------------------------------------------------- criterion 13

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogKdvConfig {
    pub lambda: f64,
    pub n_points: usize,
    pub half_width: f64,
    pub dtau: f64,
    pub tau_end: f64,
    pub checkpoint_spacing: f64,
    pub speed_tolerance: f64,
    pub drift_tolerance: f64,
    pub shape_tolerance: f64,
    /// Also run the Gaussian under the zero-background flux.
    pub gaussian_check: bool,
}

impl Default for LogKdvConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            n_points: 2048,
            half_width: 20.0,
            dtau: 5e-4,
            tau_end: 1.0,
            checkpoint_spacing: 0.05,
            speed_tolerance: 0.005,
            drift_tolerance: 1e-8,
            shape_tolerance: 1e-4,
            gaussian_check: true,
        }
    }
}

pub fn log_kdv_transport(cfg: &LogKdvConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("log-kdv-transport", cfg, 0);
    let grid = SpectralGrid::new(cfg.n_points, cfg.half_width)?;
    let sw = solve_stationary(cfg.lambda, &grid)?;
    let solver = LogKdvSolver::new(grid.clone(), Flux::BackgroundG, cfg.dtau)?;
    let start = sw.profile.with_values(sw.profile.values.clone(), Parity::None);
    let mut state = PdeState::new(start, 0.0, Flux::BackgroundG)?;
    let mut checkpoints: Vec<PdeCheckpoint> = Vec::new();
    let mut max_tail: f64 = 0.0;
    let run = solver.evolve(&mut state, cfg.tau_end, cfg.checkpoint_spacing, |s| {
        checkpoints.push(PdeCheckpoint::of(&s.profile, s.tau));
        max_tail = max_tail.max(solver.spectral_tail(&s.profile.values));
        Ok(())
    });
    let mut c = Curve::new("pde_checkpoints", &["tau", "center", "mass", "l2", "min", "max"]);
    for k in &checkpoints {
        c.push(vec![k.tau, k.center, k.mass, k.l2, k.min, k.max]);
    }
    rep.curves.push(c);
    if let Err(e) = run {
        rep.abort(13, "log-KdV run", &e);
        return Ok(rep);
    }
    let (first, last) = (checkpoints[0], checkpoints[checkpoints.len() - 1]);
    let expected = 0.5 * cfg.lambda * cfg.tau_end;
    rep.check(13, "relative error of the peak displacement", ((last.center - first.center) / expected - 1.0).abs(), Tolerance::AtMost(cfg.speed_tolerance));
    rep.check(13, "relative drift of the mass", ((last.mass - first.mass) / first.mass).abs(), Tolerance::AtMost(cfg.drift_tolerance));
    rep.check(13, "relative drift of the L2 norm squared", ((last.l2 - first.l2) / first.l2).abs(), Tolerance::AtMost(cfg.drift_tolerance));
    let back = grid.shift(&state.profile.values, expected);
    let shape = crate::grid::l2_norm(&back.iter().zip(&sw.profile.values).map(|(a, b)| a - b).collect::<Vec<_>>()) / crate::grid::l2_norm(&sw.profile.values);
    rep.note(13, "relative L2 shape error after shifting back", shape, Tolerance::AtMost(cfg.shape_tolerance));
    rep.note(13, "largest spectral tail fraction", max_tail, Tolerance::AtMost(1e-10));
    rep.profiles.push(("pde_initial".into(), sw.profile.clone()));
    rep.profiles.push((format!("pde_tau{}", cfg.tau_end), state.profile.clone()));

    if cfg.gaussian_check {
        let v = gaussian_profile(&grid);
        let solver = LogKdvSolver::new(grid.clone(), Flux::VLogV, cfg.dtau)?;
        let mut state = PdeState::new(v.with_values(v.values.clone(), Parity::None), 0.0, Flux::VLogV)?;
        match solver.evolve(&mut state, cfg.tau_end, cfg.tau_end, |_| Ok(())) {
            Ok(()) => {
                let dev = sup_norm(&state.profile.values.iter().zip(&v.values).map(|(a, b)| a - b).collect::<Vec<_>>());
                rep.note(13, "Gaussian under v log|v|: sup deviation", dev, Tolerance::AtMost(1e-5));
            }
            Err(e) => rep.note(13, format!("Gaussian under v log|v| failed: {e}"), f64::NAN, Tolerance::AtMost(1e-5)),
        }
    }
    let (mass, l2) = conserved_quantities(&state.profile);
    rep.fit("final_mass", mass);
    rep.fit("final_l2", l2);
    Ok(rep)
}
