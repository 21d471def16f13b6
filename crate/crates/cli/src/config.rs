//! Run configuration: TOML file, flag overrides, validation and hashing.

use std::path::Path;

use logkdv_core::lattice::{Integrator, Perturbation};
use logkdv_core::wave_solver::WaveSolverOptions;
use logkdv_core::ModelParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Experiment subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Wave,
    Spectrum,
    Simulate,
    Pde,
    Justify,
    Stability,
    Residuals,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Wave => "wave",
            Command::Spectrum => "spectrum",
            Command::Simulate => "simulate",
            Command::Pde => "pde",
            Command::Justify => "justify",
            Command::Stability => "stability",
            Command::Residuals => "residuals",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub lambda: f64,
    pub epsilon: f64,
    pub p_cut: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { lambda: 2.0, epsilon: 0.1, p_cut: 2.0 / 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveSection {
    /// Sweep values; the model epsilon alone when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    pub oracle: bool,
    pub solver: WaveSolverOptions,
    /// Also iterate the fixed-point map from small random data.
    pub small_solutions: bool,
    pub small_radius: f64,
    pub small_trials: usize,
    pub small_tolerance: f64,
    pub small_max_iterations: usize,
}

impl Default for WaveSection {
    fn default() -> Self {
        Self {
            epsilons: None,
            oracle: true,
            solver: WaveSolverOptions::default(),
            small_solutions: false,
            small_radius: 0.5,
            small_trials: 20,
            small_tolerance: 1e-12,
            small_max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    /// The model lambda alone when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    /// The model epsilon alone when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    pub trials: usize,
    pub listed: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { lambdas: None, epsilons: None, trials: 100, listed: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    /// Ring size; 0 picks the default for the parameters.
    pub n_sites: usize,
    pub oversample: usize,
    pub dt: f64,
    pub tau: f64,
    pub delta: f64,
    pub checkpoint_spacing: f64,
    /// Integrator of the energy-conservation run.
    pub integrator: Integrator,
    /// Run the energy-expansion diagnostics as well.
    pub diagnostics: bool,
    pub diagnostics_integrator: Integrator,
    pub fine_spacing: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            n_sites: 4096,
            oversample: 2,
            dt: 0.05,
            tau: 1.0,
            delta: 1e-3,
            checkpoint_spacing: 1.0,
            integrator: Integrator::Strang,
            diagnostics: true,
            diagnostics_integrator: Integrator::Yoshida6,
            fine_spacing: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    pub n_sites: usize,
    pub oversample: usize,
    pub dt: f64,
    pub tau: f64,
    pub delta: f64,
    pub perturbations: Vec<Perturbation>,
    pub c0: f64,
    pub checkpoint_spacing: f64,
    pub integrator: Integrator,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            n_sites: 4096,
            oversample: 2,
            dt: 0.05,
            tau: 1.0,
            delta: 1e-3,
            perturbations: vec![Perturbation::Gaussian, Perturbation::SingleSite, Perturbation::PhaseShift],
            c0: 10.0,
            checkpoint_spacing: 1.0,
            integrator: Integrator::Yoshida6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JustifySection {
    /// `[eps, sqrt(2) eps]` from the model epsilon when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    pub tau: f64,
    pub dt: f64,
    pub n_sites: usize,
    pub oversample: usize,
    pub checkpoint_spacing: f64,
    pub integrator: Integrator,
    pub pde_cross_check: bool,
    pub pde_dtau: f64,
}

impl Default for JustifySection {
    fn default() -> Self {
        Self {
            epsilons: None,
            tau: 1.0,
            dt: 0.05,
            n_sites: 4096,
            oversample: 2,
            checkpoint_spacing: 1.0,
            integrator: Integrator::Yoshida6,
            pde_cross_check: true,
            pde_dtau: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeSection {
    pub n_points: usize,
    pub half_width: f64,
    pub dtau: f64,
    pub tau_end: f64,
    pub checkpoint_spacing: f64,
    pub gaussian_check: bool,
}

impl Default for PdeSection {
    fn default() -> Self {
        Self { n_points: 2048, half_width: 20.0, dtau: 5e-4, tau_end: 1.0, checkpoint_spacing: 0.05, gaussian_check: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualsSection {
    pub epsilons: Vec<f64>,
    pub n_sites: usize,
    pub oversample: usize,
    pub sampling_epsilons: Vec<f64>,
    pub sampling_points: usize,
    pub sampling_half_width: f64,
}

impl Default for ResidualsSection {
    fn default() -> Self {
        let r = logkdv_core::harness::ResidualConfig::default();
        let s = logkdv_core::harness::SamplingConfig::default();
        Self {
            epsilons: r.epsilons,
            n_sites: r.n_sites,
            oversample: r.oversample,
            sampling_epsilons: s.epsilons,
            sampling_points: s.n_points,
            sampling_half_width: s.half_width,
        }
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    /// Also write SVG line charts of every curve.
    pub svg: bool,
    pub model: ModelSection,
    pub wave: WaveSection,
    pub spectrum: SpectrumSection,
    pub simulate: SimulateSection,
    pub pde: PdeSection,
    pub justify: JustifySection,
    pub stability: StabilitySection,
    pub residuals: ResidualsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            workers: 1,
            svg: false,
            model: ModelSection::default(),
            wave: WaveSection::default(),
            spectrum: SpectrumSection::default(),
            simulate: SimulateSection::default(),
            pde: PdeSection::default(),
            justify: JustifySection::default(),
            stability: StabilitySection::default(),
            residuals: ResidualsSection::default(),
        }
    }
}

/// Values given on the command line; each replaces the file value.
/// List and run settings apply to every section that has a field of that name.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub svg: bool,
    pub lambda: Option<f64>,
    pub epsilon: Option<f64>,
    pub p_cut: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
    pub delta: Option<f64>,
    pub dt: Option<f64>,
    pub tau: Option<f64>,
    pub n_sites: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        self.svg |= o.svg;
        if let Some(v) = o.lambda {
            self.model.lambda = v;
        }
        if let Some(v) = o.epsilon {
            self.model.epsilon = v;
        }
        if let Some(v) = o.p_cut {
            self.model.p_cut = v;
        }
        if let Some(v) = &o.epsilons {
            self.wave.epsilons = Some(v.clone());
            self.spectrum.epsilons = Some(v.clone());
            self.justify.epsilons = Some(v.clone());
            self.residuals.epsilons = v.clone();
        }
        if let Some(v) = o.delta {
            self.simulate.delta = v;
            self.stability.delta = v;
        }
        if let Some(v) = o.dt {
            self.simulate.dt = v;
            self.stability.dt = v;
            self.justify.dt = v;
        }
        if let Some(v) = o.tau {
            self.simulate.tau = v;
            self.stability.tau = v;
            self.justify.tau = v;
        }
        if let Some(v) = o.n_sites {
            self.simulate.n_sites = v;
            self.stability.n_sites = v;
            self.justify.n_sites = v;
            self.residuals.n_sites = v;
        }
    }

    /// Epsilons of the travelling-wave sweep.
    pub fn wave_epsilons(&self) -> Vec<f64> {
        self.wave.epsilons.clone().unwrap_or_else(|| vec![self.model.epsilon])
    }

    pub fn spectrum_lambdas(&self) -> Vec<f64> {
        self.spectrum.lambdas.clone().unwrap_or_else(|| vec![self.model.lambda])
    }

    pub fn spectrum_epsilons(&self) -> Vec<f64> {
        self.spectrum.epsilons.clone().unwrap_or_else(|| vec![self.model.epsilon])
    }

    pub fn justify_epsilons(&self) -> Vec<f64> {
        self.justify.epsilons.clone().unwrap_or_else(|| vec![self.model.epsilon, self.model.epsilon * 2f64.sqrt()])
    }

    /// Check every value against the preconditions of the experiments, so
    /// nothing is clamped or rejected halfway through a run.
    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.model;
        let model = |lambda: f64, eps: f64, key: &str| {
            ModelParams::with_cut(lambda, eps, m.p_cut)
                .map(|_| ())
                .map_err(|e| CliError::Validation(format!("{key}: {e}")))
        };
        model(m.lambda, m.epsilon, "model")?;
        let list = |key: &str, v: &[f64], lambda: f64| -> Result<(), CliError> {
            if v.is_empty() {
                return Err(CliError::Validation(format!("{key}: list must not be empty")));
            }
            v.iter().try_for_each(|&e| model(lambda, e, key))
        };
        list("wave.epsilons", &self.wave_epsilons(), m.lambda)?;
        list("spectrum.epsilons", &self.spectrum_epsilons(), m.lambda)?;
        list("justify.epsilons", &self.justify_epsilons(), m.lambda)?;
        list("residuals.epsilons", &self.residuals.epsilons, m.lambda)?;
        if self.residuals.epsilons.len() < 2 {
            return Err(CliError::Validation("residuals.epsilons: a slope needs at least two values".into()));
        }
        for &l in &self.spectrum_lambdas() {
            model(l, m.epsilon, "spectrum.lambdas")?;
        }
        if self.residuals.sampling_epsilons.is_empty() || self.residuals.sampling_epsilons.iter().any(|&e| !(e > 0.0)) {
            return Err(CliError::Validation("residuals.sampling_epsilons: need positive values".into()));
        }
        positive("workers", self.workers as f64)?;
        positive("wave.small_radius", self.wave.small_radius)?;
        positive("wave.small_trials", self.wave.small_trials as f64)?;
        positive("spectrum.trials", self.spectrum.trials as f64)?;
        let s = &self.simulate;
        ring("simulate.n_sites", s.n_sites, true)?;
        positive("simulate.oversample", s.oversample as f64)?;
        positive("simulate.dt", s.dt)?;
        nonnegative("simulate.tau", s.tau)?;
        nonnegative("simulate.delta", s.delta)?;
        positive("simulate.checkpoint_spacing", s.checkpoint_spacing)?;
        positive("simulate.fine_spacing", s.fine_spacing)?;
        let st = &self.stability;
        ring("stability.n_sites", st.n_sites, true)?;
        positive("stability.oversample", st.oversample as f64)?;
        positive("stability.dt", st.dt)?;
        nonnegative("stability.tau", st.tau)?;
        positive("stability.delta", st.delta)?;
        positive("stability.c0", st.c0)?;
        positive("stability.checkpoint_spacing", st.checkpoint_spacing)?;
        if st.perturbations.is_empty() {
            return Err(CliError::Validation("stability.perturbations: list must not be empty".into()));
        }
        let j = &self.justify;
        ring("justify.n_sites", j.n_sites, false)?;
        positive("justify.oversample", j.oversample as f64)?;
        positive("justify.dt", j.dt)?;
        nonnegative("justify.tau", j.tau)?;
        positive("justify.checkpoint_spacing", j.checkpoint_spacing)?;
        positive("justify.pde_dtau", j.pde_dtau)?;
        let p = &self.pde;
        ring("pde.n_points", p.n_points, false)?;
        positive("pde.half_width", p.half_width)?;
        positive("pde.dtau", p.dtau)?;
        nonnegative("pde.tau_end", p.tau_end)?;
        positive("pde.checkpoint_spacing", p.checkpoint_spacing)?;
        let r = &self.residuals;
        ring("residuals.n_sites", r.n_sites, false)?;
        positive("residuals.oversample", r.oversample as f64)?;
        ring("residuals.sampling_points", r.sampling_points, false)?;
        positive("residuals.sampling_half_width", r.sampling_half_width)?;
        Ok(())
    }

    /// SHA-256 over the command and the canonical JSON of the configuration.
    pub fn hash(&self, command: Command) -> String {
        let json = serde_json::to_string(&(command, self)).expect("config serializes to JSON");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{key}: must be positive, got {v}")))
    }
}

fn nonnegative(key: &str, v: f64) -> Result<(), CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{key}: must be nonnegative, got {v}")))
    }
}

fn ring(key: &str, n: usize, zero_means_default: bool) -> Result<(), CliError> {
    if (zero_means_default && n == 0) || (n >= 16 && n.is_power_of_two()) {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{key}: must be a power of two >= 16, got {n}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_documented_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.model.lambda, c.model.epsilon, c.model.p_cut, c.seed), (2.0, 0.1, 2.0 / 3.0, 42));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("[model]\nlambda = 2.0\nlamda = 3.0\n").unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
        assert!(RunConfig::from_toml("colour = 1\n").is_err());
    }

    #[test]
    fn flag_overrides_file() {
        let mut c = RunConfig::from_toml("[model]\nlambda = 2.0\n").unwrap();
        c.apply(&Overrides { lambda: Some(3.0), ..Default::default() });
        assert_eq!(c.model.lambda, 3.0);
    }

    #[test]
    fn out_of_range_values_name_the_key() {
        let mut c = RunConfig::default();
        c.apply(&Overrides { lambda: Some(0.5), ..Default::default() });
        let err = c.validate().unwrap_err().to_string();
        assert!(err.starts_with("model"), "{err}");

        let mut c = RunConfig::default();
        c.stability.dt = -0.1;
        assert!(c.validate().unwrap_err().to_string().contains("stability.dt"));

        let mut c = RunConfig::default();
        c.simulate.n_sites = 1000;
        assert!(c.validate().unwrap_err().to_string().contains("simulate.n_sites"));
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let mut c = RunConfig::default();
        c.wave.epsilons = Some(vec![0.05, 0.1]);
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(Command::Wave), c.hash(Command::Wave));
        assert_ne!(c.hash(Command::Wave), c.hash(Command::Pde));
        assert_eq!(c.hash(Command::Wave).len(), 64);
    }
}
