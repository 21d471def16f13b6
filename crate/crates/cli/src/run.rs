//! Mapping from subcommands to experiments, execution on a worker pool and
//! the layout of a run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use logkdv_core::harness::{self, ExperimentReport, LatticeRunConfig};
use logkdv_core::Result as CoreResult;
use rayon::prelude::*;

use crate::config::{Command, RunConfig};
use crate::io::{self, Summary, ABORTED_FILE};
use crate::svg;
use crate::CliError;

type Runner = Box<dyn Fn() -> CoreResult<ExperimentReport> + Send + Sync>;

/// One experiment of a subcommand, with the criterion it is reported under
/// if it fails before producing a report.
pub struct Job {
    pub name: &'static str,
    pub criterion: u32,
    pub run: Runner,
}

fn job<C, F>(name: &'static str, criterion: u32, cfg: C, f: F) -> Job
where
    C: Send + Sync + 'static,
    F: Fn(&C) -> CoreResult<ExperimentReport> + Send + Sync + 'static,
{
    Job { name, criterion, run: Box::new(move || f(&cfg)) }
}

pub fn jobs(command: Command, cfg: &RunConfig) -> Vec<Job> {
    let m = &cfg.model;
    let run = |n_sites, oversample, dt, tau, spacing, integrator| LatticeRunConfig {
        lambda: m.lambda,
        epsilon: m.epsilon,
        p_cut: m.p_cut,
        n_sites,
        oversample,
        dt,
        tau,
        checkpoint_spacing: spacing,
        integrator,
        solver: cfg.wave.solver,
    };
    match command {
        Command::Wave => {
            let w = &cfg.wave;
            let mut out = vec![
                job("stationary-waves", 2, harness::StationaryConfig { lambdas: vec![m.lambda], ..Default::default() }, harness::stationary_waves),
                job(
                    "travelling-sweep",
                    5,
                    harness::TravellingSweepConfig {
                        lambda: m.lambda,
                        epsilons: cfg.wave_epsilons(),
                        p_cut: m.p_cut,
                        solver: w.solver,
                        oracle: w.oracle,
                        ..Default::default()
                    },
                    harness::travelling_sweep,
                ),
            ];
            if w.small_solutions {
                out.push(job(
                    "small-solutions",
                    6,
                    harness::SmallSolutionConfig {
                        lambda: m.lambda,
                        epsilon: m.epsilon,
                        radius: w.small_radius,
                        trials: w.small_trials,
                        tolerance: w.small_tolerance,
                        max_iterations: w.small_max_iterations,
                        seed: cfg.seed,
                    },
                    harness::small_solutions,
                ));
            }
            out
        }
        Command::Spectrum => vec![
            job(
                "spectral-structure",
                3,
                harness::SpectrumConfig { lambdas: cfg.spectrum_lambdas(), listed: cfg.spectrum.listed, ..Default::default() },
                harness::spectral_structure,
            ),
            job(
                "truncation-bound",
                4,
                harness::TruncationConfig {
                    lambda: m.lambda,
                    epsilons: cfg.spectrum_epsilons(),
                    p_cut: m.p_cut,
                    trials: cfg.spectrum.trials,
                    seed: cfg.seed,
                },
                harness::truncation_bound,
            ),
        ],
        Command::Simulate => {
            let s = &cfg.simulate;
            let mut out = vec![job(
                "energy-conservation",
                7,
                harness::EnergyConservationConfig {
                    run: run(s.n_sites, s.oversample, s.dt, s.tau, s.checkpoint_spacing, s.integrator),
                    delta: s.delta,
                    seed: cfg.seed,
                    ..Default::default()
                },
                harness::energy_conservation,
            )];
            if s.diagnostics {
                out.push(job(
                    "energy-diagnostics",
                    8,
                    harness::EnergyDiagnosticsConfig {
                        run: run(s.n_sites, s.oversample, s.dt, s.tau, s.checkpoint_spacing, s.diagnostics_integrator),
                        delta: s.delta,
                        seed: cfg.seed,
                        fine_spacing: s.fine_spacing,
                        ..Default::default()
                    },
                    harness::energy_diagnostics,
                ));
            }
            out
        }
        Command::Pde => {
            let p = &cfg.pde;
            vec![
                job("gaussian-identity", 1, harness::GaussianIdentityConfig { lambda: m.lambda, ..Default::default() }, harness::gaussian_identity),
                job(
                    "log-kdv-transport",
                    13,
                    harness::LogKdvConfig {
                        lambda: m.lambda,
                        n_points: p.n_points,
                        half_width: p.half_width,
                        dtau: p.dtau,
                        tau_end: p.tau_end,
                        checkpoint_spacing: p.checkpoint_spacing,
                        gaussian_check: p.gaussian_check,
                        ..Default::default()
                    },
                    harness::log_kdv_transport,
                ),
            ]
        }
        Command::Justify => {
            let j = &cfg.justify;
            vec![job(
                "justification",
                12,
                harness::JustificationConfig {
                    lambda: m.lambda,
                    epsilons: cfg.justify_epsilons(),
                    tau: j.tau,
                    dt: j.dt,
                    n_sites: j.n_sites,
                    oversample: j.oversample,
                    checkpoint_spacing: j.checkpoint_spacing,
                    integrator: j.integrator,
                    pde_cross_check: j.pde_cross_check,
                    pde_dtau: j.pde_dtau,
                    ..Default::default()
                },
                harness::justification,
            )]
        }
        Command::Stability => {
            let s = &cfg.stability;
            vec![job(
                "stability",
                9,
                harness::StabilityConfig {
                    run: run(s.n_sites, s.oversample, s.dt, s.tau, s.checkpoint_spacing, s.integrator),
                    delta: s.delta,
                    perturbations: s.perturbations.clone(),
                    seed: cfg.seed,
                    c0: s.c0,
                    ..Default::default()
                },
                harness::stability,
            )]
        }
        Command::Residuals => {
            let r = &cfg.residuals;
            vec![
                job(
                    "residual-scaling",
                    10,
                    harness::ResidualConfig {
                        lambda: m.lambda,
                        epsilons: r.epsilons.clone(),
                        n_sites: r.n_sites,
                        oversample: r.oversample,
                        ..Default::default()
                    },
                    harness::residual_scaling,
                ),
                job(
                    "sampling-constant",
                    11,
                    harness::SamplingConfig {
                        epsilons: r.sampling_epsilons.clone(),
                        n_points: r.sampling_points,
                        half_width: r.sampling_half_width,
                        ..Default::default()
                    },
                    harness::sampling,
                ),
            ]
        }
    }
}

/// Run the jobs on a pool of `workers` threads; reports keep job order.
pub fn run_jobs(jobs: &[Job], workers: usize) -> Result<Vec<ExperimentReport>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Compute(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|j| (j.run)().unwrap_or_else(|e| ExperimentReport::compute_error(j.name, j.criterion, &e)))
            .collect()
    }))
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: Summary,
}

impl RunOutcome {
    /// 0 when every verdict passed, 1 on a failed verdict, 3 on a compute error.
    pub fn exit_code(&self) -> i32 {
        if self.summary.aborted {
            3
        } else if self.summary.passed {
            0
        } else {
            1
        }
    }
}

fn create_run_dir(root: &Path, hash: &str) -> Result<PathBuf, CliError> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{stamp}-{}", &hash[..12]);
    fs::create_dir_all(root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
    for k in 0.. {
        let name = if k == 0 { base.clone() } else { format!("{base}.{k}") };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::Io(format!("{}: {e}", dir.display()))),
        }
    }
    unreachable!()
}

fn mkdir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Write every artifact of the reports into `dir` and fill in their file lists.
pub fn write_artifacts(dir: &Path, reports: &mut [ExperimentReport], svg_charts: bool) -> Result<(), CliError> {
    for sub in ["curves", "profiles", "snapshots"] {
        mkdir(&dir.join(sub))?;
    }
    if svg_charts {
        mkdir(&dir.join("plots"))?;
    }
    for rep in reports.iter_mut() {
        let mut files = Vec::new();
        for c in &rep.curves {
            let rel = format!("curves/{}.{}.csv", rep.name, c.name);
            io::write_text(&dir.join(&rel), &c.to_csv())?;
            files.push(rel);
            if svg_charts {
                let rel = format!("plots/{}.{}.svg", rep.name, c.name);
                io::write_text(&dir.join(&rel), &svg::line_chart(c))?;
                files.push(rel);
            }
        }
        for (name, p) in &rep.profiles {
            let rel = format!("profiles/{}.{name}.csv", rep.name);
            io::write_profile(&dir.join(&rel), p)?;
            files.push(rel);
        }
        for (name, s) in &rep.snapshots {
            let rel = format!("snapshots/{}.{name}.bin", rep.name);
            io::write_snapshot(&dir.join(&rel), s)?;
            files.push(rel);
        }
        rep.curve_files = files;
    }
    Ok(())
}

/// Run a validated configuration and persist everything under a fresh
/// `<timestamp>-<hash prefix>` directory of `out_root`.
pub fn execute(command: Command, cfg: &RunConfig, out_root: &Path) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let hash = cfg.hash(command);
    let dir = create_run_dir(out_root, &hash)?;
    let mut reports = run_jobs(&jobs(command, cfg), cfg.workers)?;
    for r in reports.iter_mut() {
        r.config_hash = hash.clone();
    }
    write_artifacts(&dir, &mut reports, cfg.svg)?;
    let aborted: Vec<String> = reports.iter().filter_map(|r| r.aborted.as_ref().map(|a| format!("{}: {a}", r.name))).collect();
    if !aborted.is_empty() {
        io::write_text(&dir.join(ABORTED_FILE), &(aborted.join("\n") + "\n"))?;
    }
    let summary = Summary {
        command,
        config_hash: hash,
        config: cfg.clone(),
        passed: reports.iter().all(|r| r.passed()),
        aborted: !aborted.is_empty(),
        reports,
    };
    io::write_summary(&dir, &summary)?;
    Ok(RunOutcome { dir, summary })
}

/// Human-readable verdict table.
pub fn verdict_table(summary: &Summary) -> String {
    let mut out = String::new();
    let status = if summary.aborted { "ABORTED" } else if summary.passed { "PASS" } else { "FAIL" };
    let _ = writeln!(out, "{} run {}: {status}", summary.command.name(), &summary.config_hash[..12]);
    for r in &summary.reports {
        let _ = writeln!(out, "{}{}", r.name, r.aborted.as_ref().map(|a| format!(" (aborted: {a})")).unwrap_or_default());
        for v in &r.verdicts {
            let tag = match (v.pass, v.required) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "note",
            };
            let _ = writeln!(out, "  [{:>2}] {tag}  {}: {:.4e} ({})", v.criterion, v.check, v.measured, v.tolerance.describe());
        }
        for (k, v) in &r.fitted {
            let _ = writeln!(out, "        {k} = {v:.6e}");
        }
    }
    out
}

/// Load a run directory and check that every recorded hash matches the
/// embedded configuration.
pub fn load_run(dir: &Path) -> Result<Summary, CliError> {
    let summary = io::read_summary(dir)?;
    let hash = summary.config.hash(summary.command);
    let mismatch = |what: &str| CliError::Validation(format!("{}: {what} does not match the configuration hash {hash}", dir.display()));
    if summary.config_hash != hash {
        return Err(mismatch("summary hash"));
    }
    if let Some(r) = summary.reports.iter().find(|r| r.config_hash != hash) {
        return Err(mismatch(&format!("hash of report {}", r.name)));
    }
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("");
    if let Some((_, suffix)) = name.split_once('-') {
        let prefix = suffix.split('.').next().unwrap_or("");
        if prefix.len() == 12 && prefix.chars().all(|c| c.is_ascii_hexdigit()) && !hash.starts_with(prefix) {
            return Err(mismatch("directory name"));
        }
    }
    Ok(summary)
}
