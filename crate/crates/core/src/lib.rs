//! Numerical core for solitary waves of Hertzian-type FPU lattices near the
//! sonic limit, their logarithmic KdV continuum limit, and the experiments
//! that check the associated error bounds.

pub mod error;
pub mod evolution;
pub mod grid;
pub mod harness;
pub mod justification;
pub mod krylov;
pub mod lattice;
pub mod nonlinearities;
pub mod ode;
pub mod profiles;
pub mod rng;
pub mod spectra;
pub mod wave_solver;
pub mod params;

pub use error::{CoreError, Result};
pub use grid::{Parity, SpectralGrid, VariableTag, WaveProfile};
pub use params::{Family, ModelParams};
