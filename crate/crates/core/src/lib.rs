//! Coherence loss in a two-level ion-channel filter model, computed two ways:
//! a spin-boson Born-Markov master equation and a classical Gaussian-white-noise
//! master equation, plus the Monte Carlo unitary-ensemble picture that the
//! noise equation averages over.
//!
//! Conventions: hbar = 1, every energy is an angular frequency in 1/s.
//! Kelvin only ever enters through [`kelvin_to_thermal_freq`].

pub mod analysis;
pub mod dynamics;
pub mod quad;
pub mod spectral;
pub mod stochastic;
pub mod types;

pub use types::{
    kelvin_to_thermal_freq, CoefficientSet, DensityMatrix2, EnvironmentParams, NoiseParams,
    ParamError, StepDiagnostics, SystemParams, Trajectory, HBAR, KB_OVER_HBAR, K_B,
};
