//! Diffusion models, time grids, reproducible noise and Euler–Maruyama paths.

mod dynkin;
mod grid;
mod model;
mod noise;
mod simulate;
mod validate;

pub use dynkin::{dynkin_residual, generator, Bump, BumpWeight, Constant, TestFunction};
pub use grid::TimeGrid;
pub use model::{DiffusionFn, DiffusionModel, DriftFn};
pub use noise::{
    agent_state_stream, derive_seed, observation_stream, sample_brownian, uniform_vector, McConfig, NoiseId, NoisePlan,
    STATE_STREAM,
};
pub(crate) use simulate::{check_finite, Stepper};
pub use simulate::{simulate_path, simulate_reference_path, SamplePath, StatePath};
pub use validate::{girsanov_constant, validate_assumptions, AssumptionReport, ProbeBox, SINGULAR_TOL};
