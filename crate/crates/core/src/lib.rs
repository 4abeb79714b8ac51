//! Linear projection conditional flow matching.
//!
//! Targets are modelled as elongated Gaussians around a line of equivalent
//! variants instead of narrow Gaussians around a single sample. The crate
//! provides the matrix-free target geometry ([`geometry`]), path sampling and
//! training ([`flow`], [`net`]), Euler sampling with vector calibration
//! ([`sampler`]), STFT line constructors ([`signal`]) and a small experiment
//! harness ([`experiment`]).

pub mod checkpoint;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod geometry;
pub mod linalg;
pub mod net;
pub mod sampler;
pub mod signal;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use experiment::{
    compare, evaluate, path_length_stats, run_experiment, task_2d_line, task_spectrogram_patch,
    vcs_ablation, Comparison, EvalConfig, FieldSource, ModelSpec, RunReport, ToyTask,
};
pub use flow::{
    cfm_loss, draw_path_sample, train, Optimizer, PathSample, TargetSource, TrainConfig,
    TrainReport,
};
pub use geometry::{
    ot_target_and_velocity, path_point, LineBlocks, PathMode, PathParams, VariantLine,
};
pub use net::{embed_time, Adam, Gradients, Mlp};
pub use sampler::{
    calibrate_blocks, euler_sample, vcs_calibrate, SamplerConfig, Trajectory, VectorField,
};
