//! Budget-bounded automatic configuration tuning.
//!
//! The crate is organized around a small pipeline:
//!
//! - [`space`]: typed parameter spaces with a uniform encoded representation,
//! - [`sampler`]: batch sampling strategies (stratified divide-and-diverge,
//!   Latin hypercube, grid, uniform) with cross-round divergence memory,
//! - [`optimizer`]: search strategies that turn measured batches into the
//!   next sampling action (recursive bound-and-search, recursive random search),
//! - [`utility`]: scalar figures of merit computed from measured metrics,
//! - [`executor`]: runs one configuration against a real process or a
//!   synthetic landscape and reports metrics,
//! - [`landscape`]: synthetic test surfaces with known analytic structure,
//! - [`tuner`]: the budgeted loop tying the above together, with a durable
//!   history log and crash-safe resume,
//! - [`diagnostics`]: measurement utilities (empirical value distributions,
//!   brute-force optima, strategy comparison reports).

pub mod diagnostics;
pub mod error;
pub mod executor;
pub mod landscape;
pub mod optimizer;
pub mod sampler;
pub mod seeding;
pub mod space;
pub mod tuner;
pub mod utility;

pub use error::{Error, Result};
pub use executor::{BoundTarget, FailReason, TargetSpec, TestOutcome, TestStatus};
pub use landscape::LandscapeDef;
pub use optimizer::{Bounds, OptimizerState, RoundAction, RoundDecision, RoundReason, Sample};
pub use sampler::{SampleBatch, SamplerState};
pub use space::{ConfigSetting, Interval, NativeValue, ParamKind, Parameter, ParameterSpace};
pub use tuner::{
    resume_tuning, run_tuning, OptimizerChoice, SamplerChoice, TuningJob, TuningOutcome,
};
pub use utility::{GoalDirection, MetricDecl, MetricVector, UtilitySpec};
