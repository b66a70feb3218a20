//! Stochastic gradient descent with finite weight averaging.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: parameter vectors, samples and loss models with analytic gradients.
//! - [`data`]: datasets, CSV ingestion, synthetic generators and twin datasets.
//! - [`schedule`]: learning-rate schedules and averaging schemes (SGD, FWA, LAWA, SWA).
//! - [`optimizer`]: the SGD loop, projection, and the direct / incremental averagers.
//! - [`stability`]: twin-dataset stability measurements and expansivity probes.
//! - [`bounds`]: problem-constant estimation and closed-form stability and convergence bounds.
//!
//! All randomness flows from explicit `u64` seeds through [`rng`], so every run is
//! bitwise reproducible.

pub mod bounds;
pub mod data;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod rng;
pub mod schedule;
pub mod stability;

pub use data::{Dataset, TwinPair};
pub use error::{Error, Result};
pub use model::{LossModel, ParameterVector, Sample};
pub use optimizer::{RunConfig, Sampling, Trajectory};
pub use schedule::{AveragingScheme, LearningRateSchedule, SchemeKind};
