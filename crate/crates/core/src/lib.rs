//! Unsupervised decision forests, forest-derived affinity graphs, and
//! Gaussian mixtures whose latent assignments are partly fixed by the
//! forest.
//!
//! The usual flow is [`forest::train_forest`] on a [`data::Dataset`], then
//! [`affinity::build_affinity`], then either [`spectral::spectral_cluster`]
//! or the dual-assignment gate in [`dual`] followed by [`gmm::fit_em`].
//! [`pipeline::run`] wires these together.

pub mod affinity;
pub mod config;
pub mod data;
pub mod dual;
pub mod error;
pub mod forest;
pub mod gmm;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod spectral;

pub use config::{AffinityMode, LearnerFamily, LearnerSchedule, PipelineConfig};
pub use data::Dataset;
pub use error::{Error, Result};
pub use rng::RandomStream;
