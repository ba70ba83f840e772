//! Pipeline configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Family of split test used at a tree node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerFamily {
    AxisAligned,
    Linear,
    Quadratic,
    /// Two-component Gaussian mixture fitted on the node samples.
    Gmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub from_depth: usize,
    pub learner: LearnerFamily,
}

/// Maps node depth to a learner family. Each entry applies from its
/// `from_depth` until the next entry's.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LearnerSchedule(Vec<ScheduleEntry>);

impl LearnerSchedule {
    pub fn new(mut entries: Vec<ScheduleEntry>) -> Result<Self> {
        entries.sort_by_key(|e| e.from_depth);
        if entries.first().map(|e| e.from_depth) != Some(0) {
            return Err(Error::Config(
                "learner_schedule must contain an entry starting at depth 0".into(),
            ));
        }
        if entries.windows(2).any(|w| w[0].from_depth == w[1].from_depth) {
            return Err(Error::Config(
                "learner_schedule has duplicate start depths".into(),
            ));
        }
        Ok(Self(entries))
    }

    /// The same family at every depth.
    pub fn uniform(learner: LearnerFamily) -> Self {
        Self(vec![ScheduleEntry {
            from_depth: 0,
            learner,
        }])
    }

    pub fn family_at(&self, depth: usize) -> LearnerFamily {
        self.0
            .iter()
            .rev()
            .find(|e| e.from_depth <= depth)
            .map_or(LearnerFamily::AxisAligned, |e| e.learner)
    }

    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.0
    }
}

impl Default for LearnerSchedule {
    /// Axis-aligned at depths 0–1, linear at 2–4, quadratic from 5 on.
    fn default() -> Self {
        Self(vec![
            ScheduleEntry {
                from_depth: 0,
                learner: LearnerFamily::AxisAligned,
            },
            ScheduleEntry {
                from_depth: 2,
                learner: LearnerFamily::Linear,
            },
            ScheduleEntry {
                from_depth: 5,
                learner: LearnerFamily::Quadratic,
            },
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffinityMode {
    Binary,
    Uniform,
    Adaptive,
}

impl AffinityMode {
    pub fn name(self) -> &'static str {
        match self {
            AffinityMode::Binary => "binary",
            AffinityMode::Uniform => "uniform",
            AffinityMode::Adaptive => "adaptive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub num_trees: usize,
    pub m_try: usize,
    pub num_clusters: usize,
    pub threshold: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub cov_regularizer: f64,
    pub em_tol: f64,
    pub em_max_iter: usize,
    pub seed: u64,
    pub learner_schedule: LearnerSchedule,
    pub affinity_mode: AffinityMode,
    /// Smallest connected component accepted as a seed; `None` means
    /// `max(5, n / (10 K))`.
    pub min_component: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            num_trees: 200,
            m_try: 5,
            num_clusters: 3,
            threshold: 0.8,
            max_depth: 32,
            min_leaf: 5,
            cov_regularizer: 1e-6,
            em_tol: 1e-8,
            em_max_iter: 500,
            seed: 0,
            learner_schedule: LearnerSchedule::default(),
            affinity_mode: AffinityMode::Uniform,
            min_component: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.into()));
        if self.num_trees == 0 {
            return fail("num_trees must be positive");
        }
        if self.m_try == 0 {
            return fail("m_try must be positive");
        }
        if self.num_clusters == 0 {
            return fail("num_clusters must be positive");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return fail("threshold must lie in [0, 1]");
        }
        if self.max_depth == 0 {
            return fail("max_depth must be positive");
        }
        if self.min_leaf < 2 {
            return fail("min_leaf must be at least 2");
        }
        if !(self.cov_regularizer > 0.0 && self.cov_regularizer.is_finite()) {
            return fail("cov_regularizer must be positive");
        }
        if !(self.em_tol > 0.0 && self.em_tol.is_finite()) {
            return fail("em_tol must be positive");
        }
        if self.em_max_iter == 0 {
            return fail("em_max_iter must be positive");
        }
        if self.min_component == Some(0) {
            return fail("min_component must be positive");
        }
        LearnerSchedule::new(self.learner_schedule.0.clone()).map(|_| ())
    }

    pub fn min_component_for(&self, n: usize) -> usize {
        self.min_component
            .unwrap_or_else(|| 5.max(n / (10 * self.num_clusters)))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}
