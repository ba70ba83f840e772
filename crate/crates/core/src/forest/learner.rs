//! Split tests and their randomized sampling.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{LearnerFamily, LearnerSchedule, PipelineConfig};
use crate::data::Dataset;
use crate::error::Result;
use crate::gmm;
use crate::linalg::{from_row_major, GaussianFactor};
use crate::rng::RandomStream;

/// Largest feature subspace a linear or quadratic learner acts on.
pub const MAX_SUBSPACE: usize = 5;

/// A binary test on a feature vector. Output `true` routes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeakLearner {
    /// `x[feature] < threshold`.
    AxisAligned { feature: usize, threshold: f64 },
    /// `lower < direction · x[features] < upper`, with `‖direction‖ = 1`.
    Linear {
        features: Vec<usize>,
        direction: Vec<f64>,
        lower: f64,
        upper: f64,
    },
    /// `lower < zᵀ M z < upper` with `z = x[features] − center` and `M`
    /// symmetric (row-major, `p × p`).
    Quadratic {
        features: Vec<usize>,
        center: Vec<f64>,
        matrix: Vec<f64>,
        lower: f64,
        upper: f64,
    },
    /// Two Gaussians over `x[features]`; routes left when the first has the
    /// larger weighted density (ties go left).
    Gmm {
        features: Vec<usize>,
        weights: [f64; 2],
        means: [Vec<f64>; 2],
        covariances: [Vec<f64>; 2],
    },
}

impl WeakLearner {
    pub fn family(&self) -> LearnerFamily {
        match self {
            WeakLearner::AxisAligned { .. } => LearnerFamily::AxisAligned,
            WeakLearner::Linear { .. } => LearnerFamily::Linear,
            WeakLearner::Quadratic { .. } => LearnerFamily::Quadratic,
            WeakLearner::Gmm { .. } => LearnerFamily::Gmm,
        }
    }

    /// Largest feature index the learner reads.
    pub fn max_feature(&self) -> usize {
        match self {
            WeakLearner::AxisAligned { feature, .. } => *feature,
            WeakLearner::Linear { features, .. }
            | WeakLearner::Quadratic { features, .. }
            | WeakLearner::Gmm { features, .. } => features.iter().copied().max().unwrap_or(0),
        }
    }

    pub fn goes_left(&self, x: &[f64]) -> bool {
        match self {
            WeakLearner::AxisAligned { feature, threshold } => x[*feature] < *threshold,
            WeakLearner::Linear {
                features,
                direction,
                lower,
                upper,
            } => {
                let s = linear_score(x, features, direction);
                *lower < s && s < *upper
            }
            WeakLearner::Quadratic {
                features,
                center,
                matrix,
                lower,
                upper,
            } => {
                let s = quadratic_score(x, features, center, matrix);
                *lower < s && s < *upper
            }
            WeakLearner::Gmm {
                features,
                weights,
                means,
                covariances,
            } => {
                let z: Vec<f64> = features.iter().map(|&f| x[f]).collect();
                let p = features.len();
                let score = |k: usize| {
                    GaussianFactor::new(&means[k], &from_row_major(&covariances[k], p))
                        .map(|g| weights[k].ln() + g.log_pdf(&z))
                        .unwrap_or(f64::NEG_INFINITY)
                };
                score(0) >= score(1)
            }
        }
    }
}

fn linear_score(x: &[f64], features: &[usize], direction: &[f64]) -> f64 {
    features.iter().zip(direction).map(|(&f, w)| x[f] * w).sum()
}

fn quadratic_score(x: &[f64], features: &[usize], center: &[f64], matrix: &[f64]) -> f64 {
    let p = features.len();
    let mut s = 0.0;
    for a in 0..p {
        let za = x[features[a]] - center[a];
        for b in 0..p {
            s += za * matrix[a * p + b] * (x[features[b]] - center[b]);
        }
    }
    s
}

/// Draws one candidate test for a node holding the samples `idx`.
///
/// The family comes from `schedule` at `depth`. A linear, quadratic or
/// mixture candidate that degenerates on these samples falls back to an
/// axis-aligned test; `None` means no feature has any spread, so the node
/// cannot be split.
pub fn sample_weak_learner(
    ds: &Dataset,
    idx: &[usize],
    depth: usize,
    schedule: &LearnerSchedule,
    config: &PipelineConfig,
    rng: &mut RandomStream,
) -> Result<Option<WeakLearner>> {
    let learner = match schedule.family_at(depth) {
        LearnerFamily::AxisAligned => None,
        LearnerFamily::Linear => sample_linear(ds, idx, rng),
        LearnerFamily::Quadratic => sample_quadratic(ds, idx, rng),
        LearnerFamily::Gmm => sample_gmm(ds, idx, config, rng)?,
    };
    Ok(learner.or_else(|| sample_axis_aligned(ds, idx, rng)))
}

fn sample_axis_aligned(ds: &Dataset, idx: &[usize], rng: &mut RandomStream) -> Option<WeakLearner> {
    for _ in 0..ds.d() {
        let feature = rng.random_range(0..ds.d());
        let (lo, hi) = idx.iter().map(|&i| ds.row(i)[feature]).fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), v| (lo.min(v), hi.max(v)),
        );
        if hi > lo {
            return Some(WeakLearner::AxisAligned {
                feature,
                threshold: rng.random_range(lo..hi),
            });
        }
    }
    None
}

fn random_subspace(d: usize, rng: &mut RandomStream) -> Vec<usize> {
    let p = d.min(MAX_SUBSPACE);
    let mut features = index::sample(rng, d, p).into_vec();
    features.sort_unstable();
    features
}

fn sample_linear(ds: &Dataset, idx: &[usize], rng: &mut RandomStream) -> Option<WeakLearner> {
    let features = random_subspace(ds.d(), rng);
    let mut direction: Vec<f64> = features.iter().map(|_| rng.sample(StandardNormal)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    direction.iter_mut().for_each(|v| *v /= norm);
    let scores: Vec<f64> = idx
        .iter()
        .map(|&i| linear_score(ds.row(i), &features, &direction))
        .collect();
    let (lower, upper) = sample_band(scores, rng)?;
    Some(WeakLearner::Linear {
        features,
        direction,
        lower,
        upper,
    })
}

fn sample_quadratic(ds: &Dataset, idx: &[usize], rng: &mut RandomStream) -> Option<WeakLearner> {
    let features = random_subspace(ds.d(), rng);
    let p = features.len();
    let mut center = vec![0.0; p];
    for &i in idx {
        for (c, &f) in center.iter_mut().zip(&features) {
            *c += ds.row(i)[f];
        }
    }
    center.iter_mut().for_each(|c| *c /= idx.len() as f64);

    let raw: Vec<f64> = (0..p * p).map(|_| rng.sample(StandardNormal)).collect();
    let mut matrix = vec![0.0; p * p];
    for a in 0..p {
        for b in a..p {
            let v = 0.5 * (raw[a * p + b] + raw[b * p + a]);
            matrix[a * p + b] = v;
            matrix[b * p + a] = v;
        }
    }
    let norm = matrix.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    matrix.iter_mut().for_each(|v| *v /= norm);

    let scores: Vec<f64> = idx
        .iter()
        .map(|&i| quadratic_score(ds.row(i), &features, &center, &matrix))
        .collect();
    let (lower, upper) = sample_band(scores, rng)?;
    Some(WeakLearner::Quadratic {
        features,
        center,
        matrix,
        lower,
        upper,
    })
}

fn sample_gmm(
    ds: &Dataset,
    idx: &[usize],
    config: &PipelineConfig,
    rng: &mut RandomStream,
) -> Result<Option<WeakLearner>> {
    let features = random_subspace(ds.d(), rng);
    let sub = ds.select_rows(idx)?.select_features(&features)?;
    let em_config = PipelineConfig {
        num_clusters: 2,
        em_max_iter: config.em_max_iter.min(100),
        ..config.clone()
    };
    let Ok(fit) = gmm::fit_unconstrained(&sub, &em_config) else {
        return Ok(None);
    };
    let gm = fit.mixture;
    Ok(Some(WeakLearner::Gmm {
        features,
        weights: [gm.weights[0], gm.weights[1]],
        means: [gm.means[0].clone(), gm.means[1].clone()],
        covariances: [gm.covariances[0].clone(), gm.covariances[1].clone()],
    }))
}

/// Band `(lower, upper)` between two random order statistics of `scores`.
///
/// Both endpoints sit at midpoints between consecutive sorted scores at
/// interior cut positions, so the smallest and largest scores always fall
/// outside the band and at least one score falls inside.
fn sample_band(mut scores: Vec<f64>, rng: &mut RandomStream) -> Option<(f64, f64)> {
    let m = scores.len();
    if m < 3 {
        return None;
    }
    scores.sort_by(f64::total_cmp);
    if scores[0] == scores[m - 1] {
        return None;
    }
    // cut k lies between scores[k-1] and scores[k], k in 1..m
    let a = rng.random_range(1..m);
    let mut b = rng.random_range(1..m - 1);
    if b >= a {
        b += 1;
    }
    let (a, b) = (a.min(b), a.max(b));
    let lower = 0.5 * (scores[a - 1] + scores[a]);
    let upper = 0.5 * (scores[b - 1] + scores[b]);
    (lower < upper).then_some((lower, upper))
}
