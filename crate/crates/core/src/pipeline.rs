//! End-to-end runs: synthetic data, forest, affinity, then either spectral
//! clustering or the forest-seeded constrained mixture.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::affinity::{build_affinity, AffinityMatrix};
use crate::config::{AffinityMode, PipelineConfig};
use crate::data::{standardize, Dataset};
use crate::dual::{mutual_exclusion, seed_constraints, threshold_filter, LatentConstraints};
use crate::error::{Error, Result};
use crate::forest::{train_forest, Forest};
use crate::gmm::{fit_em, EmFit};
use crate::linalg::{cholesky, from_row_major};
use crate::metrics::{accuracy, nmi};
use crate::rng::{RandomStream, KMEANS_STREAM, SYNTH_STREAM};
use crate::spectral::spectral_cluster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Binary,
    Uniform,
    Adaptive,
    Drfgmm,
    SpectralOnly,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Binary,
        Method::Uniform,
        Method::Adaptive,
        Method::Drfgmm,
        Method::SpectralOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Binary => "binary",
            Method::Uniform => "uniform",
            Method::Adaptive => "adaptive",
            Method::Drfgmm => "drfgmm",
            Method::SpectralOnly => "spectral-only",
        }
    }

    /// Affinity the method clusters on. DRFGMM and spectral-only follow
    /// `config.affinity_mode`.
    pub fn affinity_mode(self, config: &PipelineConfig) -> AffinityMode {
        match self {
            Method::Binary => AffinityMode::Binary,
            Method::Uniform => AffinityMode::Uniform,
            Method::Adaptive => AffinityMode::Adaptive,
            Method::Drfgmm | Method::SpectralOnly => config.affinity_mode,
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Gaussian clusters to sample from. Covariances are row-major `d × d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub counts: Vec<usize>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
}

impl Default for SynthSpec {
    /// Three overlapping 2D clusters of 175, 250 and 375 points.
    fn default() -> Self {
        Self {
            counts: vec![175, 250, 375],
            means: vec![vec![0.0, 0.0], vec![4.0, 0.0], vec![2.0, 3.5]],
            covariances: vec![
                vec![1.0, 0.0, 0.0, 1.0],
                vec![1.5, 0.0, 0.0, 1.5],
                vec![2.0, 0.5, 0.5, 1.0],
            ],
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<usize> {
        let k = self.counts.len();
        if k == 0 || self.means.len() != k || self.covariances.len() != k {
            return Err(Error::Config(
                "counts, means and covariances must be non-empty and of equal length".into(),
            ));
        }
        let d = self.means[0].len();
        if d == 0 || self.means.iter().any(|m| m.len() != d) {
            return Err(Error::Config("all means must share one positive dimension".into()));
        }
        if self.covariances.iter().any(|c| c.len() != d * d) {
            return Err(Error::Config(format!("each covariance needs {} entries", d * d)));
        }
        if self.counts.iter().sum::<usize>() == 0 {
            return Err(Error::Config("at least one sample is required".into()));
        }
        Ok(d)
    }
}

/// Draws `counts[c]` samples from `N(means[c], covariances[c])` for each
/// cluster in order, labelled `c`. Uses stream `SYNTH_STREAM` of `seed`.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    let d = spec.validate()?;
    let mut rng = RandomStream::new(seed, SYNTH_STREAM);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (c, ((&count, mean), cov)) in spec.counts.iter().zip(&spec.means).zip(&spec.covariances).enumerate() {
        let m = from_row_major(cov, d);
        if (0..d).any(|i| (0..i).any(|j| m[(i, j)] != m[(j, i)])) {
            return Err(Error::Config(format!("covariance {c} is not symmetric")));
        }
        let l = cholesky(&m).map_err(|_| Error::Config(format!("covariance {c} is not positive definite")))?;
        for _ in 0..count {
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            for i in 0..d {
                features.push(mean[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>());
            }
            labels.push(c);
        }
    }
    let n = labels.len();
    // empty clusters leave gaps in the label range
    let mut present: Vec<usize> = labels.clone();
    present.dedup();
    let labels = labels
        .iter()
        .map(|l| present.binary_search(l).expect("label present"))
        .collect();
    Dataset::new(features, n, d, Some(labels))
}

/// Min-max scaling when `scale` is set, otherwise a copy.
pub fn prepare(ds: &Dataset, scale: bool) -> Dataset {
    if scale {
        standardize(ds)
    } else {
        ds.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Percent.
    pub acc: f64,
    pub nmi: f64,
}

pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<Metrics> {
    Ok(Metrics {
        acc: accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
    })
}

/// Wall time per stage, in seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub forest: f64,
    pub affinity: f64,
    pub clustering: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_log_likelihood: f64,
    pub collapse_events: usize,
    pub num_fixed: usize,
    pub fixed_per_component: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub scaled: bool,
    pub data_digest: String,
    pub config: PipelineConfig,
    /// Present when ground-truth labels are available.
    pub metrics: Option<Metrics>,
    pub em: Option<EmSummary>,
    pub times: StageTimes,
}

impl RunReport {
    pub fn acc(&self) -> Option<f64> {
        self.metrics.map(|m| m.acc)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub labels: Vec<usize>,
    pub report: RunReport,
    pub forest: Option<Forest>,
    pub affinity: AffinityMatrix,
    pub constraints: Option<LatentConstraints>,
    pub em: Option<EmFit>,
}

/// SHA-256 over the shape, feature bits and labels of a dataset.
pub fn data_digest(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update((ds.n() as u64).to_le_bytes());
    h.update((ds.d() as u64).to_le_bytes());
    for v in ds.features() {
        h.update(v.to_bits().to_le_bytes());
    }
    match ds.labels() {
        Some(labels) => {
            h.update([1u8]);
            for &l in labels {
                h.update((l as u64).to_le_bytes());
            }
        }
        None => h.update([0u8]),
    }
    hex::encode(h.finalize())
}

/// Directory name for a run: the method followed by the first 16 hex digits
/// of a hash over the config, the data digest and the seed.
pub fn run_dir_name(method: Method, config: &PipelineConfig, digest: &str) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config)?);
    h.update(digest.as_bytes());
    h.update(config.seed.to_le_bytes());
    let hash = hex::encode(h.finalize());
    Ok(format!("{}-{}", method.name(), &hash[..16]))
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Gates `a` into seed constraints and fits the constrained mixture.
pub fn dual_stage(ds: &Dataset, a: &AffinityMatrix, config: &PipelineConfig) -> Result<(LatentConstraints, EmFit)> {
    let filtered = threshold_filter(a, config.threshold);
    let seeds = seed_constraints(&filtered, config.num_clusters, config.min_component_for(ds.n()))?;
    let constraints = mutual_exclusion(&filtered, &seeds);
    log::info!(
        "dual stage: {} of {} samples fixed, per component {:?}",
        constraints.num_fixed(),
        ds.n(),
        constraints.counts()
    );
    let em = fit_em(ds, &constraints, config)?;
    Ok((constraints, em))
}

/// Runs one method end to end on already prepared data.
///
/// `scaled` is only recorded in the report.
pub fn run(ds: &Dataset, method: Method, config: &PipelineConfig, scaled: bool) -> Result<RunOutput> {
    config.validate()?;
    if config.num_clusters > ds.n() {
        return Err(Error::Config(format!(
            "num_clusters {} exceeds the {} samples",
            config.num_clusters,
            ds.n()
        )));
    }
    let start = Instant::now();
    let mut times = StageTimes::default();

    let t = Instant::now();
    let forest = train_forest(ds, config)?;
    times.forest = secs(t);

    let t = Instant::now();
    let affinity = build_affinity(&forest, ds, method.affinity_mode(config))?;
    times.affinity = secs(t);

    let t = Instant::now();
    let (labels, constraints, em) = if method == Method::Drfgmm {
        let (constraints, em) = dual_stage(ds, &affinity, config)?;
        (em.labels.clone(), Some(constraints), Some(em))
    } else {
        let mut rng = RandomStream::new(config.seed, KMEANS_STREAM);
        (spectral_cluster(&affinity, config.num_clusters, &mut rng)?, None, None)
    };
    times.clustering = secs(t);
    times.total = secs(start);

    let metrics = ds.labels().map(|truth| evaluate(&labels, truth)).transpose()?;
    let em_summary = em.as_ref().zip(constraints.as_ref()).map(|(em, c)| EmSummary {
        iterations: em.iterations,
        converged: em.converged,
        final_log_likelihood: em.final_log_likelihood(),
        collapse_events: em.collapse_events,
        num_fixed: c.num_fixed(),
        fixed_per_component: c.counts(),
    });
    let report = RunReport {
        method,
        seed: config.seed,
        n: ds.n(),
        d: ds.d(),
        scaled,
        data_digest: data_digest(ds),
        config: config.clone(),
        metrics,
        em: em_summary,
        times,
    };
    Ok(RunOutput {
        labels,
        report,
        forest: Some(forest),
        affinity,
        constraints,
        em,
    })
}

/// Spectral clustering of a precomputed affinity. `truth`, when given,
/// fills in the report metrics.
pub fn run_spectral_only(a: &AffinityMatrix, config: &PipelineConfig, truth: Option<&[usize]>) -> Result<RunOutput> {
    config.validate()?;
    a.check_invariants()?;
    if config.num_clusters > a.n() {
        return Err(Error::Config(format!(
            "num_clusters {} exceeds the {} samples",
            config.num_clusters,
            a.n()
        )));
    }
    let start = Instant::now();
    let mut rng = RandomStream::new(config.seed, KMEANS_STREAM);
    let labels = spectral_cluster(a, config.num_clusters, &mut rng)?;
    let clustering = secs(start);
    let metrics = truth.map(|t| evaluate(&labels, t)).transpose()?;
    let mut h = Sha256::new();
    for v in a.values() {
        h.update(v.to_bits().to_le_bytes());
    }
    let report = RunReport {
        method: Method::SpectralOnly,
        seed: config.seed,
        n: a.n(),
        d: 0,
        scaled: false,
        data_digest: hex::encode(h.finalize()),
        config: config.clone(),
        metrics,
        em: None,
        times: StageTimes {
            clustering,
            total: clustering,
            ..StageTimes::default()
        },
    };
    Ok(RunOutput {
        labels,
        report,
        forest: None,
        affinity: a.clone(),
        constraints: None,
        em: None,
    })
}

/// One label per line.
pub fn write_labels(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in labels {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads the last column of every row as a non-negative integer label, so
/// both label files and labelled data files are accepted.
pub fn read_labels(path: impl AsRef<Path>, has_header: bool) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let Some(cell) = record.iter().next_back().filter(|c| !c.is_empty()) else {
            continue;
        };
        let v: f64 = cell.parse().map_err(|_| Error::Parse {
            line,
            message: format!("cannot parse label {cell:?}"),
        })?;
        if !(v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64) {
            return Err(Error::Parse {
                line,
                message: format!("label {cell} is not a non-negative integer"),
            });
        }
        labels.push(v as usize);
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(labels)
}

/// Writes every artifact of a run into `dir` (created if missing) and
/// returns the paths written.
pub fn write_artifacts(out: &RunOutput, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut path = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    write_labels(&out.labels, path("labels.csv"))?;
    out.affinity.save(path("affinity.bin"))?;
    if let Some(forest) = &out.forest {
        forest.save_json(path("forest.json"))?;
    }
    if let Some(c) = &out.constraints {
        c.save_json(path("constraints.json"))?;
    }
    if let Some(em) = &out.em {
        em.mixture.save_json(path("mixture.json"))?;
        let p = path("trace.csv");
        let file = File::create(&p).map_err(|e| Error::io(&p, e))?;
        let mut w = BufWriter::new(file);
        em.write_trace_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&p, e))?;
    }
    out.report.save_json(path("report.json"))?;
    Ok(written)
}
