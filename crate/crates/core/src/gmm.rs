//! Gaussian mixture fitted by EM, with latent assignments that may be
//! partly fixed in advance.
//!
//! A fixed sample's responsibility row is one-hot on its component no
//! matter what the current densities say; free samples get ordinary
//! posteriors. The M-step then treats both kinds of row alike. The objective
//! that EM climbs under these constraints is
//!
//! ```text
//! Σ_free ln Σ_j ε_j N(x_i | μ_j, Σ_j)  +  Σ_fixed ln(ε_c N(x_i | μ_c, Σ_c))
//! ```
//!
//! which is what [`EmFit::trace`] records.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::data::Dataset;
use crate::dual::{Latent, LatentConstraints};
use crate::error::{Error, Result};
use crate::linalg::{
    add_ridge, from_row_major, log_sum_exp, mean_and_covariance, to_row_major, GaussianFactor,
};

/// Column sum below which a component counts as collapsed.
pub const COLLAPSE_MASS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major `d × d` per component.
    pub covariances: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let (k, d) = (self.k(), self.dim());
        if k == 0 || d == 0 {
            return Err(Error::Data("mixture has no components".into()));
        }
        if self.means.len() != k || self.covariances.len() != k {
            return Err(Error::Data("mixture parameter lengths disagree".into()));
        }
        if self.means.iter().any(|m| m.len() != d) || self.covariances.iter().any(|c| c.len() != d * d) {
            return Err(Error::Data("mixture parameter shapes disagree".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Data("negative mixture weight".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!("mixture weights sum to {total}")));
        }
        Ok(())
    }

    fn factors(&self) -> Result<Vec<GaussianFactor>> {
        let d = self.dim();
        self.means
            .iter()
            .zip(&self.covariances)
            .map(|(m, c)| GaussianFactor::new(m, &from_row_major(c, d)))
            .collect()
    }

    /// Same mixture with components reordered: new component `j` is old
    /// component `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            weights: perm.iter().map(|&j| self.weights[j]).collect(),
            means: perm.iter().map(|&j| self.means[j].clone()).collect(),
            covariances: perm.iter().map(|&j| self.covariances[j].clone()).collect(),
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let gm: Self = serde_json::from_reader(BufReader::new(file))?;
        gm.validate()?;
        Ok(gm)
    }
}

/// Multivariate normal density, evaluated in log space.
pub fn gaussian_pdf(x: &[f64], mean: &[f64], covariance: &[f64]) -> Result<f64> {
    let d = mean.len();
    if x.len() != d || covariance.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let g = GaussianFactor::new(mean, &from_row_major(covariance, d))?;
    Ok(g.log_pdf(x).exp())
}

/// `Σ_j ε_j N(x; μ_j, Σ_j)`.
pub fn mixture_density(gm: &GaussianMixture, x: &[f64]) -> Result<f64> {
    if x.len() != gm.dim() {
        return Err(Error::DimensionMismatch {
            expected: gm.dim(),
            got: x.len(),
        });
    }
    let factors = gm.factors()?;
    let logs: Vec<f64> = factors
        .iter()
        .zip(&gm.weights)
        .map(|(g, w)| w.ln() + g.log_pdf(x))
        .collect();
    Ok(log_sum_exp(&logs).exp())
}

/// Row-major `n × K` responsibilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    pub fn from_values(n: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * k {
            return Err(Error::DimensionMismatch {
                expected: n * k,
                got: values.len(),
            });
        }
        Ok(Self { n, k, values })
    }

    /// One-hot rows from hard labels.
    pub fn one_hot(labels: &[usize], k: usize) -> Result<Self> {
        let mut values = vec![0.0; labels.len() * k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::Data(format!("label {l} out of range for K = {k}")));
            }
            values[i * k + l] = 1.0;
        }
        Ok(Self {
            n: labels.len(),
            k,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Per-row argmax, ties to the lowest component.
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.n)
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Output of one E-step.
#[derive(Debug, Clone)]
pub struct EStep {
    pub responsibilities: Responsibilities,
    /// Constrained log-likelihood of the mixture that was evaluated.
    pub log_likelihood: f64,
    /// Free samples whose component densities all underflowed.
    pub underflow_rows: usize,
}

fn check_inputs(ds: &Dataset, gm: &GaussianMixture, constraints: &LatentConstraints) -> Result<()> {
    if ds.d() != gm.dim() {
        return Err(Error::DimensionMismatch {
            expected: gm.dim(),
            got: ds.d(),
        });
    }
    if constraints.k() != gm.k() {
        return Err(Error::Config(format!(
            "constraints are for K = {}, mixture has K = {}",
            constraints.k(),
            gm.k()
        )));
    }
    if constraints.len() != ds.n() {
        return Err(Error::DimensionMismatch {
            expected: ds.n(),
            got: constraints.len(),
        });
    }
    Ok(())
}

/// Posterior responsibilities; fixed samples get one-hot rows.
pub fn e_step(ds: &Dataset, gm: &GaussianMixture, constraints: &LatentConstraints) -> Result<Responsibilities> {
    e_step_full(ds, gm, constraints).map(|e| e.responsibilities)
}

pub fn e_step_full(ds: &Dataset, gm: &GaussianMixture, constraints: &LatentConstraints) -> Result<EStep> {
    check_inputs(ds, gm, constraints)?;
    let k = gm.k();
    let factors = gm.factors()?;
    let log_weights: Vec<f64> = gm.weights.iter().map(|w| w.ln()).collect();

    let rows: Vec<(Vec<f64>, f64, bool)> = (0..ds.n())
        .into_par_iter()
        .map(|i| {
            let x = ds.row(i);
            let logs: Vec<f64> = factors
                .iter()
                .zip(&log_weights)
                .map(|(g, lw)| lw + g.log_pdf(x))
                .collect();
            match constraints.get(i) {
                Latent::Fixed(c) => {
                    let mut row = vec![0.0; k];
                    row[c] = 1.0;
                    (row, logs[c], false)
                }
                Latent::Free => {
                    let total = log_sum_exp(&logs);
                    if total == f64::NEG_INFINITY || total.is_nan() {
                        (vec![1.0 / k as f64; k], f64::NEG_INFINITY, true)
                    } else {
                        let mut row: Vec<f64> = logs.iter().map(|l| (l - total).exp()).collect();
                        let s: f64 = row.iter().sum();
                        row.iter_mut().for_each(|v| *v /= s);
                        (row, total, false)
                    }
                }
            }
        })
        .collect();

    let mut values = Vec::with_capacity(ds.n() * k);
    let mut log_likelihood = 0.0;
    let mut underflow_rows = 0;
    for (row, ll, underflow) in rows {
        values.extend(row);
        log_likelihood += ll;
        underflow_rows += usize::from(underflow);
    }
    if underflow_rows > 0 {
        warn!("{underflow_rows} free samples underflowed in every component; given uniform rows");
    }
    Ok(EStep {
        responsibilities: Responsibilities {
            n: ds.n(),
            k,
            values,
        },
        log_likelihood,
        underflow_rows,
    })
}

/// Weighted maximum-likelihood update: `ε_j = N_j / n`, responsibility
/// weighted means, and biased weighted covariances plus `reg·I`.
///
/// A component whose mass falls below [`COLLAPSE_MASS`] is restarted at the
/// sample with the smallest maximum responsibility, with the pooled
/// covariance and weight `1/n`.
pub fn m_step(ds: &Dataset, r: &Responsibilities, reg: f64) -> Result<GaussianMixture> {
    m_step_counted(ds, r, reg).map(|(gm, _)| gm)
}

fn m_step_counted(ds: &Dataset, r: &Responsibilities, reg: f64) -> Result<(GaussianMixture, usize)> {
    if r.n() != ds.n() {
        return Err(Error::DimensionMismatch {
            expected: ds.n(),
            got: r.n(),
        });
    }
    let (n, d, k) = (ds.n(), ds.d(), r.k());
    let mut weights = vec![0.0; k];
    let mut means = vec![vec![0.0; d]; k];
    let mut covariances = vec![vec![0.0; d * d]; k];
    let mut collapsed = Vec::new();

    for j in 0..k {
        let mass: f64 = (0..n).map(|i| r.row(i)[j]).sum();
        if mass < COLLAPSE_MASS {
            collapsed.push(j);
            continue;
        }
        let mean = &mut means[j];
        for i in 0..n {
            let w = r.row(i)[j];
            if w != 0.0 {
                for (m, x) in mean.iter_mut().zip(ds.row(i)) {
                    *m += w * x;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= mass);

        let cov = &mut covariances[j];
        let mut centered = vec![0.0; d];
        for i in 0..n {
            let w = r.row(i)[j];
            if w == 0.0 {
                continue;
            }
            for (c, (x, m)) in centered.iter_mut().zip(ds.row(i).iter().zip(mean.iter())) {
                *c = x - m;
            }
            for a in 0..d {
                for b in a..d {
                    cov[a * d + b] += w * centered[a] * centered[b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[a * d + b] / mass;
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
            cov[a * d + a] += reg;
        }
        weights[j] = mass / n as f64;
    }

    if !collapsed.is_empty() {
        let rows: Vec<&[f64]> = ds.rows().collect();
        let (_, mut pooled) = mean_and_covariance(&rows, d, false);
        add_ridge(&mut pooled, reg);
        let pooled = to_row_major(&pooled);
        let mut order: Vec<usize> = (0..n).collect();
        let max_resp = |i: usize| r.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        order.sort_by(|&a, &b| max_resp(a).total_cmp(&max_resp(b)).then(a.cmp(&b)));
        for (slot, &j) in collapsed.iter().enumerate() {
            let i = order[slot % n];
            warn!("component {j} collapsed; restarting it at sample {i}");
            means[j] = ds.row(i).to_vec();
            covariances[j] = pooled.clone();
            weights[j] = 1.0 / n as f64;
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
    }

    Ok((
        GaussianMixture {
            weights,
            means,
            covariances,
        },
        collapsed.len(),
    ))
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub mixture: GaussianMixture,
    pub responsibilities: Responsibilities,
    pub labels: Vec<usize>,
    /// Constrained log-likelihood before each M-step, plus the final value.
    pub trace: Vec<f64>,
    /// Number of M-steps performed.
    pub iterations: usize,
    pub converged: bool,
    pub collapse_events: usize,
}

impl EmFit {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }

    /// `iteration,logL` rows with a header line.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,logL")?;
        for (i, ll) in self.trace.iter().enumerate() {
            writeln!(w, "{i},{ll}")?;
        }
        w.flush()
    }
}

/// Starting mixture from the constraints.
///
/// Seeded components take the statistics of their fixed samples. The
/// remaining components are placed by farthest-point selection over the
/// free samples (the first one farthest from the data mean when nothing is
/// seeded) and share the pooled covariance. Weights are
/// `(fixed_j + free / K) / n`.
pub fn initial_mixture(ds: &Dataset, constraints: &LatentConstraints, reg: f64) -> Result<GaussianMixture> {
    let (n, d, k) = (ds.n(), ds.d(), constraints.k());
    if constraints.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: constraints.len(),
        });
    }
    let counts = constraints.counts();
    let free: Vec<usize> = (0..n).filter(|&i| constraints.get(i) == Latent::Free).collect();
    let unseeded = counts.iter().filter(|&&c| c == 0).count();
    if unseeded > free.len() {
        return Err(Error::Config(format!(
            "{unseeded} components have no fixed samples but only {} samples are free",
            free.len()
        )));
    }

    let all: Vec<&[f64]> = ds.rows().collect();
    let (global_mean, mut pooled) = mean_and_covariance(&all, d, false);
    add_ridge(&mut pooled, reg);
    let pooled = to_row_major(&pooled);

    let mut means: Vec<Option<Vec<f64>>> = vec![None; k];
    let mut covariances = vec![pooled.clone(); k];
    for j in 0..k {
        if counts[j] == 0 {
            continue;
        }
        let rows: Vec<&[f64]> = (0..n)
            .filter(|&i| constraints.get(i) == Latent::Fixed(j))
            .map(|i| ds.row(i))
            .collect();
        let (mean, mut cov) = mean_and_covariance(&rows, d, false);
        add_ridge(&mut cov, reg);
        means[j] = Some(mean);
        if rows.len() > 1 {
            covariances[j] = to_row_major(&cov);
        }
    }

    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    for j in 0..k {
        if means[j].is_some() {
            continue;
        }
        let placed: Vec<&Vec<f64>> = means.iter().flatten().collect();
        let score = |i: usize| {
            if placed.is_empty() {
                sq(ds.row(i), &global_mean)
            } else {
                placed
                    .iter()
                    .map(|m| sq(ds.row(i), m))
                    .fold(f64::INFINITY, f64::min)
            }
        };
        let mut best = free[0];
        let mut best_score = score(best);
        for &i in &free[1..] {
            let s = score(i);
            if s > best_score {
                best = i;
                best_score = s;
            }
        }
        means[j] = Some(ds.row(best).to_vec());
    }

    let share = free.len() as f64 / k as f64;
    let weights = counts.iter().map(|&c| (c as f64 + share) / n as f64).collect();
    Ok(GaussianMixture {
        weights,
        means: means.into_iter().map(|m| m.expect("all components placed")).collect(),
        covariances,
    })
}

/// Constrained EM started from [`initial_mixture`].
pub fn fit_em(ds: &Dataset, constraints: &LatentConstraints, config: &PipelineConfig) -> Result<EmFit> {
    let k = constraints.k();
    if k == 0 {
        return Err(Error::Config("K must be positive".into()));
    }
    if k > ds.n() {
        return Err(Error::Config(format!(
            "K = {k} exceeds the number of samples ({})",
            ds.n()
        )));
    }
    let init = initial_mixture(ds, constraints, config.cov_regularizer)?;
    fit_em_from(ds, constraints, init, config)
}

/// Plain EM with no fixed samples and `config.num_clusters` components.
pub fn fit_unconstrained(ds: &Dataset, config: &PipelineConfig) -> Result<EmFit> {
    fit_em(ds, &LatentConstraints::all_free(ds.n(), config.num_clusters), config)
}

/// Constrained EM from an explicit starting mixture. Stops when
/// `|ΔlogL| < em_tol · |logL|` or after `em_max_iter` M-steps.
pub fn fit_em_from(
    ds: &Dataset,
    constraints: &LatentConstraints,
    init: GaussianMixture,
    config: &PipelineConfig,
) -> Result<EmFit> {
    check_inputs(ds, &init, constraints)?;
    let reg = config.cov_regularizer;
    let mut gm = init;
    let mut trace = Vec::new();
    let mut collapse_events = 0;
    let mut iterations = 0;
    let mut converged = false;

    let mut e = e_step_full(ds, &gm, constraints)?;
    trace.push(e.log_likelihood);
    while iterations < config.em_max_iter {
        let (next, collapsed) = m_step_counted(ds, &e.responsibilities, reg)?;
        collapse_events += collapsed;
        gm = next;
        iterations += 1;
        let prev = e.log_likelihood;
        e = e_step_full(ds, &gm, constraints)?;
        trace.push(e.log_likelihood);
        let ll = e.log_likelihood;
        if collapsed == 0 && ll.is_finite() && (ll - prev).abs() < config.em_tol * ll.abs() {
            converged = true;
            break;
        }
    }
    debug!(
        "EM stopped after {iterations} iterations (converged: {converged}), logL = {}",
        e.log_likelihood
    );
    let labels = e.responsibilities.hard_labels();
    Ok(EmFit {
        mixture: gm,
        responsibilities: e.responsibilities,
        labels,
        trace,
        iterations,
        converged,
        collapse_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    #[test]
    fn pdf_examples() {
        assert!((gaussian_pdf(&[0.0], &[0.0], &[1.0]).unwrap() - INV_SQRT_2PI).abs() < 1e-15);
        let v = gaussian_pdf(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((v - 0.159_154_943_091_895_34).abs() < 1e-15);
        let v = gaussian_pdf(&[3.0], &[1.0], &[1.0]).unwrap();
        assert!((v - INV_SQRT_2PI * (-2f64).exp()).abs() < 1e-15);
        assert!((v - 0.053_991_0).abs() < 1e-7);
        assert!(gaussian_pdf(&[0.0], &[0.0], &[-1.0]).is_err());
    }

    fn mixture_1d(weights: &[f64], means: &[f64], vars: &[f64]) -> GaussianMixture {
        GaussianMixture {
            weights: weights.to_vec(),
            means: means.iter().map(|&m| vec![m]).collect(),
            covariances: vars.iter().map(|&v| vec![v]).collect(),
        }
    }

    #[test]
    fn e_step_examples() {
        let ds = Dataset::new(vec![0.0, 1.0, 7.0], 3, 1, None).unwrap();
        let gm = mixture_1d(&[0.5, 0.5], &[-2.0, 2.0], &[1.0, 1.0]);
        let mut tags = vec![Latent::Free; 3];
        tags[2] = Latent::Fixed(0);
        let c = LatentConstraints::new(tags, 2).unwrap();
        let r = e_step(&ds, &gm, &c).unwrap();
        assert_eq!(r.row(0), &[0.5, 0.5]);
        assert_eq!(r.row(2), &[1.0, 0.0]);

        // means (0, 4), x = 1: log-odds = (−½·1) − (−½·9) = 4
        let ds = Dataset::new(vec![1.0], 1, 1, None).unwrap();
        let gm = mixture_1d(&[0.5, 0.5], &[0.0, 4.0], &[1.0, 1.0]);
        let r = e_step(&ds, &gm, &LatentConstraints::all_free(1, 2)).unwrap();
        let expect = 1.0 / (1.0 + (-4f64).exp());
        assert!((r.row(0)[0] - expect).abs() < 1e-15);
        assert!((r.row(0)[0] - 0.982_013_790_037_908_5).abs() < 1e-12);
    }

    #[test]
    fn underflow_gives_uniform_row() {
        let ds = Dataset::new(vec![1e200], 1, 1, None).unwrap();
        let gm = mixture_1d(&[0.5, 0.5], &[0.0, 1.0], &[1.0, 1.0]);
        let e = e_step_full(&ds, &gm, &LatentConstraints::all_free(1, 2)).unwrap();
        assert_eq!(e.responsibilities.row(0), &[0.5, 0.5]);
        assert_eq!(e.underflow_rows, 1);
    }

    #[test]
    fn m_step_single_component_is_sample_statistics() {
        let ds = Dataset::from_rows(&[vec![0.0, 1.0], vec![2.0, 5.0], vec![4.0, 0.0]], None).unwrap();
        let r = Responsibilities::one_hot(&[0, 0, 0], 1).unwrap();
        let gm = m_step(&ds, &r, 1e-6).unwrap();
        assert_eq!(gm.weights, vec![1.0]);
        assert_eq!(gm.means[0], vec![2.0, 2.0]);
        let c = &gm.covariances[0];
        assert!((c[0] - (8.0 / 3.0 + 1e-6)).abs() < 1e-12);
        assert!((c[1] - (-2.0 / 3.0)).abs() < 1e-12);
        assert!((c[3] - (14.0 / 3.0 + 1e-6)).abs() < 1e-12);
    }

    #[test]
    fn m_step_uniform_responsibilities_give_identical_components() {
        let ds = Dataset::new(vec![0.0, 1.0, 5.0, 6.0], 4, 1, None).unwrap();
        let r = Responsibilities::from_values(4, 2, vec![0.5; 8]).unwrap();
        let gm = m_step(&ds, &r, 1e-6).unwrap();
        assert_eq!(gm.means[0], vec![3.0]);
        assert_eq!(gm.means[1], vec![3.0]);
        assert_eq!(gm.covariances[0], gm.covariances[1]);
        assert_eq!(gm.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn collapsed_component_is_restarted() {
        let ds = Dataset::new(vec![0.0, 1.0, 2.0], 3, 1, None).unwrap();
        let r = Responsibilities::one_hot(&[0, 0, 0], 2).unwrap();
        let (gm, collapsed) = m_step_counted(&ds, &r, 1e-6).unwrap();
        assert_eq!(collapsed, 1);
        assert_eq!(gm.k(), 2);
        assert!((gm.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(gm.weights[1] > 0.0);
        // every max-responsibility is 1, so the lowest index is restarted on
        assert_eq!(gm.means[1], vec![0.0]);
    }

    #[test]
    fn mixture_density_examples() {
        let single = mixture_1d(&[1.0], &[0.5], &[2.0]);
        let x = [1.7];
        let a = mixture_density(&single, &x).unwrap();
        let b = gaussian_pdf(&x, &[0.5], &[2.0]).unwrap();
        assert!((a - b).abs() < 1e-16);

        let dup = mixture_1d(&[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0]);
        for x in [-2.0, 0.0, 0.3, 4.0] {
            let v = mixture_density(&dup, &[x]).unwrap();
            let e = INV_SQRT_2PI * (-0.5 * x * x).exp();
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn all_fixed_converges_immediately() {
        let ds = Dataset::new(vec![0.0, 0.5, 1.0, 8.0, 9.0, 9.5], 6, 1, None).unwrap();
        let labels = [0, 0, 0, 1, 1, 1];
        let tags = labels.iter().map(|&l| Latent::Fixed(l)).collect();
        let c = LatentConstraints::new(tags, 2).unwrap();
        let fit = fit_em(&ds, &c, &PipelineConfig::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.iterations, 1);
        let expect = m_step(&ds, &Responsibilities::one_hot(&labels, 2).unwrap(), 1e-6).unwrap();
        assert_eq!(fit.mixture, expect);
        assert_eq!(fit.labels, labels);
    }

    #[test]
    fn recovers_separated_clusters() {
        let mut rng = RandomStream::new(11, 0);
        let mut xs = Vec::new();
        for c in 0..2 {
            for _ in 0..100 {
                xs.push(10.0 * c as f64 + rng.sample::<f64, _>(StandardNormal));
            }
        }
        let ds = Dataset::new(xs.clone(), 200, 1, None).unwrap();
        let cfg = PipelineConfig {
            num_clusters: 2,
            ..PipelineConfig::default()
        };
        let fit = fit_unconstrained(&ds, &cfg).unwrap();
        let mut fitted: Vec<f64> = fit.mixture.means.iter().map(|m| m[0]).collect();
        fitted.sort_by(f64::total_cmp);
        let truth = [
            xs[..100].iter().sum::<f64>() / 100.0,
            xs[100..].iter().sum::<f64>() / 100.0,
        ];
        assert!((fitted[0] - truth[0]).abs() < 0.1);
        assert!((fitted[1] - truth[1]).abs() < 0.1);
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
    }

    #[test]
    fn too_many_components_rejected() {
        let ds = Dataset::new(vec![0.0, 1.0], 2, 1, None).unwrap();
        let c = LatentConstraints::all_free(2, 3);
        assert!(matches!(fit_em(&ds, &c, &PipelineConfig::default()), Err(Error::Config(_))));
    }
}
