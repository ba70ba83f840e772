//! Spectral clustering of an affinity matrix: symmetric normalized
//! Laplacian, its smallest eigenvectors, row normalization, then k-means.

use rand::Rng;
use rayon::prelude::*;

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SymMatrix {
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: values.len(),
            });
        }
        Ok(Self { n, values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// `L = I − D^{-1/2} A D^{-1/2}` with `d_i = Σ_j a_ij`, mirrored from the
/// upper triangle so it is exactly symmetric.
pub fn normalized_laplacian(a: &AffinityMatrix) -> SymMatrix {
    let n = a.n();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = a.row(i).iter().sum();
            if deg > 0.0 {
                1.0 / deg.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = -inv_sqrt[i] * a.get(i, j) * inv_sqrt[j];
            let v = if i == j { 1.0 + v } else { v };
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    SymMatrix { n, values }
}

/// Sweep limit for the Jacobi eigensolver.
pub const MAX_SWEEPS: usize = 100;
/// Off-diagonal Frobenius norm at which the Jacobi iteration stops.
pub const OFF_DIAGONAL_TOL: f64 = 1e-10;

/// Full eigendecomposition, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Round-robin ordering: `m - 1` rounds of disjoint pairs (`m` is `n`
/// rounded up to even) covering every `(p, q)` pair exactly once.
fn round_robin(n: usize) -> Vec<Vec<(usize, usize)>> {
    let m = n + n % 2;
    let mut players: Vec<usize> = (0..m).collect();
    let mut rounds = Vec::with_capacity(m.saturating_sub(1));
    for _ in 1..m {
        let pairs = (0..m / 2)
            .map(|i| (players[i], players[m - 1 - i]))
            .filter(|&(x, y)| x < n && y < n)
            .map(|(x, y)| (x.min(y), x.max(y)))
            .collect();
        rounds.push(pairs);
        players[1..].rotate_right(1);
    }
    rounds
}

#[derive(Clone, Copy)]
struct Rotation {
    p: usize,
    q: usize,
    c: f64,
    s: f64,
    app: f64,
    aqq: f64,
}

// below this size the rayon overhead outweighs the row work
const PARALLEL_MIN_N: usize = 128;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps visit the pairs in round-robin order: each round applies `n / 2`
/// disjoint rotations as one similarity transform, and each sweep rotates
/// every `(p, q)` pair once. Eigenvectors are returned with their
/// largest-magnitude entry positive.
pub fn jacobi_eigen(m: &SymMatrix) -> Result<Eigen> {
    let n = m.n();
    let mut a = m.values.clone();
    // eigenvectors stored as rows so rotations touch contiguous memory
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let rounds = round_robin(n);

    let mut sweeps = 0;
    loop {
        if off_diagonal_norm(&a, n) < OFF_DIAGONAL_TOL {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numerical(format!(
                "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        symmetrize(&mut a, n);
        for pairs in &rounds {
            let mut rotations = Vec::with_capacity(pairs.len());
            for &(p, q) in pairs {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                rotations.push(Rotation {
                    p,
                    q,
                    c,
                    s: t * c,
                    app: app - t * apq,
                    aqq: aqq + t * apq,
                });
            }
            if rotations.is_empty() {
                continue;
            }
            rotate_row_pairs(&mut a, n, &rotations);
            rotate_row_pairs(&mut v, n, &rotations);
            rotate_columns(&mut a, n, &rotations);
            for r in &rotations {
                a[r.p * n + r.p] = r.app;
                a[r.q * n + r.q] = r.aqq;
                a[r.p * n + r.q] = 0.0;
                a[r.q * n + r.p] = 0.0;
            }
        }
    }

    log::debug!("Jacobi on {n}×{n} converged after {sweeps} sweeps");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut vec = v[i * n..(i + 1) * n].to_vec();
            fix_sign(&mut vec);
            vec
        })
        .collect();
    Ok(Eigen {
        values,
        vectors,
        sweeps,
    })
}

// row and column passes round differently; keep the drift from piling up
fn symmetrize(a: &mut [f64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = m;
            a[j * n + i] = m;
        }
    }
}

fn rotate_pair(rp: &mut [f64], rq: &mut [f64], c: f64, s: f64) {
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Rows `p` and `q` of every rotation become `c·p − s·q` and `s·p + c·q`.
fn rotate_row_pairs(buf: &mut [f64], n: usize, rotations: &[Rotation]) {
    let mut rows: Vec<Option<&mut [f64]>> = buf.chunks_mut(n).map(Some).collect();
    let mut jobs: Vec<(&mut [f64], &mut [f64], f64, f64)> = rotations
        .iter()
        .map(|r| {
            let rp = rows[r.p].take().expect("rotations are disjoint");
            let rq = rows[r.q].take().expect("rotations are disjoint");
            (rp, rq, r.c, r.s)
        })
        .collect();
    if n >= PARALLEL_MIN_N {
        jobs.par_iter_mut().for_each(|(rp, rq, c, s)| rotate_pair(rp, rq, *c, *s));
    } else {
        jobs.iter_mut().for_each(|(rp, rq, c, s)| rotate_pair(rp, rq, *c, *s));
    }
}

/// Same transform applied to columns `p` and `q`, row by row.
fn rotate_columns(a: &mut [f64], n: usize, rotations: &[Rotation]) {
    let one_row = |row: &mut [f64]| {
        for r in rotations {
            let (x, y) = (row[r.p], row[r.q]);
            row[r.p] = r.c * x - r.s * y;
            row[r.q] = r.s * x + r.c * y;
        }
    };
    if n >= PARALLEL_MIN_N {
        a.par_chunks_mut(n).for_each(one_row);
    } else {
        a.chunks_mut(n).for_each(one_row);
    }
}

fn fix_sign(v: &mut [f64]) {
    let mut pivot = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// The `k` smallest eigenpairs: values ascending and an `n × k` row-major
/// matrix whose columns are the eigenvectors.
pub fn eigen_smallest(l: &SymMatrix, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = l.n();
    if k > n {
        return Err(Error::Config(format!("asked for {k} eigenpairs of a {n}×{n} matrix")));
    }
    if !l.is_symmetric() {
        return Err(Error::Numerical("matrix is not symmetric".into()));
    }
    let eig = jacobi_eigen(l)?;
    let mut vectors = vec![0.0; n * k];
    for (col, vec) in eig.vectors.iter().take(k).enumerate() {
        for (row, &x) in vec.iter().enumerate() {
            vectors[row * k + col] = x;
        }
    }
    Ok((eig.values[..k].to_vec(), vectors))
}

/// Spectral coordinates, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub n: usize,
    pub k: usize,
    pub values: Vec<f64>,
    pub row_normalized: bool,
}

impl Embedding {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    /// Scales every nonzero row to unit length.
    pub fn normalize_rows(&mut self) {
        let k = self.k;
        for row in self.values.chunks_exact_mut(k) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        self.row_normalized = true;
    }
}

pub fn spectral_embedding(a: &AffinityMatrix, k: usize) -> Result<Embedding> {
    let l = normalized_laplacian(a);
    let (_, vectors) = eigen_smallest(&l, k)?;
    let mut emb = Embedding {
        n: a.n(),
        k,
        values: vectors,
        row_normalized: false,
    };
    emb.normalize_rows();
    Ok(emb)
}

pub const KMEANS_RESTARTS: usize = 10;
pub const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances.
    pub wcss: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means over the rows of `points`: distance-proportional seeding,
/// Lloyd iterations to a fixed assignment, best of
/// [`KMEANS_RESTARTS`] runs by WCSS.
pub fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut RandomStream) -> Result<KMeansResult> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k-means needs 1 ≤ K ≤ n, got K = {k}, n = {n}")));
    }
    let mut best: Option<KMeansResult> = None;
    for _ in 0..KMEANS_RESTARTS {
        let run = kmeans_once(points, k, rng);
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut RandomStream) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[pick].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn kmeans_once(points: &[Vec<f64>], k: usize, rng: &mut RandomStream) -> KMeansResult {
    let n = points.len();
    let dim = points[0].len();
    let mut centroids = seed_centroids(points, k, rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();

    for _ in 0..KMEANS_MAX_ITER {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        // empty clusters restart at the point farthest from its centroid
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centroids[labels[a]])
                            .total_cmp(&sq_dist(&points[b], &centroids[labels[b]]))
                            .then(b.cmp(&a))
                    })
                    .expect("n ≥ 1");
                counts[labels[far]] -= 1;
                labels[far] = j;
                counts[j] = 1;
                centroids[j] = points[far].clone();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    let wcss = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum();
    KMeansResult {
        labels,
        centroids,
        wcss,
    }
}

/// Normalized Laplacian → `k` smallest eigenvectors → unit rows → k-means.
/// Rows of the embedding that are exactly zero are labelled 0 and left out
/// of k-means.
pub fn spectral_cluster(a: &AffinityMatrix, k: usize, rng: &mut RandomStream) -> Result<Vec<usize>> {
    let n = a.n();
    if k == 0 || k > n {
        return Err(Error::Config(format!("spectral clustering needs 1 ≤ K ≤ n, got K = {k}, n = {n}")));
    }
    let emb = spectral_embedding(a, k)?;
    let live: Vec<usize> = (0..n).filter(|&i| emb.row(i).iter().any(|&x| x != 0.0)).collect();
    let mut labels = vec![0; n];
    if live.is_empty() {
        return Ok(labels);
    }
    let points: Vec<Vec<f64>> = live.iter().map(|&i| emb.row(i).to_vec()).collect();
    let result = kmeans(&points, k.min(points.len()), rng)?;
    for (&i, &l) in live.iter().zip(&result.labels) {
        labels[i] = l;
    }
    Ok(labels)
}
