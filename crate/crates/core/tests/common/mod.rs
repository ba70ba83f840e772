//! Independent reference computations used as oracles by the integration
//! tests. Nothing here calls into the library's numerical code.

#![allow(dead_code)]

use forestmix::forest::{Node, Tree};
use forestmix::{Dataset, RandomStream};
use rand::Rng;
use rand_distr::StandardNormal;

/// Column means and the covariance of `rows`, divided by `n - 1` when
/// `unbiased`, else by `n`.
pub fn covariance(rows: &[Vec<f64>], unbiased: bool) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            mean[j] += r[j];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]);
            }
        }
    }
    let div = if unbiased { n as f64 - 1.0 } else { n as f64 };
    for row in &mut cov {
        for v in row.iter_mut() {
            *v /= div;
        }
    }
    (mean, cov)
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    det
}

pub fn add_ridge(m: &[Vec<f64>], ridge: f64) -> Vec<Vec<f64>> {
    let mut out = m.to_vec();
    for (i, row) in out.iter_mut().enumerate() {
        row[i] += ridge;
    }
    out
}

/// Gaussian density via the explicit inverse of a small matrix.
pub fn normal_pdf(x: &[f64], mean: &[f64], cov: &[Vec<f64>]) -> f64 {
    let d = x.len();
    let inv = inverse(cov);
    let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let mut q = 0.0;
    for a in 0..d {
        for b in 0..d {
            q += diff[a] * inv[a][b] * diff[b];
        }
    }
    (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(d as i32) * determinant(cov)).sqrt()
}

/// Gauss-Jordan inverse.
pub fn inverse(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(pivot, col);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                let pivot_row = a[col].clone();
                for (v, pv) in a[r].iter_mut().zip(pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Minimum total cost of a one-to-one assignment of `min(rows, cols)` pairs,
/// by trying every injection.
pub fn brute_force_assignment(cost: &[f64], rows: usize, cols: usize) -> f64 {
    fn go(cost: &[f64], rows: usize, cols: usize, r: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if r == rows {
            *best = best.min(acc);
            return;
        }
        for c in 0..cols {
            if !used[c] {
                used[c] = true;
                go(cost, rows, cols, r + 1, used, acc + cost[r * cols + c], best);
                used[c] = false;
            }
        }
    }
    if rows > cols {
        let t: Vec<f64> = (0..cols)
            .flat_map(|c| (0..rows).map(move |r| cost[r * cols + c]))
            .collect();
        return brute_force_assignment(&t, cols, rows);
    }
    let mut best = f64::INFINITY;
    go(cost, rows, cols, 0, &mut vec![false; cols], 0.0, &mut best);
    best
}

/// Best matched fraction over every injection of predicted labels into
/// true labels, as a percentage.
pub fn brute_force_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let kp = pred.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let mut counts = vec![0.0; kp * kt];
    for (&p, &t) in pred.iter().zip(truth) {
        counts[p * kt + t] -= 1.0;
    }
    -brute_force_assignment(&counts, kp, kt) / pred.len() as f64 * 100.0
}

/// Node ids from the root to the leaf reached by `x`, following
/// `goes_left` at each internal node.
pub fn path_of(tree: &Tree, x: &[f64]) -> Vec<usize> {
    let mut id = 0;
    let mut path = vec![0];
    while let Node::Internal {
        learner, left, right, ..
    } = &tree.nodes[id]
    {
        id = if learner.goes_left(x) { *left } else { *right };
        path.push(id);
    }
    path
}

/// Shared root edges over the edge count of the deeper path.
pub fn uniform_score(tree: &Tree, xi: &[f64], xj: &[f64]) -> f64 {
    let (pi, pj) = (path_of(tree, xi), path_of(tree, xj));
    let shared = pi.iter().zip(&pj).take_while(|(a, b)| a == b).count() - 1;
    let deeper = (pi.len().max(pj.len())) - 1;
    if deeper == 0 {
        1.0
    } else {
        shared as f64 / deeper as f64
    }
}

fn edge_weights(tree: &Tree, path: &[usize]) -> Vec<f64> {
    path.windows(2)
        .map(|w| 1.0 - tree.nodes[w[1]].count() as f64 / tree.nodes[w[0]].count() as f64)
        .collect()
}

/// Shed-fraction weighted overlap; the denominator is the larger total
/// weight of the two paths, taking the deeper path's.
pub fn adaptive_score(tree: &Tree, xi: &[f64], xj: &[f64]) -> f64 {
    let (pi, pj) = (path_of(tree, xi), path_of(tree, xj));
    let shared = pi.iter().zip(&pj).take_while(|(a, b)| a == b).count() - 1;
    let (wi, wj) = (edge_weights(tree, &pi), edge_weights(tree, &pj));
    let num: f64 = wi[..shared].iter().sum();
    let (si, sj): (f64, f64) = (wi.iter().sum(), wj.iter().sum());
    let den = match pi.len().cmp(&pj.len()) {
        std::cmp::Ordering::Greater => si,
        std::cmp::Ordering::Less => sj,
        std::cmp::Ordering::Equal => si.max(sj),
    };
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

/// `counts[c]` isotropic Gaussian draws with standard deviation `sd`
/// around `centers[c]`, labelled by cluster.
pub fn blobs(centers: &[Vec<f64>], counts: &[usize], sd: f64, seed: u64) -> Dataset {
    let mut rng = RandomStream::new(seed, 7);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, (center, &count)) in centers.iter().zip(counts).enumerate() {
        for _ in 0..count {
            rows.push(
                center
                    .iter()
                    .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect::<Vec<f64>>(),
            );
            labels.push(c);
        }
    }
    Dataset::from_rows(&rows, Some(labels)).unwrap()
}

/// Composite trapezoid rule with `steps` intervals.
pub fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> f64 {
    let h = (hi - lo) / steps as f64;
    let inner: f64 = (1..steps).map(|i| f(lo + i as f64 * h)).sum();
    h * (0.5 * f(lo) + inner + 0.5 * f(hi))
}
