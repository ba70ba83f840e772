//! Clustering accuracy under optimal label matching, and normalized mutual
//! information.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Co-occurrence counts of predicted clusters (rows) and true classes
/// (columns). Label values are compacted to `0..C` in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub rows: usize,
    pub cols: usize,
    pub counts: Vec<u64>,
    pub n: u64,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let ids: BTreeMap<usize, usize> = labels
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                got: pred.len(),
            });
        }
        if pred.is_empty() {
            return Err(Error::EmptyInput);
        }
        let (p, rows) = compact(pred);
        let (t, cols) = compact(truth);
        let mut counts = vec![0u64; rows * cols];
        for (&a, &b) in p.iter().zip(&t) {
            counts[a * cols + b] += 1;
        }
        Ok(Self {
            rows,
            cols,
            counts,
            n: pred.len() as u64,
        })
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.counts[r * self.cols + c]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c)).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.get(r, c)).sum())
            .collect()
    }
}

/// Optimal assignment of a rectangular cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs, one per row when rows ≤ cols, else one per col.
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

/// Minimum-cost one-to-one assignment over `min(rows, cols)` pairs
/// (Hungarian method with row and column potentials, `O(r² c)`).
pub fn hungarian(cost: &[f64], rows: usize, cols: usize) -> Result<Assignment> {
    if cost.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: rows * cols,
            got: cost.len(),
        });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Data("assignment costs must be finite".into()));
    }
    if rows == 0 || cols == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            cost: 0.0,
        });
    }
    if rows > cols {
        let transposed: Vec<f64> = (0..cols)
            .flat_map(|c| (0..rows).map(move |r| cost[r * cols + c]))
            .collect();
        let t = hungarian(&transposed, cols, rows)?;
        let mut pairs: Vec<(usize, usize)> = t.pairs.into_iter().map(|(c, r)| (r, c)).collect();
        pairs.sort_unstable();
        return Ok(Assignment { pairs, cost: t.cost });
    }

    let (n, m) = (rows, cols);
    let at = |i: usize, j: usize| cost[(i - 1) * m + (j - 1)];
    // 1-based: index 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut matched_row = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = at(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| matched_row[j] != 0)
        .map(|j| (matched_row[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(r, c)| cost[r * cols + c]).sum();
    Ok(Assignment { pairs, cost: total })
}

/// Percentage of samples correctly labelled after the best one-to-one
/// matching of predicted clusters to true classes. Unmatched clusters count
/// as wrong.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let cost: Vec<f64> = table.counts.iter().map(|&c| -(c as f64)).collect();
    let assignment = hungarian(&cost, table.rows, table.cols)?;
    let matched: u64 = assignment
        .pairs
        .iter()
        .map(|&(r, c)| table.get(r, c))
        .sum();
    Ok(100.0 * matched as f64 / table.n as f64)
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `I(pred; truth) / sqrt(H(pred) H(truth))` in nats.
///
/// When either partition has zero entropy the score is 1 if the two
/// partitions are identical and 0 otherwise.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let n = table.n as f64;
    let rs = table.row_sums();
    let cs = table.col_sums();
    let hp = entropy(&rs, n);
    let ht = entropy(&cs, n);
    if hp == 0.0 || ht == 0.0 {
        let identical = table.rows == table.cols && table.rows == 1;
        return Ok(if identical { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for r in 0..table.rows {
        for c in 0..table.cols {
            let nij = table.get(r, c);
            if nij == 0 {
                continue;
            }
            let nij = nij as f64;
            mi += nij / n * ((n * nij) / (rs[r] as f64 * cs[c] as f64)).ln();
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}
