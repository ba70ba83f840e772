//! Pairwise affinities from shared tree paths.
//!
//! Three per-tree scores are averaged over the forest in ascending tree
//! order:
//!
//! * binary: 1 when both samples land in the same leaf;
//! * uniform: shared edges from the root divided by the edge count of the
//!   deeper path;
//! * adaptive: as uniform, but every edge is weighted by the fraction of
//!   the parent's training samples it sheds, `1 − |child| / |parent|`.
//!
//! A single-leaf tree scores 1 for every pair under all three.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::config::AffinityMode;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{Forest, Tree};

/// Dense symmetric `n × n` affinity, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    values: Vec<f64>,
    mode: AffinityMode,
}

impl AffinityMatrix {
    pub fn identity(n: usize, mode: AffinityMode) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Self { n, values, mode }
    }

    pub fn from_values(n: usize, values: Vec<f64>, mode: AffinityMode) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: values.len(),
            });
        }
        Ok(Self { n, values, mode })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> AffinityMode {
        self.mode
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// Symmetric, unit diagonal, entries in `[0, 1]`.
    pub fn check_invariants(&self) -> Result<()> {
        for i in 0..self.n {
            if self.get(i, i) != 1.0 {
                return Err(Error::Data(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..self.n {
                let v = self.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Data(format!("entry ({i},{j}) = {v} outside [0,1]")));
                }
                if v != self.get(j, i) {
                    return Err(Error::Data(format!("entry ({i},{j}) breaks symmetry")));
                }
            }
        }
        Ok(())
    }

    /// Binary layout: `n` as little-endian `u64`, then `n²` little-endian
    /// `f64` in row-major order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&(self.n as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_binary<R: Read>(mut r: R, mode: AffinityMode) -> Result<Self> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)
            .map_err(|e| Error::Data(format!("affinity header: {e}")))?;
        let n = u64::from_le_bytes(word) as usize;
        let count = n
            .checked_mul(n)
            .ok_or_else(|| Error::Data("affinity size overflows".into()))?;
        let mut values = Vec::with_capacity(count);
        for k in 0..count {
            r.read_exact(&mut word)
                .map_err(|e| Error::Data(format!("affinity entry {k}: {e}")))?;
            values.push(f64::from_le_bytes(word));
        }
        if r.read(&mut word).map_err(|e| Error::Data(e.to_string()))? != 0 {
            return Err(Error::Data("trailing bytes after affinity matrix".into()));
        }
        Self::from_values(n, values, mode)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_binary(BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, mode: AffinityMode) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_binary(BufReader::new(file), mode)
    }
}

/// Per-tree traversal data for every sample: the node path plus, for the
/// adaptive mode, cumulative edge weights along it.
struct TreePaths {
    offsets: Vec<usize>,
    nodes: Vec<u32>,
    cum_weight: Vec<f64>,
}

impl TreePaths {
    fn build(tree: &Tree, ds: &Dataset, weighted: bool) -> Self {
        let mut offsets = Vec::with_capacity(ds.n() + 1);
        let mut nodes = Vec::new();
        let mut cum_weight = Vec::new();
        offsets.push(0);
        for row in ds.rows() {
            let path = tree.traverse(row);
            let mut acc = 0.0;
            for (k, &id) in path.nodes.iter().enumerate() {
                nodes.push(id as u32);
                if weighted {
                    if k > 0 {
                        acc += edge_weight(tree, path.nodes[k - 1], id);
                    }
                    cum_weight.push(acc);
                }
            }
            offsets.push(nodes.len());
        }
        Self {
            offsets,
            nodes,
            cum_weight,
        }
    }

    fn path(&self, i: usize) -> &[u32] {
        &self.nodes[self.offsets[i]..self.offsets[i + 1]]
    }

    fn weights(&self, i: usize) -> &[f64] {
        &self.cum_weight[self.offsets[i]..self.offsets[i + 1]]
    }

    fn score(&self, mode: AffinityMode, i: usize, j: usize) -> f64 {
        let (pi, pj) = (self.path(i), self.path(j));
        let shared_nodes = pi.iter().zip(pj).take_while(|(a, b)| a == b).count();
        let shared_edges = shared_nodes - 1;
        let (ei, ej) = (pi.len() - 1, pj.len() - 1);
        match mode {
            AffinityMode::Binary => {
                if pi.last() == pj.last() {
                    1.0
                } else {
                    0.0
                }
            }
            AffinityMode::Uniform => {
                let deeper = ei.max(ej);
                if deeper == 0 {
                    1.0
                } else {
                    shared_edges as f64 / deeper as f64
                }
            }
            AffinityMode::Adaptive => {
                let (wi, wj) = (self.weights(i), self.weights(j));
                let (ti, tj) = (wi[ei], wj[ej]);
                let total = match ei.cmp(&ej) {
                    std::cmp::Ordering::Greater => ti,
                    std::cmp::Ordering::Less => tj,
                    std::cmp::Ordering::Equal => ti.max(tj),
                };
                if total == 0.0 {
                    1.0
                } else {
                    wi[shared_edges] / total
                }
            }
        }
    }
}

/// Informativeness of the edge `parent → child`: the share of the parent's
/// training samples that did not follow it.
fn edge_weight(tree: &Tree, parent: usize, child: usize) -> f64 {
    let p = tree.nodes[parent].count();
    let c = tree.nodes[child].count();
    if p == 0 {
        0.0
    } else {
        1.0 - c as f64 / p as f64
    }
}

/// Averaged per-tree affinity of every pair of rows of `ds`.
pub fn build_affinity(forest: &Forest, ds: &Dataset, mode: AffinityMode) -> Result<AffinityMatrix> {
    forest.check_dim(ds.d())?;
    let n = ds.n();
    let weighted = mode == AffinityMode::Adaptive;
    let per_tree: Vec<TreePaths> = forest
        .trees
        .par_iter()
        .map(|t| TreePaths::build(t, ds, weighted))
        .collect();
    let trees = per_tree.len() as f64;

    // upper triangle, each entry summed over trees in ascending order
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| per_tree.iter().map(|tp| tp.score(mode, i, j)).sum::<f64>() / trees)
                .collect()
        })
        .collect();

    let mut a = AffinityMatrix::identity(n, mode);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            let v = v.clamp(0.0, 1.0);
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    Ok(a)
}

/// Fraction of trees in which two samples share a leaf.
pub fn binary_affinity(forest: &Forest, ds: &Dataset) -> Result<AffinityMatrix> {
    build_affinity(forest, ds, AffinityMode::Binary)
}

/// Shared-path length normalized by the deeper path.
pub fn path_affinity_uniform(forest: &Forest, ds: &Dataset) -> Result<AffinityMatrix> {
    build_affinity(forest, ds, AffinityMode::Uniform)
}

/// Shared-path weight normalized by the deeper path's weight, with edges
/// weighted by the share of samples they shed.
pub fn path_affinity_adaptive(forest: &Forest, ds: &Dataset) -> Result<AffinityMatrix> {
    build_affinity(forest, ds, AffinityMode::Adaptive)
}

/// 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Binary PGM (`P5`, maxval 255).
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.pixels)?;
        w.flush()
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_pgm(BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

/// Renders `round(255 · a_ij)`; with `order`, pixel `(r, c)` shows entry
/// `(order[r], order[c])`.
pub fn affinity_heatmap(a: &AffinityMatrix, order: Option<&[usize]>) -> Result<GrayImage> {
    let n = a.n();
    let identity: Vec<usize>;
    let order = match order {
        Some(o) => {
            let mut seen = vec![false; n];
            if o.len() != n || o.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
                return Err(Error::Data(format!(
                    "heatmap order is not a permutation of 0..{n}"
                )));
            }
            o
        }
        None => {
            identity = (0..n).collect();
            &identity
        }
    };
    let pixels = order
        .iter()
        .flat_map(|&r| order.iter().map(move |&c| (r, c)))
        .map(|(r, c)| (255.0 * a.get(r, c).clamp(0.0, 1.0)).round() as u8)
        .collect();
    Ok(GrayImage {
        width: n,
        height: n,
        pixels,
    })
}

/// Stable permutation that groups samples by label.
pub fn order_by_labels(labels: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by_key(|&i| labels[i]);
    order
}
