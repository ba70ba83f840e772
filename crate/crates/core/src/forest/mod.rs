//! Unsupervised density forest.
//!
//! Trees are grown greedily: every node draws `m_try` candidate tests of
//! the family its depth is scheduled for and keeps the one with the largest
//! Gaussian information gain. Leaves store the regularized mean and
//! covariance of the samples that reached them.

mod entropy;
mod learner;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use entropy::{gaussian_entropy, info_gain, log_det_covariance};
pub use learner::{sample_weak_learner, WeakLearner, MAX_SUBSPACE};

use crate::config::PipelineConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{add_ridge, from_row_major, mean_and_covariance, to_row_major, GaussianFactor};
use crate::rng::RandomStream;

/// Version tag written into serialized forests.
pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Internal {
        learner: WeakLearner,
        left: usize,
        right: usize,
        /// Training samples that reached this node.
        count: usize,
        depth: usize,
    },
    Leaf {
        mean: Vec<f64>,
        /// Row-major `d × d`, regularized.
        covariance: Vec<f64>,
        count: usize,
        depth: usize,
    },
}

impl Node {
    pub fn count(&self) -> usize {
        match self {
            Node::Internal { count, .. } | Node::Leaf { count, .. } => *count,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Internal { depth, .. } | Node::Leaf { depth, .. } => *depth,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

/// Node arena; node 0 is the root and children always follow their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

/// Root-to-leaf sequence of node ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraversalPath {
    pub nodes: Vec<usize>,
}

impl TraversalPath {
    pub fn edge_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn leaf(&self) -> usize {
        *self.nodes.last().expect("path always holds the root")
    }
}

impl Tree {
    pub const ROOT: usize = 0;

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(Node::depth).max().unwrap_or(0)
    }

    /// Routes `x` from the root to a leaf; a test that outputs `true` sends
    /// the sample left.
    pub fn traverse(&self, x: &[f64]) -> TraversalPath {
        let mut nodes = vec![Self::ROOT];
        let mut at = Self::ROOT;
        while let Node::Internal {
            learner,
            left,
            right,
            ..
        } = &self.nodes[at]
        {
            at = if learner.goes_left(x) { *left } else { *right };
            nodes.push(at);
        }
        TraversalPath { nodes }
    }

    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut at = Self::ROOT;
        while let Node::Internal {
            learner,
            left,
            right,
            ..
        } = &self.nodes[at]
        {
            at = if learner.goes_left(x) { *left } else { *right };
        }
        at
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Internal { learner, .. } => Some(learner.max_feature()),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

pub fn traverse(tree: &Tree, x: &[f64]) -> TraversalPath {
    tree.traverse(x)
}

struct Grower<'a> {
    ds: &'a Dataset,
    config: &'a PipelineConfig,
    rng: &'a mut RandomStream,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> Result<usize> {
        let id = self.nodes.len();
        match self.best_split(&idx, depth)? {
            Some((learner, left_idx, right_idx)) => {
                self.nodes.push(Node::Internal {
                    learner,
                    left: 0,
                    right: 0,
                    count: idx.len(),
                    depth,
                });
                let left_id = self.grow(left_idx, depth + 1)?;
                let right_id = self.grow(right_idx, depth + 1)?;
                if let Node::Internal { left, right, .. } = &mut self.nodes[id] {
                    *left = left_id;
                    *right = right_id;
                }
            }
            None => {
                let leaf = make_leaf(self.ds, &idx, depth, self.config.cov_regularizer);
                self.nodes.push(leaf);
            }
        }
        Ok(id)
    }

    #[allow(clippy::type_complexity)]
    fn best_split(
        &mut self,
        idx: &[usize],
        depth: usize,
    ) -> Result<Option<(WeakLearner, Vec<usize>, Vec<usize>)>> {
        let cfg = self.config;
        if depth >= cfg.max_depth || idx.len() < 2 * cfg.min_leaf {
            return Ok(None);
        }
        let rows: Vec<&[f64]> = idx.iter().map(|&i| self.ds.row(i)).collect();
        let parent_ld = log_det_covariance(&rows, cfg.cov_regularizer)?;

        let mut best: Option<(f64, WeakLearner, Vec<usize>, Vec<usize>)> = None;
        for _ in 0..cfg.m_try {
            let Some(learner) = sample_weak_learner(
                self.ds,
                idx,
                depth,
                &cfg.learner_schedule,
                cfg,
                self.rng,
            )?
            else {
                continue;
            };
            let (left, right): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| learner.goes_left(self.ds.row(i)));
            if left.len() < cfg.min_leaf || right.len() < cfg.min_leaf {
                continue;
            }
            let lrows: Vec<&[f64]> = left.iter().map(|&i| self.ds.row(i)).collect();
            let rrows: Vec<&[f64]> = right.iter().map(|&i| self.ds.row(i)).collect();
            let gain = entropy::split_gain(parent_ld, &lrows, &rrows, cfg.cov_regularizer);
            // strict comparison: ties keep the earliest candidate
            if best.as_ref().is_none_or(|b| gain > b.0) {
                best = Some((gain, learner, left, right));
            }
        }
        Ok(best
            .filter(|b| b.0 > 0.0)
            .map(|(_, learner, left, right)| (learner, left, right)))
    }
}

fn make_leaf(ds: &Dataset, idx: &[usize], depth: usize, reg: f64) -> Node {
    let rows: Vec<&[f64]> = idx.iter().map(|&i| ds.row(i)).collect();
    let (mean, mut cov) = mean_and_covariance(&rows, ds.d(), true);
    add_ridge(&mut cov, reg);
    Node::Leaf {
        mean,
        covariance: to_row_major(&cov),
        count: idx.len(),
        depth,
    }
}

/// Grows one tree on all rows of `ds`.
pub fn train_tree(ds: &Dataset, config: &PipelineConfig, rng: &mut RandomStream) -> Result<Tree> {
    config.validate()?;
    let mut grower = Grower {
        ds,
        config,
        rng,
        nodes: Vec::new(),
    };
    grower.grow((0..ds.n()).collect(), 0)?;
    Ok(Tree {
        nodes: grower.nodes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format_version: u32,
    pub dim: usize,
    pub n_train: usize,
    pub config: PipelineConfig,
    pub trees: Vec<Tree>,
}

/// Trains `config.num_trees` trees in parallel; tree `t` draws from
/// `RandomStream(config.seed, t)`.
pub fn train_forest(ds: &Dataset, config: &PipelineConfig) -> Result<Forest> {
    train_forest_with(ds, config, true)
}

pub fn train_forest_with(ds: &Dataset, config: &PipelineConfig, parallel: bool) -> Result<Forest> {
    config.validate()?;
    let one = |t: usize| {
        let mut rng = RandomStream::new(config.seed, t as u64);
        train_tree(ds, config, &mut rng)
    };
    let trees = if parallel {
        (0..config.num_trees).into_par_iter().map(one).collect::<Result<Vec<_>>>()?
    } else {
        (0..config.num_trees).map(one).collect::<Result<Vec<_>>>()?
    };
    Ok(Forest {
        format_version: FOREST_FORMAT_VERSION,
        dim: ds.d(),
        n_train: ds.n(),
        config: config.clone(),
        trees,
    })
}

impl Forest {
    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: d,
            });
        }
        Ok(())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let forest: Self = serde_json::from_reader(BufReader::new(file))?;
        forest.validate()?;
        Ok(forest)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported forest format version {}",
                self.format_version
            )));
        }
        for tree in &self.trees {
            let len = tree.nodes.len();
            if len == 0 {
                return Err(Error::Data("tree without nodes".into()));
            }
            for (id, node) in tree.nodes.iter().enumerate() {
                if let Node::Internal { left, right, .. } = node {
                    if *left <= id || *right <= id || *left >= len || *right >= len {
                        return Err(Error::Data(format!("bad child link at node {id}")));
                    }
                }
            }
            if tree.max_feature().is_some_and(|f| f >= self.dim) {
                return Err(Error::Data("learner reads a feature beyond dim".into()));
            }
        }
        Ok(())
    }
}

/// Forest density estimate at `x`: the tree average of
/// `π_l · N(x; μ_l, Λ_l)` over the leaf `l` that `x` reaches, with
/// `π_l = count_l / n_train`.
pub fn forest_density(forest: &Forest, x: &[f64]) -> Result<f64> {
    forest.check_dim(x.len())?;
    let mut total = 0.0;
    for tree in &forest.trees {
        let Node::Leaf {
            mean,
            covariance,
            count,
            ..
        } = &tree.nodes[tree.leaf_of(x)]
        else {
            unreachable!("leaf_of returns a leaf");
        };
        let g = GaussianFactor::new(mean, &from_row_major(covariance, forest.dim))?;
        total += (*count as f64 / forest.n_train as f64) * g.log_pdf(x).exp();
    }
    Ok(total / forest.num_trees() as f64)
}
