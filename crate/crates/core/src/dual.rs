//! Dual-assignment gate between the forest and the mixture model.
//!
//! The affinity matrix is thresholded, the connected components of the
//! surviving graph are ranked by size, and the members of the `K` largest
//! become hard latent assignments for constrained EM. Everything else stays
//! free for the mixture to decide.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};

/// Latent tag of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Latent {
    Free,
    Fixed(usize),
}

impl Latent {
    pub fn fixed(self) -> Option<usize> {
        match self {
            Latent::Fixed(c) => Some(c),
            Latent::Free => None,
        }
    }
}

impl Serialize for Latent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Latent::Free => s.serialize_str("free"),
            Latent::Fixed(c) => s.serialize_u64(*c as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Latent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct LatentVisitor;
        impl Visitor<'_> for LatentVisitor {
            type Value = Latent;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("\"free\" or a component id")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Latent, E> {
                if v == "free" {
                    Ok(Latent::Free)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Latent, E> {
                Ok(Latent::Fixed(v as usize))
            }
        }
        d.deserialize_any(LatentVisitor)
    }
}

/// Per-sample latent tags for a `K`-component mixture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentConstraints {
    tags: Vec<Latent>,
    k: usize,
}

impl LatentConstraints {
    pub fn new(tags: Vec<Latent>, k: usize) -> Result<Self> {
        if let Some(c) = tags.iter().filter_map(|t| t.fixed()).find(|&c| c >= k) {
            return Err(Error::Data(format!("fixed component {c} out of range for K = {k}")));
        }
        Ok(Self { tags, k })
    }

    /// No sample fixed.
    pub fn all_free(n: usize, k: usize) -> Self {
        Self {
            tags: vec![Latent::Free; n],
            k,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[Latent] {
        &self.tags
    }

    pub fn get(&self, i: usize) -> Latent {
        self.tags[i]
    }

    /// Number of fixed samples per component.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for c in self.tags.iter().filter_map(|t| t.fixed()) {
            counts[c] += 1;
        }
        counts
    }

    pub fn num_fixed(&self) -> usize {
        self.tags.iter().filter(|t| t.fixed().is_some()).count()
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(file), &self.tags)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>, k: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let tags: Vec<Latent> = serde_json::from_reader(BufReader::new(file))?;
        Self::new(tags, k)
    }
}

/// Zeroes every off-diagonal entry below `threshold`.
pub fn threshold_filter(a: &AffinityMatrix, threshold: f64) -> AffinityMatrix {
    let n = a.n();
    let mut out = a.clone();
    for i in 0..n {
        for j in 0..n {
            if i != j && a.get(i, j) < threshold {
                out.set(i, j, 0.0);
            }
        }
    }
    out
}

/// Connected components of the graph with an edge wherever an off-diagonal
/// entry is positive. Components are listed in order of their smallest
/// member and each is sorted ascending.
pub fn connected_components(a: &AffinityMatrix) -> Vec<Vec<usize>> {
    let n = a.n();
    let mut comp = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut head = 0;
        while head < members.len() {
            let i = members[head];
            head += 1;
            let row = a.row(i);
            for (j, &v) in row.iter().enumerate() {
                if j != i && v > 0.0 && comp[j] == usize::MAX {
                    comp[j] = id;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Seeds component ids `0..k` with the `k` largest connected components of
/// at least `min_component` samples (ties broken by smallest member). All
/// other samples are free.
pub fn seed_constraints(a: &AffinityMatrix, k: usize, min_component: usize) -> Result<LatentConstraints> {
    if k == 0 {
        return Err(Error::Config("number of components must be positive".into()));
    }
    let mut comps: Vec<Vec<usize>> = connected_components(a)
        .into_iter()
        .filter(|c| c.len() >= min_component.max(2))
        .collect();
    // stable sort keeps smallest-member order among equal sizes
    comps.sort_by_key(|c| std::cmp::Reverse(c.len()));
    if comps.len() < k {
        return Err(Error::Seeding {
            found: comps.len(),
            wanted: k,
            min_size: min_component.max(2),
        });
    }
    let mut tags = vec![Latent::Free; a.n()];
    for (id, members) in comps.iter().take(k).enumerate() {
        for &i in members {
            tags[i] = Latent::Fixed(id);
        }
    }
    LatentConstraints::new(tags, k)
}

/// Frees every sample whose above-threshold neighbours, itself included,
/// carry two or more distinct fixed components.
pub fn mutual_exclusion(a: &AffinityMatrix, seeds: &LatentConstraints) -> LatentConstraints {
    let n = a.n();
    let tags = (0..n)
        .map(|i| {
            let own = seeds.get(i);
            let Latent::Fixed(c) = own else {
                return own;
            };
            let conflicted = a.row(i).iter().enumerate().any(|(j, &v)| {
                j != i && v > 0.0 && matches!(seeds.get(j), Latent::Fixed(o) if o != c)
            });
            if conflicted {
                Latent::Free
            } else {
                own
            }
        })
        .collect();
    LatentConstraints {
        tags,
        k: seeds.k(),
    }
}
