//! Dataset type and CSV ingestion.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n × d` matrix of finite features, stored row-major, with optional
/// integer class labels in `0..C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    n: usize,
    d: usize,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, n: usize, d: usize, labels: Option<Vec<usize>>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::EmptyInput);
        }
        if features.len() != n * d {
            return Err(Error::Data(format!(
                "feature buffer has {} values, expected {n}×{d}",
                features.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite feature at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Data(format!(
                    "{} labels for {n} samples",
                    labels.len()
                )));
            }
            let classes = labels.iter().max().map_or(0, |m| m + 1);
            let mut seen = vec![false; classes];
            for &l in labels {
                seen[l] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::Data("label ids are not contiguous".into()));
            }
        }
        Ok(Self {
            features,
            n,
            d,
            labels,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<usize>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Data("rows have unequal lengths".into()));
        }
        let features = rows.iter().flatten().copied().collect();
        Self::new(features, rows.len(), d, labels)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.features.chunks_exact(self.d)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    /// Copy of the dataset with rows reordered so that row `i` of the result
    /// is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: perm.len(),
            });
        }
        let features = perm.iter().flat_map(|&i| self.row(i)).copied().collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| perm.iter().map(|&i| l[i]).collect());
        Self::new(features, self.n, self.d, labels)
    }

    /// Dataset restricted to the given feature columns, labels dropped.
    pub fn select_features(&self, columns: &[usize]) -> Result<Self> {
        let features = self
            .rows()
            .flat_map(|r| columns.iter().map(move |&c| r[c]))
            .collect();
        Self::new(features, self.n, columns.len(), None)
    }

    /// Dataset restricted to the given rows.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let features = rows.iter().flat_map(|&i| self.row(i)).copied().collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&i| l[i]).collect());
        Self::new(features, rows.len(), self.d, None).map(|mut ds| {
            // a row subset may not contain every class
            ds.labels = labels;
            ds
        })
    }

    /// Writes the dataset as headerless CSV; labels, if any, go in the last
    /// column. Values use the shortest representation that parses back to
    /// the identical `f64`.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for i in 0..self.n {
            let mut line = self
                .row(i)
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            if let Some(labels) = &self.labels {
                line.push(',');
                line.push_str(&labels[i].to_string());
            }
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads a comma-separated file of decimal reals.
///
/// With `has_labels` the last column is split off as class labels. Label
/// values must be non-negative integers; they are mapped onto `0..C` in
/// ascending order of their original value.
pub fn load_csv(path: impl AsRef<Path>, has_labels: bool, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, has_labels, has_header)
}

pub fn read_csv<R: std::io::Read>(reader: R, has_labels: bool, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut n = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} columns, found {}", record.len()),
                })
            }
            Some(_) => {}
        }
        let mut values = Vec::with_capacity(record.len());
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {}: cannot parse {cell:?} as a number", col + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column {}: non-finite value", col + 1),
                });
            }
            values.push(v);
        }
        if has_labels {
            let label = values.pop().ok_or(Error::Parse {
                line,
                message: "missing label column".into(),
            })?;
            if label < 0.0 || label.fract() != 0.0 {
                return Err(Error::Parse {
                    line,
                    message: format!("label {label} is not a non-negative integer"),
                });
            }
            raw_labels.push(label as u64);
        }
        features.extend(values);
        n += 1;
    }
    let d = width.map_or(0, |w| if has_labels { w.saturating_sub(1) } else { w });
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if d == 0 {
        return Err(Error::Data("no feature columns".into()));
    }
    let labels = has_labels.then(|| compact_labels(&raw_labels));
    Dataset::new(features, n, d, labels)
}

fn compact_labels(raw: &[u64]) -> Vec<usize> {
    let ids: BTreeMap<u64, usize> = raw
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    raw.iter().map(|v| ids[v]).collect()
}

/// Per-feature min-max scaling onto `[0, 1]`; constant columns become zero.
pub fn standardize(ds: &Dataset) -> Dataset {
    let (n, d) = (ds.n(), ds.d());
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in ds.rows() {
        for (j, &v) in row.iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let mut features = Vec::with_capacity(n * d);
    for row in ds.rows() {
        for (j, &v) in row.iter().enumerate() {
            let span = hi[j] - lo[j];
            features.push(if span > 0.0 { (v - lo[j]) / span } else { 0.0 });
        }
    }
    Dataset {
        features,
        n,
        d,
        labels: ds.labels.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, labels: bool) -> Result<Dataset> {
        read_csv(text.as_bytes(), labels, false)
    }

    #[test]
    fn plain_rows() {
        let ds = parse("0,0\n1,1\n2,2", false).unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        assert!(ds.labels().is_none());
        assert_eq!(ds.row(2), &[2.0, 2.0]);
    }

    #[test]
    fn last_column_becomes_labels() {
        let ds = parse("0,0,0\n1,1,1", true).unwrap();
        assert_eq!((ds.n(), ds.d()), (2, 2));
        assert_eq!(ds.labels(), Some(&[0, 1][..]));
    }

    #[test]
    fn labels_are_compacted() {
        let ds = parse("0,3\n1,7\n2,3", true).unwrap();
        assert_eq!(ds.labels(), Some(&[0, 1, 0][..]));
    }

    #[test]
    fn non_numeric_cell_names_line() {
        match parse("a,b", false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse("1,2\n3,x\n", false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        match parse("1,2\n3,4,5\n", false) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("columns"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_rejected() {
        assert!(matches!(parse("", false), Err(Error::EmptyInput)));
    }

    #[test]
    fn header_is_skipped() {
        let ds = read_csv("x,y\n1,2\n".as_bytes(), false, true).unwrap();
        assert_eq!(ds.n(), 1);
    }

    #[test]
    fn standardize_examples() {
        let ds = Dataset::from_rows(
            &[vec![0.0, 7.0, -1.0], vec![5.0, 7.0, 1.0], vec![10.0, 7.0, 1.0]],
            None,
        )
        .unwrap();
        let s = standardize(&ds);
        assert_eq!(s.row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(s.row(1), &[0.5, 0.0, 1.0]);
        assert_eq!(s.row(2), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn save_and_reload_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = Dataset::from_rows(
            &[vec![0.1, 1.0 / 3.0], vec![-2.5e-300, 12345.678901234567]],
            Some(vec![1, 0]),
        )
        .unwrap();
        ds.save_csv(&path).unwrap();
        let back = load_csv(&path, true, false).unwrap();
        assert_eq!(back, ds);
    }
}
