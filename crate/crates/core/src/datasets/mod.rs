//! Synthetic data: exact example triples, the nuisance-teacher construction
//! and a Gaussian-blob classification task.

mod blobs;
mod triples;

use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::Joint3;
use crate::matrix::Matrix;

pub use blobs::{bayes_error, make_blobs, BlobsSpec, Dataset};
pub use triples::{
    example_joint, make_example_triple, make_nuisance_task, ExampleSource, NuisanceSpec, NuisanceTask,
    SourceChoice,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Blobs(BlobsSpec),
    Nuisance(NuisanceSpec),
}

/// Feature rows with class labels for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub split: Split,
    pub spec: GeneratorSpec,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    split: Split,
    n_classes: usize,
    samples: usize,
    features: usize,
    spec: &'a GeneratorSpec,
}

impl LabeledData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// CSV with a header row and the label in the last column.
    pub fn to_csv(&self) -> String {
        let d = self.inputs.cols();
        let mut out = String::new();
        for j in 0..d {
            out.push_str(&format!("x{j},"));
        }
        out.push_str("label\n");
        for (row, y) in self.inputs.iter_rows().zip(&self.labels) {
            for v in row {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{y}\n"));
        }
        out
    }

    /// Writes `<path>` and a JSON sidecar `<path>.json` describing the generator.
    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        fs::write(path, self.to_csv())?;
        let sidecar = sidecar_path(path);
        let meta = Sidecar {
            split: self.split,
            n_classes: self.n_classes,
            samples: self.len(),
            features: self.inputs.cols(),
            spec: &self.spec,
        };
        fs::write(&sidecar, serde_json::to_string_pretty(&meta)?)?;
        Ok(sidecar)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Reads a numeric CSV (optional header) into a matrix.
pub fn read_matrix_csv(text: &str) -> Result<Matrix> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse("no numeric rows".into()));
    }
    Matrix::from_rows(&rows)
}

/// Splits a labelled CSV (label in the last column) into features and labels.
pub fn read_labeled_csv(text: &str) -> Result<(Matrix, Vec<usize>)> {
    let m = read_matrix_csv(text)?;
    if m.cols() < 2 {
        return Err(Error::Parse("need at least one feature and a label column".into()));
    }
    let d = m.cols() - 1;
    let mut data = Vec::with_capacity(m.rows() * d);
    let mut labels = Vec::with_capacity(m.rows());
    for row in m.iter_rows() {
        data.extend_from_slice(&row[..d]);
        labels.push(parse_label(row[d])?);
    }
    Ok((Matrix::from_vec(m.rows(), d, data)?, labels))
}

/// Reads a label vector: the last column of each row.
pub fn read_labels_csv(text: &str) -> Result<Vec<usize>> {
    let m = read_matrix_csv(text)?;
    m.iter_rows().map(|r| parse_label(r[r.len() - 1])).collect()
}

fn parse_label(v: f64) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::Parse(format!("label {v} is not a nonnegative integer")));
    }
    Ok(v as usize)
}

/// Draws `n` cells `(y, t, s)` from `p`.
pub fn sample_joint<R: Rng + ?Sized>(p: &Joint3, n: usize, rng: &mut R) -> Vec<(usize, usize, usize)> {
    let idx = WeightedIndex::new(p.probs()).expect("a valid joint has positive mass");
    let [_, ct, cs] = p.card();
    (0..n)
        .map(|_| {
            let i = idx.sample(rng);
            (i / (ct * cs), (i / cs) % ct, i % cs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_csv_roundtrip() {
        let text = "x0,x1,label\n0.5,-1,2\n1e-3,4,0\n";
        let (m, y) = read_labeled_csv(text).unwrap();
        assert_eq!(m.rows(), 2);
        assert_eq!(m[(1, 0)], 1e-3);
        assert_eq!(y, vec![2, 0]);
        assert!(read_labeled_csv("a,b\n1,0.5\n").is_err());
    }
}
