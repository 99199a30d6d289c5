use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Principal axes of a sample covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// One unit-norm component per row, by decreasing variance.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
    /// Total variance of the data (trace of the covariance).
    pub total_variance: f64,
    /// Set when fewer components than requested were available.
    pub requested: Option<usize>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.rows()
    }
}

/// Sample covariance (divisor `n - 1`) of the centered data.
fn covariance(x: &Matrix, mean: &[f64]) -> DMatrix<f64> {
    let (n, d) = (x.rows(), x.cols());
    let mut c = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in x.iter_rows() {
        for j in 0..d {
            centered[j] = row[j] - mean[j];
        }
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..d {
                c[(a, b)] += ca * centered[b];
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = c[(a, b)] / denom;
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    c
}

/// Fits `n_components` principal axes, lowering the count to the feature
/// dimension when necessary.
///
/// Each component is signed so that its largest-magnitude entry is positive.
/// Equal eigenvalues keep the eigensolver's index order.
pub fn pca_fit(x: &Matrix, n_components: usize) -> Result<PcaModel> {
    let (n, d) = (x.rows(), x.cols());
    if n_components == 0 {
        return Err(Error::InvalidArgument("need at least one component".into()));
    }
    if d == 0 || n < 2 {
        return Err(Error::Shape(format!("PCA needs >= 2 samples and >= 1 feature, got {n}x{d}")));
    }
    if !x.is_finite() {
        return Err(Error::InvalidArgument("non-finite value in PCA input".into()));
    }
    let k = n_components.min(d);
    let mean = x.column_means();
    let cov = covariance(x, &mean);
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });

    let mut components = Matrix::zeros(k, d);
    let mut explained_variance = Vec::with_capacity(k);
    for (r, &i) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(i);
        let pivot = (0..d)
            .fold(0, |best, j| if v[j].abs() > v[best].abs() { j } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(r, j)] = sign * v[j];
        }
        explained_variance.push(eig.eigenvalues[i].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        total_variance,
        requested: (k < n_components).then_some(n_components),
    })
}

/// Scores of `x` on the fitted components.
pub fn pca_transform(model: &PcaModel, x: &Matrix) -> Result<Matrix> {
    let d = model.mean.len();
    if x.cols() != d {
        return Err(Error::Shape(format!("model has {d} features, data has {}", x.cols())));
    }
    let k = model.n_components();
    let mut out = Matrix::zeros(x.rows(), k);
    let mut centered = vec![0.0; d];
    for (i, row) in x.iter_rows().enumerate() {
        for j in 0..d {
            centered[j] = row[j] - model.mean[j];
        }
        let o = out.row_mut(i);
        for (r, slot) in o.iter_mut().enumerate() {
            *slot = model.components.row(r).iter().zip(&centered).map(|(a, b)| a * b).sum();
        }
    }
    Ok(out)
}

/// Maps scores back to the original feature space.
pub fn pca_inverse(model: &PcaModel, scores: &Matrix) -> Result<Matrix> {
    let k = model.n_components();
    if scores.cols() != k {
        return Err(Error::Shape(format!("model has {k} components, scores have {}", scores.cols())));
    }
    let mut out = scores.matmul(&model.components)?;
    for i in 0..out.rows() {
        for (v, m) in out.row_mut(i).iter_mut().zip(&model.mean) {
            *v += m;
        }
    }
    Ok(out)
}
