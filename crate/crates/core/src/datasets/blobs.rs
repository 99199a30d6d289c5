use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{GeneratorSpec, LabeledData, Split};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::random::{self, Rng64};

/// Gaussian class clusters, optionally followed by label-independent
/// nuisance coordinates drawn from their own clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobsSpec {
    pub n_classes: usize,
    pub dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Per-coordinate noise standard deviation around a class center.
    pub spread: f64,
    pub nuisance_dims: usize,
    pub nuisance_clusters: usize,
    /// Standard deviation of the nuisance cluster centers.
    pub nuisance_scale: f64,
    pub seed: u64,
}

impl Default for BlobsSpec {
    fn default() -> Self {
        Self {
            n_classes: 10,
            dim: 16,
            n_train: 2000,
            n_test: 1000,
            spread: 0.7,
            nuisance_dims: 0,
            nuisance_clusters: 10,
            nuisance_scale: 4.0,
            seed: 0,
        }
    }
}

impl BlobsSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_classes >= 2
            && self.dim >= 1
            && self.n_train >= self.n_classes
            && self.n_test >= self.n_classes
            && self.spread >= 0.0
            && self.spread.is_finite()
            && (self.nuisance_dims == 0 || (self.nuisance_clusters >= 1 && self.nuisance_scale >= 0.0));
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("blob parameters out of range: {self:?}")))
        }
    }

    pub fn features(&self) -> usize {
        self.dim + self.nuisance_dims
    }
}

/// Train and test splits of one generated task.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: LabeledData,
    pub test: LabeledData,
    pub class_centers: Matrix,
}

struct Geometry {
    centers: Matrix,
    nuisance: Matrix,
}

fn gaussian_rows(rng: &mut Rng64, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized buffer")
}

fn geometry(spec: &BlobsSpec) -> Geometry {
    let mut rng = random::substream(spec.seed, "blobs-centers");
    Geometry {
        centers: gaussian_rows(&mut rng, spec.n_classes, spec.dim, 1.0),
        nuisance: gaussian_rows(&mut rng, spec.nuisance_clusters.max(1), spec.nuisance_dims, spec.nuisance_scale),
    }
}

fn draw_split(spec: &BlobsSpec, geo: &Geometry, n: usize, split: Split, rng: &mut Rng64) -> LabeledData {
    let k = spec.n_classes;
    // stratified: every class gets floor(n/k), the first n % k one more
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(rng);
    let noise = Normal::new(0.0, spec.spread.max(f64::MIN_POSITIVE)).expect("finite spread");
    let d = spec.features();
    let mut x = Matrix::zeros(n, d);
    for (i, &y) in labels.iter().enumerate() {
        let row = x.row_mut(i);
        for j in 0..spec.dim {
            let eps = if spec.spread > 0.0 { noise.sample(rng) } else { 0.0 };
            row[j] = geo.centers[(y, j)] + eps;
        }
        if spec.nuisance_dims > 0 {
            let c = rng.random_range(0..spec.nuisance_clusters);
            for j in 0..spec.nuisance_dims {
                let eps = if spec.spread > 0.0 { noise.sample(rng) } else { 0.0 };
                row[spec.dim + j] = geo.nuisance[(c, j)] + eps;
            }
        }
    }
    LabeledData {
        inputs: x,
        labels,
        n_classes: k,
        split,
        spec: GeneratorSpec::Blobs(spec.clone()),
    }
}

/// Generates stratified train and test splits.
pub fn make_blobs(spec: &BlobsSpec) -> Result<Dataset> {
    spec.validate()?;
    let geo = geometry(spec);
    let mut rng_train = random::substream(spec.seed, "blobs-train");
    let mut rng_test = random::substream(spec.seed, "blobs-test");
    let train = draw_split(spec, &geo, spec.n_train, Split::Train, &mut rng_train);
    let test = draw_split(spec, &geo, spec.n_test, Split::Test, &mut rng_test);
    Ok(Dataset {
        train,
        test,
        class_centers: geo.centers,
    })
}

/// Monte-Carlo error of the nearest-center rule, which is Bayes-optimal for
/// equiprobable isotropic clusters of equal spread.
pub fn bayes_error(spec: &BlobsSpec, n_draws: usize, seed: u64) -> Result<f64> {
    spec.validate()?;
    let geo = geometry(spec);
    let mut rng = random::substream(seed, "bayes-error");
    let noise = Normal::new(0.0, spec.spread.max(f64::MIN_POSITIVE)).expect("finite spread");
    let mut errors = 0usize;
    let mut point = vec![0.0; spec.dim];
    for i in 0..n_draws {
        let y = i % spec.n_classes;
        for (j, v) in point.iter_mut().enumerate() {
            *v = geo.centers[(y, j)] + if spec.spread > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        }
        let nearest = (0..spec.n_classes)
            .map(|c| {
                let d: f64 = point.iter().enumerate().map(|(j, v)| (v - geo.centers[(c, j)]).powi(2)).sum();
                (c, d)
            })
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
            .0;
        if nearest != y {
            errors += 1;
        }
    }
    Ok(errors as f64 / n_draws.max(1) as f64)
}
