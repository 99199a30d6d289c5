use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::random::{self, Rng64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: Matrix,
    pub k: usize,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansOptions {
    pub k: usize,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            k: 10,
            max_iters: 300,
            restarts: 5,
            seed: 0,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(c: &Matrix, point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in 0..c.rows() {
        let d = sq_dist(c.row(j), point);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn distinct_rows(x: &Matrix, cap: usize) -> usize {
    let mut seen: Vec<&[f64]> = Vec::new();
    for row in x.iter_rows() {
        if !seen.contains(&row) {
            seen.push(row);
            if seen.len() >= cap {
                break;
            }
        }
    }
    seen.len()
}

fn plus_plus(x: &Matrix, k: usize, rng: &mut Rng64) -> Matrix {
    let n = x.rows();
    let mut c = Matrix::zeros(k, x.cols());
    c.row_mut(0).copy_from_slice(x.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = x.iter_rows().map(|r| sq_dist(r, c.row(0))).collect();
    for j in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        c.row_mut(j).copy_from_slice(x.row(pick));
        for (i, r) in x.iter_rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, c.row(j)));
        }
    }
    c
}

fn lloyd(x: &Matrix, mut c: Matrix, max_iters: usize) -> (Matrix, f64, usize) {
    let (n, d, k) = (x.rows(), x.cols(), c.rows());
    let mut assign = vec![usize::MAX; n];
    let mut iterations = 0;
    for it in 0..max_iters {
        iterations = it + 1;
        let mut changed = false;
        let mut dist = vec![0.0; n];
        for (i, r) in x.iter_rows().enumerate() {
            let (j, dj) = nearest(&c, r);
            dist[i] = dj;
            if assign[i] != j {
                assign[i] = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, r) in x.iter_rows().enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums.row_mut(assign[i]).iter_mut().zip(r) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] > 0 {
                let cnt = counts[j] as f64;
                for (cv, s) in c.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *cv = s / cnt;
                }
            } else {
                // reseed at the point farthest from its centroid
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dist[b] >= dist[i] => Some(b),
                        _ => Some(i),
                    })
                    .expect("n >= k");
                taken[far] = true;
                c.row_mut(j).copy_from_slice(x.row(far));
                dist[far] = 0.0;
            }
        }
    }
    let inertia = x.iter_rows().map(|r| nearest(&c, r).1).sum();
    (c, inertia, iterations)
}

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` by inertia.
pub fn kmeans_fit(x: &Matrix, opts: &KMeansOptions) -> Result<KMeansModel> {
    if opts.k == 0 || opts.restarts == 0 || opts.max_iters == 0 {
        return Err(Error::InvalidArgument(format!("k-means options must be positive: {opts:?}")));
    }
    if x.rows() < opts.k {
        return Err(Error::Shape(format!("{} samples cannot form {} clusters", x.rows(), opts.k)));
    }
    if !x.is_finite() {
        return Err(Error::InvalidArgument("non-finite value in k-means input".into()));
    }
    let mut warnings = Vec::new();
    let distinct = distinct_rows(x, opts.k);
    let k = opts.k.min(distinct);
    if k < opts.k {
        warnings.push(format!("only {distinct} distinct points; k lowered from {} to {k}", opts.k));
    }
    let mut rng = random::substream(opts.seed, "kmeans");
    let mut best: Option<(Matrix, f64, usize)> = None;
    for _ in 0..opts.restarts {
        let init = plus_plus(x, k, &mut rng);
        let run = lloyd(x, init, opts.max_iters);
        if best.as_ref().is_none_or(|b| run.1 < b.1) {
            best = Some(run);
        }
    }
    let (centroids, inertia, iterations) = best.expect("at least one restart");
    Ok(KMeansModel {
        centroids,
        k,
        inertia,
        iterations,
        warnings,
    })
}

/// Nearest-centroid labels, ties to the lowest index.
pub fn kmeans_assign(model: &KMeansModel, x: &Matrix) -> Result<Vec<usize>> {
    if x.cols() != model.centroids.cols() {
        return Err(Error::Shape(format!(
            "centroids have {} features, data has {}",
            model.centroids.cols(),
            x.cols()
        )));
    }
    Ok(x.iter_rows().map(|r| nearest(&model.centroids, r).0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_is_mean() {
        let x = Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, -1.0]]).unwrap();
        let m = kmeans_fit(&x, &KMeansOptions { k: 1, ..Default::default() }).unwrap();
        assert!((m.centroids[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((m.centroids[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_distinct_points() {
        let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![2.0], vec![2.0]]).unwrap();
        let m = kmeans_fit(&x, &KMeansOptions { k: 3, ..Default::default() }).unwrap();
        assert_eq!(m.k, 2);
        assert_eq!(m.warnings.len(), 1);
        let a = kmeans_assign(&m, &x).unwrap();
        assert_eq!(a[0], a[1]);
        assert_ne!(a[1], a[2]);
    }
}
