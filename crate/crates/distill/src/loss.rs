//! Loss functions with analytic gradients.
//!
//! Every function returns the batch loss together with gradients of that
//! loss with respect to its matrix arguments. Expectations are batch means.

use kdpid::{Error, Matrix, Result};

use crate::nn::SigmaVec;

/// Lower clamp applied to the VID scale parameters.
pub const VID_SIGMA_MIN: f64 = 1e-3;

fn same_shape(a: &Matrix, b: &Matrix, what: &str) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "{what}: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if a.rows() == 0 {
        return Err(Error::Shape(format!("{what}: empty batch")));
    }
    Ok(())
}

fn check_channels(v: &Matrix, channels: usize) -> Result<()> {
    if v.cols() != channels {
        return Err(Error::Shape(format!("{} channels but {} weights", v.cols(), channels)));
    }
    Ok(())
}

/// Softmax cross-entropy in nats, averaged over the batch.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, k) = (logits.rows(), logits.cols());
    if n == 0 || n != labels.len() {
        return Err(Error::Shape(format!("{n} logit rows for {} labels", labels.len())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::InvalidArgument(format!("label {y} out of range for {k} classes")));
    }
    let mut grad = Matrix::zeros(n, k);
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        loss += z.ln() + m - row[y];
        let g = grad.row_mut(r);
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - m).exp() / z / n as f64;
        }
        g[y] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, grad))
}

/// Fraction of rows whose largest logit sits at the label.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(r, &y)| argmax(logits.row(r)) == y)
        .count();
    hits as f64 / labels.len() as f64
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// `sum_c E[V_c^2] / sigma_c` for `V = a - b`.
///
/// Returns the value, the gradient with respect to `a` (the gradient with
/// respect to `b` is its negation) and the gradient with respect to each
/// `sigma_c`.
pub fn weighted_square(a: &Matrix, b: &Matrix, sigma: &[f64]) -> Result<(f64, Matrix, Vec<f64>)> {
    same_shape(a, b, "weighted square")?;
    check_channels(a, sigma.len())?;
    let n = a.rows() as f64;
    let mut grad = Matrix::zeros(a.rows(), a.cols());
    let mut mean_sq = vec![0.0; sigma.len()];
    for r in 0..a.rows() {
        let g = grad.row_mut(r);
        for (c, ((&x, &y), gc)) in a.row(r).iter().zip(b.row(r)).zip(g.iter_mut()).enumerate() {
            let v = x - y;
            mean_sq[c] += v * v / n;
            *gc = 2.0 * v / (sigma[c] * n);
        }
    }
    let value = mean_sq.iter().zip(sigma).map(|(m, s)| m / s).sum();
    let d_sigma = mean_sq.iter().zip(sigma).map(|(m, s)| -m / (s * s)).collect();
    Ok((value, grad, d_sigma))
}

/// Teacher-side RID loss: head cross-entropy plus the weighted deviation of
/// the teacher filter from the (constant) student filter.
///
/// Returns the loss, the gradient at the head logits and the gradient at the
/// teacher filter output.
pub fn rid_teacher(logits: &Matrix, labels: &[usize], f_t: &Matrix, f_s: &Matrix, sigma: &SigmaVec) -> Result<(f64, Matrix, Matrix)> {
    let (ce, g_logits) = cross_entropy(logits, labels)?;
    let (pen, g_ft, _) = weighted_square(f_t, f_s, &sigma.values())?;
    Ok((ce + pen, g_logits, g_ft))
}

/// Student-side RID loss `||sigma||^2 + sum_c E[V_c^2] / sigma_c`.
///
/// Returns the loss, the gradient at the student filter output and the
/// gradient with respect to the stored log-weights.
pub fn rid_student(f_t: &Matrix, f_s: &Matrix, sigma: &SigmaVec) -> Result<(f64, Matrix, Vec<f64>)> {
    let s = sigma.values();
    let (pen, g_ft, d_sigma) = weighted_square(f_t, f_s, &s)?;
    let norm: f64 = s.iter().map(|v| v * v).sum();
    let g_fs = g_ft.map(|v| -v);
    let d_raw = s.iter().zip(&d_sigma).map(|(sc, d)| (2.0 * sc + d) * sc).collect();
    Ok((norm + pen, g_fs, d_raw))
}

/// VID distillation term `sum_c (log sigma_c + E[(T_c - mu_c)^2] / (2 sigma_c^2))`,
/// with `sigma` clamped below at [`VID_SIGMA_MIN`].
///
/// Returns the value, the gradient at `mu` and the gradient with respect to
/// the stored log-weights (zero where the clamp is active).
pub fn vid_term(t: &Matrix, mu: &Matrix, sigma: &SigmaVec) -> Result<(f64, Matrix, Vec<f64>)> {
    same_shape(t, mu, "vid")?;
    check_channels(t, sigma.len())?;
    let s: Vec<f64> = sigma.values().iter().map(|v| v.max(VID_SIGMA_MIN)).collect();
    let n = t.rows() as f64;
    let mut mean_sq = vec![0.0; s.len()];
    let mut grad = Matrix::zeros(t.rows(), t.cols());
    for r in 0..t.rows() {
        let g = grad.row_mut(r);
        for (c, ((&tv, &mv), gc)) in t.row(r).iter().zip(mu.row(r)).zip(g.iter_mut()).enumerate() {
            let d = tv - mv;
            mean_sq[c] += d * d / n;
            *gc = -d / (s[c] * s[c] * n);
        }
    }
    let value = s.iter().zip(&mean_sq).map(|(sc, m)| sc.ln() + m / (2.0 * sc * sc)).sum();
    let d_raw = sigma
        .raw
        .iter()
        .zip(s.iter().zip(&mean_sq))
        .map(|(raw, (sc, m))| if raw.exp() < VID_SIGMA_MIN { 0.0 } else { 1.0 - m / (sc * sc) })
        .collect();
    Ok((value, grad, d_raw))
}

/// Unweighted `E[||a - b||^2]`; returns the value and the gradient at `b`.
pub fn mse(a: &Matrix, b: &Matrix) -> Result<(f64, Matrix)> {
    let ones = vec![1.0; a.cols()];
    let (value, g_a, _) = weighted_square(a, b, &ones)?;
    Ok((value, g_a.map(|v| -v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn uniform_logits_give_log_k() {
        let (loss, _) = cross_entropy(&Matrix::zeros(3, 5), &[0, 4, 2]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_logits_give_zero() {
        let (loss, _) = cross_entropy(&m(&[vec![60.0, 0.0]]), &[0]).unwrap();
        assert!(loss < 1e-20);
    }

    #[test]
    fn two_class_by_hand() {
        // logits (1, 0), label 1: loss = ln(1 + e), grad = softmax - onehot
        let (loss, grad) = cross_entropy(&m(&[vec![1.0, 0.0]]), &[1]).unwrap();
        let e = 1f64.exp();
        assert!((loss - (1.0 + e).ln()).abs() < 1e-12);
        assert!((grad[(0, 0)] - e / (1.0 + e)).abs() < 1e-12);
        assert!((grad[(0, 1)] - (1.0 / (1.0 + e) - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        assert!(cross_entropy(&Matrix::zeros(1, 2), &[2]).is_err());
    }

    #[test]
    fn teacher_loss_without_deviation_is_ce() {
        let f = m(&[vec![0.5, -1.0], vec![2.0, 0.0]]);
        let logits = m(&[vec![0.2, 0.1], vec![-0.3, 0.4]]);
        let sigma = SigmaVec::ones(2);
        let (loss, _, g_ft) = rid_teacher(&logits, &[0, 1], &f, &f, &sigma).unwrap();
        let (ce, _) = cross_entropy(&logits, &[0, 1]).unwrap();
        assert_eq!(loss, ce);
        assert!(g_ft.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn teacher_penalty_vanishes_for_large_sigma() {
        let ft = m(&[vec![3.0, -1.0]]);
        let fs = m(&[vec![0.0, 1.0]]);
        let mut sigma = SigmaVec::ones(2);
        sigma.raw = vec![40.0, 40.0];
        let logits = m(&[vec![0.0, 0.0]]);
        let (loss, _, _) = rid_teacher(&logits, &[0], &ft, &fs, &sigma).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn weighted_square_by_hand() {
        // V = (1, -2), sigma = (1, e): 1 + 4/e
        let mut sigma = SigmaVec::ones(2);
        sigma.raw = vec![0.0, 1.0];
        let (value, g_fs, d_raw) = rid_student(&m(&[vec![1.0, 0.0]]), &m(&[vec![0.0, 2.0]]), &sigma).unwrap();
        let e = 1f64.exp();
        assert!((value - (1.0 + e * e + 1.0 + 4.0 / e)).abs() < 1e-12);
        assert!((g_fs[(0, 0)] + 2.0).abs() < 1e-12);
        assert!((g_fs[(0, 1)] - 4.0 / e).abs() < 1e-12);
        assert!((d_raw[0] - (2.0 - 1.0)).abs() < 1e-12);
        assert!((d_raw[1] - (2.0 * e * e - 4.0 / e)).abs() < 1e-12);
    }

    #[test]
    fn student_loss_at_zero_deviation() {
        let f = m(&[vec![1.0, 2.0, 3.0]]);
        let sigma = SigmaVec::ones(3);
        let (value, _, d_raw) = rid_student(&f, &f, &sigma).unwrap();
        assert_eq!(value, 3.0);
        assert!(d_raw.iter().all(|&d| d > 0.0));
    }

    #[test]
    fn vid_unit_sigma_zero_mean() {
        let t = m(&[vec![1.0, -2.0], vec![3.0, 0.0]]);
        let (value, _, _) = vid_term(&t, &Matrix::zeros(2, 2), &SigmaVec::ones(2)).unwrap();
        // (1 + 9)/2/2 + (4 + 0)/2/2
        assert!((value - 3.5).abs() < 1e-12);
    }

    #[test]
    fn vid_exact_fit_clamps() {
        let t = m(&[vec![1.0, 2.0]]);
        let mut sigma = SigmaVec::ones(2);
        sigma.raw = vec![-50.0, -50.0];
        let (value, _, d_raw) = vid_term(&t, &t, &sigma).unwrap();
        assert!((value - 2.0 * VID_SIGMA_MIN.ln()).abs() < 1e-12);
        assert_eq!(d_raw, vec![0.0, 0.0]);
    }

    #[test]
    fn mse_of_equal_inputs() {
        let a = m(&[vec![1.0, 2.0]]);
        assert_eq!(mse(&a, &a).unwrap().0, 0.0);
        assert!(mse(&a, &Matrix::zeros(1, 3)).is_err());
    }
}
