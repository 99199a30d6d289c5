//! Joint distributions over an arbitrary number of discrete variables.

use super::joint::{validate_probs, Joint3};
use super::measures::entropy_unchecked;
use crate::error::{Error, Result};

/// Dense joint distribution over `dims.len()` variables, row-major with the
/// last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct JointN {
    dims: Vec<usize>,
    p: Vec<f64>,
}

impl JointN {
    pub fn new(dims: Vec<usize>, p: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Shape(format!("bad dimensions {dims:?}")));
        }
        if p.len() != dims.iter().product::<usize>() {
            return Err(Error::Shape(format!("{} cells for {dims:?}", p.len())));
        }
        validate_probs(&p)?;
        Ok(Self { dims, p })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    fn unravel(&self, mut i: usize, out: &mut [usize]) {
        for (k, &d) in self.dims.iter().enumerate().rev() {
            out[k] = i % d;
            i /= d;
        }
    }

    /// Marginal over the listed axes, in the listed order.
    pub fn marginal(&self, axes: &[usize]) -> Result<JointN> {
        let mut seen = vec![false; self.dims.len()];
        for &a in axes {
            if a >= self.dims.len() || seen[a] {
                return Err(Error::InvalidArgument(format!("bad axis list {axes:?}")));
            }
            seen[a] = true;
        }
        if axes.is_empty() {
            return JointN::new(vec![1], vec![1.0]);
        }
        let dims: Vec<usize> = axes.iter().map(|&a| self.dims[a]).collect();
        let mut p = vec![0.0; dims.iter().product()];
        let mut idx = vec![0; self.dims.len()];
        for (i, &v) in self.p.iter().enumerate() {
            self.unravel(i, &mut idx);
            let mut j = 0;
            for (&a, &d) in axes.iter().zip(&dims) {
                j = j * d + idx[a];
            }
            p[j] += v;
        }
        Ok(JointN { dims, p })
    }

    /// Entropy of the marginal over `axes`.
    pub fn entropy_of(&self, axes: &[usize]) -> Result<f64> {
        Ok(entropy_unchecked(&self.marginal(axes)?.p))
    }

    /// `I(A:B|C)` computed as `H(A,C) + H(B,C) - H(A,B,C) - H(C)`.
    pub fn cond_mutual_info(&self, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
        let cat = |x: &[usize], y: &[usize]| -> Vec<usize> { x.iter().chain(y).copied().collect() };
        let ac = cat(a, c);
        let bc = cat(b, c);
        let abc = cat(&cat(a, b), c);
        let v = self.entropy_of(&ac)? + self.entropy_of(&bc)?
            - self.entropy_of(&abc)?
            - self.entropy_of(c)?;
        Ok(v)
    }

    pub fn mutual_info(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        self.cond_mutual_info(a, b, &[])
    }

    /// Appends a variable that is a deterministic function of an existing axis.
    pub fn augment_with_function(&self, axis: usize, g: &[usize], card: usize) -> Result<JointN> {
        if axis >= self.dims.len() || g.len() != self.dims[axis] || g.iter().any(|&v| v >= card) {
            return Err(Error::InvalidArgument("function does not fit axis".into()));
        }
        let mut dims = self.dims.clone();
        dims.push(card);
        let mut p = vec![0.0; self.p.len() * card];
        let mut idx = vec![0; self.dims.len()];
        for (i, &v) in self.p.iter().enumerate() {
            self.unravel(i, &mut idx);
            p[i * card + g[idx[axis]]] = v;
        }
        JointN::new(dims, p)
    }
}

impl From<&Joint3> for JointN {
    fn from(j: &Joint3) -> Self {
        JointN {
            dims: j.card().to_vec(),
            p: j.probs().to_vec(),
        }
    }
}
