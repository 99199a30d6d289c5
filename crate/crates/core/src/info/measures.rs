//! Entropy and (conditional) mutual information in bits.

use super::joint::{validate_probs, Axis, Joint2, Joint3, ZERO_CELL};
use crate::error::Result;

/// Tolerance within which a slightly negative information value is clipped to zero.
pub const CLIP_TOL: f64 = 1e-12;

#[inline]
pub(crate) fn plogp(p: f64) -> f64 {
    if p < ZERO_CELL {
        0.0
    } else {
        p * p.log2()
    }
}

#[inline]
fn clip(v: f64) -> f64 {
    if (-CLIP_TOL..0.0).contains(&v) {
        0.0
    } else {
        v
    }
}

/// Shannon entropy of a probability vector.
pub fn entropy(p: &[f64]) -> Result<f64> {
    validate_probs(p)?;
    Ok(entropy_unchecked(p))
}

pub(crate) fn entropy_unchecked(p: &[f64]) -> f64 {
    (-p.iter().map(|&v| plogp(v)).sum::<f64>()).max(0.0)
}

impl Joint2 {
    /// Joint entropy of the pair.
    pub fn entropy(&self) -> f64 {
        entropy_unchecked(self.probs())
    }
}

/// `I(A:B)` for a two-variable table.
pub fn mutual_info(d: &Joint2) -> f64 {
    let pa = d.row_marginal();
    let pb = d.col_marginal();
    let mut acc = 0.0;
    for (a, &qa) in pa.iter().enumerate() {
        for (b, &qb) in pb.iter().enumerate() {
            let v = d.get(a, b);
            if v < ZERO_CELL {
                continue;
            }
            acc += v * (v / (qa * qb)).log2();
        }
    }
    clip(acc)
}

/// `I(a:b | c)` where `c` is the axis not named.
pub fn cond_mutual_info(d: &Joint3, a: Axis, b: Axis) -> Result<f64> {
    let c = Axis::remaining(a, b)?;
    let pac = d.marginal2(a, c)?;
    let pbc = d.marginal2(b, c)?;
    let pc = d.marginal(c);
    let mut acc = 0.0;
    for ((y, t, s), v) in d.cells() {
        if v < ZERO_CELL {
            continue;
        }
        let idx = [y, t, s];
        let (ia, ib, ic) = (idx[a.index()], idx[b.index()], idx[c.index()]);
        acc += v * (v * pc[ic] / (pac.get(ia, ic) * pbc.get(ib, ic))).log2();
    }
    Ok(clip(acc))
}

impl Joint3 {
    /// `I(Y:T)`.
    pub fn mi_yt(&self) -> f64 {
        mutual_info(&self.marginal2(Axis::Y, Axis::T).expect("distinct axes"))
    }

    /// `I(Y:S)`.
    pub fn mi_ys(&self) -> f64 {
        mutual_info(&self.marginal2(Axis::Y, Axis::S).expect("distinct axes"))
    }

    /// `I(T:S)`.
    pub fn mi_ts(&self) -> f64 {
        mutual_info(&self.marginal2(Axis::T, Axis::S).expect("distinct axes"))
    }

    /// `I(Y:(T,S))`.
    pub fn mi_y_ts(&self) -> f64 {
        let [cy, ct, cs] = self.card();
        let flat = Joint2::new(cy, ct * cs, self.probs().to_vec()).expect("valid joint");
        mutual_info(&flat)
    }

    /// `I(Y:T|S)`.
    pub fn cmi_yt_s(&self) -> f64 {
        cond_mutual_info(self, Axis::Y, Axis::T).expect("distinct axes")
    }

    pub fn entropy_of(&self, axis: Axis) -> f64 {
        entropy_unchecked(&self.marginal(axis))
    }
}
