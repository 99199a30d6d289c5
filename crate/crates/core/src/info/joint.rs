use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a distribution.
pub const SUM_TOL: f64 = 1e-12;
/// Cells below this value are treated as exact zeros before taking logs.
pub const ZERO_CELL: f64 = 1e-15;

/// One of the three variables of a [`Joint3`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    Y,
    T,
    S,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Y, Axis::T, Axis::S];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Axis::Y => 0,
            Axis::T => 1,
            Axis::S => 2,
        }
    }

    /// The axis that is neither `a` nor `b`.
    pub fn remaining(a: Axis, b: Axis) -> Result<Axis> {
        if a == b {
            return Err(Error::InvalidArgument(format!(
                "axis {a:?} given twice"
            )));
        }
        Ok(Axis::ALL
            .into_iter()
            .find(|&c| c != a && c != b)
            .expect("three axes"))
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::Y => "y",
            Axis::T => "t",
            Axis::S => "s",
        };
        f.write_str(s)
    }
}

pub(crate) fn validate_probs(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty distribution".into()));
    }
    let mut sum = 0.0;
    for (i, &v) in p.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "cell {i} has value {v}"
            )));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidDistribution(format!(
            "cells sum to {sum}, not 1"
        )));
    }
    Ok(())
}

/// A probability table over two finite alphabets, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint2 {
    rows: usize,
    cols: usize,
    p: Vec<f64>,
}

impl Joint2 {
    pub fn new(rows: usize, cols: usize, p: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || p.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} cells for a {rows}x{cols} table",
                p.len()
            )));
        }
        validate_probs(&p)?;
        Ok(Self { rows, cols, p })
    }

    /// Builds a table from nonnegative weights, normalizing them to sum to one.
    pub fn from_weights(rows: usize, cols: usize, w: Vec<f64>) -> Result<Self> {
        Self::new(rows, cols, normalize(w)?)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.p[a * self.cols + b]
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.p.chunks_exact(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for r in self.p.chunks_exact(self.cols) {
            for (mj, v) in m.iter_mut().zip(r) {
                *mj += v;
            }
        }
        m
    }

    pub fn transpose(&self) -> Joint2 {
        let mut p = vec![0.0; self.p.len()];
        for a in 0..self.rows {
            for b in 0..self.cols {
                p[b * self.rows + a] = self.get(a, b);
            }
        }
        Joint2 {
            rows: self.cols,
            cols: self.rows,
            p,
        }
    }
}

/// Optional human-readable symbol names per axis.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Labels {
    pub y: Vec<String>,
    pub t: Vec<String>,
    pub s: Vec<String>,
}

/// A joint distribution over `Y x T x S`, stored dense with index `(y, t, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint3 {
    card: [usize; 3],
    p: Vec<f64>,
    labels: Option<Labels>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Joint3File {
    card: [usize; 3],
    p: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Labels>,
}

pub(crate) fn normalize(mut w: Vec<f64>) -> Result<Vec<f64>> {
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidDistribution(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidDistribution("weights sum to zero".into()));
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

impl Joint3 {
    pub fn new(card: [usize; 3], p: Vec<f64>) -> Result<Self> {
        if card.contains(&0) {
            return Err(Error::Shape(format!("alphabet sizes {card:?} must be >= 1")));
        }
        if p.len() != card.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "{} cells for cardinalities {card:?}",
                p.len()
            )));
        }
        validate_probs(&p)?;
        Ok(Self {
            card,
            p,
            labels: None,
        })
    }

    /// Builds a joint from nonnegative weights, normalizing them.
    pub fn from_weights(card: [usize; 3], w: Vec<f64>) -> Result<Self> {
        Self::new(card, normalize(w)?)
    }

    /// Builds a joint from a weight function over `(y, t, s)`, normalizing.
    pub fn from_fn(card: [usize; 3], f: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let mut w = Vec::with_capacity(card.iter().product());
        for y in 0..card[0] {
            for t in 0..card[1] {
                for s in 0..card[2] {
                    w.push(f(y, t, s));
                }
            }
        }
        Self::from_weights(card, w)
    }

    /// Empirical distribution of `(y, t, s)` symbol triples.
    pub fn from_samples(samples: &[(usize, usize, usize)], card: [usize; 3]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no samples".into()));
        }
        if card.contains(&0) {
            return Err(Error::Shape(format!("alphabet sizes {card:?} must be >= 1")));
        }
        let mut counts = vec![0u64; card.iter().product()];
        for (i, &(y, t, s)) in samples.iter().enumerate() {
            if y >= card[0] || t >= card[1] || s >= card[2] {
                return Err(Error::InvalidArgument(format!(
                    "sample {i} = ({y}, {t}, {s}) outside alphabets {card:?}"
                )));
            }
            counts[(y * card[1] + t) * card[2] + s] += 1;
        }
        let n = samples.len() as f64;
        Self::new(card, counts.into_iter().map(|c| c as f64 / n).collect())
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        if labels.y.len() != self.card[0]
            || labels.t.len() != self.card[1]
            || labels.s.len() != self.card[2]
        {
            return Err(Error::Shape("label table does not match alphabets".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    #[inline]
    pub fn card(&self) -> [usize; 3] {
        self.card
    }

    #[inline]
    pub fn card_y(&self) -> usize {
        self.card[0]
    }

    #[inline]
    pub fn card_t(&self) -> usize {
        self.card[1]
    }

    #[inline]
    pub fn card_s(&self) -> usize {
        self.card[2]
    }

    #[inline]
    pub fn index(&self, y: usize, t: usize, s: usize) -> usize {
        (y * self.card[1] + t) * self.card[2] + s
    }

    #[inline]
    pub fn get(&self, y: usize, t: usize, s: usize) -> f64 {
        self.p[self.index(y, t, s)]
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    /// Iterates `((y, t, s), p)` over every cell.
    pub fn cells(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        let [_, ct, cs] = self.card;
        self.p
            .iter()
            .enumerate()
            .map(move |(i, &v)| ((i / (ct * cs), (i / cs) % ct, i % cs), v))
    }

    /// Marginal distribution of a single axis.
    pub fn marginal(&self, axis: Axis) -> Vec<f64> {
        let mut m = vec![0.0; self.card[axis.index()]];
        for ((y, t, s), v) in self.cells() {
            m[[y, t, s][axis.index()]] += v;
        }
        m
    }

    /// Pairwise marginal with `a` as rows and `b` as columns.
    pub fn marginal2(&self, a: Axis, b: Axis) -> Result<Joint2> {
        Axis::remaining(a, b)?;
        let (ra, cb) = (self.card[a.index()], self.card[b.index()]);
        let mut p = vec![0.0; ra * cb];
        for ((y, t, s), v) in self.cells() {
            let idx = [y, t, s];
            p[idx[a.index()] * cb + idx[b.index()]] += v;
        }
        Ok(Joint2 { rows: ra, cols: cb, p })
    }

    /// Reorders the axes: the result's `(Y, T, S)` are this joint's `order[0..3]`.
    pub fn permute(&self, order: [Axis; 3]) -> Result<Joint3> {
        let mut seen = [false; 3];
        for a in order {
            seen[a.index()] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument(format!("{order:?} is not a permutation")));
        }
        let card = order.map(|a| self.card[a.index()]);
        let mut p = vec![0.0; self.p.len()];
        for ((y, t, s), v) in self.cells() {
            let src = [y, t, s];
            let dst = order.map(|a| src[a.index()]);
            p[(dst[0] * card[1] + dst[1]) * card[2] + dst[2]] = v;
        }
        Ok(Joint3 {
            card,
            p,
            labels: None,
        })
    }

    /// Swaps the roles of `T` and `S`.
    pub fn swap_sources(&self) -> Joint3 {
        self.permute([Axis::Y, Axis::S, Axis::T]).expect("valid permutation")
    }

    /// Pushes `T` through a deterministic map `h` with range `0..card`.
    pub fn map_t(&self, h: &[usize], card: usize) -> Result<Joint3> {
        self.map_axis(Axis::T, h, card)
    }

    /// Pushes one axis through a deterministic map with range `0..card`.
    pub fn map_axis(&self, axis: Axis, h: &[usize], card: usize) -> Result<Joint3> {
        if h.len() != self.card[axis.index()] || h.iter().any(|&v| v >= card) || card == 0 {
            return Err(Error::InvalidArgument(format!(
                "map of length {} into 0..{card} does not fit axis {axis}",
                h.len()
            )));
        }
        let mut new_card = self.card;
        new_card[axis.index()] = card;
        let mut p = vec![0.0; new_card.iter().product()];
        for ((y, t, s), v) in self.cells() {
            let mut idx = [y, t, s];
            idx[axis.index()] = h[idx[axis.index()]];
            p[(idx[0] * new_card[1] + idx[1]) * new_card[2] + idx[2]] += v;
        }
        Ok(Joint3 {
            card: new_card,
            p,
            labels: None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Joint3File {
            card: self.card,
            p: self.p.clone(),
            labels: self.labels.clone(),
        })
        .expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: Joint3File = serde_json::from_str(text)?;
        let j = Self::new(f.card, f.p)?;
        match f.labels {
            Some(l) => j.with_labels(l),
            None => Ok(j),
        }
    }

    /// Parses `y,t,s,prob` rows; absent cells are zero. Alphabet sizes are
    /// `1 + max index` per axis unless `card` is given. A non-numeric first
    /// line is skipped as a header.
    pub fn from_csv(text: &str, card: Option<[usize; 3]>) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Parse(format!(
                    "line {}: expected 4 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parsed = (
                fields[0].parse::<usize>(),
                fields[1].parse::<usize>(),
                fields[2].parse::<usize>(),
                fields[3].parse::<f64>(),
            );
            match parsed {
                (Ok(y), Ok(t), Ok(s), Ok(v)) => rows.push((y, t, s, v)),
                _ if rows.is_empty() && lineno == 0 => continue,
                _ => {
                    return Err(Error::Parse(format!(
                        "line {}: cannot parse {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::Parse("no rows".into()));
        }
        let card = card.unwrap_or_else(|| {
            let mut c = [0; 3];
            for &(y, t, s, _) in &rows {
                c[0] = c[0].max(y + 1);
                c[1] = c[1].max(t + 1);
                c[2] = c[2].max(s + 1);
            }
            c
        });
        let mut p = vec![0.0; card.iter().product()];
        for (y, t, s, v) in rows {
            if y >= card[0] || t >= card[1] || s >= card[2] {
                return Err(Error::Parse(format!("cell ({y}, {t}, {s}) outside {card:?}")));
            }
            p[(y * card[1] + t) * card[2] + s] += v;
        }
        Self::new(card, p)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("y,t,s,prob\n");
        for ((y, t, s), v) in self.cells() {
            if v > 0.0 {
                out.push_str(&format!("{y},{t},{s},{v:e}\n"));
            }
        }
        out
    }

    /// Reads a joint from a `.json` or `.csv` file, chosen by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::from_csv(&text, None),
            _ => Self::from_json(&text),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_tables() {
        assert!(Joint3::new([2, 1, 1], vec![0.5, 0.6]).is_err());
        assert!(Joint3::new([2, 1, 1], vec![1.5, -0.5]).is_err());
        assert!(Joint3::new([2, 1, 1], vec![1.0]).is_err());
        assert!(Joint3::new([0, 1, 1], vec![]).is_err());
        assert!(Joint2::new(1, 2, vec![0.5, f64::NAN]).is_err());
    }

    #[test]
    fn samples_cover_space() {
        let samples = [(0, 0, 0), (0, 0, 1), (1, 0, 0), (1, 0, 1)];
        let j = Joint3::from_samples(&samples, [2, 1, 2]).unwrap();
        assert!(j.probs().iter().all(|&v| v == 0.25));
        assert!(Joint3::from_samples(&[], [2, 1, 2]).is_err());
        assert!(Joint3::from_samples(&[(2, 0, 0)], [2, 1, 2]).is_err());
    }

    #[test]
    fn uniform_drop_s() {
        let j = Joint3::new([2, 2, 2], vec![0.125; 8]).unwrap();
        let m = j.marginal2(Axis::Y, Axis::T).unwrap();
        assert!(m.probs().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(j.marginal2(Axis::T, Axis::T).is_err());
    }

    #[test]
    fn permute_and_swap() {
        let j = Joint3::from_fn([2, 3, 4], |y, t, s| (1 + y + 2 * t + 5 * s) as f64).unwrap();
        let sw = j.swap_sources();
        assert_eq!(sw.card(), [2, 4, 3]);
        for ((y, t, s), v) in j.cells() {
            assert_eq!(sw.get(y, s, t), v);
        }
        assert_eq!(sw.swap_sources(), j);
        assert!(j.permute([Axis::Y, Axis::Y, Axis::S]).is_err());
    }

    #[test]
    fn json_and_csv_formats() {
        let j = Joint3::from_fn([2, 2, 1], |y, t, _| (1 + y + t) as f64).unwrap();
        let back = Joint3::from_json(&j.to_json()).unwrap();
        assert_eq!(back, j);
        assert!(Joint3::from_json(r#"{"card":[1,1,1],"p":[1.0],"extra":1}"#).is_err());

        let csv = "y,t,s,prob\n0,0,0,0.5\n1,1,1,0.5\n";
        let c = Joint3::from_csv(csv, None).unwrap();
        assert_eq!(c.card(), [2, 2, 2]);
        assert_eq!(c.get(0, 1, 0), 0.0);
        assert_eq!(c.get(1, 1, 1), 0.5);
        assert!(Joint3::from_csv("0,0,0\n", None).is_err());
    }
}
