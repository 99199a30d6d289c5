//! Exhaustive grid search over the pairwise-marginal polytope, used to
//! cross-check the iterative solver on small alphabets.
//!
//! Within each `y` slice the polytope is a transportation polytope with row
//! sums `P(y,t)` and column sums `P(y,s)`. Every point is the coupling
//! `P(y,t)P(y,s)/P(y)` plus a combination of double differences
//! `e(t,s) - e(t,last) - e(last,s) + e(last,last)`, one coordinate per
//! non-last supported `(t, s)` pair.

use serde::{Deserialize, Serialize};

use super::broja::feasible_init;
use crate::error::{Error, Result};
use crate::info::{cond_mutual_info, Axis, Joint3};

/// Largest number of free coordinates the grid will search.
pub const MAX_FREE_DIMS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleOptions {
    /// Grid points per axis in every round.
    pub grid_points: usize,
    /// Rounds after the first, each zooming in around the incumbent.
    pub refinement_rounds: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            grid_points: 21,
            refinement_rounds: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub value: f64,
    pub q: Joint3,
    pub free_dims: usize,
    pub evaluations: usize,
}

struct Coord {
    y: usize,
    t: usize,
    s: usize,
    t_last: usize,
    s_last: usize,
    lo: f64,
    hi: f64,
}

fn coordinates(p: &Joint3, q0: &Joint3) -> Vec<Coord> {
    let [cy, ct, cs] = p.card();
    let pyt = p.marginal2(Axis::Y, Axis::T).expect("distinct axes");
    let pys = p.marginal2(Axis::Y, Axis::S).expect("distinct axes");
    let mut coords = Vec::new();
    for y in 0..cy {
        let ts: Vec<usize> = (0..ct).filter(|&t| pyt.get(y, t) > 0.0).collect();
        let ss: Vec<usize> = (0..cs).filter(|&s| pys.get(y, s) > 0.0).collect();
        if ts.len() < 2 || ss.len() < 2 {
            continue;
        }
        let (t_last, s_last) = (*ts.last().unwrap(), *ss.last().unwrap());
        for &t in &ts[..ts.len() - 1] {
            for &s in &ss[..ss.len() - 1] {
                let base = q0.get(y, t, s);
                coords.push(Coord {
                    y,
                    t,
                    s,
                    t_last,
                    s_last,
                    lo: -base,
                    hi: pyt.get(y, t).min(pys.get(y, s)) - base,
                });
            }
        }
    }
    coords
}

fn build(q0: &Joint3, coords: &[Coord], delta: &[f64], cells: &mut [f64]) -> bool {
    cells.copy_from_slice(q0.probs());
    for (c, &d) in coords.iter().zip(delta) {
        cells[q0.index(c.y, c.t, c.s)] += d;
        cells[q0.index(c.y, c.t, c.s_last)] -= d;
        cells[q0.index(c.y, c.t_last, c.s)] -= d;
        cells[q0.index(c.y, c.t_last, c.s_last)] += d;
    }
    for v in cells.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-14 {
                return false;
            }
            *v = 0.0;
        }
    }
    true
}

/// Grid-searches `min I_Q(Y:T|S)` over the pairwise-marginal polytope.
///
/// The objective is evaluated through [`cond_mutual_info`], independently of
/// the mirror-descent solver.
pub fn oracle_unique(p: &Joint3, opts: &OracleOptions) -> Result<OracleSolution> {
    if opts.grid_points < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points per axis".into()));
    }
    let q0 = feasible_init(p);
    let coords = coordinates(p, &q0);
    let dims = coords.len();
    if dims > MAX_FREE_DIMS {
        return Err(Error::UnsupportedSize(format!(
            "{dims} free coordinates exceed the oracle cap of {MAX_FREE_DIMS}"
        )));
    }

    let eval = |cells: &[f64]| -> Option<f64> {
        let q = Joint3::from_weights(p.card(), cells.to_vec()).ok()?;
        cond_mutual_info(&q, Axis::Y, Axis::T).ok()
    };

    let mut cells = vec![0.0; q0.probs().len()];
    let mut best_delta = vec![0.0; dims];
    let mut best = eval(q0.probs()).expect("coupling is a valid joint");
    let mut evaluations = 1;
    if dims == 0 {
        return Ok(OracleSolution {
            value: best,
            q: q0,
            free_dims: 0,
            evaluations,
        });
    }

    let n = opts.grid_points;
    let mut lo: Vec<f64> = coords.iter().map(|c| c.lo).collect();
    let mut hi: Vec<f64> = coords.iter().map(|c| c.hi).collect();
    let mut delta = vec![0.0; dims];
    let mut idx = vec![0usize; dims];

    for _round in 0..=opts.refinement_rounds {
        let step: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| (h - l) / (n - 1) as f64).collect();
        idx.iter_mut().for_each(|i| *i = 0);
        'grid: loop {
            for k in 0..dims {
                delta[k] = lo[k] + step[k] * idx[k] as f64;
            }
            if build(&q0, &coords, &delta, &mut cells) {
                if let Some(v) = eval(&cells) {
                    evaluations += 1;
                    if v < best {
                        best = v;
                        best_delta.copy_from_slice(&delta);
                    }
                }
            }
            // odometer increment
            for k in 0..dims {
                idx[k] += 1;
                if idx[k] < n {
                    continue 'grid;
                }
                idx[k] = 0;
            }
            break;
        }
        for k in 0..dims {
            let half = 2.0 * step[k];
            lo[k] = (best_delta[k] - half).max(coords[k].lo);
            hi[k] = (best_delta[k] + half).min(coords[k].hi);
        }
    }

    build(&q0, &coords, &best_delta, &mut cells);
    let q = Joint3::from_weights(p.card(), cells)?;
    Ok(OracleSolution {
        value: best,
        q,
        free_dims: dims,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_triple_has_no_free_coordinates() {
        let copy = Joint3::from_fn([2, 2, 2], |y, t, s| if y == t && t == s { 1.0 } else { 0.0 }).unwrap();
        let sol = oracle_unique(&copy, &OracleOptions::default()).unwrap();
        assert_eq!(sol.free_dims, 0);
        assert_eq!(sol.value, 0.0);
    }

    #[test]
    fn xor_reaches_zero() {
        let xor = Joint3::from_fn([2, 2, 2], |y, t, s| if t == y ^ s { 1.0 } else { 0.0 }).unwrap();
        let sol = oracle_unique(&xor, &OracleOptions::default()).unwrap();
        assert_eq!(sol.free_dims, 2);
        assert!(sol.value < 1e-12);
    }

    #[test]
    fn and_gate_reaches_zero_on_boundary() {
        let and = Joint3::from_fn([2, 2, 2], |y, t, s| if y == (t & s) { 1.0 } else { 0.0 }).unwrap();
        let sol = oracle_unique(&and, &OracleOptions::default()).unwrap();
        assert!(sol.value < 1e-9, "{}", sol.value);
    }

    #[test]
    fn rejects_large_supports() {
        let big = Joint3::new([2, 3, 3], vec![1.0 / 18.0; 18]).unwrap();
        assert!(matches!(
            oracle_unique(&big, &OracleOptions::default()),
            Err(Error::UnsupportedSize(_))
        ));
    }
}
