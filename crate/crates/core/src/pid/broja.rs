//! Entropic mirror descent over the pairwise-marginal polytope, with
//! iterative proportional fitting as the projection.

use super::atoms::{SolverDiag, SolverOptions};
use crate::error::Result;
use crate::info::{Axis, Joint3, ZERO_CELL};

const LN2: f64 = std::f64::consts::LN_2;
const MAX_HALVINGS: usize = 60;
const FINAL_IPF_ROUNDS: usize = 20_000;
const SNAP_IPF_ROUNDS: usize = 2_000;
const SNAP_THRESHOLDS: [f64; 7] = [1e-12, 1e-10, 1e-8, 1e-6, 1e-5, 1e-4, 1e-3];
const SNAP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct UniqueSolution {
    /// Minimal `I_Q(Y:T|S)` found, in bits.
    pub value: f64,
    /// The minimizing joint.
    pub q: Joint3,
    pub diag: SolverDiag,
}

/// `Q0(y,t,s) = P(y,t) P(y,s) / P(y)`, the coupling that makes `T` and `S`
/// conditionally independent given `Y`.
pub fn feasible_init(p: &Joint3) -> Joint3 {
    let [cy, ct, cs] = p.card();
    let pyt = p.marginal2(Axis::Y, Axis::T).expect("distinct axes");
    let pys = p.marginal2(Axis::Y, Axis::S).expect("distinct axes");
    let py = p.marginal(Axis::Y);
    let mut q = vec![0.0; cy * ct * cs];
    for y in 0..cy {
        if py[y] <= 0.0 {
            continue;
        }
        for t in 0..ct {
            for s in 0..cs {
                q[(y * ct + t) * cs + s] = pyt.get(y, t) * pys.get(y, s) / py[y];
            }
        }
    }
    Joint3::from_weights(p.card(), q).expect("coupling of a valid joint")
}

/// Largest absolute deviation of `q`'s `(Y,T)` and `(Y,S)` marginals from `p`'s.
pub fn marginal_violation(p: &Joint3, q: &Joint3) -> f64 {
    let mut worst: f64 = 0.0;
    for b in [Axis::T, Axis::S] {
        let mp = p.marginal2(Axis::Y, b).expect("distinct axes");
        let mq = q.marginal2(Axis::Y, b).expect("distinct axes");
        for (a, c) in mp.probs().iter().zip(mq.probs()) {
            worst = worst.max((a - c).abs());
        }
    }
    worst
}

/// Working state: dense cells plus the targets they must reproduce.
struct Problem {
    card: [usize; 3],
    support: Vec<bool>,
    target_yt: Vec<f64>,
    target_ys: Vec<f64>,
    // scratch marginals
    m_yt: Vec<f64>,
    m_ys: Vec<f64>,
    m_ts: Vec<f64>,
    m_s: Vec<f64>,
}

impl Problem {
    fn new(p: &Joint3) -> Self {
        let [cy, ct, cs] = p.card();
        let target_yt = p.marginal2(Axis::Y, Axis::T).expect("distinct").probs().to_vec();
        let target_ys = p.marginal2(Axis::Y, Axis::S).expect("distinct").probs().to_vec();
        let mut support = vec![false; cy * ct * cs];
        for y in 0..cy {
            for t in 0..ct {
                for s in 0..cs {
                    support[(y * ct + t) * cs + s] =
                        target_yt[y * ct + t] > 0.0 && target_ys[y * cs + s] > 0.0;
                }
            }
        }
        Self {
            card: [cy, ct, cs],
            support,
            target_yt,
            target_ys,
            m_yt: vec![0.0; cy * ct],
            m_ys: vec![0.0; cy * cs],
            m_ts: vec![0.0; ct * cs],
            m_s: vec![0.0; cs],
        }
    }

    fn refresh_marginals(&mut self, q: &[f64]) {
        let [cy, ct, cs] = self.card;
        self.m_yt.iter_mut().for_each(|v| *v = 0.0);
        self.m_ys.iter_mut().for_each(|v| *v = 0.0);
        self.m_ts.iter_mut().for_each(|v| *v = 0.0);
        self.m_s.iter_mut().for_each(|v| *v = 0.0);
        for y in 0..cy {
            for t in 0..ct {
                for s in 0..cs {
                    let v = q[(y * ct + t) * cs + s];
                    self.m_yt[y * ct + t] += v;
                    self.m_ys[y * cs + s] += v;
                    self.m_ts[t * cs + s] += v;
                    self.m_s[s] += v;
                }
            }
        }
    }

    /// `I_Q(Y:T|S)` in bits, using `q`'s own marginals.
    fn objective(&mut self, q: &[f64]) -> f64 {
        self.refresh_marginals(q);
        let [cy, ct, cs] = self.card;
        let mut acc = 0.0;
        for y in 0..cy {
            for t in 0..ct {
                for s in 0..cs {
                    let v = q[(y * ct + t) * cs + s];
                    if v < ZERO_CELL {
                        continue;
                    }
                    acc += v * (v * self.m_s[s] / (self.m_ys[y * cs + s] * self.m_ts[t * cs + s])).ln();
                }
            }
        }
        (acc / LN2).max(0.0)
    }

    /// Gradient of the objective in nats; valid after `objective` refreshed the marginals.
    fn gradient(&self, q: &[f64], grad: &mut [f64]) {
        let [cy, ct, cs] = self.card;
        for y in 0..cy {
            for t in 0..ct {
                for s in 0..cs {
                    let i = (y * ct + t) * cs + s;
                    let v = q[i];
                    grad[i] = if v < ZERO_CELL {
                        0.0
                    } else {
                        v.ln() + self.m_s[s].ln() - self.m_ys[y * cs + s].ln() - self.m_ts[t * cs + s].ln()
                    };
                }
            }
        }
    }

    /// Whether every positive target cell still has some mass to scale.
    fn covers_targets(&mut self, q: &[f64]) -> bool {
        self.refresh_marginals(q);
        let ok_t = self.m_yt.iter().zip(&self.target_yt).all(|(m, t)| *t == 0.0 || *m > 0.0);
        let ok_s = self.m_ys.iter().zip(&self.target_ys).all(|(m, t)| *t == 0.0 || *m > 0.0);
        ok_t && ok_s
    }

    fn violation(&mut self, q: &[f64]) -> f64 {
        self.refresh_marginals(q);
        let a = self
            .m_yt
            .iter()
            .zip(&self.target_yt)
            .map(|(m, t)| (m - t).abs())
            .fold(0.0, f64::max);
        let b = self
            .m_ys
            .iter()
            .zip(&self.target_ys)
            .map(|(m, t)| (m - t).abs())
            .fold(0.0, f64::max);
        a.max(b)
    }

    /// Alternately rescales toward the `(Y,T)` and `(Y,S)` targets. Returns the
    /// final violation.
    fn fit(&mut self, q: &mut [f64], rounds: usize, tol: f64) -> f64 {
        let [cy, ct, cs] = self.card;
        for _ in 0..rounds {
            self.refresh_marginals(q);
            for y in 0..cy {
                for t in 0..ct {
                    let m = self.m_yt[y * ct + t];
                    let f = if m > 0.0 { self.target_yt[y * ct + t] / m } else { 0.0 };
                    for s in 0..cs {
                        q[(y * ct + t) * cs + s] *= f;
                    }
                }
            }
            self.refresh_marginals(q);
            for y in 0..cy {
                for s in 0..cs {
                    let m = self.m_ys[y * cs + s];
                    let f = if m > 0.0 { self.target_ys[y * cs + s] / m } else { 0.0 };
                    for t in 0..ct {
                        q[(y * ct + t) * cs + s] *= f;
                    }
                }
            }
            if self.violation(q) < tol {
                break;
            }
        }
        self.violation(q)
    }
}

/// Restores the marginals of a final iterate to within `tol`.
///
/// Multiplicative steps only approach a face of the polytope geometrically,
/// and proportional fitting stalls when the iterate has already lost one of
/// the cells that must vanish there. Cells below a growing threshold are
/// therefore snapped to zero and fitting is repeated on the reduced support.
/// A snapped point is kept if it is feasible and beats the best candidate so
/// far (or, when plain fitting failed, is no worse than the unsnapped point).
fn project(prob: &mut Problem, q: &mut Vec<f64>, tol: f64) -> f64 {
    let mut fitted = q.clone();
    let violation = prob.fit(&mut fitted, FINAL_IPF_ROUNDS, tol);
    let reference = prob.objective(&fitted);
    let mut best = (violation < tol).then(|| (fitted.clone(), reference, violation));
    for thr in SNAP_THRESHOLDS {
        if !q.iter().any(|&v| v > 0.0 && v < thr) {
            continue;
        }
        let mut snapped = q.clone();
        snapped.iter_mut().filter(|v| **v < thr).for_each(|v| *v = 0.0);
        if !prob.covers_targets(&snapped) {
            continue;
        }
        let v = prob.fit(&mut snapped, SNAP_IPF_ROUNDS, tol);
        if v >= tol {
            continue;
        }
        let o = prob.objective(&snapped);
        let better = match &best {
            Some((_, b, _)) => o < *b,
            None => o <= reference + SNAP_SLACK,
        };
        if better {
            best = Some((snapped, o, v));
        }
    }
    match best {
        Some((b, _, v)) => {
            *q = b;
            v
        }
        None => {
            *q = fitted;
            violation
        }
    }
}

/// Minimizes `I_Q(Y:T|S)` over joints `Q` sharing the `(Y,T)` and `(Y,S)`
/// marginals of `p`.
///
/// Each iteration takes a multiplicative step `Q <- Q exp(-eta grad)` on the
/// support of the coupling and restores the marginals by proportional fitting.
/// The step halves whenever the objective would increase and grows back by
/// half again after each accepted step, up to `max_step_size`.
pub fn solve_unique(p: &Joint3, opts: &SolverOptions) -> Result<UniqueSolution> {
    opts.validate()?;
    let mut prob = Problem::new(p);
    let mut q = feasible_init(p).probs().to_vec();
    let mut obj = prob.objective(&q);
    let mut grad = vec![0.0; q.len()];
    let mut cand = vec![0.0; q.len()];
    let mut eta = opts.step_size;
    let mut converged = obj == 0.0;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iters {
        iterations += 1;
        prob.objective(&q);
        prob.gradient(&q, &mut grad);

        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            for (i, c) in cand.iter_mut().enumerate() {
                *c = if prob.support[i] { q[i] * (-eta * grad[i]).exp() } else { 0.0 };
            }
            let total: f64 = cand.iter().sum();
            if total > 0.0 && total.is_finite() {
                cand.iter_mut().for_each(|v| *v /= total);
                prob.fit(&mut cand, opts.ipf_rounds, opts.marginal_tol);
                let c_obj = prob.objective(&cand);
                if c_obj <= obj {
                    accepted = Some(c_obj);
                    break;
                }
            }
            eta *= 0.5;
        }

        match accepted {
            Some(c_obj) => {
                let gain = obj - c_obj;
                std::mem::swap(&mut q, &mut cand);
                obj = c_obj;
                eta = (eta * 1.5).min(opts.max_step_size);
                if gain < opts.objective_tol {
                    converged = true;
                }
            }
            // No step size decreases the objective: stationary to working precision.
            None => converged = true,
        }
    }

    let max_violation = project(&mut prob, &mut q, opts.marginal_tol);
    let q = Joint3::from_weights(p.card(), q)?;
    let obj = prob.objective(q.probs());
    Ok(UniqueSolution {
        value: obj,
        q,
        diag: SolverDiag {
            iterations,
            objective: obj,
            max_violation,
            converged,
        },
    })
}
