//! Intersection information: the largest `I(Y:Q)` over variables `Q` that
//! carry no information about `Y` beyond what `T` alone and `S` alone carry,
//! i.e. `I(Y:Q|T) = I(Y:Q|S) = 0`.
//!
//! Two estimators are provided. The deterministic one enumerates common
//! functions `Q = g(T) = h(S)` (almost surely), which satisfy both
//! constraints exactly and therefore give a certified lower bound. The
//! stochastic one searches channels `P(Q|Y)` by penalized projected-gradient
//! ascent and reports its residual constraint violation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::{Axis, Joint2, Joint3, JointN};
use crate::pid::{pid, SolverOptions};
use crate::random;

/// Alphabet cap for the deterministic enumeration.
pub const MAX_ENUM_CARD: usize = 6;
/// Slack allowed when checking that the estimate stays below the redundancy.
pub const BOUND_TOL: f64 = 1e-3;

const LN2: f64 = std::f64::consts::LN_2;
const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    DeterministicCommon,
    Stochastic,
}

/// A witness variable `Q` together with the value it achieves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelQ {
    pub kind: ChannelKind,
    pub q_card: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_t: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_s: Option<Vec<usize>>,
    /// Row `y` holds `P(Q = q | Y = y)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_q_given_y: Option<Vec<Vec<f64>>>,
    /// `I(Y:Q)` in bits.
    pub achieved_value: f64,
    /// `I(Y:Q|T) + I(Y:Q|S)` in bits.
    pub constraint_violation: f64,
    /// Whether the violation is within the requested tolerance.
    pub feasible: bool,
}

impl ChannelQ {
    /// The constant variable, feasible for every joint with value zero.
    pub fn constant(kind: ChannelKind, p: &Joint3) -> Self {
        ChannelQ {
            kind,
            q_card: 1,
            map_t: (kind == ChannelKind::DeterministicCommon).then(|| vec![0; p.card_t()]),
            map_s: (kind == ChannelKind::DeterministicCommon).then(|| vec![0; p.card_s()]),
            p_q_given_y: (kind == ChannelKind::Stochastic).then(|| vec![vec![1.0]; p.card_y()]),
            achieved_value: 0.0,
            constraint_violation: 0.0,
            feasible: true,
        }
    }
}

/// `I(Y:Q|T) + I(Y:Q|S)` for `Q` a deterministic function of `T`, evaluated
/// on the joint `(Y, T, S, Q)`.
fn common_violation(p: &Joint3, map_t: &[usize], q_card: usize) -> Result<f64> {
    let n = JointN::from(p).augment_with_function(1, map_t, q_card)?;
    Ok(n.cond_mutual_info(&[0], &[3], &[1])? + n.cond_mutual_info(&[0], &[3], &[2])?)
}

/// For a map on `T`, the map on `S` that agrees with it almost surely, if any.
fn agreeing_map(pts: &Joint2, g: &[usize]) -> Option<Vec<usize>> {
    let mut h = vec![usize::MAX; pts.cols()];
    for s in 0..pts.cols() {
        for t in 0..pts.rows() {
            if pts.get(t, s) > 0.0 {
                if h[s] == usize::MAX {
                    h[s] = g[t];
                } else if h[s] != g[t] {
                    return None;
                }
            }
        }
        if h[s] == usize::MAX {
            h[s] = 0;
        }
    }
    Some(h)
}

/// Best common function `Q = g(T) = h(S)` with at most `max_q_card` symbols.
pub fn red_cap_deterministic(p: &Joint3, max_q_card: usize) -> Result<ChannelQ> {
    if p.card_t() > MAX_ENUM_CARD || p.card_s() > MAX_ENUM_CARD {
        return Err(Error::UnsupportedSize(format!(
            "enumeration needs |T|, |S| <= {MAX_ENUM_CARD}, got {:?}",
            p.card()
        )));
    }
    if max_q_card == 0 {
        return Err(Error::InvalidArgument("q alphabet must be nonempty".into()));
    }
    let ct = p.card_t();
    let q_card = max_q_card.min(ct);
    let pts = p.marginal2(Axis::T, Axis::S)?;

    let mut best = ChannelQ::constant(ChannelKind::DeterministicCommon, p);
    let mut g = vec![0usize; ct];
    loop {
        if let Some(h) = agreeing_map(&pts, &g) {
            let used = g.iter().max().map_or(1, |m| m + 1);
            let value = p.map_t(&g, used)?.mi_yt();
            if value > best.achieved_value + 1e-15 {
                best = ChannelQ {
                    kind: ChannelKind::DeterministicCommon,
                    q_card: used,
                    map_t: Some(g.clone()),
                    map_s: Some(h),
                    p_q_given_y: None,
                    achieved_value: value,
                    constraint_violation: common_violation(p, &g, used)?,
                    feasible: true,
                };
            }
        }
        // next map in lexicographic order
        let mut k = 0;
        while k < ct {
            g[k] += 1;
            if g[k] < q_card {
                break;
            }
            g[k] = 0;
            k += 1;
        }
        if k == ct {
            break;
        }
    }
    Ok(best)
}

/// Schedule and tolerance for [`red_cap_stochastic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StochasticOptions {
    pub lambda0: f64,
    pub lambda_factor: f64,
    pub stages: usize,
    pub iters_per_stage: usize,
    /// Largest violation (bits) for a result to count as an estimate.
    pub tol: f64,
    pub random_restarts: usize,
    pub seed: u64,
}

impl Default for StochasticOptions {
    fn default() -> Self {
        Self {
            lambda0: 1.0,
            lambda_factor: 10.0,
            stages: 4,
            iters_per_stage: 400,
            tol: 1e-3,
            random_restarts: 4,
            seed: 0,
        }
    }
}

/// Channel objective pieces for a fixed joint.
struct ChannelProblem {
    py: Vec<f64>,
    pyt: Joint2,
    pys: Joint2,
    q_card: usize,
}

impl ChannelProblem {
    /// `I(Y:Q|X)` in bits and its gradient in nats for the pair marginal
    /// `p(y, x)`, with `Q` drawn from row `y` of `w`.
    fn cond_term(pyx: &Joint2, w: &[f64], q_card: usize, grad: Option<&mut [f64]>) -> f64 {
        let (cy, cx) = (pyx.rows(), pyx.cols());
        let px = pyx.col_marginal();
        let mut m = vec![0.0; cx * q_card];
        for x in 0..cx {
            if px[x] <= 0.0 {
                continue;
            }
            for y in 0..cy {
                let c = pyx.get(y, x) / px[x];
                for q in 0..q_card {
                    m[x * q_card + q] += c * w[y * q_card + q];
                }
            }
        }
        let mut value = 0.0;
        for y in 0..cy {
            for x in 0..cx {
                let pyx_v = pyx.get(y, x);
                if pyx_v <= 0.0 {
                    continue;
                }
                for q in 0..q_card {
                    let wv = w[y * q_card + q];
                    if wv > 0.0 {
                        value += pyx_v * wv * (wv / m[x * q_card + q]).ln();
                    }
                }
            }
        }
        if let Some(grad) = grad {
            for y in 0..cy {
                for q in 0..q_card {
                    let mut gv = 0.0;
                    let lw = w[y * q_card + q].max(LOG_FLOOR).ln();
                    for x in 0..cx {
                        let pyx_v = pyx.get(y, x);
                        if pyx_v > 0.0 {
                            gv += pyx_v * (lw - m[x * q_card + q].max(LOG_FLOOR).ln());
                        }
                    }
                    grad[y * q_card + q] = gv;
                }
            }
        }
        (value / LN2).max(0.0)
    }

    fn mi(&self, w: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let pyx = Joint2::new(self.py.len(), 1, self.py.clone()).expect("valid marginal");
        Self::cond_term(&pyx, w, self.q_card, grad)
    }

    /// `(I(Y:Q), I(Y:Q|T) + I(Y:Q|S))`.
    fn evaluate(&self, w: &[f64]) -> (f64, f64) {
        let v = self.mi(w, None);
        let c = Self::cond_term(&self.pyt, w, self.q_card, None)
            + Self::cond_term(&self.pys, w, self.q_card, None);
        (v, c)
    }

    /// Penalized objective and its gradient (nats).
    fn penalized(&self, w: &[f64], lambda: f64, grad: &mut [f64]) -> f64 {
        let n = grad.len();
        let mut g1 = vec![0.0; n];
        let mut g2 = vec![0.0; n];
        let mut g3 = vec![0.0; n];
        let v = self.mi(w, Some(&mut g1));
        let ct = Self::cond_term(&self.pyt, w, self.q_card, Some(&mut g2));
        let cs = Self::cond_term(&self.pys, w, self.q_card, Some(&mut g3));
        for i in 0..n {
            grad[i] = g1[i] - lambda * (g2[i] + g3[i]);
        }
        v - lambda * (ct + cs)
    }
}

/// Euclidean projection of `v` onto the probability simplex.
pub fn project_simplex(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

fn project_rows(w: &mut [f64], q_card: usize) {
    for row in w.chunks_exact_mut(q_card) {
        project_simplex(row);
    }
}

fn ascend(prob: &ChannelProblem, w: &mut [f64], opts: &StochasticOptions) {
    let n = w.len();
    let mut grad = vec![0.0; n];
    let mut cand = vec![0.0; n];
    let mut lambda = opts.lambda0;
    for _ in 0..opts.stages {
        let mut step = 1.0;
        let mut obj = prob.penalized(w, lambda, &mut grad);
        for _ in 0..opts.iters_per_stage {
            let mut improved = false;
            for _ in 0..40 {
                cand.iter_mut()
                    .zip(w.iter().zip(&grad))
                    .for_each(|(c, (wv, gv))| *c = wv + step * gv);
                project_rows(&mut cand, prob.q_card);
                let mut g_new = vec![0.0; n];
                let c_obj = prob.penalized(&cand, lambda, &mut g_new);
                if c_obj > obj {
                    w.copy_from_slice(&cand);
                    grad = g_new;
                    let gain = c_obj - obj;
                    obj = c_obj;
                    step *= 1.5;
                    improved = gain > 1e-13;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        lambda *= opts.lambda_factor;
    }
}

/// Penalized search over channels `P(Q|Y)` with `q_card` output symbols.
///
/// Starts include the constant channel, softened deterministic maps `Y -> Q`
/// and random rows. The reported channel is the feasible start (violation at
/// most `opts.tol`) with the largest `I(Y:Q)`; the constant channel
/// guarantees one exists.
pub fn red_cap_stochastic(p: &Joint3, q_card: usize, opts: &StochasticOptions) -> Result<ChannelQ> {
    if q_card == 0 {
        return Err(Error::InvalidArgument("q alphabet must be nonempty".into()));
    }
    if opts.stages == 0 || opts.lambda0 <= 0.0 || opts.lambda_factor < 1.0 || opts.tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("bad penalty schedule {opts:?}")));
    }
    let cy = p.card_y();
    let prob = ChannelProblem {
        py: p.marginal(Axis::Y),
        pyt: p.marginal2(Axis::Y, Axis::T)?,
        pys: p.marginal2(Axis::Y, Axis::S)?,
        q_card,
    };

    let mut starts: Vec<Vec<f64>> = vec![vec![1.0 / q_card as f64; cy * q_card]];
    let n_maps = (q_card as u64).checked_pow(cy as u32).unwrap_or(u64::MAX);
    if q_card > 1 && n_maps <= 256 {
        for code in 1..n_maps {
            let mut w = vec![0.02 / q_card as f64; cy * q_card];
            let mut c = code;
            for y in 0..cy {
                w[y * q_card + (c % q_card as u64) as usize] += 0.98;
                c /= q_card as u64;
            }
            starts.push(w);
        }
    }
    let mut rng = random::rng(opts.seed);
    for _ in 0..opts.random_restarts {
        let mut w = Vec::with_capacity(cy * q_card);
        for _ in 0..cy {
            w.extend(random::dirichlet(&mut rng, q_card, 1.0));
        }
        starts.push(w);
    }

    let mut best = ChannelQ::constant(ChannelKind::Stochastic, p);
    best.p_q_given_y = Some(vec![vec![1.0 / q_card as f64; q_card]; cy]);
    best.q_card = q_card;
    for mut w in starts {
        ascend(&prob, &mut w, opts);
        let (value, violation) = prob.evaluate(&w);
        if violation <= opts.tol && value > best.achieved_value {
            best = ChannelQ {
                kind: ChannelKind::Stochastic,
                q_card,
                map_t: None,
                map_s: None,
                p_q_given_y: Some(w.chunks_exact(q_card).map(<[f64]>::to_vec).collect()),
                achieved_value: value,
                constraint_violation: violation,
                feasible: true,
            };
        }
    }
    Ok(best)
}

/// Outcome of checking that intersection information stays below the redundancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub red_cap: f64,
    pub red_cap_deterministic: f64,
    pub red_cap_stochastic: Option<f64>,
    pub red_broja: f64,
    pub holds: bool,
    pub gap: f64,
}

/// Compares the best feasible intersection-information estimate with the
/// redundancy. Infeasible stochastic runs are ignored.
pub fn verify_lower_bound(
    p: &Joint3,
    q_card: usize,
    stochastic: Option<&StochasticOptions>,
    solver: &SolverOptions,
) -> Result<LowerBoundReport> {
    let det = red_cap_deterministic(p, q_card)?;
    let stoch = match stochastic {
        Some(o) => {
            let c = red_cap_stochastic(p, q_card, o)?;
            c.feasible.then_some(c.achieved_value)
        }
        None => None,
    };
    let red_cap = stoch.map_or(det.achieved_value, |s| s.max(det.achieved_value));
    let red_broja = pid(p, solver)?.red;
    Ok(LowerBoundReport {
        red_cap,
        red_cap_deterministic: det.achieved_value,
        red_cap_stochastic: stoch,
        red_broja,
        holds: red_cap <= red_broja + BOUND_TOL,
        gap: red_broja - red_cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn copy() -> Joint3 {
        Joint3::from_fn([2, 2, 2], |y, t, s| if y == t && t == s { 1.0 } else { 0.0 }).unwrap()
    }

    fn xor() -> Joint3 {
        Joint3::from_fn([2, 2, 2], |y, t, s| if t == y ^ s { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn simplex_projection() {
        let mut v = [0.5, 0.5];
        project_simplex(&mut v);
        assert_eq!(v, [0.5, 0.5]);
        let mut v = [2.0, 0.0, -1.0];
        project_simplex(&mut v);
        assert_eq!(v, [1.0, 0.0, 0.0]);
        let mut v = [0.4, 0.3, 0.1];
        project_simplex(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((v[0] - 0.4 - 0.2 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn copy_triple_identity_maps() {
        let c = red_cap_deterministic(&copy(), 2).unwrap();
        assert!((c.achieved_value - 1.0).abs() < 1e-12);
        assert_eq!(c.constraint_violation, 0.0);
        let g = c.map_t.unwrap();
        assert_ne!(g[0], g[1]);
        assert_eq!(c.map_s.unwrap(), g);
    }

    #[test]
    fn example_one_only_constant() {
        // Y = U1, T = U2, S = U1
        let p = Joint3::from_fn([2, 2, 2], |y, _t, s| if y == s { 1.0 } else { 0.0 }).unwrap();
        let c = red_cap_deterministic(&p, 2).unwrap();
        assert_eq!(c.achieved_value, 0.0);
        assert_eq!(c.q_card, 1);
    }

    #[test]
    fn stochastic_copy_and_xor() {
        let o = StochasticOptions::default();
        let c = red_cap_stochastic(&copy(), 2, &o).unwrap();
        assert!(c.achieved_value >= 1.0 - 1e-3, "{c:?}");
        assert!(c.constraint_violation <= 1e-3);
        let x = red_cap_stochastic(&xor(), 2, &o).unwrap();
        assert!(x.achieved_value <= 1e-3, "{x:?}");
    }

    #[test]
    fn enumeration_cap() {
        let big = Joint3::new([1, 7, 1], vec![1.0 / 7.0; 7]).unwrap();
        assert!(matches!(red_cap_deterministic(&big, 2), Err(Error::UnsupportedSize(_))));
    }
}
