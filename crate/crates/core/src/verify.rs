//! Randomized property batches with machine-readable verdicts.
//!
//! Failures are data: every property reports how many instances were checked,
//! the worst deviation seen and up to [`MAX_COUNTEREXAMPLES`] offending inputs.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::datasets::{example_joint, make_nuisance_task, ExampleSource, SourceChoice};
use crate::error::{Error, Result};
use crate::info::{mutual_info, Axis, Joint3, JointN};
use crate::intersection::{red_cap_deterministic, red_cap_stochastic, verify_lower_bound, StochasticOptions};
use crate::pid::{pid, SolverOptions};
use crate::random::{self, Rng64};

pub const MAX_COUNTEREXAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Thm1,
    Thm2,
    Thm3,
    Lemma1,
    Examples,
    All,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Examples, Suite::Lemma1, Suite::Thm1, Suite::Thm2, Suite::Thm3];
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "thm1" => Suite::Thm1,
            "thm2" => Suite::Thm2,
            "thm3" => Suite::Thm3,
            "lemma1" => Suite::Lemma1,
            "examples" => Suite::Examples,
            "all" => Suite::All,
            other => return Err(Error::InvalidArgument(format!("unknown suite {other:?}"))),
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        write!(f, "{}", s.as_str().expect("string tag"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyVerdict {
    pub suite: Suite,
    pub property: String,
    pub passed: bool,
    pub checked: usize,
    pub failures: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub counterexamples: Vec<Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub n: usize,
    pub passed: bool,
    pub verdicts: Vec<PropertyVerdict>,
}

/// Accumulates one property's outcomes.
struct Check {
    verdict: PropertyVerdict,
}

impl Check {
    fn new(suite: Suite, property: &str, tolerance: f64) -> Self {
        Self {
            verdict: PropertyVerdict {
                suite,
                property: property.to_string(),
                passed: true,
                checked: 0,
                failures: 0,
                max_deviation: 0.0,
                tolerance,
                counterexamples: Vec::new(),
            },
        }
    }

    /// Records a deviation that must stay within the tolerance.
    fn deviation(&mut self, dev: f64, witness: impl FnOnce() -> Value) {
        let v = &mut self.verdict;
        v.checked += 1;
        if dev.is_nan() || dev > v.max_deviation {
            v.max_deviation = if dev.is_nan() { f64::INFINITY } else { dev };
        }
        if !(dev <= v.tolerance) {
            v.failures += 1;
            v.passed = false;
            if v.counterexamples.len() < MAX_COUNTEREXAMPLES {
                v.counterexamples.push(witness());
            }
        }
    }

    fn holds(&mut self, ok: bool, witness: impl FnOnce() -> Value) {
        self.deviation(if ok { 0.0 } else { f64::INFINITY }, witness);
    }

    fn error(&mut self, e: &Error, input: Value) {
        self.deviation(f64::INFINITY, || json!({"error": e.to_string(), "input": input}));
    }

    fn finish(self) -> PropertyVerdict {
        self.verdict
    }
}

fn joint_json(p: &Joint3) -> Value {
    serde_json::from_str(&p.to_json()).expect("joint serializes")
}

fn random_card(rng: &mut Rng64, lo: usize, hi: usize) -> [usize; 3] {
    [rng.random_range(lo..=hi), rng.random_range(lo..=hi), rng.random_range(lo..=hi)]
}

fn examples_suite(solver: &SolverOptions) -> Vec<PropertyVerdict> {
    let suite = Suite::Examples;
    let mut out = Vec::new();

    let mut c = Check::new(suite, "example 1: uninformative teacher has uni_t = red = 0", 1e-4);
    for s in [ExampleSource::U1, ExampleSource::U2] {
        match example_joint(1, Some(s)).and_then(|p| pid(&p, solver).map(|a| (p, a))) {
            Ok((p, a)) => c.deviation(a.uni_t.abs().max(a.red.abs()), || {
                json!({"joint": joint_json(&p), "atoms": a})
            }),
            Err(e) => c.error(&e, json!({"example": 1})),
        }
    }
    out.push(c.finish());

    let mut c = Check::new(suite, "example 1: I(T:S) is maximized by S = U2, not S = Y", 1e-12);
    if let (Ok(p1), Ok(p2)) = (example_joint(1, Some(ExampleSource::U1)), example_joint(1, Some(ExampleSource::U2))) {
        let (a, b) = (p1.mi_ts(), p2.mi_ts());
        c.holds(b > a && (b - 1.0).abs() < 1e-12, || json!({"I(T:U1)": a, "I(T:U2)": b}));
    }
    out.push(c.finish());

    let mut c = Check::new(suite, "example 2: red(Y:T,U1) = I(Y:T) = 0.721928", 1e-4);
    match example_joint(2, Some(ExampleSource::U1)).and_then(|p| pid(&p, solver).map(|a| (p, a))) {
        Ok((p, a)) => c.deviation((a.red - 0.721928).abs().max((a.red - a.mi_yt).abs()), || {
            json!({"joint": joint_json(&p), "atoms": a})
        }),
        Err(e) => c.error(&e, json!({"example": 2})),
    }
    out.push(c.finish());

    let mut c = Check::new(suite, "example 2: I(T:U1) = 0.721928 < I(T:U2) = 1", 1e-6);
    if let (Ok(p1), Ok(p2)) = (example_joint(2, Some(ExampleSource::U1)), example_joint(2, Some(ExampleSource::U2))) {
        let (a, b) = (p1.mi_ts(), p2.mi_ts());
        let dev = (a - 0.721928).abs().max((b - 1.0).abs());
        c.deviation(if a < b { dev } else { f64::INFINITY }, || json!({"I(T:U1)": a, "I(T:U2)": b}));
    }
    out.push(c.finish());

    let mut c = Check::new(suite, "example 3: xor has uni_t = red = 0 and syn = 1", 1e-4);
    match example_joint(3, None).and_then(|p| pid(&p, solver).map(|a| (p, a))) {
        Ok((p, a)) => {
            let dev = a.uni_t.abs().max(a.red.abs()).max((a.syn - 1.0).abs());
            c.deviation(dev, || json!({"joint": joint_json(&p), "atoms": a}))
        }
        Err(e) => c.error(&e, json!({"example": 3})),
    }
    out.push(c.finish());

    let mut c = Check::new(suite, "example 3: I(Y:T|S) = H(Y) while I(Y:T) = I(Y:S) = 0", 1e-12);
    if let Ok(p) = example_joint(3, None) {
        let dev = (p.cmi_yt_s() - p.entropy_of(Axis::Y)).abs().max(p.mi_yt()).max(p.mi_ys());
        c.deviation(dev, || json!({"joint": joint_json(&p)}));
    }
    out.push(c.finish());
    out
}

fn lemma1_suite(n: usize, rng: &mut Rng64) -> Vec<PropertyVerdict> {
    let suite = Suite::Lemma1;
    let mut lemma = Check::new(suite, "I(Y:T|g(S),S) = I(Y:T|S) for deterministic g", 1e-10);
    let mut chain = Check::new(suite, "chain identity I(Y:(T,S)) = I(Y:S) + I(Y:T|S)", 1e-10);
    let mut dpi = Check::new(suite, "data processing I(Y:h(T)) <= I(Y:T)", 1e-12);
    let mut symm = Check::new(suite, "I(A:B) = I(B:A) >= 0", 1e-12);
    for _ in 0..2 * n {
        let card = random_card(rng, 2, 4);
        let p = random::dirichlet_joint(rng, card);
        let range = rng.random_range(1..=card[2]);
        let g = random::random_map(rng, card[2], range);
        match JointN::from(&p)
            .augment_with_function(2, &g, range)
            .and_then(|a| a.cond_mutual_info(&[0], &[1], &[3, 2]))
        {
            Ok(aug) => lemma.deviation((aug - p.cmi_yt_s()).abs(), || {
                json!({"joint": joint_json(&p), "g": g, "augmented": aug, "plain": p.cmi_yt_s()})
            }),
            Err(e) => lemma.error(&e, joint_json(&p)),
        }

        let lhs = p.mi_y_ts();
        let rhs = p.mi_ys() + p.cmi_yt_s();
        chain.deviation((lhs - rhs).abs(), || json!({"joint": joint_json(&p), "lhs": lhs, "rhs": rhs}));

        let range_t = rng.random_range(1..=card[1]);
        let h = random::random_map(rng, card[1], range_t);
        match p.map_t(&h, range_t) {
            Ok(ph) => {
                let (a, b) = (ph.mi_yt(), p.mi_yt());
                dpi.deviation(a - b, || json!({"joint": joint_json(&p), "h": h, "I(Y:h(T))": a, "I(Y:T)": b}))
            }
            Err(e) => dpi.error(&e, joint_json(&p)),
        }

        if let Ok(pyt) = p.marginal2(Axis::Y, Axis::T) {
            let (a, b) = (mutual_info(&pyt), mutual_info(&pyt.transpose()));
            symm.deviation((a - b).abs().max(-a).max(-b), || json!({"joint": joint_json(&p), "ab": a, "ba": b}));
        }
    }
    vec![lemma.finish(), chain.finish(), dpi.finish(), symm.finish()]
}

/// Entropy targets used for the nuisance constructions.
const FACTOR_BITS: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 0.8];

fn thm1_suite(rng: &mut Rng64, solver: &SolverOptions) -> Vec<PropertyVerdict> {
    let suite = Suite::Thm1;
    let mut c1 = Check::new(suite, "(i) I(T:S) over S in {Z, G} is maximized by the higher-entropy factor", 1e-9);
    let mut c2 = Check::new(suite, "(ii) red(Y:T,Z) >= red(Y:T,G) and red(Y:T,Z) = I(Y:T)", 1e-4);
    for _ in 0..20 {
        let hz = FACTOR_BITS[rng.random_range(0..FACTOR_BITS.len())];
        let hg = loop {
            let v = FACTOR_BITS[rng.random_range(0..FACTOR_BITS.len())];
            if v != hz {
                break v;
            }
        };
        let task = match make_nuisance_task(hz, hg, 1, rng.random()) {
            Ok(t) => t,
            Err(e) => {
                c1.error(&e, json!({"h_z": hz, "h_g": hg}));
                continue;
            }
        };
        let (pz, pg) = match (task.joint(SourceChoice::Z), task.joint(SourceChoice::G)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                c1.error(&e, json!({"h_z": hz, "h_g": hg}));
                continue;
            }
        };
        let (iz, ig) = (pz.mi_ts(), pg.mi_ts());
        let (h_z, h_g) = (task.h_z(), task.h_g());
        let right_winner = if h_z > h_g { iz > ig } else { ig > iz };
        let dev = (iz - h_z).abs().max((ig - h_g).abs());
        c1.deviation(if right_winner { dev } else { f64::INFINITY }, || {
            json!({"H(Z)": h_z, "H(G)": h_g, "I(T:Z)": iz, "I(T:G)": ig})
        });

        match (pid(&pz, solver), pid(&pg, solver)) {
            (Ok(az), Ok(ag)) => {
                let dev = (ag.red - az.red).max((az.red - az.mi_yt).abs());
                c2.deviation(dev, || json!({"H(Z)": h_z, "H(G)": h_g, "S=Z": az, "S=G": ag}))
            }
            (Err(e), _) | (_, Err(e)) => c2.error(&e, json!({"h_z": hz, "h_g": hg})),
        }
    }
    vec![c1.finish(), c2.finish()]
}

fn thm2_suite(n: usize, rng: &mut Rng64, solver: &SolverOptions) -> Vec<PropertyVerdict> {
    let suite = Suite::Thm2;
    let mut nonneg = Check::new(suite, "1: raw atoms are nonnegative", 1e-9);
    let mut ident = Check::new(suite, "atoms reproduce the three mutual informations", 1e-6);
    let mut member = Check::new(suite, "argmin satisfies both pairwise marginals", 1e-10);
    let mut student = Check::new(suite, "2: T = f(S) gives max{I(Y:T), I(Y:S)} = I(Y:S)", 1e-6);
    let mut no_unique = Check::new(suite, "2: T = f(S) leaves no unique information in T", 1e-4);
    let mut mono = Check::new(suite, "3: uni(Y:h(T)\\S) <= uni(Y:T\\S)", 1e-4);
    for i in 0..n {
        let card = random_card(rng, 2, 3);
        let p = if i % 2 == 0 {
            random::dirichlet_joint(rng, card)
        } else {
            random::sparse_joint(rng, card, 0.4)
        };
        match crate::pid::solve_unique(&p, solver) {
            Ok(sol) => {
                let a = crate::pid::PidAtoms::from_unique_t(&p, sol.value, sol.diag);
                nonneg.deviation(-a.min_raw(), || json!({"joint": joint_json(&p), "atoms": a}));
                ident.deviation(a.identity_error(), || json!({"joint": joint_json(&p), "atoms": a}));
                let viol = crate::pid::marginal_violation(&p, &sol.q);
                let neg = sol.q.probs().iter().fold(0.0f64, |m, &v| m.max(-v));
                member.deviation(viol.max(neg), || json!({"joint": joint_json(&p), "violation": viol}));
            }
            Err(e) => nonneg.error(&e, joint_json(&p)),
        }

        // T a deterministic function of S
        let (cy, cs) = (card[0], card[2]);
        let ct = rng.random_range(1..=cs);
        let f = random::random_map(rng, cs, ct);
        let pys = random::dirichlet(rng, cy * cs, 1.0);
        let q = Joint3::from_fn([cy, ct, cs], |y, t, s| if f[s] == t { pys[y * cs + s] } else { 0.0 });
        match q.and_then(|q| pid(&q, solver).map(|a| (q, a))) {
            Ok((q, a)) => {
                let dev = (a.mi_yt.max(a.mi_ys) - a.mi_ys).abs();
                student.deviation(dev, || json!({"joint": joint_json(&q), "atoms": a}));
                no_unique.deviation(a.uni_t, || json!({"joint": joint_json(&q), "atoms": a}))
            }
            Err(e) => student.error(&e, json!({"f": f})),
        }

        // coarsening the teacher
        let range = rng.random_range(1..=card[1]);
        let h = random::random_map(rng, card[1], range);
        match p.map_t(&h, range).and_then(|ph| Ok((pid(&ph, solver)?, pid(&p, solver)?))) {
            Ok((a1, a2)) => mono.deviation(a1.uni_t - a2.uni_t, || {
                json!({"joint": joint_json(&p), "h": h, "uni_coarse": a1.uni_t, "uni_fine": a2.uni_t})
            }),
            Err(e) => mono.error(&e, joint_json(&p)),
        }
    }
    vec![
        nonneg.finish(),
        ident.finish(),
        member.finish(),
        student.finish(),
        no_unique.finish(),
        mono.finish(),
    ]
}

fn thm3_suite(n: usize, rng: &mut Rng64, solver: &SolverOptions) -> Vec<PropertyVerdict> {
    let suite = Suite::Thm3;
    let mut bound = Check::new(suite, "red_cap <= red + 1e-3", 1e-3);
    let mut capped = Check::new(suite, "red_cap <= min{I(Y:T), I(Y:S)}", 1e-3);
    let mut dominate = Check::new(suite, "stochastic estimate >= deterministic witness on full-support joints", 1e-3);
    let stoch = StochasticOptions {
        seed: rng.random(),
        ..StochasticOptions::default()
    };
    for i in 0..n {
        let p = if i % 2 == 0 {
            random::dirichlet_joint(rng, [2, 2, 2])
        } else {
            random::sparse_joint(rng, [2, 2, 2], 0.5)
        };
        match verify_lower_bound(&p, 2, Some(&stoch), solver) {
            Ok(r) => {
                bound.deviation(r.red_cap - r.red_broja, || json!({"joint": joint_json(&p), "report": r}));
                let cap = p.mi_yt().min(p.mi_ys());
                capped.deviation(r.red_cap - cap, || json!({"joint": joint_json(&p), "report": r}));
            }
            Err(e) => bound.error(&e, joint_json(&p)),
        }
        // On sparse joints a common function of T and S need not be a channel
        // from Y, so the comparison is only meaningful with full support.
        if i % 2 == 1 {
            continue;
        }
        match (red_cap_deterministic(&p, 2), red_cap_stochastic(&p, 2, &stoch)) {
            (Ok(d), Ok(s)) => {
                let sv = if s.feasible { s.achieved_value } else { 0.0 };
                dominate.deviation(d.achieved_value - sv, || {
                    json!({"joint": joint_json(&p), "deterministic": d, "stochastic": s})
                })
            }
            (Err(e), _) | (_, Err(e)) => dominate.error(&e, joint_json(&p)),
        }
    }
    vec![bound.finish(), capped.finish(), dominate.finish()]
}

/// Runs a suite (or all of them) over `n` random instances each.
///
/// The lemma batch uses `2n` joints; the nuisance-teacher batch always uses
/// 20 constructions.
pub fn run_suite(suite: Suite, n: usize, seed: u64, solver: &SolverOptions) -> VerifyReport {
    let suites: Vec<Suite> = if suite == Suite::All { Suite::ALL.to_vec() } else { vec![suite] };
    let mut verdicts = Vec::new();
    for s in suites {
        let mut rng = random::substream(seed, &s.to_string());
        verdicts.extend(match s {
            Suite::Examples => examples_suite(solver),
            Suite::Lemma1 => lemma1_suite(n, &mut rng),
            Suite::Thm1 => thm1_suite(&mut rng, solver),
            Suite::Thm2 => thm2_suite(n, &mut rng, solver),
            Suite::Thm3 => thm3_suite(n, &mut rng, solver),
            Suite::All => unreachable!("expanded above"),
        });
    }
    VerifyReport {
        seed,
        n,
        passed: verdicts.iter().all(|v| v.passed),
        verdicts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_roundtrip() {
        for s in [Suite::Thm1, Suite::Lemma1, Suite::All] {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert!("thm4".parse::<Suite>().is_err());
    }

    #[test]
    fn examples_pass() {
        let r = run_suite(Suite::Examples, 0, 0, &SolverOptions::default());
        assert!(r.passed, "{:#?}", r.verdicts);
    }
}
