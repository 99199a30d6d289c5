use serde::{Deserialize, Serialize};

use super::broja::solve_unique;
use super::oracle::{oracle_unique, OracleOptions};
use crate::error::{Error, Result};
use crate::info::Joint3;

/// Settings for the mirror-descent solver of the unique information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Initial mirror step in nats.
    pub step_size: f64,
    /// Upper limit the step may grow back to after successful iterations.
    pub max_step_size: f64,
    /// Stop once an accepted step improves the objective by less than this (bits).
    pub objective_tol: f64,
    /// Largest admissible deviation from the two pairwise marginals.
    pub marginal_tol: f64,
    /// Proportional-fitting sweeps per mirror step.
    pub ipf_rounds: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            step_size: 0.1,
            max_step_size: 1.0,
            objective_tol: 1e-9,
            marginal_tol: 1e-10,
            ipf_rounds: 50,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && self.step_size > 0.0
            && self.max_step_size >= self.step_size
            && self.objective_tol > 0.0
            && self.marginal_tol > 0.0
            && self.ipf_rounds > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("solver options must be positive: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiag {
    pub iterations: usize,
    /// Final `I_Q(Y:T|S)` in bits.
    pub objective: f64,
    pub max_violation: f64,
    pub converged: bool,
}

/// Atom values before clipping at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawAtoms {
    pub red: f64,
    pub uni_t: f64,
    pub uni_s: f64,
    pub syn: f64,
}

/// The four decomposition atoms and the three mutual informations they split, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidAtoms {
    pub red: f64,
    pub uni_t: f64,
    pub uni_s: f64,
    pub syn: f64,
    pub mi_yt: f64,
    pub mi_ys: f64,
    pub mi_yts: f64,
    pub raw: RawAtoms,
    pub diag: SolverDiag,
}

impl PidAtoms {
    /// Completes the decomposition from the unique information of `T`.
    pub fn from_unique_t(p: &Joint3, uni_t: f64, diag: SolverDiag) -> Self {
        let mi_yt = p.mi_yt();
        let mi_ys = p.mi_ys();
        let mi_yts = p.mi_y_ts();
        let red = mi_yt - uni_t;
        let uni_s = mi_ys - red;
        let syn = mi_yts - uni_t - uni_s - red;
        let raw = RawAtoms {
            red,
            uni_t,
            uni_s,
            syn,
        };
        Self {
            red: red.max(0.0),
            uni_t: uni_t.max(0.0),
            uni_s: uni_s.max(0.0),
            syn: syn.max(0.0),
            mi_yt,
            mi_ys,
            mi_yts,
            raw,
            diag,
        }
    }

    /// Smallest raw atom; negative values beyond round-off point at a solver failure.
    pub fn min_raw(&self) -> f64 {
        let r = self.raw;
        r.red.min(r.uni_t).min(r.uni_s).min(r.syn)
    }

    /// Largest violation of the three identities tying atoms to mutual informations.
    pub fn identity_error(&self) -> f64 {
        let e1 = (self.mi_yt - self.uni_t - self.red).abs();
        let e2 = (self.mi_ys - self.uni_s - self.red).abs();
        let e3 = (self.mi_yts - self.uni_t - self.uni_s - self.red - self.syn).abs();
        e1.max(e2).max(e3)
    }
}

/// Full decomposition of `p` using the mirror-descent solver.
pub fn pid(p: &Joint3, opts: &SolverOptions) -> Result<PidAtoms> {
    let sol = solve_unique(p, opts)?;
    Ok(PidAtoms::from_unique_t(p, sol.value, sol.diag))
}

/// Full decomposition using the exhaustive grid oracle (small supports only).
pub fn pid_with_oracle(p: &Joint3, opts: &OracleOptions) -> Result<PidAtoms> {
    let sol = oracle_unique(p, opts)?;
    let diag = SolverDiag {
        iterations: sol.evaluations,
        objective: sol.value,
        max_violation: 0.0,
        converged: true,
    };
    Ok(PidAtoms::from_unique_t(p, sol.value, diag))
}
