//! Unique, redundant and synergistic information of `Y` about two sources
//! `T` and `S`.
//!
//! The unique information of `T` is the smallest `I_Q(Y:T|S)` over all joints
//! `Q` that share the `(Y,T)` and `(Y,S)` marginals of the observed joint.
//! The remaining atoms follow from the mutual-information identities.

mod atoms;
mod broja;
mod oracle;

pub use atoms::{pid, pid_with_oracle, PidAtoms, RawAtoms, SolverDiag, SolverOptions};
pub use broja::{feasible_init, marginal_violation, solve_unique, UniqueSolution};
pub use oracle::{oracle_unique, OracleOptions, OracleSolution, MAX_FREE_DIMS};
