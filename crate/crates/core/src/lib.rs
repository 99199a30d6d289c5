//! Partial information decomposition of discrete teacher/student/task
//! distributions.
//!
//! - [`info`]: entropy and (conditional) mutual information of dense joints.
//! - [`pid`]: unique, redundant and synergistic atoms from the minimum
//!   conditional mutual information over the pairwise-marginal polytope, plus
//!   a grid oracle for small supports.
//! - [`intersection`]: intersection-information estimators and the check that
//!   they lower-bound the redundancy.
//! - [`pipeline`]: PCA and k-means discretization of continuous
//!   representations into a joint distribution.
//! - [`datasets`]: exact example triples, nuisance constructions and the
//!   synthetic classification task.
//! - [`verify`]: property batches backing the theorem checks.

pub mod datasets;
pub mod error;
pub mod info;
pub mod intersection;
pub mod matrix;
pub mod pid;
pub mod pipeline;
pub mod random;
pub mod verify;

pub use error::{Error, Result};
pub use info::{Axis, Joint2, Joint3};
pub use matrix::Matrix;
pub use pid::{pid, PidAtoms, SolverOptions};
