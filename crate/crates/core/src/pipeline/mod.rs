//! Estimating decomposition atoms from continuous representations: flatten,
//! project each variable on its principal axes, cluster the scores, tabulate
//! the empirical joint with the labels and decompose it.

mod kmeans;
mod pca;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::Joint3;
use crate::matrix::Matrix;
use crate::pid::{pid, PidAtoms, SolverOptions};

pub use kmeans::{kmeans_assign, kmeans_fit, KMeansModel, KMeansOptions};
pub use pca::{pca_fit, pca_inverse, pca_transform, PcaModel};

/// Representations of the teacher and student on a common set of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RepDump {
    pub t: Matrix,
    pub s: Matrix,
    pub y: Vec<usize>,
    pub layer: Option<String>,
    pub epoch: Option<usize>,
}

impl RepDump {
    pub fn new(t: Matrix, s: Matrix, y: Vec<usize>) -> Result<Self> {
        if t.rows() != y.len() || s.rows() != y.len() {
            return Err(Error::Shape(format!(
                "row counts differ: T {}, S {}, Y {}",
                t.rows(),
                s.rows(),
                y.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::InvalidArgument("empty representation dump".into()));
        }
        Ok(Self {
            t,
            s,
            y,
            layer: None,
            epoch: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    pub n_components: usize,
    pub k: usize,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            n_components: 10,
            k: 10,
            max_iters: 300,
            restarts: 5,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineResult {
    pub atoms: PidAtoms,
    pub samples: usize,
    pub k_t: usize,
    pub k_s: usize,
    pub components_t: usize,
    pub components_s: usize,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub joint: Joint3,
}

/// Cluster labels of one variable after projecting on its principal axes.
pub fn discretize(x: &Matrix, opts: &PipelineOptions, stream: u64) -> Result<(Vec<usize>, usize, usize, Vec<String>)> {
    let mut warnings = Vec::new();
    let model = pca_fit(x, opts.n_components)?;
    if let Some(req) = model.requested {
        warnings.push(format!(
            "{req} components requested, {} features available",
            model.n_components()
        ));
    }
    let scores = pca_transform(&model, x)?;
    let km = kmeans_fit(
        &scores,
        &KMeansOptions {
            k: opts.k,
            max_iters: opts.max_iters,
            restarts: opts.restarts,
            seed: opts.seed ^ stream,
        },
    )?;
    warnings.extend(km.warnings.iter().cloned());
    let labels = kmeans_assign(&km, &scores)?;
    Ok((labels, km.k, model.n_components(), warnings))
}

/// Runs the full estimator on a dump.
pub fn pipeline_pid(dump: &RepDump, opts: &PipelineOptions) -> Result<PipelineResult> {
    let (ct, k_t, comp_t, mut warnings) = discretize(&dump.t, opts, 0x7)?;
    let (cs, k_s, comp_s, ws) = discretize(&dump.s, opts, 0x5)?;
    warnings.extend(ws);
    let n = dump.y.len();
    if n < 10 * opts.k * opts.k {
        warnings.push(format!(
            "{n} samples is below 10*k^2 = {}; plug-in estimates are biased upward",
            10 * opts.k * opts.k
        ));
    }
    let card_y = dump.y.iter().max().map_or(1, |m| m + 1);
    let samples: Vec<_> = (0..n).map(|i| (dump.y[i], ct[i], cs[i])).collect();
    let joint = Joint3::from_samples(&samples, [card_y, k_t, k_s])?;
    let atoms = pid(&joint, &opts.solver)?;
    Ok(PipelineResult {
        atoms,
        samples: n,
        k_t,
        k_s,
        components_t: comp_t,
        components_s: comp_s,
        warnings,
        joint,
    })
}
