//! Experiment configuration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use kdpid::datasets::BlobsSpec;
use kdpid::pipeline::PipelineOptions;
use kdpid::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::nn::SgdConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Framework {
    Rid,
    Vid,
    Ted,
    Bas,
}

impl Framework {
    pub const ALL: [Framework; 4] = [Framework::Rid, Framework::Vid, Framework::Ted, Framework::Bas];
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Framework::Rid => "RID",
            Framework::Vid => "VID",
            Framework::Ted => "TED",
            Framework::Bas => "BAS",
        })
    }
}

impl FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RID" => Ok(Framework::Rid),
            "VID" => Ok(Framework::Vid),
            "TED" => Ok(Framework::Ted),
            "BAS" => Ok(Framework::Bas),
            _ => Err(Error::Parse(format!("unknown framework {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherMode {
    Trained,
    Untrained,
}

impl fmt::Display for TeacherMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TeacherMode::Trained => "trained",
            TeacherMode::Untrained => "untrained",
        })
    }
}

impl FromStr for TeacherMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trained" | "tt" => Ok(TeacherMode::Trained),
            "untrained" | "ut" => Ok(TeacherMode::Untrained),
            _ => Err(Error::Parse(format!("unknown teacher mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Milestone {
    /// First (1-based) epoch that uses `lr`.
    pub epoch: usize,
    pub lr: f64,
}

/// Piecewise-constant learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub initial: f64,
    #[serde(default)]
    pub milestones: Vec<Milestone>,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            initial: lr,
            milestones: Vec::new(),
        }
    }

    /// Learning rate in effect at a 1-based epoch.
    pub fn at(&self, epoch: usize) -> f64 {
        self.milestones
            .iter()
            .filter(|m| m.epoch <= epoch)
            .max_by_key(|m| m.epoch)
            .map_or(self.initial, |m| m.lr)
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = self.initial > 0.0 && self.milestones.iter().all(|m| m.lr >= 0.0 && m.lr.is_finite());
        if !ok {
            return Err(Error::InvalidArgument(format!("{what}: learning rates must be positive")));
        }
        Ok(())
    }
}

/// A distilled (teacher tap, student tap) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerPair {
    pub teacher: usize,
    pub student: usize,
}

/// Widths of the auxiliary networks attached to each distilled pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxWidths {
    /// Hidden width of the two-layer filters.
    pub filter_hidden: usize,
    /// Output width of the filters (the channel count of `sigma`).
    pub filter_out: usize,
    /// Hidden widths of the VID predictor.
    pub mu_hidden: Vec<usize>,
}

impl Default for AuxWidths {
    fn default() -> Self {
        Self {
            filter_hidden: 32,
            filter_out: 16,
            mu_hidden: vec![32, 32],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub schema_version: u32,
    pub framework: Framework,
    pub teacher_mode: TeacherMode,
    pub seed: u64,
    pub lambda1: f64,
    /// Weight of the RID student term and of the TED alignment term.
    pub lambda2: f64,
    /// Weight of the VID term.
    pub vid_lambda: f64,
    pub n_warmup: usize,
    pub n_epochs: usize,
    pub cycle_len: usize,
    pub alt_ratio: f64,
    /// Leading epochs of the main loop spent on TED filter training.
    pub ted_stage1_epochs: usize,
    pub pairs: Vec<LayerPair>,
    pub teacher_hidden: Vec<usize>,
    pub student_hidden: Vec<usize>,
    pub aux: AuxWidths,
    pub teacher_epochs: usize,
    pub teacher_lr: LrSchedule,
    pub batch_size: usize,
    pub lr: LrSchedule,
    pub sgd: SgdConfig,
    pub data: BlobsSpec,
    /// PID checkpoint cadence in epochs; 0 disables checkpoints.
    pub pid_every: usize,
    /// Index into `pairs` of the pair tracked at checkpoints; defaults to the last.
    pub pid_pair: Option<usize>,
    pub pipeline: PipelineOptions,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            framework: Framework::Rid,
            teacher_mode: TeacherMode::Trained,
            seed: 0,
            lambda1: 1.0,
            lambda2: 0.01,
            vid_lambda: 0.1,
            n_warmup: 15,
            n_epochs: 135,
            cycle_len: 15,
            alt_ratio: 0.25,
            ted_stage1_epochs: 10,
            pairs: (0..3).map(|k| LayerPair { teacher: k, student: k }).collect(),
            teacher_hidden: vec![64, 64, 64],
            student_hidden: vec![16, 16, 16],
            aux: AuxWidths::default(),
            teacher_epochs: 100,
            teacher_lr: LrSchedule {
                initial: 0.05,
                milestones: vec![Milestone { epoch: 50, lr: 0.01 }, Milestone { epoch: 75, lr: 0.002 }],
            },
            batch_size: 64,
            lr: LrSchedule {
                initial: 0.05,
                milestones: vec![Milestone { epoch: 75, lr: 0.01 }, Milestone { epoch: 100, lr: 0.002 }],
            },
            sgd: SgdConfig::default(),
            data: BlobsSpec {
                spread: 1.2,
                nuisance_dims: 16,
                n_test: 4000,
                ..Default::default()
            },
            pid_every: 10,
            pid_pair: None,
            pipeline: PipelineOptions::default(),
        }
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl DistillConfig {
    pub fn total_epochs(&self) -> usize {
        self.n_warmup + self.n_epochs
    }

    /// Number of phase-1 epochs at the start of each RID cycle.
    pub fn phase1_len(&self) -> usize {
        (self.alt_ratio * self.cycle_len as f64).ceil() as usize
    }

    pub fn tracked_pair(&self) -> LayerPair {
        self.pairs[self.pid_pair.unwrap_or(self.pairs.len() - 1)]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !positive(self.lambda1) {
            return bad("lambda1 must be positive".into());
        }
        // zero disables the distillation term
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) || !(self.vid_lambda >= 0.0 && self.vid_lambda.is_finite()) {
            return bad("lambda2 and vid_lambda must be nonnegative".into());
        }
        if self.n_epochs == 0 || self.cycle_len == 0 || self.cycle_len > self.n_epochs {
            return bad(format!(
                "need 0 < cycle_len <= n_epochs, got cycle_len {} and n_epochs {}",
                self.cycle_len, self.n_epochs
            ));
        }
        if !(self.alt_ratio > 0.0 && self.alt_ratio < 1.0) {
            return bad(format!("alt_ratio must lie in (0, 1), got {}", self.alt_ratio));
        }
        if self.framework == Framework::Ted && self.ted_stage1_epochs >= self.n_epochs {
            return bad("ted_stage1_epochs must leave at least one alignment epoch".into());
        }
        if self.pairs.is_empty() {
            return bad("at least one layer pair is required".into());
        }
        for p in &self.pairs {
            if p.teacher >= self.teacher_hidden.len() || p.student >= self.student_hidden.len() {
                return bad(format!("layer pair {p:?} refers to a missing tap"));
            }
        }
        if let Some(k) = self.pid_pair {
            if k >= self.pairs.len() {
                return bad(format!("pid_pair {k} is out of range"));
            }
        }
        let widths = self.teacher_hidden.iter().chain(&self.student_hidden).chain(&self.aux.mu_hidden);
        if widths.copied().any(|w| w == 0) || self.aux.filter_hidden == 0 || self.aux.filter_out == 0 {
            return bad("layer widths must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        self.lr.validate("lr")?;
        self.teacher_lr.validate("teacher_lr")?;
        self.data.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        DistillConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(DistillConfig::from_json(r#"{"schema_version": 1, "lamda2": 3}"#).is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = DistillConfig::from_json(r#"{"framework": "VID", "seed": 4}"#).unwrap();
        assert_eq!(cfg.framework, Framework::Vid);
        assert_eq!(cfg.n_epochs, 135);
    }

    #[test]
    fn invariants() {
        let mut cfg = DistillConfig {
            alt_ratio: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.alt_ratio = 0.25;
        cfg.cycle_len = cfg.n_epochs + 1;
        assert!(cfg.validate().is_err());
        cfg.cycle_len = 15;
        cfg.pairs.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn schedule_lookup() {
        let lr = DistillConfig::default().lr;
        assert_eq!(lr.at(1), 0.05);
        assert_eq!(lr.at(74), 0.05);
        assert_eq!(lr.at(75), 0.01);
        assert_eq!(lr.at(150), 0.002);
    }

    #[test]
    fn phase1_length() {
        let cfg = DistillConfig::default();
        assert_eq!(cfg.phase1_len(), 4);
    }
}
