//! Training records and their file formats.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use kdpid::{PidAtoms, Result};
use serde::{Deserialize, Serialize};

use crate::config::{Framework, TeacherMode};
use crate::train::Phase;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub lr: f64,
    /// Mean objective over the epoch's batches.
    pub objective: f64,
    /// Mean cross-entropy term over the epoch's batches.
    pub batch_ce: f64,
    /// Mean unweighted distillation term summed over layer pairs.
    pub distill: f64,
    pub layer_distill: Vec<f64>,
    /// Student cross-entropy on the full training split after the epoch.
    pub student_train_ce: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub teacher_test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidCheckpoint {
    pub epoch: usize,
    pub atoms: PidAtoms,
    pub k_t: usize,
    pub k_s: usize,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub framework: Framework,
    pub teacher_mode: TeacherMode,
    pub seed: u64,
    pub teacher_test_acc: f64,
    pub epochs: Vec<EpochRecord>,
    pub checkpoints: Vec<PidCheckpoint>,
    pub wall_seconds: f64,
}

/// Compact per-run summary written next to the CSV logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub framework: Framework,
    pub teacher_mode: TeacherMode,
    pub seed: u64,
    pub epochs: usize,
    pub final_test_acc: f64,
    pub best_test_acc: f64,
    pub teacher_test_acc: f64,
    pub final_atoms: Option<PidAtoms>,
    pub checkpoints: usize,
    pub wall_seconds: f64,
}

pub const EPOCH_HEADER: &str = "epoch,phase,lr,objective,batch_ce,distill,student_train_ce,train_acc,test_acc,teacher_test_acc";
pub const PID_HEADER: &str = "epoch,red,uni_t,uni_s,syn,mi_yt,mi_ys,mi_yts,k_t,k_s,test_acc";

impl TrainReport {
    pub fn final_test_acc(&self) -> f64 {
        self.epochs.last().map_or(0.0, |r| r.test_acc)
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            framework: self.framework,
            teacher_mode: self.teacher_mode,
            seed: self.seed,
            epochs: self.epochs.len(),
            final_test_acc: self.final_test_acc(),
            best_test_acc: self.epochs.iter().map(|r| r.test_acc).fold(0.0, f64::max),
            teacher_test_acc: self.teacher_test_acc,
            final_atoms: self.checkpoints.last().map(|c| c.atoms),
            checkpoints: self.checkpoints.len(),
            wall_seconds: self.wall_seconds,
        }
    }

    /// One row per epoch, with one `distill_k` column per layer pair.
    pub fn epochs_csv(&self) -> String {
        let layers = self.epochs.first().map_or(0, |r| r.layer_distill.len());
        let mut out = String::from(EPOCH_HEADER);
        for k in 0..layers {
            let _ = write!(out, ",distill_{k}");
        }
        out.push('\n');
        for r in &self.epochs {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.epoch,
                r.phase.as_str(),
                r.lr,
                r.objective,
                r.batch_ce,
                r.distill,
                r.student_train_ce,
                r.train_acc,
                r.test_acc,
                r.teacher_test_acc
            );
            for v in &r.layer_distill {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn pid_csv(&self) -> String {
        let mut out = format!("{PID_HEADER}\n");
        for c in &self.checkpoints {
            let a = &c.atoms;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                c.epoch, a.red, a.uni_t, a.uni_s, a.syn, a.mi_yt, a.mi_ys, a.mi_yts, c.k_t, c.k_s, c.test_acc
            );
        }
        out
    }

    /// Writes `epochs.csv`, `pid.csv`, `summary.json` and `report.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("epochs.csv"), self.epochs_csv())?;
        fs::write(dir.join("pid.csv"), self.pid_csv())?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary())?)?;
        fs::write(dir.join("report.json"), serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join("report.json"))?)?)
    }
}
