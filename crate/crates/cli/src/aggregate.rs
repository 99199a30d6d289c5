//! Seed-level aggregation of training reports into accuracy and PID curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use kdpid::PidAtoms;
use kdpid_distill::report::{RunSummary, TrainReport};
use kdpid_distill::{Framework, TeacherMode};
use serde::{Deserialize, Serialize};

use crate::stats::{mean, std_dev};

pub const ATOMS: [&str; 7] = ["red", "uni_t", "uni_s", "syn", "mi_yt", "mi_ys", "mi_yts"];

pub fn atom(a: &PidAtoms, name: &str) -> f64 {
    match name {
        "red" => a.red,
        "uni_t" => a.uni_t,
        "uni_s" => a.uni_s,
        "syn" => a.syn,
        "mi_yt" => a.mi_yt,
        "mi_ys" => a.mi_ys,
        "mi_yts" => a.mi_yts,
        _ => panic!("unknown atom {name}"),
    }
}

type Group = (TeacherMode, Framework);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub teacher_mode: TeacherMode,
    pub framework: Framework,
    pub epoch: usize,
    /// Atom name for PID curves, `test_acc` for accuracy curves.
    pub quantity: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRow {
    pub teacher_mode: TeacherMode,
    pub framework: Framework,
    pub mean: f64,
    pub std: f64,
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
}

fn group_by(reports: &[TrainReport]) -> BTreeMap<Group, Vec<&TrainReport>> {
    let mut groups: BTreeMap<Group, Vec<&TrainReport>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.teacher_mode, r.framework)).or_default().push(r);
    }
    for v in groups.values_mut() {
        v.sort_by_key(|r| r.seed);
    }
    groups
}

fn push_point(out: &mut Vec<CurvePoint>, (mode, fw): Group, epoch: usize, quantity: &str, values: &[f64]) {
    out.push(CurvePoint {
        teacher_mode: mode,
        framework: fw,
        epoch,
        quantity: quantity.to_string(),
        mean: mean(values),
        std: std_dev(values),
        n: values.len(),
    });
}

/// Mean and spread of the student test accuracy per epoch.
pub fn accuracy_curves(reports: &[TrainReport]) -> Vec<CurvePoint> {
    let mut out = Vec::new();
    for (g, runs) in group_by(reports) {
        let mut by_epoch: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &runs {
            for e in &r.epochs {
                by_epoch.entry(e.epoch).or_default().push(e.test_acc);
            }
        }
        for (epoch, v) in by_epoch {
            push_point(&mut out, g, epoch, "test_acc", &v);
        }
    }
    out
}

/// Mean and spread of every atom at each checkpoint epoch.
pub fn pid_curves(reports: &[TrainReport]) -> Vec<CurvePoint> {
    let mut out = Vec::new();
    for (g, runs) in group_by(reports) {
        let mut by_epoch: BTreeMap<usize, Vec<&PidAtoms>> = BTreeMap::new();
        for r in &runs {
            for c in &r.checkpoints {
                by_epoch.entry(c.epoch).or_default().push(&c.atoms);
            }
        }
        for (epoch, atoms) in by_epoch {
            for name in ATOMS {
                let v: Vec<f64> = atoms.iter().map(|a| atom(a, name)).collect();
                push_point(&mut out, g, epoch, name, &v);
            }
        }
    }
    out
}

fn final_rows(items: Vec<(Group, u64, f64)>) -> Vec<FinalRow> {
    let mut groups: BTreeMap<Group, Vec<(u64, f64)>> = BTreeMap::new();
    for (g, seed, v) in items {
        groups.entry(g).or_default().push((seed, v));
    }
    groups
        .into_iter()
        .map(|((mode, fw), mut v)| {
            v.sort_by_key(|p| p.0);
            let values: Vec<f64> = v.iter().map(|p| p.1).collect();
            FinalRow {
                teacher_mode: mode,
                framework: fw,
                mean: mean(&values),
                std: std_dev(&values),
                seeds: v.iter().map(|p| p.0).collect(),
                values,
            }
        })
        .collect()
}

/// Final test accuracy per group, read from the epoch logs.
pub fn final_accuracy(reports: &[TrainReport]) -> Vec<FinalRow> {
    final_rows(
        reports
            .iter()
            .map(|r| ((r.teacher_mode, r.framework), r.seed, r.final_test_acc()))
            .collect(),
    )
}

/// Final test accuracy per group, read from per-run summaries.
pub fn final_accuracy_from_summaries(summaries: &[RunSummary]) -> Vec<FinalRow> {
    final_rows(
        summaries
            .iter()
            .map(|s| ((s.teacher_mode, s.framework), s.seed, s.final_test_acc))
            .collect(),
    )
}

pub const CURVE_HEADER: &str = "mode,framework,epoch,quantity,mean,std,n";

pub fn curves_csv(points: &[CurvePoint]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.teacher_mode, p.framework, p.epoch, p.quantity, p.mean, p.std, p.n
        );
    }
    out
}

/// Plain-text table of final accuracies, one line per group.
pub fn final_table(rows: &[FinalRow]) -> String {
    let mut out = String::from("mode       framework  mean    std     per-seed\n");
    for r in rows {
        let per: Vec<String> = r.values.iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(
            out,
            "{:<10} {:<10} {:.4}  {:.4}  {}",
            r.teacher_mode.to_string(),
            r.framework.to_string(),
            r.mean,
            r.std,
            per.join(" ")
        );
    }
    out
}
