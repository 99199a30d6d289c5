//! Framework × teacher-mode × seed experiment matrices.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use kdpid::datasets::{make_blobs, Dataset};
use kdpid_distill::config::SCHEMA_VERSION;
use kdpid_distill::report::RunSummary;
use kdpid_distill::train::teacher_key;
use kdpid_distill::{build_teacher, DistillConfig, Framework, Network, TeacherMode, TrainReport, Trainer};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{self, FinalRow};
use crate::svg::{chart_from_table, read_table, PlotSpec};

fn all_frameworks() -> Vec<Framework> {
    Framework::ALL.to_vec()
}

fn both_modes() -> Vec<TeacherMode> {
    vec![TeacherMode::Trained, TeacherMode::Untrained]
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/matrix")
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentMatrix {
    pub schema_version: u32,
    pub name: String,
    pub seeds: Vec<u64>,
    #[serde(default = "all_frameworks")]
    pub frameworks: Vec<Framework>,
    #[serde(default = "both_modes")]
    pub teacher_modes: Vec<TeacherMode>,
    /// Settings shared by every cell, including the dataset; `framework`,
    /// `teacher_mode` and `seed` are overwritten per cell.
    #[serde(default)]
    pub base: DistillConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Cells trained at the same time.
    #[serde(default = "one")]
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub name: String,
    pub config: DistillConfig,
}

fn distinct<T: Ord + Clone>(xs: &[T]) -> bool {
    xs.iter().cloned().collect::<BTreeSet<_>>().len() == xs.len()
}

impl ExperimentMatrix {
    pub fn new(name: &str, seeds: Vec<u64>, base: DistillConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: name.to_string(),
            seeds,
            frameworks: all_frameworks(),
            teacher_modes: both_modes(),
            base,
            out: default_out(),
            jobs: 1,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version);
        }
        if self.name.is_empty() {
            bail!("matrix name must not be empty");
        }
        if self.seeds.is_empty() || self.frameworks.is_empty() || self.teacher_modes.is_empty() {
            bail!("seeds, frameworks and teacher_modes must be nonempty");
        }
        if !distinct(&self.seeds) || !distinct(&self.frameworks) || !distinct(&self.teacher_modes) {
            bail!("seeds, frameworks and teacher_modes must not repeat");
        }
        if self.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        self.base.validate()?;
        Ok(())
    }

    /// Cells in mode, framework, seed order, named `<mode>-<framework>-s<seed>`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &mode in &self.teacher_modes {
            for &fw in &self.frameworks {
                for &seed in &self.seeds {
                    let mut config = self.base.clone();
                    config.framework = fw;
                    config.teacher_mode = mode;
                    config.seed = seed;
                    out.push(Cell {
                        name: format!("{mode}-{}-s{seed}", fw.to_string().to_lowercase()),
                        config,
                    });
                }
            }
        }
        out
    }
}

/// Writes everything needed to inspect or re-create one run.
pub fn write_run_dir(
    dir: &Path,
    cfg: &DistillConfig,
    report: &TrainReport,
    student: &Network,
    teacher: Option<&Network>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), cfg.to_json())?;
    report.write_dir(dir)?;
    fs::write(dir.join("student.json"), student.to_json())?;
    if let Some(t) = teacher {
        fs::write(dir.join("teacher.json"), t.to_json())?;
    }
    Ok(())
}

/// Trains a single configuration from scratch.
pub fn run_config(cfg: &DistillConfig) -> Result<(TrainReport, Network, Network)> {
    cfg.validate()?;
    let data = make_blobs(&cfg.data)?;
    let teacher = build_teacher(cfg, &data)?;
    let (report, student) = Trainer::new(cfg.clone(), data, teacher.clone())?.run()?;
    Ok((report, student, teacher))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellFailure {
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct MatrixOutcome {
    pub out: PathBuf,
    pub reports: Vec<TrainReport>,
    pub failures: Vec<CellFailure>,
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Runs `f`, turning both errors and panics into a message.
fn isolated<T>(f: impl FnOnce() -> Result<T>) -> std::result::Result<T, String> {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(format!("{e:#}")),
        Err(p) => Err(panic_message(p)),
    }
}

fn teacher_name(cfg: &DistillConfig) -> String {
    format!("{}-s{}", cfg.teacher_mode, cfg.seed)
}

/// Runs every cell into `out`, one subdirectory per cell, then writes the
/// combined curves, charts and `summary.json`. A failing cell is recorded
/// and the rest continue.
pub fn run_matrix(m: &ExperimentMatrix, out: &Path) -> Result<MatrixOutcome> {
    m.validate()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("matrix.json"), serde_json::to_string_pretty(m)?)?;
    let data: Dataset = make_blobs(&m.base.data)?;
    let cells = m.cells();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(m.jobs).build()?;

    // one teacher per distinct key, shared by the cells that agree on it
    let mut wanted: BTreeMap<String, DistillConfig> = BTreeMap::new();
    for c in &cells {
        wanted.entry(teacher_key(&c.config)).or_insert_with(|| c.config.clone());
    }
    let teacher_dir = out.join("teachers");
    fs::create_dir_all(&teacher_dir)?;
    let built: Vec<(String, std::result::Result<Network, String>)> = pool.install(|| {
        wanted
            .par_iter()
            .map(|(key, cfg)| {
                let t = isolated(|| {
                    let t = build_teacher(cfg, &data)?;
                    fs::write(teacher_dir.join(format!("{}.json", teacher_name(cfg))), t.to_json())?;
                    Ok(t)
                });
                info!("teacher {} ready", teacher_name(cfg));
                (key.clone(), t)
            })
            .collect()
    });
    let teachers: BTreeMap<String, std::result::Result<Network, String>> = built.into_iter().collect();

    let results: Vec<(String, std::result::Result<TrainReport, String>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| {
                let res = match &teachers[&teacher_key(&c.config)] {
                    Err(e) => Err(format!("teacher: {e}")),
                    Ok(teacher) => isolated(|| {
                        let trainer = Trainer::new(c.config.clone(), data.clone(), teacher.clone())?;
                        let (report, student) = trainer.run()?;
                        write_run_dir(&out.join(&c.name), &c.config, &report, &student, None)?;
                        Ok(report)
                    }),
                };
                match &res {
                    Ok(r) => info!("{}: final test accuracy {:.4}", c.name, r.final_test_acc()),
                    Err(e) => warn!("{} failed: {e}", c.name),
                }
                (c.name.clone(), res)
            })
            .collect()
    });

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (name, r) in results {
        match r {
            Ok(rep) => reports.push(rep),
            Err(error) => failures.push(CellFailure { name, error }),
        }
    }
    write_aggregates(out, &m.name, &reports, &failures)?;
    Ok(MatrixOutcome {
        out: out.to_path_buf(),
        reports,
        failures,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CombinedSummary {
    pub name: String,
    pub runs: usize,
    pub final_accuracy: Vec<FinalRow>,
    pub failures: Vec<CellFailure>,
}

const PID_PLOTTED: [&str; 4] = ["red", "uni_t", "uni_s", "syn"];

/// Writes `accuracy.csv`, `pid.csv`, their SVG charts and `summary.json`.
pub fn write_aggregates(out: &Path, name: &str, reports: &[TrainReport], failures: &[CellFailure]) -> Result<()> {
    fs::create_dir_all(out)?;
    let acc = aggregate::curves_csv(&aggregate::accuracy_curves(reports));
    let pid = aggregate::curves_csv(&aggregate::pid_curves(reports));
    fs::write(out.join("accuracy.csv"), &acc)?;
    fs::write(out.join("pid.csv"), &pid)?;

    if !reports.is_empty() {
        let (h, rows) = read_table(&acc)?;
        let spec = PlotSpec::curves(&h, &format!("{name}: student test accuracy"));
        fs::write(out.join("accuracy.svg"), chart_from_table(&h, &rows, &spec)?.to_svg())?;
    }
    let (h, rows) = read_table(&pid)?;
    let q = h.iter().position(|c| c == "quantity").ok_or_else(|| anyhow!("missing quantity column"))?;
    let rows: Vec<Vec<String>> = rows.into_iter().filter(|r| PID_PLOTTED.contains(&r[q].as_str())).collect();
    if !rows.is_empty() {
        let spec = PlotSpec::curves(&h, &format!("{name}: information atoms (bits)"));
        fs::write(out.join("pid.svg"), chart_from_table(&h, &rows, &spec)?.to_svg())?;
    }

    let summary = CombinedSummary {
        name: name.to_string(),
        runs: reports.len(),
        final_accuracy: aggregate::final_accuracy(reports),
        failures: failures.to_vec(),
    };
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

/// Run directories under `path`: the path itself if it holds a report,
/// otherwise its immediate subdirectories that do, in name order.
pub fn find_runs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.join("report.json").is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("report.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("no run directories found under {}", path.display());
    }
    Ok(dirs)
}

pub fn load_reports(paths: &[PathBuf]) -> Result<Vec<TrainReport>> {
    let mut out = Vec::new();
    for p in paths {
        for dir in find_runs(p)? {
            out.push(TrainReport::load(&dir).with_context(|| format!("loading {}", dir.display()))?);
        }
    }
    Ok(out)
}

pub fn load_summaries(paths: &[PathBuf]) -> Result<Vec<RunSummary>> {
    let mut out = Vec::new();
    for p in paths {
        for dir in find_runs(p)? {
            let text = fs::read_to_string(dir.join("summary.json"))?;
            out.push(serde_json::from_str(&text).with_context(|| format!("parsing {}", dir.display()))?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matrix_has_24_unique_cells() {
        let m = ExperimentMatrix::new("m", vec![0, 1, 2], DistillConfig::default());
        let cells = m.cells();
        assert_eq!(cells.len(), 24);
        let names: BTreeSet<_> = cells.iter().map(|c| c.name.clone()).collect();
        assert_eq!(names.len(), 24);
        assert!(names.contains("untrained-vid-s2"));
    }

    #[test]
    fn matrix_json_is_strict() {
        let ok = r#"{"schema_version": 1, "name": "x", "seeds": [0]}"#;
        let m = ExperimentMatrix::from_json(ok).unwrap();
        assert_eq!(m.frameworks.len(), 4);
        assert_eq!(m.jobs, 1);
        assert!(ExperimentMatrix::from_json(r#"{"schema_version": 1, "name": "x", "seeds": [0], "sedes": 1}"#).is_err());
        assert!(ExperimentMatrix::from_json(r#"{"schema_version": 1, "name": "x"}"#).is_err());
        assert!(ExperimentMatrix::from_json(r#"{"schema_version": 1, "name": "x", "seeds": [1, 1]}"#).is_err());
        assert!(ExperimentMatrix::from_json(r#"{"schema_version": 2, "name": "x", "seeds": [0]}"#).is_err());
        assert!(ExperimentMatrix::from_json(r#"{"schema_version": 1, "name": "x", "seeds": [0], "base": {"lamda1": 1}}"#).is_err());
    }

    #[test]
    fn cells_share_teachers_across_frameworks() {
        let m = ExperimentMatrix::new("m", vec![0, 1], DistillConfig::default());
        let keys: BTreeSet<_> = m.cells().iter().map(|c| teacher_key(&c.config)).collect();
        assert_eq!(keys.len(), 4);
    }
}
