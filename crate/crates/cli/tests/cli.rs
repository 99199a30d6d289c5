use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kdpid::datasets::BlobsSpec;
use kdpid_cli::aggregate::{final_accuracy, final_accuracy_from_summaries};
use kdpid_cli::matrix::{load_reports, load_summaries, ExperimentMatrix};
use kdpid_distill::{DistillConfig, LrSchedule};
use serde_json::Value;
use tempfile::TempDir;

fn kdpid(args: &[&str]) -> Output {
    kdpid_in(args, None)
}

fn kdpid_in(args: &[&str], root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kdpid"));
    cmd.args(args).env("RUST_LOG", "warn").env_remove("KDPID_OUTPUT_ROOT");
    if let Some(r) = root {
        cmd.env("KDPID_OUTPUT_ROOT", r);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A configuration that trains in well under a second.
fn tiny_config() -> DistillConfig {
    let mut c = DistillConfig {
        data: BlobsSpec {
            n_classes: 3,
            dim: 4,
            n_train: 120,
            n_test: 90,
            spread: 0.8,
            ..Default::default()
        },
        teacher_hidden: vec![8, 8],
        student_hidden: vec![4, 4],
        teacher_epochs: 3,
        teacher_lr: LrSchedule::constant(0.05),
        lr: LrSchedule::constant(0.05),
        n_warmup: 2,
        n_epochs: 6,
        cycle_len: 3,
        ted_stage1_epochs: 2,
        pid_every: 3,
        batch_size: 32,
        ..Default::default()
    };
    c.pairs.truncate(2);
    c.pipeline.k = 3;
    c.pipeline.n_components = 3;
    c
}

fn write_json(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn pid_compute_on_the_examples() {
    let tmp = TempDir::new().unwrap();
    for (which, red, syn) in [(1, 0.0, 0.0), (2, 0.721928, 0.0), (3, 0.0, 1.0)] {
        let gen = kdpid(&["data", "gen", "example", "--which", &which.to_string(), "--out", s(tmp.path())]);
        assert_eq!(code(&gen), 0);
        let input = tmp.path().join(format!("example{which}.json"));
        for extra in [&[][..], &["--oracle"][..]] {
            let mut args = vec!["pid", "compute", "--input", s(&input)];
            args.extend_from_slice(extra);
            let o = kdpid(&args);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            let v = stdout_json(&o);
            assert!((v["red"].as_f64().unwrap() - red).abs() < 1e-4);
            assert!((v["syn"].as_f64().unwrap() - syn).abs() < 1e-4);
            assert!(v["uni_t"].as_f64().unwrap().abs() < 1e-4);
        }
    }
}

#[test]
fn sweep_writes_one_row_per_file() {
    let tmp = TempDir::new().unwrap();
    for which in ["1", "2", "3"] {
        assert_eq!(code(&kdpid(&["data", "gen", "example", "--which", which, "--out", s(tmp.path())])), 0);
    }
    write_json(tmp.path(), "and.csv", "y,t,s,prob\n0,0,0,0.25\n0,0,1,0.25\n0,1,0,0.25\n1,1,1,0.25\n");
    let o = kdpid(&["pid", "sweep", "--dir", s(tmp.path())]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "file,red,uni_t,uni_s,syn,mi_yt,mi_ys,mi_yts,iters,violation");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("and.csv,"));

    write_json(tmp.path(), "broken.json", "{\"card\": [2, 2, 2]}");
    assert_eq!(code(&kdpid(&["pid", "sweep", "--dir", s(tmp.path())])), 2);
}

#[test]
fn intersect_respects_the_lower_bound() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&kdpid(&["data", "gen", "example", "--which", "2", "--out", s(tmp.path())])), 0);
    let o = kdpid(&["pid", "intersect", "--input", s(&tmp.path().join("example2.json")), "--q-card", "2"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["lower_bound"]["holds"], Value::Bool(true));
    assert!((v["deterministic"]["achieved_value"].as_f64().unwrap() - 0.721928).abs() < 1e-4);
    assert!(v["stochastic"].is_object());

    let o = kdpid(&["pid", "intersect", "--input", s(&tmp.path().join("example2.json")), "--method", "det"]);
    assert!(stdout_json(&o).get("stochastic").is_none());
}

#[test]
fn verify_exit_codes() {
    let o = kdpid(&["verify", "examples", "--n", "3"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["passed"], Value::Bool(true));
    assert!(!v["verdicts"].as_array().unwrap().is_empty());

    let o = kdpid(&["verify", "lemma1", "--n", "20", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    for verdict in stdout_json(&o)["verdicts"].as_array().unwrap() {
        assert!(verdict["max_deviation"].as_f64().unwrap() <= 1e-10);
    }

    assert_eq!(code(&kdpid(&["verify", "thm9"])), 2);
}

#[test]
fn usage_and_io_errors_exit_two() {
    assert_eq!(code(&kdpid(&["pid", "compute", "--input", "/no/such/file.json"])), 2);
    assert_eq!(code(&kdpid(&["frobnicate"])), 2);
    assert_eq!(code(&kdpid(&["pid", "compute"])), 2);
    assert_eq!(code(&kdpid(&["data", "gen", "example", "--which", "4", "--out", "x"])), 2);
    let tmp = TempDir::new().unwrap();
    let bad = write_json(tmp.path(), "cfg.json", r#"{"schema_version": 1, "lamda2": 0.1}"#);
    assert_eq!(code(&kdpid(&["distill", "run", "--config", s(&bad), "--out", s(tmp.path())])), 2);
    let bad = write_json(tmp.path(), "m.json", r#"{"schema_version": 1, "name": "m", "seeds": [0], "job": 2}"#);
    assert_eq!(code(&kdpid(&["matrix", "run", "--config", s(&bad)])), 2);
}

#[test]
fn output_root_relocates_relative_paths() {
    let root = TempDir::new().unwrap();
    let o = kdpid_in(&["data", "gen", "example", "--which", "1", "--out", "ex"], Some(root.path()));
    assert_eq!(code(&o), 0);
    assert!(root.path().join("ex/example1.json").is_file());

    let o = kdpid_in(&["data", "gen", "blobs", "--out", "blobs", "--seed", "4"], Some(root.path()));
    assert_eq!(code(&o), 0);
    for f in ["train.csv", "test.csv", "train.csv.json"] {
        assert!(root.path().join("blobs").join(f).is_file(), "{f}");
    }
}

#[test]
fn nuisance_generation_writes_both_joints() {
    let tmp = TempDir::new().unwrap();
    let o = kdpid(&["data", "gen", "nuisance", "--h-z", "1", "--h-g", "2", "--n", "200", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 0);
    let o = kdpid(&["pid", "compute", "--input", s(&tmp.path().join("joint_student_g.json"))]);
    let v = stdout_json(&o);
    // the nuisance student shares nothing with the task
    assert!(v["red"].as_f64().unwrap().abs() < 1e-4);
    assert!((v["uni_t"].as_f64().unwrap() - 1.0).abs() < 1e-4);
}

#[test]
fn runs_are_recreated_from_their_persisted_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_json(tmp.path(), "cfg.json", &tiny_config().to_json());
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    let o = kdpid(&["distill", "run", "--config", s(&cfg), "--framework", "vid", "--seed", "5", "--out", s(&first), "--dump-reps"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let persisted = first.join("config.json");
    let o = kdpid(&["distill", "run", "--config", s(&persisted), "--out", s(&second)]);
    assert_eq!(code(&o), 0);
    for f in ["epochs.csv", "pid.csv", "config.json", "student.json", "teacher.json"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f} differs");
    }
    let persisted = DistillConfig::load(&persisted).unwrap();
    assert_eq!(persisted.seed, 5);
    assert_eq!(persisted.framework.to_string(), "VID");

    let o = kdpid(&[
        "pipeline", "pid",
        "--reps-t", s(&first.join("reps_t.csv")),
        "--reps-s", s(&first.join("reps_s.csv")),
        "--labels", s(&first.join("labels.csv")),
        "--k", "3", "--pca", "3",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["samples"].as_u64().unwrap(), 90);
    let last = fs::read_to_string(first.join("pid.csv")).unwrap();
    let last: Vec<f64> = last.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    // the final checkpoint used the same representations and options
    assert!((v["atoms"]["red"].as_f64().unwrap() - last[1]).abs() < 1e-12);
}

fn tiny_matrix(dir: &Path, base: DistillConfig) -> PathBuf {
    let mut m = ExperimentMatrix::new("tiny", vec![0, 1, 2], base);
    m.jobs = 3;
    m.out = dir.join("matrix");
    write_json(dir, "matrix.json", &serde_json::to_string_pretty(&m).unwrap())
}

#[test]
fn matrix_run_writes_every_cell_and_the_combined_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny_matrix(tmp.path(), tiny_config());
    let o = kdpid(&["matrix", "run", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("matrix");
    let runs: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join("report.json").is_file())
        .collect();
    assert_eq!(runs.len(), 24);
    for f in ["accuracy.csv", "pid.csv", "accuracy.svg", "pid.svg", "summary.json", "matrix.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert_eq!(fs::read_dir(out.join("teachers")).unwrap().count(), 6);
    let svg = fs::read_to_string(out.join("pid.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("uni_t"));

    // summaries and raw epoch logs aggregate to the same final table
    let reports = load_reports(std::slice::from_ref(&out)).unwrap();
    let summaries = load_summaries(std::slice::from_ref(&out)).unwrap();
    assert_eq!(final_accuracy(&reports), final_accuracy_from_summaries(&summaries));
    // and so does aggregating two halves separately then combining
    let (a, b) = reports.split_at(10);
    let mut halves = final_accuracy(&[a, b].concat());
    halves.sort_by_key(|r| (r.teacher_mode, r.framework));
    assert_eq!(halves, final_accuracy(&reports));

    // a cell re-run from its persisted config gives identical logs
    let cell = out.join("untrained-ted-s1");
    let again = tmp.path().join("again");
    let o = kdpid(&["distill", "run", "--config", s(&cell.join("config.json")), "--out", s(&again)]);
    assert_eq!(code(&o), 0);
    for f in ["epochs.csv", "pid.csv"] {
        assert_eq!(fs::read(cell.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }

    let o = kdpid(&["distill", "compare", "--runs", s(&out.join("trained-rid-s0")), s(&out.join("trained-bas-s0")), "--out", s(&tmp.path().join("cmp"))]);
    assert_eq!(code(&o), 0);
    let acc = fs::read_to_string(tmp.path().join("cmp/accuracy.csv")).unwrap();
    assert!(acc.contains("trained,RID,") && acc.contains("trained,BAS,") && !acc.contains("VID"));

    let svg_out = tmp.path().join("plot.svg");
    let o = kdpid(&["report", "plot", "--input", s(&out.join("pid.csv")), "--out", s(&svg_out), "--filter", "quantity=red"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&svg_out).unwrap().contains("<polyline"));
    let o = kdpid(&["report", "plot", "--input", s(&out.join("pid.csv")), "--out", s(&svg_out), "--y", "median"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn matrix_isolates_failing_cells() {
    let tmp = TempDir::new().unwrap();
    // TED needs an alignment stage after its filter stage; other frameworks ignore this
    let base = DistillConfig {
        ted_stage1_epochs: 6,
        ..tiny_config()
    };
    let cfg = tiny_matrix(tmp.path(), base);
    let o = kdpid(&["matrix", "run", "--config", s(&cfg), "--jobs", "2"]);
    assert_eq!(code(&o), 1);
    let out = tmp.path().join("matrix");
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_u64().unwrap(), 18);
    let failures = summary["failures"].as_array().unwrap();
    assert_eq!(failures.len(), 6);
    assert!(failures.iter().all(|f| f["name"].as_str().unwrap().contains("-ted-")));
    assert!(out.join("trained-rid-s2/report.json").is_file());
    assert!(!out.join("trained-ted-s2").exists());
}
