use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kdpid::datasets::{make_blobs, make_example_triple, make_nuisance_task, BlobsSpec, ExampleSource, SourceChoice};
use kdpid::intersection::{red_cap_deterministic, red_cap_stochastic, verify_lower_bound, StochasticOptions};
use kdpid::pid::{pid_with_oracle, OracleOptions};
use kdpid::pipeline::{pipeline_pid, PipelineOptions, RepDump};
use kdpid::verify::{run_suite, Suite};
use kdpid::{pid, Joint3, SolverOptions};
use kdpid_cli::matrix::{self, ExperimentMatrix};
use kdpid_cli::paths::{output_path, OUTPUT_ROOT_VAR};
use kdpid_cli::svg::{chart_from_table, read_table, PlotSpec};
use kdpid_distill::{DistillConfig, Framework, TeacherMode};
use log::warn;

/// Information decomposition of teacher/student/task triples and
/// distillation experiments.
#[derive(Parser)]
#[command(name = "kdpid", version, about)]
#[command(after_help = format!(
    "Exit status: 0 ok, 1 a checked property failed, 2 usage or I/O error.\n\
     Relative output paths are placed under ${OUTPUT_ROOT_VAR} when it is set."
))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose discrete joints.
    #[command(subcommand)]
    Pid(PidCmd),
    /// Run a property batch and print a JSON verdict per property.
    Verify(VerifyArgs),
    /// Generate datasets.
    #[command(subcommand)]
    Data(DataCmd),
    /// Train students and compare runs.
    #[command(subcommand)]
    Distill(DistillCmd),
    /// Estimate atoms from continuous representations.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// Render charts from CSV.
    #[command(subcommand)]
    Report(ReportCmd),
    /// Run an experiment matrix.
    #[command(subcommand)]
    Matrix(MatrixCmd),
}

#[derive(Subcommand)]
enum PidCmd {
    /// Atoms of one joint (JSON or y,t,s,prob CSV).
    Compute {
        #[arg(long)]
        input: PathBuf,
        /// Use the grid oracle instead of the solver (small supports only).
        #[arg(long)]
        oracle: bool,
        /// Objective tolerance of the solver in bits.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One CSV row per joint file in a directory.
    Sweep {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Intersection-information estimates and the lower-bound check.
    Intersect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        q_card: usize,
        #[arg(long, value_enum, default_value_t = Method::Both)]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Det,
    Stoch,
    Both,
}

#[derive(Args)]
struct VerifyArgs {
    /// thm1, thm2, thm3, lemma1, examples or all.
    suite: String,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DataCmd {
    /// Generate a dataset.
    #[command(subcommand)]
    Gen(GenCmd),
}

#[derive(Subcommand)]
enum GenCmd {
    /// Gaussian class blobs, written as train.csv and test.csv.
    Blobs {
        /// BlobsSpec JSON; defaults are used for missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// One of the three worked example joints, optionally with samples.
    Example {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        which: u8,
        #[arg(long, value_enum)]
        source: Option<SourceArg>,
        /// Also write this many sampled triples to samples.csv.
        #[arg(long, default_value_t = 0)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Teacher (Z, G) with task Z and a label-independent nuisance G.
    Nuisance {
        #[arg(long)]
        h_z: f64,
        #[arg(long)]
        h_g: f64,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    U1,
    U2,
}

#[derive(Subcommand)]
enum DistillCmd {
    /// Train one configuration.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        framework: Option<Framework>,
        #[arg(long)]
        teacher_mode: Option<TeacherMode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Write the tracked pair's final test-split representations.
        #[arg(long)]
        dump_reps: bool,
    },
    /// Aggregate finished runs into curves, charts and a final table.
    Compare {
        /// Run directories, or directories containing them.
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "runs/compare")]
        out: PathBuf,
        #[arg(long, default_value = "compare")]
        name: String,
    },
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// PCA, k-means and decomposition of a representation dump.
    Pid {
        #[arg(long)]
        reps_t: PathBuf,
        #[arg(long)]
        reps_s: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        pca: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Line chart of a long-format CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "epoch")]
        x: String,
        #[arg(long, default_value = "mean")]
        y: String,
        /// Half-width column drawn as a band; "none" disables.
        #[arg(long, default_value = "std")]
        band: String,
        #[arg(long, default_value = "framework")]
        series: String,
        /// Comma-separated columns whose values name the panels.
        #[arg(long, default_value = "mode,quantity")]
        panel: String,
        /// Keep only rows with column=value; repeatable.
        #[arg(long)]
        filter: Vec<String>,
        #[arg(long, default_value = "")]
        title: String,
    },
}

#[derive(Subcommand)]
enum MatrixCmd {
    /// Run every cell of a matrix file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the matrix's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

/// Outcome of a command that completed without an I/O or usage error.
enum Status {
    Ok,
    PropertyFailed,
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            let p = output_path(p);
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
            eprintln!("wrote {}", p.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn solver(tol: Option<f64>) -> Result<SolverOptions> {
    let mut o = SolverOptions::default();
    if let Some(t) = tol {
        o.objective_tol = t;
    }
    o.validate()?;
    Ok(o)
}

fn load_joint(path: &Path) -> Result<Joint3> {
    Joint3::load(path).with_context(|| format!("reading joint {}", path.display()))
}

fn cmd_pid(cmd: PidCmd) -> Result<Status> {
    match cmd {
        PidCmd::Compute { input, oracle, tol, out } => {
            let p = load_joint(&input)?;
            let atoms = if oracle {
                pid_with_oracle(&p, &OracleOptions::default())?
            } else {
                pid(&p, &solver(tol)?)?
            };
            emit(&serde_json::to_string_pretty(&atoms)?, out.as_deref())?;
            Ok(Status::Ok)
        }
        PidCmd::Sweep { dir, tol, out } => {
            let opts = solver(tol)?;
            let mut files: Vec<PathBuf> = fs::read_dir(&dir)
                .with_context(|| format!("reading {}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "csv")))
                .collect();
            files.sort();
            let mut text = String::from("file,red,uni_t,uni_s,syn,mi_yt,mi_ys,mi_yts,iters,violation\n");
            let mut failed = 0;
            for f in &files {
                let name = f.file_name().unwrap_or_default().to_string_lossy();
                match load_joint(f).and_then(|p| Ok(pid(&p, &opts)?)) {
                    Ok(a) => text.push_str(&format!(
                        "{name},{},{},{},{},{},{},{},{},{}\n",
                        a.red, a.uni_t, a.uni_s, a.syn, a.mi_yt, a.mi_ys, a.mi_yts, a.diag.iterations, a.diag.max_violation
                    )),
                    Err(e) => {
                        warn!("{name}: {e:#}");
                        failed += 1;
                    }
                }
            }
            emit(&text, out.as_deref())?;
            if failed > 0 {
                bail!("{failed} of {} files could not be decomposed", files.len());
            }
            Ok(Status::Ok)
        }
        PidCmd::Intersect {
            input,
            q_card,
            method,
            seed,
            out,
        } => {
            let p = load_joint(&input)?;
            let stoch_opts = StochasticOptions {
                seed,
                ..Default::default()
            };
            let mut doc = serde_json::Map::new();
            let mut status = Status::Ok;
            if matches!(method, Method::Det | Method::Both) {
                doc.insert("deterministic".into(), serde_json::to_value(red_cap_deterministic(&p, q_card)?)?);
            }
            if matches!(method, Method::Stoch | Method::Both) {
                doc.insert("stochastic".into(), serde_json::to_value(red_cap_stochastic(&p, q_card, &stoch_opts)?)?);
            }
            let stoch = matches!(method, Method::Stoch | Method::Both).then_some(&stoch_opts);
            let bound = verify_lower_bound(&p, q_card, stoch, &SolverOptions::default())?;
            if !bound.holds {
                status = Status::PropertyFailed;
            }
            doc.insert("lower_bound".into(), serde_json::to_value(bound)?);
            emit(&serde_json::to_string_pretty(&doc)?, out.as_deref())?;
            Ok(status)
        }
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<Status> {
    let suite: Suite = args.suite.parse()?;
    let report = run_suite(suite, args.n, args.seed, &SolverOptions::default());
    for v in &report.verdicts {
        eprintln!(
            "{} {}/{}: {} checked, {} failed, max deviation {:.3e} (tol {:.0e})",
            if v.passed { "PASS" } else { "FAIL" },
            v.suite,
            v.property,
            v.checked,
            v.failures,
            v.max_deviation,
            v.tolerance
        );
    }
    emit(&serde_json::to_string_pretty(&report)?, args.out.as_deref())?;
    Ok(if report.passed { Status::Ok } else { Status::PropertyFailed })
}

fn cmd_data(DataCmd::Gen(cmd): DataCmd) -> Result<Status> {
    match cmd {
        GenCmd::Blobs { spec, seed, out } => {
            let mut s: BlobsSpec = match spec {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p)?).with_context(|| format!("parsing {}", p.display()))?,
                None => BlobsSpec::default(),
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let d = make_blobs(&s)?;
            let out = output_path(&out);
            fs::create_dir_all(&out)?;
            d.train.write(&out.join("train.csv"))?;
            d.test.write(&out.join("test.csv"))?;
            eprintln!("wrote {}", out.display());
        }
        GenCmd::Example {
            which,
            source,
            n,
            seed,
            out,
        } => {
            let source = source.map(|s| match s {
                SourceArg::U1 => ExampleSource::U1,
                SourceArg::U2 => ExampleSource::U2,
            });
            let (p, samples) = make_example_triple(which, source, n, seed)?;
            let out = output_path(&out);
            fs::create_dir_all(&out)?;
            fs::write(out.join(format!("example{which}.json")), p.to_json())?;
            if n > 0 {
                let mut text = String::from("y,t,s\n");
                for (y, t, s) in samples {
                    text.push_str(&format!("{y},{t},{s}\n"));
                }
                fs::write(out.join(format!("example{which}_samples.csv")), text)?;
            }
            eprintln!("wrote {}", out.display());
        }
        GenCmd::Nuisance { h_z, h_g, n, seed, out } => {
            let task = make_nuisance_task(h_z, h_g, n, seed)?;
            let out = output_path(&out);
            fs::create_dir_all(&out)?;
            task.data.write(&out.join("data.csv"))?;
            fs::write(out.join("joint_student_z.json"), task.joint(SourceChoice::Z)?.to_json())?;
            fs::write(out.join("joint_student_g.json"), task.joint(SourceChoice::G)?.to_json())?;
            eprintln!("wrote {}", out.display());
        }
    }
    Ok(Status::Ok)
}

fn cmd_distill(cmd: DistillCmd) -> Result<Status> {
    match cmd {
        DistillCmd::Run {
            config,
            framework,
            teacher_mode,
            seed,
            out,
            dump_reps,
        } => {
            let mut cfg = match config {
                Some(p) => DistillConfig::load(&p).with_context(|| format!("loading {}", p.display()))?,
                None => DistillConfig::default(),
            };
            if let Some(f) = framework {
                cfg.framework = f;
            }
            if let Some(m) = teacher_mode {
                cfg.teacher_mode = m;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = output_path(&out);
            let (report, student, teacher) = matrix::run_config(&cfg)?;
            matrix::write_run_dir(&out, &cfg, &report, &student, Some(&teacher))?;
            if dump_reps {
                let data = make_blobs(&cfg.data)?;
                let pair = cfg.tracked_pair();
                let (_, t_taps) = teacher.predict(&data.test.inputs)?;
                let (_, s_taps) = student.predict(&data.test.inputs)?;
                fs::write(out.join("reps_t.csv"), t_taps[pair.teacher].to_csv())?;
                fs::write(out.join("reps_s.csv"), s_taps[pair.student].to_csv())?;
                let labels: String = data.test.labels.iter().map(|y| format!("{y}\n")).collect();
                fs::write(out.join("labels.csv"), format!("label\n{labels}"))?;
            }
            println!(
                "{} {} seed {}: final test accuracy {:.4}, teacher {:.4}",
                cfg.framework,
                cfg.teacher_mode,
                cfg.seed,
                report.final_test_acc(),
                report.teacher_test_acc
            );
            eprintln!("wrote {}", out.display());
        }
        DistillCmd::Compare { runs, out, name } => {
            let reports = matrix::load_reports(&runs)?;
            let out = output_path(&out);
            matrix::write_aggregates(&out, &name, &reports, &[])?;
            print!("{}", kdpid_cli::aggregate::final_table(&kdpid_cli::aggregate::final_accuracy(&reports)));
            eprintln!("wrote {}", out.display());
        }
    }
    Ok(Status::Ok)
}

fn cmd_pipeline(PipelineCmd::Pid {
    reps_t,
    reps_s,
    labels,
    k,
    pca,
    seed,
    out,
}: PipelineCmd) -> Result<Status> {
    let read = |p: &Path| fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
    let t = kdpid::datasets::read_matrix_csv(&read(&reps_t)?)?;
    let s = kdpid::datasets::read_matrix_csv(&read(&reps_s)?)?;
    let y = kdpid::datasets::read_labels_csv(&read(&labels)?)?;
    let opts = PipelineOptions {
        k,
        n_components: pca,
        seed,
        ..Default::default()
    };
    let res = pipeline_pid(&RepDump::new(t, s, y)?, &opts)?;
    for w in &res.warnings {
        warn!("{w}");
    }
    emit(&serde_json::to_string_pretty(&res)?, out.as_deref())?;
    Ok(Status::Ok)
}

fn cmd_report(ReportCmd::Plot {
    input,
    out,
    x,
    y,
    band,
    series,
    panel,
    filter,
    title,
}: ReportCmd) -> Result<Status> {
    let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let (header, rows) = read_table(&text)?;
    let mut filters = Vec::new();
    for f in filter {
        let Some((c, v)) = f.split_once('=') else {
            bail!("filter {f:?} is not column=value");
        };
        filters.push((c.to_string(), v.to_string()));
    }
    let optional = |s: String| (!s.is_empty() && s != "none").then_some(s);
    let spec = PlotSpec {
        x,
        y,
        band: optional(band),
        series: optional(series),
        panels: panel.split(',').filter(|p| !p.is_empty()).map(str::to_string).collect(),
        filters,
        title: if title.is_empty() {
            input.file_stem().unwrap_or_default().to_string_lossy().into_owned()
        } else {
            title
        },
    };
    let chart = chart_from_table(&header, &rows, &spec)?;
    emit(&chart.to_svg(), Some(&out))?;
    Ok(Status::Ok)
}

fn cmd_matrix(MatrixCmd::Run { config, out, jobs }: MatrixCmd) -> Result<Status> {
    let mut m = ExperimentMatrix::load(&config)?;
    if let Some(j) = jobs {
        m.jobs = j;
    }
    let out = output_path(out.as_deref().unwrap_or(&m.out));
    let res = matrix::run_matrix(&m, &out)?;
    print!("{}", kdpid_cli::aggregate::final_table(&kdpid_cli::aggregate::final_accuracy(&res.reports)));
    for f in &res.failures {
        eprintln!("FAILED {}: {}", f.name, f.error);
    }
    eprintln!("wrote {}", out.display());
    Ok(if res.failures.is_empty() { Status::Ok } else { Status::PropertyFailed })
}

fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Pid(c) => cmd_pid(c),
        Command::Verify(a) => cmd_verify(a),
        Command::Data(c) => cmd_data(c),
        Command::Distill(c) => cmd_distill(c),
        Command::Pipeline(c) => cmd_pipeline(c),
        Command::Report(c) => cmd_report(c),
        Command::Matrix(c) => cmd_matrix(c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::PropertyFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
