//! Epoch-level training loop shared by all frameworks.

use std::time::Instant;

use kdpid::datasets::{Dataset, LabeledData};
use kdpid::pipeline::{pipeline_pid, RepDump};
use kdpid::random::{self, Rng64};
use kdpid::{Error, Matrix, Result};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{DistillConfig, Framework, TeacherMode};
use crate::loss;
use crate::nn::{Network, SigmaVec};
use crate::objective::{self, BatchLoss, RidParts, TedParts, VidParts};
use crate::report::{EpochRecord, PidCheckpoint, TrainReport};

/// What a single epoch optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// RID teacher-filter pretraining.
    Warmup,
    /// RID teacher-filter step.
    Phase1,
    /// RID student step.
    Phase2,
    Vid,
    Bas,
    /// TED student pretraining with cross-entropy.
    Pretrain,
    /// TED filter training.
    Stage1,
    /// TED alignment.
    Stage2,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::Phase1 => "phase1",
            Phase::Phase2 => "phase2",
            Phase::Vid => "vid",
            Phase::Bas => "bas",
            Phase::Pretrain => "pretrain",
            Phase::Stage1 => "stage1",
            Phase::Stage2 => "stage2",
        }
    }

    /// Whether the student body is updated in this phase.
    pub fn trains_student(self) -> bool {
        !matches!(self, Phase::Warmup | Phase::Phase1 | Phase::Stage1)
    }
}

/// Phase of a 1-based epoch under a configuration.
pub fn phase_of(cfg: &DistillConfig, epoch: usize) -> Phase {
    match cfg.framework {
        Framework::Bas => Phase::Bas,
        Framework::Vid => Phase::Vid,
        Framework::Rid => {
            if epoch <= cfg.n_warmup {
                Phase::Warmup
            } else if (epoch - cfg.n_warmup - 1) % cfg.cycle_len < cfg.phase1_len() {
                Phase::Phase1
            } else {
                Phase::Phase2
            }
        }
        Framework::Ted => {
            if epoch <= cfg.n_warmup {
                Phase::Pretrain
            } else if epoch <= cfg.n_warmup + cfg.ted_stage1_epochs {
                Phase::Stage1
            } else {
                Phase::Stage2
            }
        }
    }
}

/// The teacher network for a configuration: freshly initialized, and
/// trained with cross-entropy unless the teacher mode is untrained.
pub fn build_teacher(cfg: &DistillConfig, data: &Dataset) -> Result<Network> {
    let train = &data.train;
    let mut teacher = Network::mlp(train.inputs.cols(), &cfg.teacher_hidden, train.n_classes)?;
    teacher.init(&mut random::substream(cfg.seed, "teacher-init"));
    if cfg.teacher_mode == TeacherMode::Trained {
        let mut rng = random::substream(cfg.seed, "teacher-batches");
        for epoch in 1..=cfg.teacher_epochs {
            let lr = cfg.teacher_lr.at(epoch);
            for idx in batches(train.len(), cfg.batch_size, &mut rng) {
                let x = train.inputs.select_rows(&idx);
                let y = pick(&train.labels, &idx);
                objective::ce_student(&mut teacher, &x, &y, 1.0)?;
                teacher.sgd_step(lr, &cfg.sgd);
            }
        }
    }
    Ok(teacher)
}

/// Cache key identifying a teacher: runs that agree on it share a teacher.
pub fn teacher_key(cfg: &DistillConfig) -> String {
    serde_json::json!({
        "seed": cfg.seed,
        "mode": cfg.teacher_mode,
        "hidden": cfg.teacher_hidden,
        "epochs": cfg.teacher_epochs,
        "lr": cfg.teacher_lr,
        "batch": cfg.batch_size,
        "sgd": cfg.sgd,
        "data": cfg.data,
    })
    .to_string()
}

fn batches(n: usize, size: usize, rng: &mut Rng64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(size).map(<[usize]>::to_vec).collect()
}

fn pick(labels: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| labels[i]).collect()
}

fn init_all(nets: &mut [Network], rng: &mut Rng64) {
    for n in nets {
        n.init(rng);
    }
}

/// Frozen teacher representations on both splits.
#[derive(Debug, Clone)]
struct TeacherView {
    train_taps: Vec<Matrix>,
    test_taps: Vec<Matrix>,
    test_acc: f64,
}

/// Stateful trainer advancing one epoch at a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: DistillConfig,
    data: Dataset,
    teacher: Network,
    view: TeacherView,
    student: Network,
    rid: Option<RidParts>,
    vid: Option<VidParts>,
    ted: Option<TedParts>,
    epoch: usize,
    student_rng: Rng64,
    filter_rng: Rng64,
    records: Vec<EpochRecord>,
    checkpoints: Vec<PidCheckpoint>,
    started: Instant,
}

impl Trainer {
    pub fn new(cfg: DistillConfig, data: Dataset, teacher: Network) -> Result<Self> {
        cfg.validate()?;
        let (d, classes) = (data.train.inputs.cols(), data.train.n_classes);
        if teacher.input_width() != d || teacher.output_width() != classes {
            return Err(Error::Shape("teacher does not match the dataset".into()));
        }
        if teacher.taps().len() != cfg.teacher_hidden.len() {
            return Err(Error::Shape("teacher does not match teacher_hidden".into()));
        }
        let (_, train_taps) = teacher.predict(&data.train.inputs)?;
        let (t_logits, test_taps) = teacher.predict(&data.test.inputs)?;
        let view = TeacherView {
            train_taps,
            test_taps,
            test_acc: loss::accuracy(&t_logits, &data.test.labels),
        };

        let mut student = Network::mlp(d, &cfg.student_hidden, classes)?;
        student.init(&mut random::substream(cfg.seed, "student-init"));

        let mut aux_rng = random::substream(cfg.seed, "filters-init");
        let aux = &cfg.aux;
        let t_width = |k: usize| teacher.tap_width(cfg.pairs[k].teacher);
        let s_width = |k: usize| student.tap_width(cfg.pairs[k].student);
        let k_pairs = cfg.pairs.len();
        let (mut rid, mut vid, mut ted) = (None, None, None);
        match cfg.framework {
            Framework::Rid => {
                let mut heads = (0..k_pairs)
                    .map(|k| objective::filter_with_head(t_width(k), aux.filter_hidden, aux.filter_out, classes))
                    .collect::<Result<Vec<_>>>()?;
                let mut filters = (0..k_pairs)
                    .map(|k| objective::filter_net(s_width(k), aux.filter_hidden, aux.filter_out))
                    .collect::<Result<Vec<_>>>()?;
                init_all(&mut heads, &mut aux_rng);
                init_all(&mut filters, &mut aux_rng);
                rid = Some(RidParts {
                    teacher_heads: heads,
                    student_filters: filters,
                    sigmas: vec![SigmaVec::ones(aux.filter_out); k_pairs],
                });
            }
            Framework::Vid => {
                let mut mus = (0..k_pairs)
                    .map(|k| Network::mlp(s_width(k), &aux.mu_hidden, t_width(k)))
                    .collect::<Result<Vec<_>>>()?;
                init_all(&mut mus, &mut aux_rng);
                let sigmas = (0..k_pairs).map(|k| SigmaVec::ones(t_width(k))).collect();
                vid = Some(VidParts { mus, sigmas });
            }
            Framework::Ted => {
                let mut th = (0..k_pairs)
                    .map(|k| objective::filter_with_head(t_width(k), aux.filter_hidden, aux.filter_out, classes))
                    .collect::<Result<Vec<_>>>()?;
                let mut sh = (0..k_pairs)
                    .map(|k| objective::filter_with_head(s_width(k), aux.filter_hidden, aux.filter_out, classes))
                    .collect::<Result<Vec<_>>>()?;
                init_all(&mut th, &mut aux_rng);
                init_all(&mut sh, &mut aux_rng);
                ted = Some(TedParts::new(th, sh));
            }
            Framework::Bas => {}
        }
        Ok(Self {
            student_rng: random::substream(cfg.seed, "student-batches"),
            filter_rng: random::substream(cfg.seed, "filter-batches"),
            cfg,
            data,
            teacher,
            view,
            student,
            rid,
            vid,
            ted,
            epoch: 0,
            records: Vec::new(),
            checkpoints: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn config(&self) -> &DistillConfig {
        &self.cfg
    }

    pub fn teacher(&self) -> &Network {
        &self.teacher
    }

    pub fn student(&self) -> &Network {
        &self.student
    }

    pub fn rid_parts(&self) -> Option<&RidParts> {
        self.rid.as_ref()
    }

    pub fn vid_parts(&self) -> Option<&VidParts> {
        self.vid.as_ref()
    }

    pub fn ted_parts(&self) -> Option<&TedParts> {
        self.ted.as_ref()
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.cfg.total_epochs()
    }

    pub fn teacher_test_accuracy(&self) -> f64 {
        self.view.test_acc
    }

    fn pair_taps(&self, taps: &[Matrix], idx: &[usize]) -> Vec<Matrix> {
        self.cfg.pairs.iter().map(|p| taps[p.teacher].select_rows(idx)).collect()
    }

    fn student_pair_taps(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        let (_, taps) = self.student.predict(x)?;
        Ok(self.cfg.pairs.iter().map(|p| taps[p.student].clone()).collect())
    }

    fn run_batch(&mut self, phase: Phase, idx: &[usize]) -> Result<BatchLoss> {
        let cfg = &self.cfg;
        let x = self.data.train.inputs.select_rows(idx);
        let y = pick(&self.data.train.labels, idx);
        let t = self.pair_taps(&self.view.train_taps, idx);
        let lr = cfg.lr.at(self.epoch + 1);
        let sgd = cfg.sgd;
        let missing = || Error::State(format!("no modules for phase {}", phase.as_str()));
        let out = match phase {
            Phase::Bas | Phase::Pretrain => objective::ce_student(&mut self.student, &x, &y, 1.0)?,
            Phase::Warmup => {
                let parts = self.rid.as_mut().ok_or_else(missing)?;
                let out = objective::rid_warmup(parts, &t, &y)?;
                parts.teacher_heads.iter_mut().for_each(|n| n.sgd_step(lr, &sgd));
                return Ok(out);
            }
            Phase::Phase1 => {
                let s = self.student_pair_taps(&x)?;
                let parts = self.rid.as_mut().ok_or_else(missing)?;
                let out = objective::rid_phase1(parts, &t, &s, &y)?;
                parts.teacher_heads.iter_mut().for_each(|n| n.sgd_step(lr, &sgd));
                return Ok(out);
            }
            Phase::Phase2 => {
                let parts = self.rid.as_mut().ok_or_else(missing)?;
                let out = objective::rid_phase2(&mut self.student, parts, &cfg.pairs, &t, &x, &y, cfg.lambda1, cfg.lambda2)?;
                parts.student_filters.iter_mut().for_each(|n| n.sgd_step(lr, &sgd));
                parts.sigmas.iter_mut().for_each(|s| s.sgd_step(lr, &sgd));
                out
            }
            Phase::Vid => {
                let parts = self.vid.as_mut().ok_or_else(missing)?;
                let out = objective::vid(&mut self.student, parts, &cfg.pairs, &t, &x, &y, cfg.vid_lambda)?;
                parts.mus.iter_mut().for_each(|n| n.sgd_step(lr, &sgd));
                parts.sigmas.iter_mut().for_each(|s| s.sgd_step(lr, &sgd));
                out
            }
            Phase::Stage1 => {
                let s = self.student_pair_taps(&x)?;
                let parts = self.ted.as_mut().ok_or_else(missing)?;
                let out = objective::ted_stage1(parts, &t, &s, &y)?;
                parts.teacher_heads.iter_mut().for_each(|n| n.sgd_step(lr, &sgd));
                parts.student_heads.iter_mut().for_each(|n| n.sgd_step(lr, &sgd));
                return Ok(out);
            }
            Phase::Stage2 => {
                let parts = self.ted.as_mut().ok_or_else(missing)?;
                let out = objective::ted_stage2(&mut self.student, parts, &cfg.pairs, &t, &x, &y, cfg.lambda1, cfg.lambda2)?;
                parts.student_heads.iter_mut().for_each(|n| n.sgd_step(lr, &sgd));
                out
            }
        };
        self.student.sgd_step(lr, &sgd);
        Ok(out)
    }

    fn evaluate(&self, split: &LabeledData) -> Result<(f64, f64)> {
        let (logits, _) = self.student.predict(&split.inputs)?;
        let (ce, _) = loss::cross_entropy(&logits, &split.labels)?;
        Ok((loss::accuracy(&logits, &split.labels), ce))
    }

    /// Information atoms of the tracked pair on the test split.
    pub fn pid_checkpoint(&self) -> Result<PidCheckpoint> {
        let pair = self.cfg.tracked_pair();
        let (logits, s_taps) = self.student.predict(&self.data.test.inputs)?;
        let mut dump = RepDump::new(
            self.view.test_taps[pair.teacher].clone(),
            s_taps[pair.student].clone(),
            self.data.test.labels.clone(),
        )?;
        dump.epoch = Some(self.epoch);
        let res = pipeline_pid(&dump, &self.cfg.pipeline)?;
        Ok(PidCheckpoint {
            epoch: self.epoch,
            atoms: res.atoms,
            k_t: res.k_t,
            k_s: res.k_s,
            test_acc: loss::accuracy(&logits, &self.data.test.labels),
        })
    }

    fn wants_checkpoint(&self) -> bool {
        let every = self.cfg.pid_every;
        every > 0 && (self.epoch.is_multiple_of(every) || self.is_done())
    }

    /// Runs one epoch and returns its record.
    pub fn step_epoch(&mut self) -> Result<EpochRecord> {
        if self.is_done() {
            return Err(Error::State("all epochs have been run".into()));
        }
        if self.epoch == 0 && self.cfg.pid_every > 0 && self.checkpoints.is_empty() {
            let cp = self.pid_checkpoint()?;
            self.checkpoints.push(cp);
        }
        let epoch = self.epoch + 1;
        let phase = phase_of(&self.cfg, epoch);
        let rng = if phase.trains_student() {
            &mut self.student_rng
        } else {
            &mut self.filter_rng
        };
        let order = batches(self.data.train.len(), self.cfg.batch_size, rng);
        let mut sum = BatchLoss {
            layers: vec![0.0; self.cfg.pairs.len()],
            ..Default::default()
        };
        let mut count = 0.0;
        for idx in &order {
            let b = self.run_batch(phase, idx)?;
            let w = idx.len() as f64;
            sum.total += w * b.total;
            sum.ce += w * b.ce;
            for (acc, v) in sum.layers.iter_mut().zip(&b.layers) {
                *acc += w * v;
            }
            count += w;
        }
        if phase == Phase::Stage1 && epoch == self.cfg.n_warmup + self.cfg.ted_stage1_epochs {
            if let Some(ted) = self.ted.as_mut() {
                ted.finish_stage1();
            }
        }
        self.epoch = epoch;
        let (train_acc, train_ce) = self.evaluate(&self.data.train)?;
        let (test_acc, _) = self.evaluate(&self.data.test)?;
        let record = EpochRecord {
            epoch,
            phase,
            lr: self.cfg.lr.at(epoch),
            objective: sum.total / count,
            batch_ce: sum.ce / count,
            distill: sum.layers.iter().sum::<f64>() / count,
            layer_distill: sum.layers.iter().map(|v| v / count).collect(),
            student_train_ce: train_ce,
            train_acc,
            test_acc,
            teacher_test_acc: self.view.test_acc,
        };
        self.records.push(record.clone());
        if self.wants_checkpoint() {
            let cp = self.pid_checkpoint()?;
            self.checkpoints.push(cp);
        }
        Ok(record)
    }

    /// Runs the remaining epochs and assembles the report.
    pub fn run(mut self) -> Result<(TrainReport, Network)> {
        while !self.is_done() {
            self.step_epoch()?;
        }
        let report = self.report();
        Ok((report, self.student))
    }

    pub fn report(&self) -> TrainReport {
        TrainReport {
            framework: self.cfg.framework,
            teacher_mode: self.cfg.teacher_mode,
            seed: self.cfg.seed,
            teacher_test_acc: self.view.test_acc,
            epochs: self.records.clone(),
            checkpoints: self.checkpoints.clone(),
            wall_seconds: self.started.elapsed().as_secs_f64(),
        }
    }
}

/// Builds the teacher and runs a whole configuration.
pub fn train(cfg: &DistillConfig, data: &Dataset) -> Result<TrainReport> {
    let teacher = build_teacher(cfg, data)?;
    Ok(Trainer::new(cfg.clone(), data.clone(), teacher)?.run()?.0)
}
