//! Central-difference checks of every training objective on small random
//! networks.

use kdpid::random::{self, Rng64};
use kdpid::{Error, Matrix, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::LayerPair;
use crate::nn::{Network, SigmaVec};
use crate::objective::{self, filter_net, filter_with_head, BatchLoss, RidParts, TedParts, VidParts};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Denominator floor of the relative error.
pub const FLOOR: f64 = 1e-4;

const BATCH: usize = 6;
const CLASSES: usize = 3;

/// Names accepted by [`check_objective`].
pub const OBJECTIVES: [&str; 7] = [
    "ce",
    "rid-warmup",
    "rid-phase1",
    "rid-phase2",
    "vid",
    "ted-stage1",
    "ted-stage2",
];

pub fn gaussian(rng: &mut Rng64, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).expect("sizes match")
}

/// Initializes `n` and perturbs every parameter so that biases are nonzero.
pub fn jittered(rng: &mut Rng64, mut n: Network) -> Network {
    n.init(rng);
    for v in n.params_mut() {
        *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
    }
    n
}

fn random_sigma(rng: &mut Rng64, c: usize) -> SigmaVec {
    let mut s = SigmaVec::ones(c);
    s.raw = (0..c).map(|_| rng.random_range(-0.5..0.5)).collect();
    s
}

/// Every module of every framework on one random batch. Two layer pairs
/// share student tap 1 so that tap gradients must accumulate.
struct World {
    student: Network,
    rid: RidParts,
    vid: VidParts,
    ted: TedParts,
    pairs: Vec<LayerPair>,
    x: Matrix,
    y: Vec<usize>,
    t_taps: Vec<Matrix>,
}

impl World {
    fn new(seed: u64) -> Result<Self> {
        let mut rng = random::substream(seed, "gradient-check");
        let d = rng.random_range(2..5);
        let student = jittered(&mut rng, Network::mlp(d, &[4, 3], CLASSES)?);
        let pairs = vec![
            LayerPair { teacher: 0, student: 0 },
            LayerPair { teacher: 1, student: 1 },
            LayerPair { teacher: 1, student: 1 },
        ];
        let t_widths = [5, 4, 4];
        let s_widths = [4, 3, 3];
        let fo = 3;
        let x = gaussian(&mut rng, BATCH, d);
        let y = (0..BATCH).map(|_| rng.random_range(0..CLASSES)).collect();
        let t_taps = t_widths.iter().map(|&w| gaussian(&mut rng, BATCH, w).map(f64::abs)).collect();
        let mut nets = |f: &dyn Fn(usize) -> Result<Network>| -> Result<Vec<Network>> {
            (0..3).map(|k| Ok(jittered(&mut rng, f(k)?))).collect()
        };
        let rid_heads = nets(&|k| filter_with_head(t_widths[k], 4, fo, CLASSES))?;
        let rid_filters = nets(&|k| filter_net(s_widths[k], 4, fo))?;
        let mus = nets(&|k| Network::mlp(s_widths[k], &[4, 4], t_widths[k]))?;
        let ted_t = nets(&|k| filter_with_head(t_widths[k], 4, fo, CLASSES))?;
        let ted_s = nets(&|k| filter_with_head(s_widths[k], 4, fo, CLASSES))?;
        let rid_sigmas = (0..3).map(|_| random_sigma(&mut rng, fo)).collect();
        let vid_sigmas = t_widths.iter().map(|&w| random_sigma(&mut rng, w)).collect();
        let mut ted = TedParts::new(ted_t, ted_s);
        ted.finish_stage1();
        Ok(Self {
            student,
            rid: RidParts {
                teacher_heads: rid_heads,
                student_filters: rid_filters,
                sigmas: rid_sigmas,
            },
            vid: VidParts { mus, sigmas: vid_sigmas },
            ted,
            pairs,
            x,
            y,
            t_taps,
        })
    }

    fn s_taps(&self) -> Result<Vec<Matrix>> {
        let (_, taps) = self.student.predict(&self.x)?;
        Ok(self.pairs.iter().map(|p| taps[p.student].clone()).collect())
    }
}

#[derive(Debug, Clone, Copy)]
enum Group {
    Student,
    RidHead(usize),
    RidFilter(usize),
    RidSigma(usize),
    Mu(usize),
    VidSigma(usize),
    TedTeacher(usize),
    TedStudent(usize),
}

fn slot(w: &mut World, g: Group) -> &mut [f64] {
    match g {
        Group::Student => w.student.params_mut(),
        Group::RidHead(k) => w.rid.teacher_heads[k].params_mut(),
        Group::RidFilter(k) => w.rid.student_filters[k].params_mut(),
        Group::RidSigma(k) => &mut w.rid.sigmas[k].raw,
        Group::Mu(k) => w.vid.mus[k].params_mut(),
        Group::VidSigma(k) => &mut w.vid.sigmas[k].raw,
        Group::TedTeacher(k) => w.ted.teacher_heads[k].params_mut(),
        Group::TedStudent(k) => w.ted.student_heads[k].params_mut(),
    }
}

fn grad(w: &World, g: Group) -> Vec<f64> {
    match g {
        Group::Student => w.student.grads().to_vec(),
        Group::RidHead(k) => w.rid.teacher_heads[k].grads().to_vec(),
        Group::RidFilter(k) => w.rid.student_filters[k].grads().to_vec(),
        Group::RidSigma(k) => w.rid.sigmas[k].grad.clone(),
        Group::Mu(k) => w.vid.mus[k].grads().to_vec(),
        Group::VidSigma(k) => w.vid.sigmas[k].grad.clone(),
        Group::TedTeacher(k) => w.ted.teacher_heads[k].grads().to_vec(),
        Group::TedStudent(k) => w.ted.student_heads[k].grads().to_vec(),
    }
}

type Objective = fn(&mut World) -> Result<BatchLoss>;

fn each(k: usize, f: fn(usize) -> Group) -> Vec<Group> {
    (0..k).map(f).collect()
}

/// The objective, the groups it trains and the groups it must leave alone.
fn lookup(name: &str, k: usize) -> Result<(Objective, Vec<Group>, Vec<Group>)> {
    let student = || vec![Group::Student];
    Ok(match name {
        "ce" => (|w| objective::ce_student(&mut w.student, &w.x, &w.y, 0.7), student(), vec![]),
        "rid-warmup" => (
            |w| objective::rid_warmup(&mut w.rid, &w.t_taps, &w.y),
            each(k, Group::RidHead),
            [student(), each(k, Group::RidFilter), each(k, Group::RidSigma)].concat(),
        ),
        "rid-phase1" => (
            |w| {
                let s = w.s_taps()?;
                objective::rid_phase1(&mut w.rid, &w.t_taps, &s, &w.y)
            },
            each(k, Group::RidHead),
            [student(), each(k, Group::RidFilter), each(k, Group::RidSigma)].concat(),
        ),
        "rid-phase2" => (
            |w| objective::rid_phase2(&mut w.student, &mut w.rid, &w.pairs, &w.t_taps, &w.x, &w.y, 0.8, 1.7),
            [student(), each(k, Group::RidFilter), each(k, Group::RidSigma)].concat(),
            each(k, Group::RidHead),
        ),
        "vid" => (
            |w| objective::vid(&mut w.student, &mut w.vid, &w.pairs, &w.t_taps, &w.x, &w.y, 2.5),
            [student(), each(k, Group::Mu), each(k, Group::VidSigma)].concat(),
            vec![],
        ),
        "ted-stage1" => (
            |w| {
                let s = w.s_taps()?;
                objective::ted_stage1(&mut w.ted, &w.t_taps, &s, &w.y)
            },
            [each(k, Group::TedTeacher), each(k, Group::TedStudent)].concat(),
            student(),
        ),
        "ted-stage2" => (
            |w| objective::ted_stage2(&mut w.student, &mut w.ted, &w.pairs, &w.t_taps, &w.x, &w.y, 0.6, 1.3),
            [student(), each(k, Group::TedStudent)].concat(),
            each(k, Group::TedTeacher),
        ),
        other => return Err(Error::InvalidArgument(format!("unknown objective {other:?}"))),
    })
}

/// Worst relative error `|a - n| / max(|a|, |n|, FLOOR)` over all
/// coordinates of the trained groups.
fn worst_error(w: &mut World, f: Objective, groups: &[Group]) -> Result<f64> {
    f(w)?;
    let analytic: Vec<Vec<f64>> = groups.iter().map(|&g| grad(w, g)).collect();
    let mut worst: f64 = 0.0;
    for (&g, a) in groups.iter().zip(&analytic) {
        for (i, &ai) in a.iter().enumerate() {
            let orig = slot(w, g)[i];
            slot(w, g)[i] = orig + STEP;
            let up = f(w)?.total;
            slot(w, g)[i] = orig - STEP;
            let down = f(w)?.total;
            slot(w, g)[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let err = (ai - numeric).abs() / ai.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheck {
    pub objective: String,
    pub networks: u64,
    /// Largest relative error over all networks and coordinates.
    pub worst_error: f64,
    /// Modules outside the objective's scope that still received a gradient.
    pub leaks: Vec<String>,
}

/// Checks one objective on `networks` random worlds (seeds `0..networks`).
pub fn check_objective(name: &str, networks: u64) -> Result<GradCheck> {
    let mut out = GradCheck {
        objective: name.to_string(),
        networks,
        worst_error: 0.0,
        leaks: Vec::new(),
    };
    for seed in 0..networks {
        let mut w = World::new(seed)?;
        let (f, groups, frozen) = lookup(name, w.pairs.len())?;
        out.worst_error = out.worst_error.max(worst_error(&mut w, f, &groups)?);
        for g in frozen {
            if grad(&w, g).iter().any(|&v| v != 0.0) {
                out.leaks.push(format!("net {seed}: {g:?}"));
            }
        }
    }
    Ok(out)
}
