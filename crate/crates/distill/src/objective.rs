//! Per-batch training objectives of each framework.
//!
//! Each function clears the gradients of the modules it trains, evaluates
//! the objective on one batch, backpropagates into exactly those modules and
//! returns the objective value. Modules it only reads are evaluated through
//! [`Network::predict`] and receive no gradient.

use kdpid::{Error, Matrix, Result};

use crate::config::LayerPair;
use crate::loss;
use crate::nn::{Activation, LayerShape, Network, SigmaVec};

/// Objective value split into its parts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchLoss {
    pub total: f64,
    /// Task cross-entropy (student, or the sum over filter heads).
    pub ce: f64,
    /// Distillation term per layer pair, before weighting.
    pub layers: Vec<f64>,
}

impl BatchLoss {
    pub fn distill(&self) -> f64 {
        self.layers.iter().sum()
    }
}

/// Two-layer filter `input -> hidden (ReLU) -> out`, no taps.
pub fn filter_net(input: usize, hidden: usize, out: usize) -> Result<Network> {
    Network::new(
        vec![
            LayerShape {
                inputs: input,
                outputs: hidden,
                activation: Activation::Relu,
            },
            LayerShape {
                inputs: hidden,
                outputs: out,
                activation: Activation::Identity,
            },
        ],
        vec![],
    )
}

/// Filter followed by a linear classification head; tap 0 is the filter output.
pub fn filter_with_head(input: usize, hidden: usize, out: usize, classes: usize) -> Result<Network> {
    let mut layers = filter_net(input, hidden, out)?.layers().to_vec();
    layers.push(LayerShape {
        inputs: out,
        outputs: classes,
        activation: Activation::Identity,
    });
    Network::new(layers, vec![1])
}

/// Trainable modules of the RID framework, one entry per layer pair.
#[derive(Debug, Clone)]
pub struct RidParts {
    /// Teacher filter `f_t` with its head `g_t`.
    pub teacher_heads: Vec<Network>,
    pub student_filters: Vec<Network>,
    pub sigmas: Vec<SigmaVec>,
}

/// Trainable modules of the VID framework.
#[derive(Debug, Clone)]
pub struct VidParts {
    pub mus: Vec<Network>,
    pub sigmas: Vec<SigmaVec>,
}

/// Trainable modules of the TED framework.
#[derive(Debug, Clone)]
pub struct TedParts {
    pub teacher_heads: Vec<Network>,
    pub student_heads: Vec<Network>,
    stage1_done: bool,
}

impl TedParts {
    pub fn new(teacher_heads: Vec<Network>, student_heads: Vec<Network>) -> Self {
        Self {
            teacher_heads,
            student_heads,
            stage1_done: false,
        }
    }

    /// Marks the filter stage as complete, enabling [`ted_stage2`].
    pub fn finish_stage1(&mut self) {
        self.stage1_done = true;
    }

    pub fn stage1_done(&self) -> bool {
        self.stage1_done
    }
}

fn filter_out(net: &Network, x: &Matrix) -> Result<Matrix> {
    let (out, mut taps) = net.predict(x)?;
    Ok(if net.taps().is_empty() { out } else { taps.swap_remove(0) })
}

fn scaled(m: &Matrix, c: f64) -> Matrix {
    m.map(|v| c * v)
}

fn add_into(acc: &mut Option<Matrix>, g: Matrix) {
    match acc {
        Some(a) => a.as_mut_slice().iter_mut().zip(g.as_slice()).for_each(|(x, y)| *x += y),
        None => *acc = Some(g),
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{what}: {got} entries for {want} layer pairs")));
    }
    Ok(())
}

/// Student cross-entropy scaled by `lambda1`.
pub fn ce_student(student: &mut Network, x: &Matrix, labels: &[usize], lambda1: f64) -> Result<BatchLoss> {
    student.zero_grad();
    let (logits, _) = student.forward(x)?;
    let (ce, g) = loss::cross_entropy(&logits, labels)?;
    student.backward(Some(&scaled(&g, lambda1)), &[])?;
    Ok(BatchLoss {
        total: lambda1 * ce,
        ce,
        layers: Vec::new(),
    })
}

/// Warm-up: head cross-entropy of every teacher filter.
pub fn rid_warmup(parts: &mut RidParts, t_taps: &[Matrix], labels: &[usize]) -> Result<BatchLoss> {
    check_len("teacher taps", t_taps.len(), parts.teacher_heads.len())?;
    let mut out = BatchLoss::default();
    for (head, t) in parts.teacher_heads.iter_mut().zip(t_taps) {
        head.zero_grad();
        let (logits, _) = head.forward(t)?;
        let (ce, g) = loss::cross_entropy(&logits, labels)?;
        head.backward(Some(&g), &[])?;
        out.ce += ce;
        out.layers.push(0.0);
    }
    out.total = out.ce;
    Ok(out)
}

/// Phase 1: teacher-filter loss against the frozen student filters.
///
/// `s_taps[k]` is the student representation of pair `k`.
pub fn rid_phase1(parts: &mut RidParts, t_taps: &[Matrix], s_taps: &[Matrix], labels: &[usize]) -> Result<BatchLoss> {
    let k = parts.teacher_heads.len();
    check_len("teacher taps", t_taps.len(), k)?;
    check_len("student taps", s_taps.len(), k)?;
    let mut out = BatchLoss::default();
    for i in 0..k {
        let f_s = filter_out(&parts.student_filters[i], &s_taps[i])?;
        let head = &mut parts.teacher_heads[i];
        head.zero_grad();
        let (logits, taps) = head.forward(&t_taps[i])?;
        let (ce, _) = loss::cross_entropy(&logits, labels)?;
        let (lt, g_logits, g_ft) = loss::rid_teacher(&logits, labels, &taps[0], &f_s, &parts.sigmas[i])?;
        head.backward(Some(&g_logits), &[Some(&g_ft)])?;
        out.ce += ce;
        let pen = lt - ce;
        out.layers.push(pen);
    }
    out.total = out.ce + out.distill();
    Ok(out)
}

/// Phase 2: `lambda1 CE + lambda2 sum_k L_s` over the student, its filters
/// and the weights `sigma`, with the teacher filters frozen.
#[allow(clippy::too_many_arguments)]
pub fn rid_phase2(
    student: &mut Network,
    parts: &mut RidParts,
    pairs: &[LayerPair],
    t_taps: &[Matrix],
    x: &Matrix,
    labels: &[usize],
    lambda1: f64,
    lambda2: f64,
) -> Result<BatchLoss> {
    check_len("teacher taps", t_taps.len(), pairs.len())?;
    check_len("filters", parts.student_filters.len(), pairs.len())?;
    student.zero_grad();
    let (logits, s_taps) = student.forward(x)?;
    let (ce, g_logits) = loss::cross_entropy(&logits, labels)?;
    let mut tap_grads: Vec<Option<Matrix>> = vec![None; s_taps.len()];
    let mut out = BatchLoss {
        ce,
        ..Default::default()
    };
    for (i, pair) in pairs.iter().enumerate() {
        let f_t = filter_out(&parts.teacher_heads[i], &t_taps[i])?;
        let filt = &mut parts.student_filters[i];
        filt.zero_grad();
        let (f_s, _) = filt.forward(&s_taps[pair.student])?;
        let (ls, g_fs, d_raw) = loss::rid_student(&f_t, &f_s, &parts.sigmas[i])?;
        let g_in = filt.backward(Some(&scaled(&g_fs, lambda2)), &[])?;
        add_into(&mut tap_grads[pair.student], g_in);
        let sigma = &mut parts.sigmas[i];
        sigma.zero_grad();
        sigma.grad.iter_mut().zip(&d_raw).for_each(|(g, d)| *g = lambda2 * d);
        out.layers.push(ls);
    }
    let refs: Vec<Option<&Matrix>> = tap_grads.iter().map(Option::as_ref).collect();
    student.backward(Some(&scaled(&g_logits, lambda1)), &refs)?;
    out.total = lambda1 * ce + lambda2 * out.distill();
    Ok(out)
}

/// VID: `CE + lambda sum_k vid_term` over the student, predictors and `sigma`.
pub fn vid(
    student: &mut Network,
    parts: &mut VidParts,
    pairs: &[LayerPair],
    t_taps: &[Matrix],
    x: &Matrix,
    labels: &[usize],
    lambda: f64,
) -> Result<BatchLoss> {
    check_len("teacher taps", t_taps.len(), pairs.len())?;
    check_len("predictors", parts.mus.len(), pairs.len())?;
    student.zero_grad();
    let (logits, s_taps) = student.forward(x)?;
    let (ce, g_logits) = loss::cross_entropy(&logits, labels)?;
    let mut tap_grads: Vec<Option<Matrix>> = vec![None; s_taps.len()];
    let mut out = BatchLoss {
        ce,
        ..Default::default()
    };
    for (i, pair) in pairs.iter().enumerate() {
        let mu_net = &mut parts.mus[i];
        mu_net.zero_grad();
        let (mu, _) = mu_net.forward(&s_taps[pair.student])?;
        let (v, g_mu, d_raw) = loss::vid_term(&t_taps[i], &mu, &parts.sigmas[i])?;
        let g_in = mu_net.backward(Some(&scaled(&g_mu, lambda)), &[])?;
        add_into(&mut tap_grads[pair.student], g_in);
        let sigma = &mut parts.sigmas[i];
        sigma.zero_grad();
        sigma.grad.iter_mut().zip(&d_raw).for_each(|(g, d)| *g = lambda * d);
        out.layers.push(v);
    }
    let refs: Vec<Option<&Matrix>> = tap_grads.iter().map(Option::as_ref).collect();
    student.backward(Some(&g_logits), &refs)?;
    out.total = ce + lambda * out.distill();
    Ok(out)
}

/// TED stage 1: head cross-entropy of the teacher and student filters, with
/// both bodies frozen.
pub fn ted_stage1(parts: &mut TedParts, t_taps: &[Matrix], s_taps: &[Matrix], labels: &[usize]) -> Result<BatchLoss> {
    let k = parts.teacher_heads.len();
    check_len("teacher taps", t_taps.len(), k)?;
    check_len("student taps", s_taps.len(), k)?;
    let mut out = BatchLoss::default();
    for i in 0..k {
        let mut layer = 0.0;
        for (net, x) in [(&mut parts.teacher_heads[i], &t_taps[i]), (&mut parts.student_heads[i], &s_taps[i])] {
            net.zero_grad();
            let (logits, _) = net.forward(x)?;
            let (ce, g) = loss::cross_entropy(&logits, labels)?;
            net.backward(Some(&g), &[])?;
            layer += ce;
        }
        out.ce += layer;
        out.layers.push(0.0);
    }
    out.total = out.ce;
    Ok(out)
}

/// TED stage 2: `lambda1 CE + lambda2 sum_k E||f_t - f_s||^2` over the
/// student and its filters; the teacher filters stay fixed and the heads are
/// unused.
#[allow(clippy::too_many_arguments)]
pub fn ted_stage2(
    student: &mut Network,
    parts: &mut TedParts,
    pairs: &[LayerPair],
    t_taps: &[Matrix],
    x: &Matrix,
    labels: &[usize],
    lambda1: f64,
    lambda2: f64,
) -> Result<BatchLoss> {
    if !parts.stage1_done {
        return Err(Error::State("TED stage 2 requested before stage 1 finished".into()));
    }
    check_len("teacher taps", t_taps.len(), pairs.len())?;
    student.zero_grad();
    let (logits, s_taps) = student.forward(x)?;
    let (ce, g_logits) = loss::cross_entropy(&logits, labels)?;
    let mut tap_grads: Vec<Option<Matrix>> = vec![None; s_taps.len()];
    let mut out = BatchLoss {
        ce,
        ..Default::default()
    };
    for (i, pair) in pairs.iter().enumerate() {
        let f_t = filter_out(&parts.teacher_heads[i], &t_taps[i])?;
        let net = &mut parts.student_heads[i];
        net.zero_grad();
        let (_, taps) = net.forward(&s_taps[pair.student])?;
        let (d, g_fs) = loss::mse(&f_t, &taps[0])?;
        let g_in = net.backward(None, &[Some(&scaled(&g_fs, lambda2))])?;
        add_into(&mut tap_grads[pair.student], g_in);
        out.layers.push(d);
    }
    let refs: Vec<Option<&Matrix>> = tap_grads.iter().map(Option::as_ref).collect();
    student.backward(Some(&scaled(&g_logits, lambda1)), &refs)?;
    out.total = lambda1 * ce + lambda2 * out.distill();
    Ok(out)
}
