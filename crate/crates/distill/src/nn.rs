//! Dense feedforward networks with hand-written backpropagation.
//!
//! Parameters live in one flat buffer (per layer: the `inputs x outputs`
//! weight matrix row-major, then the bias), mirrored by a gradient buffer and
//! a momentum buffer of the same length.

use kdpid::{Error, Matrix, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerShape {
    fn n_params(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

/// Settings for stochastic gradient descent with momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
    /// Gradients of one module are rescaled to at most this Euclidean norm
    /// before the update; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 5e-4,
            nesterov: true,
            clip_norm: 5.0,
        }
    }
}

/// One momentum-SGD update in the convention `d = g + wd w`,
/// `v <- mu v + d`, then `w <- w - lr (d + mu v)` (Nesterov) or `w <- w - lr v`.
pub fn sgd_update(params: &mut [f64], grads: &mut [f64], velocity: &mut [f64], lr: f64, cfg: &SgdConfig) {
    let mut scale = 1.0;
    if cfg.clip_norm > 0.0 {
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > cfg.clip_norm {
            scale = cfg.clip_norm / norm;
        }
    }
    for ((w, g), v) in params.iter_mut().zip(grads.iter_mut()).zip(velocity.iter_mut()) {
        let d = scale * *g + cfg.weight_decay * *w;
        let step = if cfg.momentum != 0.0 {
            *v = cfg.momentum * *v + d;
            if cfg.nesterov {
                d + cfg.momentum * *v
            } else {
                *v
            }
        } else {
            d
        };
        *w -= lr * step;
        *g = 0.0;
    }
}

#[derive(Debug, Clone)]
struct Cache {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Matrix>,
}

/// A stack of dense layers with named intermediate outputs ("taps").
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<LayerShape>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    grads: Vec<f64>,
    velocity: Vec<f64>,
    taps: Vec<usize>,
    cache: Option<Cache>,
}

/// Serialized form of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub layers: Vec<LayerShape>,
    pub taps: Vec<usize>,
    pub params: Vec<f64>,
}

impl Network {
    /// Zero-initialized network; `taps` index the layers whose outputs are exposed.
    pub fn new(layers: Vec<LayerShape>, taps: Vec<usize>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a network needs at least one layer".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].outputs != w[1].inputs {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    w[0].outputs,
                    i + 1,
                    w[1].inputs
                )));
            }
        }
        if layers.iter().any(|l| l.inputs == 0 || l.outputs == 0) {
            return Err(Error::Shape("layer widths must be positive".into()));
        }
        if let Some(&t) = taps.iter().find(|&&t| t >= layers.len()) {
            return Err(Error::Shape(format!("tap {t} is out of range for {} layers", layers.len())));
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for l in &layers {
            offsets.push(total);
            total += l.n_params();
        }
        Ok(Self {
            layers,
            offsets,
            params: vec![0.0; total],
            grads: vec![0.0; total],
            velocity: vec![0.0; total],
            taps,
            cache: None,
        })
    }

    /// A multilayer perceptron: ReLU hidden layers of the given widths and an
    /// identity output layer. Every hidden layer is a tap.
    pub fn mlp(input: usize, hidden: &[usize], output: usize) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            layers.push(LayerShape {
                inputs: prev,
                outputs: h,
                activation: Activation::Relu,
            });
            prev = h;
        }
        layers.push(LayerShape {
            inputs: prev,
            outputs: output,
            activation: Activation::Identity,
        });
        Self::new(layers, (0..hidden.len()).collect())
    }

    /// Uniform Glorot initialization of the weights; biases start at zero.
    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for (l, &off) in self.layers.iter().zip(&self.offsets) {
            let a = (6.0 / (l.inputs + l.outputs) as f64).sqrt();
            let nw = l.inputs * l.outputs;
            for w in &mut self.params[off..off + nw] {
                *w = rng.random_range(-a..a);
            }
            self.params[off + nw..off + nw + l.outputs].iter_mut().for_each(|b| *b = 0.0);
        }
        self.velocity.iter_mut().for_each(|v| *v = 0.0);
        self.zero_grad();
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Width of the representation at tap `k`.
    pub fn tap_width(&self, k: usize) -> usize {
        self.layers[self.taps[k]].outputs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    fn weights(&self, l: usize) -> (&[f64], &[f64]) {
        let s = &self.layers[l];
        let off = self.offsets[l];
        let nw = s.inputs * s.outputs;
        (&self.params[off..off + nw], &self.params[off + nw..off + nw + s.outputs])
    }

    fn run(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        if x.cols() != self.input_width() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                x.cols(),
                self.input_width()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (l, shape) in self.layers.iter().enumerate() {
            let (w, b) = self.weights(l);
            let input = &acts[l];
            let mut out = Matrix::zeros(input.rows(), shape.outputs);
            for r in 0..input.rows() {
                let o = out.row_mut(r);
                o.copy_from_slice(b);
                for (i, &a) in input.row(r).iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (oj, &wij) in o.iter_mut().zip(&w[i * shape.outputs..(i + 1) * shape.outputs]) {
                        *oj += a * wij;
                    }
                }
                if shape.activation == Activation::Relu {
                    o.iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
            acts.push(out);
        }
        Ok(acts)
    }

    fn split(&self, mut acts: Vec<Matrix>) -> (Matrix, Vec<Matrix>) {
        let taps = self.taps.iter().map(|&t| acts[t + 1].clone()).collect();
        let out = acts.pop().expect("at least one layer");
        (out, taps)
    }

    /// Output and tap representations, caching activations for [`backward`](Self::backward).
    pub fn forward(&mut self, x: &Matrix) -> Result<(Matrix, Vec<Matrix>)> {
        let acts = self.run(x)?;
        let res = self.split(acts.clone());
        self.cache = Some(Cache { acts });
        Ok(res)
    }

    /// Output and taps without touching the cache.
    pub fn predict(&self, x: &Matrix) -> Result<(Matrix, Vec<Matrix>)> {
        Ok(self.split(self.run(x)?))
    }

    /// Accumulates parameter gradients of a scalar loss and returns its
    /// gradient with respect to the input.
    ///
    /// `grad_out` is the loss gradient at the output (`None` for zero);
    /// `tap_grads[k]`, when present, is added at tap `k`.
    pub fn backward(&mut self, grad_out: Option<&Matrix>, tap_grads: &[Option<&Matrix>]) -> Result<Matrix> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        let result = self.backward_cached(&cache, grad_out, tap_grads);
        self.cache = Some(cache);
        result
    }

    fn backward_cached(&mut self, cache: &Cache, grad_out: Option<&Matrix>, tap_grads: &[Option<&Matrix>]) -> Result<Matrix> {
        let n = cache.acts[0].rows();
        if tap_grads.len() > self.taps.len() {
            return Err(Error::Shape(format!("{} tap gradients for {} taps", tap_grads.len(), self.taps.len())));
        }
        let last = self.layers.len() - 1;
        let mut delta = match grad_out {
            Some(g) => {
                if g.rows() != n || g.cols() != self.output_width() {
                    return Err(Error::Shape(format!(
                        "output gradient is {}x{}, output is {}x{}",
                        g.rows(),
                        g.cols(),
                        n,
                        self.output_width()
                    )));
                }
                g.clone()
            }
            None => Matrix::zeros(n, self.output_width()),
        };
        for l in (0..=last).rev() {
            for (k, tg) in tap_grads.iter().enumerate() {
                if let (Some(g), true) = (tg, self.taps[k] == l) {
                    if g.rows() != n || g.cols() != self.layers[l].outputs {
                        return Err(Error::Shape(format!("tap {k} gradient has the wrong shape")));
                    }
                    for (d, v) in delta.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *d += v;
                    }
                }
            }
            let shape = self.layers[l];
            let out = &cache.acts[l + 1];
            if shape.activation == Activation::Relu {
                for (d, &o) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    if o <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &cache.acts[l];
            let off = self.offsets[l];
            let nw = shape.inputs * shape.outputs;
            {
                let (gw, gb) = self.grads[off..off + nw + shape.outputs].split_at_mut(nw);
                for r in 0..n {
                    let d = delta.row(r);
                    for (gbj, &dj) in gb.iter_mut().zip(d) {
                        *gbj += dj;
                    }
                    for (i, &a) in input.row(r).iter().enumerate() {
                        if a == 0.0 {
                            continue;
                        }
                        for (g, &dj) in gw[i * shape.outputs..(i + 1) * shape.outputs].iter_mut().zip(d) {
                            *g += a * dj;
                        }
                    }
                }
            }
            let w = &self.params[off..off + nw];
            let mut prev = Matrix::zeros(n, shape.inputs);
            for r in 0..n {
                let d = delta.row(r);
                let p = prev.row_mut(r);
                for (i, pi) in p.iter_mut().enumerate() {
                    *pi = w[i * shape.outputs..(i + 1) * shape.outputs]
                        .iter()
                        .zip(d)
                        .map(|(a, b)| a * b)
                        .sum();
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Applies one optimizer step and clears the gradients.
    pub fn sgd_step(&mut self, lr: f64, cfg: &SgdConfig) {
        sgd_update(&mut self.params, &mut self.grads, &mut self.velocity, lr, cfg);
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            layers: self.layers.clone(),
            taps: self.taps.clone(),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let mut net = Self::new(c.layers.clone(), c.taps.clone())?;
        if c.params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "checkpoint holds {} parameters, layers need {}",
                c.params.len(),
                net.params.len()
            )));
        }
        net.params.copy_from_slice(&c.params);
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.checkpoint()).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_checkpoint(&serde_json::from_str(text)?)
    }
}

/// Positive per-channel weights stored as logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaVec {
    pub raw: Vec<f64>,
    pub grad: Vec<f64>,
    velocity: Vec<f64>,
}

impl SigmaVec {
    /// All channels start at `sigma = 1`.
    pub fn ones(channels: usize) -> Self {
        Self {
            raw: vec![0.0; channels],
            grad: vec![0.0; channels],
            velocity: vec![0.0; channels],
        }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.raw.iter().map(|r| r.exp()).collect()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Momentum step without weight decay.
    pub fn sgd_step(&mut self, lr: f64, cfg: &SgdConfig) {
        let cfg = SgdConfig {
            weight_decay: 0.0,
            ..*cfg
        };
        sgd_update(&mut self.raw, &mut self.grad, &mut self.velocity, lr, &cfg);
    }
}
