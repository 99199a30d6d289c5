use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{sample_joint, GeneratorSpec, LabeledData, Split};
use crate::error::{Error, Result};
use crate::info::{entropy, Joint3, Labels};
use crate::matrix::Matrix;
use crate::random;

/// Which of the two underlying bits plays the student in an example triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleSource {
    U1,
    U2,
}

fn bit_labels() -> Vec<String> {
    vec!["0".into(), "1".into()]
}

/// Exact joint of one of the three worked examples.
///
/// 1. `U1, U2 ~ Ber(0.5)`, `Y = U1`, `T = U2`.
/// 2. `U1 ~ Ber(0.2)`, `U2 ~ Ber(0.5)`, `Y = U1`, `T = (U1, U2)`.
/// 3. `U1, U2 ~ Ber(0.5)`, `Y = U1`, `T = U1 xor U2`.
///
/// `s` picks the student bit; `None` means `U1` for the first two and `U2`
/// for the third.
pub fn example_joint(which: u8, s: Option<ExampleSource>) -> Result<Joint3> {
    let (q1, t_card): (f64, usize) = match which {
        1 | 3 => (0.5, 2),
        2 => (0.2, 4),
        _ => return Err(Error::InvalidArgument(format!("no example {which}; expected 1, 2 or 3"))),
    };
    let s = s.unwrap_or(if which == 3 { ExampleSource::U2 } else { ExampleSource::U1 });
    let mut p = vec![0.0; 2 * t_card * 2];
    for u1 in 0..2 {
        for u2 in 0..2 {
            let mass = if u1 == 1 { q1 } else { 1.0 - q1 } * 0.5;
            let t = match which {
                1 => u2,
                2 => 2 * u1 + u2,
                _ => u1 ^ u2,
            };
            let sv = match s {
                ExampleSource::U1 => u1,
                ExampleSource::U2 => u2,
            };
            p[(u1 * t_card + t) * 2 + sv] += mass;
        }
    }
    let t_names = if which == 2 {
        vec!["(0,0)".into(), "(0,1)".into(), "(1,0)".into(), "(1,1)".into()]
    } else {
        bit_labels()
    };
    Joint3::new([2, t_card, 2], p)?.with_labels(Labels {
        y: bit_labels(),
        t: t_names,
        s: bit_labels(),
    })
}

/// The exact example joint together with `n` triples sampled from it.
pub fn make_example_triple(
    which: u8,
    s: Option<ExampleSource>,
    n_samples: usize,
    seed: u64,
) -> Result<(Joint3, Vec<(usize, usize, usize)>)> {
    let p = example_joint(which, s)?;
    let mut rng = random::substream(seed, "example-triple");
    let samples = sample_joint(&p, n_samples, &mut rng);
    Ok((p, samples))
}

/// Largest entropy target accepted for a nuisance factor.
pub const MAX_FACTOR_BITS: f64 = 8.0;

/// A distribution on the fewest symbols whose entropy equals `h` bits: one
/// heavy symbol and the rest uniform.
fn distribution_with_entropy(h: f64) -> Result<Vec<f64>> {
    if !(0.0..=MAX_FACTOR_BITS).contains(&h) {
        return Err(Error::InvalidArgument(format!(
            "entropy target {h} is outside [0, {MAX_FACTOR_BITS}] bits"
        )));
    }
    let m = (h.exp2() - 1e-9).ceil().max(1.0) as usize;
    if ((m as f64).log2() - h).abs() < 1e-12 {
        return Ok(vec![1.0 / m as f64; m]);
    }
    let dist = |x: f64| {
        let mut p = vec![(1.0 - x) / (m - 1) as f64; m];
        p[0] = x;
        p
    };
    // entropy falls from log2(m) to 0 as the heavy mass goes from 1/m to 1
    let (mut lo, mut hi) = (1.0 / m as f64, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if entropy(&dist(mid))? > h {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(dist(0.5 * (lo + hi)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuisanceSpec {
    pub h_z_bits: f64,
    pub h_g_bits: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub jitter: f64,
}

/// Student choice in the nuisance construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceChoice {
    Z,
    G,
}

/// Teacher `T = (Z, G)` with task `Y = Z` and a label-independent nuisance `G`.
#[derive(Debug, Clone)]
pub struct NuisanceTask {
    pub spec: NuisanceSpec,
    pub z_probs: Vec<f64>,
    pub g_probs: Vec<f64>,
    /// One-hot `Z` and `G` plus Gaussian jitter; labels are `Z`.
    pub data: LabeledData,
    /// Sampled `(z, g)` per row.
    pub factors: Vec<(usize, usize)>,
}

impl NuisanceTask {
    /// Exact joint of `(Y, T, S)` with `T = z * |G| + g` and `S` the chosen factor.
    pub fn joint(&self, s: SourceChoice) -> Result<Joint3> {
        let (cz, cg) = (self.z_probs.len(), self.g_probs.len());
        let cs = match s {
            SourceChoice::Z => cz,
            SourceChoice::G => cg,
        };
        let mut p = vec![0.0; cz * cz * cg * cs];
        for (z, &pz) in self.z_probs.iter().enumerate() {
            for (g, &pg) in self.g_probs.iter().enumerate() {
                let t = z * cg + g;
                let sv = if s == SourceChoice::Z { z } else { g };
                p[(z * cz * cg + t) * cs + sv] += pz * pg;
            }
        }
        Joint3::new([cz, cz * cg, cs], p)
    }

    pub fn h_z(&self) -> f64 {
        entropy(&self.z_probs).expect("valid factor")
    }

    pub fn h_g(&self) -> f64 {
        entropy(&self.g_probs).expect("valid factor")
    }
}

/// Builds the nuisance-teacher construction with factor entropies `h_z`, `h_g`.
pub fn make_nuisance_task(h_z_bits: f64, h_g_bits: f64, n_samples: usize, seed: u64) -> Result<NuisanceTask> {
    let spec = NuisanceSpec {
        h_z_bits,
        h_g_bits,
        n_samples,
        seed,
        jitter: 0.1,
    };
    let z_probs = distribution_with_entropy(h_z_bits)?;
    let g_probs = distribution_with_entropy(h_g_bits)?;
    let (cz, cg) = (z_probs.len(), g_probs.len());

    let mut rng = random::substream(seed, "nuisance");
    let zi = rand::distr::weighted::WeightedIndex::new(&z_probs).expect("valid factor");
    let gi = rand::distr::weighted::WeightedIndex::new(&g_probs).expect("valid factor");
    let noise = Normal::new(0.0, spec.jitter).expect("positive jitter");
    let d = cz + cg;
    let mut x = Matrix::zeros(n_samples, d);
    let mut labels = Vec::with_capacity(n_samples);
    let mut factors = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let z = zi.sample(&mut rng);
        let g = gi.sample(&mut rng);
        let row = x.row_mut(i);
        for v in row.iter_mut() {
            *v = noise.sample(&mut rng);
        }
        row[z] += 1.0;
        row[cz + g] += 1.0;
        labels.push(z);
        factors.push((z, g));
    }
    Ok(NuisanceTask {
        data: LabeledData {
            inputs: x,
            labels,
            n_classes: cz,
            split: Split::Train,
            spec: GeneratorSpec::Nuisance(spec.clone()),
        },
        spec,
        z_probs,
        g_probs,
        factors,
    })
}
