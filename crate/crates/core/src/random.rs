//! Seeded random constructions shared by property batches and generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::info::Joint3;

pub type Rng64 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a named component from a base seed.
pub fn substream(seed: u64, component: &str) -> Rng64 {
    // FNV-1a over the component name, mixed into the seed.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in component.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h.rotate_left(17))
}

/// Samples a point from the symmetric Dirichlet(alpha) on `n` cells.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, n: usize, alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
    loop {
        let w: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 && total.is_finite() {
            return w.into_iter().map(|v| v / total).collect();
        }
    }
}

/// A joint over the given alphabets drawn from Dirichlet(1).
pub fn dirichlet_joint<R: Rng + ?Sized>(rng: &mut R, card: [usize; 3]) -> Joint3 {
    let w = dirichlet(rng, card.iter().product(), 1.0);
    Joint3::from_weights(card, w).expect("dirichlet weights are valid")
}

/// A Dirichlet joint with each cell independently zeroed with probability `p_zero`
/// (at least one cell is kept).
pub fn sparse_joint<R: Rng + ?Sized>(rng: &mut R, card: [usize; 3], p_zero: f64) -> Joint3 {
    let n: usize = card.iter().product();
    let mut w = dirichlet(rng, n, 1.0);
    for v in w.iter_mut() {
        if rng.random::<f64>() < p_zero {
            *v = 0.0;
        }
    }
    if w.iter().all(|&v| v == 0.0) {
        w[rng.random_range(0..n)] = 1.0;
    }
    Joint3::from_weights(card, w).expect("nonzero weights")
}

/// A uniformly random map `0..domain -> 0..range`.
pub fn random_map<R: Rng + ?Sized>(rng: &mut R, domain: usize, range: usize) -> Vec<usize> {
    (0..domain).map(|_| rng.random_range(0..range)).collect()
}
