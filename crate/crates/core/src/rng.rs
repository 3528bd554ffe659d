//! Seeded random streams. Every consumer derives its own stream from the
//! master seed and a stream id, so results do not depend on call order.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Rng = ChaCha8Rng;

// Stream id layout: purpose in the high bits, index in the low bits.
pub const PURPOSE_IMPUTE: u64 = 1;
pub const PURPOSE_BOOTSTRAP: u64 = 2;
pub const PURPOSE_QQ: u64 = 3;
pub const PURPOSE_SYNTH: u64 = 4;
pub const PURPOSE_MISC: u64 = 5;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Stream id for `purpose`, block `block`, replication `rep`.
pub fn stream_id(purpose: u64, block: u64, rep: u64) -> u64 {
    (purpose << 56) | ((block & 0xff_ffff) << 32) | (rep & 0xffff_ffff)
}

pub fn uniform(rng: &mut Rng) -> f64 {
    // open interval (0,1)
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

pub fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| normal(rng)).collect();
    DMatrix::from_vec(rows, cols, data)
}

pub fn gaussian_vector(rng: &mut Rng, len: usize) -> DVector<f64> {
    DVector::from_vec((0..len).map(|_| normal(rng)).collect())
}

/// Fisher-Yates shuffle with the crate rng.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

pub fn sign(rng: &mut Rng) -> f64 {
    if rng.gen::<bool>() {
        1.0
    } else {
        -1.0
    }
}
