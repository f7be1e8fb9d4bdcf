#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sotl::{GroupData, MultiSourceProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn gaussian_group(rng: &mut ChaCha8Rng, n: usize, p: usize) -> GroupData {
    let x = DMatrix::from_vec(n, p, gaussian_vec(rng, n * p));
    let y = DVector::from_vec(gaussian_vec(rng, n));
    GroupData::new(x, y).unwrap()
}

/// Random problem with `z` groups of random sizes in `1..=max_n` and a random target.
pub fn random_problem(rng: &mut ChaCha8Rng, z: usize, p: usize, max_n: usize) -> MultiSourceProblem {
    let groups = (0..z)
        .map(|_| {
            let n = rng.random_range(1..=max_n);
            gaussian_group(rng, n, p)
        })
        .collect();
    let target = rng.random_range(0..z);
    MultiSourceProblem::new(groups, target).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
