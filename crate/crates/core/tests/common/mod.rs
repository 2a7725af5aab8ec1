#![allow(dead_code)]

use ldgeom_core::contraction::{Contraction, MomentPoint, ObservableMatrix};
use ldgeom_core::measures::{EmpiricalFrequency, ProbabilityVector};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dirichlet(1) draw mixed with `floor` of the uniform law.
pub fn simplex(rng: &mut impl Rng, n: usize, floor: f64) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| (1.0 - floor) * v / s + floor / n as f64).collect()
}

pub fn prior(rng: &mut impl Rng, n: usize) -> ProbabilityVector {
    ProbabilityVector::new(simplex(rng, n, 0.1)).unwrap()
}

pub fn frequency(rng: &mut impl Rng, n: usize) -> EmpiricalFrequency {
    EmpiricalFrequency::new(simplex(rng, n, 0.1)).unwrap()
}

pub fn observable(rng: &mut impl Rng, k: usize, n: usize) -> ObservableMatrix {
    loop {
        let m = DMatrix::from_fn(k, n, |_, _| rng.random_range(-2.0..2.0));
        if let Ok(x) = ObservableMatrix::new(m) {
            return x;
        }
    }
}

pub struct Instance {
    pub contraction: Contraction,
    /// A fiber point of `x`.
    pub nu: EmpiricalFrequency,
    pub x: MomentPoint,
}

/// `n ∈ [3, max_n]`, `k ∈ [1, n − 2]`, `x` the mean of a random interior point.
pub fn instance(rng: &mut impl Rng, max_n: usize) -> Instance {
    let n = rng.random_range(3..=max_n);
    let k = rng.random_range(1..=n - 2);
    let contraction = Contraction::new(observable(rng, k, n), prior(rng, n)).unwrap();
    let nu = frequency(rng, n);
    let x = contraction.observable().moments_of(nu.as_slice()).unwrap();
    Instance { contraction, nu, x }
}
