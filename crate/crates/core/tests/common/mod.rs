#![allow(dead_code)]

use nalgebra::DMatrix;
use netsync::delay::DelaySpec;
use netsync::linalg::{c, CMatrix};
use netsync::lti::{CouplingMatrix, LtiSystem};
use netsync::netsim::{NetworkSpec, Subsystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn real(rows: usize, cols: usize, v: &[f64]) -> CMatrix {
    CMatrix::from_row_slice(rows, cols, &v.iter().map(|x| c(*x, 0.0)).collect::<Vec<_>>())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| c(rng.random_range(-scale..scale), 0.0))
}

pub fn complex_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        c(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
    })
}

/// Delay equation with `d <= 3`, `m <= 2` and delays on the grid of `n` cells.
pub fn random_delay_spec(rng: &mut ChaCha8Rng, n: usize) -> DelaySpec {
    let d = rng.random_range(1..=3);
    let m = rng.random_range(1..=2);
    let tm = 1.0;
    let mut delays = vec![0.0];
    if m == 2 {
        let k = rng.random_range(8..=n - 8);
        delays.push(k as f64 * tm / n as f64);
    }
    delays.push(tm);
    let a = delays.iter().map(|_| complex_uniform(rng, d, d, 1.0)).collect();
    let b = delays.iter().map(|_| complex_uniform(rng, d, d, 1.0)).collect();
    DelaySpec::new(delays, a, b).unwrap()
}

/// Random weights in `[0, 1)` with some edges removed.
pub fn random_weights(rng: &mut ChaCha8Rng, n: usize, symmetric: bool) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && (!symmetric || i < j) && rng.random_bool(0.7) {
                w[(i, j)] = rng.random_range(0.0..1.0);
                if symmetric {
                    w[(j, i)] = w[(i, j)];
                }
            }
        }
    }
    w
}

/// LTI network with state dimension `<= 4`, `<= 6` nodes and diffusive coupling.
pub fn random_lti_network(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let d = rng.random_range(1..=4);
    let q = rng.random_range(1..=d.min(2));
    let n = rng.random_range(2..=6);
    let sys = LtiSystem::strictly_proper(
        uniform(rng, d, d, 1.0),
        uniform(rng, d, q, 1.0),
        uniform(rng, q, d, 1.0),
    )
    .unwrap();
    let symmetric = rng.random_bool(0.5);
    let coupling = CouplingMatrix::diffusive(random_weights(rng, n, symmetric)).unwrap();
    NetworkSpec::new(Subsystem::Lti(sys), coupling).unwrap()
}
