//! Numeric fixtures shared by the oracle checks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const FIXTURE_12: [[f64; 2]; 12] = [
    [2.0, 1.0],
    [3.5, 1.2],
    [4.1, 2.3],
    [2.6, 3.1],
    [3.2, 2.0],
    [1.8, 2.2],
    [4.6, 3.4],
    [3.0, 0.6],
    [2.2, 1.7],
    [3.9, 2.9],
    [5.2, 1.5],
    [1.5, 3.6],
];

/// ν used with [`FIXTURE_12`].
pub const FIXTURE_12_NU: f64 = 0.25;

// Frozen from the active-set enumeration in `oracles`.
pub const FIXTURE_12_ALPHAS: [f64; 12] = [
    0.3333333333333333,
    0.0,
    0.0,
    0.0,
    0.0,
    0.3333333333333333,
    0.0,
    0.10630630630630647,
    0.22702702702702687,
    0.0,
    0.0,
    0.0,
];
pub const FIXTURE_12_RHO: f64 = 7.164972972972973;

pub fn gaussian_200(seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..200)
        .map(|_| (0..2).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

// party, cluster, x1, x2, x3, y
pub const FIXTURE_20: [(&str, &str, f64, f64, f64, f64); 20] = [
    ("a", "e1", 4.2, 1.0, 31.0, 42.5),
    ("b", "e1", 4.2, 0.0, 24.5, 38.1),
    ("c", "e1", 4.2, 0.0, 12.0, 51.3),
    ("a", "e1", 6.0, 1.0, 29.5, 40.2),
    ("a", "e2", 7.9, 0.0, 27.0, 47.9),
    ("b", "e2", 7.9, 1.0, 26.1, 35.0),
    ("c", "e2", 7.9, 1.0, 14.3, 44.8),
    ("b", "e2", 9.1, 0.0, 22.0, 41.7),
    ("a", "e3", 11.5, 1.0, 25.2, 39.9),
    ("b", "e3", 11.5, 0.0, 28.8, 45.6),
    ("c", "e3", 11.5, 0.0, 10.9, 57.2),
    ("c", "e3", 12.2, 1.0, 11.4, 49.0),
    ("a", "e4", 13.0, 0.0, 23.9, 52.3),
    ("b", "e4", 13.0, 1.0, 30.2, 36.4),
    ("c", "e4", 13.0, 0.0, 9.7, 58.8),
    ("a", "e4", 14.4, 1.0, 22.6, 44.1),
    ("a", "e5", 10.2, 1.0, 26.4, 43.3),
    ("b", "e5", 10.2, 0.0, 27.5, 47.0),
    ("c", "e5", 10.2, 1.0, 13.1, 50.6),
    ("b", "e5", 8.8, 1.0, 25.0, 39.5),
];

/// Columns `[1, x1, x2, x3, party[b], party[c]]` of [`FIXTURE_20`], row-major.
pub fn fixture_20_rows() -> Vec<Vec<f64>> {
    FIXTURE_20
        .iter()
        .map(|&(p, _, x1, x2, x3, _)| vec![1.0, x1, x2, x3, (p == "b") as u8 as f64, (p == "c") as u8 as f64])
        .collect()
}
