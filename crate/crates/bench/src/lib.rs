//! Fixtures shared by the criterion benchmarks under `benches/`.

use cfu_core::rng::stream;
use rand::Rng;

/// `n` points in `[-1, 1]^dim`, row-major.
pub fn uniform_points(seed: u64, n: usize, dim: usize) -> Vec<f64> {
    let mut r = stream(seed);
    (0..n * dim).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Labels cycling through `classes`.
pub fn cyclic_labels(n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|i| i % classes).collect()
}

/// Indices of the `k` nearest rows by exhaustive search.
pub fn brute_knn(points: &[f64], dim: usize, q: &[f64], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = points
        .chunks_exact(dim)
        .enumerate()
        .map(|(i, p)| (p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
        .collect();
    d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().map(|(_, i)| i).collect()
}
