//! Straight-line reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<f64> {
    (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn manhattan(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// All points sorted by (distance, id), truncated to k.
pub fn brute_knn(points: &[f64], dim: usize, q: &[f64], k: usize, dist: fn(&[f64], &[f64]) -> f64) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = points
        .chunks(dim)
        .enumerate()
        .map(|(i, p)| (i, dist(p, q)))
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// `k` nearest other points of point `i`, sorted by (distance, id).
pub fn brute_knn_excluding(points: &[f64], dim: usize, i: usize, k: usize) -> Vec<(usize, f64)> {
    let q = &points[i * dim..(i + 1) * dim];
    let mut all: Vec<(usize, f64)> = points
        .chunks(dim)
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, p)| (j, euclid(p, q)))
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Rows of each class kept after removing the `ceil(alpha n)` rows with the
/// largest within-class k-NN radius.
pub fn brute_trust_kept(features: &[f64], dim: usize, labels: &[usize], class: usize, k: usize, alpha: f64) -> Vec<usize> {
    let ids: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
    let n = ids.len();
    let remove = ((alpha * n as f64) - 1e-9).ceil() as usize;
    if remove == 0 {
        return ids;
    }
    let kk = k.min(n - 1);
    let mut radius: Vec<(usize, f64)> = ids
        .iter()
        .map(|&i| {
            let mut d: Vec<f64> = ids
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| euclid(&features[i * dim..(i + 1) * dim], &features[j * dim..(j + 1) * dim]))
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (i, d[kk - 1])
        })
        .collect();
    radius.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let mut kept: Vec<usize> = radius[..n - remove.min(n - 1)].iter().map(|r| r.0).collect();
    kept.sort_unstable();
    kept
}

/// Trust score by exhaustive distance computation.
pub fn brute_trust(
    features: &[f64],
    dim: usize,
    labels: &[usize],
    k: usize,
    alpha: f64,
    mean: bool,
    epsilon: f64,
    x: &[f64],
    predicted: usize,
) -> f64 {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let class_distance = |c: usize| {
        let kept = brute_trust_kept(features, dim, labels, c, k, alpha);
        let mut d: Vec<f64> = kept
            .iter()
            .map(|&i| euclid(&features[i * dim..(i + 1) * dim], x))
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let kc = k.min(d.len());
        if mean {
            d[..kc].iter().sum::<f64>() / kc as f64
        } else {
            d[kc - 1]
        }
    };
    let d_pred = class_distance(predicted);
    let d_other = classes
        .iter()
        .filter(|&&c| c != predicted)
        .map(|&c| class_distance(c))
        .fold(f64::INFINITY, f64::min);
    d_other / (d_pred + epsilon)
}

pub struct BruteLof {
    pub k_distance: Vec<f64>,
    pub lrd: Vec<f64>,
    points: Vec<f64>,
    dim: usize,
    k: usize,
}

impl BruteLof {
    pub fn fit(points: &[f64], dim: usize, k: usize) -> Self {
        let n = points.len() / dim;
        let nbrs: Vec<Vec<(usize, f64)>> = (0..n).map(|i| brute_knn_excluding(points, dim, i, k)).collect();
        let k_distance: Vec<f64> = nbrs.iter().map(|nn| nn[k - 1].1).collect();
        let lrd = nbrs
            .iter()
            .map(|nn| {
                let reach: f64 = nn.iter().map(|&(o, d)| d.max(k_distance[o])).sum::<f64>() / k as f64;
                1.0 / (reach + 1e-10)
            })
            .collect();
        Self {
            k_distance,
            lrd,
            points: points.to_vec(),
            dim,
            k,
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let nn = brute_knn(&self.points, self.dim, x, self.k, euclid);
        let reach: f64 = nn.iter().map(|&(o, d)| d.max(self.k_distance[o])).sum::<f64>() / self.k as f64;
        let lrd_x = 1.0 / (reach + 1e-10);
        nn.iter().map(|&(o, _)| self.lrd[o]).sum::<f64>() / self.k as f64 / lrd_x
    }
}

/// Two Gaussian blobs in the plane centred at (-2, 0) and (2, 0).
pub fn blobs_2d(seed: u64, n_per_class: usize) -> (Vec<f64>, Vec<usize>) {
    use rand_distr::{Distribution, StandardNormal};
    let mut r = rng(seed);
    let mut f = Vec::new();
    let mut l = Vec::new();
    for i in 0..2 * n_per_class {
        let class = i % 2;
        let cx = if class == 0 { -2.0 } else { 2.0 };
        let a: f64 = StandardNormal.sample(&mut r);
        let b: f64 = StandardNormal.sample(&mut r);
        f.push(cx + 0.6 * a);
        f.push(0.6 * b);
        l.push(class);
    }
    (f, l)
}
