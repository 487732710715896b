//! Seeded Gaussian-mixture splits with a controllable distribution shift.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::normalize::{Normalization, DEFAULT_RANGE};
use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{substream, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Defaults to `n_test` when absent.
    pub n_ood: Option<usize>,
    pub dim: usize,
    pub classes: usize,
    /// Translation of the shifted split, in units of the training data radius.
    pub shift: f64,
    /// Standard deviation of the class means around the origin.
    pub class_separation: f64,
    /// Within-class standard deviation.
    pub noise: f64,
    /// Maximum relative change of per-feature spread in the shifted split,
    /// reached as `shift` grows; no distortion at zero shift.
    pub distortion: f64,
    /// Class proportions; uniform when absent.
    pub class_weights: Option<Vec<f64>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_train: 3000,
            n_test: 1000,
            n_ood: None,
            dim: 16,
            classes: 3,
            shift: 5.0,
            class_separation: 0.7,
            noise: 1.0,
            distortion: 0.5,
            class_weights: None,
        }
    }
}

/// Training split, in-distribution test split and shifted (OoD) split,
/// sharing one feature box mapped onto `[-0.5, 0.5]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSplits {
    pub train: Dataset,
    pub test: Dataset,
    pub ood: Dataset,
}

/// Exact per-class counts by largest remainder.
fn allocate(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[c] += 1;
        rest -= 1;
    }
    counts
}

fn shuffled_labels(n: usize, weights: &[f64], rng: &mut RngStream) -> Vec<usize> {
    let mut labels: Vec<usize> = allocate(n, weights)
        .into_iter()
        .enumerate()
        .flat_map(|(c, k)| std::iter::repeat_n(c, k))
        .collect();
    labels.shuffle(rng);
    labels
}

pub fn synth_shift_pair(cfg: &SynthConfig) -> Result<ShiftSplits> {
    if !(cfg.shift >= 0.0) {
        return Err(Error::Config(format!("shift must be >= 0, got {}", cfg.shift)));
    }
    if cfg.dim == 0 || cfg.classes < 2 {
        return Err(Error::Config("synthetic data needs dim >= 1 and classes >= 2".into()));
    }
    if cfg.n_train == 0 || cfg.n_test == 0 || cfg.n_ood == Some(0) {
        return Err(Error::Config("synthetic splits must be non-empty".into()));
    }
    if !(cfg.noise > 0.0) || cfg.class_separation < 0.0 || cfg.distortion < 0.0 {
        return Err(Error::Config("noise must be > 0; separation and distortion >= 0".into()));
    }
    let weights = match &cfg.class_weights {
        Some(w) if w.len() != cfg.classes || w.iter().any(|v| !(*v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 => {
            return Err(Error::Config("class_weights must be one non-negative weight per class".into()))
        }
        Some(w) => w.clone(),
        None => vec![1.0; cfg.classes],
    };
    let d = cfg.dim;

    let mut geo = substream(cfg.seed, 0);
    let means: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| (0..d).map(|_| cfg.class_separation * geo.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut direction: Vec<f64> = (0..d).map(|_| geo.sample(StandardNormal)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);
    let strength = cfg.distortion * cfg.shift / (1.0 + cfg.shift);
    let spread: Vec<f64> = (0..d)
        .map(|_| 1.0 + strength * geo.random_range(-1.0..1.0))
        .collect();

    let sample = |labels: &[usize], offset: &[f64], spread: &[f64], rng: &mut RngStream| -> Vec<f64> {
        let mut out = Vec::with_capacity(labels.len() * d);
        for &c in labels {
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                out.push(means[c][j] + offset[j] + spread[j] * cfg.noise * z);
            }
        }
        out
    };

    let unit = vec![1.0; d];
    let zero = vec![0.0; d];
    let mut rng = substream(cfg.seed, 1);
    let train_labels = shuffled_labels(cfg.n_train, &weights, &mut rng);
    let train_raw = sample(&train_labels, &zero, &unit, &mut rng);

    let mut centroid = vec![0.0; d];
    for row in train_raw.chunks_exact(d) {
        for j in 0..d {
            centroid[j] += row[j];
        }
    }
    centroid.iter_mut().for_each(|c| *c /= cfg.n_train as f64);
    let radius = train_raw
        .chunks_exact(d)
        .map(|r| crate::tensor::l2_distance(r, &centroid))
        .sum::<f64>()
        / cfg.n_train as f64;

    let mut rng = substream(cfg.seed, 2);
    let test_labels = shuffled_labels(cfg.n_test, &weights, &mut rng);
    let test_raw = sample(&test_labels, &zero, &unit, &mut rng);

    let mut rng = substream(cfg.seed, 3);
    let ood_labels = shuffled_labels(cfg.n_ood.unwrap_or(cfg.n_test), &weights, &mut rng);
    let offset: Vec<f64> = direction.iter().map(|u| cfg.shift * radius * u).collect();
    let ood_raw = sample(&ood_labels, &offset, &spread, &mut rng);

    // one box over all splits, so every split shares the same formatting
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for raw in [&train_raw, &test_raw, &ood_raw] {
        for row in raw.chunks_exact(d) {
            for j in 0..d {
                lo[j] = lo[j].min(row[j]);
                hi[j] = hi[j].max(row[j]);
            }
        }
    }
    let target = DEFAULT_RANGE;
    let scale: Vec<f64> = (0..d).map(|j| target.width() / (hi[j] - lo[j])).collect();
    let offset: Vec<f64> = (0..d).map(|j| target.lo - lo[j] * scale[j]).collect();
    let normalization = Normalization {
        target,
        scale,
        offset,
    };

    let build = |raw: Vec<f64>, labels: Vec<usize>, name: &str| -> Result<Dataset> {
        let features = raw.chunks_exact(d).flat_map(|r| normalization.apply(r)).collect();
        let provenance = format!("synth:{name}:seed={}:shift={}", cfg.seed, cfg.shift);
        let data = Dataset::new(raw, d, labels, cfg.classes, None, provenance)?;
        Ok(data.set_normalized(features, target, normalization.clone(), Vec::new()))
    };
    Ok(ShiftSplits {
        train: build(train_raw, train_labels, "train")?,
        test: build(test_raw, test_labels, "test")?,
        ood: build(ood_raw, ood_labels, "ood")?,
    })
}
