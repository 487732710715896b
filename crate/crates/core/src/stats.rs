//! Rank statistics: two-sample Wilcoxon rank-sum (Mann-Whitney U) test and
//! Spearman rank correlation.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Below this combined size the rank-sum test uses the exact null
/// distribution.
pub const EXACT_BELOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankSumMethod {
    /// Exact when `n1 + n2 < 20`, normal approximation otherwise.
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankTestResult {
    /// Mann-Whitney U of the first sample.
    pub u: f64,
    /// Tie- and continuity-corrected normal score; positive when the first
    /// sample tends to be larger.
    pub z: f64,
    /// Two-sided p value.
    pub p: f64,
    pub n1: usize,
    pub n2: usize,
    pub exact: bool,
}

/// Average (1-based) ranks, ties sharing the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}

fn check_sample(xs: &[f64], name: &str) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Empty(format!("sample {name}")));
    }
    if xs.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite(format!("sample {name}")));
    }
    Ok(())
}

pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<RankTestResult> {
    wilcoxon_rank_sum_with(a, b, RankSumMethod::Auto)
}

pub fn wilcoxon_rank_sum_with(a: &[f64], b: &[f64], method: RankSumMethod) -> Result<RankTestResult> {
    check_sample(a, "a")?;
    check_sample(b, "b")?;
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let mean_u = (n1 * n2) as f64 / 2.0;

    let exact = match method {
        RankSumMethod::Auto => n < EXACT_BELOW,
        RankSumMethod::Exact => true,
        RankSumMethod::Normal => false,
    };

    let first = pooled[0];
    if pooled.iter().all(|&v| v == first) {
        return Ok(RankTestResult {
            u,
            z: 0.0,
            p: 1.0,
            n1,
            n2,
            exact,
        });
    }

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let nf = n as f64;
    let var = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let diff = u - mean_u;
    let z = if var > 0.0 {
        diff.signum() * (diff.abs() - 0.5).max(0.0) / var.sqrt()
    } else {
        0.0
    };

    let p = if exact {
        exact_two_sided(&ranks, n1)
    } else {
        erfc(z.abs() / std::f64::consts::SQRT_2)
    };
    Ok(RankTestResult {
        u,
        z,
        p: p.clamp(0.0, 1.0),
        n1,
        n2,
        exact,
    })
}

/// Two-sided p of the observed first-sample rank sum under the
/// permutation null, counting subsets by dynamic programming over doubled
/// midranks (which are integers).
fn exact_two_sided(ranks: &[f64], n1: usize) -> f64 {
    let n = ranks.len();
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    let observed: usize = doubled[..n1].iter().sum();
    // counts[j][s]: subsets of size j with doubled sum s
    let mut counts = vec![vec![0.0f64; max_sum + 1]; n1 + 1];
    counts[0][0] = 1.0;
    for (item, &r) in doubled.iter().enumerate() {
        for j in (1..=n1.min(item + 1)).rev() {
            let (lower, upper) = counts.split_at_mut(j);
            let (prev, cur) = (&lower[j - 1], &mut upper[0]);
            for s in (r..=max_sum).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    let centre = (n1 * (n + 1)) as i64;
    let obs_dev = (observed as i64 - centre).abs();
    let (mut extreme, mut total) = (0.0, 0.0);
    for (s, &c) in counts[n1].iter().enumerate() {
        total += c;
        if (s as i64 - centre).abs() >= obs_dev {
            extreme += c;
        }
    }
    extreme / total
}

/// Spearman's rho: Pearson correlation of midranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Undefined("spearman needs at least 2 pairs".into()));
    }
    check_sample(a, "a")?;
    check_sample(b, "b")?;
    pearson(&midranks(a), &midranks(b))
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Undefined("zero rank variance".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}
