//! Exact k-nearest-neighbour search.
//!
//! A median-split kd-tree over the widest-spread dimension, falling back to
//! a linear scan above [`KD_MAX_DIM`] dimensions. Results are ordered by
//! `(distance, point id)`, so equal distances resolve to the lower id and
//! every query returns the same list as a brute-force scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this dimensionality queries scan all points.
pub const KD_MAX_DIM: usize = 64;
pub const DEFAULT_LEAF_SIZE: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L1,
    #[default]
    L2,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Metric::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = x - y;
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Distance from `q` to the box `[lo, hi]`; never exceeds the distance
    /// to any point inside it.
    fn box_distance(self, q: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        let gaps = q.iter().zip(lo.iter().zip(hi)).map(|(&x, (&l, &h))| {
            if x < l {
                l - x
            } else if x > h {
                x - h
            } else {
                0.0
            }
        });
        match self {
            Metric::L1 => gaps.sum(),
            Metric::L2 => gaps.map(|g| g * g).sum::<f64>().sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub distance: f64,
}

impl Neighbor {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.id.cmp(&other.id))
    }
}

/// Max-heap entry keyed on `(distance, id)`.
#[derive(Debug, Clone, Copy)]
struct Candidate(Neighbor);

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.key_cmp(&other.0)
    }
}

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

/// Immutable point set answering exact k-NN queries.
#[derive(Debug, Clone)]
pub struct PointIndex {
    points: Vec<f64>,
    n: usize,
    dim: usize,
    metric: Metric,
    leaf_size: usize,
    /// Point ids arranged so each node covers a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
    /// Bounding boxes, `dim` values per node.
    box_lo: Vec<f64>,
    box_hi: Vec<f64>,
}

impl PointIndex {
    /// Index the rows of a row-major `n × dim` matrix. Point ids are row numbers.
    pub fn build(points: &[f64], dim: usize, leaf_size: usize, metric: Metric) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty("point dimension".into()));
        }
        if points.is_empty() {
            return Err(Error::Empty("point set".into()));
        }
        if points.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: points.len() % dim,
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("indexed points".into()));
        }
        let n = points.len() / dim;
        let mut index = Self {
            points: points.to_vec(),
            n,
            dim,
            metric,
            leaf_size: leaf_size.max(1),
            order: (0..n).collect(),
            nodes: Vec::new(),
            box_lo: Vec::new(),
            box_hi: Vec::new(),
        };
        if dim <= KD_MAX_DIM {
            index.build_node(0, n);
        }
        Ok(index)
    }

    /// Index a list of equally sized rows.
    pub fn from_rows(rows: &[&[f64]], leaf_size: usize, metric: Metric) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Config("rows of unequal length".into()));
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::build(&flat, dim, leaf_size, metric)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let d = self.dim;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &id in &self.order[start..end] {
            let p = &self.points[id * d..(id + 1) * d];
            for j in 0..d {
                lo[j] = lo[j].min(p[j]);
                hi[j] = hi[j].max(p[j]);
            }
        }
        let (axis, spread) = (0..d)
            .map(|j| (j, hi[j] - lo[j]))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let node = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            children: None,
        });
        self.box_lo.extend_from_slice(&lo);
        self.box_hi.extend_from_slice(&hi);
        if end - start <= self.leaf_size || spread <= 0.0 {
            return node;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a * d + axis]
                .total_cmp(&points[b * d + axis])
                .then(a.cmp(&b))
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[node].children = Some((left, right));
        node
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    /// True when queries use the tree rather than a linear scan.
    pub fn uses_tree(&self) -> bool {
        !self.nodes.is_empty()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.children.is_none()).count()
    }

    pub fn point(&self, id: usize) -> &[f64] {
        &self.points[id * self.dim..(id + 1) * self.dim]
    }

    /// The `min(k, len)` nearest points to `q`, sorted by `(distance, id)`.
    ///
    /// Panics if `q` does not have the index dimension.
    pub fn knn(&self, q: &[f64], k: usize) -> Vec<Neighbor> {
        assert_eq!(q.len(), self.dim, "query dimension");
        let k = k.min(self.n);
        if k == 0 {
            return Vec::new();
        }
        if self.nodes.is_empty() {
            return self.scan(q, k);
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, q, k, &mut heap);
        let mut out: Vec<Neighbor> = heap.into_iter().map(|c| c.0).collect();
        out.sort_by(Neighbor::key_cmp);
        out
    }

    fn scan(&self, q: &[f64], k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = (0..self.n)
            .map(|id| Neighbor {
                id,
                distance: self.metric.distance(q, self.point(id)),
            })
            .collect();
        all.sort_by(Neighbor::key_cmp);
        all.truncate(k);
        all
    }

    fn search(&self, node: usize, q: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        let Node {
            start,
            end,
            children,
        } = self.nodes[node];
        match children {
            None => {
                for &id in &self.order[start..end] {
                    let cand = Neighbor {
                        id,
                        distance: self.metric.distance(q, self.point(id)),
                    };
                    if heap.len() < k {
                        heap.push(Candidate(cand));
                    } else if cand.key_cmp(&heap.peek().unwrap().0) == Ordering::Less {
                        heap.pop();
                        heap.push(Candidate(cand));
                    }
                }
            }
            Some((left, right)) => {
                let dl = self.node_distance(left, q);
                let dr = self.node_distance(right, q);
                let near_first = if dl <= dr {
                    [(left, dl), (right, dr)]
                } else {
                    [(right, dr), (left, dl)]
                };
                for (child, bound) in near_first {
                    // equal bounds can still hold a lower-id tie
                    if heap.len() < k || bound <= heap.peek().unwrap().0.distance {
                        self.search(child, q, k, heap);
                    }
                }
            }
        }
    }

    fn node_distance(&self, node: usize, q: &[f64]) -> f64 {
        let d = self.dim;
        self.metric.box_distance(
            q,
            &self.box_lo[node * d..(node + 1) * d],
            &self.box_hi[node * d..(node + 1) * d],
        )
    }
}
