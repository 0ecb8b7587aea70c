//! Exact k-nearest-neighbour search over 3-D feature vectors.
//!
//! Results are ranked by `(squared distance, candidate index)`, so the linear
//! scan and the k-d tree return identical lists, ties included.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Candidate count at which the index switches from a linear scan to a k-d tree.
pub const KDTREE_THRESHOLD: usize = 50_000;

const LEAF_SIZE: usize = 16;

#[inline]
pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

#[derive(Debug, Clone, Copy)]
struct Key {
    d2: f64,
    idx: usize,
}

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.idx.cmp(&other.idx))
    }
}

/// A neighbour returned by a query: candidate index and squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { lo: usize, hi: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    root: usize,
}

impl KdTree {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        let order: Vec<usize> = (0..points.len()).collect();
        let mut tree = Self {
            points,
            order,
            nodes: Vec::new(),
            root: 0,
        };
        let n = tree.points.len();
        tree.root = tree.build(0, n);
        tree
    }

    fn build(&mut self, lo: usize, hi: usize) -> usize {
        if hi - lo <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { lo, hi });
            return self.nodes.len() - 1;
        }
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for &i in &self.order[lo..hi] {
            for d in 0..3 {
                min[d] = min[d].min(self.points[i][d]);
                max[d] = max[d].max(self.points[i][d]);
            }
        }
        let dim = (0..3)
            .max_by(|&a, &b| (max[a] - min[a]).total_cmp(&(max[b] - min[b])))
            .unwrap_or(0);
        let mid = lo + (hi - lo) / 2;
        let points = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a][dim].total_cmp(&points[b][dim]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][dim];
        let left = self.build(lo, mid);
        let right = self.build(mid, hi);
        self.nodes.push(Node::Split {
            dim,
            value,
            left,
            right,
        });
        self.nodes.len() - 1
    }

    pub fn nearest(&self, query: &[f64; 3], k: usize) -> Vec<Neighbor> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(self.root, query, k, &mut heap);
        finish(heap)
    }

    fn search(&self, node: usize, q: &[f64; 3], k: usize, heap: &mut BinaryHeap<Key>) {
        match self.nodes[node] {
            Node::Leaf { lo, hi } => {
                for &i in &self.order[lo..hi] {
                    offer(heap, k, Key { d2: dist2(q, &self.points[i]), idx: i });
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                // `<=` keeps equal-distance points with smaller indices reachable
                let must_visit = heap.len() < k
                    || heap.peek().is_some_and(|worst| diff * diff <= worst.d2);
                if must_visit {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

#[inline]
fn offer(heap: &mut BinaryHeap<Key>, k: usize, key: Key) {
    if heap.len() < k {
        heap.push(key);
    } else if let Some(top) = heap.peek() {
        if key < *top {
            heap.pop();
            heap.push(key);
        }
    }
}

fn finish(heap: BinaryHeap<Key>) -> Vec<Neighbor> {
    heap.into_sorted_vec()
        .into_iter()
        .map(|k| Neighbor {
            index: k.idx,
            dist2: k.d2,
        })
        .collect()
}

/// Linear scan returning the `k` nearest points, ascending.
pub fn linear_nearest(points: &[[f64; 3]], query: &[f64; 3], k: usize) -> Vec<Neighbor> {
    if k == 0 || points.is_empty() {
        return Vec::new();
    }
    let mut keys: Vec<Key> = points
        .iter()
        .enumerate()
        .map(|(idx, p)| Key {
            d2: dist2(query, p),
            idx,
        })
        .collect();
    if k < keys.len() {
        keys.select_nth_unstable(k - 1);
        keys.truncate(k);
    }
    keys.sort_unstable();
    keys.into_iter()
        .map(|k| Neighbor {
            index: k.idx,
            dist2: k.d2,
        })
        .collect()
}

/// Nearest-neighbour index that picks its strategy from the candidate count.
#[derive(Debug, Clone)]
pub enum FeatureIndex {
    Linear(Vec<[f64; 3]>),
    Tree(KdTree),
}

impl FeatureIndex {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        if points.len() < KDTREE_THRESHOLD {
            Self::Linear(points)
        } else {
            Self::Tree(KdTree::new(points))
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Linear(p) => p.len(),
            Self::Tree(t) => t.points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nearest(&self, query: &[f64; 3], k: usize) -> Vec<Neighbor> {
        match self {
            Self::Linear(p) => linear_nearest(p, query, k),
            Self::Tree(t) => t.nearest(query, k),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_orders_by_distance_then_index() {
        let pts = vec![[0.3, 0.0, 0.0], [0.1, 0.0, 0.0], [0.2, 0.0, 0.0], [0.1, 0.0, 0.0]];
        let nn = linear_nearest(&pts, &[0.0; 3], 3);
        let idx: Vec<usize> = nn.iter().map(|n| n.index).collect();
        assert_eq!(idx, vec![1, 3, 2]);
    }

    #[test]
    fn tree_handles_duplicates() {
        let pts = vec![[0.5, 0.5, 0.5]; 100];
        let t = KdTree::new(pts.clone());
        let nn = t.nearest(&[0.5, 0.5, 0.5], 5);
        assert_eq!(nn.iter().map(|n| n.index).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    proptest! {
        #[test]
        fn tree_agrees_with_linear_scan(
            pts in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 1..400),
            q in prop::array::uniform3(0.0f64..1.0),
            k in 1usize..40,
            quantize in any::<bool>(),
        ) {
            // quantized coordinates force many exact ties
            let pts: Vec<[f64; 3]> = if quantize {
                pts.iter().map(|p| p.map(|v| (v * 4.0).round() / 4.0)).collect()
            } else {
                pts
            };
            let tree = KdTree::new(pts.clone());
            prop_assert_eq!(tree.nearest(&q, k), linear_nearest(&pts, &q, k));
        }
    }
}
