//! Static k-d tree over points in `K` dimensions.
//!
//! Used in 3D for the input cloud and in 2D for in-plane projections during
//! probing. All queries are exact; ties between equidistant points are broken
//! by the lower point index so results are deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree<const K: usize> {
    points: Vec<[f64; K]>,
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist2: f64,
    index: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
fn dist2<const K: usize>(a: &[f64; K], b: &[f64; K]) -> f64 {
    let mut s = 0.0;
    for k in 0..K {
        let d = a[k] - b[k];
        s += d * d;
    }
    s
}

impl<const K: usize> KdTree<K> {
    pub fn new(points: Vec<[f64; K]>) -> Self {
        let mut perm: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(&points, &mut perm, 0, &mut nodes);
        }
        Self {
            points,
            perm,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64; K] {
        &self.points[i]
    }

    /// Indices of all points with `‖p − q‖ ≤ radius`, ascending.
    pub fn within_radius(&self, query: &[f64; K], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() || radius < 0.0 {
            return out;
        }
        let r2 = radius * radius;
        self.radius_rec(0, query, r2, &mut out);
        out.sort_unstable();
        out
    }

    fn radius_rec(&self, node: usize, q: &[f64; K], r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    if dist2(&self.points[i], q) <= r2 {
                        out.push(i);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.radius_rec(near, q, r2, out);
                if diff * diff <= r2 {
                    self.radius_rec(far, q, r2, out);
                }
            }
        }
    }

    /// The `k` nearest points as `(index, distance)`, ordered by distance then index.
    pub fn nearest_k(&self, query: &[f64; K], k: usize) -> Vec<(usize, f64)> {
        if self.nodes.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, query, k, &mut heap);
        let mut items = heap.into_vec();
        items.sort();
        items
            .into_iter()
            .map(|h| (h.index, h.dist2.sqrt()))
            .collect()
    }

    fn knn_rec(&self, node: usize, q: &[f64; K], k: usize, heap: &mut BinaryHeap<HeapItem>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    let item = HeapItem {
                        dist2: dist2(&self.points[i], q),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(item);
                    } else if item < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(item);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, heap);
                // Equal plane distance must still be visited so index tie-breaks hold.
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist2 {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }

    /// Nearest point under the lexicographic key `(distance, tiebreak(i), i)`.
    pub fn nearest_by<F>(&self, query: &[f64; K], tiebreak: F) -> Option<(usize, f64)>
    where
        F: Fn(usize) -> f64,
    {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(f64, f64, usize)> = None;
        self.nearest_rec(0, query, &tiebreak, &mut best);
        best.map(|(d2, _, i)| (i, d2.sqrt()))
    }

    fn nearest_rec<F>(&self, node: usize, q: &[f64; K], tb: &F, best: &mut Option<(f64, f64, usize)>)
    where
        F: Fn(usize) -> f64,
    {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    let d2 = dist2(&self.points[i], q);
                    let better = match *best {
                        None => true,
                        Some((bd, bt, bi)) => {
                            if d2 != bd {
                                d2 < bd
                            } else {
                                let t = tb(i);
                                t < bt || (t == bt && i < bi)
                            }
                        }
                    };
                    if better {
                        *best = Some((d2, tb(i), i));
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, tb, best);
                let visit = match *best {
                    None => true,
                    Some((bd, _, _)) => diff * diff <= bd,
                };
                if visit {
                    self.nearest_rec(far, q, tb, best);
                }
            }
        }
    }
}

fn build<const K: usize>(
    points: &[[f64; K]],
    perm: &mut [usize],
    offset: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if perm.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + perm.len(),
        });
        return id;
    }
    // split along the widest extent
    let mut lo = [f64::INFINITY; K];
    let mut hi = [f64::NEG_INFINITY; K];
    for &i in perm.iter() {
        for k in 0..K {
            lo[k] = lo[k].min(points[i][k]);
            hi[k] = hi[k].max(points[i][k]);
        }
    }
    let dim = (0..K)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    if hi[dim] - lo[dim] <= 0.0 {
        // all points coincide
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + perm.len(),
        });
        return id;
    }
    let mid = perm.len() / 2;
    perm.select_nth_unstable_by(mid, |&a, &b| points[a][dim].total_cmp(&points[b][dim]));
    let value = points[perm[mid]][dim];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (l, r) = perm.split_at_mut(mid);
    let left = build(points, l, offset, nodes);
    let right = build(points, r, offset + mid, nodes);
    nodes[id] = Node::Split {
        dim,
        value,
        left,
        right,
    };
    id
}
