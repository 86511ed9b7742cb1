//! Static 3D KD-tree over a point slice.

use nalgebra::Vector3;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// KD-tree storing indices into the point set it was built from. The tree
/// owns a copy of the points so it can be queried independently.
#[derive(Debug, Clone, Default)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// One query hit: index into the build slice and squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.dist_sq.sqrt()
    }
}

pub(crate) fn dist_sq(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    dx * dx + dy * dy + dz * dz
}

/// Total order used for nearest-neighbor results: distance, then x, y, z,
/// then index.
pub(crate) fn neighbor_order(
    points: &[Vector3<f64>],
    a: &Neighbor,
    b: &Neighbor,
) -> Ordering {
    let (pa, pb) = (&points[a.index], &points[b.index]);
    a.dist_sq
        .total_cmp(&b.dist_sq)
        .then(pa.x.total_cmp(&pb.x))
        .then(pa.y.total_cmp(&pb.y))
        .then(pa.z.total_cmp(&pb.z))
        .then(a.index.cmp(&b.index))
}

struct HeapItem<'a> {
    n: Neighbor,
    points: &'a [Vector3<f64>],
}

impl PartialEq for HeapItem<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem<'_> {}
impl PartialOrd for HeapItem<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        neighbor_order(self.points, &self.n, &other.n)
    }
}

impl KdTree {
    pub fn build(points: &[Vector3<f64>]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // Split on the axis of largest extent.
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// All points with squared distance `<= radius^2`, sorted by the
    /// neighbor order.
    pub fn within_radius(&self, center: &Vector3<f64>, radius: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        let d = dist_sq(center, &self.points[i]);
                        if d <= r2 {
                            out.push(Neighbor { index: i, dist_sq: d });
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let diff = center[axis] - value;
                    // Points equal to the split value may sit on either side.
                    if diff <= 0.0 || diff * diff <= r2 {
                        stack.push(left);
                    }
                    if diff >= 0.0 || diff * diff <= r2 {
                        stack.push(right);
                    }
                }
            }
        }
        out.sort_by(|a, b| neighbor_order(&self.points, a, b));
        out
    }

    /// The `k` nearest points in ascending neighbor order (fewer if the
    /// tree holds fewer than `k` points).
    pub fn nearest(&self, center: &Vector3<f64>, k: usize) -> Vec<Neighbor> {
        if self.nodes.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<HeapItem> = BinaryHeap::with_capacity(k + 1);
        self.search(0, center, k, &mut heap);
        let mut out: Vec<Neighbor> = heap.into_iter().map(|h| h.n).collect();
        out.sort_by(|a, b| neighbor_order(&self.points, a, b));
        out
    }

    fn search<'a>(
        &'a self,
        id: usize,
        center: &Vector3<f64>,
        k: usize,
        heap: &mut BinaryHeap<HeapItem<'a>>,
    ) {
        match self.nodes[id] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let item = HeapItem {
                        n: Neighbor {
                            index: i,
                            dist_sq: dist_sq(center, &self.points[i]),
                        },
                        points: &self.points,
                    };
                    if heap.len() < k {
                        heap.push(item);
                    } else if item < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(item);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = center[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, center, k, heap);
                // Visit the far side unless it provably cannot hold a point
                // that is at least tied with the current worst.
                let worst = heap.peek().map(|h| h.n.dist_sq);
                if heap.len() < k || diff == 0.0 || worst.is_some_and(|w| diff * diff <= w) {
                    self.search(far, center, k, heap);
                }
            }
        }
    }
}
