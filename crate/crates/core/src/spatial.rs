//! Static 3D kd-tree for exact nearest-neighbour queries.

use crate::geometry::Point;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Point>,
    /// Original index of each entry in `points`.
    index: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[Point]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            index: (0..points.len()).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
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

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points[start..end] {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        // Sort a permutation so `points` and `index` move together.
        let mut perm: Vec<usize> = (start..end).collect();
        perm.select_nth_unstable_by(mid - start, |&a, &b| {
            self.points[a][axis].total_cmp(&self.points[b][axis])
        });
        let pts: Vec<Point> = perm.iter().map(|&i| self.points[i]).collect();
        let idx: Vec<usize> = perm.iter().map(|&i| self.index[i]).collect();
        self.points[start..end].copy_from_slice(&pts);
        self.index[start..end].copy_from_slice(&idx);
        let value = self.points[mid][axis];

        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Returns `(original_index, squared_distance)` of the closest point.
    /// `None` only for an empty tree.
    pub fn nearest(&self, query: &Point) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, query, &mut best);
        Some(best)
    }

    /// Squared distance to the closest point, or infinity for an empty tree.
    pub fn nearest_dist2(&self, query: &Point) -> f64 {
        self.nearest(query).map_or(f64::INFINITY, |(_, d)| d)
    }

    fn search(&self, node: usize, q: &Point, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let d = (self.points[i] - q).norm_squared();
                    // Ties resolve to the lowest original index.
                    if d < best.1 || (d == best.1 && self.index[i] < best.0) {
                        *best = (self.index[i], d);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}
