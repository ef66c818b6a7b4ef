//! Static 3-D KD-tree with exact radius queries.

use crate::geometry::Vec3;

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

/// Balanced KD-tree over a borrowed-at-build-time point set.
///
/// Points are copied into the tree; query results refer to indices in the
/// original slice.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    /// `points` permuted into `order`, so leaves scan contiguous memory.
    packed: Vec<Vec3>,
    nodes: Vec<Node>,
}

/// One neighbor hit: index into the build slice and squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            packed: Vec::new(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree.packed = tree.order.iter().map(|&i| tree.points[i]).collect();
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = self.widest_axis(start, end);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
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

    fn widest_axis(&self, start: usize, end: usize) -> usize {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        (hi - lo).imax()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &Vec3 {
        &self.points[index]
    }

    /// All points with `|q − p| ≤ radius`, sorted by (distance, index).
    pub fn radius_neighbors(&self, query: &Vec3, radius: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        self.radius_neighbors_into(query, radius, &mut out);
        out
    }

    /// Like [`radius_neighbors`](Self::radius_neighbors), reusing `out`.
    pub fn radius_neighbors_into(&self, query: &Vec3, radius: f64, out: &mut Vec<Neighbor>) {
        out.clear();
        if self.nodes.is_empty() || !(radius >= 0.0) {
            return;
        }
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for (p, &i) in self.packed[start..end].iter().zip(&self.order[start..end]) {
                        let d2 = (p - query).norm_squared();
                        if d2 <= r2 {
                            out.push(Neighbor {
                                index: i,
                                dist_sq: d2,
                            });
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let diff = query[axis] - value;
                    // Points equal to the split value may sit on either side.
                    if diff <= radius {
                        stack.push(left);
                    }
                    if diff >= -radius {
                        stack.push(right);
                    }
                }
            }
        }
        out.sort_by(|a, b| a.dist_sq.total_cmp(&b.dist_sq).then(a.index.cmp(&b.index)));
    }

    /// The first `k` entries of [`radius_neighbors`](Self::radius_neighbors), found
    /// without visiting subtrees that cannot improve on the current `k` best.
    pub fn nearest_within_into(
        &self,
        query: &Vec3,
        radius: f64,
        k: usize,
        out: &mut Vec<Neighbor>,
    ) {
        out.clear();
        if self.nodes.is_empty() || !(radius >= 0.0) || k == 0 {
            return;
        }
        self.nearest_rec(0, query, radius * radius, k, out);
    }

    fn nearest_rec(&self, id: usize, q: &Vec3, r2: f64, k: usize, out: &mut Vec<Neighbor>) {
        match self.nodes[id] {
            Node::Leaf { start, end } => {
                for (p, &i) in self.packed[start..end].iter().zip(&self.order[start..end]) {
                    let d2 = (p - q).norm_squared();
                    let full = out.len() == k;
                    if d2 > r2 || (full && !precedes(d2, i, &out[k - 1])) {
                        continue;
                    }
                    let at = out.partition_point(|n| {
                        precedes(
                            n.dist_sq,
                            n.index,
                            &Neighbor {
                                index: i,
                                dist_sq: d2,
                            },
                        )
                    });
                    if full {
                        out.pop();
                    }
                    out.insert(
                        at,
                        Neighbor {
                            index: i,
                            dist_sq: d2,
                        },
                    );
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.nearest_rec(near, q, r2, k, out);
                let bound = if out.len() == k {
                    out[k - 1].dist_sq
                } else {
                    r2
                };
                // Points equal to the split value may sit on either side.
                if diff * diff <= bound {
                    self.nearest_rec(far, q, r2, k, out);
                }
            }
        }
    }
}

/// Strict (distance, index) ordering.
fn precedes(d2: f64, index: usize, other: &Neighbor) -> bool {
    d2 < other.dist_sq || (d2 == other.dist_sq && index < other.index)
}
