//! Static kd-tree under the Chebyshev (max-coordinate) metric.
//!
//! Supports the two queries the KSG estimator needs: the distance to the
//! k-th nearest neighbor, and the number of points strictly inside a ball.
//! Both return exactly what a linear scan returns: distances are computed
//! with the same floating-point operations, and pruning relies only on
//! monotonicity of rounded subtraction.

const LEAF_SIZE: usize = 24;

#[derive(Debug, Clone, Copy)]
struct Node {
    start: u32,
    end: u32,
    /// Child node indices; `left == 0` marks a leaf (the root is never a child).
    left: u32,
    right: u32,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    /// Point coordinates in tree order.
    coords: Vec<f64>,
    /// Original index of each point in tree order.
    ids: Vec<u32>,
    /// Tree-order position of each original index.
    positions: Vec<u32>,
    nodes: Vec<Node>,
    /// Per-node bounding box, `[lo_0..lo_d, hi_0..hi_d]`.
    bounds: Vec<f64>,
}

#[inline(always)]
pub(crate) fn chebyshev(a: &[f64], b: &[f64]) -> f64 {
    let mut d = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let t = (x - y).abs();
        if t > d {
            d = t;
        }
    }
    d
}

impl KdTree {
    /// Builds a tree over `coords.len() / dim` points stored row-major.
    pub fn build(coords: &[f64], dim: usize) -> Self {
        assert!(dim > 0 && coords.len() % dim == 0);
        let n = coords.len() / dim;
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        let mut bounds = Vec::new();
        nodes.push(Node {
            start: 0,
            end: n as u32,
            left: 0,
            right: 0,
        });
        let mut stack = vec![0usize];
        while let Some(node_idx) = stack.pop() {
            let Node { start, end, .. } = nodes[node_idx];
            let slice = &mut order[start as usize..end as usize];
            let (lo, hi) = bounding_box(coords, dim, slice);
            let base = node_idx * 2 * dim;
            if bounds.len() < base + 2 * dim {
                bounds.resize(base + 2 * dim, 0.0);
            }
            bounds[base..base + dim].copy_from_slice(&lo);
            bounds[base + dim..base + 2 * dim].copy_from_slice(&hi);

            let len = slice.len();
            if len <= LEAF_SIZE {
                continue;
            }
            let split_dim = (0..dim)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
                .unwrap_or(0);
            if hi[split_dim] == lo[split_dim] {
                // all points coincide
                continue;
            }
            let mid = len / 2;
            slice.select_nth_unstable_by(mid, |&a, &b| {
                coords[a as usize * dim + split_dim]
                    .total_cmp(&coords[b as usize * dim + split_dim])
            });
            let left = nodes.len();
            nodes.push(Node {
                start,
                end: start + mid as u32,
                left: 0,
                right: 0,
            });
            nodes.push(Node {
                start: start + mid as u32,
                end,
                left: 0,
                right: 0,
            });
            nodes[node_idx].left = left as u32;
            nodes[node_idx].right = left as u32 + 1;
            stack.push(left + 1);
            stack.push(left);
        }
        bounds.resize(nodes.len() * 2 * dim, 0.0);

        let mut sorted = Vec::with_capacity(coords.len());
        for &id in &order {
            let p = id as usize * dim;
            sorted.extend_from_slice(&coords[p..p + dim]);
        }
        let mut positions = vec![0u32; n];
        for (pos, &id) in order.iter().enumerate() {
            positions[id as usize] = pos as u32;
        }
        Self {
            dim,
            coords: sorted,
            ids: order,
            positions,
            nodes,
            bounds,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    /// Original indices in tree order; queries issued in this order touch
    /// memory mostly sequentially.
    pub fn order(&self) -> impl Iterator<Item = usize> + '_ {
        self.ids.iter().map(|&i| i as usize)
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Lower and upper bounds on the distance from `q` to any point in the
    /// node's box.
    #[inline(always)]
    fn box_dists(&self, dim: usize, node: usize, q: &[f64]) -> (f64, f64) {
        let b = node * 2 * dim;
        let lo = &self.bounds[b..b + dim];
        let hi = &self.bounds[b + dim..b + 2 * dim];
        let q = &q[..dim];
        let (mut near, mut far) = (0.0f64, 0.0f64);
        for c in 0..dim {
            let (below, above) = (lo[c] - q[c], q[c] - hi[c]);
            let t = if below > 0.0 {
                below
            } else if above > 0.0 {
                above
            } else {
                0.0
            };
            near = near.max(t);
            far = far.max((q[c] - lo[c]).abs().max((hi[c] - q[c]).abs()));
        }
        (near, far)
    }

    #[inline(always)]
    fn min_dist(&self, dim: usize, node: usize, q: &[f64]) -> f64 {
        let b = node * 2 * dim;
        let lo = &self.bounds[b..b + dim];
        let hi = &self.bounds[b + dim..b + 2 * dim];
        let q = &q[..dim];
        let mut d = 0.0f64;
        for c in 0..dim {
            let t = if q[c] < lo[c] {
                lo[c] - q[c]
            } else if q[c] > hi[c] {
                q[c] - hi[c]
            } else {
                0.0
            };
            d = d.max(t);
        }
        d
    }

    #[inline(always)]
    fn dist_to(&self, dim: usize, pos: usize, q: &[f64]) -> f64 {
        chebyshev(&q[..dim], &self.coords[pos * dim..(pos + 1) * dim])
    }

    /// Distance from `q` to its `k`-th nearest point, skipping the point with
    /// original index `exclude`. Returns `inf` if fewer than `k` candidates.
    pub fn kth_distance(&self, q: &[f64], exclude: usize, k: usize) -> f64 {
        // constant dimensions let the compiler unroll the inner loops
        match self.dim {
            2 => self.kth_impl(2, q, exclude, k),
            4 => self.kth_impl(4, q, exclude, k),
            d => self.kth_impl(d, q, exclude, k),
        }
    }

    #[inline(always)]
    fn kth_impl(&self, dim: usize, q: &[f64], exclude: usize, k: usize) -> f64 {
        debug_assert!(k >= 1);
        // ascending k smallest distances seen so far
        let mut best = vec![f64::INFINITY; k];
        let mut stack: Vec<(usize, f64)> = Vec::with_capacity(64);
        stack.push((0, 0.0));
        while let Some((node_idx, bound)) = stack.pop() {
            if bound > best[k - 1] {
                continue;
            }
            let node = self.nodes[node_idx];
            if node.left == 0 {
                for pos in node.start as usize..node.end as usize {
                    if self.ids[pos] as usize == exclude {
                        continue;
                    }
                    let d = self.dist_to(dim, pos, q);
                    if d < best[k - 1] {
                        let mut i = k - 1;
                        while i > 0 && best[i - 1] > d {
                            best[i] = best[i - 1];
                            i -= 1;
                        }
                        best[i] = d;
                    }
                }
                continue;
            }
            let (l, r) = (node.left as usize, node.right as usize);
            let (dl, dr) = (self.min_dist(dim, l, q), self.min_dist(dim, r, q));
            // push the farther child first so the nearer one is explored next
            if dl <= dr {
                stack.push((r, dr));
                stack.push((l, dl));
            } else {
                stack.push((l, dl));
                stack.push((r, dr));
            }
        }
        best[k - 1]
    }

    /// Number of points at distance strictly below `radius` from `q`,
    /// not counting the point with original index `exclude`.
    pub fn count_within(&self, q: &[f64], exclude: usize, radius: f64) -> usize {
        match self.dim {
            2 => self.count_impl(2, q, exclude, radius),
            4 => self.count_impl(4, q, exclude, radius),
            d => self.count_impl(d, q, exclude, radius),
        }
    }

    #[inline(always)]
    fn count_impl(&self, dim: usize, q: &[f64], exclude: usize, radius: f64) -> usize {
        let mut count = 0usize;
        let mut stack: Vec<usize> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(node_idx) = stack.pop() {
            let (near, far) = self.box_dists(dim, node_idx, q);
            if near >= radius {
                continue;
            }
            let node = self.nodes[node_idx];
            if far < radius {
                count += (node.end - node.start) as usize;
                continue;
            }
            if node.left == 0 {
                for pos in node.start as usize..node.end as usize {
                    count += (self.dist_to(dim, pos, q) < radius) as usize;
                }
                continue;
            }
            stack.push(node.right as usize);
            stack.push(node.left as usize);
        }
        // the excluded point was counted iff it lies inside the ball
        if let Some(&pos) = self.positions.get(exclude) {
            count -= (self.dist_to(dim, pos as usize, q) < radius) as usize;
        }
        count
    }
}

fn bounding_box(coords: &[f64], dim: usize, ids: &[u32]) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for &id in ids {
        let p = &coords[id as usize * dim..(id as usize + 1) * dim];
        for c in 0..dim {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    (lo, hi)
}
