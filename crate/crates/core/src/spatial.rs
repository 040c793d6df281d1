//! Exact nearest-point queries under an absolute norm.
//!
//! A kd-tree over a flat point buffer. Pruning uses the distance from the
//! query to a node's bounding box, which for absolute norms is attained at
//! the coordinate-wise clamp of the query into the box.

use crate::geometry::NormSpec;

const LEAF_SIZE: usize = 12;
const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Node {
    start: u32,
    end: u32,
    left: u32,
    right: u32,
}

#[derive(Clone, Debug)]
pub(crate) struct KdTree {
    dim: usize,
    points: Vec<f64>,
    nodes: Vec<Node>,
    // 2 * dim entries per node: lo then hi
    bounds: Vec<f64>,
}

impl KdTree {
    /// Builds the tree from `points` laid out as consecutive `dim`-tuples.
    pub(crate) fn new(dim: usize, points: &[f64]) -> Self {
        assert!(dim > 0 && points.len() % dim == 0);
        let n = points.len() / dim;
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut tree = KdTree {
            dim,
            points: Vec::new(),
            nodes: Vec::new(),
            bounds: Vec::new(),
        };
        if n > 0 {
            tree.build(points, &mut order, 0, n);
        }
        tree.points = order
            .iter()
            .flat_map(|&i| points[i as usize * dim..(i as usize + 1) * dim].iter().copied())
            .collect();
        tree
    }

    fn build(&mut self, src: &[f64], order: &mut [u32], start: usize, end: usize) -> u32 {
        let dim = self.dim;
        let id = self.nodes.len() as u32;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &i in &order[start..end] {
            let p = &src[i as usize * dim..(i as usize + 1) * dim];
            for k in 0..dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        self.nodes.push(Node {
            start: start as u32,
            end: end as u32,
            left: NONE,
            right: NONE,
        });
        self.bounds.extend_from_slice(&lo);
        self.bounds.extend_from_slice(&hi);
        if end - start <= LEAF_SIZE {
            return id;
        }
        let axis = (0..dim)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            src[a as usize * dim + axis].total_cmp(&src[b as usize * dim + axis])
        });
        let left = self.build(src, order, start, mid);
        let right = self.build(src, order, mid, end);
        self.nodes[id as usize].left = left;
        self.nodes[id as usize].right = right;
        id
    }

    #[cfg(test)]
    pub(crate) fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    #[inline]
    fn box_dist(&self, node: u32, x: &[f64], norm: &NormSpec, buf: &mut [f64]) -> f64 {
        let b = &self.bounds[node as usize * 2 * self.dim..(node as usize + 1) * 2 * self.dim];
        let (lo, hi) = b.split_at(self.dim);
        for k in 0..self.dim {
            buf[k] = if x[k] < lo[k] {
                lo[k] - x[k]
            } else if x[k] > hi[k] {
                x[k] - hi[k]
            } else {
                0.0
            };
        }
        norm.eval(buf)
    }

    /// True iff some point lies at distance strictly below `r` from `x`.
    pub(crate) fn any_within(&self, x: &[f64], r: f64, norm: &NormSpec) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let mut buf = [0.0f64; 8];
        let mut heap_buf;
        let buf: &mut [f64] = if self.dim <= 8 {
            &mut buf[..self.dim]
        } else {
            heap_buf = vec![0.0; self.dim];
            &mut heap_buf
        };
        let mut stack = Vec::with_capacity(64);
        stack.push(0u32);
        while let Some(id) = stack.pop() {
            if self.box_dist(id, x, norm, buf) >= r {
                continue;
            }
            let node = self.nodes[id as usize];
            if node.left == NONE {
                for i in node.start as usize..node.end as usize {
                    let p = &self.points[i * self.dim..(i + 1) * self.dim];
                    if norm.dist(x, p) < r {
                        return true;
                    }
                }
            } else {
                let dl = self.box_dist(node.left, x, norm, buf);
                let dr = self.box_dist(node.right, x, norm, buf);
                // nearer child on top of the stack
                if dl <= dr {
                    stack.push(node.right);
                    stack.push(node.left);
                } else {
                    stack.push(node.left);
                    stack.push(node.right);
                }
            }
        }
        false
    }

    /// Distance from `x` to the nearest point (infinity when empty).
    pub(crate) fn nearest(&self, x: &[f64], norm: &NormSpec) -> f64 {
        let mut best = f64::INFINITY;
        if self.nodes.is_empty() {
            return best;
        }
        let mut buf = vec![0.0; self.dim];
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        stack.push((0, self.box_dist(0, x, norm, &mut buf)));
        while let Some((id, lb)) = stack.pop() {
            if lb >= best {
                continue;
            }
            let node = self.nodes[id as usize];
            if node.left == NONE {
                for i in node.start as usize..node.end as usize {
                    let p = &self.points[i * self.dim..(i + 1) * self.dim];
                    best = best.min(norm.dist(x, p));
                }
            } else {
                let dl = self.box_dist(node.left, x, norm, &mut buf);
                let dr = self.box_dist(node.right, x, norm, &mut buf);
                if dl <= dr {
                    stack.push((node.right, dr));
                    stack.push((node.left, dl));
                } else {
                    stack.push((node.left, dl));
                    stack.push((node.right, dr));
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_nearest(pts: &[f64], x: &[f64], norm: &NormSpec) -> f64 {
        pts.chunks(2).map(|p| norm.dist(x, p)).fold(f64::INFINITY, f64::min)
    }

    fn norms() -> impl Strategy<Value = NormSpec> {
        prop_oneof![
            Just(NormSpec::L1),
            Just(NormSpec::L2),
            Just(NormSpec::LINF),
            Just(NormSpec::Lp(3.0)),
            Just(NormSpec::strange_default()),
        ]
    }

    proptest! {
        #[test]
        fn kd_tree_matches_brute_force(
            pts in prop::collection::vec(-5.0f64..5.0, 2..400),
            x in -6.0f64..6.0,
            y in -6.0f64..6.0,
            r in 0.0f64..4.0,
            norm in norms(),
        ) {
            let mut pts = pts;
            if pts.len() % 2 == 1 { pts.pop(); }
            prop_assume!(!pts.is_empty());
            let tree = KdTree::new(2, &pts);
            let q = [x, y];
            let want = brute_nearest(&pts, &q, &norm);
            prop_assert_eq!(tree.nearest(&q, &norm), want);
            prop_assert_eq!(tree.any_within(&q, r, &norm), want < r);
        }
    }

    #[test]
    fn empty_tree() {
        let t = KdTree::new(2, &[]);
        assert_eq!(t.len(), 0);
        assert!(t.nearest(&[0.0, 0.0], &NormSpec::L2).is_infinite());
        assert!(!t.any_within(&[0.0, 0.0], 1.0, &NormSpec::L2));
    }

    #[test]
    fn three_dimensional_points() {
        let pts: Vec<f64> = (0..300).map(|i| ((i * 37) % 101) as f64 / 10.0).collect();
        let t = KdTree::new(3, &pts);
        let q = [1.3, 4.4, 2.2];
        let want = pts
            .chunks(3)
            .map(|p| NormSpec::L2.dist(&q, p))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(t.nearest(&q, &NormSpec::L2), want);
    }
}
