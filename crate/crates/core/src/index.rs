//! Spatial indices: a static kd-tree over cloud samples and a uniform grid
//! over net centers. Query results are returned in ascending index order.

use std::collections::HashMap;

use crate::geom::{Vector, MAX_AMBIENT_DIM};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree over a fixed point set.
#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    coords: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Vector]) -> Self {
        let dim = points.first().map_or(0, |p| p.len());
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(points, &mut order, 0, points.len(), &mut nodes);
        }
        let coords = order.iter().flat_map(|&i| points[i].iter().cloned()).collect();
        Self { dim, coords, order, nodes }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn slot(&self, slot: usize) -> &[f64] {
        &self.coords[slot * self.dim..(slot + 1) * self.dim]
    }

    /// Calls `visit(index, squared distance)` for every point with `|p − q| ≤ radius`.
    pub fn for_each_within(&self, q: &[f64], radius: f64, mut visit: impl FnMut(usize, f64)) {
        if self.nodes.is_empty() {
            return;
        }
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for slot in start..end {
                        let d2 = sq_dist(self.slot(slot), q);
                        if d2 <= r2 {
                            visit(self.order[slot], d2);
                        }
                    }
                }
                Node::Split { axis, value, left, right } => {
                    let delta = q[axis] - value;
                    if delta <= radius {
                        stack.push(left);
                    }
                    if delta >= -radius {
                        stack.push(right);
                    }
                }
            }
        }
    }

    /// Indices with `|p − q| ≤ radius`, ascending.
    pub fn within(&self, q: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(q, radius, |i, _| out.push(i));
        out.sort_unstable();
        out
    }

    /// Nearest point and its distance; ties resolve to the smaller index.
    pub fn nearest(&self, q: &[f64]) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, q, &mut best);
        Some((best.0, best.1.sqrt()))
    }

    fn nearest_rec(&self, id: usize, q: &[f64], best: &mut (usize, f64)) {
        match self.nodes[id] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    let d2 = sq_dist(self.slot(slot), q);
                    let idx = self.order[slot];
                    if d2 < best.1 || (d2 == best.1 && idx < best.0) {
                        *best = (idx, d2);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let delta = q[axis] - value;
                let (near, far) = if delta <= 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, best);
                if delta * delta <= best.1 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn build(points: &[Vector], order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    nodes.push(Node::Leaf { start, end });
    if end - start <= LEAF_SIZE {
        return id;
    }
    let dim = points[order[start]].len();
    let width = |a: usize| {
        let (lo, hi) = order[start..end]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(points[i][a]), hi.max(points[i][a])));
        hi - lo
    };
    // First axis of maximal extent.
    let (axis, widest) = (0..dim).map(|a| (a, width(a))).fold((0, -1.0), |best, c| if c.1 > best.1 { c } else { best });
    if widest <= 0.0 {
        return id;
    }
    let mid = start + (end - start) / 2;
    order[start..end]
        .select_nth_unstable_by(mid - start, |&i, &j| points[i][axis].total_cmp(&points[j][axis]).then(i.cmp(&j)));
    let value = points[order[mid]][axis];
    let left = build(points, order, start, mid, nodes);
    let right = build(points, order, mid, end, nodes);
    nodes[id] = Node::Split { axis, value, left, right };
    id
}

type CellKey = [i64; MAX_AMBIENT_DIM];

/// Uniform grid hashing with a fixed cell size; supports incremental inserts.
#[derive(Debug, Clone)]
pub struct UniformGrid {
    dim: usize,
    cell: f64,
    cells: HashMap<CellKey, Vec<usize>>,
    points: Vec<Vector>,
}

impl UniformGrid {
    pub fn new(dim: usize, cell: f64) -> Self {
        Self { dim, cell, cells: HashMap::new(), points: Vec::new() }
    }

    pub fn from_points(points: &[Vector], cell: f64) -> Self {
        let dim = points.first().map_or(0, |p| p.len());
        let mut grid = Self::new(dim, cell);
        for p in points {
            grid.insert(p.clone());
        }
        grid
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &Vector {
        &self.points[i]
    }

    fn key(&self, p: &[f64]) -> CellKey {
        let mut key = [0i64; MAX_AMBIENT_DIM];
        for (k, c) in key.iter_mut().zip(p) {
            *k = (c / self.cell).floor() as i64;
        }
        key
    }

    /// Inserts a point and returns its index.
    pub fn insert(&mut self, p: Vector) -> usize {
        let idx = self.points.len();
        let key = self.key(p.as_slice());
        self.cells.entry(key).or_default().push(idx);
        self.points.push(p);
        idx
    }

    /// Calls `visit(index, squared distance)` for every point within `radius`
    /// (closed ball), in unspecified order.
    pub fn for_each_within(&self, q: &[f64], radius: f64, mut visit: impl FnMut(usize, f64)) {
        if self.points.is_empty() {
            return;
        }
        let r2 = radius * radius;
        let lo = self.key(&q.iter().map(|c| c - radius).collect::<Vec<_>>());
        let hi = self.key(&q.iter().map(|c| c + radius).collect::<Vec<_>>());
        let mut span: u128 = 1;
        for a in 0..self.dim {
            span = span.saturating_mul((hi[a] - lo[a] + 1) as u128);
        }
        let mut check = |ids: &Vec<usize>| {
            for &i in ids {
                let d2 = sq_dist(self.points[i].as_slice(), q);
                if d2 <= r2 {
                    visit(i, d2);
                }
            }
        };
        if span > self.cells.len() as u128 {
            for (key, ids) in &self.cells {
                if (0..self.dim).all(|a| key[a] >= lo[a] && key[a] <= hi[a]) {
                    check(ids);
                }
            }
            return;
        }
        let mut key = lo;
        loop {
            if let Some(ids) = self.cells.get(&key) {
                check(ids);
            }
            let mut a = 0;
            loop {
                if a == self.dim {
                    return;
                }
                if key[a] < hi[a] {
                    key[a] += 1;
                    break;
                }
                key[a] = lo[a];
                a += 1;
            }
        }
    }

    /// Indices within `radius` (closed), ascending.
    pub fn within(&self, q: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(q, radius, |i, _| out.push(i));
        out.sort_unstable();
        out
    }

    /// Indices with `|p − q| < radius` (open ball), ascending.
    pub fn within_open(&self, q: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let r2 = radius * radius;
        self.for_each_within(q, radius, |i, d2| {
            if d2 < r2 {
                out.push(i)
            }
        });
        out.sort_unstable();
        out
    }

    /// True if some point lies at distance `< radius` from `q`.
    pub fn any_within_open(&self, q: &[f64], radius: f64) -> bool {
        let mut found = false;
        let r2 = radius * radius;
        self.for_each_within(q, radius, |_, d2| found |= d2 < r2);
        found
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, dim: usize, seed: u64) -> Vec<Vector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Vector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn kdtree_matches_brute_force() {
        for dim in [1, 2, 3, 5] {
            let pts = cloud(500, dim, dim as u64);
            let tree = KdTree::new(&pts);
            let queries = cloud(50, dim, 99);
            for q in &queries {
                for r in [0.05, 0.3, 1.5] {
                    let brute: Vec<usize> = (0..pts.len()).filter(|&i| (&pts[i] - q).norm() <= r).collect();
                    assert_eq!(tree.within(q.as_slice(), r), brute);
                }
                let (i, d) = tree.nearest(q.as_slice()).unwrap();
                let best = pts.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min);
                assert_eq!(d, best);
                assert_eq!((&pts[i] - q).norm(), best);
            }
        }
    }

    #[test]
    fn kdtree_handles_duplicates_and_empty() {
        let pts = vec![Vector::zeros(2); 40];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.within(&[0.0, 0.0], 0.0).len(), 40);
        assert_eq!(tree.nearest(&[1.0, 0.0]).unwrap().0, 0);
        assert!(KdTree::new(&[]).nearest(&[0.0]).is_none());
    }

    #[test]
    fn grid_matches_brute_force() {
        for dim in [1, 2, 3] {
            let pts = cloud(400, dim, 5 + dim as u64);
            let grid = UniformGrid::from_points(&pts, 0.1);
            for q in &cloud(30, dim, 77) {
                for r in [0.05, 0.25, 3.0] {
                    let brute: Vec<usize> = (0..pts.len()).filter(|&i| (&pts[i] - q).norm() <= r).collect();
                    assert_eq!(grid.within(q.as_slice(), r), brute);
                    let open: Vec<usize> = (0..pts.len()).filter(|&i| (&pts[i] - q).norm() < r).collect();
                    assert_eq!(grid.within_open(q.as_slice(), r), open);
                }
            }
        }
    }
}
