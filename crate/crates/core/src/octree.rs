//! Incremental octree over 3D points.
//!
//! Cubic nodes are subdivided lazily when a leaf bucket overflows and are
//! pruned as soon as they become empty, so memory follows the point set.
//! When a point arrives outside the root cube the tree grows upward: the
//! old root becomes one octant of a cube twice its size, extended toward
//! the new point. Every cube in the tree is therefore a dyadic refinement
//! of the initial root, which gives a well-defined grid of minimum-extent
//! cells used by the down-sampling rule: at most `max_points_per_min_leaf`
//! points are ever accepted inside one such cell.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::geometry::{is_finite, Aabb, Vec3};

/// Default bucket size of leaves that can still be subdivided.
pub const DEFAULT_LEAF_CAPACITY: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OctreeConfig {
    /// Side length below which cells are never subdivided (m).
    pub min_extent: f64,
    /// Points accepted per minimum-extent cell before insertions are refused.
    pub max_points_per_min_leaf: usize,
    /// Bucket size before a leaf above `min_extent` splits.
    #[serde(default = "default_leaf_capacity")]
    pub leaf_capacity: usize,
    pub initial_bounds: Aabb,
}

fn default_leaf_capacity() -> usize {
    DEFAULT_LEAF_CAPACITY
}

impl OctreeConfig {
    pub fn new(min_extent: f64, max_points_per_min_leaf: usize, initial_bounds: Aabb) -> Self {
        Self {
            min_extent,
            max_points_per_min_leaf,
            leaf_capacity: DEFAULT_LEAF_CAPACITY,
            initial_bounds,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.min_extent > 0.0 && self.min_extent.is_finite()) {
            return Err(format!("min_extent must be positive, got {}", self.min_extent));
        }
        if self.max_points_per_min_leaf == 0 {
            return Err("max_points_per_min_leaf must be at least 1".into());
        }
        if self.leaf_capacity == 0 {
            return Err("leaf_capacity must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    /// The minimum-extent cell holding the point is full.
    RejectedSaturated,
    /// A bit-identical point is already stored.
    RejectedDuplicate,
    /// NaN or infinite coordinates.
    RejectedNonFinite,
}

#[derive(Clone, Debug)]
struct Node {
    center: Vec3,
    half: f64,
    count: usize,
    kind: Kind,
}

#[derive(Clone, Debug)]
enum Kind {
    Leaf(Vec<Vec3>),
    Branch(Box<[Option<Node>; 8]>),
}

#[inline]
fn octant(center: &Vec3, p: &Vec3) -> usize {
    (p.x >= center.x) as usize | ((p.y >= center.y) as usize) << 1 | ((p.z >= center.z) as usize) << 2
}

#[inline]
fn child_center(center: &Vec3, half: f64, oct: usize) -> Vec3 {
    let q = half * 0.5;
    Vec3::new(
        center.x + if oct & 1 != 0 { q } else { -q },
        center.y + if oct & 2 != 0 { q } else { -q },
        center.z + if oct & 4 != 0 { q } else { -q },
    )
}

#[inline]
fn cube_dist_sq(center: &Vec3, half: f64, p: &Vec3) -> f64 {
    let mut d = 0.0;
    for i in 0..3 {
        let e = (p[i] - center[i]).abs() - half;
        if e > 0.0 {
            d += e * e;
        }
    }
    d
}

#[inline]
fn cube_max_dist_sq(center: &Vec3, half: f64, p: &Vec3) -> f64 {
    let mut d = 0.0;
    for i in 0..3 {
        let e = (p[i] - center[i]).abs() + half;
        d += e * e;
    }
    d
}

fn same_min_cell(mut center: Vec3, mut half: f64, a: &Vec3, b: &Vec3, min_extent: f64) -> bool {
    while 2.0 * half > min_extent {
        let oa = octant(&center, a);
        if oa != octant(&center, b) {
            return false;
        }
        center = child_center(&center, half, oa);
        half *= 0.5;
    }
    true
}

fn empty_children() -> Box<[Option<Node>; 8]> {
    Box::new([None, None, None, None, None, None, None, None])
}

impl Node {
    fn leaf(center: Vec3, half: f64) -> Self {
        Self {
            center,
            half,
            count: 0,
            kind: Kind::Leaf(Vec::new()),
        }
    }

    fn cube(&self) -> Aabb {
        Aabb::cube(self.center, self.half)
    }

    /// Half-open on the upper faces, matching `octant` routing.
    fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| {
            let d = p[i] - self.center[i];
            d >= -self.half && d < self.half
        })
    }

    fn is_min_cell(&self, min_extent: f64) -> bool {
        2.0 * self.half <= min_extent
    }

    fn insert(&mut self, p: Vec3, cfg: &OctreeConfig) -> InsertOutcome {
        let outcome = match &mut self.kind {
            Kind::Leaf(points) => {
                if points.iter().any(|q| *q == p) {
                    return InsertOutcome::RejectedDuplicate;
                }
                let in_cell = if 2.0 * self.half <= cfg.min_extent {
                    points.len()
                } else {
                    let (center, half) = (self.center, self.half);
                    points
                        .iter()
                        .filter(|q| same_min_cell(center, half, q, &p, cfg.min_extent))
                        .count()
                };
                if in_cell >= cfg.max_points_per_min_leaf {
                    return InsertOutcome::RejectedSaturated;
                }
                points.push(p);
                InsertOutcome::Inserted
            }
            Kind::Branch(children) => {
                let oct = octant(&self.center, &p);
                let child = children[oct]
                    .get_or_insert_with(|| Node::leaf(child_center(&self.center, self.half, oct), self.half * 0.5));
                let outcome = child.insert(p, cfg);
                if child.count == 0 {
                    children[oct] = None;
                }
                outcome
            }
        };
        if outcome == InsertOutcome::Inserted {
            self.count += 1;
            self.maybe_split(cfg);
        }
        outcome
    }

    fn maybe_split(&mut self, cfg: &OctreeConfig) {
        let min_cell = self.is_min_cell(cfg.min_extent);
        let Kind::Leaf(points) = &mut self.kind else {
            return;
        };
        if points.len() <= cfg.leaf_capacity || min_cell {
            return;
        }
        let points = std::mem::take(points);
        let mut children = empty_children();
        for p in points {
            let oct = octant(&self.center, &p);
            let child = children[oct]
                .get_or_insert_with(|| Node::leaf(child_center(&self.center, self.half, oct), self.half * 0.5));
            if let Kind::Leaf(v) = &mut child.kind {
                v.push(p);
            }
            child.count += 1;
        }
        for child in children.iter_mut().flatten() {
            child.maybe_split(cfg);
        }
        self.kind = Kind::Branch(children);
    }

    fn remove(&mut self, p: &Vec3) -> bool {
        let removed = match &mut self.kind {
            Kind::Leaf(points) => match points.iter().position(|q| q == p) {
                Some(i) => {
                    points.swap_remove(i);
                    true
                }
                None => false,
            },
            Kind::Branch(children) => {
                let oct = octant(&self.center, p);
                match &mut children[oct] {
                    Some(child) => {
                        let hit = child.remove(p);
                        if hit && child.count == 0 {
                            children[oct] = None;
                        }
                        hit
                    }
                    None => false,
                }
            }
        };
        if removed {
            self.count -= 1;
        }
        removed
    }

    /// Removes points outside `keep`; returns how many were dropped.
    fn retain_in(&mut self, keep: &Aabb) -> usize {
        if keep.contains_box(&self.cube()) {
            return 0;
        }
        let removed = match &mut self.kind {
            Kind::Leaf(points) => {
                let before = points.len();
                points.retain(|p| keep.contains(p));
                before - points.len()
            }
            Kind::Branch(children) => {
                let mut removed = 0;
                for slot in children.iter_mut() {
                    let Some(child) = slot else { continue };
                    if keep.disjoint(&child.cube()) {
                        removed += child.count;
                        *slot = None;
                    } else {
                        removed += child.retain_in(keep);
                        if child.count == 0 {
                            *slot = None;
                        }
                    }
                }
                removed
            }
        };
        self.count -= removed;
        removed
    }

    fn collect(&self, out: &mut Vec<Vec3>) {
        match &self.kind {
            Kind::Leaf(points) => out.extend_from_slice(points),
            Kind::Branch(children) => children.iter().flatten().for_each(|c| c.collect(out)),
        }
    }

    fn node_count(&self) -> usize {
        match &self.kind {
            Kind::Leaf(_) => 1,
            Kind::Branch(children) => 1 + children.iter().flatten().map(Node::node_count).sum::<usize>(),
        }
    }

    fn radius(&self, q: &Vec3, r_sq: f64, out: &mut Vec<Vec3>) {
        if cube_dist_sq(&self.center, self.half, q) > r_sq {
            return;
        }
        if cube_max_dist_sq(&self.center, self.half, q) <= r_sq {
            self.collect(out);
            return;
        }
        match &self.kind {
            Kind::Leaf(points) => out.extend(points.iter().filter(|p| (*p - q).norm_squared() <= r_sq)),
            Kind::Branch(children) => children.iter().flatten().for_each(|c| c.radius(q, r_sq, out)),
        }
    }

    fn any_within(&self, q: &Vec3, r_sq: f64) -> bool {
        if cube_dist_sq(&self.center, self.half, q) > r_sq {
            return false;
        }
        match &self.kind {
            Kind::Leaf(points) => points.iter().any(|p| (p - q).norm_squared() <= r_sq),
            Kind::Branch(children) => {
                // Nearest octant first: it is the likeliest hit.
                let first = octant(&self.center, q);
                if let Some(c) = &children[first] {
                    if c.any_within(q, r_sq) {
                        return true;
                    }
                }
                children
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != first)
                    .any(|(_, c)| c.as_ref().is_some_and(|c| c.any_within(q, r_sq)))
            }
        }
    }

    fn check(&self, cfg: &OctreeConfig, is_root: bool) -> Result<usize, String> {
        match &self.kind {
            Kind::Leaf(points) => {
                if points.len() != self.count {
                    return Err(format!("leaf count {} != {} points", self.count, points.len()));
                }
                if let Some(p) = points.iter().find(|p| !self.contains(p)) {
                    return Err(format!("point {p:?} outside its leaf"));
                }
                if self.count == 0 && !is_root {
                    return Err("empty non-root leaf".into());
                }
                Ok(self.count)
            }
            Kind::Branch(children) => {
                let mut total = 0;
                for (oct, child) in children.iter().enumerate() {
                    let Some(child) = child else { continue };
                    let expect = child_center(&self.center, self.half, oct);
                    if (child.center - expect).norm() > 1e-9 * self.half.max(1.0) || child.half != self.half * 0.5 {
                        return Err("child cube misplaced".into());
                    }
                    total += child.check(cfg, false)?;
                }
                if total != self.count {
                    return Err(format!("branch count {} != subtree total {}", self.count, total));
                }
                if total == 0 {
                    return Err("empty branch".into());
                }
                Ok(total)
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    dist_sq: f64,
    point: Vec3,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.dist_sq == other.dist_sq
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
        self.dist_sq.total_cmp(&other.dist_sq)
    }
}

/// Min-heap entry for best-first traversal.
struct Pending<'a> {
    dist_sq: f64,
    node: &'a Node,
}

impl PartialEq for Pending<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.dist_sq == other.dist_sq
    }
}
impl Eq for Pending<'_> {}
impl PartialOrd for Pending<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist_sq.total_cmp(&self.dist_sq)
    }
}

/// The dynamic point set backing the local map.
///
/// Single writer; concurrent readers are fine between writes since all
/// queries take `&self`.
#[derive(Clone, Debug)]
pub struct PointStore {
    root: Node,
    config: OctreeConfig,
}

impl PointStore {
    pub fn new(config: OctreeConfig) -> Self {
        let b = config.initial_bounds;
        let half = b.half_extent.max();
        Self {
            root: Node::leaf(b.center, half),
            config,
        }
    }

    pub fn config(&self) -> &OctreeConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.root.count
    }

    pub fn is_empty(&self) -> bool {
        self.root.count == 0
    }

    /// Current root cube.
    pub fn root_bounds(&self) -> Aabb {
        self.root.cube()
    }

    /// Number of allocated tree nodes, root included.
    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// True when the tree consists of a single leaf (no children).
    pub fn root_is_leaf(&self) -> bool {
        matches!(self.root.kind, Kind::Leaf(_))
    }

    pub fn insert(&mut self, p: Vec3) -> InsertOutcome {
        if !is_finite(&p) {
            return InsertOutcome::RejectedNonFinite;
        }
        while !self.root.contains(&p) {
            self.grow_toward(&p);
        }
        self.root.insert(p, &self.config)
    }

    fn grow_toward(&mut self, p: &Vec3) {
        let c = self.root.center;
        let h = self.root.half;
        let step = |i: usize| if p[i] >= c[i] { h } else { -h };
        let center = Vec3::new(c.x + step(0), c.y + step(1), c.z + step(2));
        let half = 2.0 * h;
        if self.root.count == 0 {
            self.root = Node::leaf(center, half);
            return;
        }
        let old = std::mem::replace(&mut self.root, Node::leaf(center, half));
        let mut children = empty_children();
        let count = old.count;
        let slot = octant(&center, &old.center);
        children[slot] = Some(old);
        self.root = Node {
            center,
            half,
            count,
            kind: Kind::Branch(children),
        };
    }

    /// Removes the point bit-equal to `p`, pruning emptied nodes.
    pub fn remove(&mut self, p: &Vec3) -> bool {
        if !self.root.contains(p) {
            return false;
        }
        let hit = self.root.remove(p);
        if hit && self.root.count == 0 {
            self.reset_root();
        }
        hit
    }

    fn reset_root(&mut self) {
        self.root = Node::leaf(self.root.center, self.root.half);
    }

    /// Drops every point outside `keep`. Whole subtrees outside are
    /// released without visiting their points.
    pub fn box_remove(&mut self, keep: &Aabb) -> usize {
        if keep.disjoint(&self.root.cube()) {
            let n = self.root.count;
            self.reset_root();
            return n;
        }
        let n = self.root.retain_in(keep);
        if self.root.count == 0 {
            self.reset_root();
        }
        n
    }

    /// Exact k nearest neighbours sorted by ascending distance.
    pub fn knn(&self, q: &Vec3, k: usize) -> Vec<(Vec3, f64)> {
        self.knn_bounded(q, k, f64::INFINITY)
    }

    fn knn_bounded(&self, q: &Vec3, k: usize, max_dist_sq: f64) -> Vec<(Vec3, f64)> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let mut best: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let mut frontier = BinaryHeap::new();
        frontier.push(Pending {
            dist_sq: cube_dist_sq(&self.root.center, self.root.half, q),
            node: &self.root,
        });
        let bound = |best: &BinaryHeap<Candidate>| {
            if best.len() == k {
                best.peek().map_or(max_dist_sq, |c| c.dist_sq.min(max_dist_sq))
            } else {
                max_dist_sq
            }
        };
        while let Some(Pending { dist_sq, node }) = frontier.pop() {
            if dist_sq > bound(&best) {
                break;
            }
            match &node.kind {
                Kind::Leaf(points) => {
                    for p in points {
                        let d = (p - q).norm_squared();
                        if d > max_dist_sq {
                            continue;
                        }
                        if best.len() < k {
                            best.push(Candidate { dist_sq: d, point: *p });
                        } else if d < best.peek().unwrap().dist_sq {
                            best.pop();
                            best.push(Candidate { dist_sq: d, point: *p });
                        }
                    }
                }
                Kind::Branch(children) => {
                    let limit = bound(&best);
                    for child in children.iter().flatten() {
                        let d = cube_dist_sq(&child.center, child.half, q);
                        if d <= limit {
                            frontier.push(Pending { dist_sq: d, node: child });
                        }
                    }
                }
            }
        }
        let mut out: Vec<_> = best.into_vec();
        out.sort_by(|a, b| a.dist_sq.total_cmp(&b.dist_sq));
        out.into_iter().map(|c| (c.point, c.dist_sq.sqrt())).collect()
    }

    /// Nearest stored point, if any.
    pub fn nearest(&self, q: &Vec3) -> Option<(Vec3, f64)> {
        self.knn(q, 1).into_iter().next()
    }

    /// Nearest stored point no farther than `max_dist`.
    pub fn nearest_within(&self, q: &Vec3, max_dist: f64) -> Option<(Vec3, f64)> {
        self.knn_bounded(q, 1, max_dist * max_dist).into_iter().next()
    }

    /// All stored points with distance `<= r` from `q`.
    pub fn radius_search(&self, q: &Vec3, r: f64) -> Vec<Vec3> {
        let mut out = Vec::new();
        if r >= 0.0 && !self.is_empty() {
            self.root.radius(q, r * r, &mut out);
        }
        out
    }

    /// Equivalent to `!radius_search(q, r).is_empty()` but stops at the
    /// first hit.
    pub fn any_within(&self, q: &Vec3, r: f64) -> bool {
        r >= 0.0 && !self.is_empty() && self.root.any_within(q, r * r)
    }

    pub fn points(&self) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(self.len());
        self.root.collect(&mut out);
        out
    }

    /// Recomputes every structural invariant: subtree counts, point
    /// containment, child placement and pruning.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.root.check(&self.config, true).map(|_| ())
    }
}
