//! Obstacle-aware topological path search.
//!
//! Starting from the start position the searcher repeatedly asks whether a
//! node sees the goal. When the line of sight is blocked, the blocking
//! obstacle is identified by flood-filling map points around the hit, and
//! child nodes are sought on the plane through the hit point perpendicular
//! to the view direction, one per sampled polar angle. A node blocked by
//! the same obstacle as its parent only continues in the direction it was
//! created with, which keeps the expansion from circling one obstacle.
//! Nodes that see the goal terminate a path; walking back to the start
//! yields one path per terminal node.

use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_key, Vec3};
use crate::map::LocalMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopoConfig {
    /// Angle samples per visual plane.
    pub angle_samples: usize,
    /// Maximum radial search range on a visual plane (m).
    pub l_max: f64,
    /// Sampling step along line-of-sight checks (m).
    pub visibility_step: f64,
    /// Radial step on the visual plane (m).
    pub radial_step: f64,
    /// Neighbour radius for obstacle flood fill (m).
    pub growth_radius: f64,
    /// Node budget, root included.
    pub max_nodes: usize,
    /// Number of shortest paths returned.
    pub max_paths: usize,
    /// Optional altitude band `[z_min, z_max]`; candidates outside it are
    /// never created.
    pub height_limits: Option<[f64; 2]>,
}

impl Default for TopoConfig {
    fn default() -> Self {
        Self {
            angle_samples: 4,
            l_max: 5.0,
            visibility_step: 0.1,
            radial_step: 0.1,
            growth_radius: 0.3,
            max_nodes: 512,
            max_paths: 10,
            height_limits: None,
        }
    }
}

impl TopoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.angle_samples < 2 {
            return bad("angle_samples must be at least 2".into());
        }
        for (name, v) in [
            ("l_max", self.l_max),
            ("visibility_step", self.visibility_step),
            ("radial_step", self.radial_step),
            ("growth_radius", self.growth_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.max_nodes == 0 || self.max_paths == 0 {
            return bad("max_nodes and max_paths must be at least 1".into());
        }
        if let Some([lo, hi]) = self.height_limits {
            if !(lo < hi) {
                return bad(format!("height_limits must satisfy z_min < z_max, got [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    fn in_band(&self, p: &Vec3) -> bool {
        self.height_limits.is_none_or(|[lo, hi]| p.z >= lo && p.z <= hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Visibility {
    Visible,
    /// `sample` is the first blocked point on the segment, `obstacle` a map
    /// point within the occupancy radius of it.
    Occluded { sample: Vec3, obstacle: Vec3 },
}

impl Visibility {
    pub fn is_visible(&self) -> bool {
        matches!(self, Visibility::Visible)
    }
}

/// Samples `a + α(b − a)` every `step` meters for `α ∈ (0, 1)` and reports
/// the first occupied sample.
///
/// Samples whose clearance is already implied by an earlier nearest-point
/// distance are skipped; the result is identical to testing every sample.
pub fn check_visibility(map: &LocalMap, a: &Vec3, b: &Vec3, step: f64) -> Visibility {
    let delta = b - a;
    let len = delta.norm();
    if len == 0.0 || map.is_empty() {
        return Visibility::Visible;
    }
    let dir = delta / len;
    let r = map.config().filter_resolution;
    let store = map.store();
    let mut lookahead = 1.0_f64;
    let mut s: u64 = 1;
    loop {
        let t = s as f64 * step;
        if t >= len {
            return Visibility::Visible;
        }
        let x = a + dir * t;
        let advance = match store.nearest_within(&x, r + lookahead) {
            Some((p, d)) if d <= r => {
                return Visibility::Occluded { sample: x, obstacle: p };
            }
            Some((_, d)) => {
                lookahead = 1.0;
                ((d - r) / step).ceil()
            }
            None => {
                let jump = (lookahead / step).ceil();
                lookahead = (lookahead * 2.0).min(16.0);
                jump
            }
        };
        s += (advance as u64).max(1);
    }
}

/// Obstacle labels assigned during one search, in encounter order.
#[derive(Clone, Debug, Default)]
pub struct ObstacleRegistry {
    labels: HashMap<[u64; 3], u32>,
    clusters: Vec<Vec<Vec3>>,
}

impl ObstacleRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn label_of(&self, p: &Vec3) -> Option<u32> {
        self.labels.get(&point_key(p)).copied()
    }

    pub fn cluster(&self, label: u32) -> Option<&[Vec3]> {
        self.clusters.get(label.checked_sub(1)? as usize).map(Vec::as_slice)
    }

    /// Number of labels handed out so far.
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

/// Flood-fills map points connected to `seed` within `growth_radius` and
/// labels them. A seed already labeled returns its existing cluster.
pub fn region_growth(map: &LocalMap, seed: &Vec3, growth_radius: f64, registry: &mut ObstacleRegistry) -> Result<(u32, Vec<Vec3>)> {
    let r = map.config().filter_resolution;
    let (start, _) = map.store().nearest_within(seed, r).ok_or(Error::SeedNotOccupied)?;
    if let Some(label) = registry.label_of(&start) {
        return Ok((label, registry.cluster(label).unwrap_or_default().to_vec()));
    }
    let label = registry.clusters.len() as u32 + 1;
    let mut cluster = vec![start];
    registry.labels.insert(point_key(&start), label);
    let mut head = 0;
    while head < cluster.len() {
        let p = cluster[head];
        head += 1;
        for q in map.store().radius_search(&p, growth_radius) {
            if let std::collections::hash_map::Entry::Vacant(slot) = registry.labels.entry(point_key(&q)) {
                slot.insert(label);
                cluster.push(q);
            }
        }
    }
    registry.clusters.push(cluster.clone());
    Ok((label, cluster))
}

/// Plane through the occlusion point, perpendicular to the node-to-target
/// direction, with a deterministic polar frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisualPlane {
    pub origin: Vec3,
    pub normal: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
}

impl VisualPlane {
    /// Polar-to-world map `ρ(θ, l) = origin + l(cos θ·u + sin θ·v)`.
    pub fn point(&self, theta: f64, l: f64) -> Vec3 {
        self.origin + (self.u_axis * theta.cos() + self.v_axis * theta.sin()) * l
    }
}

/// `u = normal × z` (or `normal × x` when the view is vertical), `v = normal × u`.
pub fn visual_plane(node: &Vec3, occlusion: &Vec3, target: &Vec3) -> VisualPlane {
    let normal = (target - node).normalize();
    let mut u = normal.cross(&Vec3::z());
    if u.norm() < 1e-6 {
        u = normal.cross(&Vec3::x());
    }
    let u_axis = u.normalize();
    let v_axis = normal.cross(&u_axis).normalize();
    VisualPlane {
        origin: *occlusion,
        normal,
        u_axis,
        v_axis,
    }
}

/// Angle of sample `k` out of `samples`.
pub fn sample_angle(k: usize, samples: usize) -> f64 {
    2.0 * PI * k as f64 / samples as f64
}

/// Walks outward along angle `theta` in steps of `radial_step` and returns
/// the first free point that `from` can see, stopping before `l_max`.
pub fn search_child_on_angle(map: &LocalMap, plane: &VisualPlane, theta: f64, from: &Vec3, config: &TopoConfig) -> Option<Vec3> {
    let mut m = 1u32;
    loop {
        let l = m as f64 * config.radial_step;
        if l >= config.l_max {
            return None;
        }
        m += 1;
        let candidate = plane.point(theta, l);
        if !config.in_band(&candidate) {
            return None;
        }
        if map.is_occupied(&candidate) {
            continue;
        }
        if check_visibility(map, from, &candidate, config.visibility_step).is_visible() {
            return Some(candidate);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopoNode {
    pub position: Vec3,
    pub parent: Option<usize>,
    /// Label of the obstacle blocking this node's view of the goal.
    pub occluder_label: Option<u32>,
    /// Angle index this node was created with.
    pub sampled_angle_index: Option<usize>,
    pub children: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopoPath {
    pub nodes: Vec<Vec3>,
    pub length: f64,
}

impl TopoPath {
    pub fn new(nodes: Vec<Vec3>) -> Self {
        let length = nodes.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        Self { nodes, length }
    }

    pub fn straight(start: Vec3, goal: Vec3) -> Self {
        Self::new(vec![start, goal])
    }

    /// The prefix of the path up to arc length `s` (the whole path when
    /// `s` exceeds its length).
    pub fn truncated(&self, s: f64) -> Self {
        if s >= self.length {
            return self.clone();
        }
        let mut out = vec![self.nodes[0]];
        let mut walked = 0.0;
        for w in self.nodes.windows(2) {
            let seg = (w[1] - w[0]).norm();
            if walked + seg >= s {
                let f = if seg > 0.0 { (s - walked) / seg } else { 0.0 };
                out.push(w[0] + (w[1] - w[0]) * f);
                break;
            }
            walked += seg;
            out.push(w[1]);
        }
        Self::new(out)
    }
}

/// The full search tree, for inspection and testing.
#[derive(Clone, Debug)]
pub struct TopoGraph {
    pub nodes: Vec<TopoNode>,
    /// Nodes that see the goal directly.
    pub terminals: Vec<usize>,
    pub registry: ObstacleRegistry,
    pub goal: Vec3,
}

impl TopoGraph {
    fn path_to(&self, terminal: usize) -> TopoPath {
        let mut seq = vec![self.goal];
        let mut cur = Some(terminal);
        while let Some(i) = cur {
            seq.push(self.nodes[i].position);
            cur = self.nodes[i].parent;
        }
        seq.reverse();
        TopoPath::new(seq)
    }

    /// Distinct start-to-goal paths sorted by ascending length (ties keep
    /// discovery order), at most `limit` of them.
    pub fn paths(&self, limit: usize) -> Vec<TopoPath> {
        let mut seen = HashSet::new();
        let mut out: Vec<TopoPath> = Vec::new();
        for &t in &self.terminals {
            let path = self.path_to(t);
            let key: Vec<[u64; 3]> = path.nodes.iter().map(point_key).collect();
            if seen.insert(key) {
                out.push(path);
            }
        }
        out.sort_by(|a, b| a.length.total_cmp(&b.length));
        out.truncate(limit);
        out
    }
}

/// Builds the obstacle-aware search tree from `start` toward `goal`.
pub fn build_topo_graph(map: &LocalMap, start: &Vec3, goal: &Vec3, config: &TopoConfig) -> Result<TopoGraph> {
    config.validate()?;
    if map.is_occupied(start) || map.is_occupied(goal) {
        return Err(Error::EndpointInCollision);
    }
    let merge_radius = map.config().filter_resolution;
    let mut graph = TopoGraph {
        nodes: vec![TopoNode {
            position: *start,
            parent: None,
            occluder_label: None,
            sampled_angle_index: None,
            children: Vec::new(),
        }],
        terminals: Vec::new(),
        registry: ObstacleRegistry::new(),
        goal: *goal,
    };
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let here = graph.nodes[i].position;
        let (sample, obstacle) = match check_visibility(map, &here, goal, config.visibility_step) {
            Visibility::Visible => {
                graph.terminals.push(i);
                continue;
            }
            Visibility::Occluded { sample, obstacle } => (sample, obstacle),
        };
        let (label, _) = region_growth(map, &obstacle, config.growth_radius, &mut graph.registry)?;
        graph.nodes[i].occluder_label = Some(label);
        if graph.nodes.len() >= config.max_nodes {
            // Budget spent: keep draining the queue for goal connections only.
            continue;
        }
        let parent_label = graph.nodes[i].parent.and_then(|p| graph.nodes[p].occluder_label);
        let angles: Vec<usize> = match graph.nodes[i].sampled_angle_index {
            Some(k) if parent_label == Some(label) => vec![k],
            _ => (1..=config.angle_samples).collect(),
        };
        let plane = visual_plane(&here, &sample, goal);
        for k in angles {
            if graph.nodes.len() >= config.max_nodes {
                break;
            }
            let theta = sample_angle(k, config.angle_samples);
            let Some(candidate) = search_child_on_angle(map, &plane, theta, &here, config) else {
                continue;
            };
            let duplicate = graph.nodes.iter().any(|n| {
                (n.position - candidate).norm() <= merge_radius
                    && n.parent.and_then(|p| graph.nodes[p].occluder_label) == Some(label)
            });
            if duplicate {
                continue;
            }
            let child = graph.nodes.len();
            graph.nodes.push(TopoNode {
                position: candidate,
                parent: Some(i),
                occluder_label: None,
                sampled_angle_index: Some(k),
                children: Vec::new(),
            });
            graph.nodes[i].children.push(child);
            queue.push_back(child);
        }
    }
    Ok(graph)
}

/// Distinct start-to-goal paths, shortest first, capped at
/// `config.max_paths`. An empty result means no connection was found.
pub fn topo_search(map: &LocalMap, start: &Vec3, goal: &Vec3, config: &TopoConfig) -> Result<Vec<TopoPath>> {
    Ok(build_topo_graph(map, start, goal, config)?.paths(config.max_paths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MapConfig;
    use approx::assert_relative_eq;

    fn map_with(points: &[Vec3]) -> LocalMap {
        let cfg = MapConfig {
            map_size: Vec3::new(30.0, 30.0, 10.0),
            max_points_per_min_leaf: 8,
            ..MapConfig::default()
        };
        let mut m = LocalMap::new(cfg, Vec3::zeros()).unwrap();
        m.insert_points(points);
        m
    }

    #[test]
    fn visibility_in_empty_map() {
        let m = map_with(&[]);
        assert!(check_visibility(&m, &Vec3::zeros(), &Vec3::new(5.0, 1.0, 0.0), 0.1).is_visible());
    }

    #[test]
    fn visibility_blocked_midway() {
        let m = map_with(&[Vec3::new(2.5, 0.05, 0.0)]);
        match check_visibility(&m, &Vec3::zeros(), &Vec3::new(5.0, 0.0, 0.0), 0.1) {
            Visibility::Occluded { sample, obstacle } => {
                assert!((sample - Vec3::new(2.5, 0.0, 0.0)).norm() <= 0.1 + 1e-9);
                assert_eq!(obstacle, Vec3::new(2.5, 0.05, 0.0));
            }
            Visibility::Visible => panic!("expected occlusion"),
        }
    }

    #[test]
    fn visibility_lateral_offset() {
        // Point 0.2 m from the segment, twice the occupancy radius.
        let m = map_with(&[Vec3::new(2.5, 0.2, 0.0)]);
        assert!(check_visibility(&m, &Vec3::zeros(), &Vec3::new(5.0, 0.0, 0.0), 0.1).is_visible());
    }

    #[test]
    fn region_growth_connectivity() {
        let m = map_with(&[Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.1, 0.0, 0.0)]);
        let mut reg = ObstacleRegistry::new();
        let (label, cluster) = region_growth(&m, &Vec3::zeros(), 0.15, &mut reg).unwrap();
        assert_eq!(label, 1);
        assert_eq!(cluster.len(), 2);
        // Re-querying any cluster member returns the same label.
        let (again, c2) = region_growth(&m, &Vec3::new(0.1, 0.0, 0.0), 0.15, &mut reg).unwrap();
        assert_eq!(again, 1);
        assert_eq!(c2.len(), 2);

        let m = map_with(&[Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)]);
        let mut reg = ObstacleRegistry::new();
        let (_, cluster) = region_growth(&m, &Vec3::zeros(), 0.15, &mut reg).unwrap();
        assert_eq!(cluster, vec![Vec3::zeros()]);
        assert!(matches!(
            region_growth(&m, &Vec3::new(5.0, 0.0, 0.0), 0.15, &mut reg),
            Err(Error::SeedNotOccupied)
        ));
    }

    #[test]
    fn plane_axis_aligned() {
        let p = visual_plane(&Vec3::zeros(), &Vec3::new(1.0, 0.0, 0.0), &Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(p.normal, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(p.origin, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(p.point(1.3, 0.0), p.origin);
        let d = p.point(0.0, 1.0) - p.origin;
        assert_relative_eq!(d.norm(), 1.0, epsilon = 1e-12);
        assert!(d.dot(&p.normal).abs() < 1e-12);
        assert!(p.u_axis.dot(&p.v_axis).abs() < 1e-12);
    }

    #[test]
    fn plane_vertical_view_uses_x() {
        let p = visual_plane(&Vec3::zeros(), &Vec3::new(0.0, 0.0, 1.0), &Vec3::new(0.0, 0.0, 3.0));
        assert_relative_eq!(p.u_axis.norm(), 1.0, epsilon = 1e-12);
        assert!(p.u_axis.dot(&p.normal).abs() < 1e-12);
    }

    #[test]
    fn child_in_free_space_is_first_step() {
        let m = map_with(&[]);
        let plane = visual_plane(&Vec3::zeros(), &Vec3::new(2.0, 0.0, 0.0), &Vec3::new(4.0, 0.0, 0.0));
        let c = search_child_on_angle(&m, &plane, 0.0, &Vec3::zeros(), &TopoConfig::default()).unwrap();
        assert_relative_eq!((c - plane.origin).norm(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn child_blocked_by_thick_wall() {
        // Wall in the plane x=2 spanning y in [-6, 6], z in [-1, 1].
        let mut pts = Vec::new();
        for iy in -60..=60 {
            for iz in -10..=10 {
                pts.push(Vec3::new(2.05, iy as f64 * 0.1 + 0.05, iz as f64 * 0.1 + 0.05));
            }
        }
        let m = map_with(&pts);
        let plane = visual_plane(&Vec3::zeros(), &Vec3::new(2.05, 0.0, 0.0), &Vec3::new(4.0, 0.0, 0.0));
        let cfg = TopoConfig::default();
        // u = (0,-1,0): sliding along the wall for l < 5 m stays inside it.
        assert!(search_child_on_angle(&m, &plane, 0.0, &Vec3::zeros(), &cfg).is_none());
        // Vertically the wall ends at |z| ~ 1.05.
        let up = search_child_on_angle(&m, &plane, 0.5 * PI, &Vec3::zeros(), &cfg);
        assert!(up.is_some());
    }

    #[test]
    fn empty_map_gives_straight_path() {
        let m = map_with(&[]);
        let paths = topo_search(&m, &Vec3::zeros(), &Vec3::new(10.0, 0.0, 0.0), &TopoConfig::default()).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].nodes, vec![Vec3::zeros(), Vec3::new(10.0, 0.0, 0.0)]);
        assert_relative_eq!(paths[0].length, 10.0);
    }

    #[test]
    fn truncation() {
        let p = TopoPath::new(vec![Vec3::zeros(), Vec3::new(3.0, 0.0, 0.0), Vec3::new(3.0, 4.0, 0.0)]);
        let t = p.truncated(5.0);
        assert_eq!(t.nodes, vec![Vec3::zeros(), Vec3::new(3.0, 0.0, 0.0), Vec3::new(3.0, 2.0, 0.0)]);
        assert_relative_eq!(t.length, 5.0);
        assert_eq!(p.truncated(10.0), p);
    }

    #[test]
    fn endpoint_in_collision() {
        let m = map_with(&[Vec3::new(10.0, 0.0, 0.0)]);
        assert!(matches!(
            topo_search(&m, &Vec3::zeros(), &Vec3::new(10.0, 0.0, 0.0), &TopoConfig::default()),
            Err(Error::EndpointInCollision)
        ));
    }
}
