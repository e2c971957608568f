//! Incremental robocentric point-cloud map.
//!
//! The map keeps voxel-filtered lidar points inside a box that moves with
//! the robot. Each ingest slides the box, releases points that new rays
//! passed through (a depth-image comparison instead of per-voxel ray
//! traversal), then inserts the new scan. Distance and gradient queries are
//! answered directly from nearest-neighbour searches, so there is no
//! distance grid to rebuild.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_key, Aabb, PolarPixel, RigidTransform, Vec3};
use crate::octree::{InsertOutcome, OctreeConfig, PointStore, DEFAULT_LEAF_CAPACITY};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// Full side lengths of the local map box (m).
    pub map_size: Vec3,
    /// Voxel filter resolution, also the occupancy radius (m).
    pub filter_resolution: f64,
    /// Depth-image angular resolution (rad).
    pub angular_resolution: f64,
    /// Octree minimum cell side (m).
    pub min_extent: f64,
    /// Points per minimum cell before insertions are refused.
    pub max_points_per_min_leaf: usize,
    pub leaf_capacity: usize,
    /// A map point is released when it lies this much in front of the new
    /// measured surface along its ray (m).
    pub raycast_epsilon: f64,
    /// Finite-difference offset for distance gradients (m).
    pub gradient_offset: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            map_size: Vec3::new(15.0, 15.0, 6.0),
            filter_resolution: 0.1,
            angular_resolution: 2.0_f64.to_radians(),
            min_extent: 0.2,
            max_points_per_min_leaf: 4,
            leaf_capacity: DEFAULT_LEAF_CAPACITY,
            raycast_epsilon: 0.1,
            gradient_offset: 1e-5,
        }
    }
}

impl MapConfig {
    /// Same settings with a different filter resolution; the raycast band
    /// follows the resolution.
    pub fn with_resolution(mut self, r: f64) -> Self {
        self.filter_resolution = r;
        self.raycast_epsilon = r;
        self.min_extent = 2.0 * r;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.map_size.iter().any(|v| !(*v > 0.0)) {
            return bad(format!("map_size must be positive, got {:?}", self.map_size));
        }
        for (name, v) in [
            ("filter_resolution", self.filter_resolution),
            ("angular_resolution", self.angular_resolution),
            ("min_extent", self.min_extent),
            ("raycast_epsilon", self.raycast_epsilon),
            ("gradient_offset", self.gradient_offset),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.gradient_offset >= 0.1 * self.filter_resolution {
            return bad("gradient_offset must be much smaller than filter_resolution".into());
        }
        if self.max_points_per_min_leaf == 0 || self.leaf_capacity == 0 {
            return bad("octree capacities must be at least 1".into());
        }
        Ok(())
    }
}

/// Snaps each point to the center of its `r`-voxel and removes duplicates.
/// Output is sorted lexicographically by coordinates.
pub fn voxel_filter(points: &[Vec3], r: f64) -> Vec<Vec3> {
    let mut seen = BTreeSet::new();
    for p in points {
        let s = p.map(|v| ((v / r).floor() + 0.5) * r);
        if s.iter().all(|v| v.is_finite()) {
            seen.insert(OrderedPoint(s));
        }
    }
    seen.into_iter().map(|p| p.0).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct OrderedPoint(Vec3);
impl Eq for OrderedPoint {}
impl PartialOrd for OrderedPoint {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrderedPoint {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .x
            .total_cmp(&other.0.x)
            .then(self.0.y.total_cmp(&other.0.y))
            .then(self.0.z.total_cmp(&other.0.z))
    }
}

/// Spherical depth image: azimuth over `[-π, π)` by rows, elevation over
/// `[-π/2, π/2)` by columns, each pixel holding the minimum range.
#[derive(Clone, Debug)]
pub struct DepthImage {
    rows: usize,
    cols: usize,
    delta: f64,
    pixels: Vec<f64>,
}

impl DepthImage {
    pub fn new(delta: f64) -> Self {
        let rows = (2.0 * PI / delta).ceil() as usize;
        let cols = (PI / delta).ceil() as usize;
        Self {
            rows,
            cols,
            delta,
            pixels: vec![f64::INFINITY; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Pixel indices for a sensor-frame point.
    pub fn pixel_of(&self, o: &Vec3) -> (usize, usize) {
        let az = o.y.atan2(o.x);
        let el = o.z.atan2(o.x.hypot(o.y));
        let i = (((az + PI) / self.delta).floor() as usize).min(self.rows - 1);
        let j = (((el + FRAC_PI_2) / self.delta).floor() as usize).min(self.cols - 1);
        (i, j)
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let v = self.pixels[i * self.cols + j];
        v.is_finite().then_some(v)
    }

    pub fn pixel(&self, i: usize, j: usize) -> PolarPixel {
        PolarPixel {
            i,
            j,
            depth: self.get(i, j),
        }
    }

    fn update(&mut self, i: usize, j: usize, depth: f64) {
        let slot = &mut self.pixels[i * self.cols + j];
        if depth < *slot {
            *slot = depth;
        }
    }

    /// Non-empty pixels in row-major order.
    pub fn filled(&self) -> impl Iterator<Item = PolarPixel> + '_ {
        self.pixels.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(k, v)| PolarPixel {
            i: k / self.cols,
            j: k % self.cols,
            depth: Some(*v),
        })
    }

    pub fn max_depth(&self) -> f64 {
        self.pixels.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max)
    }
}

/// Bins sensor-frame points into a depth image at resolution `delta`.
/// Points closer than 1e-6 m to the origin are skipped.
pub fn project_to_depth_image(points_sensor_frame: &[Vec3], delta: f64) -> DepthImage {
    let mut img = DepthImage::new(delta);
    for o in points_sensor_frame {
        let range = o.norm();
        if range > 1e-6 {
            let (i, j) = img.pixel_of(o);
            img.update(i, j, range);
        }
    }
    img
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Occupancy {
    Occupied,
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OccupancyQuery {
    pub state: Occupancy,
    /// The query point lies outside the local map box.
    pub outside_bounds: bool,
}

impl OccupancyQuery {
    pub fn is_occupied(&self) -> bool {
        self.state == Occupancy::Occupied
    }
}

/// Distance to the nearest map point and the negative distance gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceQuery {
    pub distance: f64,
    pub gradient: Vec3,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub removed_slide: usize,
    pub removed_raycast: usize,
    pub inserted: usize,
    pub rejected: usize,
}

/// Snapshot record for map statistics export.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapStats {
    pub schema_version: u32,
    pub points: usize,
    pub nodes: usize,
    pub bounds: [f64; 6],
    pub ingest_ms: f64,
}

#[derive(Clone, Debug)]
pub struct LocalMap {
    center: Vec3,
    bounds: Aabb,
    store: PointStore,
    config: MapConfig,
    last_ingest_ms: f64,
}

impl LocalMap {
    pub fn new(config: MapConfig, center: Vec3) -> Result<Self> {
        config.validate()?;
        let bounds = Aabb::from_size(center, config.map_size)
            .ok_or_else(|| Error::InvalidConfig("bad map size".into()))?;
        let mut octree = OctreeConfig::new(config.min_extent, config.max_points_per_min_leaf, bounds);
        octree.leaf_capacity = config.leaf_capacity;
        Ok(Self {
            center,
            bounds,
            store: PointStore::new(octree),
            config,
            last_ingest_ms: 0.0,
        })
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    pub fn store(&self) -> &PointStore {
        &self.store
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn points(&self) -> Vec<Vec3> {
        self.store.points()
    }

    /// Inserts points directly, skipping filtering and raycasting. Points
    /// outside the map box are ignored. Returns the number inserted.
    pub fn insert_points(&mut self, points: &[Vec3]) -> usize {
        points
            .iter()
            .filter(|p| self.bounds.contains(p))
            .filter(|p| self.store.insert(**p) == InsertOutcome::Inserted)
            .count()
    }

    /// Recenters the map box and drops everything that left it.
    pub fn slide(&mut self, new_center: Vec3) -> usize {
        self.center = new_center;
        self.bounds.center = new_center;
        self.store.box_remove(&self.bounds)
    }

    /// Releases map points that a ray of the new scan passed through.
    ///
    /// A map point is deleted when its range along its pixel's ray is more
    /// than `raycast_epsilon` short of the scan's minimum range in that
    /// pixel. Pixels without a scan return are left alone.
    pub fn raycast_update(&mut self, scan_world: &[Vec3], sensor_pose: &RigidTransform) -> usize {
        let to_sensor = sensor_pose.inverse();
        let scan: Vec<Vec3> = scan_world.iter().map(|p| to_sensor.transform_point(p)).collect();
        let image = project_to_depth_image(&scan, self.config.angular_resolution);
        let horizon = image.max_depth();
        if horizon <= 0.0 {
            return 0;
        }
        let eps = self.config.raycast_epsilon;
        let doomed: Vec<Vec3> = self
            .store
            .points()
            .into_iter()
            .filter(|p| {
                let o = to_sensor.transform_point(p);
                let range = o.norm();
                if range <= 1e-6 || range - horizon >= -eps {
                    return false;
                }
                let (i, j) = image.pixel_of(&o);
                image.get(i, j).is_some_and(|measured| range - measured < -eps)
            })
            .collect();
        for p in &doomed {
            self.store.remove(p);
        }
        doomed.len()
    }

    /// Full update for one scan: slide, filter, raycast, insert.
    pub fn ingest_scan(&mut self, raw_scan_world: &[Vec3], sensor_pose: &RigidTransform, robot_pos: Vec3) -> IngestStats {
        let started = Instant::now();
        let removed_slide = self.slide(robot_pos);
        let mut filtered = voxel_filter(raw_scan_world, self.config.filter_resolution);
        filtered.retain(|p| self.bounds.contains(p));
        let removed_raycast = self.raycast_update(&filtered, sensor_pose);
        let mut stats = IngestStats {
            removed_slide,
            removed_raycast,
            ..Default::default()
        };
        for p in filtered {
            match self.store.insert(p) {
                InsertOutcome::Inserted => stats.inserted += 1,
                _ => stats.rejected += 1,
            }
        }
        self.last_ingest_ms = started.elapsed().as_secs_f64() * 1e3;
        stats
    }

    /// Occupied iff a map point lies within `filter_resolution` of `x`.
    pub fn occupancy(&self, x: &Vec3) -> OccupancyQuery {
        let occupied = self.store.any_within(x, self.config.filter_resolution);
        OccupancyQuery {
            state: if occupied { Occupancy::Occupied } else { Occupancy::Free },
            outside_bounds: !self.bounds.contains(x),
        }
    }

    pub fn is_occupied(&self, x: &Vec3) -> bool {
        self.store.any_within(x, self.config.filter_resolution)
    }

    /// Distance to the nearest map point.
    pub fn distance(&self, x: &Vec3) -> Option<f64> {
        self.store.nearest(x).map(|(_, d)| d)
    }

    /// Distance and negative gradient at `x` from one nearest-neighbour
    /// query plus one per axis at `x + ε·axis`.
    pub fn resdf(&self, x: &Vec3) -> Result<DistanceQuery> {
        let (_, d) = self.store.nearest(x).ok_or(Error::NoObstacles)?;
        Ok(self.gradient_at(x, d))
    }

    /// Like [`LocalMap::resdf`] but returns `None` as soon as the distance
    /// is known to exceed `cutoff`; cheaper for penalty evaluation.
    pub fn resdf_within(&self, x: &Vec3, cutoff: f64) -> Option<DistanceQuery> {
        let (_, d) = self.store.nearest_within(x, cutoff)?;
        Some(self.gradient_at(x, d))
    }

    fn gradient_at(&self, x: &Vec3, d: f64) -> DistanceQuery {
        let eps = self.config.gradient_offset;
        let mut gradient = Vec3::zeros();
        for axis in 0..3 {
            let mut y = *x;
            y[axis] += eps;
            // The nearest point to x is at most d + eps from y.
            let dy = self
                .store
                .nearest_within(&y, d + 2.0 * eps)
                .map_or(d + eps, |(_, v)| v);
            gradient[axis] = (d - dy) / eps;
        }
        DistanceQuery { distance: d, gradient }
    }

    pub fn last_ingest_ms(&self) -> f64 {
        self.last_ingest_ms
    }

    pub fn stats(&self) -> MapStats {
        MapStats {
            schema_version: crate::SCHEMA_VERSION,
            points: self.store.len(),
            nodes: self.store.node_count(),
            bounds: self.bounds.to_array(),
            ingest_ms: self.last_ingest_ms,
        }
    }

    /// Sorted key set of the stored points, handy for comparing snapshots.
    pub fn point_keys(&self) -> BTreeSet<[u64; 3]> {
        self.store.points().iter().map(point_key).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn map_with(points: &[Vec3]) -> LocalMap {
        let mut m = LocalMap::new(MapConfig::default(), Vec3::zeros()).unwrap();
        m.insert_points(points);
        m
    }

    #[test]
    fn voxel_filter_floors_negatives() {
        // floor(2.6)=2 -> 0.25; floor(-1.3)=-2 -> -0.15; floor(10.4)=10 -> 1.05
        let out = voxel_filter(&[Vec3::new(0.26, -0.13, 1.04)], 0.1);
        assert_eq!(out.len(), 1);
        assert_relative_eq!(out[0], Vec3::new(0.25, -0.15, 1.05), epsilon = 1e-12);
        assert!(voxel_filter(&[], 0.1).is_empty());
        let two = voxel_filter(&[Vec3::new(0.51, 0.51, 0.51), Vec3::new(0.59, 0.52, 0.55)], 0.1);
        assert_eq!(two.len(), 1);
    }

    #[test]
    fn voxel_filter_is_idempotent() {
        let pts: Vec<Vec3> = (0..200)
            .map(|k| {
                let t = k as f64 * 0.731;
                Vec3::new(t.sin() * 7.3, (t * 1.7).cos() * -4.1, t * 0.05 - 3.0)
            })
            .collect();
        let once = voxel_filter(&pts, 0.1);
        assert_eq!(voxel_filter(&once, 0.1), once);
    }

    #[test]
    fn depth_image_single_and_min() {
        let img = project_to_depth_image(&[Vec3::new(1.0, 0.0, 0.0)], 0.02);
        let filled: Vec<_> = img.filled().collect();
        assert_eq!(filled.len(), 1);
        assert_eq!(filled[0].depth, Some(1.0));
        let img = project_to_depth_image(&[Vec3::new(2.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)], 0.02);
        let filled: Vec<_> = img.filled().collect();
        assert_eq!(filled.len(), 1);
        assert_eq!(filled[0].depth, Some(1.0));
        assert_eq!(img.rows(), (2.0 * PI / 0.02).ceil() as usize);
        assert_eq!(img.cols(), (PI / 0.02).ceil() as usize);
    }

    #[test]
    fn raycast_cases() {
        let pose = RigidTransform::identity();
        let mut m = map_with(&[Vec3::new(1.0, 0.0, 0.0)]);
        assert_eq!(m.raycast_update(&[Vec3::new(2.0, 0.0, 0.0)], &pose), 1);
        assert!(m.is_empty());

        let mut m = map_with(&[Vec3::new(2.0, 0.0, 0.0)]);
        assert_eq!(m.raycast_update(&[Vec3::new(1.0, 0.0, 0.0)], &pose), 0);
        assert_eq!(m.len(), 1);

        let mut m = map_with(&[Vec3::new(2.0, 0.0, 0.0)]);
        assert_eq!(m.raycast_update(&[Vec3::new(2.0, 0.0, 0.0)], &pose), 0);

        // No return along that ray: nothing released.
        let mut m = map_with(&[Vec3::new(1.0, 0.0, 0.0)]);
        assert_eq!(m.raycast_update(&[Vec3::new(0.0, 3.0, 0.0)], &pose), 0);
    }

    #[test]
    fn slide_counts() {
        let pts: Vec<Vec3> = (0..10).map(|k| Vec3::new(k as f64 - 4.5, 0.5, 0.5)).collect();
        let mut m = map_with(&pts);
        assert_eq!(m.slide(Vec3::zeros()), 0);
        assert_eq!(m.slide(Vec3::new(15.0, 0.0, 0.0)), 10);
        assert!(m.is_empty());
        assert_eq!(m.bounds().center, Vec3::new(15.0, 0.0, 0.0));
    }

    #[test]
    fn occupancy_cases() {
        let empty = map_with(&[]);
        assert!(!empty.occupancy(&Vec3::zeros()).is_occupied());
        let m = map_with(&[Vec3::new(1.0, 0.0, 0.0)]);
        assert!(m.occupancy(&Vec3::new(1.05, 0.0, 0.0)).is_occupied());
        assert!(!m.occupancy(&Vec3::new(1.2, 0.0, 0.0)).is_occupied());
        let far = m.occupancy(&Vec3::new(100.0, 0.0, 0.0));
        assert!(far.outside_bounds && !far.is_occupied());
    }

    #[test]
    fn resdf_single_point() {
        let empty = map_with(&[]);
        assert!(matches!(empty.resdf(&Vec3::zeros()), Err(Error::NoObstacles)));
        let m = map_with(&[Vec3::new(1.0, 0.0, 0.0)]);
        let q = m.resdf(&Vec3::zeros()).unwrap();
        assert_relative_eq!(q.distance, 1.0);
        // D(x) = |x - p|; -grad D at the origin is (1, 0, 0).
        assert_relative_eq!(q.gradient, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-4);
        assert_eq!(m.resdf(&Vec3::new(1.0, 0.0, 0.0)).unwrap().distance, 0.0);
        assert!(m.resdf_within(&Vec3::zeros(), 0.5).is_none());
        assert!(m.resdf_within(&Vec3::zeros(), 1.5).is_some());
    }

    #[test]
    fn ingest_bootstrap_and_idempotence() {
        let mut m = map_with(&[]);
        let scan: Vec<Vec3> = (0..50)
            .map(|k| Vec3::new(3.0, -2.5 + k as f64 * 0.1, 0.33))
            .chain([Vec3::new(40.0, 0.0, 0.0)])
            .collect();
        let pose = RigidTransform::identity();
        let first = m.ingest_scan(&scan, &pose, Vec3::zeros());
        let in_bounds = voxel_filter(&scan, 0.1).into_iter().filter(|p| m.bounds().contains(p)).count();
        assert_eq!(first.removed_slide, 0);
        assert_eq!(first.removed_raycast, 0);
        assert_eq!(first.inserted + first.rejected, in_bounds);
        assert!(first.inserted > 0);
        let keys = m.point_keys();
        let second = m.ingest_scan(&scan, &pose, Vec3::zeros());
        assert_eq!(second.inserted, 0);
        assert_eq!(second.removed_raycast, 0);
        assert_eq!(m.point_keys(), keys);
    }
}
