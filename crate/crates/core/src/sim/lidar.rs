use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::world::{Column, Ring, Shape, SimWorld};
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarModel {
    /// Horizontal field of view centered on the sensor x axis (rad).
    pub horizontal_fov: f64,
    /// Vertical field of view centered on the horizon (rad).
    pub vertical_fov: f64,
    pub max_range: f64,
    pub angular_step: f64,
    pub rate: f64,
    /// Standard deviation of additive range noise (m).
    pub noise_sigma: f64,
}

impl Default for LidarModel {
    fn default() -> Self {
        Self {
            horizontal_fov: TAU,
            vertical_fov: 59f64.to_radians(),
            max_range: 40.0,
            angular_step: 1f64.to_radians(),
            rate: 10.0,
            noise_sigma: 0.0,
        }
    }
}

impl LidarModel {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.horizontal_fov, self.vertical_fov, self.max_range, self.angular_step, self.rate];
        if vals.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig("lidar parameters must be positive".into()));
        }
        if self.vertical_fov > PI || self.horizontal_fov > TAU + 1e-12 {
            return Err(Error::InvalidConfig("lidar field of view too wide".into()));
        }
        Ok(())
    }

    fn azimuths(&self) -> Vec<f64> {
        let full = self.horizontal_fov >= TAU - 1e-9;
        let n = (self.horizontal_fov / self.angular_step).round().max(1.0) as usize;
        if full {
            (0..n).map(|i| -PI + i as f64 * TAU / n as f64).collect()
        } else {
            (0..=n).map(|i| -0.5 * self.horizontal_fov + i as f64 * self.horizontal_fov / n as f64).collect()
        }
    }

    fn elevations(&self) -> Vec<f64> {
        let n = (self.vertical_fov / self.angular_step).round().max(1.0) as usize;
        (0..=n).map(|j| -0.5 * self.vertical_fov + j as f64 * self.vertical_fov / n as f64).collect()
    }
}

/// Nearest positive hit of the ray `o + t·d` (`d` unit) on a capped column.
pub fn ray_column(o: &Vec3, d: &Vec3, c: &Column) -> Option<f64> {
    let (z0, z1) = (c.base_z, c.base_z + c.height);
    let fx = o.x - c.center_xy[0];
    let fy = o.y - c.center_xy[1];
    let r2 = c.radius * c.radius;
    let mut best = f64::INFINITY;
    let a = d.x * d.x + d.y * d.y;
    if a > 1e-15 {
        let b = 2.0 * (d.x * fx + d.y * fy);
        let cc = fx * fx + fy * fy - r2;
        let disc = b * b - 4.0 * a * cc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            // Numerically stable pair of roots.
            let qv = -0.5 * (b + b.signum() * sq);
            let (mut t0, mut t1) = (qv / a, if qv != 0.0 { cc / qv } else { qv / a });
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            for t in [t0, t1] {
                let z = o.z + t * d.z;
                if t > 0.0 && z >= z0 && z <= z1 {
                    best = best.min(t);
                    break;
                }
            }
        }
    }
    if d.z.abs() > 1e-15 {
        for zc in [z0, z1] {
            let t = (zc - o.z) / d.z;
            if t > 0.0 && t < best {
                let (x, y) = (fx + t * d.x, fy + t * d.y);
                if x * x + y * y <= r2 {
                    best = t;
                }
            }
        }
    }
    best.is_finite().then_some(best)
}

/// Nearest positive hit on a torus within `t_max`, found by marching with
/// the exact torus distance (never overshoots) and polishing the root of
/// the torus quartic with Newton steps.
pub fn ray_ring(o: &Vec3, d: &Vec3, r: &Ring, t_max: f64) -> Option<f64> {
    let w = o - r.center;
    let bound = r.bounding_radius();
    // Entry into the bounding sphere.
    let b = w.dot(d);
    let c = w.norm_squared() - bound * bound;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let (enter, exit) = (-b - sq, (-b + sq).min(t_max));
    let mut t = enter.max(0.0);
    if t > exit {
        return None;
    }
    for _ in 0..256 {
        let p = o + d * t;
        let dist = r.distance(&p);
        if dist < 1e-9 {
            return Some(polish_ring(&w, d, r, t));
        }
        t += dist;
        if t > exit {
            return None;
        }
    }
    None
}

fn polish_ring(w: &Vec3, d: &Vec3, r: &Ring, mut t: f64) -> f64 {
    // f(t) = (|x|² + R² − ρ²)² − 4R²(|x|² − (x·a)²), x = w + t d.
    let (big, small) = (r.major_radius * r.major_radius, r.tube_radius * r.tube_radius);
    for _ in 0..3 {
        let x = w + d * t;
        let s = x.norm_squared() + big - small;
        let h = x.dot(&r.axis);
        let f = s * s - 4.0 * big * (x.norm_squared() - h * h);
        let ds = 2.0 * x.dot(d);
        let dh = d.dot(&r.axis);
        let df = 2.0 * s * ds - 4.0 * big * (ds - 2.0 * h * dh);
        if df.abs() < 1e-300 {
            break;
        }
        let step = f / df;
        if !step.is_finite() || step.abs() > 1e-3 {
            break;
        }
        t -= step;
    }
    t
}

fn ray_shape(o: &Vec3, d: &Vec3, s: &Shape, t_max: f64) -> Option<f64> {
    match s {
        Shape::Column(c) => ray_column(o, d, c),
        Shape::Ring(r) => ray_ring(o, d, r, t_max),
    }
}

/// Angular interval `(center, half_width)` of a shape seen from the sensor,
/// in the sensor's horizontal plane; `None` when it may cover every azimuth.
fn azimuth_window(o: &Vec3, s: &Shape) -> Option<(f64, f64)> {
    let (cx, cy, rad) = match s {
        Shape::Column(c) => (c.center_xy[0], c.center_xy[1], c.radius),
        Shape::Ring(r) => (r.center.x, r.center.y, r.bounding_radius()),
    };
    let (dx, dy) = (cx - o.x, cy - o.y);
    let dist = (dx * dx + dy * dy).sqrt();
    if dist <= rad * 1.0001 {
        return None;
    }
    Some((dy.atan2(dx), (rad / dist).asin()))
}

/// Casts the angular ray grid from `pose` against the world as it stands at
/// `tick / rate` seconds and returns world-frame hit points.
pub fn simulate_scan(world: &SimWorld, pose: &RigidTransform, model: &LidarModel, tick: u64) -> Vec<Vec3> {
    let t_world = tick as f64 / model.rate;
    let o = *pose.translation();
    let shapes: Vec<Shape> = world
        .shapes_at(t_world)
        .into_iter()
        .filter(|s| s.distance(&o) <= model.max_range)
        .collect();
    if shapes.is_empty() {
        return Vec::new();
    }
    let azimuths = model.azimuths();
    let elevations = model.elevations();
    // Azimuth culling is valid when the sensor is upright.
    let upright = (pose.rotation() * Vec3::z() - Vec3::z()).norm() < 1e-9;
    let yaw = if upright {
        let xa = pose.rotation() * Vec3::x();
        xa.y.atan2(xa.x)
    } else {
        0.0
    };
    let windows: Vec<Option<(f64, f64)>> = shapes
        .iter()
        .map(|s| if upright { azimuth_window(&o, s) } else { None })
        .collect();
    let margin = model.angular_step;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(world.seed ^ tick.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let noise = (model.noise_sigma > 0.0).then(|| Normal::new(0.0, model.noise_sigma).expect("finite sigma"));

    let mut hits = Vec::new();
    let mut candidates: Vec<usize> = Vec::with_capacity(shapes.len());
    for &az in &azimuths {
        let world_az = az + yaw;
        candidates.clear();
        for (k, win) in windows.iter().enumerate() {
            let keep = match win {
                None => true,
                Some((center, half)) => {
                    let diff = (world_az - center + PI).rem_euclid(TAU) - PI;
                    diff.abs() <= half + margin
                }
            };
            if keep {
                candidates.push(k);
            }
        }
        if candidates.is_empty() {
            continue;
        }
        for &el in &elevations {
            let dir_s = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let dir = pose.transform_vector(&dir_s);
            let mut best = model.max_range;
            let mut hit = false;
            for &k in &candidates {
                if let Some(t) = ray_shape(&o, &dir, &shapes[k], best) {
                    if t <= best {
                        best = t;
                        hit = true;
                    }
                }
            }
            if hit {
                let range = match &noise {
                    Some(n) => (best + n.sample(&mut noise_rng)).max(0.0),
                    None => best,
                };
                hits.push(o + dir * range);
            }
        }
    }
    hits
}
