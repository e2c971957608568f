use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{Aabb, Vec3};
use crate::SCHEMA_VERSION;

/// Vertical capped cylinder standing on the bottom of the world.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub center_xy: [f64; 2],
    pub radius: f64,
    pub height: f64,
    /// Altitude of the bottom cap.
    pub base_z: f64,
}

impl Column {
    /// Signed distance (negative inside).
    pub fn distance(&self, p: &Vec3) -> f64 {
        let dx = p.x - self.center_xy[0];
        let dy = p.y - self.center_xy[1];
        let a = (dx * dx + dy * dy).sqrt() - self.radius;
        let b = (p.z - (self.base_z + 0.5 * self.height)).abs() - 0.5 * self.height;
        if a < 0.0 && b < 0.0 {
            a.max(b)
        } else {
            (a.max(0.0).powi(2) + b.max(0.0).powi(2)).sqrt()
        }
    }

    pub fn translated(&self, d: &Vec3) -> Self {
        Self {
            center_xy: [self.center_xy[0] + d.x, self.center_xy[1] + d.y],
            ..*self
        }
    }

    /// Side-surface samples roughly `spacing` apart.
    pub fn surface_points(&self, spacing: f64, out: &mut Vec<Vec3>) {
        let around = ((TAU * self.radius / spacing).ceil() as usize).max(3);
        let up = (self.height / spacing).ceil() as usize;
        for i in 0..=up {
            let z = self.base_z + self.height * i as f64 / up.max(1) as f64;
            for k in 0..around {
                let a = TAU * k as f64 / around as f64;
                out.push(Vec3::new(
                    self.center_xy[0] + self.radius * a.cos(),
                    self.center_xy[1] + self.radius * a.sin(),
                    z,
                ));
            }
        }
    }
}

/// Torus: a tube of radius `tube_radius` swept around a circle of radius
/// `major_radius` in the plane normal to `axis`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub center: Vec3,
    pub axis: Vec3,
    pub major_radius: f64,
    pub tube_radius: f64,
}

impl Ring {
    pub fn distance(&self, p: &Vec3) -> f64 {
        let w = p - self.center;
        let h = w.dot(&self.axis);
        let rho = (w - self.axis * h).norm();
        ((rho - self.major_radius).powi(2) + h * h).sqrt() - self.tube_radius
    }

    pub fn translated(&self, d: &Vec3) -> Self {
        Self {
            center: self.center + d,
            ..*self
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        self.major_radius + self.tube_radius
    }

    /// Tube-surface samples roughly `spacing` apart.
    pub fn surface_points(&self, spacing: f64, out: &mut Vec<Vec3>) {
        let helper = if self.axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = self.axis.cross(&helper).normalize();
        let e2 = self.axis.cross(&e1);
        let around = ((TAU * self.major_radius / spacing).ceil() as usize).max(3);
        let tube = ((TAU * self.tube_radius / spacing).ceil() as usize).max(4);
        for i in 0..around {
            let a = TAU * i as f64 / around as f64;
            let radial = e1 * a.cos() + e2 * a.sin();
            for j in 0..tube {
                let b = TAU * j as f64 / tube as f64;
                out.push(
                    self.center
                        + radial * (self.major_radius + self.tube_radius * b.cos())
                        + self.axis * (self.tube_radius * b.sin()),
                );
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Column(Column),
    Ring(Ring),
}

impl Shape {
    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            Shape::Column(c) => c.distance(p),
            Shape::Ring(r) => r.distance(p),
        }
    }

    pub fn translated(&self, d: &Vec3) -> Self {
        match self {
            Shape::Column(c) => Shape::Column(c.translated(d)),
            Shape::Ring(r) => Shape::Ring(r.translated(d)),
        }
    }

    /// Horizontal half-width and vertical half-height of the shape's box.
    fn half_box(&self) -> Vec3 {
        match self {
            Shape::Column(c) => Vec3::new(c.radius, c.radius, 0.5 * c.height),
            Shape::Ring(r) => Vec3::repeat(r.bounding_radius()),
        }
    }

    fn anchor(&self) -> Vec3 {
        match self {
            Shape::Column(c) => Vec3::new(c.center_xy[0], c.center_xy[1], c.base_z + 0.5 * c.height),
            Shape::Ring(r) => r.center,
        }
    }
}

/// Obstacle moving at constant velocity, bouncing off the world walls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mover {
    pub shape: Shape,
    pub velocity: Vec3,
}

/// Position on `[lo, hi]` of a point starting at `x0` with speed `v`,
/// reflecting at both ends.
fn bounce(x0: f64, v: f64, t: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return x0;
    }
    let u = (x0 - lo + v * t).rem_euclid(2.0 * span);
    lo + if u <= span { u } else { 2.0 * span - u }
}

impl Mover {
    /// The shape at time `t`, reflected inside `extent`.
    pub fn shape_at(&self, t: f64, extent: &Aabb) -> Shape {
        let half = self.shape.half_box();
        let anchor = self.shape.anchor();
        let (lo, hi) = (extent.min() + half, extent.max() - half);
        let mut moved = anchor;
        for i in 0..3 {
            if self.velocity[i] != 0.0 {
                moved[i] = bounce(anchor[i], self.velocity[i], t, lo[i], hi[i]);
            }
        }
        self.shape.translated(&(moved - anchor))
    }
}

/// Generation parameters; `seed` fully determines the result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub extent: Aabb,
    pub n_columns: usize,
    pub n_rings: usize,
    pub n_movers: usize,
    pub seed: u64,
    /// Points obstacles must keep `keepout_radius` away from.
    pub keepout: Vec<Vec3>,
    pub keepout_radius: f64,
    pub column_radius: [f64; 2],
    pub ring_major_radius: [f64; 2],
    pub ring_tube_radius: [f64; 2],
    pub mover_speed: [f64; 2],
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self::forest(80, 50, 0)
    }
}

impl WorldSpec {
    /// The 50 × 20 × 8 m benchmark box between (−27, 0, 1) and (27, 0, 1).
    pub fn forest(n_columns: usize, n_rings: usize, seed: u64) -> Self {
        Self {
            extent: Aabb::new(Vec3::new(0.0, 0.0, 4.0), Vec3::new(25.0, 10.0, 4.0)).expect("valid extent"),
            n_columns,
            n_rings,
            n_movers: 0,
            seed,
            keepout: vec![Vec3::new(-27.0, 0.0, 1.0), Vec3::new(27.0, 0.0, 1.0)],
            keepout_radius: 1.0,
            column_radius: [0.2, 0.4],
            ring_major_radius: [0.8, 1.4],
            ring_tube_radius: [0.08, 0.15],
            mover_speed: [0.5, 2.0],
        }
    }

    pub fn empty() -> Self {
        Self::forest(0, 0, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimWorld {
    pub schema_version: u32,
    pub extent: Aabb,
    pub columns: Vec<Column>,
    pub rings: Vec<Ring>,
    pub movers: Vec<Mover>,
    pub seed: u64,
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

const MAX_TRIES: usize = 1000;

/// Places obstacles uniformly in the extent with a seeded ChaCha8 stream,
/// rejecting any whose surface comes within `keepout_radius` of a keep-out
/// point.
pub fn generate_world(spec: &WorldSpec) -> SimWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ext = spec.extent;
    let (lo, hi) = (ext.min(), ext.max());
    let clear = |s: &Shape| spec.keepout.iter().all(|k| s.distance(k) >= spec.keepout_radius);
    let place = |rng: &mut ChaCha8Rng, make: &mut dyn FnMut(&mut ChaCha8Rng) -> Option<Shape>| {
        for _ in 0..MAX_TRIES {
            if let Some(s) = make(rng) {
                if clear(&s) {
                    return Some(s);
                }
            }
        }
        None
    };
    let mut column = |rng: &mut ChaCha8Rng| {
        let radius = uniform(rng, spec.column_radius);
        if 2.0 * radius >= (hi.x - lo.x).min(hi.y - lo.y) {
            return None;
        }
        let x = rng.random_range(lo.x + radius..hi.x - radius);
        let y = rng.random_range(lo.y + radius..hi.y - radius);
        Some(Shape::Column(Column {
            center_xy: [x, y],
            radius,
            height: hi.z - lo.z,
            base_z: lo.z,
        }))
    };
    let mut ring = |rng: &mut ChaCha8Rng| {
        let major_radius = uniform(rng, spec.ring_major_radius);
        let tube_radius = uniform(rng, spec.ring_tube_radius);
        let b = major_radius + tube_radius;
        if (0..3).any(|i| 2.0 * b >= hi[i] - lo[i]) {
            return None;
        }
        let center = Vec3::new(
            rng.random_range(lo.x + b..hi.x - b),
            rng.random_range(lo.y + b..hi.y - b),
            rng.random_range(lo.z + b..hi.z - b),
        );
        Some(Shape::Ring(Ring {
            center,
            axis: unit_vector(rng),
            major_radius,
            tube_radius,
        }))
    };

    let mut columns = Vec::with_capacity(spec.n_columns);
    for _ in 0..spec.n_columns {
        if let Some(Shape::Column(c)) = place(&mut rng, &mut column) {
            columns.push(c);
        }
    }
    let mut rings = Vec::with_capacity(spec.n_rings);
    for _ in 0..spec.n_rings {
        if let Some(Shape::Ring(r)) = place(&mut rng, &mut ring) {
            rings.push(r);
        }
    }
    let mut movers = Vec::with_capacity(spec.n_movers);
    for i in 0..spec.n_movers {
        let shape = if i % 2 == 0 {
            place(&mut rng, &mut column)
        } else {
            place(&mut rng, &mut ring)
        };
        let Some(shape) = shape else { continue };
        let heading = rng.random_range(0.0..std::f64::consts::TAU);
        let speed = uniform(&mut rng, spec.mover_speed);
        movers.push(Mover {
            shape,
            velocity: Vec3::new(heading.cos(), heading.sin(), 0.0) * speed,
        });
    }
    SimWorld {
        schema_version: SCHEMA_VERSION,
        extent: ext,
        columns,
        rings,
        movers,
        seed: spec.seed,
    }
}

impl SimWorld {
    pub fn is_empty(&self) -> bool {
        self.columns.is_empty() && self.rings.is_empty() && self.movers.is_empty()
    }

    /// Every obstacle as it stands at time `t`.
    pub fn shapes_at(&self, t: f64) -> Vec<Shape> {
        let mut out: Vec<Shape> = self.columns.iter().map(|c| Shape::Column(*c)).collect();
        out.extend(self.rings.iter().map(|r| Shape::Ring(*r)));
        out.extend(self.movers.iter().map(|m| m.shape_at(t, &self.extent)));
        out
    }

    /// Signed distance from `p` to the nearest obstacle surface at time `t`
    /// (infinite for an empty world).
    pub fn distance(&self, p: &Vec3, t: f64) -> f64 {
        let statics = self
            .columns
            .iter()
            .map(|c| c.distance(p))
            .chain(self.rings.iter().map(|r| r.distance(p)));
        let moving = self.movers.iter().map(|m| m.shape_at(t, &self.extent).distance(p));
        statics.chain(moving).fold(f64::INFINITY, f64::min)
    }

    /// Samples of every static surface, as a fully known prior map.
    pub fn surface_points(&self, spacing: f64) -> Vec<Vec3> {
        let mut out = Vec::new();
        for c in &self.columns {
            c.surface_points(spacing, &mut out);
        }
        for r in &self.rings {
            r.surface_points(spacing, &mut out);
        }
        out
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
