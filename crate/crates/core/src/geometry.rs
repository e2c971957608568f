//! Shared geometric vocabulary: points, rigid transforms, boxes and
//! depth-image pixels.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

/// World-frame position or direction, in meters.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Returns true when every component is finite.
pub fn is_finite(p: &Vec3) -> bool {
    p.x.is_finite() && p.y.is_finite() && p.z.is_finite()
}

/// Bit-exact key for a point, usable in hash maps.
///
/// `-0.0` and `0.0` are folded together so grid-snapped points compare the
/// way `==` does.
pub fn point_key(p: &Vec3) -> [u64; 3] {
    let bits = |v: f64| if v == 0.0 { 0u64 } else { v.to_bits() };
    [bits(p.x), bits(p.y), bits(p.z)]
}

/// Proper rigid motion `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Builds a transform from a rotation matrix, rejecting anything that is
    /// not orthonormal with determinant +1 (tolerance 1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Option<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 || !is_finite(&translation) {
            return None;
        }
        Some(Self {
            rotation,
            translation,
        })
    }

    /// Yaw-pitch-roll (Z-Y-X) rotation followed by a translation.
    pub fn from_euler(yaw: f64, pitch: f64, roll: f64, translation: Vec3) -> Self {
        let rotation = Rotation3::from_euler_angles(roll, pitch, yaw).into_inner();
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Applies `t` to `p`.
pub fn transform_point(t: &RigidTransform, p: &Vec3) -> Vec3 {
    t.transform_point(p)
}

/// Closed axis-aligned box given by its center and half extents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub center: Vec3,
    pub half_extent: Vec3,
}

impl Aabb {
    /// Returns `None` unless every half extent is strictly positive.
    pub fn new(center: Vec3, half_extent: Vec3) -> Option<Self> {
        if half_extent.iter().all(|h| *h > 0.0 && h.is_finite()) && is_finite(&center) {
            Some(Self {
                center,
                half_extent,
            })
        } else {
            None
        }
    }

    pub fn from_size(center: Vec3, size: Vec3) -> Option<Self> {
        Self::new(center, size * 0.5)
    }

    pub fn cube(center: Vec3, half: f64) -> Self {
        Self {
            center,
            half_extent: Vec3::repeat(half),
        }
    }

    pub fn min(&self) -> Vec3 {
        self.center - self.half_extent
    }

    pub fn max(&self) -> Vec3 {
        self.center + self.half_extent
    }

    pub fn size(&self) -> Vec3 {
        self.half_extent * 2.0
    }

    /// Boundary points count as inside.
    pub fn contains(&self, p: &Vec3) -> bool {
        (p.x - self.center.x).abs() <= self.half_extent.x
            && (p.y - self.center.y).abs() <= self.half_extent.y
            && (p.z - self.center.z).abs() <= self.half_extent.z
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        let (a0, a1) = (self.min(), self.max());
        let (b0, b1) = (other.min(), other.max());
        (0..3).all(|i| b0[i] >= a0[i] && b1[i] <= a1[i])
    }

    /// True when the two closed boxes share no point.
    pub fn disjoint(&self, other: &Aabb) -> bool {
        let (a0, a1) = (self.min(), self.max());
        let (b0, b1) = (other.min(), other.max());
        (0..3).any(|i| b1[i] < a0[i] || b0[i] > a1[i])
    }

    /// Squared Euclidean distance from `p` to the box (zero inside).
    pub fn distance_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let excess = (p[i] - self.center[i]).abs() - self.half_extent[i];
            if excess > 0.0 {
                d += excess * excess;
            }
        }
        d
    }

    /// Squared distance from `p` to the farthest corner of the box.
    pub fn max_distance_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let far = (p[i] - self.center[i]).abs() + self.half_extent[i];
            d += far * far;
        }
        d
    }

    pub fn translated(&self, offset: &Vec3) -> Self {
        Self {
            center: self.center + offset,
            half_extent: self.half_extent,
        }
    }

    /// `[min_x, min_y, min_z, max_x, max_y, max_z]`.
    pub fn to_array(&self) -> [f64; 6] {
        let (a, b) = (self.min(), self.max());
        [a.x, a.y, a.z, b.x, b.y, b.z]
    }
}

/// Closed-box membership test.
pub fn aabb_contains(b: &Aabb, p: &Vec3) -> bool {
    b.contains(p)
}

/// A depth-image pixel: integer indices plus a range, `None` when no point
/// projects there.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarPixel {
    pub i: usize,
    pub j: usize,
    pub depth: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_transform_keeps_point() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(transform_point(&RigidTransform::identity(), &p), p);
    }

    #[test]
    fn pure_translation() {
        let t = RigidTransform::from_translation(Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(t.transform_point(&Vec3::zeros()), Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn yaw_quarter_turn() {
        // Rz(90°) = [[0,-1,0],[1,0,0],[0,0,1]] so (1,0,0) -> (0,1,0).
        let t = RigidTransform::from_euler(FRAC_PI_2, 0.0, 0.0, Vec3::zeros());
        let q = t.transform_point(&Vec3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(q, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(m, Vec3::zeros()).is_none());
        let flip = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(flip, Vec3::zeros()).is_none());
    }

    #[test]
    fn box_membership_is_closed() {
        let b = Aabb::new(Vec3::zeros(), Vec3::repeat(1.0)).unwrap();
        assert!(aabb_contains(&b, &Vec3::zeros()));
        assert!(aabb_contains(&b, &Vec3::new(1.0, 1.0, 1.0)));
        assert!(!aabb_contains(&b, &Vec3::new(1.001, 0.0, 0.0)));
    }

    #[test]
    fn box_rejects_degenerate_extent() {
        assert!(Aabb::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0)).is_none());
    }

    #[test]
    fn box_distance() {
        let b = Aabb::cube(Vec3::zeros(), 1.0);
        assert_eq!(b.distance_sq(&Vec3::new(0.5, 0.0, 0.0)), 0.0);
        assert_relative_eq!(b.distance_sq(&Vec3::new(3.0, 0.0, 0.0)), 4.0);
        assert_relative_eq!(b.distance_sq(&Vec3::new(2.0, 2.0, 0.0)), 2.0);
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-50.0..50.0f64, -50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn inverse_round_trip(yaw in -3.2..3.2f64, pitch in -1.5..1.5f64, roll in -3.2..3.2f64,
                              t in vec3(), p in vec3()) {
            let tf = RigidTransform::from_euler(yaw, pitch, roll, t);
            let back = tf.transform_point(&tf.inverse().transform_point(&p));
            prop_assert!((back - p).norm() < 1e-9);
            let ident = tf.compose(&tf.inverse());
            prop_assert!((ident.rotation() - Matrix3::identity()).abs().max() < 1e-9);
            prop_assert!(ident.translation().norm() < 1e-9);
            prop_assert!((tf.rotation().determinant() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn containment_translation_invariant(c in vec3(), h in (0.1..5.0f64, 0.1..5.0f64, 0.1..5.0f64),
                                             p in vec3(), shift in vec3()) {
            // Quarter-meter grid keeps the arithmetic exact.
            let q = |v: f64| (v * 4.0).round() / 4.0;
            let half = Vec3::new(h.0, h.1, h.2).map(|v| (v * 4.0).round().max(1.0) / 4.0);
            let b = Aabb::new(c.map(q), half).unwrap();
            let (p, shift) = (p.map(q), shift.map(q));
            prop_assert_eq!(b.contains(&p), b.translated(&shift).contains(&(p + shift)));
        }
    }
}
