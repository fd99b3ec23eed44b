//! Vectors and axis-aligned boxes.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Vec3 {
        Vec3::new(f(self.x), f(self.y), f(self.z))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Closed axis-aligned box given by its center and half extents.
///
/// Used both for buildings and for the world bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildingBox {
    pub center: Vec3,
    pub half_extents: Vec3,
}

impl BuildingBox {
    pub fn new(center: Vec3, half_extents: Vec3) -> Self {
        Self {
            center,
            half_extents,
        }
    }

    /// Box standing on the ground plane with the given footprint center and height.
    pub fn on_ground(x: f64, y: f64, half_x: f64, half_y: f64, height: f64) -> Self {
        let half_z = 0.5 * height;
        Self::new(Vec3::new(x, y, half_z), Vec3::new(half_x, half_y, half_z))
    }

    pub fn min(&self) -> Vec3 {
        self.center - self.half_extents
    }

    pub fn max(&self) -> Vec3 {
        self.center + self.half_extents
    }

    pub fn contains(&self, p: Vec3) -> bool {
        point_in_box(p, self)
    }

    /// Euclidean distance from `p` to the box surface, 0 when `p` is inside.
    pub fn distance_to(&self, p: Vec3) -> f64 {
        let d = p - self.center;
        let gap = |delta: f64, half: f64| (delta.abs() - half).max(0.0);
        Vec3::new(
            gap(d.x, self.half_extents.x),
            gap(d.y, self.half_extents.y),
            gap(d.z, self.half_extents.z),
        )
        .norm()
    }

    pub fn horizontal_half_extent(&self) -> f64 {
        self.half_extents.x.max(self.half_extents.y)
    }
}

/// Boundary points count as inside.
pub fn point_in_box(p: Vec3, b: &BuildingBox) -> bool {
    (p.x - b.center.x).abs() <= b.half_extents.x
        && (p.y - b.center.y).abs() <= b.half_extents.y
        && (p.z - b.center.z).abs() <= b.half_extents.z
}

/// Minimum distance from `p` to any of `boxes`; `+inf` when there are none.
pub fn clearance(p: Vec3, boxes: &[BuildingBox]) -> f64 {
    boxes
        .iter()
        .map(|b| b.distance_to(p))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tower() -> BuildingBox {
        BuildingBox::new(Vec3::new(0.0, 0.0, 10.0), Vec3::new(5.0, 5.0, 10.0))
    }

    #[test]
    fn point_in_box_cases() {
        assert!(point_in_box(Vec3::new(0.0, 0.0, 5.0), &tower()));
        assert!(!point_in_box(Vec3::new(100.0, 0.0, 5.0), &tower()));
        assert!(point_in_box(Vec3::new(5.0, 0.0, 5.0), &tower()));
    }

    #[test]
    fn distance_is_zero_inside_and_on_surface() {
        assert_eq!(tower().distance_to(Vec3::new(1.0, 1.0, 1.0)), 0.0);
        assert_eq!(tower().distance_to(Vec3::new(5.0, 0.0, 20.0)), 0.0);
        assert_eq!(tower().distance_to(Vec3::new(8.0, 0.0, 10.0)), 3.0);
        assert_eq!(tower().distance_to(Vec3::new(8.0, 9.0, 10.0)), 5.0);
    }

    #[test]
    fn clearance_of_empty_set_is_infinite() {
        assert_eq!(clearance(Vec3::ZERO, &[]), f64::INFINITY);
    }

    #[test]
    fn vec3_serializes_as_array() {
        let s = serde_json::to_string(&Vec3::new(1.0, -2.5, 3.0)).unwrap();
        assert_eq!(s, "[1.0,-2.5,3.0]");
    }
}
