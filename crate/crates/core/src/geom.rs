//! Minimal 2-D geometry: points, poses, angle normalization.

use core::ops::{Add, Mul, Sub};

use crate::math;

pub const PI: f64 = core::f64::consts::PI;
pub const TAU: f64 = 2.0 * core::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the cross product; positive when `o` is counter-
    /// clockwise of `self`.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        math::hypot(self.x, self.y)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n == 0.0 {
            Vec2::new(0.0, 0.0)
        } else {
            Vec2::new(self.x / n, self.y / n)
        }
    }

    pub fn perp_left(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Position plus orientation in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub pos: Vec2,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            pos: Vec2::new(x, y),
            heading,
        }
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::new(math::cos(self.heading), math::sin(self.heading))
    }

    /// Maps a world point into this pose's frame: +x forward, +y left.
    pub fn world_to_local(&self, p: Vec2) -> Vec2 {
        let d = p - self.pos;
        let c = math::cos(self.heading);
        let s = math::sin(self.heading);
        Vec2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = math::rem_euclid(a, TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_wrap_is_half_open() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.1) - 0.1).abs() < 1e-15);
        assert!((normalize_angle(TAU + 0.1) - 0.1).abs() < 1e-12);
        assert!((normalize_angle(-0.1) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn local_frame_axes() {
        let pose = Pose2::new(1.0, 2.0, PI / 2.0);
        let ahead = pose.world_to_local(Vec2::new(1.0, 3.0));
        assert!((ahead.x - 1.0).abs() < 1e-12 && ahead.y.abs() < 1e-12);
        let left = pose.world_to_local(Vec2::new(0.0, 2.0));
        assert!(left.x.abs() < 1e-12 && (left.y - 1.0).abs() < 1e-12);
    }
}
