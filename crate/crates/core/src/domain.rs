//! Domain geometry: the sample shapes the solvers run on.
//!
//! Every shape is convex and described by a level function that is negative
//! inside, zero on the boundary and positive outside.  The grid builder only
//! needs three geometric queries: point membership, the boundary crossing along
//! a grid arm, and the outward normal; all three are answered analytically
//! here so no marching/contouring approximations enter the discretization.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A point in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    #[must_use]
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[must_use]
    pub fn dist(&self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    #[must_use]
    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Supported sample shapes, all centered at [`DomainSpec::center`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Disk { radius: f64 },
    /// Axis-aligned ellipse with semi-axes `a` (x) and `b` (y).
    Ellipse { a: f64, b: f64 },
    /// Axis-aligned rectangle with full side lengths `width` and `height`.
    Rectangle { width: f64, height: f64 },
}

/// A convex planar domain: shape plus center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub shape: Shape,
    #[serde(default)]
    pub center: Point2,
}

impl DomainSpec {
    #[must_use]
    pub fn disk(radius: f64) -> Self {
        Self { shape: Shape::Disk { radius }, center: Point2::default() }
    }

    #[must_use]
    pub fn ellipse(a: f64, b: f64) -> Self {
        Self { shape: Shape::Ellipse { a, b }, center: Point2::default() }
    }

    #[must_use]
    pub fn rectangle(width: f64, height: f64) -> Self {
        Self { shape: Shape::Rectangle { width, height }, center: Point2::default() }
    }

    #[must_use]
    pub fn with_center(mut self, c: Point2) -> Self {
        self.center = c;
        self
    }

    /// Rejects degenerate shapes (zero or negative extents, non-finite data).
    pub fn validate(&self) -> Result<()> {
        let ok = match self.shape {
            Shape::Disk { radius } => radius > 0.0 && radius.is_finite(),
            Shape::Ellipse { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
            Shape::Rectangle { width, height } => {
                width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()
            }
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "degenerate domain shape: {:?}",
                self.shape
            )));
        }
        if !(self.center.x.is_finite() && self.center.y.is_finite()) {
            return Err(Error::InvalidParameter("non-finite domain center".into()));
        }
        Ok(())
    }

    /// Level function: negative inside, zero on the boundary, positive outside.
    ///
    /// Not a signed distance in general (ellipse, rectangle), but monotone
    /// along any ray into the domain, which is all the bisection in
    /// [`DomainSpec::boundary_crossing`] needs.
    #[must_use]
    pub fn level(&self, p: Point2) -> f64 {
        let d = p - self.center;
        match self.shape {
            Shape::Disk { radius } => d.norm() - radius,
            Shape::Ellipse { a, b } => {
                let u = d.x / a;
                let v = d.y / b;
                (u * u + v * v).sqrt() - 1.0
            }
            Shape::Rectangle { width, height } => {
                (d.x.abs() - 0.5 * width).max(d.y.abs() - 0.5 * height)
            }
        }
    }

    #[must_use]
    pub fn contains(&self, p: Point2) -> bool {
        self.level(p) < 0.0
    }

    /// A guaranteed lower bound on the Euclidean distance from an interior
    /// point to the boundary (`0` outside).  Exact for disks and rectangles;
    /// for ellipses the normalized level is rescaled by the short semi-axis,
    /// which bounds `|∇level| ≤ 1/min(a,b)`.
    #[must_use]
    pub fn interior_distance(&self, p: Point2) -> f64 {
        let lvl = self.level(p);
        if lvl >= 0.0 {
            return 0.0;
        }
        match self.shape {
            Shape::Disk { .. } | Shape::Rectangle { .. } => -lvl,
            Shape::Ellipse { a, b } => -lvl * a.min(b),
        }
    }

    #[must_use]
    pub fn area(&self) -> f64 {
        match self.shape {
            Shape::Disk { radius } => std::f64::consts::PI * radius * radius,
            Shape::Ellipse { a, b } => std::f64::consts::PI * a * b,
            Shape::Rectangle { width, height } => width * height,
        }
    }

    #[must_use]
    pub fn diameter(&self) -> f64 {
        match self.shape {
            Shape::Disk { radius } => 2.0 * radius,
            Shape::Ellipse { a, b } => 2.0 * a.max(b),
            Shape::Rectangle { width, height } => width.hypot(height),
        }
    }

    /// Axis-aligned bounding box `(min corner, max corner)`.
    #[must_use]
    pub fn bounding_box(&self) -> (Point2, Point2) {
        let (hx, hy) = match self.shape {
            Shape::Disk { radius } => (radius, radius),
            Shape::Ellipse { a, b } => (a, b),
            Shape::Rectangle { width, height } => (0.5 * width, 0.5 * height),
        };
        (
            Point2::new(self.center.x - hx, self.center.y - hy),
            Point2::new(self.center.x + hx, self.center.y + hy),
        )
    }

    /// Outward unit normal of the level set through `p` (for `p` on or near
    /// the boundary).  Uses the analytic gradient of the level function; on a
    /// rectangle the normal of the nearest face is returned (corners resolve
    /// to the x-face by convention).
    #[must_use]
    pub fn outward_normal(&self, p: Point2) -> Point2 {
        let d = p - self.center;
        match self.shape {
            Shape::Disk { .. } => {
                let n = d.norm();
                if n == 0.0 {
                    Point2::new(1.0, 0.0)
                } else {
                    Point2::new(d.x / n, d.y / n)
                }
            }
            Shape::Ellipse { a, b } => {
                let gx = d.x / (a * a);
                let gy = d.y / (b * b);
                let n = gx.hypot(gy);
                if n == 0.0 {
                    Point2::new(1.0, 0.0)
                } else {
                    Point2::new(gx / n, gy / n)
                }
            }
            Shape::Rectangle { width, height } => {
                let fx = d.x.abs() - 0.5 * width;
                let fy = d.y.abs() - 0.5 * height;
                if fx >= fy {
                    Point2::new(d.x.signum(), 0.0)
                } else {
                    Point2::new(0.0, d.y.signum())
                }
            }
        }
    }

    /// Fraction `θ ∈ (0, 1]` of the segment `inside → outside` that lies in
    /// the domain, found by bisection on the level function.
    ///
    /// `inside` must satisfy `level ≤ 0` and `outside` `level ≥ 0`; the result
    /// is clamped away from zero so boundary-corrected stencils stay bounded.
    #[must_use]
    pub fn boundary_crossing(&self, inside: Point2, outside: Point2) -> f64 {
        const THETA_MIN: f64 = 1e-6;
        let l_out = self.level(outside);
        if l_out <= 0.0 {
            return 1.0;
        }
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let p = Point2::new(
                inside.x + mid * (outside.x - inside.x),
                inside.y + mid * (outside.y - inside.y),
            );
            if self.level(p) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).clamp(THETA_MIN, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn validate_rejects_flat_ellipse() {
        let err = DomainSpec::ellipse(1.0, 0.0).validate().unwrap_err();
        assert!(err.is_validation(), "expected validation error, got {err}");
    }

    #[test]
    fn validate_accepts_standard_shapes() {
        for spec in [
            DomainSpec::disk(1.0),
            DomainSpec::ellipse(2.0, 1.0),
            DomainSpec::rectangle(1.0, 1.0),
        ] {
            spec.validate().unwrap();
        }
    }

    #[test]
    fn disk_level_sign_and_area() {
        let d = DomainSpec::disk(1.0);
        assert!(d.contains(Point2::new(0.3, 0.4)));
        assert!(!d.contains(Point2::new(0.8, 0.8)));
        assert_relative_eq!(d.area(), std::f64::consts::PI, max_relative = 1e-15);
    }

    #[test]
    fn crossing_matches_exact_disk_intersection() {
        let d = DomainSpec::disk(1.0);
        // Horizontal arm from (0.9, 0) to (1.1, 0): crossing at x = 1 -> θ = 0.5.
        let theta = d.boundary_crossing(Point2::new(0.9, 0.0), Point2::new(1.1, 0.0));
        assert_relative_eq!(theta, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn rectangle_normal_picks_nearest_face() {
        let r = DomainSpec::rectangle(2.0, 1.0);
        let n = r.outward_normal(Point2::new(0.0, 0.5));
        assert_eq!((n.x, n.y), (0.0, 1.0));
        let n = r.outward_normal(Point2::new(-1.0, 0.0));
        assert_eq!((n.x, n.y), (-1.0, 0.0));
    }

    #[test]
    fn ellipse_normal_is_unit_and_outward() {
        let e = DomainSpec::ellipse(2.0, 1.0);
        let p = Point2::new(2.0, 0.0);
        let n = e.outward_normal(p);
        assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-14);
        assert!(n.x > 0.99);
    }
}
