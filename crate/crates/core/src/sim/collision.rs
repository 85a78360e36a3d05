use super::Vec2;

/// Oriented rectangle in the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootprintOBB {
    pub center: Vec2,
    pub half_length: f64,
    pub half_width: f64,
    pub heading: f64,
}

impl FootprintOBB {
    pub fn new(center: Vec2, half_length: f64, half_width: f64, heading: f64) -> Self {
        debug_assert!(half_length > 0.0 && half_width > 0.0);
        Self {
            center,
            half_length,
            half_width,
            heading,
        }
    }

    /// Unit vectors along the length and width.
    pub fn axes(&self) -> (Vec2, Vec2) {
        let u = Vec2::from_angle(self.heading);
        (u, u.perp())
    }

    /// Corners in counterclockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let (u, v) = self.axes();
        let l = u * self.half_length;
        let w = v * self.half_width;
        let c = self.center;
        [c + l + w, c - l + w, c - l - w, c + l - w]
    }

    fn project_radius(&self, axis: Vec2) -> f64 {
        let (u, v) = self.axes();
        self.half_length * u.dot(axis).abs() + self.half_width * v.dot(axis).abs()
    }

    /// Whether `p` lies inside or on the boundary.
    pub fn contains(&self, p: Vec2) -> bool {
        let (u, v) = self.axes();
        let d = p - self.center;
        d.dot(u).abs() <= self.half_length && d.dot(v).abs() <= self.half_width
    }
}

/// Separating-axis test over the two edge normals of each box.
pub fn obb_intersect(a: &FootprintOBB, b: &FootprintOBB) -> bool {
    let (au, av) = a.axes();
    let (bu, bv) = b.axes();
    let d = b.center - a.center;
    for axis in [au, av, bu, bv] {
        let separation = d.dot(axis).abs();
        if separation > a.project_radius(axis) + b.project_radius(axis) {
            return false;
        }
    }
    true
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Gap between two boxes; 0 when they touch or overlap.
pub fn min_clearance(a: &FootprintOBB, b: &FootprintOBB) -> f64 {
    if obb_intersect(a, b) {
        return 0.0;
    }
    let ca = a.corners();
    let cb = b.corners();
    let mut best = f64::INFINITY;
    for (pts, poly) in [(&ca, &cb), (&cb, &ca)] {
        for &p in pts.iter() {
            for i in 0..4 {
                best = best.min(point_segment_distance(p, poly[i], poly[(i + 1) % 4]));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn square(x: f64, y: f64, heading: f64) -> FootprintOBB {
        FootprintOBB::new(Vec2::new(x, y), 1.0, 1.0, heading)
    }

    #[test]
    fn overlapping_and_disjoint_squares() {
        assert!(obb_intersect(&square(0.0, 0.0, 0.0), &square(1.0, 0.0, 0.0)));
        assert!(!obb_intersect(&square(0.0, 0.0, 0.0), &square(10.0, 0.0, 0.0)));
    }

    #[test]
    fn rotated_square_near_contact() {
        // Rotated corner reaches 2.9 - sqrt(2) = 1.4858 > 1, so they are disjoint.
        let a = square(0.0, 0.0, 0.0);
        let b = square(2.9, 0.0, FRAC_PI_4);
        assert!(!obb_intersect(&a, &b));
        assert!((min_clearance(&a, &b) - (2.9 - 2f64.sqrt() - 1.0)).abs() < 1e-12);
        let b = square(2.3, 0.0, FRAC_PI_4);
        assert!(obb_intersect(&a, &b));
    }

    #[test]
    fn face_to_face_gap() {
        let a = square(0.0, 0.0, 0.0);
        assert_eq!(min_clearance(&a, &square(5.0, 0.0, 0.0)), 3.0);
        assert_eq!(min_clearance(&a, &square(1.5, 0.5, 0.0)), 0.0);
    }

    #[test]
    fn corners_are_inside_boundary() {
        let b = FootprintOBB::new(Vec2::new(1.0, 2.0), 2.25, 0.95, 0.7);
        for c in b.corners() {
            assert!(b.contains(c + (b.center - c) * 1e-9));
        }
    }
}
