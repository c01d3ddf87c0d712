use serde::{Deserialize, Serialize};

/// A solid shape in continuous voxel coordinates (voxel `i` spans `[i, i+1)`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Sphere { center: [f64; 3], radius: f64 },
    /// Segment `p0 → p1` swept by a ball.
    Capsule { p0: [f64; 3], p1: [f64; 3], radius: f64 },
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Primitive {
    pub fn radius(&self) -> f64 {
        match *self {
            Primitive::Sphere { radius, .. } | Primitive::Capsule { radius, .. } => radius,
        }
    }

    /// Tight axis-aligned bounds `(lo, hi)`.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match *self {
            Primitive::Sphere { center, radius } => (center.map(|c| c - radius), center.map(|c| c + radius)),
            Primitive::Capsule { p0, p1, radius } => (
                [0, 1, 2].map(|a| p0[a].min(p1[a]) - radius),
                [0, 1, 2].map(|a| p0[a].max(p1[a]) + radius),
            ),
        }
    }

    /// Signed distance: negative inside.
    pub fn distance(&self, p: [f64; 3]) -> f64 {
        match *self {
            Primitive::Sphere { center, radius } => dot(sub(p, center), sub(p, center)).sqrt() - radius,
            Primitive::Capsule { p0, p1, radius } => {
                let d = sub(p1, p0);
                let len2 = dot(d, d);
                let t = if len2 > 0.0 {
                    (dot(sub(p, p0), d) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let q = [0, 1, 2].map(|a| p0[a] + t * d[a]);
                dot(sub(p, q), sub(p, q)).sqrt() - radius
            }
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.distance(p) <= 0.0
    }

    pub fn volume(&self) -> f64 {
        use std::f64::consts::PI;
        match *self {
            Primitive::Sphere { radius, .. } => 4.0 / 3.0 * PI * radius.powi(3),
            Primitive::Capsule { p0, p1, radius } => {
                let len = dot(sub(p1, p0), sub(p1, p0)).sqrt();
                PI * radius * radius * len + 4.0 / 3.0 * PI * radius.powi(3)
            }
        }
    }
}
