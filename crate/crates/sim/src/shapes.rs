//! Solid primitives, ray intersection and world-aligned bounding boxes.

use nalgebra::{Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Cuboid {
        half: [f64; 3],
    },
    Sphere {
        radius: f64,
    },
    /// Capped cylinder along the local z axis.
    Cylinder {
        radius: f64,
        half_height: f64,
    },
}

/// What a rendered pixel belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum PartId {
    Object(usize),
    Cabinet,
    Drawer(usize),
    Handle(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub pose: Isometry3<f64>,
    pub color: [u8; 3],
    pub id: PartId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub normal: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        for i in 0..3 {
            out.min[i] = out.min[i].min(other.min[i]);
            out.max[i] = out.max[i].max(other.max[i]);
        }
        out
    }

    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] < other.max[i] && other.min[i] < self.max[i])
    }

    pub fn inflate(&self, margin: f64) -> Aabb {
        let mut out = *self;
        for i in 0..3 {
            out.min[i] -= margin;
            out.max[i] += margin;
        }
        out
    }
}

impl Primitive {
    pub fn aabb(&self) -> Aabb {
        let c = self.pose.translation.vector;
        let r = self.pose.rotation.to_rotation_matrix();
        let m = r.matrix();
        let ext: [f64; 3] = match self.shape {
            Shape::Cuboid { half } => {
                std::array::from_fn(|i| (0..3).map(|j| m[(i, j)].abs() * half[j]).sum())
            }
            Shape::Sphere { radius } => [radius; 3],
            Shape::Cylinder {
                radius,
                half_height,
            } => std::array::from_fn(|i| {
                let a = m[(i, 2)];
                a.abs() * half_height + radius * (1.0 - a * a).max(0.0).sqrt()
            }),
        };
        Aabb {
            min: std::array::from_fn(|i| c[i] - ext[i]),
            max: std::array::from_fn(|i| c[i] + ext[i]),
        }
    }

    /// Nearest intersection with `t > t_min` along `origin + t·dir`.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>, t_min: f64) -> Option<Hit> {
        let o = self.pose.inverse_transform_point(origin);
        let d = self.pose.inverse_transform_vector(dir);
        let (t, n) = match self.shape {
            Shape::Cuboid { half } => cuboid(&o, &d, half, t_min)?,
            Shape::Sphere { radius } => sphere(&o, &d, radius, t_min)?,
            Shape::Cylinder {
                radius,
                half_height,
            } => cylinder(&o, &d, radius, half_height, t_min)?,
        };
        Some(Hit {
            t,
            normal: self.pose.rotation * n,
        })
    }

    /// Whether a world point lies inside the solid, with tolerance `eps`.
    pub fn contains(&self, p: &Point3<f64>, eps: f64) -> bool {
        let l = self.pose.inverse_transform_point(p);
        match self.shape {
            Shape::Cuboid { half } => (0..3).all(|i| l[i].abs() <= half[i] + eps),
            Shape::Sphere { radius } => l.coords.norm() <= radius + eps,
            Shape::Cylinder {
                radius,
                half_height,
            } => l.z.abs() <= half_height + eps && l.x.hypot(l.y) <= radius + eps,
        }
    }
}

fn cuboid(
    o: &Point3<f64>,
    d: &Vector3<f64>,
    half: [f64; 3],
    t_min: f64,
) -> Option<(f64, Vector3<f64>)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    let mut axis0 = 0;
    let mut axis1 = 0;
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if o[i].abs() > half[i] {
                return None;
            }
            continue;
        }
        let a = (-half[i] - o[i]) / d[i];
        let b = (half[i] - o[i]) / d[i];
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        if near > t0 {
            t0 = near;
            axis0 = i;
        }
        if far < t1 {
            t1 = far;
            axis1 = i;
        }
    }
    if t0 > t1 {
        return None;
    }
    let (t, axis, sign) = if t0 > t_min {
        (t0, axis0, -d[axis0].signum())
    } else if t1 > t_min {
        (t1, axis1, d[axis1].signum())
    } else {
        return None;
    };
    let mut n = Vector3::zeros();
    n[axis] = sign;
    Some((t, n))
}

fn sphere(o: &Point3<f64>, d: &Vector3<f64>, r: f64, t_min: f64) -> Option<(f64, Vector3<f64>)> {
    let a = d.norm_squared();
    let b = o.coords.dot(d);
    let c = o.coords.norm_squared() - r * r;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t = [(-b - sq) / a, (-b + sq) / a]
        .into_iter()
        .find(|t| *t > t_min)?;
    Some((t, (o.coords + d * t) / r))
}

fn cylinder(
    o: &Point3<f64>,
    d: &Vector3<f64>,
    r: f64,
    h: f64,
    t_min: f64,
) -> Option<(f64, Vector3<f64>)> {
    let mut best: Option<(f64, Vector3<f64>)> = None;
    let mut consider = |t: f64, n: Vector3<f64>| {
        if t > t_min && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, n));
        }
    };
    let a = d.x * d.x + d.y * d.y;
    if a > 1e-18 {
        let b = o.x * d.x + o.y * d.y;
        let c = o.x * o.x + o.y * o.y - r * r;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / a, (-b + sq) / a] {
                let z = o.z + d.z * t;
                if z.abs() <= h {
                    consider(
                        t,
                        Vector3::new((o.x + d.x * t) / r, (o.y + d.y * t) / r, 0.0),
                    );
                }
            }
        }
    }
    if d.z.abs() > 1e-15 {
        for cap in [-h, h] {
            let t = (cap - o.z) / d.z;
            let (x, y) = (o.x + d.x * t, o.y + d.y * t);
            if x * x + y * y <= r * r {
                consider(t, Vector3::new(0.0, 0.0, cap.signum()));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Translation3, UnitQuaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prim(shape: Shape, pose: Isometry3<f64>) -> Primitive {
        Primitive {
            shape,
            pose,
            color: [0; 3],
            id: PartId::Cabinet,
        }
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ),
            UnitQuaternion::from_euler_angles(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-3.0..3.0),
            ),
        )
    }

    fn random_shape(rng: &mut ChaCha8Rng) -> Shape {
        match rng.gen_range(0..3) {
            0 => Shape::Cuboid {
                half: [
                    rng.gen_range(0.05..0.5),
                    rng.gen_range(0.05..0.5),
                    rng.gen_range(0.05..0.5),
                ],
            },
            1 => Shape::Sphere {
                radius: rng.gen_range(0.05..0.5),
            },
            _ => Shape::Cylinder {
                radius: rng.gen_range(0.05..0.5),
                half_height: rng.gen_range(0.05..0.5),
            },
        }
    }

    #[test]
    fn axis_aligned_examples() {
        let b = prim(
            Shape::Cuboid {
                half: [1.0, 1.0, 1.0],
            },
            Isometry3::identity(),
        );
        let h = b
            .intersect(
                &Point3::new(0.0, 0.0, 5.0),
                &Vector3::new(0.0, 0.0, -1.0),
                0.0,
            )
            .unwrap();
        assert!((h.t - 4.0).abs() < 1e-12);
        assert_eq!(h.normal, Vector3::new(0.0, 0.0, 1.0));
        let s = prim(
            Shape::Sphere { radius: 1.0 },
            Isometry3::translation(0.0, 0.0, 0.0),
        );
        let h = s
            .intersect(
                &Point3::new(-3.0, 0.0, 0.0),
                &Vector3::new(2.0, 0.0, 0.0),
                0.0,
            )
            .unwrap();
        assert!((h.t - 1.0).abs() < 1e-12);
        let c = prim(
            Shape::Cylinder {
                radius: 0.5,
                half_height: 1.0,
            },
            Isometry3::identity(),
        );
        assert!(c
            .intersect(
                &Point3::new(0.6, 0.0, 5.0),
                &Vector3::new(0.0, 0.0, -1.0),
                0.0
            )
            .is_none());
        let h = c
            .intersect(
                &Point3::new(0.4, 0.0, 5.0),
                &Vector3::new(0.0, 0.0, -1.0),
                0.0,
            )
            .unwrap();
        assert!((h.t - 4.0).abs() < 1e-12);
        let h = c
            .intersect(
                &Point3::new(3.0, 0.0, 0.3),
                &Vector3::new(-1.0, 0.0, 0.0),
                0.0,
            )
            .unwrap();
        assert!((h.t - 2.5).abs() < 1e-12);
    }

    // Hits lie on the surface, the segment before the hit is outside, and the
    // sampled interior is reported inside.
    #[test]
    fn hits_lie_on_surface_and_are_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let p = prim(random_shape(&mut rng), random_pose(&mut rng));
            let o = Point3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            if p.contains(&o, 1e-9) {
                continue;
            }
            let target = p.pose.translation.vector
                + Vector3::new(
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                );
            let d = target - o.coords;
            let Some(hit) = p.intersect(&o, &d, 0.0) else {
                continue;
            };
            let x = o + d * hit.t;
            assert!(p.contains(&x, 1e-9));
            assert!((hit.normal.norm() - 1.0).abs() < 1e-9);
            for k in 1..50 {
                let y = o + d * (hit.t * k as f64 / 50.0 - 1e-9);
                assert!(!p.contains(&y, -1e-9), "entered before hit");
            }
        }
    }

    #[test]
    fn aabb_contains_surface_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..300 {
            let p = prim(random_shape(&mut rng), random_pose(&mut rng));
            let bb = p.aabb();
            for _ in 0..50 {
                let dir = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let o = Point3::from(p.pose.translation.vector + dir.normalize() * 10.0);
                if let Some(h) = p.intersect(&o, &-dir, 0.0) {
                    let x = o - dir * h.t;
                    for i in 0..3 {
                        assert!(x[i] >= bb.min[i] - 1e-9 && x[i] <= bb.max[i] + 1e-9);
                    }
                }
            }
        }
    }
}
