//! Analytic solids shared by the simulator (contact tests) and the depth
//! renderer (ray casting).

use nalgebra::{Isometry3, Point3, Vector3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolidKind {
    Sphere {
        radius: f64,
    },
    Ellipsoid {
        radii: Vector3<f64>,
    },
    /// Axis-aligned in its local frame.
    Box {
        half_extents: Vector3<f64>,
    },
    /// Capped cylinder along the local z axis.
    Cylinder {
        radius: f64,
        half_height: f64,
    },
}

/// A primitive placed in the world by a rigid transform (local to world).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solid {
    pub kind: SolidKind,
    pub pose: Isometry3<f64>,
}

const HIT_EPS: f64 = 1e-12;

impl Solid {
    pub fn new(kind: SolidKind, pose: Isometry3<f64>) -> Self {
        Self { kind, pose }
    }

    /// Smallest positive ray parameter at which `origin + t * dir` enters the
    /// solid. `dir` need not be unit length; `t` is in units of `dir`.
    pub fn ray_hit(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let o = self.pose.inverse_transform_point(origin).coords;
        let d = self.pose.inverse_transform_vector(dir);
        match self.kind {
            SolidKind::Sphere { radius } => hit_unit_sphere(&(o / radius), &(d / radius)),
            SolidKind::Ellipsoid { radii } => hit_unit_sphere(&o.component_div(&radii), &d.component_div(&radii)),
            SolidKind::Box { half_extents } => hit_box(&o, &d, &half_extents),
            SolidKind::Cylinder { radius, half_height } => hit_cylinder(&o, &d, radius, half_height),
        }
    }

    /// Signed distance from `p` to the surface, negative inside. Exact for
    /// spheres, boxes and cylinders; the usual first-order bound for
    /// ellipsoids.
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        let q = self.pose.inverse_transform_point(p).coords;
        match self.kind {
            SolidKind::Sphere { radius } => q.norm() - radius,
            SolidKind::Ellipsoid { radii } => {
                let k0 = q.component_div(&radii).norm();
                let k1 = q.component_div(&radii.component_mul(&radii)).norm();
                if k1 == 0.0 {
                    -radii.min()
                } else {
                    k0 * (k0 - 1.0) / k1
                }
            }
            SolidKind::Box { half_extents } => {
                let d = q.abs() - half_extents;
                let outside = d.map(|v| v.max(0.0)).norm();
                outside + d.max().min(0.0)
            }
            SolidKind::Cylinder { radius, half_height } => {
                let dr = q.xy().norm() - radius;
                let dz = q.z.abs() - half_height;
                let outside = f64::hypot(dr.max(0.0), dz.max(0.0));
                outside + dr.max(dz).min(0.0)
            }
        }
    }

    /// Lowest world z of the solid.
    pub fn min_z(&self) -> f64 {
        let c = self.pose.translation.vector;
        let r = self.pose.rotation;
        match self.kind {
            SolidKind::Sphere { radius } => c.z - radius,
            SolidKind::Ellipsoid { radii } => {
                // Support function of an ellipsoid along -z.
                let local_down = r.inverse_transform_vector(&Vector3::z());
                c.z - radii.component_mul(&local_down).norm()
            }
            SolidKind::Box { half_extents } => {
                let local_down = r.inverse_transform_vector(&Vector3::z());
                c.z - local_down.abs().dot(&half_extents)
            }
            SolidKind::Cylinder { radius, half_height } => {
                let axis = r.transform_vector(&Vector3::z());
                let radial = (1.0 - axis.z * axis.z).max(0.0).sqrt();
                c.z - axis.z.abs() * half_height - radial * radius
            }
        }
    }
}

fn hit_unit_sphere(o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let a = d.dot(d);
    if a == 0.0 {
        return None;
    }
    let b = o.dot(d);
    let c = o.dot(o) - 1.0;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = (-b - sq) / a;
    if t0 > HIT_EPS {
        return Some(t0);
    }
    let t1 = (-b + sq) / a;
    (t1 > HIT_EPS).then_some(t1)
}

fn hit_box(o: &Vector3<f64>, d: &Vector3<f64>, h: &Vector3<f64>) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for i in 0..3 {
        if d[i] == 0.0 {
            if o[i].abs() > h[i] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[i];
        let (mut t0, mut t1) = ((-h[i] - o[i]) * inv, (h[i] - o[i]) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    if t_near > HIT_EPS {
        Some(t_near)
    } else if t_far > HIT_EPS {
        Some(t_far)
    } else {
        None
    }
}

fn hit_cylinder(o: &Vector3<f64>, d: &Vector3<f64>, r: f64, hh: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > HIT_EPS && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    let a = d.x * d.x + d.y * d.y;
    if a > 0.0 {
        let b = o.x * d.x + o.y * d.y;
        let c = o.x * o.x + o.y * o.y - r * r;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / a, (-b + sq) / a] {
                if (o.z + t * d.z).abs() <= hh {
                    consider(t);
                }
            }
        }
    }
    if d.z != 0.0 {
        for cap in [-hh, hh] {
            let t = (cap - o.z) / d.z;
            let x = o.x + t * d.x;
            let y = o.y + t * d.y;
            if x * x + y * y <= r * r {
                consider(t);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Translation3, UnitQuaternion};

    fn at(x: f64, y: f64, z: f64) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::new(x, y, z), UnitQuaternion::identity())
    }

    #[test]
    fn sphere_hit_along_axis() {
        let s = Solid::new(SolidKind::Sphere { radius: 0.25 }, at(0.0, 0.0, 1.0));
        let t = s.ray_hit(&Point3::origin(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert!((t - 0.75).abs() < 1e-12);
        assert!(s.ray_hit(&Point3::origin(), &Vector3::new(1.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn ellipsoid_matches_sphere_when_round() {
        let e = Solid::new(
            SolidKind::Ellipsoid {
                radii: Vector3::repeat(0.3),
            },
            at(0.1, 0.0, 2.0),
        );
        let s = Solid::new(SolidKind::Sphere { radius: 0.3 }, at(0.1, 0.0, 2.0));
        let d = Vector3::new(0.05, 0.01, 1.0);
        let (a, b) = (
            e.ray_hit(&Point3::origin(), &d).unwrap(),
            s.ray_hit(&Point3::origin(), &d).unwrap(),
        );
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn box_and_cylinder_top_faces() {
        let down = Vector3::new(0.0, 0.0, -1.0);
        let eye = Point3::new(0.0, 0.0, 1.0);
        let b = Solid::new(
            SolidKind::Box {
                half_extents: Vector3::new(0.1, 0.2, 0.05),
            },
            at(0.0, 0.0, 0.05),
        );
        assert!((b.ray_hit(&eye, &down).unwrap() - 0.9).abs() < 1e-12);
        let c = Solid::new(
            SolidKind::Cylinder {
                radius: 0.03,
                half_height: 0.06,
            },
            at(0.0, 0.0, 0.06),
        );
        assert!((c.ray_hit(&eye, &down).unwrap() - 0.88).abs() < 1e-12);
        // Grazing past the side.
        let side = Point3::new(0.031, 0.0, 1.0);
        assert!(c.ray_hit(&side, &down).is_none());
    }

    #[test]
    fn lying_cylinder_side_hit() {
        let lying = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2);
        let c = Solid::new(
            SolidKind::Cylinder {
                radius: 0.01,
                half_height: 0.05,
            },
            Isometry3::from_parts(Translation3::new(0.0, 0.0, 0.01), lying),
        );
        let t = c
            .ray_hit(&Point3::new(0.04, 0.0, 1.0), &Vector3::new(0.0, 0.0, -1.0))
            .unwrap();
        assert!((t - 0.98).abs() < 1e-12);
        assert!((c.min_z() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn signed_distances() {
        let s = Solid::new(SolidKind::Sphere { radius: 1.0 }, at(0.0, 0.0, 0.0));
        assert!((s.signed_distance(&Point3::new(2.0, 0.0, 0.0)) - 1.0).abs() < 1e-12);
        let b = Solid::new(
            SolidKind::Box {
                half_extents: Vector3::new(1.0, 1.0, 1.0),
            },
            at(0.0, 0.0, 0.0),
        );
        assert!((b.signed_distance(&Point3::new(0.0, 0.0, 0.5)) + 0.5).abs() < 1e-12);
        assert!((b.signed_distance(&Point3::new(2.0, 2.0, 0.0)) - 2f64.sqrt()).abs() < 1e-12);
        let c = Solid::new(
            SolidKind::Cylinder {
                radius: 1.0,
                half_height: 1.0,
            },
            at(0.0, 0.0, 0.0),
        );
        assert!((c.signed_distance(&Point3::new(3.0, 0.0, 0.0)) - 2.0).abs() < 1e-12);
        assert!(c.signed_distance(&Point3::new(0.5, 0.0, 0.0)) < 0.0);
        let e = Solid::new(
            SolidKind::Ellipsoid {
                radii: Vector3::new(2.0, 1.0, 1.0),
            },
            at(0.0, 0.0, 0.0),
        );
        assert!(e.signed_distance(&Point3::new(1.9, 0.0, 0.0)) < 0.0);
        assert!(e.signed_distance(&Point3::new(2.1, 0.0, 0.0)) > 0.0);
    }
}
