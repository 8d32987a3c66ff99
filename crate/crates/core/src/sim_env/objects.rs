use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Solid, SolidKind};

use super::EnvError;

/// Object classes of the grasp success table, in report row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Cuboid,
    Sphere,
    Ellipsoid,
    Cylinder,
    Can,
    Coin,
    Screwdriver,
}

impl Shape {
    pub const ALL: [Shape; 7] = [
        Shape::Cuboid,
        Shape::Sphere,
        Shape::Ellipsoid,
        Shape::Cylinder,
        Shape::Can,
        Shape::Coin,
        Shape::Screwdriver,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Cuboid => "cuboid",
            Shape::Sphere => "sphere",
            Shape::Ellipsoid => "ellipsoid",
            Shape::Cylinder => "cylinder",
            Shape::Can => "can",
            Shape::Coin => "coin",
            Shape::Screwdriver => "screwdriver",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Shape::ALL
            .into_iter()
            .find(|shape| shape.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| EnvError::Config(format!("unknown object shape `{s}`")))
    }
}

/// Per-shape parameters, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Dimensions {
    Cuboid {
        size: [f64; 3],
    },
    Sphere {
        radius: f64,
    },
    /// Semi-axes; the third is vertical.
    Ellipsoid {
        radii: [f64; 3],
    },
    Cylinder {
        radius: f64,
        height: f64,
    },
    Can {
        radius: f64,
        height: f64,
    },
    Coin {
        radius: f64,
        thickness: f64,
    },
    /// Lies on its side along the local x axis: handle then shaft.
    Screwdriver {
        handle_radius: f64,
        handle_length: f64,
        shaft_radius: f64,
        shaft_length: f64,
    },
}

impl Dimensions {
    pub fn shape(&self) -> Shape {
        match self {
            Dimensions::Cuboid { .. } => Shape::Cuboid,
            Dimensions::Sphere { .. } => Shape::Sphere,
            Dimensions::Ellipsoid { .. } => Shape::Ellipsoid,
            Dimensions::Cylinder { .. } => Shape::Cylinder,
            Dimensions::Can { .. } => Shape::Can,
            Dimensions::Coin { .. } => Shape::Coin,
            Dimensions::Screwdriver { .. } => Shape::Screwdriver,
        }
    }

    fn values(&self) -> Vec<f64> {
        match *self {
            Dimensions::Cuboid { size } => size.to_vec(),
            Dimensions::Sphere { radius } => vec![radius],
            Dimensions::Ellipsoid { radii } => radii.to_vec(),
            Dimensions::Cylinder { radius, height } | Dimensions::Can { radius, height } => {
                vec![radius, height]
            }
            Dimensions::Coin { radius, thickness } => vec![radius, thickness],
            Dimensions::Screwdriver {
                handle_radius,
                handle_length,
                shaft_radius,
                shaft_length,
            } => vec![handle_radius, handle_length, shaft_radius, shaft_length],
        }
    }

    /// Height of the object centre above its resting base.
    pub fn half_height(&self) -> f64 {
        match *self {
            Dimensions::Cuboid { size } => size[2] / 2.0,
            Dimensions::Sphere { radius } => radius,
            Dimensions::Ellipsoid { radii } => radii[2],
            Dimensions::Cylinder { height, .. } | Dimensions::Can { height, .. } => height / 2.0,
            Dimensions::Coin { thickness, .. } => thickness / 2.0,
            Dimensions::Screwdriver { handle_radius, .. } => handle_radius,
        }
    }

    pub fn volume(&self) -> f64 {
        let cyl = |r: f64, h: f64| PI * r * r * h;
        match *self {
            Dimensions::Cuboid { size } => size.iter().product(),
            Dimensions::Sphere { radius } => 4.0 / 3.0 * PI * radius.powi(3),
            Dimensions::Ellipsoid { radii } => 4.0 / 3.0 * PI * radii.iter().product::<f64>(),
            Dimensions::Cylinder { radius, height } | Dimensions::Can { radius, height } => cyl(radius, height),
            Dimensions::Coin { radius, thickness } => cyl(radius, thickness),
            Dimensions::Screwdriver {
                handle_radius,
                handle_length,
                shaft_radius,
                shaft_length,
            } => cyl(handle_radius, handle_length) + cyl(shaft_radius, shaft_length),
        }
    }
}

/// A rigid object on or above the table. `position` is the object centre;
/// a resting object has its centre `half_height` above the table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectPrimitive {
    pub dims: Dimensions,
    pub position: [f64; 3],
    pub yaw: f64,
    /// Kilograms.
    pub mass: f64,
}

const DENSITY: f64 = 600.0;

impl ObjectPrimitive {
    pub fn new(dims: Dimensions, position: [f64; 3], yaw: f64) -> Result<Self, EnvError> {
        let obj = Self {
            dims,
            position,
            yaw,
            mass: dims.volume() * DENSITY,
        };
        obj.validate()?;
        Ok(obj)
    }

    pub fn shape(&self) -> Shape {
        self.dims.shape()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if let Some(bad) = self.dims.values().into_iter().find(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(EnvError::Config(format!(
                "{} dimensions must be positive, got {bad}",
                self.shape()
            )));
        }
        if !self.position.iter().all(|v| v.is_finite()) || !self.yaw.is_finite() {
            return Err(EnvError::Config(format!("{} pose must be finite", self.shape())));
        }
        if !(self.mass.is_finite() && self.mass >= 0.0) {
            return Err(EnvError::Config(format!("{} mass must be non-negative", self.shape())));
        }
        Ok(())
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::from(self.position)
    }

    pub fn pose(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(Vector3::from(self.position)),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw),
        )
    }

    /// Height of the object's resting base: equals the table height while
    /// the object rests and rises one-for-one as it is lifted.
    pub fn base_height(&self) -> f64 {
        self.position[2] - self.dims.half_height()
    }

    /// Places the object so that its base rests at `table_height`.
    pub fn rest_on(&mut self, table_height: f64) {
        self.position[2] = table_height + self.dims.half_height();
    }

    /// Primitive decomposition in world coordinates.
    pub fn solids(&self) -> Vec<Solid> {
        let pose = self.pose();
        let local = |x: f64, y: f64, z: f64, rot: UnitQuaternion<f64>| {
            pose * Isometry3::from_parts(Translation3::new(x, y, z), rot)
        };
        let upright = UnitQuaternion::identity();
        match self.dims {
            Dimensions::Cuboid { size } => vec![Solid::new(
                SolidKind::Box {
                    half_extents: Vector3::from(size) / 2.0,
                },
                pose,
            )],
            Dimensions::Sphere { radius } => vec![Solid::new(SolidKind::Sphere { radius }, pose)],
            Dimensions::Ellipsoid { radii } => vec![Solid::new(
                SolidKind::Ellipsoid {
                    radii: Vector3::from(radii),
                },
                pose,
            )],
            Dimensions::Cylinder { radius, height } => vec![Solid::new(
                SolidKind::Cylinder {
                    radius,
                    half_height: height / 2.0,
                },
                pose,
            )],
            Dimensions::Can { radius, height } => {
                // Body plus a recessed lid rim.
                let rim = 0.006f64.min(height / 4.0);
                let body = height - rim;
                vec![
                    Solid::new(
                        SolidKind::Cylinder {
                            radius,
                            half_height: body / 2.0,
                        },
                        local(0.0, 0.0, -rim / 2.0, upright),
                    ),
                    Solid::new(
                        SolidKind::Cylinder {
                            radius: radius * 0.85,
                            half_height: rim / 2.0,
                        },
                        local(0.0, 0.0, height / 2.0 - rim / 2.0, upright),
                    ),
                ]
            }
            Dimensions::Coin { radius, thickness } => vec![Solid::new(
                SolidKind::Cylinder {
                    radius,
                    half_height: thickness / 2.0,
                },
                pose,
            )],
            Dimensions::Screwdriver {
                handle_radius,
                handle_length,
                shaft_radius,
                shaft_length,
            } => {
                let along_x = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), FRAC_PI_2);
                let total = handle_length + shaft_length;
                let handle_x = -total / 2.0 + handle_length / 2.0;
                let shaft_x = total / 2.0 - shaft_length / 2.0;
                // The shaft rests on the table too, so it sits below the handle axis.
                let shaft_z = shaft_radius - handle_radius;
                vec![
                    Solid::new(
                        SolidKind::Cylinder {
                            radius: handle_radius,
                            half_height: handle_length / 2.0,
                        },
                        local(handle_x, 0.0, 0.0, along_x),
                    ),
                    Solid::new(
                        SolidKind::Cylinder {
                            radius: shaft_radius,
                            half_height: shaft_length / 2.0,
                        },
                        local(shaft_x, 0.0, shaft_z, along_x),
                    ),
                ]
            }
        }
    }

    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.solids()
            .iter()
            .map(|s| s.signed_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Outward surface normal estimated from the distance field.
    pub fn normal_at(&self, p: &Point3<f64>) -> Vector3<f64> {
        let h = 1e-5;
        let mut n = Vector3::zeros();
        for i in 0..3 {
            let mut e = Vector3::zeros();
            e[i] = h;
            n[i] = self.signed_distance(&(p + e)) - self.signed_distance(&(p - e));
        }
        n.try_normalize(1e-12).unwrap_or_else(Vector3::z)
    }
}

/// Closed interval `[min, max]`.
pub type Range = [f64; 2];

/// Sampling ranges for spawned objects, metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectRanges {
    pub cuboid_width: Range,
    pub cuboid_height: Range,
    pub sphere_radius: Range,
    pub ellipsoid_radius: Range,
    pub ellipsoid_height: Range,
    pub cylinder_radius: Range,
    pub cylinder_height: Range,
    pub can_radius: Range,
    pub can_height: Range,
    pub coin_radius: Range,
    pub coin_thickness: Range,
    pub screwdriver_handle_radius: Range,
    pub screwdriver_length: Range,
}

impl Default for ObjectRanges {
    fn default() -> Self {
        Self {
            cuboid_width: [0.04, 0.06],
            cuboid_height: [0.08, 0.14],
            sphere_radius: [0.03, 0.045],
            ellipsoid_radius: [0.025, 0.035],
            ellipsoid_height: [0.04, 0.06],
            cylinder_radius: [0.025, 0.035],
            cylinder_height: [0.10, 0.15],
            can_radius: [0.030, 0.034],
            can_height: [0.11, 0.125],
            coin_radius: [0.010, 0.015],
            coin_thickness: [0.0015, 0.0025],
            screwdriver_handle_radius: [0.012, 0.016],
            screwdriver_length: [0.15, 0.22],
        }
    }
}

impl ObjectRanges {
    pub fn validate(&self) -> Result<(), EnvError> {
        for (name, [lo, hi]) in [
            ("cuboid_width", self.cuboid_width),
            ("cuboid_height", self.cuboid_height),
            ("sphere_radius", self.sphere_radius),
            ("ellipsoid_radius", self.ellipsoid_radius),
            ("ellipsoid_height", self.ellipsoid_height),
            ("cylinder_radius", self.cylinder_radius),
            ("cylinder_height", self.cylinder_height),
            ("can_radius", self.can_radius),
            ("can_height", self.can_height),
            ("coin_radius", self.coin_radius),
            ("coin_thickness", self.coin_thickness),
            ("screwdriver_handle_radius", self.screwdriver_handle_radius),
            ("screwdriver_length", self.screwdriver_length),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(EnvError::Config(format!(
                    "object range {name} must satisfy 0 < min <= max, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: Range) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Random dimensions for `shape` within `ranges`.
pub fn sample_dimensions<R: Rng + ?Sized>(shape: Shape, ranges: &ObjectRanges, rng: &mut R) -> Dimensions {
    match shape {
        Shape::Cuboid => {
            let w = draw(rng, ranges.cuboid_width);
            let d = draw(rng, ranges.cuboid_width);
            let h = draw(rng, ranges.cuboid_height);
            Dimensions::Cuboid { size: [w, d, h] }
        }
        Shape::Sphere => Dimensions::Sphere {
            radius: draw(rng, ranges.sphere_radius),
        },
        Shape::Ellipsoid => {
            let a = draw(rng, ranges.ellipsoid_radius);
            let b = draw(rng, ranges.ellipsoid_radius);
            let c = draw(rng, ranges.ellipsoid_height);
            Dimensions::Ellipsoid { radii: [a, b, c] }
        }
        Shape::Cylinder => Dimensions::Cylinder {
            radius: draw(rng, ranges.cylinder_radius),
            height: draw(rng, ranges.cylinder_height),
        },
        Shape::Can => Dimensions::Can {
            radius: draw(rng, ranges.can_radius),
            height: draw(rng, ranges.can_height),
        },
        Shape::Coin => Dimensions::Coin {
            radius: draw(rng, ranges.coin_radius),
            thickness: draw(rng, ranges.coin_thickness),
        },
        Shape::Screwdriver => {
            let handle_radius = draw(rng, ranges.screwdriver_handle_radius);
            let total = draw(rng, ranges.screwdriver_length);
            Dimensions::Screwdriver {
                handle_radius,
                handle_length: total * 0.45,
                shaft_radius: handle_radius * 0.3,
                shaft_length: total * 0.55,
            }
        }
    }
}

/// Spawns `shape` resting on the table at a random position within
/// `spawn_radius` of the workspace origin (a square window) and a random yaw.
pub fn spawn_object<R: Rng + ?Sized>(
    shape: Shape,
    ranges: &ObjectRanges,
    spawn_radius: f64,
    table_height: f64,
    rng: &mut R,
) -> ObjectPrimitive {
    let dims = sample_dimensions(shape, ranges, rng);
    let x = draw(rng, [-spawn_radius, spawn_radius]);
    let y = draw(rng, [-spawn_radius, spawn_radius]);
    let yaw = rng.random_range(-PI..PI);
    let mut obj = ObjectPrimitive {
        dims,
        position: [x, y, 0.0],
        yaw,
        mass: dims.volume() * DENSITY,
    };
    obj.rest_on(table_height);
    obj
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shape_names_round_trip() {
        for s in Shape::ALL {
            assert_eq!(s.name().parse::<Shape>().unwrap(), s);
        }
        assert!("teapot".parse::<Shape>().is_err());
    }

    #[test]
    fn sphere_radius_within_range() {
        let ranges = ObjectRanges::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let obj = spawn_object(Shape::Sphere, &ranges, 0.06, 0.0, &mut rng);
            let Dimensions::Sphere { radius } = obj.dims else {
                panic!("wrong shape")
            };
            assert!(radius >= ranges.sphere_radius[0] && radius <= ranges.sphere_radius[1]);
            assert!(obj.position[0].abs() <= 0.06 && obj.position[1].abs() <= 0.06);
        }
    }

    #[test]
    fn spawn_is_deterministic() {
        let ranges = ObjectRanges::default();
        let a = spawn_object(Shape::Can, &ranges, 0.06, 0.0, &mut ChaCha8Rng::seed_from_u64(9));
        let b = spawn_object(Shape::Can, &ranges, 0.06, 0.0, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn coin_is_thin() {
        let ranges = ObjectRanges::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let Dimensions::Coin { radius, thickness } = spawn_object(Shape::Coin, &ranges, 0.06, 0.0, &mut rng).dims
            else {
                panic!("wrong shape")
            };
            assert!(thickness * 5.0 < 2.0 * radius);
        }
    }

    #[test]
    fn every_shape_rests_on_the_table() {
        let ranges = ObjectRanges::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for shape in Shape::ALL {
            let obj = spawn_object(shape, &ranges, 0.06, 0.1, &mut rng);
            assert_eq!(obj.shape(), shape);
            assert!((obj.base_height() - 0.1).abs() < 1e-12);
            let lowest = obj.solids().iter().map(|s| s.min_z()).fold(f64::INFINITY, f64::min);
            assert!((lowest - 0.1).abs() < 1e-9, "{shape}: {lowest}");
        }
    }

    #[test]
    fn invalid_dimensions_rejected() {
        let bad = ObjectPrimitive::new(Dimensions::Sphere { radius: 0.0 }, [0.0; 3], 0.0);
        assert!(bad.is_err());
        let nan = ObjectPrimitive::new(Dimensions::Sphere { radius: 0.03 }, [f64::NAN, 0.0, 0.0], 0.0);
        assert!(nan.is_err());
    }

    #[test]
    fn normals_point_outward() {
        let obj = ObjectPrimitive::new(
            Dimensions::Cylinder {
                radius: 0.03,
                height: 0.1,
            },
            [0.0, 0.0, 0.05],
            0.0,
        )
        .unwrap();
        let n = obj.normal_at(&Point3::new(0.03, 0.0, 0.05));
        assert!((n - Vector3::x()).norm() < 1e-6);
        let top = obj.normal_at(&Point3::new(0.0, 0.0, 0.1));
        assert!((top - Vector3::z()).norm() < 1e-6);
    }
}
