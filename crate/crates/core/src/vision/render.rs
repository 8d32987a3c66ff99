use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::sim_env::objects::{Dimensions, ObjectPrimitive};
use crate::sim_env::Scene;

use super::{DepthImage, VisionError};

/// Pinhole depth camera. The camera frame has x right, y down and looks
/// along +z; `pose` maps camera coordinates to world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels.
    pub focal: f64,
    pub far_plane: f64,
    pub pose: Isometry3<f64>,
}

/// Serializable camera description used by scene files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    pub far_plane: f64,
    pub position: [f64; 3],
    pub yaw: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            fov_deg: 80.0,
            far_plane: 1.0,
            position: [0.0, 0.0, 0.5],
            yaw: 0.0,
        }
    }
}

impl CameraSpec {
    pub fn camera(&self) -> Result<Camera, VisionError> {
        let focal = focal_from_fov(self.width, self.fov_deg);
        Camera::looking_down(
            self.width,
            self.height,
            focal,
            self.far_plane,
            Point3::from(self.position),
            self.yaw,
        )
    }
}

pub fn focal_from_fov(width: usize, fov_deg: f64) -> f64 {
    if !(fov_deg > 0.0 && fov_deg < 180.0) {
        return 0.0;
    }
    width as f64 / 2.0 / (fov_deg.to_radians() / 2.0).tan()
}

impl Camera {
    pub fn new(
        width: usize,
        height: usize,
        focal: f64,
        far_plane: f64,
        pose: Isometry3<f64>,
    ) -> Result<Self, VisionError> {
        if width == 0 || height == 0 {
            return Err(VisionError::Config(format!(
                "image size must be positive, got {width}x{height}"
            )));
        }
        if !(focal.is_finite() && focal > 0.0) {
            return Err(VisionError::Config(format!(
                "focal length must be positive, got {focal}"
            )));
        }
        if !(far_plane.is_finite() && far_plane > 0.0) {
            return Err(VisionError::Config(format!(
                "far plane must be positive, got {far_plane}"
            )));
        }
        Ok(Self {
            width,
            height,
            focal,
            far_plane,
            pose,
        })
    }

    /// Camera at `position` looking straight down, image x along the world
    /// direction given by `yaw`.
    pub fn looking_down(
        width: usize,
        height: usize,
        focal: f64,
        far_plane: f64,
        position: Point3<f64>,
        yaw: f64,
    ) -> Result<Self, VisionError> {
        // Camera z -> world -z, camera x -> world x, camera y -> world -y,
        // then yaw about world z.
        let flip = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI);
        let turn = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
        let pose = Isometry3::from_parts(Translation3::from(position.coords), turn * flip);
        Self::new(width, height, focal, far_plane, pose)
    }

    /// World-space ray through the centre of pixel `(col, row)`, scaled so
    /// that its camera-frame z component is 1.
    pub fn pixel_ray(&self, col: usize, row: usize) -> (Point3<f64>, Vector3<f64>) {
        let cx = self.width as f64 / 2.0;
        let cy = self.height as f64 / 2.0;
        let d = Vector3::new(
            (col as f64 + 0.5 - cx) / self.focal,
            (row as f64 + 0.5 - cy) / self.focal,
            1.0,
        );
        (Point3::from(self.pose.translation.vector), self.pose.rotation * d)
    }

    /// Projects a world point to continuous pixel coordinates (pixel centres
    /// at half-integers). `None` behind the camera.
    pub fn project(&self, p: &Point3<f64>) -> Option<[f64; 2]> {
        let q = self.pose.inverse_transform_point(p);
        (q.z > 0.0).then(|| {
            [
                q.x / q.z * self.focal + self.width as f64 / 2.0,
                q.y / q.z * self.focal + self.height as f64 / 2.0,
            ]
        })
    }
}

/// Per-pixel z-depth of the nearest surface. Pixels that hit nothing
/// within the far plane read the far-plane distance.
pub fn render_depth(scene: &Scene, camera: &Camera) -> DepthImage {
    let solids: Vec<_> = scene.objects.iter().flat_map(|o| o.solids()).collect();
    let mut data = Vec::with_capacity(camera.width * camera.height);
    for row in 0..camera.height {
        for col in 0..camera.width {
            let (origin, dir) = camera.pixel_ray(col, row);
            let mut nearest = camera.far_plane;
            if let Some(table) = scene.table_height {
                if dir.z < 0.0 {
                    let t = (table - origin.z) / dir.z;
                    if t > 0.0 {
                        nearest = nearest.min(t);
                    }
                }
            }
            for s in &solids {
                if let Some(t) = s.ray_hit(&origin, &dir) {
                    nearest = nearest.min(t);
                }
            }
            data.push(nearest.max(0.0));
        }
    }
    DepthImage {
        width: camera.width,
        height: camera.height,
        data,
    }
}

/// One object in a scene file. Objects rest on the table unless
/// `resting` is false, in which case `position` is the centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObjectSpec {
    #[serde(flatten)]
    pub dims: Dimensions,
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    #[serde(default = "resting_default")]
    pub resting: bool,
}

fn resting_default() -> bool {
    true
}

/// A renderable scene description: camera, optional table and objects.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub camera: CameraSpec,
    pub table_height: Option<f64>,
    pub objects: Vec<SceneObjectSpec>,
}

impl SceneSpec {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, VisionError> {
        toml::from_str(text).map_err(|e| VisionError::Config(format!("{origin}: {e}")))
    }

    pub fn build(&self) -> Result<(Scene, Camera), VisionError> {
        let mut objects = Vec::with_capacity(self.objects.len());
        for o in &self.objects {
            let mut obj =
                ObjectPrimitive::new(o.dims, o.position, o.yaw).map_err(|e| VisionError::Config(e.to_string()))?;
            if o.resting {
                obj.rest_on(self.table_height.unwrap_or(0.0));
            }
            objects.push(obj);
        }
        if self.table_height.is_some_and(|h| !h.is_finite()) {
            return Err(VisionError::Config("table_height must be finite".into()));
        }
        let scene = Scene {
            objects,
            table_height: self.table_height,
        };
        Ok((scene, self.camera.camera()?))
    }

    pub fn render(&self) -> Result<DepthImage, VisionError> {
        let (scene, camera) = self.build()?;
        Ok(render_depth(&scene, &camera))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim_env::objects::{Dimensions, ObjectPrimitive};

    fn sphere(center: [f64; 3], radius: f64) -> ObjectPrimitive {
        ObjectPrimitive::new(Dimensions::Sphere { radius }, center, 0.0).unwrap()
    }

    #[test]
    fn empty_scene_reads_far_plane() {
        let cam = CameraSpec::default().camera().unwrap();
        let img = render_depth(&Scene::default(), &cam);
        assert_eq!(img.data.len(), 64 * 64);
        assert!(img.data.iter().all(|&d| d == cam.far_plane));
    }

    #[test]
    fn sphere_on_axis() {
        // Odd size puts a pixel centre exactly on the optical axis.
        let cam = Camera::looking_down(65, 65, 40.0, 5.0, Point3::new(0.0, 0.0, 1.0), 0.0).unwrap();
        let scene = Scene {
            objects: vec![sphere([0.0, 0.0, 0.0], 0.3)],
            table_height: None,
        };
        let img = render_depth(&scene, &cam);
        assert!((img.get(32, 32) - 0.7).abs() < 1e-12);
        // Analytic off-axis check for a neighbouring pixel.
        let (o, d) = cam.pixel_ray(40, 32);
        let oc = o.coords - Vector3::zeros();
        let (a, b, c) = (d.dot(&d), oc.dot(&d), oc.dot(&oc) - 0.09);
        let t = (-b - (b * b - a * c).sqrt()) / a;
        assert!((img.get(40, 32) - t).abs() < 1e-12);
    }

    #[test]
    fn degenerate_camera_rejected() {
        assert!(Camera::looking_down(8, 8, 0.0, 1.0, Point3::origin(), 0.0).is_err());
        assert!(Camera::looking_down(0, 8, 10.0, 1.0, Point3::origin(), 0.0).is_err());
        let spec = CameraSpec {
            fov_deg: 0.0,
            ..CameraSpec::default()
        };
        assert!(spec.camera().is_err());
    }

    #[test]
    fn co_moving_translation_invariant() {
        let objects = vec![
            sphere([0.02, -0.01, 0.04], 0.04),
            ObjectPrimitive::new(
                Dimensions::Cuboid {
                    size: [0.05, 0.04, 0.1],
                },
                [-0.05, 0.03, 0.05],
                0.4,
            )
            .unwrap(),
        ];
        let base = Scene {
            objects: objects.clone(),
            table_height: Some(0.0),
        };
        let cam = Camera::looking_down(32, 32, 20.0, 1.0, Point3::new(0.0, 0.0, 0.3), 0.2).unwrap();
        let shift = Vector3::new(0.25, -0.5, 0.125);
        let moved = Scene {
            objects: objects
                .iter()
                .map(|o| {
                    let mut o = *o;
                    for i in 0..3 {
                        o.position[i] += shift[i];
                    }
                    o
                })
                .collect(),
            table_height: Some(shift.z),
        };
        let mut cam2 = cam;
        cam2.pose.translation.vector += shift;
        let a = render_depth(&base, &cam);
        let b = render_depth(&moved, &cam2);
        let worst = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn projection_inverts_pixel_rays() {
        let cam = Camera::looking_down(32, 24, 20.0, 1.0, Point3::new(0.1, 0.0, 0.5), 0.7).unwrap();
        let (o, d) = cam.pixel_ray(5, 17);
        let p = o + d * 0.3;
        let [u, v] = cam.project(&p).unwrap();
        assert!((u - 5.5).abs() < 1e-9 && (v - 17.5).abs() < 1e-9);
    }

    #[test]
    fn scene_file_renders_sphere_on_axis() {
        let spec = SceneSpec::from_toml(
            "[camera]\nwidth = 65\nheight = 65\nfov_deg = 60.0\nfar_plane = 2.0\nposition = [0.0, 0.0, 1.0]\n\n[[objects]]\nshape = \"sphere\"\nradius = 0.1\n",
            "mem",
        )
        .unwrap();
        let img = spec.render().unwrap();
        // Sphere resting on z = 0 has its top at 0.2; camera at 1.0.
        assert!((img.get(32, 32) - 0.8).abs() < 1e-9);
        assert!(SceneSpec::from_toml("[[objects]]\nshape = \"teapot\"\n", "mem").is_err());
        let bad = SceneSpec::from_toml("[[objects]]\nshape = \"sphere\"\nradius = -1.0\n", "mem").unwrap();
        assert!(bad.build().is_err());
    }
}
