//! Grasp detection by comparing a view of the scene after the grasp attempt
//! with a view taken after trying to drop whatever the hand holds.

use nalgebra::Point3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sim_env::objects::{spawn_object, ObjectRanges, Shape};
use crate::sim_env::Scene;

use super::render::{focal_from_fov, render_depth, Camera};
use super::{DepthImage, VisionError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorThresholds {
    /// Metres a pixel must change by to count.
    pub pixel_delta: f64,
    /// Changed pixels needed to call the grasp a success.
    pub count_threshold: usize,
}

impl Default for DetectorThresholds {
    fn default() -> Self {
        Self {
            pixel_delta: 0.01,
            count_threshold: 50,
        }
    }
}

/// Number of pixels whose depth differs by more than `pixel_delta`.
pub fn changed_pixels(before: &DepthImage, after: &DepthImage, pixel_delta: f64) -> Result<usize, VisionError> {
    if before.width != after.width || before.height != after.height {
        return Err(VisionError::Domain(format!(
            "image sizes differ: {}x{} vs {}x{}",
            before.width, before.height, after.width, after.height
        )));
    }
    Ok(before
        .data
        .iter()
        .zip(&after.data)
        .filter(|(a, b)| (*a - *b).abs() > pixel_delta)
        .count())
}

/// True iff at least `count_threshold` pixels changed by more than
/// `pixel_delta`: something left the hand when it was told to drop.
pub fn image_subtraction_success(
    before: &DepthImage,
    after: &DepthImage,
    pixel_delta: f64,
    count_threshold: usize,
) -> Result<bool, VisionError> {
    Ok(changed_pixels(before, after, pixel_delta)? >= count_threshold)
}

/// Scene pair for one drop test plus the ground truth.
#[derive(Debug, Clone)]
pub struct DropTest {
    pub shape: Shape,
    pub grasped: bool,
    pub before: DepthImage,
    pub after: DepthImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropTestConfig {
    pub image_size: usize,
    pub fov_deg: f64,
    pub far_plane: f64,
    pub table_height: f64,
    /// Palm height above the table after the lift.
    pub lift_height: f64,
    /// Camera height above the palm.
    pub camera_offset: f64,
    /// Gap between the palm and the top of a held object.
    pub hold_gap: f64,
    /// Independent uniform sensor noise amplitude per image.
    pub noise: f64,
    pub ranges: ObjectRanges,
    pub spawn_radius: f64,
}

impl Default for DropTestConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            fov_deg: 80.0,
            far_plane: 1.0,
            table_height: 0.0,
            lift_height: 0.25,
            camera_offset: 0.02,
            hold_gap: 0.01,
            noise: 0.003,
            ranges: ObjectRanges::default(),
            spawn_radius: 0.06,
        }
    }
}

fn add_noise<R: Rng + ?Sized>(img: &mut DepthImage, amplitude: f64, far: f64, rng: &mut R) {
    if amplitude <= 0.0 {
        return;
    }
    for v in &mut img.data {
        *v = (*v + rng.random_range(-amplitude..=amplitude)).clamp(0.0, far);
    }
}

/// Renders the two views of a drop test. When `grasped` the object hangs
/// below the lifted palm in the first view and lies on the table under it
/// in the second; otherwise it rests on the table in both.
pub fn synthesize_drop_test<R: Rng + ?Sized>(
    cfg: &DropTestConfig,
    shape: Shape,
    grasped: bool,
    rng: &mut R,
) -> Result<DropTest, VisionError> {
    let mut object = spawn_object(shape, &cfg.ranges, cfg.spawn_radius, cfg.table_height, rng);
    let palm_z = cfg.table_height + cfg.lift_height;
    let palm = Point3::new(
        object.position[0] + rng.random_range(-0.01..=0.01),
        object.position[1] + rng.random_range(-0.01..=0.01),
        palm_z,
    );
    let camera = Camera::looking_down(
        cfg.image_size,
        cfg.image_size,
        focal_from_fov(cfg.image_size, cfg.fov_deg),
        cfg.far_plane,
        palm + nalgebra::Vector3::z() * cfg.camera_offset,
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    )?;
    let table = Some(cfg.table_height);
    let resting = Scene {
        objects: vec![object],
        table_height: table,
    };
    let mut after = render_depth(&resting, &camera);
    let mut before = if grasped {
        object.position[2] = palm_z - cfg.hold_gap - object.dims.half_height();
        render_depth(
            &Scene {
                objects: vec![object],
                table_height: table,
            },
            &camera,
        )
    } else {
        after.clone()
    };
    add_noise(&mut before, cfg.noise, cfg.far_plane, rng);
    add_noise(&mut after, cfg.noise, cfg.far_plane, rng);
    Ok(DropTest {
        shape,
        grasped,
        before,
        after,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_images_never_succeed() {
        let img = DepthImage::filled(16, 16, 0.4);
        assert!(!image_subtraction_success(&img, &img, 0.01, 1).unwrap());
    }

    #[test]
    fn noise_below_delta_ignored() {
        let a = DepthImage::filled(16, 16, 0.4);
        let mut b = a.clone();
        b.set(3, 4, 0.405);
        assert!(!image_subtraction_success(&a, &b, 0.01, 1).unwrap());
        b.set(3, 4, 0.42);
        assert!(image_subtraction_success(&a, &b, 0.01, 1).unwrap());
        assert!(!image_subtraction_success(&a, &b, 0.01, 2).unwrap());
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let a = DepthImage::filled(16, 16, 0.4);
        let b = DepthImage::filled(16, 8, 0.4);
        assert!(image_subtraction_success(&a, &b, 0.01, 1).is_err());
    }

    #[test]
    fn dropped_object_detected() {
        let cfg = DropTestConfig::default();
        let th = DetectorThresholds::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for shape in Shape::ALL {
            let hit = synthesize_drop_test(&cfg, shape, true, &mut rng).unwrap();
            assert!(
                image_subtraction_success(&hit.before, &hit.after, th.pixel_delta, th.count_threshold).unwrap(),
                "{shape}"
            );
            let miss = synthesize_drop_test(&cfg, shape, false, &mut rng).unwrap();
            assert!(!image_subtraction_success(&miss.before, &miss.after, th.pixel_delta, th.count_threshold).unwrap());
        }
    }
}
