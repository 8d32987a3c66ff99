//! On-disk grasp dataset: `<id>.depth.pgm`, `<id>.cpos.txt` and
//! `<id>.cneg.txt` side by side in one directory.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sim_env::objects::{spawn_object, ObjectRanges, Shape};
use crate::sim_env::Scene;

use super::pgm::{quantize, read_pgm, write_pgm};
use super::rect::{read_rect_file, write_rect_file, GraspLabel, GraspRectangle};
use super::render::{focal_from_fov, render_depth, Camera};
use super::{DepthImage, VisionError};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub depth: DepthImage,
    pub rects: Vec<GraspRectangle>,
}

impl Sample {
    pub fn positives(&self) -> impl Iterator<Item = &GraspRectangle> {
        self.rects.iter().filter(|r| r.label == GraspLabel::Positive)
    }

    pub fn negatives(&self) -> impl Iterator<Item = &GraspRectangle> {
        self.rects.iter().filter(|r| r.label == GraspLabel::Negative)
    }
}

pub fn sample_paths(dir: &Path, id: &str) -> [PathBuf; 3] {
    [
        dir.join(format!("{id}.depth.pgm")),
        dir.join(format!("{id}.cpos.txt")),
        dir.join(format!("{id}.cneg.txt")),
    ]
}

/// Writes one sample, returning the three paths written.
pub fn write_sample(dir: &Path, sample: &Sample) -> Result<[PathBuf; 3], VisionError> {
    let paths = sample_paths(dir, &sample.id);
    write_pgm(&paths[0], &sample.depth)?;
    let pos: Vec<_> = sample.positives().copied().collect();
    let neg: Vec<_> = sample.negatives().copied().collect();
    write_rect_file(&paths[1], &pos)?;
    write_rect_file(&paths[2], &neg)?;
    Ok(paths)
}

/// Loads one sample. A missing negative file counts as no negatives.
pub fn read_sample(dir: &Path, id: &str) -> Result<Sample, VisionError> {
    let [depth_path, pos_path, neg_path] = sample_paths(dir, id);
    let depth = read_pgm(&depth_path)?;
    let mut rects = read_rect_file(&pos_path, GraspLabel::Positive)?;
    if neg_path.exists() {
        rects.extend(read_rect_file(&neg_path, GraspLabel::Negative)?);
    }
    Ok(Sample {
        id: id.to_string(),
        depth,
        rects,
    })
}

/// Sample ids in a directory, sorted.
pub fn list_ids(dir: &Path) -> Result<Vec<String>, VisionError> {
    let entries = std::fs::read_dir(dir).map_err(|e| VisionError::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| VisionError::io(dir, e))?;
        let name = entry.file_name();
        if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".depth.pgm")) {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

pub fn read_dataset(dir: &Path) -> Result<Vec<Sample>, VisionError> {
    list_ids(dir)?.iter().map(|id| read_sample(dir, id)).collect()
}

/// Cornell-like synthetic sources: an overhead depth view of one random
/// object with one positive grasp across it and one negative grasp on the
/// bare table beside it. Depth is quantized to the file precision so the
/// in-memory and on-disk versions agree.
pub fn synthesize_sources(count: usize, image_size: usize, seed: u64) -> Result<Vec<Sample>, VisionError> {
    let ranges = ObjectRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fov = 60.0;
    let focal = focal_from_fov(image_size, fov);
    let cam_height = 0.45;
    let camera = Camera::looking_down(
        image_size,
        image_size,
        focal,
        1.0,
        Point3::new(0.0, 0.0, cam_height),
        0.0,
    )?;
    (0..count)
        .map(|i| {
            let shape = Shape::ALL[rng.random_range(0..Shape::ALL.len())];
            let object = spawn_object(shape, &ranges, 0.04, 0.0, &mut rng);
            let depth = quantize(&render_depth(
                &Scene {
                    objects: vec![object],
                    table_height: Some(0.0),
                },
                &camera,
            ));
            let center = camera
                .project(&object.center())
                .ok_or_else(|| VisionError::Domain("object behind camera".into()))?;
            let px_per_m = focal / (cam_height - object.position[2]);
            // Image y runs along world -y, so world yaw maps to -yaw.
            let across = -(object.yaw + FRAC_PI_2);
            let opening = 0.09 * px_per_m;
            let finger = 0.02 * px_per_m;
            let positive = GraspRectangle::from_center(center, opening, finger, across, GraspLabel::Positive);
            let off = Vector3::new(0.12, 0.0, 0.0);
            let side = camera.project(&(object.center() + off)).unwrap_or(center);
            let negative = GraspRectangle::from_center(side, opening, finger, across, GraspLabel::Negative);
            Ok(Sample {
                id: format!("src{i:05}"),
                depth,
                rects: vec![positive, negative],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sources_have_valid_positive_inside_frame() {
        let sources = synthesize_sources(40, 64, 1).unwrap();
        for s in &sources {
            let pos: Vec<_> = s.positives().collect();
            assert_eq!(pos.len(), 1);
            assert!(pos[0].is_valid());
            assert!(pos[0].inside(64, 64), "{:?}", pos[0]);
            assert!(s.depth.data.iter().all(|&d| (0.0..=1.0).contains(&d)));
        }
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sources = synthesize_sources(3, 32, 2).unwrap();
        for s in &sources {
            write_sample(dir.path(), s).unwrap();
        }
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in sources.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.depth, b.depth);
            assert_eq!(a.rects.len(), b.rects.len());
            for (ra, rb) in a.rects.iter().zip(&b.rects) {
                for (va, vb) in ra.vertices.iter().zip(&rb.vertices) {
                    assert!((va[0] - vb[0]).abs() <= 5e-7 && (va[1] - vb[1]).abs() <= 5e-7);
                }
            }
        }
    }
}
