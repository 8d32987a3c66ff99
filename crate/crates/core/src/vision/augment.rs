//! Random crop, zoom and rotation of depth images with their grasp
//! rectangles.
//!
//! A transform keeps the image size. It maps an input point `p` to
//! `c + (zoom / crop) * R(theta) * (p - w)`, where `c` is the image centre
//! and `w` the centre of the crop window. Pixels that map outside the
//! source read the background (far-plane) depth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use super::rect::{GraspLabel, GraspRectangle};
use super::{DepthImage, VisionError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    /// Side of the crop window as a fraction of the image, in (0, 1].
    pub crop_fraction: f64,
    /// Crop window centre relative to the image centre, pixels.
    pub crop_offset: [f64; 2],
    pub zoom: f64,
    pub rotation_deg: f64,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        crop_fraction: 1.0,
        crop_offset: [0.0, 0.0],
        zoom: 1.0,
        rotation_deg: 0.0,
    };

    fn scale(&self) -> f64 {
        self.zoom / self.crop_fraction
    }

    fn rotation(&self) -> (f64, f64) {
        // Exact values at multiples of 90 degrees keep rotations lossless.
        let quarter = self.rotation_deg / 90.0;
        if quarter.fract() == 0.0 {
            match (quarter as i64).rem_euclid(4) {
                0 => (0.0, 1.0),
                1 => (1.0, 0.0),
                2 => (0.0, -1.0),
                _ => (-1.0, 0.0),
            }
        } else {
            self.rotation_deg.to_radians().sin_cos()
        }
    }

    /// Input -> output point mapping for a `width` x `height` image.
    pub fn forward(&self, p: [f64; 2], width: usize, height: usize) -> [f64; 2] {
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
        let (s, c) = self.rotation();
        let k = self.scale();
        let dx = p[0] - (cx + self.crop_offset[0]);
        let dy = p[1] - (cy + self.crop_offset[1]);
        [cx + k * (c * dx - s * dy), cy + k * (s * dx + c * dy)]
    }

    /// Output -> input point mapping.
    pub fn inverse(&self, q: [f64; 2], width: usize, height: usize) -> [f64; 2] {
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
        let (s, c) = self.rotation();
        let k = self.scale();
        let dx = (q[0] - cx) / k;
        let dy = (q[1] - cy) / k;
        [
            cx + self.crop_offset[0] + c * dx + s * dy,
            cy + self.crop_offset[1] - s * dx + c * dy,
        ]
    }

    pub fn validate(&self) -> Result<(), VisionError> {
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return Err(VisionError::Domain(format!(
                "crop fraction must lie in (0, 1], got {}",
                self.crop_fraction
            )));
        }
        if !(self.zoom.is_finite() && self.zoom > 0.0) {
            return Err(VisionError::Domain(format!("zoom must be positive, got {}", self.zoom)));
        }
        if !(self.rotation_deg.is_finite() && self.crop_offset[0].is_finite() && self.crop_offset[1].is_finite()) {
            return Err(VisionError::Domain("transform parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Resamples `image` (nearest neighbour) and maps `rects` through the same
/// transform. Fails with [`VisionError::SampleSkipped`] when no positive
/// rectangle remains fully inside the frame.
pub fn transform_sample(
    image: &DepthImage,
    rects: &[GraspRectangle],
    transform: &Transform,
) -> Result<(DepthImage, Vec<GraspRectangle>), VisionError> {
    transform.validate()?;
    let (w, h) = (image.width, image.height);
    let mapped: Vec<GraspRectangle> = rects.iter().map(|r| r.map(|v| transform.forward(v, w, h))).collect();
    if !mapped.iter().any(|r| r.label == GraspLabel::Positive && r.inside(w, h)) {
        return Err(VisionError::SampleSkipped(
            "no positive rectangle inside the output frame".into(),
        ));
    }
    let background = image.max_depth();
    let mut data = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            let [x, y] = transform.inverse([col as f64 + 0.5, row as f64 + 0.5], w, h);
            let (xi, yi) = (x.floor(), y.floor());
            let v = if xi >= 0.0 && yi >= 0.0 && (xi as usize) < w && (yi as usize) < h {
                image.get(xi as usize, yi as usize)
            } else {
                background
            };
            data.push(v);
        }
    }
    Ok((
        DepthImage {
            width: w,
            height: h,
            data,
        },
        mapped,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSpec {
    pub crop_fraction: [f64; 2],
    pub zoom: [f64; 2],
    pub rotation_deg: [f64; 2],
    /// Augmented samples emitted per source.
    pub multiplier: usize,
    pub seed: u64,
    /// Random draws per sample before falling back to the identity.
    pub max_retries: usize,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            crop_fraction: [0.75, 1.0],
            zoom: [0.9, 1.2],
            rotation_deg: [-180.0, 180.0],
            multiplier: 160,
            seed: 0,
            max_retries: 32,
        }
    }
}

impl AugmentationSpec {
    /// Ranges that only ever produce the identity transform.
    pub fn identity(multiplier: usize, seed: u64) -> Self {
        Self {
            crop_fraction: [1.0, 1.0],
            zoom: [1.0, 1.0],
            rotation_deg: [0.0, 0.0],
            multiplier,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), VisionError> {
        let ok = |[lo, hi]: [f64; 2]| lo.is_finite() && hi.is_finite() && lo <= hi;
        if self.multiplier == 0 {
            return Err(VisionError::Config("multiplier must be at least 1".into()));
        }
        if !ok(self.crop_fraction) || self.crop_fraction[0] <= 0.0 || self.crop_fraction[1] > 1.0 {
            return Err(VisionError::Config(format!(
                "crop fraction range must lie in (0, 1], got {:?}",
                self.crop_fraction
            )));
        }
        if !ok(self.zoom) || self.zoom[0] <= 0.0 {
            return Err(VisionError::Config(format!(
                "zoom range must be positive, got {:?}",
                self.zoom
            )));
        }
        if !ok(self.rotation_deg) {
            return Err(VisionError::Config(format!(
                "rotation range is empty, got {:?}",
                self.rotation_deg
            )));
        }
        Ok(())
    }

    pub fn sample_transform<R: Rng + ?Sized>(&self, width: usize, height: usize, rng: &mut R) -> Transform {
        let draw = |rng: &mut R, [lo, hi]: [f64; 2]| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        };
        let crop_fraction = draw(rng, self.crop_fraction);
        let slack_x = (1.0 - crop_fraction) * width as f64 / 2.0;
        let slack_y = (1.0 - crop_fraction) * height as f64 / 2.0;
        let crop_offset = [draw(rng, [-slack_x, slack_x]), draw(rng, [-slack_y, slack_y])];
        Transform {
            crop_fraction,
            crop_offset,
            zoom: draw(rng, self.zoom),
            rotation_deg: draw(rng, self.rotation_deg),
        }
    }
}

/// One output of the augmentation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub sample: Sample,
    pub source_index: usize,
    pub transform: Transform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AugmentReport {
    pub sources: usize,
    pub samples: usize,
    /// Sources without any in-frame positive rectangle emit nothing.
    pub skipped: usize,
}

/// Emits `multiplier` augmented samples per source into `sink`, in source
/// order. Each sample draws from its own RNG stream, so results do not
/// depend on how the work is scheduled.
pub fn build_augmented_dataset<F>(
    sources: &[Sample],
    spec: &AugmentationSpec,
    mut sink: F,
) -> Result<AugmentReport, VisionError>
where
    F: FnMut(AugmentedSample) -> Result<(), VisionError>,
{
    spec.validate()?;
    if sources.is_empty() {
        return Err(VisionError::Domain("no source samples".into()));
    }
    let mut report = AugmentReport {
        sources: sources.len(),
        ..AugmentReport::default()
    };
    for (si, src) in sources.iter().enumerate() {
        let (w, h) = (src.depth.width, src.depth.height);
        for k in 0..spec.multiplier {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream((si * spec.multiplier + k) as u64);
            let attempt = (0..spec.max_retries)
                .map(|_| spec.sample_transform(w, h, &mut rng))
                .chain(std::iter::once(Transform::IDENTITY))
                .find_map(|t| transform_sample(&src.depth, &src.rects, &t).ok().map(|out| (t, out)));
            let Some((transform, (depth, rects))) = attempt else {
                report.skipped += 1;
                continue;
            };
            sink(AugmentedSample {
                sample: Sample {
                    id: format!("{}_{k:03}", src.id),
                    depth,
                    rects,
                },
                source_index: si,
                transform,
            })?;
            report.samples += 1;
        }
    }
    Ok(report)
}
