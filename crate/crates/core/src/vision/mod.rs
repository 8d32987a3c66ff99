//! Depth rendering, the image-subtraction grasp detector and the
//! grasp-rectangle dataset pipeline.

pub mod augment;
pub mod dataset;
pub mod detect;
pub mod pgm;
pub mod rect;
pub mod render;

use thiserror::Error;

pub use augment::{build_augmented_dataset, transform_sample, AugmentationSpec, Transform};
pub use detect::{image_subtraction_success, DetectorThresholds};
pub use rect::{GraspLabel, GraspRectangle};
pub use render::{render_depth, Camera, CameraSpec, SceneObjectSpec, SceneSpec};

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{path}:{line}: {msg}")]
    Format { path: String, line: usize, msg: String },
    #[error("sample skipped: {0}")]
    SampleSkipped(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl VisionError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        VisionError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// Row-major depth map in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, VisionError> {
        if data.len() != width * height {
            return Err(VisionError::Domain(format!(
                "{width}x{height} image needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(VisionError::Domain(format!(
                "depth values must be finite and non-negative, got {bad}"
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn max_depth(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}
