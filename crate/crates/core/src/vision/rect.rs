//! Grasp rectangles in image coordinates and their text file format: four
//! `x y` lines per rectangle, positives and negatives in sibling files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::VisionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraspLabel {
    Positive,
    Negative,
}

/// Tolerance on opposite-side and diagonal lengths, pixels.
pub const RECT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspRectangle {
    pub vertices: [[f64; 2]; 4],
    pub label: GraspLabel,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl GraspRectangle {
    /// Rectangle centred at `center` with side `width` along `angle`
    /// (radians, image x toward image y) and side `height` across it.
    pub fn from_center(center: [f64; 2], width: f64, height: f64, angle: f64, label: GraspLabel) -> Self {
        let (s, c) = angle.sin_cos();
        let (hw, hh) = (width / 2.0, height / 2.0);
        let corner = |a: f64, b: f64| [center[0] + a * c - b * s, center[1] + a * s + b * c];
        Self {
            vertices: [corner(-hw, -hh), corner(hw, -hh), corner(hw, hh), corner(-hw, hh)],
            label,
        }
    }

    pub fn side_lengths(&self) -> [f64; 4] {
        let v = &self.vertices;
        [dist(v[0], v[1]), dist(v[1], v[2]), dist(v[2], v[3]), dist(v[3], v[0])]
    }

    /// Opposite sides equal and diagonals equal, within [`RECT_TOLERANCE`].
    pub fn is_valid(&self) -> bool {
        let v = &self.vertices;
        if !v.iter().flatten().all(|x| x.is_finite()) {
            return false;
        }
        let [a, b, c, d] = self.side_lengths();
        (a - c).abs() <= RECT_TOLERANCE
            && (b - d).abs() <= RECT_TOLERANCE
            && (dist(v[0], v[2]) - dist(v[1], v[3])).abs() <= RECT_TOLERANCE
            && a > 0.0
            && b > 0.0
    }

    pub fn center(&self) -> [f64; 2] {
        let mut c = [0.0; 2];
        for v in &self.vertices {
            c[0] += v[0] / 4.0;
            c[1] += v[1] / 4.0;
        }
        c
    }

    /// Every vertex lies within `[0, width] x [0, height]`.
    pub fn inside(&self, width: usize, height: usize) -> bool {
        self.vertices
            .iter()
            .all(|v| v[0] >= 0.0 && v[1] >= 0.0 && v[0] <= width as f64 && v[1] <= height as f64)
    }

    pub fn map(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        Self {
            vertices: self.vertices.map(f),
            label: self.label,
        }
    }
}

/// Serializes rectangles at six decimal places.
pub fn format_rects(rects: &[GraspRectangle]) -> String {
    let mut out = String::with_capacity(rects.len() * 4 * 24);
    for r in rects {
        for [x, y] in r.vertices {
            let _ = writeln!(out, "{x:.6} {y:.6}");
        }
    }
    out
}

/// Parses rectangle text; `origin` names the source in error messages.
/// Blank lines are ignored.
pub fn parse_rects(text: &str, label: GraspLabel, origin: &str) -> Result<Vec<GraspRectangle>, VisionError> {
    let err = |line: usize, msg: String| VisionError::Format {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut points = Vec::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        last_line = line_no;
        let mut fields = line.split_whitespace();
        let mut coord = |name: &str| -> Result<f64, VisionError> {
            let tok = fields
                .next()
                .ok_or_else(|| err(line_no, format!("missing {name} coordinate")))?;
            let v: f64 = tok
                .parse()
                .map_err(|_| err(line_no, format!("unparsable number `{tok}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(line_no, format!("non-finite coordinate `{tok}`")))
            }
        };
        let x = coord("x")?;
        let y = coord("y")?;
        if let Some(extra) = fields.next() {
            return Err(err(line_no, format!("unexpected trailing field `{extra}`")));
        }
        points.push([x, y]);
    }
    if points.len() % 4 != 0 {
        return Err(err(
            last_line,
            format!("{} vertex lines is not a multiple of 4", points.len()),
        ));
    }
    Ok(points
        .chunks_exact(4)
        .map(|c| GraspRectangle {
            vertices: [c[0], c[1], c[2], c[3]],
            label,
        })
        .collect())
}

pub fn read_rect_file(path: &Path, label: GraspLabel) -> Result<Vec<GraspRectangle>, VisionError> {
    let text = std::fs::read_to_string(path).map_err(|e| VisionError::io(path, e))?;
    parse_rects(&text, label, &path.display().to_string())
}

pub fn write_rect_file(path: &Path, rects: &[GraspRectangle]) -> Result<(), VisionError> {
    std::fs::write(path, format_rects(rects)).map_err(|e| VisionError::io(path, e))
}
