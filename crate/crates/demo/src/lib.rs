//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The plain functions are the tested surface; the `#[wasm_bindgen]`
//! wrappers only convert errors into JS exceptions.

use wasm_bindgen::prelude::*;

use grasplab::mechanics::{self, Finger, FingerGeometry};
use grasplab::sim_env::objects::Shape;
use grasplab::sim_env::{EnvConfig, GraspEnv, ObjectSpec};
use grasplab::vision::DepthImage;

/// Side of the rendered hand-camera image.
pub const VIEW_SIZE: usize = 64;

/// Depth seen by the palm camera right after reset, with one object of
/// `shape` on the table and the palm `palm_height` metres above it.
pub fn hand_view(shape: &str, seed: u32, palm_height: f64) -> Result<DepthImage, String> {
    let shape: Shape = shape.parse().map_err(|e| format!("{e}"))?;
    let cfg = EnvConfig {
        image_size: VIEW_SIZE,
        home_height: palm_height,
        ..EnvConfig::default()
    };
    let mut env = GraspEnv::new(cfg).map_err(|e| e.to_string())?;
    let obs = env
        .reset(u64::from(seed), &ObjectSpec::Shape(shape))
        .map_err(|e| e.to_string())?;
    Ok(obs.depth)
}

/// Grey-scale RGBA pixels, nearest surface brightest. A flat image maps
/// to mid-grey.
pub fn depth_to_rgba(img: &DepthImage) -> Vec<u8> {
    let (lo, hi) = img
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| {
            (lo.min(d), hi.max(d))
        });
    let span = hi - lo;
    img.data
        .iter()
        .flat_map(|&d| {
            let v = if span > 0.0 { 255.0 * (hi - d) / span } else { 128.0 };
            let g = v.round().clamp(0.0, 255.0) as u8;
            [g, g, g, 255]
        })
        .collect()
}

/// Knuckle, two inner joints and fingertip of one finger in its bending
/// plane (mm, knuckle at the origin), flattened as `[x0, y0, .., x3, y3]`,
/// followed by the knuckle-to-tip reach. Angles are degrees in `[0, 90]`.
pub fn finger_chain(finger: &str, angles_deg: [f64; 3]) -> Result<Vec<f64>, String> {
    let finger = Finger::ALL
        .into_iter()
        .find(|f| f.name() == finger)
        .ok_or_else(|| format!("unknown finger `{finger}`"))?;
    let geom = FingerGeometry::measured(finger);
    let angles = angles_deg.map(f64::to_radians);
    let reach = mechanics::fingertip_reach(&geom, angles).map_err(|e| e.to_string())?;
    let mut out = vec![0.0, 0.0];
    let (mut x, mut y, mut heading) = (0.0, 0.0, 0.0);
    for (len, a) in geom.links().into_iter().zip(angles) {
        heading += a;
        x += len * f64::cos(heading);
        y -= len * f64::sin(heading);
        out.extend([x, y]);
    }
    out.push(reach);
    Ok(out)
}

#[wasm_bindgen(js_name = renderHandView)]
pub fn render_hand_view(shape: &str, seed: u32, palm_height: f64) -> Result<Vec<u8>, JsError> {
    hand_view(shape, seed, palm_height)
        .map(|img| depth_to_rgba(&img))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = viewSize)]
pub fn view_size() -> usize {
    VIEW_SIZE
}

#[wasm_bindgen(js_name = fingerChain)]
pub fn finger_chain_js(finger: &str, a1: f64, a2: f64, a3: f64) -> Result<Vec<f64>, JsError> {
    finger_chain(finger, [a1, a2, a3]).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = requiredTension)]
pub fn required_tension(pinch_force: f64, reach: f64, moment_arm: f64) -> Result<f64, JsError> {
    mechanics::required_tension(pinch_force, reach, moment_arm).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = servoTorque)]
pub fn servo_torque(horn_diameter: f64, tension: f64, theta_deg: f64) -> Result<f64, JsError> {
    mechanics::servo_torque(horn_diameter, tension, theta_deg).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = safetyFactor)]
pub fn safety_factor(max_stress: f64, strength: f64) -> Result<f64, JsError> {
    mechanics::safety_factor(max_stress, strength).map_err(|e| JsError::new(&e.to_string()))
}
