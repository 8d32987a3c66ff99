//! Finger and tendon statics for the tendon-driven hand.
//!
//! Lengths are millimetres, forces newtons, torques newton-millimetres and
//! stresses megapascals. Tendon routing is assumed frictionless throughout;
//! [`design_report`] states the assumption explicitly.

use std::f64::consts::FRAC_PI_2;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MechError {
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, MechError>;

fn finite(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(MechError::Domain(format!("{name} must be finite, got {value}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Pinky,
}

impl Finger {
    pub const ALL: [Finger; 5] = [
        Finger::Thumb,
        Finger::Index,
        Finger::Middle,
        Finger::Ring,
        Finger::Pinky,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Finger::Thumb => "thumb",
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Pinky => "pinky",
        }
    }
}

impl fmt::Display for Finger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Default distance from the tendon line of action to the knuckle joint, mm.
pub const DEFAULT_JOINT_MOMENT_ARM: f64 = 5.0;

/// Measured link lengths of one finger plus the tendon moment arm at its
/// knuckle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerGeometry {
    pub finger: Finger,
    /// Wrist to first joint.
    pub palm_length: f64,
    pub link1: f64,
    pub link2: f64,
    pub link3: f64,
    pub joint_moment_arm: f64,
}

impl FingerGeometry {
    pub fn new(finger: Finger, palm_length: f64, links: [f64; 3], joint_moment_arm: f64) -> Result<Self> {
        let geom = Self {
            finger,
            palm_length,
            link1: links[0],
            link2: links[1],
            link3: links[2],
            joint_moment_arm,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Hand dimensions measured for the first prototype.
    pub fn measured(finger: Finger) -> Self {
        let (palm_length, link1, link2, link3) = match finger {
            Finger::Thumb => (52.0, 45.0, 34.0, 29.5),
            Finger::Index => (90.0, 43.5, 26.5, 23.5),
            Finger::Middle => (86.0, 46.5, 32.0, 24.5),
            Finger::Ring => (79.0, 45.5, 32.0, 24.0),
            Finger::Pinky => (79.0, 35.5, 23.5, 21.0),
        };
        Self {
            finger,
            palm_length,
            link1,
            link2,
            link3,
            joint_moment_arm: DEFAULT_JOINT_MOMENT_ARM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("palm_length", self.palm_length),
            ("link1", self.link1),
            ("link2", self.link2),
            ("link3", self.link3),
            ("joint_moment_arm", self.joint_moment_arm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MechError::Domain(format!(
                    "{} {name} must be positive, got {v}",
                    self.finger
                )));
            }
        }
        Ok(())
    }

    pub fn links(&self) -> [f64; 3] {
        [self.link1, self.link2, self.link3]
    }

    /// Length of the fully extended chain.
    pub fn total_length(&self) -> f64 {
        self.link1 + self.link2 + self.link3
    }
}

/// Hand geometry for all five fingers, in [`Finger::ALL`] order.
pub fn measured_hand() -> [FingerGeometry; 5] {
    Finger::ALL.map(FingerGeometry::measured)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoSpec {
    /// Horn diameter, mm.
    pub horn_diameter: f64,
    /// N·mm.
    pub rated_torque: f64,
    /// Degrees per second.
    pub angular_speed: f64,
}

impl ServoSpec {
    pub fn new(horn_diameter: f64, rated_torque: f64, angular_speed: f64) -> Result<Self> {
        if !(horn_diameter.is_finite() && horn_diameter > 0.0) {
            return Err(MechError::Domain(format!(
                "horn diameter must be positive, got {horn_diameter}"
            )));
        }
        if !(rated_torque.is_finite() && rated_torque > 0.0) {
            return Err(MechError::Domain(format!(
                "rated torque must be positive, got {rated_torque}"
            )));
        }
        finite("angular_speed", angular_speed)?;
        Ok(Self {
            horn_diameter,
            rated_torque,
            angular_speed,
        })
    }

    /// Whether the servo can hold `required` torque (sign ignored).
    pub fn can_hold(&self, required: f64) -> bool {
        required.abs() <= self.rated_torque
    }
}

/// Tendon tension needed to hold `pinch_force` at distance `reach` from the
/// knuckle, from the moment balance `F_g * R - T * l_ja = 0`.
pub fn required_tension(pinch_force: f64, reach: f64, moment_arm: f64) -> Result<f64> {
    let f = finite("pinch force", pinch_force)?;
    let r = finite("reach", reach)?;
    let l = finite("moment arm", moment_arm)?;
    if f < 0.0 || r < 0.0 {
        return Err(MechError::Domain(format!(
            "pinch force and reach must be non-negative, got {f} and {r}"
        )));
    }
    if l <= 0.0 {
        return Err(MechError::Domain(format!("moment arm must be positive, got {l}")));
    }
    Ok(f * r / l)
}

/// Torque at the servo horn, `(d / 2) * T * sin(theta)`, with `theta` in
/// degrees. The sign follows the tension.
pub fn servo_torque(horn_diameter: f64, tension: f64, theta_deg: f64) -> Result<f64> {
    let d = finite("horn diameter", horn_diameter)?;
    let t = finite("tension", tension)?;
    let theta = finite("horn angle", theta_deg)?;
    if d <= 0.0 {
        return Err(MechError::Domain(format!("horn diameter must be positive, got {d}")));
    }
    if !(0.0..=180.0).contains(&theta) {
        return Err(MechError::Domain(format!(
            "horn angle must lie in [0, 180] degrees, got {theta}"
        )));
    }
    Ok(d / 2.0 * t * theta.to_radians().sin())
}

/// Fingertip position in the finger plane relative to the knuckle.
///
/// The chain starts along +x and each joint angle bends the remaining links
/// toward -y; angles accumulate along the chain. Angles are radians in
/// `[0, pi/2]`.
pub fn fingertip_position(geom: &FingerGeometry, joint_angles: [f64; 3]) -> Result<[f64; 2]> {
    for (i, &a) in joint_angles.iter().enumerate() {
        if !(a.is_finite() && (0.0..=FRAC_PI_2).contains(&a)) {
            return Err(MechError::Domain(format!(
                "joint angle {i} must lie in [0, pi/2], got {a}"
            )));
        }
    }
    let mut heading = 0.0;
    let mut tip = [0.0, 0.0];
    for (len, angle) in geom.links().into_iter().zip(joint_angles) {
        heading += angle;
        tip[0] += len * heading.cos();
        tip[1] -= len * heading.sin();
    }
    Ok(tip)
}

/// Distance from the knuckle to the fingertip.
pub fn fingertip_reach(geom: &FingerGeometry, joint_angles: [f64; 3]) -> Result<f64> {
    let [x, y] = fingertip_position(geom, joint_angles)?;
    Ok(x.hypot(y))
}

/// `strength / max_stress`.
pub fn safety_factor(max_stress: f64, strength: f64) -> Result<f64> {
    let s = finite("max stress", max_stress)?;
    let u = finite("strength", strength)?;
    if s <= 0.0 {
        return Err(MechError::Domain(format!("max stress must be positive, got {s}")));
    }
    if u <= 0.0 {
        return Err(MechError::Domain(format!("strength must be positive, got {u}")));
    }
    Ok(u / s)
}

/// One row of the dowel press-fit stress study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressCase {
    pub direction: &'static str,
    /// MPa.
    pub max_stress: f64,
    pub reported_safety_factor: f64,
}

impl StressCase {
    /// Strength implied by the reported stress and safety factor. Used as
    /// the default strength when the caller has none.
    pub fn implied_strength(&self) -> f64 {
        self.max_stress * self.reported_safety_factor
    }
}

pub const DOWEL_PRESS_FIT: [StressCase; 3] = [
    StressCase {
        direction: "Y-Axis",
        max_stress: 37.8,
        reported_safety_factor: 3.00,
    },
    StressCase {
        direction: "Z-Axis",
        max_stress: 80.0,
        reported_safety_factor: 1.35,
    },
    StressCase {
        direction: "X-Axis",
        max_stress: 81.0,
        reported_safety_factor: 1.30,
    },
];

/// Elastic constants of a transversely orthotropic print. Moduli in Pa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthotropicMaterial {
    pub e_x: f64,
    pub e_y: f64,
    pub e_z: f64,
    pub nu_xy: f64,
    pub nu_yz: f64,
    pub nu_xz: f64,
    pub g_xy: f64,
    pub g_yz: f64,
    pub g_xz: f64,
}

impl OrthotropicMaterial {
    /// FDM-printed PLA.
    pub const PRINTED_PLA: OrthotropicMaterial = OrthotropicMaterial {
        e_x: 2.1e9,
        e_y: 2.8e9,
        e_z: 2.8e9,
        nu_xy: 0.3,
        nu_yz: 0.3,
        nu_xz: 0.3,
        g_xy: 1.3725e9,
        g_yz: 1.5e9,
        g_xz: 1.5e9,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("E_x", self.e_x),
            ("E_y", self.e_y),
            ("E_z", self.e_z),
            ("G_xy", self.g_xy),
            ("G_yz", self.g_yz),
            ("G_xz", self.g_xz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MechError::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("nu_xy", self.nu_xy), ("nu_yz", self.nu_yz), ("nu_xz", self.nu_xz)] {
            if !(v > 0.0 && v < 0.5) {
                return Err(MechError::Domain(format!("{name} must lie in (0, 0.5), got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for OrthotropicMaterial {
    fn default() -> Self {
        Self::PRINTED_PLA
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    /// Grams.
    pub total_mass: f64,
    /// Newtons.
    pub max_pinch_force: f64,
    /// Degrees per second.
    pub max_angular_speed: f64,
    pub actuator_count: u32,
}

pub const MASS_LIMIT_G: f64 = 500.0;
pub const PINCH_FORCE_CAP_N: f64 = 65.0;
pub const MIN_ANGULAR_SPEED_DPS: f64 = 115.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Info,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Info => "INFO",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub criterion: String,
    pub verdict: Verdict,
    pub detail: String,
}

/// Checks a design against the prosthetic-hand benchmark list, one finding
/// per criterion.
pub fn check_benchmarks(summary: &DesignSummary) -> Vec<Finding> {
    let pass = |ok: bool| if ok { Verdict::Pass } else { Verdict::Fail };
    vec![
        Finding {
            criterion: "total mass".into(),
            verdict: pass(summary.total_mass < MASS_LIMIT_G),
            detail: format!("{} g (limit < {MASS_LIMIT_G} g)", summary.total_mass),
        },
        Finding {
            criterion: "pinch force".into(),
            verdict: pass(summary.max_pinch_force <= PINCH_FORCE_CAP_N),
            detail: format!(
                "{} N (palmar prehension cap {PINCH_FORCE_CAP_N} N)",
                summary.max_pinch_force
            ),
        },
        Finding {
            criterion: "angular speed".into(),
            verdict: pass(summary.max_angular_speed >= MIN_ANGULAR_SPEED_DPS),
            detail: format!(
                "{} deg/s (minimum {MIN_ANGULAR_SPEED_DPS} deg/s)",
                summary.max_angular_speed
            ),
        },
        Finding {
            criterion: "actuator count".into(),
            verdict: Verdict::Info,
            detail: format!("{} actuators", summary.actuator_count),
        },
    ]
}

/// Inputs for the worked pinch-force sizing in the design report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinchCase {
    pub pinch_force: f64,
    pub reach: f64,
    pub moment_arm: f64,
    pub horn_diameter: f64,
    pub horn_angle_deg: f64,
}

impl Default for PinchCase {
    fn default() -> Self {
        Self {
            pinch_force: PINCH_FORCE_CAP_N,
            reach: 53.0,
            moment_arm: DEFAULT_JOINT_MOMENT_ARM,
            horn_diameter: 23.8,
            horn_angle_deg: 90.0,
        }
    }
}

/// Plain-text design report: geometry, pinch sizing, material data, press-fit
/// safety factors and benchmark findings.
pub fn design_report(summary: &DesignSummary, pinch: &PinchCase) -> Result<String> {
    let tension = required_tension(pinch.pinch_force, pinch.reach, pinch.moment_arm)?;
    let torque = servo_torque(pinch.horn_diameter, -tension, pinch.horn_angle_deg)?;

    let mut out = String::new();
    // Writing to a String cannot fail.
    let _ = writeln!(out, "DESIGN REPORT");
    let _ = writeln!(out, "assumption: frictionless tendon routing");
    let _ = writeln!(out);
    let _ = writeln!(out, "finger dimensions (mm)");
    let _ = writeln!(
        out,
        "{:<8} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "finger", "palm", "link1", "link2", "link3", "l_ja"
    );
    for g in measured_hand() {
        let _ = writeln!(
            out,
            "{:<8} {:>7.1} {:>7.1} {:>7.1} {:>7.1} {:>7.1}",
            g.finger.name(),
            g.palm_length,
            g.link1,
            g.link2,
            g.link3,
            g.joint_moment_arm
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "pinch sizing");
    let _ = writeln!(
        out,
        "  F_g = {} N, R = {} mm, l_ja = {} mm -> tendon tension T_a = {:.1} N",
        pinch.pinch_force, pinch.reach, pinch.moment_arm, tension
    );
    let _ = writeln!(
        out,
        "  d = {} mm, T_b = {:.1} N, theta = {} deg -> servo torque = {:.1} N*mm",
        pinch.horn_diameter, -tension, pinch.horn_angle_deg, torque
    );
    let _ = writeln!(out);
    let m = OrthotropicMaterial::PRINTED_PLA;
    let _ = writeln!(out, "material: printed PLA (transversely orthotropic)");
    let _ = writeln!(out, "  E  = {:e} / {:e} / {:e} Pa", m.e_x, m.e_y, m.e_z);
    let _ = writeln!(out, "  nu = {} / {} / {}", m.nu_xy, m.nu_yz, m.nu_xz);
    let _ = writeln!(out, "  G  = {:e} / {:e} / {:e} Pa", m.g_xy, m.g_yz, m.g_xz);
    let _ = writeln!(out);
    let _ = writeln!(out, "dowel press fit (strength implied by reported SF)");
    for case in DOWEL_PRESS_FIT {
        let sf = safety_factor(case.max_stress, case.implied_strength())?;
        let _ = writeln!(
            out,
            "  {:<7} stress {:>5.1} MPa  strength {:>6.2} MPa  SF {:.2}",
            case.direction,
            case.max_stress,
            case.implied_strength(),
            sf
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "benchmarks");
    for finding in check_benchmarks(summary) {
        let _ = writeln!(out, "  [{}] {}: {}", finding.verdict, finding.criterion, finding.detail);
    }
    Ok(out)
}
