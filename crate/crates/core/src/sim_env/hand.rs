//! Kinematic five-finger hand.
//!
//! The palm faces down. In the palm frame x runs along the row of finger
//! knuckles, y points from the thumb side to the finger side and z is up.
//! An open finger extends horizontally away from the palm centre; tendon
//! closure curls it down and back inward, each of its three joints bending
//! by `closure * pi/2`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};

use crate::mechanics::{self, Finger, FingerGeometry};

use super::objects::ObjectPrimitive;

pub const JOINT_COUNT: usize = 25;
/// Palm x, y, z, yaw, thumb abduction, then four joints per finger.
const FINGER_JOINT_BASE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PalmPose {
    pub position: [f64; 3],
    pub yaw: f64,
}

impl PalmPose {
    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(Vector3::from(self.position)),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw),
        )
    }
}

/// Where each finger attaches to the palm, metres.
#[derive(Debug, Clone, PartialEq)]
pub struct HandGeometry {
    pub fingers: [FingerGeometry; 5],
    /// Lateral distance from the palm centre to each knuckle row.
    pub knuckle_offset: f64,
    /// Knuckle positions along the palm x axis, [`Finger::ALL`] order.
    pub knuckle_x: [f64; 5],
}

impl Default for HandGeometry {
    fn default() -> Self {
        Self {
            fingers: mechanics::measured_hand(),
            knuckle_offset: 0.035,
            knuckle_x: [0.0, 0.027, 0.009, -0.009, -0.027],
        }
    }
}

impl HandGeometry {
    fn side(finger: Finger) -> f64 {
        if finger == Finger::Thumb {
            -1.0
        } else {
            1.0
        }
    }

    /// Fingertip in the palm frame for a given closure in `[0, 1]`.
    pub fn fingertip_local(&self, finger: Finger, closure: f64) -> Point3<f64> {
        let i = finger_index(finger);
        let angle = closure.clamp(0.0, 1.0) * FRAC_PI_2;
        // Angles are in range by construction.
        let [u, v] =
            mechanics::fingertip_position(&self.fingers[i], [angle; 3]).expect("closure angles within joint limits");
        let side = Self::side(finger);
        Point3::new(self.knuckle_x[i], side * (self.knuckle_offset + u / 1000.0), v / 1000.0)
    }

    /// Widest horizontal distance any two fingertips can span.
    pub fn max_span(&self) -> f64 {
        let thumb = self.fingers[0].total_length();
        let longest = self.fingers[1..]
            .iter()
            .map(FingerGeometry::total_length)
            .fold(0.0, f64::max);
        2.0 * self.knuckle_offset + (thumb + longest) / 1000.0
    }
}

pub fn finger_index(finger: Finger) -> usize {
    Finger::ALL.iter().position(|f| *f == finger).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandState {
    pub palm: PalmPose,
    /// Tendon contraction per finger, [`Finger::ALL`] order.
    pub closure: [f64; 5],
    pub thumb_abduction: f64,
    pub joint_positions: [f64; JOINT_COUNT],
    pub joint_velocities: [f64; JOINT_COUNT],
}

impl HandState {
    pub fn open_at(palm: PalmPose) -> Self {
        let mut hand = Self {
            palm,
            closure: [0.0; 5],
            thumb_abduction: 0.0,
            joint_positions: [0.0; JOINT_COUNT],
            joint_velocities: [0.0; JOINT_COUNT],
        };
        hand.joint_positions = hand.derived_joint_positions();
        hand
    }

    pub fn set_closure(&mut self, closure: [f64; 5]) {
        self.closure = closure.map(|c| c.clamp(0.0, 1.0));
        self.thumb_abduction = self.closure[0];
    }

    pub fn mean_closure(&self) -> f64 {
        self.closure.iter().sum::<f64>() / 5.0
    }

    /// Joint vector implied by the palm pose and the coupled finger closures.
    /// Each finger has a fixed spread joint followed by three flexion joints.
    pub fn derived_joint_positions(&self) -> [f64; JOINT_COUNT] {
        let mut q = [0.0; JOINT_COUNT];
        q[..3].copy_from_slice(&self.palm.position);
        q[3] = self.palm.yaw;
        q[4] = self.thumb_abduction.clamp(0.0, 1.0) * FRAC_PI_2;
        for (i, c) in self.closure.iter().enumerate() {
            let base = FINGER_JOINT_BASE + 4 * i;
            for j in 1..4 {
                q[base + j] = c * FRAC_PI_2;
            }
        }
        q
    }

    /// Recomputes joint positions and finite-difference velocities over `dt`.
    pub fn refresh_joints(&mut self, dt: f64) {
        let next = self.derived_joint_positions();
        for i in 0..JOINT_COUNT {
            let mut delta = next[i] - self.joint_positions[i];
            if i == 3 {
                delta = wrap_angle(delta);
            }
            self.joint_velocities[i] = delta / dt;
        }
        self.joint_positions = next;
    }

    pub fn fingertip_world(&self, geom: &HandGeometry, finger: Finger, closure: f64) -> Point3<f64> {
        self.palm.isometry() * geom.fingertip_local(finger, closure)
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        w = PI;
    }
    w
}

/// Where a finger first touches the object while closing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub finger: Finger,
    pub closure: f64,
    pub point: Point3<f64>,
    pub normal: Vector3<f64>,
}

/// Parameters of the contact heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactModel {
    /// Fingertip counts as touching within this distance of the surface.
    pub tolerance: f64,
    /// Closure sweep resolution.
    pub samples: usize,
    /// A contact normal must have at least this horizontal share.
    pub min_horizontal: f64,
    /// Opposing normals must satisfy `n_thumb . n_finger <= -opposition`.
    pub opposition: f64,
}

impl Default for ContactModel {
    fn default() -> Self {
        Self {
            tolerance: 0.002,
            samples: 64,
            min_horizontal: 0.5,
            opposition: 0.5,
        }
    }
}

/// Sweeps the finger from open to fully closed and returns the first
/// closure at which its tip reaches the object surface.
pub fn first_contact(
    hand: &HandState,
    geom: &HandGeometry,
    finger: Finger,
    object: &ObjectPrimitive,
    model: &ContactModel,
) -> Option<Contact> {
    let n = model.samples.max(1);
    (0..=n).find_map(|k| {
        let c = k as f64 / n as f64;
        let tip = hand.fingertip_world(geom, finger, c);
        (object.signed_distance(&tip) <= model.tolerance).then(|| Contact {
            finger,
            closure: c,
            point: tip,
            normal: object.normal_at(&tip),
        })
    })
}

fn horizontal(n: &Vector3<f64>, min_share: f64) -> Option<Vector3<f64>> {
    let h = Vector3::new(n.x, n.y, 0.0);
    let share = h.norm();
    (share >= min_share).then(|| h / share)
}

/// Antipodal contact heuristic: the thumb and at least one opposing finger
/// have reached the object's surface on opposite sides of its horizontal
/// cross-section.
pub fn attachment_test(hand: &HandState, geom: &HandGeometry, object: &ObjectPrimitive, model: &ContactModel) -> bool {
    let touching = |finger: Finger| {
        let closure = hand.closure[finger_index(finger)];
        if closure <= 0.0 {
            return None;
        }
        first_contact(hand, geom, finger, object, model)
            .filter(|c| c.closure <= closure)
            .and_then(|c| horizontal(&c.normal, model.min_horizontal))
    };
    let Some(thumb) = touching(Finger::Thumb) else {
        return false;
    };
    Finger::ALL[1..]
        .iter()
        .filter_map(|&f| touching(f))
        .any(|n| thumb.dot(&n) <= -model.opposition)
}
