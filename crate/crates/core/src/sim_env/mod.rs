//! Grasping MDP over a kinematic hand and parametric table-top objects.
//!
//! Each episode starts with an open hand at the home pose above a single
//! resting object. Actions displace the palm and drive the tendons; when
//! the thumb and an opposing finger close on opposite sides of the object
//! it attaches rigidly to the palm. Closing the hand fully triggers a
//! scripted lift that ends the episode. The only reward is 1 at the end of
//! an episode whose object finishes at least `lift_threshold` above its
//! resting height.

pub mod hand;
pub mod objects;

use std::sync::Arc;

use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vision::render::{focal_from_fov, render_depth, Camera};
use crate::vision::{DepthImage, VisionError};

use hand::{attachment_test, wrap_angle, ContactModel, HandGeometry, HandState, PalmPose, JOINT_COUNT};
use objects::{spawn_object, ObjectPrimitive, ObjectRanges, Shape};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("state error: {0}")]
    State(String),
    #[error(transparent)]
    Vision(#[from] VisionError),
}

/// Objects on an optional infinite table plane.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<ObjectPrimitive>,
    pub table_height: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProprioBlock {
    JointPositions,
    JointVelocities,
    /// Object centre relative to the palm, in the palm frame.
    ObjectPosition,
}

impl ProprioBlock {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        match self {
            ProprioBlock::JointPositions | ProprioBlock::JointVelocities => JOINT_COUNT,
            ProprioBlock::ObjectPosition => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Steps per episode.
    pub horizon: usize,
    /// Per-step palm translation limit per axis, metres.
    pub max_translation: f64,
    /// Per-step yaw limit, radians.
    pub max_rotation: f64,
    pub lift_threshold: f64,
    pub table_height: f64,
    /// Palm height above the table at reset.
    pub home_height: f64,
    pub min_palm_height: f64,
    pub max_palm_height: f64,
    /// Palm x/y are clamped to this half-width around the origin.
    pub workspace_half_width: f64,
    /// Objects spawn within this half-width around the origin.
    pub spawn_half_width: f64,
    /// Closure change per step at full grip command.
    pub grip_rate: f64,
    /// An attached object is released when the grip command is at or below
    /// minus this value.
    pub release_threshold: f64,
    /// Fully closing the hand lifts the palm by `auto_lift_height` and ends
    /// the episode.
    pub auto_lift: bool,
    pub auto_lift_height: f64,
    pub contact_tolerance: f64,
    pub image_size: usize,
    pub fov_deg: f64,
    pub far_plane: f64,
    /// Camera height above the palm.
    pub camera_offset: f64,
    /// Seconds per step, for joint velocities.
    pub control_period: f64,
    pub proprio_layout: Vec<ProprioBlock>,
    /// Shapes drawn from when resetting with a random object.
    pub shapes: Vec<Shape>,
    pub objects: ObjectRanges,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            horizon: 40,
            max_translation: 0.02,
            max_rotation: 0.1,
            lift_threshold: 0.2,
            table_height: 0.0,
            home_height: 0.25,
            min_palm_height: 0.02,
            max_palm_height: 0.6,
            workspace_half_width: 0.3,
            spawn_half_width: 0.06,
            grip_rate: 0.25,
            release_threshold: 0.5,
            auto_lift: true,
            auto_lift_height: 0.25,
            contact_tolerance: 0.002,
            image_size: 64,
            fov_deg: 80.0,
            far_plane: 1.0,
            camera_offset: 0.02,
            control_period: 0.1,
            proprio_layout: vec![
                ProprioBlock::JointPositions,
                ProprioBlock::JointVelocities,
                ProprioBlock::ObjectPosition,
            ],
            shapes: Shape::ALL.to_vec(),
            objects: ObjectRanges::default(),
        }
    }
}

impl EnvConfig {
    pub fn proprio_dim(&self) -> usize {
        self.proprio_layout.iter().map(|b| b.len()).sum()
    }

    /// Offset of `block` in the proprioception vector.
    pub fn block_offset(&self, block: ProprioBlock) -> Option<usize> {
        let mut offset = 0;
        for b in &self.proprio_layout {
            if *b == block {
                return Some(offset);
            }
            offset += b.len();
        }
        None
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let positive = [
            ("max_translation", self.max_translation),
            ("max_rotation", self.max_rotation),
            ("lift_threshold", self.lift_threshold),
            ("home_height", self.home_height),
            ("max_palm_height", self.max_palm_height),
            ("workspace_half_width", self.workspace_half_width),
            ("grip_rate", self.grip_rate),
            ("far_plane", self.far_plane),
            ("control_period", self.control_period),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(EnvError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("table_height", self.table_height),
            ("min_palm_height", self.min_palm_height),
            ("spawn_half_width", self.spawn_half_width),
            ("auto_lift_height", self.auto_lift_height),
            ("contact_tolerance", self.contact_tolerance),
            ("camera_offset", self.camera_offset),
            ("release_threshold", self.release_threshold),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EnvError::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.horizon == 0 {
            return Err(EnvError::Config("horizon must be at least 1".into()));
        }
        if self.min_palm_height > self.max_palm_height
            || !(self.min_palm_height..=self.max_palm_height).contains(&self.home_height)
        {
            return Err(EnvError::Config("palm heights must satisfy min <= home <= max".into()));
        }
        if self.image_size == 0 {
            return Err(EnvError::Config("image_size must be positive".into()));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(EnvError::Config(format!(
                "fov_deg must lie in (0, 180), got {}",
                self.fov_deg
            )));
        }
        if self.shapes.is_empty() {
            return Err(EnvError::Config("shapes must not be empty".into()));
        }
        if self.proprio_layout.is_empty() {
            return Err(EnvError::Config("proprio_layout must not be empty".into()));
        }
        self.objects.validate()
    }
}

/// What the policy sees: the hand-camera depth image and proprioception.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub depth: DepthImage,
    pub proprio: Vec<f64>,
    /// Steps taken so far in the episode.
    pub step: usize,
    /// Mean tendon closure, used to select phase-specific critics.
    pub closure: f64,
}

/// Palm displacement in the world frame plus a grip command in `[-1, 1]`
/// (negative opens, positive closes).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Action {
    pub translation: [f64; 3],
    pub yaw: f64,
    pub grip: f64,
}

pub const ACTION_DIM: usize = 5;

impl Action {
    pub const ZERO: Action = Action {
        translation: [0.0; 3],
        yaw: 0.0,
        grip: 0.0,
    };

    /// Per-component bounds for a given configuration.
    pub fn limits(cfg: &EnvConfig) -> [f64; ACTION_DIM] {
        [
            cfg.max_translation,
            cfg.max_translation,
            cfg.max_translation,
            cfg.max_rotation,
            1.0,
        ]
    }

    pub fn to_array(self) -> [f64; ACTION_DIM] {
        [
            self.translation[0],
            self.translation[1],
            self.translation[2],
            self.yaw,
            self.grip,
        ]
    }

    pub fn from_array(a: [f64; ACTION_DIM]) -> Self {
        Self {
            translation: [a[0], a[1], a[2]],
            yaw: a[3],
            grip: a[4],
        }
    }

    /// Components divided by their bounds, each in `[-1, 1]` when in bounds.
    pub fn normalized(self, cfg: &EnvConfig) -> [f64; ACTION_DIM] {
        let lim = Self::limits(cfg);
        let a = self.to_array();
        std::array::from_fn(|i| a[i] / lim[i])
    }

    pub fn from_normalized(n: [f64; ACTION_DIM], cfg: &EnvConfig) -> Self {
        let lim = Self::limits(cfg);
        Self::from_array(std::array::from_fn(|i| n[i] * lim[i]))
    }

    /// Clamps every component to its bound; non-finite components become 0.
    pub fn clamped(self, cfg: &EnvConfig) -> Self {
        let lim = Self::limits(cfg);
        let a = self.to_array();
        Self::from_array(std::array::from_fn(|i| {
            if a[i].is_finite() {
                a[i].clamp(-lim[i], lim[i])
            } else {
                0.0
            }
        }))
    }
}

/// One replayable step. Observations are shared with neighbouring
/// transitions of the same episode.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Arc<Observation>,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Arc<Observation>,
    pub done: bool,
}

/// How `reset` chooses the object.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectSpec {
    /// Uniform over the configured shape set.
    Random,
    Shape(Shape),
    /// Placed on the table at the given x/y and yaw.
    Fixed(ObjectPrimitive),
}

pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

/// True iff the object's base has risen at least `lift_threshold` above the
/// table. Only heights enter, so horizontal translation is irrelevant.
pub fn grasp_success(object: &ObjectPrimitive, table_height: f64, lift_threshold: f64) -> bool {
    object.base_height() >= table_height + lift_threshold
}

#[derive(Debug, Clone)]
pub struct GraspEnv {
    cfg: EnvConfig,
    geom: HandGeometry,
    contact: ContactModel,
    hand: HandState,
    object: ObjectPrimitive,
    /// Object pose in the palm frame while attached.
    attached: Option<(Vector3<f64>, f64)>,
    step: usize,
    done: bool,
    started: bool,
}

impl GraspEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let contact = ContactModel {
            tolerance: cfg.contact_tolerance,
            ..ContactModel::default()
        };
        let home = PalmPose {
            position: [0.0, 0.0, cfg.table_height + cfg.home_height],
            yaw: 0.0,
        };
        let mut object = ObjectPrimitive::new(
            objects::Dimensions::Cylinder {
                radius: 0.03,
                height: 0.12,
            },
            [0.0; 3],
            0.0,
        )?;
        object.rest_on(cfg.table_height);
        Ok(Self {
            hand: HandState::open_at(home),
            geom: HandGeometry::default(),
            contact,
            object,
            attached: None,
            step: 0,
            done: true,
            started: false,
            cfg,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn hand(&self) -> &HandState {
        &self.hand
    }

    pub fn hand_geometry(&self) -> &HandGeometry {
        &self.geom
    }

    pub fn object(&self) -> &ObjectPrimitive {
        &self.object
    }

    pub fn is_attached(&self) -> bool {
        self.attached.is_some()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn scene(&self) -> Scene {
        Scene {
            objects: vec![self.object],
            table_height: Some(self.cfg.table_height),
        }
    }

    pub fn reset(&mut self, seed: u64, spec: &ObjectSpec) -> Result<Observation, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = self.cfg.table_height;
        self.object = match spec {
            ObjectSpec::Random => {
                let shape = self.cfg.shapes[rng.random_range(0..self.cfg.shapes.len())];
                spawn_object(shape, &self.cfg.objects, self.cfg.spawn_half_width, table, &mut rng)
            }
            ObjectSpec::Shape(shape) => {
                spawn_object(*shape, &self.cfg.objects, self.cfg.spawn_half_width, table, &mut rng)
            }
            ObjectSpec::Fixed(obj) => {
                obj.validate()?;
                let mut obj = *obj;
                obj.rest_on(table);
                obj
            }
        };
        self.hand = HandState::open_at(PalmPose {
            position: [0.0, 0.0, table + self.cfg.home_height],
            yaw: 0.0,
        });
        self.attached = None;
        self.step = 0;
        self.done = false;
        self.started = true;
        self.observe()
    }

    fn clamp_palm(&self, p: &mut [f64; 3]) {
        let w = self.cfg.workspace_half_width;
        p[0] = p[0].clamp(-w, w);
        p[1] = p[1].clamp(-w, w);
        let table = self.cfg.table_height;
        p[2] = p[2].clamp(table + self.cfg.min_palm_height, table + self.cfg.max_palm_height);
    }

    fn carry_object(&mut self) {
        if let Some((offset, yaw)) = self.attached {
            let palm = self.hand.palm.isometry();
            let p = palm * Point3::from(offset);
            self.object.position = [p.x, p.y, p.z];
            self.object.yaw = wrap_angle(self.hand.palm.yaw + yaw);
        }
    }

    fn attach(&mut self) {
        let palm = self.hand.palm.isometry();
        let local = palm.inverse_transform_point(&self.object.center());
        self.attached = Some((local.coords, wrap_angle(self.object.yaw - self.hand.palm.yaw)));
    }

    fn release(&mut self) {
        self.attached = None;
        let table = self.cfg.table_height;
        self.object.rest_on(table);
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        if !self.started {
            return Err(EnvError::State("step called before reset".into()));
        }
        if self.done {
            return Err(EnvError::State("step called after episode end".into()));
        }
        let a = action.clamped(&self.cfg);

        let mut pos = self.hand.palm.position;
        for (p, d) in pos.iter_mut().zip(a.translation) {
            *p += d;
        }
        self.clamp_palm(&mut pos);
        self.hand.palm.position = pos;
        self.hand.palm.yaw = wrap_angle(self.hand.palm.yaw + a.yaw);

        let closure = self.hand.closure.map(|c| c + self.cfg.grip_rate * a.grip);
        self.hand.set_closure(closure);

        if self.attached.is_some() {
            if a.grip <= -self.cfg.release_threshold {
                self.release();
            } else {
                self.carry_object();
            }
        } else if a.grip > 0.0 && attachment_test(&self.hand, &self.geom, &self.object, &self.contact) {
            self.attach();
        }

        self.step += 1;
        if self.cfg.auto_lift && self.hand.closure.iter().all(|&c| c >= 1.0) {
            let mut lifted = self.hand.palm.position;
            lifted[2] += self.cfg.auto_lift_height;
            self.clamp_palm(&mut lifted);
            self.hand.palm.position = lifted;
            self.carry_object();
            self.done = true;
        }
        if self.step >= self.cfg.horizon {
            self.done = true;
        }
        self.hand.refresh_joints(self.cfg.control_period);

        let reward = if self.done && self.success() { 1.0 } else { 0.0 };
        Ok(StepResult {
            observation: self.observe()?,
            reward,
            done: self.done,
        })
    }

    pub fn success(&self) -> bool {
        grasp_success(&self.object, self.cfg.table_height, self.cfg.lift_threshold)
    }

    fn hand_camera(&self) -> Result<Camera, VisionError> {
        let p = self.hand.palm.position;
        Camera::looking_down(
            self.cfg.image_size,
            self.cfg.image_size,
            focal_from_fov(self.cfg.image_size, self.cfg.fov_deg),
            self.cfg.far_plane,
            Point3::new(p[0], p[1], p[2] + self.cfg.camera_offset),
            self.hand.palm.yaw,
        )
    }

    /// Object centre relative to the palm, in the palm frame.
    pub fn object_in_palm_frame(&self) -> Vector3<f64> {
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.hand.palm.yaw);
        let d = Vector3::from(self.object.position) - Vector3::from(self.hand.palm.position);
        rot.inverse_transform_vector(&d)
    }

    pub fn observe(&self) -> Result<Observation, EnvError> {
        let depth = render_depth(&self.scene(), &self.hand_camera()?);
        let mut proprio = Vec::with_capacity(self.cfg.proprio_dim());
        for block in &self.cfg.proprio_layout {
            match block {
                ProprioBlock::JointPositions => proprio.extend_from_slice(&self.hand.joint_positions),
                ProprioBlock::JointVelocities => proprio.extend_from_slice(&self.hand.joint_velocities),
                ProprioBlock::ObjectPosition => proprio.extend_from_slice(self.object_in_palm_frame().as_slice()),
            }
        }
        Ok(Observation {
            depth,
            proprio,
            step: self.step,
            closure: self.hand.mean_closure(),
        })
    }

    /// The two hand-camera views of the drop test: the scene as it is, and
    /// the scene after releasing whatever the hand holds.
    pub fn drop_test_images(&self) -> Result<(DepthImage, DepthImage), EnvError> {
        let camera = self.hand_camera()?;
        let before = render_depth(&self.scene(), &camera);
        let mut dropped = self.object;
        if self.attached.is_some() {
            dropped.rest_on(self.cfg.table_height);
        }
        let after = render_depth(
            &Scene {
                objects: vec![dropped],
                table_height: Some(self.cfg.table_height),
            },
            &camera,
        );
        Ok((before, after))
    }
}

/// Anything that maps observations to actions.
pub trait Policy {
    fn act(&mut self, obs: &Observation) -> Action;
}

/// Policy that never moves.
pub struct NullPolicy;

impl Policy for NullPolicy {
    fn act(&mut self, _obs: &Observation) -> Action {
        Action::ZERO
    }
}

/// Hand-written grasp: centre the palm over the object at a fixed height
/// above its centre, then close. Reads the object position from the
/// proprioception vector.
pub struct ScriptedGrasp {
    offset: usize,
    max_translation: f64,
    /// Palm height above the object centre at which to close.
    pub grasp_height: f64,
    pub tolerance: f64,
}

impl ScriptedGrasp {
    pub fn new(cfg: &EnvConfig) -> Result<Self, EnvError> {
        let offset = cfg
            .block_offset(ProprioBlock::ObjectPosition)
            .ok_or_else(|| EnvError::Config("scripted grasp needs the object position block".into()))?;
        Ok(Self {
            offset,
            max_translation: cfg.max_translation,
            grasp_height: 0.06,
            tolerance: 0.004,
        })
    }
}

impl Policy for ScriptedGrasp {
    fn act(&mut self, obs: &Observation) -> Action {
        let rel = &obs.proprio[self.offset..self.offset + 3];
        // Palm yaw stays zero under this policy, so palm and world axes agree.
        let want = [rel[0], rel[1], rel[2] + self.grasp_height];
        let aligned = want.iter().all(|d| d.abs() <= self.tolerance);
        if aligned || obs.closure > 0.0 {
            Action {
                grip: 1.0,
                ..Action::ZERO
            }
        } else {
            Action {
                translation: want.map(|d| d.clamp(-self.max_translation, self.max_translation)),
                yaw: 0.0,
                grip: -1.0,
            }
        }
    }
}

/// Runs one episode and returns the total reward.
pub fn rollout(env: &mut GraspEnv, policy: &mut dyn Policy, seed: u64, spec: &ObjectSpec) -> Result<f64, EnvError> {
    let mut obs = env.reset(seed, spec)?;
    let mut total = 0.0;
    loop {
        let action = policy.act(&obs);
        let step = env.step(&action)?;
        total += step.reward;
        obs = step.observation;
        if step.done {
            return Ok(total);
        }
    }
}
