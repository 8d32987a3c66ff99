//! Tendon-driven robotic hand toolkit: static mechanics, a kinematic
//! grasping environment, depth rendering and dataset tools, and an
//! off-policy actor-critic learner.

pub mod config;
pub mod geometry;
pub mod learner;
pub mod mechanics;
pub mod sim_env;
pub mod vision;
