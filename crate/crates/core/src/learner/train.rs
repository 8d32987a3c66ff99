//! Online training loop and noise-free evaluation.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sim_env::objects::Shape;
use crate::sim_env::{rollout, Action, EnvConfig, GraspEnv, ObjectSpec, Observation, Policy, Transition};

use super::ddpg::{add_exploration_noise, random_action, Agent, CriticStep};
use super::net::NetworkSpec;
use super::replay::ReplayBuffer;
use super::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    Random,
    /// Every parameter zero; the actor is the null policy.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub minibatch: usize,
    /// Exploration noise, as a fraction of each action bound.
    pub noise_sigma: f64,
    pub buffer_capacity: usize,
    pub total_steps: usize,
    /// Number of phase-indexed critics; 1 disables factoring.
    pub q_factoring: usize,
    /// Bootstrap targets are clamped to `[lo, hi]`; rewards are 0/1, so the
    /// default is the attainable return range. Use `[-inf, inf]` to disable.
    pub target_clip: [f64; 2],
    /// Two critics per phase; bootstraps use the smaller target value.
    pub twin_critics: bool,
    /// Target-policy smoothing noise (bound-relative std); 0 disables it.
    pub target_noise: f64,
    /// Critic updates per actor update.
    pub policy_delay: usize,
    /// Transitions collected with uniform random actions before updates start.
    pub warmup: usize,
    /// Environment steps between curve points; 0 disables evaluation.
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub init: InitScheme,
    pub network: NetworkSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            minibatch: 64,
            noise_sigma: 0.1,
            buffer_capacity: 10_000,
            total_steps: 100_000,
            q_factoring: 2,
            target_clip: [0.0, 1.0],
            twin_critics: false,
            target_noise: 0.0,
            policy_delay: 1,
            warmup: 1_000,
            eval_every: 5_000,
            eval_episodes: 100,
            init: InitScheme::Random,
            network: NetworkSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |msg: String| Err(LearnError::Config(msg));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return bad(format!("{name} must be non-negative, got {lr}"));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        let [lo, hi] = self.target_clip;
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return bad(format!("target_clip must be an ordered pair, got [{lo}, {hi}]"));
        }
        if !(self.target_noise.is_finite() && self.target_noise >= 0.0) {
            return bad(format!("target_noise must be non-negative, got {}", self.target_noise));
        }
        if self.minibatch == 0 || self.buffer_capacity == 0 || self.q_factoring == 0 || self.policy_delay == 0 {
            return bad("minibatch, buffer_capacity, q_factoring and policy_delay must be positive".into());
        }
        if self.warmup > self.buffer_capacity {
            return bad(format!(
                "warmup {} exceeds buffer_capacity {}",
                self.warmup, self.buffer_capacity
            ));
        }
        if self.eval_every > 0 && self.eval_episodes == 0 {
            return bad("eval_episodes must be positive when eval_every is set".into());
        }
        let n = &self.network;
        if n.kernel == 0 || n.stride == 0 || n.conv_filters.contains(&0) || n.hidden.contains(&0) {
            return bad("network sizes must be positive".into());
        }
        if !(n.final_init.is_finite() && n.final_init >= 0.0) {
            return bad("network.final_init must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub success_rate: f64,
    /// Mean critic loss over the updates since the previous point; NaN if
    /// there were none.
    pub critic_loss: f64,
}

pub const CURVE_HEADER: &str = "step,success_rate,critic_loss";

pub fn format_curve(curve: &[CurvePoint]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for p in curve {
        let _ = writeln!(out, "{},{},{}", p.step, p.success_rate, p.critic_loss);
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub curve: Vec<CurvePoint>,
    pub episodes: usize,
}

/// Seed of evaluation episode `i`. Disjoint from training seeds in practice.
pub fn eval_seed(i: usize) -> u64 {
    0x5EED_0000_0000 + i as u64
}

/// Wraps an agent as a noise-free policy.
pub struct AgentPolicy<'a> {
    agent: &'a Agent,
}

impl<'a> AgentPolicy<'a> {
    pub fn new(agent: &'a Agent, env: &EnvConfig) -> Result<Self, LearnError> {
        let probe = Observation {
            depth: crate::vision::DepthImage::filled(env.image_size, env.image_size, 0.0),
            proprio: vec![0.0; env.proprio_dim()],
            step: 0,
            closure: 0.0,
        };
        agent.actor_forward(&probe)?;
        Ok(Self { agent })
    }
}

impl Policy for AgentPolicy<'_> {
    fn act(&mut self, obs: &Observation) -> Action {
        self.agent
            .actor_forward(obs)
            .expect("observation dimensions checked at construction")
    }
}

/// Success rate over `episodes` noise-free episodes on the environment's
/// random object distribution.
pub fn success_rate(policy: &mut dyn Policy, env_cfg: &EnvConfig, episodes: usize) -> Result<f64, LearnError> {
    let mut env = GraspEnv::new(env_cfg.clone())?;
    let mut wins = 0.0;
    for i in 0..episodes {
        wins += rollout(&mut env, policy, eval_seed(i), &ObjectSpec::Random)?;
    }
    Ok(wins / episodes.max(1) as f64)
}

/// Per-object results in the canonical object order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub shape: Shape,
    pub episodes: usize,
    pub successes: usize,
}

impl EvalRow {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.episodes as f64
    }
}

impl EvalReport {
    pub fn aggregate(&self) -> f64 {
        let (s, n) = self
            .rows
            .iter()
            .fold((0, 0), |(s, n), r| (s + r.successes, n + r.episodes));
        if n == 0 {
            0.0
        } else {
            s as f64 / n as f64
        }
    }

    pub fn rate(&self, shape: Shape) -> Option<f64> {
        self.rows.iter().find(|r| r.shape == shape).map(EvalRow::rate)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("object,episodes,successes,success_rate\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:.4}", r.shape.name(), r.episodes, r.successes, r.rate());
        }
        let total: usize = self.rows.iter().map(|r| r.episodes).sum();
        let wins: usize = self.rows.iter().map(|r| r.successes).sum();
        let _ = writeln!(out, "aggregate,{total},{wins},{:.4}", self.aggregate());
        out
    }
}

/// Noise-free rollouts, `episodes` per shape.
pub fn evaluate(
    policy: &mut dyn Policy,
    env_cfg: &EnvConfig,
    episodes: usize,
    shapes: &[Shape],
) -> Result<EvalReport, LearnError> {
    if episodes == 0 {
        return Err(LearnError::Config("episodes must be at least 1".into()));
    }
    let mut env = GraspEnv::new(env_cfg.clone())?;
    let rows = Shape::ALL
        .iter()
        .filter(|s| shapes.contains(s))
        .map(|&shape| {
            let mut successes = 0;
            for i in 0..episodes {
                if rollout(&mut env, policy, eval_seed(i), &ObjectSpec::Shape(shape))? > 0.0 {
                    successes += 1;
                }
            }
            Ok(EvalRow {
                shape,
                episodes,
                successes,
            })
        })
        .collect::<Result<Vec<_>, LearnError>>()?;
    Ok(EvalReport { rows })
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Trains online from scratch. `on_point` sees each curve point as it is
/// produced. Deterministic for a given configuration and seed.
pub fn train(
    env_cfg: &EnvConfig,
    cfg: &TrainConfig,
    seed: u64,
    mut on_point: impl FnMut(&CurvePoint),
) -> Result<TrainOutcome, LearnError> {
    cfg.validate()?;
    env_cfg.validate()?;
    let mut init_rng = stream(seed, 0);
    let mut act_rng = stream(seed, 1);
    let mut replay_rng = stream(seed, 2);
    let mut episode_rng = stream(seed, 3);
    let mut target_rng = stream(seed, 4);
    let critic_step = CriticStep::from_config(cfg);
    let mut updates = 0usize;

    let mut agent = match cfg.init {
        InitScheme::Random => Agent::new(env_cfg, cfg, &mut init_rng)?,
        InitScheme::Zero => Agent::zeros(env_cfg, cfg)?,
    };
    let mut curve = Vec::new();
    if cfg.total_steps == 0 {
        return Ok(TrainOutcome {
            agent,
            curve,
            episodes: 0,
        });
    }

    let mut env = GraspEnv::new(env_cfg.clone())?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut obs = Arc::new(env.reset(episode_rng.next_u64(), &ObjectSpec::Random)?);
    let mut episodes = 1;
    let (mut loss_sum, mut loss_count) = (0.0, 0usize);
    let fault = |step: usize| move |e: LearnError| e.at_step(step);

    for step in 1..=cfg.total_steps {
        let action = if buffer.len() < cfg.warmup {
            random_action(env_cfg, &mut act_rng)
        } else {
            let a = agent.actor_forward(&obs).map_err(fault(step))?;
            add_exploration_noise(&a, cfg.noise_sigma, env_cfg, &mut act_rng)
        };
        let result = env.step(&action)?;
        let next = Arc::new(result.observation);
        buffer.push(Transition {
            obs: Arc::clone(&obs),
            action,
            reward: result.reward,
            next_obs: Arc::clone(&next),
            done: result.done,
        });
        obs = if result.done {
            episodes += 1;
            Arc::new(env.reset(episode_rng.next_u64(), &ObjectSpec::Random)?)
        } else {
            next
        };

        if buffer.len() >= cfg.warmup.max(1) {
            let batch = buffer.sample(cfg.minibatch, &mut replay_rng);
            let loss = agent
                .critic_update(&batch, &critic_step, &mut target_rng)
                .map_err(fault(step))?;
            updates += 1;
            if updates.is_multiple_of(cfg.policy_delay) {
                agent.actor_update(&batch, cfg.actor_lr).map_err(fault(step))?;
                agent.soft_update_targets(cfg.tau).map_err(fault(step))?;
            }
            loss_sum += loss;
            loss_count += 1;
        }

        if cfg.eval_every > 0 && step % cfg.eval_every == 0 {
            let mut policy = AgentPolicy::new(&agent, env_cfg)?;
            let point = CurvePoint {
                step,
                success_rate: success_rate(&mut policy, env_cfg, cfg.eval_episodes)?,
                critic_loss: if loss_count == 0 {
                    f64::NAN
                } else {
                    loss_sum / loss_count as f64
                },
            };
            (loss_sum, loss_count) = (0.0, 0);
            on_point(&point);
            curve.push(point);
        }
    }
    Ok(TrainOutcome { agent, curve, episodes })
}
