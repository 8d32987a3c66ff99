//! Deterministic actor-critic: actor and phase-indexed critics, their
//! target copies, and the per-minibatch update rules.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::sim_env::{Action, EnvConfig, Observation, ProprioBlock, Transition, ACTION_DIM};

use super::net::{soft_update, Activation, Adam, Grads, Network};
use super::{LearnError, TrainConfig};

/// `y = r + gamma * (1 - done) * q_next`.
pub fn bellman_target(reward: f64, done: bool, gamma: f64, q_next: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * q_next
    }
}

/// Critic index for an episode phase, from mean closure in `[0, 1]`:
/// the open-hand approach maps to 0, closing and lifting to `k - 1`.
pub fn phase_index(closure: f64, k: usize) -> usize {
    let k = k.max(1);
    ((closure.clamp(0.0, 1.0) * k as f64).floor() as usize).min(k - 1)
}

/// Multipliers that bring each proprioceptive value to roughly unit scale.
pub fn proprio_scale(env: &EnvConfig) -> Vec<f64> {
    let mut scale = Vec::with_capacity(env.proprio_dim());
    for block in &env.proprio_layout {
        match block {
            ProprioBlock::JointPositions => {
                scale.extend([10.0; 3]);
                scale.extend(std::iter::repeat_n(1.0, block.len() - 3));
            }
            ProprioBlock::JointVelocities => {
                scale.extend([5.0; 3]);
                scale.extend(std::iter::repeat_n(0.25, block.len() - 3));
            }
            ProprioBlock::ObjectPosition => scale.extend([20.0; 3]),
        }
    }
    scale
}

/// One critic regression example.
#[derive(Debug, Clone)]
pub struct CriticSample<'a> {
    pub image: &'a [f64],
    pub features: Vec<f64>,
    /// Normalized action, each component in `[-1, 1]`.
    pub action: [f64; ACTION_DIM],
    pub target: f64,
    pub critic: usize,
}

/// One state for the actor objective.
#[derive(Debug, Clone)]
pub struct StateSample<'a> {
    pub image: &'a [f64],
    pub features: Vec<f64>,
    pub critic: usize,
}

fn with_action(features: &[f64], action: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(features.len() + action.len());
    x.extend_from_slice(features);
    x.extend_from_slice(action);
    x
}

/// Mean squared Bellman error over `batch` and its gradient for each critic.
pub fn critic_loss_grad(critics: &[Network], batch: &[CriticSample]) -> Result<(f64, Vec<Grads>), LearnError> {
    let mut grads: Vec<Grads> = critics.iter().map(Network::zero_grads).collect();
    if batch.is_empty() {
        return Err(LearnError::Domain("empty minibatch".into()));
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for s in batch {
        let critic = critics
            .get(s.critic)
            .ok_or_else(|| LearnError::Domain(format!("no critic {}", s.critic)))?;
        let trace = critic.forward_trace(s.image, &with_action(&s.features, &s.action))?;
        let err = trace.output()[0] - s.target;
        loss += err * err / n;
        critic.backward(s.image, &trace, &[2.0 * err / n], &mut grads[s.critic]);
    }
    Ok((loss, grads))
}

/// Mean `Q(s, actor(s))` over `batch` and its gradient with respect to the
/// actor parameters.
pub fn actor_objective_grad(
    actor: &Network,
    critics: &[Network],
    batch: &[StateSample],
) -> Result<(f64, Grads), LearnError> {
    let mut grads = actor.zero_grads();
    if batch.is_empty() {
        return Err(LearnError::Domain("empty minibatch".into()));
    }
    let n = batch.len() as f64;
    let mut objective = 0.0;
    let mut scratch = Vec::new();
    for s in batch {
        let critic = critics
            .get(s.critic)
            .ok_or_else(|| LearnError::Domain(format!("no critic {}", s.critic)))?;
        let actor_trace = actor.forward_trace(s.image, &s.features)?;
        let action = actor_trace.output();
        let critic_trace = critic.forward_trace(s.image, &with_action(&s.features, action))?;
        objective += critic_trace.output()[0] / n;
        scratch.clear();
        scratch.extend(critic.zero_grads());
        let g_in = critic.backward(s.image, &critic_trace, &[1.0 / n], &mut scratch);
        let g_action = &g_in[g_in.len() - ACTION_DIM..];
        actor.backward(s.image, &actor_trace, g_action, &mut grads);
    }
    Ok((objective, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub actor: Network,
    pub critics: Vec<Network>,
    pub target_actor: Network,
    pub target_critics: Vec<Network>,
    actor_opt: Adam,
    critic_opts: Vec<Adam>,
    /// Critics per twin set; `critics.len()` is `phases` or `2 * phases`.
    phases: usize,
    limits: [f64; ACTION_DIM],
    scale: Vec<f64>,
}

/// Hyperparameters of one critic step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticStep {
    pub lr: f64,
    pub gamma: f64,
    /// Bootstrap targets are clamped to this range.
    pub clip: [f64; 2],
    /// Std of the Gaussian added to target-policy actions, in bound-relative
    /// units, truncated at `2.5 * target_noise`. Zero disables smoothing.
    pub target_noise: f64,
}

impl CriticStep {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.critic_lr,
            gamma: cfg.gamma,
            clip: cfg.target_clip,
            target_noise: cfg.target_noise,
        }
    }
}

impl Agent {
    fn dims(env: &EnvConfig) -> ((usize, usize), usize) {
        ((env.image_size, env.image_size), env.proprio_dim())
    }

    fn assemble(env: &EnvConfig, phases: usize, actor: Network, critics: Vec<Network>) -> Self {
        Self {
            phases,
            actor_opt: Adam::new(&actor),
            critic_opts: critics.iter().map(Adam::new).collect(),
            target_actor: actor.clone(),
            target_critics: critics.clone(),
            actor,
            critics,
            limits: Action::limits(env),
            scale: proprio_scale(env),
        }
    }

    /// Phase critics, doubled when twin critics are enabled. Twin `j` of
    /// phase `p` is `critics[p + j * q_factoring]`.
    pub fn critic_count(cfg: &TrainConfig) -> usize {
        cfg.q_factoring * if cfg.twin_critics { 2 } else { 1 }
    }

    /// Randomly initialized networks; targets start as exact copies.
    pub fn new(env: &EnvConfig, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Self, LearnError> {
        let (image, proprio) = Self::dims(env);
        let actor = Network::random(&cfg.network, image, proprio, ACTION_DIM, Activation::Tanh, rng)?;
        let critics = (0..Self::critic_count(cfg))
            .map(|_| Network::random(&cfg.network, image, proprio + ACTION_DIM, 1, Activation::Identity, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::assemble(env, cfg.q_factoring, actor, critics))
    }

    /// All parameters zero: the actor outputs the zero action everywhere.
    pub fn zeros(env: &EnvConfig, cfg: &TrainConfig) -> Result<Self, LearnError> {
        let (image, proprio) = Self::dims(env);
        let actor = Network::zeros(&cfg.network, image, proprio, ACTION_DIM, Activation::Tanh)?;
        let critics = (0..Self::critic_count(cfg))
            .map(|_| Network::zeros(&cfg.network, image, proprio + ACTION_DIM, 1, Activation::Identity))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::assemble(env, cfg.q_factoring, actor, critics))
    }

    /// Every parameter tensor with a qualified name, in checkpoint order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut nets: Vec<(String, &Network)> = vec![("actor".into(), &self.actor)];
        nets.extend(self.critics.iter().enumerate().map(|(i, c)| (format!("critic{i}"), c)));
        nets.push(("target_actor".into(), &self.target_actor));
        nets.extend(
            self.target_critics
                .iter()
                .enumerate()
                .map(|(i, c)| (format!("target_critic{i}"), c)),
        );
        nets.into_iter()
            .flat_map(|(prefix, net)| {
                net.tensors()
                    .into_iter()
                    .map(move |(name, shape, values)| (format!("{prefix}.{name}"), shape, values))
            })
            .collect()
    }

    pub fn named_tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = self.actor.tensors_mut();
        for c in &mut self.critics {
            out.extend(c.tensors_mut());
        }
        out.extend(self.target_actor.tensors_mut());
        for c in &mut self.target_critics {
            out.extend(c.tensors_mut());
        }
        out
    }

    /// Scaled proprioception.
    pub fn features(&self, obs: &Observation) -> Result<Vec<f64>, LearnError> {
        if obs.proprio.len() != self.scale.len() {
            return Err(LearnError::Domain(format!(
                "observation has {} proprioceptive values, agent expects {}",
                obs.proprio.len(),
                self.scale.len()
            )));
        }
        Ok(obs.proprio.iter().zip(&self.scale).map(|(v, s)| v * s).collect())
    }

    pub fn phase(&self, obs: &Observation) -> usize {
        phase_index(obs.closure, self.phases)
    }

    fn normalized_action(net: &Network, obs: &Observation, features: &[f64]) -> Result<[f64; ACTION_DIM], LearnError> {
        let y = net.forward(&obs.depth.data, features)?;
        let mut a = [0.0; ACTION_DIM];
        a.copy_from_slice(&y);
        Ok(a)
    }

    /// Deterministic action, each component within its per-step bound.
    pub fn actor_forward(&self, obs: &Observation) -> Result<Action, LearnError> {
        let f = self.features(obs)?;
        let a = Self::normalized_action(&self.actor, obs, &f)?;
        Ok(Action::from_array(std::array::from_fn(|i| a[i] * self.limits[i])))
    }

    pub fn normalize(&self, action: &Action) -> [f64; ACTION_DIM] {
        let a = action.to_array();
        std::array::from_fn(|i| a[i] / self.limits[i])
    }

    /// Q-value of the critic for the observation's phase.
    pub fn critic_forward(&self, obs: &Observation, action: &Action) -> Result<f64, LearnError> {
        let f = self.features(obs)?;
        let x = with_action(&f, &self.normalize(action));
        Ok(self.critics[self.phase(obs)].forward(&obs.depth.data, &x)?[0])
    }

    fn twins(&self) -> usize {
        self.critics.len() / self.phases
    }

    /// One gradient step on each critic's share of the minibatch, using the
    /// target networks for the bootstrap (the minimum over twins, when
    /// present). Returns the pre-step loss.
    pub fn critic_update(
        &mut self,
        batch: &[&Transition],
        step: &CriticStep,
        rng: &mut impl Rng,
    ) -> Result<f64, LearnError> {
        let twins = self.twins();
        let mut samples = Vec::with_capacity(batch.len() * twins);
        for t in batch {
            let q_next = if t.done {
                0.0
            } else {
                let f = self.features(&t.next_obs)?;
                let mut a = Self::normalized_action(&self.target_actor, &t.next_obs, &f)?;
                if step.target_noise > 0.0 {
                    let bound = 2.5 * step.target_noise;
                    for ai in &mut a {
                        let z: f64 = StandardNormal.sample(rng);
                        *ai = (*ai + (step.target_noise * z).clamp(-bound, bound)).clamp(-1.0, 1.0);
                    }
                }
                let x = with_action(&f, &a);
                let phase = self.phase(&t.next_obs);
                let mut q = f64::INFINITY;
                for j in 0..twins {
                    let critic = &self.target_critics[phase + j * self.phases];
                    q = q.min(critic.forward(&t.next_obs.depth.data, &x)?[0]);
                }
                q
            };
            let target = bellman_target(t.reward, t.done, step.gamma, q_next).clamp(step.clip[0], step.clip[1]);
            let features = self.features(&t.obs)?;
            let action = self.normalize(&t.action);
            for j in 0..twins {
                samples.push(CriticSample {
                    image: &t.obs.depth.data,
                    features: features.clone(),
                    action,
                    target,
                    critic: self.phase(&t.obs) + j * self.phases,
                });
            }
        }
        let (loss, grads) = critic_loss_grad(&self.critics, &samples)?;
        if !loss.is_finite() || grads.iter().flatten().flatten().any(|g| !g.is_finite()) {
            return Err(LearnError::Fault {
                step: 0,
                msg: format!("non-finite critic loss {loss}"),
            });
        }
        for ((critic, opt), g) in self.critics.iter_mut().zip(&mut self.critic_opts).zip(&grads) {
            opt.step(critic, g, step.lr);
        }
        Ok(loss)
    }

    /// One ascent step on mean `Q(s, actor(s))`. Returns the pre-step
    /// objective.
    pub fn actor_update(&mut self, batch: &[&Transition], lr: f64) -> Result<f64, LearnError> {
        let samples = batch
            .iter()
            .map(|t| {
                Ok(StateSample {
                    image: &t.obs.depth.data,
                    features: self.features(&t.obs)?,
                    critic: self.phase(&t.obs),
                })
            })
            .collect::<Result<Vec<_>, LearnError>>()?;
        let (objective, mut grads) = actor_objective_grad(&self.actor, &self.critics, &samples)?;
        if !objective.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(LearnError::Fault {
                step: 0,
                msg: "non-finite actor gradient".into(),
            });
        }
        grads.iter_mut().flatten().for_each(|g| *g = -*g);
        self.actor_opt.step(&mut self.actor, &grads, lr);
        Ok(objective)
    }

    pub fn soft_update_targets(&mut self, tau: f64) -> Result<(), LearnError> {
        soft_update(&mut self.target_actor, &self.actor, tau)?;
        for (t, c) in self.target_critics.iter_mut().zip(&self.critics) {
            soft_update(t, c, tau)?;
        }
        Ok(())
    }
}

/// Adds `N(0, sigma^2)` to each component in bound-relative units, then
/// clamps back into bounds.
pub fn add_exploration_noise(action: &Action, sigma: f64, env: &EnvConfig, rng: &mut impl Rng) -> Action {
    let lim = Action::limits(env);
    let a = action.to_array();
    let noisy: [f64; ACTION_DIM] = std::array::from_fn(|i| {
        let z: f64 = StandardNormal.sample(rng);
        a[i] + sigma * lim[i] * z
    });
    Action::from_array(noisy).clamped(env)
}

/// Uniform over the action box.
pub fn random_action(env: &EnvConfig, rng: &mut impl Rng) -> Action {
    let lim = Action::limits(env);
    Action::from_array(std::array::from_fn(|i| rng.random_range(-lim[i]..=lim[i])))
}
