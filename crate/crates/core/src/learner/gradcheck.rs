//! Central finite-difference checks of the critic loss and actor objective
//! gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sim_env::ACTION_DIM;

use super::ddpg::{actor_objective_grad, critic_loss_grad, CriticSample, StateSample};
use super::net::{Activation, Grads, Network, NetworkSpec};
use super::LearnError;

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm, or the absolute
/// difference when both are below `1e-10`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Largest per-tensor relative error between `analytic` and central
/// differences of `f` over every parameter of `net`.
fn compare(net: &Network, analytic: &Grads, h: f64, f: impl Fn(&Network) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for (t, g) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; g.len()];
        let mut probe = net.clone();
        for (i, n) in numeric.iter_mut().enumerate() {
            let orig = probe.tensors_mut()[t][i];
            probe.tensors_mut()[t][i] = orig + h;
            let plus = f(&probe);
            probe.tensors_mut()[t][i] = orig - h;
            let minus = f(&probe);
            probe.tensors_mut()[t][i] = orig;
            *n = (plus - minus) / (2.0 * h);
        }
        worst = worst.max(relative_error(g, &numeric));
    }
    worst
}

/// Worst per-tensor error of the critic-loss gradient, over all critics.
pub fn critic_gradient_error(critics: &[Network], batch: &[CriticSample], h: f64) -> Result<f64, LearnError> {
    let (_, grads) = critic_loss_grad(critics, batch)?;
    let mut worst = 0.0f64;
    for (k, critic) in critics.iter().enumerate() {
        worst = worst.max(compare(critic, &grads[k], h, |probe| {
            let mut set = critics.to_vec();
            set[k] = probe.clone();
            critic_loss_grad(&set, batch).map(|(l, _)| l).unwrap_or(f64::NAN)
        }));
    }
    Ok(worst)
}

/// Worst per-tensor error of the actor-objective gradient.
pub fn actor_gradient_error(
    actor: &Network,
    critics: &[Network],
    batch: &[StateSample],
    h: f64,
) -> Result<f64, LearnError> {
    let (_, grads) = actor_objective_grad(actor, critics, batch)?;
    Ok(compare(actor, &grads, h, |probe| {
        actor_objective_grad(probe, critics, batch)
            .map(|(j, _)| j)
            .unwrap_or(f64::NAN)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReport {
    pub networks: usize,
    pub minibatches: usize,
    pub worst_critic: f64,
    pub worst_actor: f64,
}

/// Random small actor/critic pairs (alternating tanh and ReLU hidden
/// units, two phase critics), each checked on random minibatches of
/// `batch_size`.
pub fn gradient_fidelity(
    networks: usize,
    minibatches: usize,
    batch_size: usize,
    seed: u64,
) -> Result<GradientReport, LearnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (side, extra) = (5, 4);
    let mut report = GradientReport {
        networks,
        minibatches,
        worst_critic: 0.0,
        worst_actor: 0.0,
    };
    for n in 0..networks {
        let spec = NetworkSpec {
            conv_filters: vec![2, 2],
            kernel: 3,
            stride: 2,
            hidden: vec![6, 5],
            activation: if n % 2 == 0 { Activation::Tanh } else { Activation::Relu },
            final_init: 0.5,
        };
        let actor = Network::random(&spec, (side, side), extra, ACTION_DIM, Activation::Tanh, &mut rng)?;
        let critics = (0..2)
            .map(|_| {
                Network::random(
                    &spec,
                    (side, side),
                    extra + ACTION_DIM,
                    1,
                    Activation::Identity,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        for _ in 0..minibatches {
            let images: Vec<Vec<f64>> = (0..batch_size)
                .map(|_| (0..side * side).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            let features: Vec<Vec<f64>> = (0..batch_size)
                .map(|_| (0..extra).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let phases: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..2)).collect();
            let critic_batch: Vec<CriticSample> = (0..batch_size)
                .map(|i| CriticSample {
                    image: &images[i],
                    features: features[i].clone(),
                    action: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
                    target: rng.random_range(-1.0..2.0),
                    critic: phases[i],
                })
                .collect();
            let state_batch: Vec<StateSample> = (0..batch_size)
                .map(|i| StateSample {
                    image: &images[i],
                    features: features[i].clone(),
                    critic: phases[i],
                })
                .collect();
            report.worst_critic = report
                .worst_critic
                .max(critic_gradient_error(&critics, &critic_batch, 1e-5)?);
            report.worst_actor = report
                .worst_actor
                .max(actor_gradient_error(&actor, &critics, &state_batch, 1e-5)?);
        }
    }
    Ok(report)
}
