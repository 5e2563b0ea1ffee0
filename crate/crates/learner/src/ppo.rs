//! Clipped-surrogate PPO with GAE, per agent.

use hexcell_core::env::{ActionVector, ACTION_HEADS};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::error::{LearnError, Result};
use crate::nn::{PolicyNet, ValueNet};
use crate::optim::OptimizerKind;
use crate::tensor::ParamSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    /// GAE parameter xi.
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub optimizer: OptimizerKind,
    pub normalize_advantages: bool,
    /// Global gradient-norm clip applied per network, if set.
    pub max_grad_norm: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.1,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            epochs: 4,
            minibatch: 256,
            entropy_coef: 0.01,
            optimizer: OptimizerKind::Sgd,
            normalize_advantages: false,
            max_grad_norm: None,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.gamma) || !unit(self.gae_lambda) {
            return Err(LearnError::Config("gamma and gae_lambda must lie in [0, 1]".into()));
        }
        if !(self.clip_eps > 0.0) {
            return Err(LearnError::Config("clip_eps must be positive".into()));
        }
        if !(self.lr_actor >= 0.0 && self.lr_critic >= 0.0) {
            return Err(LearnError::Config("learning rates must be non-negative".into()));
        }
        if self.epochs == 0 || self.minibatch == 0 {
            return Err(LearnError::Config("epochs and minibatch must be positive".into()));
        }
        if self.max_grad_norm.is_some_and(|m| !(m > 0.0)) {
            return Err(LearnError::Config("max_grad_norm must be positive".into()));
        }
        Ok(())
    }
}

/// One decision of one agent, stored as collected.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Tokenized observation.
    pub features: Vec<f64>,
    pub action: ActionVector,
    /// Joint log-probability under the behavior policy.
    pub log_prob: f64,
    pub reward: f64,
    /// Critic estimate of the observation at collection time.
    pub value: f64,
}

pub type Trajectory = Vec<Transition>;

/// GAE advantages and discounted returns, bootstrapping with zero after the
/// last step.
pub fn gae_advantages(rewards: &[f64], values: &[f64], gamma: f64, xi: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut ret = vec![0.0; n];
    let (mut a, mut g) = (0.0, 0.0);
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next - values[t];
        a = delta + gamma * xi * a;
        g = rewards[t] + gamma * g;
        adv[t] = a;
        ret[t] = g;
    }
    (adv, ret)
}

pub fn clip_fn(eps: f64, a: f64) -> f64 {
    if a >= 0.0 {
        (1.0 + eps) * a
    } else {
        (1.0 - eps) * a
    }
}

/// Per-sample clipped surrogate `min(ratio * A, clip_fn(eps, A))`.
pub fn surrogate(ratio: f64, a: f64, eps: f64) -> f64 {
    (ratio * a).min(clip_fn(eps, a))
}

/// Negated mean surrogate, the quantity minimized for the actor.
pub fn policy_loss(new_log_probs: &[f64], old_log_probs: &[f64], adv: &[f64], eps: f64) -> Result<f64> {
    if adv.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let total: f64 = new_log_probs
        .iter()
        .zip(old_log_probs)
        .zip(adv)
        .map(|((n, o), a)| surrogate((n - o).exp(), *a, eps))
        .sum();
    Ok(-total / adv.len() as f64)
}

pub fn value_loss(values: &[f64], returns: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    Ok(0.5 * values.iter().zip(returns).map(|(v, g)| (v - g).powi(2)).sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub loss: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
}

/// Actor loss (negated surrogate minus entropy bonus) over a minibatch, with
/// gradients accumulated into `grads` when given.
pub fn actor_loss(
    net: &PolicyNet,
    batch: &[&Transition],
    adv: &[f64],
    eps: f64,
    entropy_coef: f64,
    mut grads: Option<&mut ParamSet>,
) -> Result<BatchStats> {
    if batch.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let inv_b = 1.0 / batch.len() as f64;
    let mut stats = BatchStats::default();
    for (tr, &a) in batch.iter().zip(adv) {
        let out = net.forward_features(&tr.features)?;
        let lps = out.log_probs();
        let logp: f64 = (0..ACTION_HEADS).map(|h| lps[h][tr.action.0[h]]).sum();
        let ratio = (logp - tr.log_prob).exp();
        let clipped = ratio * a > clip_fn(eps, a);
        let entropies: Vec<f64> = lps.iter().map(|lp| -lp.iter().map(|l| l.exp() * l).sum::<f64>()).collect();
        let ent: f64 = entropies.iter().sum();
        stats.loss -= (surrogate(ratio, a, eps) + entropy_coef * ent) * inv_b;
        stats.mean_ratio += ratio * inv_b;
        stats.clip_fraction += if clipped { inv_b } else { 0.0 };
        stats.entropy += ent * inv_b;

        if let Some(g) = grads.as_deref_mut() {
            let coef = if clipped { 0.0 } else { a * ratio };
            let dlogits: Vec<Vec<f64>> = (0..ACTION_HEADS)
                .map(|h| {
                    lps[h]
                        .iter()
                        .enumerate()
                        .map(|(j, &lp)| {
                            let p = lp.exp();
                            let onehot = if j == tr.action.0[h] { 1.0 } else { 0.0 };
                            (-coef * (onehot - p) + entropy_coef * p * (lp + entropies[h])) * inv_b
                        })
                        .collect()
                })
                .collect();
            net.backward(&out, &dlogits, g);
        }
    }
    Ok(stats)
}

/// Critic loss `0.5 * mean (V - g)^2`, with gradients when `grads` is given.
pub fn critic_loss(net: &ValueNet, batch: &[&Transition], returns: &[f64], mut grads: Option<&mut ParamSet>) -> Result<f64> {
    if batch.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let inv_b = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (tr, &g) in batch.iter().zip(returns) {
        let (cache, v) = net.forward_features(&tr.features)?;
        loss += 0.5 * (v - g).powi(2) * inv_b;
        if let Some(gr) = grads.as_deref_mut() {
            net.backward(&cache, (v - g) * inv_b, gr);
        }
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
    /// Mean ratio of the very first minibatch; 1 for fresh trajectories.
    pub first_ratio: f64,
    pub minibatches: usize,
}

fn clip_norm(g: &mut ParamSet, max: Option<f64>) {
    if let Some(max) = max {
        let n = g.norm();
        if n > max {
            g.scale(max / n);
        }
    }
}

/// Runs the PPO epochs for one agent on its own trajectory. On a non-finite
/// gradient the agent is left exactly as it was and the offending block is
/// reported.
pub fn update<R: Rng + ?Sized>(agent: &mut Agent, traj: &[Transition], cfg: &PpoConfig, rng: &mut R) -> Result<UpdateStats> {
    if traj.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let rewards: Vec<f64> = traj.iter().map(|t| t.reward).collect();
    let values: Vec<f64> = traj.iter().map(|t| t.value).collect();
    let (mut adv, ret) = gae_advantages(&rewards, &values, cfg.gamma, cfg.gae_lambda);
    if cfg.normalize_advantages && adv.len() > 1 {
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
    }

    let backup = agent.clone();
    let result = run_epochs(agent, traj, &adv, &ret, cfg, rng);
    if result.is_err() {
        *agent = backup;
    }
    result
}

fn run_epochs<R: Rng + ?Sized>(
    agent: &mut Agent,
    traj: &[Transition],
    adv: &[f64],
    ret: &[f64],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    let mut order: Vec<usize> = (0..traj.len()).collect();
    let mut stats = UpdateStats::default();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let batch: Vec<&Transition> = chunk.iter().map(|&i| &traj[i]).collect();
            let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
            let g: Vec<f64> = chunk.iter().map(|&i| ret[i]).collect();

            let mut ga = agent.policy.params.zeros_like();
            let bs = actor_loss(&agent.policy, &batch, &a, cfg.clip_eps, cfg.entropy_coef, Some(&mut ga))?;
            let mut gc = agent.value.params.zeros_like();
            let vl = critic_loss(&agent.value, &batch, &g, Some(&mut gc))?;
            if let Some(block) = ga.first_non_finite() {
                return Err(LearnError::NonFinite {
                    block: format!("actor.{block}"),
                });
            }
            if let Some(block) = gc.first_non_finite() {
                return Err(LearnError::NonFinite {
                    block: format!("critic.{block}"),
                });
            }
            clip_norm(&mut ga, cfg.max_grad_norm);
            clip_norm(&mut gc, cfg.max_grad_norm);
            agent.actor_opt.apply(&mut agent.policy.params, &ga, cfg.lr_actor);
            agent.critic_opt.apply(&mut agent.value.params, &gc, cfg.lr_critic);

            if stats.minibatches == 0 {
                stats.first_ratio = bs.mean_ratio;
            }
            stats.minibatches += 1;
            stats.policy_loss += bs.loss;
            stats.value_loss += vl;
            stats.mean_ratio += bs.mean_ratio;
            stats.clip_fraction += bs.clip_fraction;
            stats.entropy += bs.entropy;
        }
    }
    let k = stats.minibatches as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.mean_ratio /= k;
    stats.clip_fraction /= k;
    stats.entropy /= k;
    Ok(stats)
}
