use hexcell_core::env::{ActionVector, Observation, ACTION_HEADS};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{Arch, PolicyNet, ValueNet};
use crate::optim::{Optimizer, OptimizerKind};

/// How the actor turns distributions into actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    Sample,
    Greedy,
}

/// One cell's learner: its own actor, critic and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub policy: PolicyNet,
    pub value: ValueNet,
    pub actor_opt: Optimizer,
    pub critic_opt: Optimizer,
}

/// Result of acting on one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub features: Vec<f64>,
    pub action: ActionVector,
    pub log_prob: f64,
    pub value: f64,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(arch: Arch, optimizer: OptimizerKind, rng: &mut R) -> Self {
        let policy = PolicyNet::new(arch.clone(), rng);
        let value = ValueNet::new(arch, rng);
        Self {
            actor_opt: Optimizer::new(optimizer, &policy.params),
            critic_opt: Optimizer::new(optimizer, &value.params),
            policy,
            value,
        }
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &Observation, mode: ActMode, rng: &mut R) -> Result<Decision> {
        let features = self.policy.arch.tokenize(obs)?;
        let out = self.policy.forward_features(&features)?;
        let lps = out.log_probs();
        let (action, log_prob) = match mode {
            ActMode::Sample => sample_action(&lps, rng),
            ActMode::Greedy => greedy_action(&lps),
        };
        let value = self.value.forward_features(&features)?.1;
        Ok(Decision {
            features,
            action,
            log_prob,
            value,
        })
    }
}

/// Draws one index per head from log-probability vectors; returns the
/// action and its joint log-probability.
pub fn sample_action<R: Rng + ?Sized>(log_probs: &[Vec<f64>], rng: &mut R) -> (ActionVector, f64) {
    let mut idx = [0usize; ACTION_HEADS];
    let mut total = 0.0;
    for (h, lp) in log_probs.iter().enumerate().take(ACTION_HEADS) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = lp.iter().rposition(|l| l.is_finite()).unwrap_or(0);
        for (j, l) in lp.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                pick = j;
                break;
            }
        }
        idx[h] = pick;
        total += lp[pick];
    }
    (ActionVector(idx), total)
}

/// Per-head argmax; ties go to the lowest index.
pub fn greedy_action(log_probs: &[Vec<f64>]) -> (ActionVector, f64) {
    let mut idx = [0usize; ACTION_HEADS];
    let mut total = 0.0;
    for (h, lp) in log_probs.iter().enumerate().take(ACTION_HEADS) {
        let best = (1..lp.len()).fold(0, |b, j| if lp[j] > lp[b] { j } else { b });
        idx[h] = best;
        total += lp[best];
    }
    (ActionVector(idx), total)
}
