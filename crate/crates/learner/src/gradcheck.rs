//! Central finite-difference checks of the analytic actor and critic
//! gradients.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::nn::{PolicyNet, ValueNet};
use crate::ppo::{actor_loss, critic_loss, Transition};
use crate::tensor::ParamSet;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub block: String,
    /// `|a - n| / (|a| + |n|)` over the checked coordinates, with 0 when
    /// both gradients vanish.
    pub relative_error: f64,
    pub checked: usize,
}

/// Compares `analytic` with central differences of `loss` on up to
/// `per_block` randomly chosen coordinates of every block.
pub fn compare<R: Rng + ?Sized>(
    params: &mut ParamSet,
    analytic: &ParamSet,
    step: f64,
    per_block: usize,
    rng: &mut R,
    mut loss: impl FnMut(&ParamSet) -> Result<f64>,
) -> Result<Vec<BlockError>> {
    let mut out = Vec::new();
    for b in 0..params.blocks.len() {
        let len = params.blocks[b].data.len();
        let coords: Vec<usize> = if len <= per_block {
            (0..len).collect()
        } else {
            sample(rng, len, per_block).into_vec()
        };
        let (mut diff, mut scale) = (0.0f64, 0.0f64);
        for &i in &coords {
            let orig = params.blocks[b].data[i];
            params.blocks[b].data[i] = orig + step;
            let up = loss(params)?;
            params.blocks[b].data[i] = orig - step;
            let down = loss(params)?;
            params.blocks[b].data[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.blocks[b].data[i];
            diff += (a - numeric).powi(2);
            scale += a * a + numeric * numeric;
        }
        let relative_error = if scale == 0.0 { 0.0 } else { diff.sqrt() / scale.sqrt() };
        out.push(BlockError {
            block: params.blocks[b].name.clone(),
            relative_error,
            checked: coords.len(),
        });
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn check_actor<R: Rng + ?Sized>(
    net: &PolicyNet,
    batch: &[Transition],
    adv: &[f64],
    eps: f64,
    entropy_coef: f64,
    step: f64,
    per_block: usize,
    rng: &mut R,
) -> Result<Vec<BlockError>> {
    let refs: Vec<&Transition> = batch.iter().collect();
    let mut grads = net.params.zeros_like();
    actor_loss(net, &refs, adv, eps, entropy_coef, Some(&mut grads))?;
    let mut probe = net.clone();
    let mut params = net.params.clone();
    compare(&mut params, &grads, step, per_block, rng, |p| {
        probe.params.clone_from(p);
        Ok(actor_loss(&probe, &refs, adv, eps, entropy_coef, None)?.loss)
    })
}

pub fn check_critic<R: Rng + ?Sized>(
    net: &ValueNet,
    batch: &[Transition],
    returns: &[f64],
    step: f64,
    per_block: usize,
    rng: &mut R,
) -> Result<Vec<BlockError>> {
    let refs: Vec<&Transition> = batch.iter().collect();
    let mut grads = net.params.zeros_like();
    critic_loss(net, &refs, returns, Some(&mut grads))?;
    let mut probe = net.clone();
    let mut params = net.params.clone();
    compare(&mut params, &grads, step, per_block, rng, |p| {
        probe.params.clone_from(p);
        critic_loss(&probe, &refs, returns, None)
    })
}

/// A randomly drawn small problem: a reduced actor and critic (3x3 window,
/// two frames, 97-way heads) plus a batch with advantages and returns.
pub struct Problem {
    pub policy: PolicyNet,
    pub value: ValueNet,
    pub batch: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub clip_eps: f64,
}

pub fn reduced_problem<R: Rng + ?Sized>(rng: &mut R, batch_size: usize, head_basis: usize) -> Result<Problem> {
    use crate::agent::sample_action;
    use crate::nn::{Arch, InputShape, NetworkConfig};
    use hexcell_core::env::{GridPair, Observation};

    let cfg = NetworkConfig {
        embed_dim: 8,
        key_dim: 4,
        hidden_dim: 8,
        patch: 1,
        head_init_scale: 1.0,
        head_basis,
    };
    let arch = Arch::new(InputShape { side: 3, window: 2 }, &cfg)?;
    let policy = PolicyNet::new(arch.clone(), rng);
    let value = ValueNet::new(arch.clone(), rng);
    let clip_eps = 0.1;
    let mut batch = Vec::with_capacity(batch_size);
    let mut advantages = Vec::with_capacity(batch_size);
    while batch.len() < batch_size {
        let frames = (0..2)
            .map(|_| {
                let mut g = GridPair::zeros(3);
                for i in 0..9 {
                    g.ued[i] = rng.random_range(0..6);
                    g.csm[i] = rng.random_range(0..=g.ued[i]);
                }
                g
            })
            .collect();
        let features = arch.tokenize(&Observation { side: 3, frames })?;
        let lps = policy.forward_features(&features)?.log_probs();
        let (action, logp) = sample_action(&lps, rng);
        let old = logp + rng.random_range(-0.4..0.4);
        let ratio = (logp - old).exp();
        // Keep clear of the surrogate's kinks so differences are smooth.
        if (ratio - (1.0 + clip_eps)).abs() < 1e-3 || (ratio - (1.0 - clip_eps)).abs() < 1e-3 {
            continue;
        }
        advantages.push(rng.random_range(-2.0..2.0));
        batch.push(Transition {
            features,
            action,
            log_prob: old,
            reward: 0.0,
            value: 0.0,
        });
    }
    let returns = (0..batch_size).map(|_| rng.random_range(-3.0..3.0)).collect();
    Ok(Problem {
        policy,
        value,
        batch,
        advantages,
        returns,
        clip_eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for basis in [0, 0, 0, 6, 6] {
            let p = reduced_problem(&mut rng, 4, basis).unwrap();
            let actor = check_actor(&p.policy, &p.batch, &p.advantages, p.clip_eps, 0.01, 1e-5, 40, &mut rng).unwrap();
            let critic = check_critic(&p.value, &p.batch, &p.returns, 1e-5, 40, &mut rng).unwrap();
            for e in actor.iter().chain(&critic) {
                assert!(e.relative_error <= 1e-4, "{e:?}");
            }
        }
    }
}
