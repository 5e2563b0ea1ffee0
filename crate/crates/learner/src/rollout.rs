//! Episode drivers for training and evaluation.
//!
//! Agents decide every `action_period` slots. One PPO transition spans one
//! decision, and its reward is the sum of the per-slot rewards collected
//! while that decision's parameters were in force.

use hexcell_core::env::{ActionVector, Environment, EpisodeLog, ACTION_CHOICES, ACTION_HEADS};
use hexcell_core::handover::HandoverParams;
use hexcell_core::logs::Table;
use hexcell_core::metrics::{episode_report, EpisodeReport};
use hexcell_core::rng::{derive_seed, stream, tag};
use hexcell_core::SimConfig;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{ActMode, Agent};
use crate::error::{LearnError, Result};
use crate::nn::{Arch, InputShape, NetworkConfig};
use crate::optim::OptimizerKind;
use crate::ppo::{update, PpoConfig, Trajectory, Transition, UpdateStats};

/// Who sets the handover parameters during an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Controller {
    Learned(ActMode),
    Fixed(HandoverParams),
    /// Fresh uniform indices per head at every decision.
    Random,
}

pub fn input_shape(sim: &SimConfig) -> InputShape {
    InputShape {
        side: sim.observation.side(),
        window: sim.observation.window,
    }
}

/// One agent per cell, all starting from the same seed-derived weights.
pub fn build_agents(sim: &SimConfig, net: &NetworkConfig, optimizer: OptimizerKind, seed: u64) -> Result<Vec<Agent>> {
    let arch = Arch::new(input_shape(sim), net)?;
    let template = Agent::new(arch, optimizer, &mut stream(seed, &[tag::INIT]));
    Ok(vec![template; sim.scenario.num_cells()])
}

pub fn train_seed(base: u64, episode: usize) -> u64 {
    derive_seed(base, &[tag::EPISODE, episode as u64])
}

pub fn eval_seed(base: u64, episode: usize) -> u64 {
    derive_seed(base, &[tag::EVAL, episode as u64])
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub log: EpisodeLog,
    pub report: EpisodeReport,
    /// Per-agent trajectories; filled only for learned controllers.
    pub trajectories: Vec<Trajectory>,
}

fn random_action<R: Rng + ?Sized>(rng: &mut R) -> ActionVector {
    let mut idx = [0usize; ACTION_HEADS];
    idx.iter_mut().for_each(|i| *i = rng.random_range(0..ACTION_CHOICES));
    ActionVector(idx)
}

/// Plays one episode with the world keyed by `env_seed`.
pub fn run_episode(sim: &SimConfig, agents: &[Agent], controller: Controller, env_seed: u64, episode: usize) -> Result<EpisodeOutcome> {
    let (mut env, mut obs) = Environment::reset(sim, env_seed, episode)?;
    let m = env.num_cells();
    if matches!(controller, Controller::Learned(_)) && agents.len() != m {
        return Err(LearnError::Config(format!("{} agents for {m} cells", agents.len())));
    }
    let mut agent_rngs: Vec<_> = (0..m).map(|c| stream(env_seed, &[tag::ACTION, c as u64])).collect();
    let mut shared_rng = stream(env_seed, &[tag::ACTION]);
    let period = sim.env.action_period;

    let mut trajectories: Vec<Trajectory> = vec![Vec::new(); m];
    let mut actions = vec![ActionVector::encode(&sim.env.initial_params); m];
    loop {
        let t = env.slot();
        if (t - 1).is_multiple_of(period) {
            match controller {
                Controller::Learned(mode) => {
                    let decisions = agents
                        .par_iter()
                        .zip(obs.par_iter())
                        .zip(agent_rngs.par_iter_mut())
                        .map(|((a, o), rng)| a.act(o, mode, rng))
                        .collect::<Result<Vec<_>>>()?;
                    for (c, d) in decisions.into_iter().enumerate() {
                        actions[c] = d.action;
                        trajectories[c].push(Transition {
                            features: d.features,
                            action: d.action,
                            log_prob: d.log_prob,
                            reward: 0.0,
                            value: d.value,
                        });
                    }
                }
                Controller::Fixed(p) => actions.fill(ActionVector::encode(&p)),
                Controller::Random => actions.iter_mut().for_each(|a| *a = random_action(&mut shared_rng)),
            }
        }
        let out = env.step(&actions)?;
        for (traj, r) in trajectories.iter_mut().zip(&out.rewards) {
            if let Some(last) = traj.last_mut() {
                last.reward += r;
            }
        }
        obs = out.observations;
        if out.done {
            break;
        }
    }
    let report = episode_report(
        env.log(),
        env.layout(),
        env.graph(),
        sim.scenario.num_slots,
        sim.scenario.slot_length,
        &sim.metrics,
    );
    Ok(EpisodeOutcome {
        log: env.into_log(),
        report,
        trajectories,
    })
}

/// One row of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub episode: usize,
    pub objective: f64,
    pub mean_reward: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

impl Table for TrainRow {
    const HEADERS: &'static [&'static str] = &[
        "episode",
        "objective",
        "mean_reward",
        "clip_fraction",
        "mean_ratio",
        "policy_loss",
        "value_loss",
        "entropy",
    ];
}

/// Collects one sampled episode and updates every agent on its own
/// trajectory only.
pub fn train_episode(
    sim: &SimConfig,
    agents: &mut [Agent],
    ppo: &PpoConfig,
    seed: u64,
    episode: usize,
) -> Result<(TrainRow, EpisodeOutcome)> {
    let env_seed = train_seed(seed, episode);
    let outcome = run_episode(sim, agents, Controller::Learned(ActMode::Sample), env_seed, episode)?;
    let stats = agents
        .par_iter_mut()
        .zip(outcome.trajectories.par_iter())
        .enumerate()
        .map(|(c, (agent, traj))| {
            let mut rng = stream(seed, &[tag::SHUFFLE, episode as u64, c as u64]);
            update(agent, traj, ppo, &mut rng)
        })
        .collect::<Result<Vec<UpdateStats>>>()?;
    let n = stats.len().max(1) as f64;
    let mean = |f: fn(&UpdateStats) -> f64| stats.iter().map(f).sum::<f64>() / n;
    let rewards: Vec<f64> = outcome.log.loads.iter().map(|r| r.reward).collect();
    let row = TrainRow {
        episode,
        objective: outcome.report.episode_objective,
        mean_reward: rewards.iter().sum::<f64>() / rewards.len().max(1) as f64,
        clip_fraction: mean(|s| s.clip_fraction),
        mean_ratio: mean(|s| s.mean_ratio),
        policy_loss: mean(|s| s.policy_loss),
        value_loss: mean(|s| s.value_loss),
        entropy: mean(|s| s.entropy),
    };
    Ok((row, outcome))
}

/// Evaluates a controller on `episodes` seeds derived from `seed`. Episodes
/// run in parallel; results come back in episode order.
pub fn evaluate(sim: &SimConfig, agents: &[Agent], controller: Controller, seed: u64, episodes: usize) -> Result<Vec<EpisodeOutcome>> {
    (0..episodes)
        .into_par_iter()
        .map(|e| run_episode(sim, agents, controller, eval_seed(seed, e), e))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (SimConfig, NetworkConfig) {
        let mut sim = SimConfig::default();
        sim.scenario.num_ues = 15;
        sim.scenario.num_slots = 12;
        sim.env.action_period = 3;
        let net = NetworkConfig {
            embed_dim: 8,
            key_dim: 4,
            hidden_dim: 8,
            patch: 5,
            ..NetworkConfig::default()
        };
        (sim, net)
    }

    #[test]
    fn one_transition_per_decision_with_summed_rewards() {
        let (sim, net) = tiny();
        let agents = build_agents(&sim, &net, OptimizerKind::Sgd, 3).unwrap();
        let out = run_episode(&sim, &agents, Controller::Learned(ActMode::Sample), 11, 0).unwrap();
        assert_eq!(out.trajectories.len(), 9);
        for (c, traj) in out.trajectories.iter().enumerate() {
            assert_eq!(traj.len(), 4);
            let slot_rewards: Vec<f64> = out.log.loads.iter().filter(|r| r.cell == c).map(|r| r.reward).collect();
            for (k, tr) in traj.iter().enumerate() {
                let sum: f64 = slot_rewards[3 * k..3 * k + 3].iter().sum();
                assert!((tr.reward - sum).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_initial_agents() {
        let (sim, net) = tiny();
        let agents = build_agents(&sim, &net, OptimizerKind::Sgd, 3).unwrap();
        assert!(agents.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn training_is_deterministic() {
        let (sim, net) = tiny();
        let ppo = PpoConfig {
            minibatch: 2,
            ..PpoConfig::default()
        };
        let run = || {
            let mut agents = build_agents(&sim, &net, OptimizerKind::adam(), 5).unwrap();
            let rows: Vec<TrainRow> = (0..2).map(|e| train_episode(&sim, &mut agents, &ppo, 5, e).unwrap().0).collect();
            (rows, agents)
        };
        let (ra, aa) = run();
        let (rb, ab) = run();
        assert_eq!(ra, rb);
        assert_eq!(aa, ab);
    }

    #[test]
    fn baselines_need_no_agents() {
        let (sim, _) = tiny();
        let fixed = evaluate(&sim, &[], Controller::Fixed(HandoverParams::mid_range()), 1, 2).unwrap();
        let random = evaluate(&sim, &[], Controller::Random, 1, 2).unwrap();
        assert_eq!(fixed.len(), 2);
        assert!(random.iter().all(|o| o.trajectories.iter().all(Vec::is_empty)));
    }
}
