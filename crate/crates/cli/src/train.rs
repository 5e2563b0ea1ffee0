//! `hexcell train`: multi-agent PPO over freshly drawn episodes.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use hexcell_core::logs::{read_csv, write_csv};
use hexcell_learn::checkpoint::{self, CheckpointHeader};
use hexcell_learn::rollout::{build_agents, train_episode, TrainRow};
use tracing::info;

use crate::config::RunConfig;
use crate::error::{CmdResult, Failure};
use crate::manifest::RunManifest;

pub const CURVE_FILE: &str = "training.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const FINAL_CHECKPOINT: &str = "checkpoint.hxck";

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub config: RunConfig,
    pub out: PathBuf,
    /// Continue from this checkpoint; episode numbering picks up where it
    /// stopped.
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    /// The whole curve, including rows kept from a resumed run.
    pub rows: Vec<TrainRow>,
    pub first_episode: usize,
    pub final_checkpoint: PathBuf,
}

pub fn periodic_checkpoint_name(episodes_done: usize) -> String {
    format!("checkpoints/episode_{episodes_done:06}.hxck")
}

pub(crate) fn prepare_out_dir(out: &Path) -> CmdResult<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
        .map_err(Failure::Usage)?;
    let probe = out.join(".write-probe");
    std::fs::write(&probe, b"")
        .with_context(|| format!("output directory {} is not writable", out.display()))
        .map_err(Failure::Usage)?;
    std::fs::remove_file(&probe)?;
    Ok(())
}

pub fn run(opts: &TrainOptions) -> CmdResult<TrainSummary> {
    let cfg = &opts.config;
    cfg.validate().map_err(Failure::Usage)?;
    prepare_out_dir(&opts.out)?;
    let started = Instant::now();
    let seed = cfg.train.seed;
    let hash = cfg.hash();

    let mut agents = build_agents(&cfg.sim, &cfg.network, cfg.ppo.optimizer, seed)?;
    let mut first = 0usize;
    let mut rows = Vec::new();
    if let Some(path) = &opts.resume {
        let header = checkpoint::load(path, &mut agents).map_err(|e| Failure::Usage(e.into()))?;
        if header.config_hash != hash {
            return Err(Failure::usage(format!(
                "{} was written by a different configuration (hash {})",
                path.display(),
                hex::encode(header.config_hash)
            )));
        }
        first = header.episodes as usize;
        let curve = opts.out.join(CURVE_FILE);
        if curve.exists() {
            rows = read_csv::<TrainRow>(&curve)?;
            rows.retain(|r| r.episode < first);
        }
        info!(episode = first, "resuming");
    }
    std::fs::write(opts.out.join(CONFIG_FILE), cfg.to_toml_string()?)?;
    if cfg.train.checkpoint_every > 0 && cfg.train.episodes > 0 {
        std::fs::create_dir_all(opts.out.join("checkpoints"))?;
    }

    let mut outputs = vec![CONFIG_FILE.to_string(), CURVE_FILE.to_string(), FINAL_CHECKPOINT.to_string()];
    let end = first + cfg.train.episodes;
    for e in first..end {
        let (row, _) = train_episode(&cfg.sim, &mut agents, &cfg.ppo, seed, e)?;
        info!(
            episode = e,
            objective = row.objective,
            mean_reward = row.mean_reward,
            clip_fraction = row.clip_fraction,
            entropy = row.entropy,
            "trained"
        );
        rows.push(row);
        let done = e + 1;
        if cfg.train.checkpoint_every > 0 && done.is_multiple_of(cfg.train.checkpoint_every) && done < end {
            let name = periodic_checkpoint_name(done);
            let header = CheckpointHeader {
                config_hash: hash,
                episodes: done as u64,
            };
            checkpoint::save(&opts.out.join(&name), &header, &agents)?;
            write_csv(&opts.out.join(CURVE_FILE), &rows)?;
            outputs.push(name);
        }
    }

    let final_checkpoint = opts.out.join(FINAL_CHECKPOINT);
    let header = CheckpointHeader {
        config_hash: hash,
        episodes: end as u64,
    };
    checkpoint::save(&final_checkpoint, &header, &agents)?;
    write_csv(&opts.out.join(CURVE_FILE), &rows)?;

    let mut manifest = RunManifest::new("train", cfg, seed, first, cfg.train.episodes);
    manifest.outputs = outputs;
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.write(&opts.out)?;
    Ok(TrainSummary {
        rows,
        first_episode: first,
        final_checkpoint,
    })
}
