//! `hexcell eval`: frozen policies or baselines on evaluation seeds.

use std::path::PathBuf;
use std::time::Instant;

use hexcell_core::handover::HandoverParams;
use hexcell_core::logs::{write_csv, EventRow, LoadRow, UeSlotRow};
use hexcell_core::metrics::{confidence_interval_95, mean_std, EpisodeReport};
use hexcell_learn::agent::{ActMode, Agent};
use hexcell_learn::checkpoint;
use hexcell_learn::rollout::{build_agents, evaluate, Controller, EpisodeOutcome};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::config::RunConfig;
use crate::error::{CmdResult, Failure};
use crate::manifest::RunManifest;
use crate::train::prepare_out_dir;

pub const REPORTS_FILE: &str = "reports.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const LOADS_FILE: &str = "loads.csv";
pub const UE_SLOTS_FILE: &str = "ue_slots.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Baseline {
    Learned,
    Fixed(HandoverParams),
    Random,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub config: RunConfig,
    pub checkpoint: Option<PathBuf>,
    pub mode: ActMode,
    pub baseline: Baseline,
    pub episodes: usize,
    pub seed: u64,
    /// When unset nothing is written.
    pub out: Option<PathBuf>,
}

/// Mean, sample standard deviation and 95% normal interval of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MetricSummary {
    pub fn of(metric: &str, values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        let (ci_low, ci_high) = confidence_interval_95(values);
        Self {
            metric: metric.to_string(),
            n: values.len(),
            mean,
            std,
            ci_low,
            ci_high,
        }
    }
}

pub fn summarize(reports: &[EpisodeReport]) -> Vec<MetricSummary> {
    let col = |f: fn(&EpisodeReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    let latencies: Vec<f64> = reports.iter().filter_map(|r| r.mean_handover_latency).collect();
    vec![
        MetricSummary::of("episode_objective", &col(|r| r.episode_objective)),
        MetricSummary::of("ping_pong_ratio", &col(|r| r.ping_pong_ratio)),
        MetricSummary::of("mean_handover_latency", &latencies),
        MetricSummary::of("system_throughput", &col(|r| r.system_throughput)),
        MetricSummary::of("low_rate_user_ratio", &col(|r| r.low_rate_user_ratio)),
        MetricSummary::of("total_handover_count", &col(|r| r.total_handover_count as f64)),
        MetricSummary::of("intra_freq_neighbor_ratio", &col(|r| r.intra_freq_neighbor_ratio)),
    ]
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub reports: Vec<EpisodeReport>,
    pub summary: Vec<MetricSummary>,
}

impl EvalSummary {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.summary.iter().find(|m| m.metric == name)
    }
}

/// Builds agents for `config` and, when given, loads a checkpoint into them.
pub fn load_agents(config: &RunConfig, checkpoint_path: Option<&std::path::Path>) -> CmdResult<Vec<Agent>> {
    let mut agents = build_agents(&config.sim, &config.network, config.ppo.optimizer, config.train.seed)?;
    if let Some(path) = checkpoint_path {
        let header = checkpoint::load(path, &mut agents).map_err(|e| Failure::Usage(e.into()))?;
        if header.config_hash != config.hash() {
            warn!(checkpoint = %path.display(), "checkpoint was trained under a different configuration");
        }
    }
    Ok(agents)
}

pub fn controller_for(baseline: Baseline, mode: ActMode) -> Controller {
    match baseline {
        Baseline::Learned => Controller::Learned(mode),
        Baseline::Fixed(p) => Controller::Fixed(p),
        Baseline::Random => Controller::Random,
    }
}

pub fn run(opts: &EvalOptions) -> CmdResult<EvalSummary> {
    let cfg = &opts.config;
    cfg.validate().map_err(Failure::Usage)?;
    if opts.baseline == Baseline::Learned && opts.checkpoint.is_none() {
        return Err(Failure::usage("the learned baseline needs --checkpoint"));
    }
    if let Some(out) = &opts.out {
        prepare_out_dir(out)?;
    }
    let started = Instant::now();
    let agents = match opts.baseline {
        Baseline::Learned => load_agents(cfg, opts.checkpoint.as_deref())?,
        _ => Vec::new(),
    };
    let outcomes = evaluate(
        &cfg.sim,
        &agents,
        controller_for(opts.baseline, opts.mode),
        opts.seed,
        opts.episodes,
    )?;
    let reports: Vec<EpisodeReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    let summary = summarize(&reports);
    if let Some(m) = summary.first() {
        info!(
            episodes = opts.episodes,
            objective_mean = m.mean,
            objective_std = m.std,
            "evaluated"
        );
    }
    if let Some(out) = &opts.out {
        write_logs(out, &outcomes)?;
        write_csv(&out.join(REPORTS_FILE), &reports)?;
        std::fs::write(
            out.join(SUMMARY_FILE),
            serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)? + "\n",
        )?;
        let mut manifest = RunManifest::new("eval", cfg, opts.seed, 0, opts.episodes);
        manifest.outputs = [REPORTS_FILE, EVENTS_FILE, LOADS_FILE, UE_SLOTS_FILE, SUMMARY_FILE]
            .iter()
            .map(|s| s.to_string())
            .collect();
        manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
        manifest.write(out)?;
    }
    Ok(EvalSummary { reports, summary })
}

fn write_logs(out: &std::path::Path, outcomes: &[EpisodeOutcome]) -> CmdResult<()> {
    let events: Vec<EventRow> = outcomes.iter().flat_map(|o| o.log.events.iter().copied()).collect();
    let loads: Vec<LoadRow> = outcomes.iter().flat_map(|o| o.log.loads.iter().copied()).collect();
    let ue_slots: Vec<UeSlotRow> = outcomes.iter().flat_map(|o| o.log.ue_slots.iter().copied()).collect();
    write_csv(&out.join(EVENTS_FILE), &events)?;
    write_csv(&out.join(LOADS_FILE), &loads)?;
    write_csv(&out.join(UE_SLOTS_FILE), &ue_slots)?;
    Ok(())
}
