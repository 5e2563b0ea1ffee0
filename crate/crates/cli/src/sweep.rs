//! `hexcell sweep`: bucketed scenario studies.
//!
//! For each bucket the sweep draws candidate scenarios (UE distribution
//! centre and spread, mean-reversion rate, or frequency plan), measures the
//! swept quantity on the generated episode and keeps the candidate only if
//! the value falls inside the bucket. Buckets that stay short after
//! `max_attempts` draws are reported with what they got, never padded.
//!
//! The mean-reversion rate is chosen to aim at a target speed. With no noise
//! a UE covers `|l_1 - mu_k| * (1 - (1 - iota)^T)` over the episode, and for
//! a 2-D Gaussian spread `sigma` the expected start-to-attractor distance is
//! `sigma * sqrt(pi)`, which gives `iota` in closed form.

use std::path::PathBuf;

use hexcell_core::consensus::NeighborGraph;
use hexcell_core::logs::{write_csv, Table};
use hexcell_core::metrics::{intra_freq_neighbor_ratio, mean_std, EpisodeReport};
use hexcell_core::rng::{derive_seed, stream, tag};
use hexcell_core::scenario::{average_ue_speed, build_layout, generate_trajectories, ue_distribution_std, OuParams, FREQUENCY_BANDS};
use hexcell_core::SimConfig;
use hexcell_learn::agent::{ActMode, Agent};
use hexcell_learn::rollout::run_episode;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CmdResult, Failure};
use crate::eval::{controller_for, load_agents, Baseline};
use crate::manifest::RunManifest;
use crate::train::prepare_out_dir;

pub const ROWS_FILE: &str = "sweep.csv";
pub const BUCKETS_FILE: &str = "buckets.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    UeDistributionStd,
    AvgSpeed,
    IntraFreqRatio,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub config: RunConfig,
    pub axis: Axis,
    pub buckets: Vec<[f64; 2]>,
    pub per_bucket: usize,
    pub max_attempts: usize,
    pub seed: u64,
    pub baseline: Baseline,
    pub mode: ActMode,
    pub checkpoint: Option<PathBuf>,
    /// Extra acceptance band on the other mobility quantity: speed (m/s) when
    /// sweeping the distribution std, distribution std when sweeping speed.
    pub hold: Option<[f64; 2]>,
    /// Range for the drawn UE distribution spread, in meters.
    pub sigma_range: [f64; 2],
    /// Range for the drawn UE distribution centre, in meters.
    pub mean_range: [f64; 2],
    pub out: Option<PathBuf>,
}

impl SweepOptions {
    /// Defaults for everything but the axis and buckets.
    pub fn new(config: RunConfig, axis: Axis, buckets: Vec<[f64; 2]>) -> Self {
        let size = config.sim.scenario.map_size_m;
        Self {
            config,
            axis,
            buckets,
            per_bucket: 20,
            max_attempts: 2000,
            seed: 0,
            baseline: Baseline::Fixed(hexcell_core::handover::HandoverParams::mid_range()),
            mode: ActMode::Greedy,
            checkpoint: None,
            hold: None,
            sigma_range: [0.03 * size, 0.6 * size],
            mean_range: [0.2 * size, 0.8 * size],
            out: None,
        }
    }
}

/// One accepted episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub bucket: usize,
    pub lo: f64,
    pub hi: f64,
    pub attempt: usize,
    pub axis_value: f64,
    /// Drawn UE distribution spread (m) and mean-reversion rate.
    pub sigma: f64,
    pub iota: f64,
    pub ue_distribution_std: f64,
    pub avg_speed: f64,
    pub intra_freq_ratio: f64,
    pub mean_load_std: f64,
    pub episode_objective: f64,
    pub total_handover_count: usize,
    pub ping_pong_ratio: f64,
    pub system_throughput: f64,
    pub low_rate_user_ratio: f64,
}

impl Table for SweepRow {
    const HEADERS: &'static [&'static str] = &[
        "bucket",
        "lo",
        "hi",
        "attempt",
        "axis_value",
        "sigma",
        "iota",
        "ue_distribution_std",
        "avg_speed",
        "intra_freq_ratio",
        "mean_load_std",
        "episode_objective",
        "total_handover_count",
        "ping_pong_ratio",
        "system_throughput",
        "low_rate_user_ratio",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub bucket: usize,
    pub lo: f64,
    pub hi: f64,
    pub accepted: usize,
    pub attempts: usize,
    /// False when the bucket got fewer than the requested episodes.
    pub complete: bool,
    pub axis_mean: f64,
    pub load_std_mean: f64,
    pub load_std_std: f64,
    pub handover_count_mean: f64,
    pub handover_count_std: f64,
    pub throughput_mean: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub buckets: Vec<BucketSummary>,
}

/// Mean-reversion rate aimed at `speed` m/s for a Gaussian spread `sigma`.
pub fn iota_for_speed(speed: f64, sigma: f64, slots: usize, slot_length: f64) -> f64 {
    let q = speed * slots as f64 * slot_length / (sigma * std::f64::consts::PI.sqrt());
    if q >= 1.0 {
        return 1.0;
    }
    1.0 - (1.0 - q).powf(1.0 / slots as f64)
}

/// A candidate episode: its configuration and its world seed.
struct Candidate {
    sim: SimConfig,
    seed: u64,
    ue_std: f64,
    speed: f64,
    intra: f64,
}

fn measure(sim: SimConfig, seed: u64) -> CmdResult<Candidate> {
    let sc = &sim.scenario;
    let traj = generate_trajectories(sc, seed)?;
    let ue_std = ue_distribution_std(&traj, sc.map_size_m, sim.observation.grid_length, sc.num_slots)?;
    let speed = average_ue_speed(&traj, sc.slot_length);
    let layout = build_layout(sc)?;
    let intra = match NeighborGraph::build(&layout.centers(), sim.consensus.neighbor_distance_m, sim.consensus.lazy) {
        Ok(g) => intra_freq_neighbor_ratio(&layout, &g),
        Err(_) => 0.0,
    };
    Ok(Candidate {
        sim,
        seed,
        ue_std,
        speed,
        intra,
    })
}

fn draw_candidate(opts: &SweepOptions, bucket: usize, attempt: usize) -> CmdResult<Candidate> {
    let mut rng = stream(opts.seed, &[tag::SWEEP, bucket as u64, attempt as u64]);
    let seed = derive_seed(opts.seed, &[tag::SWEEP, bucket as u64, attempt as u64, 1]);
    let mut sim = opts.config.sim.clone();
    let sc = &mut sim.scenario;
    let base = sc.episode_ou_params(seed);
    sc.ou_ranges = None;
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, r: [f64; 2]| if r[1] > r[0] { rng.random_range(r[0]..=r[1]) } else { r[0] };
    let [lo, hi] = opts.buckets[bucket];
    match opts.axis {
        Axis::UeDistributionStd | Axis::AvgSpeed => {
            let sigma = draw(&mut rng, opts.sigma_range);
            // Aim the reversion rate at a speed inside the bucket (speed
            // axis) or the hold band; with neither, keep the configured rate.
            let target = match opts.axis {
                Axis::AvgSpeed => Some(draw(&mut rng, [lo, hi])),
                _ => opts.hold.map(|band| draw(&mut rng, band)),
            };
            let iota = target.map_or(base.iota, |v| iota_for_speed(v, sigma, sc.num_slots, sc.slot_length));
            sc.ou_params = OuParams {
                mu_x: draw(&mut rng, opts.mean_range),
                mu_y: draw(&mut rng, opts.mean_range),
                sigma_x: sigma,
                sigma_y: sigma,
                iota,
                ..base
            };
        }
        Axis::IntraFreqRatio => {
            sc.ou_params = base;
            sc.randomize_frequencies = false;
            sc.frequency_plan = (0..sc.num_cells())
                .map(|_| FREQUENCY_BANDS[rng.random_range(0..FREQUENCY_BANDS.len())].0)
                .collect();
        }
    }
    measure(sim, seed)
}

fn accepts(opts: &SweepOptions, bucket: usize, c: &Candidate) -> bool {
    let inside = |v: f64, [lo, hi]: [f64; 2]| v >= lo && v <= hi;
    let b = opts.buckets[bucket];
    match opts.axis {
        Axis::UeDistributionStd => inside(c.ue_std, b) && opts.hold.is_none_or(|h| inside(c.speed, h)),
        Axis::AvgSpeed => inside(c.speed, b) && opts.hold.is_none_or(|h| inside(c.ue_std, h)),
        Axis::IntraFreqRatio => inside(c.intra, b),
    }
}

pub fn parse_buckets(text: &str) -> CmdResult<Vec<[f64; 2]>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (a, b) = part
            .split_once(':')
            .ok_or_else(|| Failure::usage(format!("bucket {part:?} is not LO:HI")))?;
        let lo: f64 = a.trim().parse().map_err(|_| Failure::usage(format!("bad bucket bound {a:?}")))?;
        let hi: f64 = b.trim().parse().map_err(|_| Failure::usage(format!("bad bucket bound {b:?}")))?;
        out.push([lo, hi]);
    }
    Ok(out)
}

fn validate(opts: &SweepOptions) -> CmdResult<()> {
    opts.config.validate().map_err(Failure::Usage)?;
    if opts.buckets.is_empty() {
        return Err(Failure::usage("at least one bucket is required"));
    }
    for &[lo, hi] in opts.buckets.iter().chain(opts.hold.iter()) {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Failure::usage(format!("invalid band [{lo}, {hi}]")));
        }
    }
    for r in [opts.sigma_range, opts.mean_range] {
        if !(r[0] > 0.0 && r[0] <= r[1]) {
            return Err(Failure::usage(format!("invalid draw range {r:?}")));
        }
    }
    if opts.per_bucket == 0 {
        return Err(Failure::usage("--per-bucket must be positive"));
    }
    if opts.baseline == Baseline::Learned && opts.checkpoint.is_none() {
        return Err(Failure::usage("the learned baseline needs --checkpoint"));
    }
    Ok(())
}

pub fn run(opts: &SweepOptions) -> CmdResult<SweepResult> {
    validate(opts)?;
    if let Some(out) = &opts.out {
        prepare_out_dir(out)?;
    }
    let agents: Vec<Agent> = match opts.baseline {
        Baseline::Learned => load_agents(&opts.config, opts.checkpoint.as_deref())?,
        _ => Vec::new(),
    };
    let controller = controller_for(opts.baseline, opts.mode);

    let mut accepted: Vec<(usize, usize, Candidate)> = Vec::new();
    let mut attempts = vec![0usize; opts.buckets.len()];
    for (b, tried) in attempts.iter_mut().enumerate() {
        let mut got = 0;
        while got < opts.per_bucket && *tried < opts.max_attempts {
            let a = *tried;
            *tried += 1;
            let c = draw_candidate(opts, b, a)?;
            if accepts(opts, b, &c) {
                accepted.push((b, a, c));
                got += 1;
            }
        }
        if got < opts.per_bucket {
            tracing::warn!(bucket = b, accepted = got, "bucket not filled");
        }
    }

    let reports: Vec<EpisodeReport> = accepted
        .par_iter()
        .enumerate()
        .map(|(i, (_, _, c))| run_episode(&c.sim, &agents, controller, c.seed, i).map(|o| o.report))
        .collect::<hexcell_learn::Result<_>>()?;

    let slots = opts.config.sim.scenario.num_slots as f64;
    let rows: Vec<SweepRow> = accepted
        .iter()
        .zip(&reports)
        .map(|((b, a, c), r)| SweepRow {
            bucket: *b,
            lo: opts.buckets[*b][0],
            hi: opts.buckets[*b][1],
            attempt: *a,
            axis_value: match opts.axis {
                Axis::UeDistributionStd => c.ue_std,
                Axis::AvgSpeed => c.speed,
                Axis::IntraFreqRatio => c.intra,
            },
            sigma: c.sim.scenario.ou_params.sigma_x,
            iota: c.sim.scenario.ou_params.iota,
            ue_distribution_std: c.ue_std,
            avg_speed: c.speed,
            intra_freq_ratio: c.intra,
            mean_load_std: r.episode_objective / slots,
            episode_objective: r.episode_objective,
            total_handover_count: r.total_handover_count,
            ping_pong_ratio: r.ping_pong_ratio,
            system_throughput: r.system_throughput,
            low_rate_user_ratio: r.low_rate_user_ratio,
        })
        .collect();

    let buckets = (0..opts.buckets.len())
        .map(|b| {
            let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.bucket == b).collect();
            let col = |f: fn(&SweepRow) -> f64| mine.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (axis_mean, _) = mean_std(&col(|r| r.axis_value));
            let (load_std_mean, load_std_std) = mean_std(&col(|r| r.mean_load_std));
            let (handover_count_mean, handover_count_std) = mean_std(&col(|r| r.total_handover_count as f64));
            let (throughput_mean, _) = mean_std(&col(|r| r.system_throughput));
            BucketSummary {
                bucket: b,
                lo: opts.buckets[b][0],
                hi: opts.buckets[b][1],
                accepted: mine.len(),
                attempts: attempts[b],
                complete: mine.len() == opts.per_bucket,
                axis_mean,
                load_std_mean,
                load_std_std,
                handover_count_mean,
                handover_count_std,
                throughput_mean,
            }
        })
        .collect::<Vec<_>>();

    if let Some(out) = &opts.out {
        write_csv(&out.join(ROWS_FILE), &rows)?;
        std::fs::write(
            out.join(BUCKETS_FILE),
            serde_json::to_string_pretty(&buckets).map_err(anyhow::Error::from)? + "\n",
        )?;
        let mut manifest = RunManifest::new("sweep", &opts.config, opts.seed, 0, rows.len());
        manifest.outputs = vec![ROWS_FILE.to_string(), BUCKETS_FILE.to_string()];
        manifest.write(out)?;
    }
    Ok(SweepResult { rows, buckets })
}
