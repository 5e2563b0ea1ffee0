use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hexcell_cli::bound::{self, BoundOptions, LoadSource};
use hexcell_cli::eval::{self, Baseline, EvalOptions};
use hexcell_cli::export::{self, Format, What};
use hexcell_cli::sweep::{self, Axis, SweepOptions};
use hexcell_cli::train::{self, TrainOptions};
use hexcell_cli::{CmdResult, Failure, RunConfig};
use hexcell_core::handover::HandoverParams;
use hexcell_learn::agent::ActMode;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "hexcell", version, about = "Multi-agent handover parameter optimisation")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one PPO agent per cell.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint written under the same configuration.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint or a baseline.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "greedy")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "learned")]
        baseline: BaselineArg,
        /// Fixed parameters as U_CA,Z_CE,W_CE,Z_PE,W_PE; mid-range if omitted.
        #[arg(long)]
        params: Option<String>,
    },
    /// Bucketed scenario sweep.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated LO:HI bands.
        #[arg(long)]
        buckets: String,
        #[arg(long, default_value_t = 20)]
        per_bucket: usize,
        #[arg(long, default_value_t = 2000)]
        max_attempts: usize,
        /// LO:HI band on the other mobility quantity.
        #[arg(long)]
        hold: Option<String>,
        /// LO:HI range (m) for the drawn UE distribution spread.
        #[arg(long)]
        sigma_range: Option<String>,
        /// LO:HI range (m) for the drawn UE distribution centre.
        #[arg(long)]
        mean_range: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "fixed")]
        baseline: BaselineArg,
        #[arg(long)]
        params: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "greedy")]
        mode: ModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the consensus error bound.
    VerifyBound {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of additional random connected graphs.
        #[arg(long, default_value_t = 0)]
        graphs: usize,
        #[arg(long, value_enum, default_value = "synthetic")]
        source: SourceArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-encode a run's logs.
    Export {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum)]
        what: WhatArg,
        /// csv or json.
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Greedy,
    Sample,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Learned,
    Fixed,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    UeDistributionStd,
    AvgSpeed,
    IntraFreqRatio,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Synthetic,
    Simulated,
}

#[derive(Clone, Copy, ValueEnum)]
enum WhatArg {
    Events,
    Loads,
    UeSlots,
    Reports,
    Training,
}

fn load_config(path: Option<&Path>) -> CmdResult<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).map_err(Failure::Usage),
        None => Ok(RunConfig::default()),
    }
}

fn parse_params(text: Option<&str>) -> CmdResult<HandoverParams> {
    let Some(text) = text else {
        return Ok(HandoverParams::mid_range());
    };
    let vals: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::usage(format!("--params {text:?} is not five numbers")))?;
    let arr: [f64; 5] = vals.try_into().map_err(|_| Failure::usage("--params needs exactly five values"))?;
    HandoverParams::from_reals(arr).map_err(|v| {
        Failure::usage(format!(
            "--params out of range: {}",
            v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
        ))
    })
}

fn baseline(arg: BaselineArg, params: Option<&str>) -> CmdResult<Baseline> {
    Ok(match arg {
        BaselineArg::Learned => Baseline::Learned,
        BaselineArg::Fixed => Baseline::Fixed(parse_params(params)?),
        BaselineArg::Random => Baseline::Random,
    })
}

fn mode(arg: ModeArg) -> ActMode {
    match arg {
        ModeArg::Greedy => ActMode::Greedy,
        ModeArg::Sample => ActMode::Sample,
    }
}

fn parse_band(text: &str) -> CmdResult<[f64; 2]> {
    let bands = sweep::parse_buckets(text)?;
    match bands.as_slice() {
        [b] => Ok(*b),
        _ => Err(Failure::usage(format!("{text:?} is not a single LO:HI band"))),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> CmdResult<()> {
    println!("{}", serde_json::to_string_pretty(value).map_err(anyhow::Error::from)?);
    Ok(())
}

fn dispatch(command: Command) -> CmdResult<()> {
    match command {
        Command::Train {
            config,
            seed,
            episodes,
            out,
            resume,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(e) = episodes {
                cfg.train.episodes = e;
            }
            let summary = train::run(&TrainOptions { config: cfg, out, resume })?;
            println!(
                "trained {} episodes from episode {}; checkpoint {}",
                summary.rows.len() - summary.first_episode.min(summary.rows.len()),
                summary.first_episode,
                summary.final_checkpoint.display()
            );
        }
        Command::Eval {
            config,
            checkpoint,
            seed,
            episodes,
            out,
            mode: m,
            baseline: b,
            params,
        } => {
            let opts = EvalOptions {
                config: load_config(config.as_deref())?,
                checkpoint,
                mode: mode(m),
                baseline: baseline(b, params.as_deref())?,
                episodes,
                seed,
                out,
            };
            print_json(&eval::run(&opts)?.summary)?;
        }
        Command::Sweep {
            config,
            axis,
            buckets,
            per_bucket,
            max_attempts,
            hold,
            sigma_range,
            mean_range,
            seed,
            baseline: b,
            params,
            checkpoint,
            mode: m,
            out,
        } => {
            let axis = match axis {
                AxisArg::UeDistributionStd => Axis::UeDistributionStd,
                AxisArg::AvgSpeed => Axis::AvgSpeed,
                AxisArg::IntraFreqRatio => Axis::IntraFreqRatio,
            };
            let mut opts = SweepOptions::new(load_config(config.as_deref())?, axis, sweep::parse_buckets(&buckets)?);
            opts.per_bucket = per_bucket;
            opts.max_attempts = max_attempts;
            opts.hold = hold.as_deref().map(parse_band).transpose()?;
            if let Some(r) = sigma_range.as_deref() {
                opts.sigma_range = parse_band(r)?;
            }
            if let Some(r) = mean_range.as_deref() {
                opts.mean_range = parse_band(r)?;
            }
            opts.seed = seed;
            opts.baseline = baseline(b, params.as_deref())?;
            opts.checkpoint = checkpoint;
            opts.mode = mode(m);
            opts.out = out;
            print_json(&sweep::run(&opts)?.buckets)?;
        }
        Command::VerifyBound {
            config,
            steps,
            seed,
            graphs,
            source,
            out,
        } => {
            let opts = BoundOptions {
                config: load_config(config.as_deref())?,
                steps,
                seed,
                random_graphs: graphs,
                source: match source {
                    SourceArg::Synthetic => LoadSource::Synthetic,
                    SourceArg::Simulated => LoadSource::Simulated,
                },
                out,
            };
            let cases = bound::run(&opts)?;
            println!("bound holds on {} graph(s)", cases.len());
        }
        Command::Export { run, what, format, out } => {
            let format: Format = format.parse()?;
            let what = match what {
                WhatArg::Events => What::Events,
                WhatArg::Loads => What::Loads,
                WhatArg::UeSlots => What::UeSlots,
                WhatArg::Reports => What::Reports,
                WhatArg::Training => What::Training,
            };
            let path = export::run(&run, what, format, out.as_deref())?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let filter = EnvFilter::try_from_env("HEXCELL_LOG_LEVEL").unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    let result = match cli.parallel {
        Some(0) => Err(Failure::usage("--parallel must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Failure::Runtime(e.into())),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hexcell: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
