//! `hexcell verify-bound`: checks the consensus error bound on load traces.
//!
//! Synthetic traces keep every load in `[0, zeta]`, which bounds both the
//! loads and their slot-to-slot changes by `zeta`. Half of the cells draw
//! fresh uniform loads each slot and the other half follow a clamped random
//! walk, so the trace mixes abrupt and smooth variation.

use std::path::PathBuf;

use hexcell_core::consensus::{verify_bound, BoundReport, NeighborGraph};
use hexcell_core::env::Environment;
use hexcell_core::handover::HandoverParams;
use hexcell_core::rng::{stream, tag};
use hexcell_core::scenario::build_layout;
use hexcell_learn::rollout::{run_episode, Controller};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CmdResult, Failure};
use crate::manifest::RunManifest;
use crate::train::prepare_out_dir;

pub const REPORT_FILE: &str = "bound.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadSource {
    Synthetic,
    /// Loads from one simulated episode under mid-range parameters.
    Simulated,
}

#[derive(Debug, Clone)]
pub struct BoundOptions {
    pub config: RunConfig,
    pub steps: usize,
    pub seed: u64,
    /// Additional random connected graphs to check.
    pub random_graphs: usize,
    pub source: LoadSource,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCase {
    pub graph: String,
    pub cells: usize,
    pub report: BoundReport,
}

pub fn synthetic_loads<R: Rng + ?Sized>(cells: usize, steps: usize, zeta: f64, rng: &mut R) -> Vec<Vec<f64>> {
    let mut current: Vec<f64> = (0..cells).map(|_| rng.random_range(0.0..=zeta)).collect();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        out.push(current.clone());
        for (m, l) in current.iter_mut().enumerate() {
            *l = if m % 2 == 0 {
                rng.random_range(0.0..=zeta)
            } else {
                (*l + rng.random_range(-0.5 * zeta..=0.5 * zeta)).clamp(0.0, zeta)
            };
        }
    }
    out
}

/// A connected random geometric graph on 3 to 25 nodes whose spectral
/// radius is below 1. Bipartite or disconnected draws are discarded.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R) -> NeighborGraph {
    loop {
        let m = rng.random_range(3..=25);
        let radius = rng.random_range(0.25..0.7);
        let pts: Vec<[f64; 2]> = (0..m).map(|_| [rng.random(), rng.random()]).collect();
        if let Ok(g) = NeighborGraph::build(&pts, radius, false) {
            if g.lambda < 1.0 - 1e-9 {
                return g;
            }
        }
    }
}

fn simulated_loads(cfg: &RunConfig, seed: u64) -> CmdResult<(NeighborGraph, Vec<Vec<f64>>)> {
    let outcome = run_episode(&cfg.sim, &[], Controller::Fixed(HandoverParams::mid_range()), seed, 0)?;
    let (env, _) = Environment::reset(&cfg.sim, seed, 0)?;
    let m = env.num_cells();
    let mut loads = vec![vec![0.0; m]; cfg.sim.scenario.num_slots];
    for row in &outcome.log.loads {
        loads[row.slot - 1][row.cell] = row.load;
    }
    let graph = env
        .graph()
        .cloned()
        .ok_or_else(|| Failure::usage("a single-cell layout has no consensus graph"))?;
    Ok((graph, loads))
}

pub fn run(opts: &BoundOptions) -> CmdResult<Vec<BoundCase>> {
    let cfg = &opts.config;
    cfg.validate().map_err(Failure::Usage)?;
    if opts.steps == 0 {
        return Err(Failure::usage("--steps must be positive"));
    }
    let mut cases = Vec::new();
    let mut check = |name: String, graph: &NeighborGraph, loads: Vec<Vec<f64>>, zeta: Option<f64>| -> CmdResult<()> {
        let report = verify_bound(&loads, graph, zeta).map_err(|e| Failure::Usage(e.into()))?;
        tracing::info!(graph = %name, lambda = report.lambda, max_error = report.max_error, bound = report.uniform_bound, holds = report.holds, "bound checked");
        cases.push(BoundCase {
            graph: name,
            cells: graph.len(),
            report,
        });
        Ok(())
    };

    match opts.source {
        LoadSource::Synthetic => {
            let layout = build_layout(&cfg.sim.scenario)?;
            let graph = NeighborGraph::build(&layout.centers(), cfg.sim.consensus.neighbor_distance_m, cfg.sim.consensus.lazy)?;
            let mut rng = stream(opts.seed, &[tag::BOUND, 0]);
            let loads = synthetic_loads(graph.len(), opts.steps, 1.0, &mut rng);
            check("configured".into(), &graph, loads, Some(1.0))?;
        }
        LoadSource::Simulated => {
            let (graph, loads) = simulated_loads(cfg, opts.seed)?;
            check("configured/simulated".into(), &graph, loads, None)?;
        }
    }
    for i in 0..opts.random_graphs {
        let mut rng = stream(opts.seed, &[tag::BOUND, 1, i as u64]);
        let graph = random_graph(&mut rng);
        let loads = synthetic_loads(graph.len(), opts.steps, 1.0, &mut rng);
        check(format!("random/{i}"), &graph, loads, Some(1.0))?;
    }

    if let Some(out) = &opts.out {
        prepare_out_dir(out)?;
        std::fs::write(
            out.join(REPORT_FILE),
            serde_json::to_string_pretty(&cases).map_err(anyhow::Error::from)? + "\n",
        )?;
        let mut manifest = RunManifest::new("verify-bound", cfg, opts.seed, 0, 0);
        manifest.outputs = vec![REPORT_FILE.to_string()];
        manifest.write(out)?;
    }
    let failed: Vec<&BoundCase> = cases.iter().filter(|c| !c.report.holds).collect();
    if let Some(first) = failed.first() {
        return Err(Failure::Violation(format!(
            "{} of {} graphs violate the bound; first: {} (max error {}, bound {}, tail {}, asymptotic {})",
            failed.len(),
            cases.len(),
            first.graph,
            first.report.max_error,
            first.report.uniform_bound,
            first.report.tail_max_error,
            first.report.asymptotic_bound
        )));
    }
    Ok(cases)
}
