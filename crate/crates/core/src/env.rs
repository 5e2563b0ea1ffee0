//! The Dec-POMDP environment. One [`Environment::step`] advances every cell
//! and UE by one slot in a fixed phase order:
//!
//! 1. decode each agent's action into its handover parameters;
//! 2. move UEs to their slot-`t` positions;
//! 3. compute the RSRP matrix (with this slot's fading draws);
//! 4. step every UE's measurement machine, recording new reports;
//! 5. execute the reports made in slot `t - 1`;
//! 6. compute loads, advance consensus and derive rewards;
//! 7. build the observations for the start of slot `t + 1`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::consensus::{consensus_step, exact_average, ConsensusState, NeighborGraph};
use crate::error::{Error, Result};
use crate::handover::{initial_association, HandoverEvent, HandoverParams, MeasurementState, Neighborhood, THRESHOLD_MAX_DBM};
use crate::logs::{EventRow, LoadRow, UeSlotRow};
use crate::radio::{rsrp_matrix, serving_links};
use crate::scenario::{episode_layout, generate_trajectories, grid_coord, CellLayout, UeTrajectory};

/// Number of categorical choices per action head.
pub const ACTION_CHOICES: usize = 97;
pub const ACTION_HEADS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservationConfig {
    /// Side length nu of one observation grid square, meters.
    pub grid_length: f64,
    /// Half-width kappa; the window is `(2 kappa + 1)` squares per side.
    pub kappa: usize,
    /// Rolling window length eta in slots.
    pub window: usize,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            grid_length: 200.0,
            kappa: 7,
            window: 5,
        }
    }
}

impl ObservationConfig {
    pub fn side(&self) -> usize {
        2 * self.kappa + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_length > 0.0) || self.window == 0 {
            return Err(Error::config("observation grid_length and window must be positive"));
        }
        Ok(())
    }
}

/// Load assigned to a cell that serves nobody.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmptyCellLoad {
    Zero,
    Value { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub empty_cell_load: EmptyCellLoad,
    /// Agents act every `action_period` slots; parameters persist in between.
    pub action_period: usize,
    /// Diagnostic: reward against the exact mean load instead of the estimate.
    pub exact_average_reward: bool,
    /// Parameters in force before the first action.
    pub initial_params: HandoverParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            empty_cell_load: EmptyCellLoad::Zero,
            action_period: 1,
            exact_average_reward: false,
            initial_params: HandoverParams::mid_range(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.action_period == 0 {
            return Err(Error::config("action_period must be at least 1"));
        }
        self.initial_params.validate().map_err(|v| {
            Error::config(format!(
                "initial_params: {}",
                v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
            ))
        })
    }
}

/// Five categorical indices, ordered `(U_CA, Z_CE, Z_PE, W_CE, W_PE)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionVector(pub [usize; ACTION_HEADS]);

impl ActionVector {
    pub fn decode(&self) -> Result<HandoverParams, String> {
        if let Some((head, &idx)) = self.0.iter().enumerate().find(|(_, &i)| i >= ACTION_CHOICES) {
            return Err(format!("action head {head} index {idx} outside 0..{ACTION_CHOICES}"));
        }
        let threshold = |i: usize| THRESHOLD_MAX_DBM - i as i32;
        Ok(HandoverParams {
            u_ca: self.0[0] as i32,
            z_ce: threshold(self.0[1]),
            z_pe: threshold(self.0[2]),
            w_ce: threshold(self.0[3]),
            w_pe: threshold(self.0[4]),
        })
    }

    pub fn encode(p: &HandoverParams) -> Self {
        let idx = |v: i32| (THRESHOLD_MAX_DBM - v) as usize;
        Self([p.u_ca as usize, idx(p.z_ce), idx(p.z_pe), idx(p.w_ce), idx(p.w_pe)])
    }
}

/// UE-count and connected-count grids for one slot, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPair {
    pub ued: Vec<u32>,
    pub csm: Vec<u32>,
}

impl GridPair {
    pub fn zeros(side: usize) -> Self {
        Self {
            ued: vec![0; side * side],
            csm: vec![0; side * side],
        }
    }
}

/// Rolling window of `eta` grid pairs, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub side: usize,
    pub frames: Vec<GridPair>,
}

/// Population standard deviation of the cell loads.
pub fn load_std(loads: &[f64]) -> f64 {
    if loads.is_empty() {
        return 0.0;
    }
    let mean = exact_average(loads);
    (loads.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / loads.len() as f64).sqrt()
}

pub fn episode_objective(load_stds: &[f64]) -> f64 {
    load_stds.iter().sum()
}

/// Mean completion time of the served requests, scaled by the slot length.
/// Requests are in bytes and rates in bits/s.
pub fn cell_load(requests_bytes: &[f64], rates_bps: &[f64], slot_length: f64, empty: EmptyCellLoad) -> f64 {
    if requests_bytes.is_empty() {
        return match empty {
            EmptyCellLoad::Zero => 0.0,
            EmptyCellLoad::Value { value } => value,
        };
    }
    let total: f64 = requests_bytes.iter().zip(rates_bps).map(|(&d, &r)| 8.0 * d / r).sum();
    total / requests_bytes.len() as f64 * slot_length
}

/// Everything recorded over one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub loads: Vec<LoadRow>,
    pub ue_slots: Vec<UeSlotRow>,
    pub events: Vec<EventRow>,
    pub load_stds: Vec<f64>,
}

impl EpisodeLog {
    pub fn objective(&self) -> f64 {
        episode_objective(&self.load_stds)
    }

    pub fn handover_events(&self) -> Vec<HandoverEvent> {
        self.events.iter().map(EventRow::event).collect()
    }

    /// Loads as a `[slot][cell]` trace.
    pub fn load_trace(&self, num_cells: usize) -> Vec<Vec<f64>> {
        self.loads.chunks(num_cells).map(|c| c.iter().map(|r| r.load).collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observations: Vec<Observation>,
    pub rewards: Vec<f64>,
    pub done: bool,
    pub slot: usize,
    pub loads: Vec<f64>,
    pub estimates: Vec<f64>,
    pub load_std: f64,
    pub events: Vec<HandoverEvent>,
}

pub struct Environment {
    cfg: SimConfig,
    layout: CellLayout,
    neighborhood: Neighborhood,
    graph: Option<NeighborGraph>,
    trajectories: Vec<UeTrajectory>,
    seed: u64,
    slot: usize,
    serving: Vec<usize>,
    states: Vec<MeasurementState>,
    params: Vec<HandoverParams>,
    consensus: Option<ConsensusState>,
    windows: Vec<VecDeque<GridPair>>,
    rsrp: Vec<f64>,
    aborted: bool,
    log: EpisodeLog,
}

impl Environment {
    /// Builds the world for the episode keyed by `seed` and returns the
    /// initial observation of every agent.
    pub fn reset(cfg: &SimConfig, seed: u64, episode: usize) -> Result<(Self, Vec<Observation>)> {
        cfg.validate()?;
        let layout = episode_layout(&cfg.scenario, seed)?;
        let neighborhood = Neighborhood::from_layout(&layout, cfg.observation.grid_length, cfg.observation.kappa);
        let graph = if layout.len() >= 2 {
            Some(NeighborGraph::build(
                &layout.centers(),
                cfg.consensus.neighbor_distance_m,
                cfg.consensus.lazy,
            )?)
        } else {
            None
        };
        let trajectories = generate_trajectories(&cfg.scenario, seed)?;
        let positions: Vec<[f64; 2]> = trajectories.iter().map(|u| u.positions[0]).collect();
        let rsrp = rsrp_matrix(&layout, &positions, &cfg.radio, seed, 1);
        let m = layout.len();
        let serving = initial_association(&rsrp, m, trajectories.len());
        let states = serving.iter().map(|&s| MeasurementState::new(s, m)).collect();
        let side = cfg.observation.side();
        let windows = (0..m)
            .map(|_| (0..cfg.observation.window).map(|_| GridPair::zeros(side)).collect())
            .collect();
        let mut env = Self {
            cfg: cfg.clone(),
            neighborhood,
            graph,
            seed,
            slot: 1,
            serving,
            states,
            params: vec![cfg.env.initial_params; m],
            consensus: None,
            windows,
            rsrp,
            aborted: false,
            log: EpisodeLog {
                episode,
                ..EpisodeLog::default()
            },
            layout,
            trajectories,
        };
        let obs = env.observe(&positions);
        Ok((env, obs))
    }

    pub fn layout(&self) -> &CellLayout {
        &self.layout
    }

    pub fn graph(&self) -> Option<&NeighborGraph> {
        self.graph.as_ref()
    }

    pub fn neighborhood(&self) -> &Neighborhood {
        &self.neighborhood
    }

    pub fn trajectories(&self) -> &[UeTrajectory] {
        &self.trajectories
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn num_cells(&self) -> usize {
        self.layout.len()
    }

    /// Next slot to be processed (1-based).
    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn serving(&self) -> &[usize] {
        &self.serving
    }

    pub fn measurement_states(&self) -> &[MeasurementState] {
        &self.states
    }

    pub fn params(&self) -> &[HandoverParams] {
        &self.params
    }

    /// RSRP matrix of the last processed slot, `[cell * K + ue]`.
    pub fn rsrp(&self) -> &[f64] {
        &self.rsrp
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn into_log(self) -> EpisodeLog {
        self.log
    }

    pub fn step(&mut self, actions: &[ActionVector]) -> Result<StepOutcome> {
        let t = self.slot;
        let total = self.cfg.scenario.num_slots;
        if self.aborted || t > total {
            return Err(Error::EpisodeDone(t.min(total)));
        }
        let m = self.num_cells();
        if actions.len() != m {
            return Err(Error::Precondition(format!("expected {m} actions, got {}", actions.len())));
        }

        // (1) parameters
        if (t - 1).is_multiple_of(self.cfg.env.action_period) {
            let mut decoded = Vec::with_capacity(m);
            for (agent, a) in actions.iter().enumerate() {
                match a.decode() {
                    Ok(p) => decoded.push(p),
                    Err(reason) => {
                        self.aborted = true;
                        return Err(Error::Action { agent, reason });
                    }
                }
            }
            self.params = decoded;
        }

        // (2) mobility and (3) radio
        let positions: Vec<[f64; 2]> = self.trajectories.iter().map(|u| u.positions[t - 1]).collect();
        self.rsrp = rsrp_matrix(&self.layout, &positions, &self.cfg.radio, self.seed, t);
        let k = positions.len();

        // (4) measurement
        let mut row = vec![0.0; m];
        for (ue, st) in self.states.iter_mut().enumerate() {
            for (cell, g) in row.iter_mut().enumerate() {
                *g = self.rsrp[cell * k + ue];
            }
            let params = self.params[st.serving];
            st.step_measurements(t, &row, &params, &self.cfg.handover, &self.neighborhood)?;
        }

        // (5) execution of reports from the previous slot
        let mut events = Vec::new();
        for (ue, st) in self.states.iter_mut().enumerate() {
            if st.pending.is_some_and(|r| r.report_slot < t) {
                if let Some(ev) = st.execute_pending(ue, &mut self.serving, t) {
                    events.push(ev);
                }
            }
        }

        // (6) loads, consensus, rewards
        let links = serving_links(&self.layout, &self.rsrp, &self.serving, &self.cfg.radio)?;
        let mut requests = vec![Vec::new(); m];
        let mut rates = vec![Vec::new(); m];
        for (ue, link) in links.iter().enumerate() {
            let s = self.serving[ue];
            requests[s].push(self.trajectories[ue].request_bytes);
            rates[s].push(link.rate_bps);
        }
        let loads: Vec<f64> = (0..m)
            .map(|c| cell_load(&requests[c], &rates[c], self.cfg.scenario.slot_length, self.cfg.env.empty_cell_load))
            .collect();
        match (&mut self.consensus, &self.graph) {
            (None, _) => self.consensus = Some(ConsensusState::new(&loads)),
            (Some(state), Some(graph)) => consensus_step(state, &loads, graph),
            (Some(state), None) => *state = ConsensusState::new(&loads),
        }
        let estimates = self.consensus.as_ref().map(|c| c.estimates.clone()).unwrap_or_default();
        let mean = exact_average(&loads);
        let gamma = load_std(&loads);
        let rewards: Vec<f64> = (0..m)
            .map(|c| {
                let reference = if self.cfg.env.exact_average_reward { mean } else { estimates[c] };
                -(loads[c] - reference).abs()
            })
            .collect();

        let episode = self.log.episode;
        for c in 0..m {
            self.log.loads.push(LoadRow {
                episode,
                slot: t,
                cell: c,
                load: loads[c],
                estimate: estimates[c],
                reward: rewards[c],
                exact_reward: -(loads[c] - mean).abs(),
                load_std: gamma,
            });
        }
        for (ue, link) in links.iter().enumerate() {
            self.log.ue_slots.push(UeSlotRow {
                episode,
                slot: t,
                ue,
                serving: self.serving[ue],
                rate_bps: link.rate_bps,
                request_bytes: self.trajectories[ue].request_bytes,
            });
        }
        self.log.events.extend(events.iter().map(|e| EventRow::new(episode, e)));
        self.log.load_stds.push(gamma);

        // (7) observations for the start of the next slot
        let next: Vec<[f64; 2]> = self.trajectories.iter().map(|u| u.positions[t]).collect();
        for (c, w) in self.windows.iter_mut().enumerate() {
            w.pop_front();
            w.push_back(grids_for(&self.layout, &self.cfg.observation, c, &next, &self.serving));
        }
        let observations = self.snapshot();

        self.slot += 1;
        Ok(StepOutcome {
            observations,
            rewards,
            done: t == total,
            slot: t,
            loads,
            estimates,
            load_std: gamma,
            events,
        })
    }

    fn observe(&mut self, positions: &[[f64; 2]]) -> Vec<Observation> {
        for (c, w) in self.windows.iter_mut().enumerate() {
            w.pop_front();
            w.push_back(grids_for(&self.layout, &self.cfg.observation, c, positions, &self.serving));
        }
        self.snapshot()
    }

    fn snapshot(&self) -> Vec<Observation> {
        let side = self.cfg.observation.side();
        self.windows
            .iter()
            .map(|w| Observation {
                side,
                frames: w.iter().cloned().collect(),
            })
            .collect()
    }
}

/// UED / CSM grids of `cell` for UEs at `positions` served per `serving`.
pub fn grids_for(layout: &CellLayout, obs: &ObservationConfig, cell: usize, positions: &[[f64; 2]], serving: &[usize]) -> GridPair {
    let side = obs.side();
    let squares = ((layout.map_size_m / obs.grid_length).ceil() as usize).max(1);
    let center = layout.cells[cell].center;
    let cx = grid_coord(center[0], obs.grid_length, squares) as i64;
    let cy = grid_coord(center[1], obs.grid_length, squares) as i64;
    let k = obs.kappa as i64;
    let mut pair = GridPair::zeros(side);
    for (ue, p) in positions.iter().enumerate() {
        if !(0.0..=layout.map_size_m).contains(&p[0]) || !(0.0..=layout.map_size_m).contains(&p[1]) {
            continue;
        }
        let dx = grid_coord(p[0], obs.grid_length, squares) as i64 - cx;
        let dy = grid_coord(p[1], obs.grid_length, squares) as i64 - cy;
        if dx.abs() > k || dy.abs() > k {
            continue;
        }
        let idx = ((dy + k) as usize) * side + (dx + k) as usize;
        pair.ued[idx] += 1;
        if serving[ue] == cell {
            pair.csm[idx] += 1;
        }
    }
    pair
}
