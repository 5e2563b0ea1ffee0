//! Episode construction: cell layout, frequency plan and UE mobility.
//!
//! UE motion follows a discretised Ornstein-Uhlenbeck process stepped once
//! per slot (the mean-reversion rate is expressed per slot, not per second).
//! Positions are clamped to the map square.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Carrier frequencies (GHz) and the bandwidth (Hz) that comes with each.
pub const FREQUENCY_BANDS: [(f64, f64); 3] = [(0.7, 10e6), (2.6, 40e6), (4.9, 50e6)];

pub fn bandwidth_for(freq_ghz: f64) -> Result<f64> {
    FREQUENCY_BANDS
        .iter()
        .find(|(f, _)| (f - freq_ghz).abs() < 1e-9)
        .map(|&(_, b)| b)
        .ok_or_else(|| {
            Error::config(format!(
                "frequency {freq_ghz} GHz is not one of the supported bands (0.7, 2.6, 4.9)"
            ))
        })
}

/// OU mobility parameters. Means and standard deviations are in meters; the
/// reversion rate `iota` is per slot and `volatility` is the per-slot diffusion
/// coefficient in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OuParams {
    pub iota: f64,
    pub volatility: f64,
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl Default for OuParams {
    fn default() -> Self {
        Self {
            iota: 0.01,
            volatility: 0.1,
            mu_x: 1500.0,
            mu_y: 1500.0,
            sigma_x: 800.0,
            sigma_y: 800.0,
        }
    }
}

/// Optional per-episode randomisation of the UE distribution. When present,
/// every episode draws `mu_x, mu_y` uniformly from `mean_range` and
/// `sigma_x, sigma_y` uniformly from `std_range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuRanges {
    pub mean_range: [f64; 2],
    pub std_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub map_size_m: f64,
    pub grid_side: usize,
    pub num_ues: usize,
    /// Slot length d_t in seconds.
    pub slot_length: f64,
    /// Number of slots T per episode.
    pub num_slots: usize,
    /// Carrier frequency (GHz) per cell, row-major from the map origin.
    pub frequency_plan: Vec<f64>,
    /// Draw each cell's band uniformly per episode instead of using the plan.
    pub randomize_frequencies: bool,
    pub ou_params: OuParams,
    pub ou_ranges: Option<OuRanges>,
    /// Request size D in bytes, identical for every UE and slot.
    pub request_bytes: f64,
    /// Per-UE request override; must have `num_ues` entries when set.
    pub request_bytes_per_ue: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            map_size_m: 3000.0,
            grid_side: 3,
            num_ues: 60,
            slot_length: 0.2,
            num_slots: 100,
            frequency_plan: vec![2.6, 4.9, 2.6, 4.9, 0.7, 4.9, 2.6, 4.9, 2.6],
            randomize_frequencies: false,
            ou_params: OuParams::default(),
            ou_ranges: Some(OuRanges {
                mean_range: [600.0, 2400.0],
                std_range: [300.0, 1200.0],
            }),
            request_bytes: 1e6,
            request_bytes_per_ue: None,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Full-size layout: 5x5 cells over 5 km with 500 UEs.
    pub fn full_scale() -> Self {
        #[rustfmt::skip]
        let plan = vec![
            2.6, 4.9, 2.6, 4.9, 2.6,
            4.9, 0.7, 2.6, 0.7, 4.9,
            2.6, 2.6, 0.7, 2.6, 2.6,
            4.9, 0.7, 2.6, 0.7, 4.9,
            2.6, 4.9, 2.6, 4.9, 2.6,
        ];
        Self {
            map_size_m: 5000.0,
            grid_side: 5,
            num_ues: 500,
            frequency_plan: plan,
            ou_params: OuParams {
                mu_x: 2500.0,
                mu_y: 2500.0,
                sigma_x: 1000.0,
                sigma_y: 1000.0,
                ..OuParams::default()
            },
            ou_ranges: Some(OuRanges {
                mean_range: [500.0, 4500.0],
                std_range: [500.0, 5000.0],
            }),
            ..Self::default()
        }
    }

    pub fn num_cells(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("map_size_m", self.map_size_m),
            ("slot_length", self.slot_length),
            ("request_bytes", self.request_bytes),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.grid_side == 0 || self.num_ues == 0 || self.num_slots == 0 {
            return Err(Error::config("grid_side, num_ues and num_slots must be positive"));
        }
        if self.frequency_plan.len() != self.num_cells() {
            return Err(Error::config(format!(
                "frequency_plan has {} entries, expected grid_side^2 = {}",
                self.frequency_plan.len(),
                self.num_cells()
            )));
        }
        for &f in &self.frequency_plan {
            bandwidth_for(f)?;
        }
        let ou = &self.ou_params;
        if !(ou.sigma_x > 0.0 && ou.sigma_y > 0.0) {
            return Err(Error::config("ou_params.sigma_x and sigma_y must be positive"));
        }
        if !(ou.iota >= 0.0 && ou.volatility >= 0.0) {
            return Err(Error::config("ou_params.iota and volatility must be non-negative"));
        }
        if let Some(r) = &self.ou_ranges {
            if !(r.mean_range[0] <= r.mean_range[1] && r.std_range[0] > 0.0 && r.std_range[0] <= r.std_range[1]) {
                return Err(Error::config("ou_ranges bounds must be ordered with positive std"));
            }
        }
        if let Some(d) = &self.request_bytes_per_ue {
            if d.len() != self.num_ues || d.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::config("request_bytes_per_ue must hold num_ues positive sizes"));
            }
        }
        Ok(())
    }

    /// Resolves the OU parameters used for the episode identified by `seed`.
    pub fn episode_ou_params(&self, seed: u64) -> OuParams {
        let mut ou = self.ou_params.clone();
        if let Some(r) = &self.ou_ranges {
            let mut rng = rng::stream(seed, &[tag::SCENARIO, 1]);
            let mut draw = |lo: f64, hi: f64| if hi > lo { rng.random_range(lo..=hi) } else { lo };
            ou.mu_x = draw(r.mean_range[0], r.mean_range[1]);
            ou.mu_y = draw(r.mean_range[0], r.mean_range[1]);
            ou.sigma_x = draw(r.std_range[0], r.std_range[1]);
            ou.sigma_y = draw(r.std_range[0], r.std_range[1]);
        }
        ou
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    /// Center q_m in meters.
    pub center: [f64; 2],
    pub freq_ghz: f64,
    pub bandwidth_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLayout {
    pub cells: Vec<Cell>,
    pub map_size_m: f64,
    pub grid_side: usize,
}

impl CellLayout {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        self.cells.iter().map(|c| c.center).collect()
    }

    /// Whether cells `a` and `b` share a carrier.
    pub fn same_frequency(&self, a: usize, b: usize) -> bool {
        (self.cells[a].freq_ghz - self.cells[b].freq_ghz).abs() < 1e-9
    }
}

/// Places one cell at the center of every square of a `grid_side` x
/// `grid_side` partition of the map and assigns the configured bands.
pub fn build_layout(config: &ScenarioConfig) -> Result<CellLayout> {
    config.validate()?;
    build_layout_with_plan(config, &config.frequency_plan)
}

pub fn build_layout_with_plan(config: &ScenarioConfig, plan: &[f64]) -> Result<CellLayout> {
    let n = config.grid_side;
    if plan.len() != n * n {
        return Err(Error::config("frequency plan length does not match grid"));
    }
    let spacing = config.map_size_m / n as f64;
    let mut cells = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let id = row * n + col;
            let freq = plan[id];
            cells.push(Cell {
                id,
                center: [(col as f64 + 0.5) * spacing, (row as f64 + 0.5) * spacing],
                freq_ghz: freq,
                bandwidth_hz: bandwidth_for(freq)?,
            });
        }
    }
    Ok(CellLayout {
        cells,
        map_size_m: config.map_size_m,
        grid_side: n,
    })
}

/// Layout for one episode: the configured plan, or a uniformly redrawn plan
/// when `randomize_frequencies` is set.
pub fn episode_layout(config: &ScenarioConfig, seed: u64) -> Result<CellLayout> {
    if !config.randomize_frequencies {
        return build_layout(config);
    }
    config.validate()?;
    let mut rng = rng::stream(seed, &[tag::SCENARIO, 2]);
    let plan: Vec<f64> = (0..config.num_cells())
        .map(|_| FREQUENCY_BANDS[rng.random_range(0..FREQUENCY_BANDS.len())].0)
        .collect();
    build_layout_with_plan(config, &plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeTrajectory {
    /// Positions l_{k,t} for t = 1..=T+1 (index 0 is slot 1).
    pub positions: Vec<[f64; 2]>,
    /// OU attractor mu_k.
    pub mean: [f64; 2],
    /// Request size D_k in bytes.
    pub request_bytes: f64,
}

/// One OU step with unit slot increment, clamped to `[0, map_size]`.
pub fn ou_step(pos: f64, mean: f64, iota: f64, volatility: f64, noise: f64, map_size: f64) -> f64 {
    (pos + iota * (mean - pos) + volatility * noise).clamp(0.0, map_size)
}

pub fn generate_trajectories(config: &ScenarioConfig, seed: u64) -> Result<Vec<UeTrajectory>> {
    config.validate()?;
    let ou = config.episode_ou_params(seed);
    generate_with_params(config, &ou, seed)
}

/// Generates trajectories for explicit OU parameters (ignores `ou_ranges`).
pub fn generate_with_params(config: &ScenarioConfig, ou: &OuParams, seed: u64) -> Result<Vec<UeTrajectory>> {
    if !(ou.sigma_x > 0.0 && ou.sigma_y > 0.0) {
        return Err(Error::config("OU distribution stds must be positive"));
    }
    let size = config.map_size_m;
    let mut rng = rng::stream(seed, &[tag::TRAJECTORY]);
    let mut normal = move || -> f64 { rng.sample(StandardNormal) };
    let steps = config.num_slots;
    let mut out = Vec::with_capacity(config.num_ues);
    for k in 0..config.num_ues {
        let start = [
            (ou.mu_x + ou.sigma_x * normal()).clamp(0.0, size),
            (ou.mu_y + ou.sigma_y * normal()).clamp(0.0, size),
        ];
        let mean = [
            (ou.mu_x + ou.sigma_x * normal()).clamp(0.0, size),
            (ou.mu_y + ou.sigma_y * normal()).clamp(0.0, size),
        ];
        let mut positions = Vec::with_capacity(steps + 1);
        positions.push(start);
        for _ in 0..steps {
            let p = *positions.last().unwrap();
            let (nx, ny) = (normal(), normal());
            positions.push([
                ou_step(p[0], mean[0], ou.iota, ou.volatility, nx, size),
                ou_step(p[1], mean[1], ou.iota, ou.volatility, ny, size),
            ]);
        }
        let request_bytes = config.request_bytes_per_ue.as_ref().map_or(config.request_bytes, |d| d[k]);
        out.push(UeTrajectory {
            positions,
            mean,
            request_bytes,
        });
    }
    Ok(out)
}

/// Index of the observation-grid square containing `coord`, with the far map
/// edge folded into the last square.
pub fn grid_coord(coord: f64, grid_length: f64, squares: usize) -> usize {
    ((coord / grid_length).floor().max(0.0) as usize).min(squares - 1)
}

/// Mean over slots `1..=slots` of the population std of per-grid UE counts.
pub fn ue_distribution_std(trajectories: &[UeTrajectory], map_size: f64, grid_length: f64, slots: usize) -> Result<f64> {
    let ratio = map_size / grid_length;
    if !(grid_length > 0.0) || (ratio - ratio.round()).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "grid length {grid_length} does not divide map size {map_size}"
        )));
    }
    if slots == 0 {
        return Ok(0.0);
    }
    let side = ratio.round() as usize;
    let psi = (side * side) as f64;
    let mut counts = vec![0u32; side * side];
    let mut total = 0.0;
    for t in 0..slots {
        counts.iter_mut().for_each(|c| *c = 0);
        for ue in trajectories {
            let p = ue.positions[t];
            let gx = grid_coord(p[0], grid_length, side);
            let gy = grid_coord(p[1], grid_length, side);
            counts[gy * side + gx] += 1;
        }
        let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / psi;
        let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / psi;
        total += var.sqrt();
    }
    Ok(total / slots as f64)
}

/// Mean over UEs and slots of the per-slot displacement divided by d_t (m/s).
pub fn average_ue_speed(trajectories: &[UeTrajectory], slot_length: f64) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ue in trajectories {
        for w in ue.positions.windows(2) {
            let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
            sum += (dx * dx + dy * dy).sqrt() / slot_length;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
