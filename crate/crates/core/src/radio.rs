//! Urban-macro link budget: path loss, RSRP with Rayleigh fading, SINR over
//! same-frequency interferers and an equal resource split among served UEs.
//!
//! Distances are meters, carrier frequencies GHz, powers dBm unless a name
//! says `_mw`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::scenario::CellLayout;

/// Distances below this are clamped so path loss stays positive near a site.
pub const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LosModel {
    AlwaysLos,
    AlwaysNlos,
    /// 3GPP TR 38.901 UMa LOS probability for a 1.5 m UE.
    Tr38901Uma,
    FixedProbability {
        p: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    Off,
    /// Rayleigh amplitude h applied as a power gain h^2 / E[h^2].
    Linear,
    /// Literal `h * (P - PL + g_tx + g_rx)` on the dB value.
    StrictDb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    pub tx_power_dbm: f64,
    pub g_tx_db: f64,
    pub g_rx_db: f64,
    pub noise_dbm: f64,
    pub rayleigh_scale: f64,
    pub los_model: LosModel,
    pub fading: FadingMode,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            tx_power_dbm: 45.0,
            g_tx_db: 10.0,
            g_rx_db: 1.0,
            noise_dbm: -110.0,
            rayleigh_scale: 2.0,
            los_model: LosModel::FixedProbability { p: 1.0 },
            fading: FadingMode::Linear,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rayleigh_scale > 0.0) {
            return Err(Error::config("rayleigh_scale must be positive"));
        }
        if let LosModel::FixedProbability { p } = self.los_model {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("LOS probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

fn check_geometry(d: f64, f: f64) -> Result<()> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    if !(f > 0.0) {
        return Err(Error::Domain(format!("frequency must be positive, got {f}")));
    }
    Ok(())
}

pub fn path_loss_los(d: f64, f_ghz: f64) -> Result<f64> {
    check_geometry(d, f_ghz)?;
    Ok(28.0 + 22.0 * d.log10() + 20.0 * f_ghz.log10())
}

pub fn path_loss_nlos(d: f64, f_ghz: f64) -> Result<f64> {
    check_geometry(d, f_ghz)?;
    Ok(32.4 + 30.0 * d.log10() + 20.0 * f_ghz.log10())
}

/// dB-domain mixture of the LOS and NLOS losses.
pub fn avg_path_loss(d: f64, f_ghz: f64, pr_los: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pr_los) {
        return Err(Error::Domain(format!("LOS probability {pr_los} outside [0, 1]")));
    }
    Ok(path_loss_los(d, f_ghz)? * pr_los + path_loss_nlos(d, f_ghz)? * (1.0 - pr_los))
}

pub fn los_probability(model: LosModel, d: f64) -> f64 {
    match model {
        LosModel::AlwaysLos => 1.0,
        LosModel::AlwaysNlos => 0.0,
        LosModel::FixedProbability { p } => p,
        LosModel::Tr38901Uma => {
            if d <= 18.0 {
                1.0
            } else {
                18.0 / d + (-d / 63.0).exp() * (1.0 - 18.0 / d)
            }
        }
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Draws a Rayleigh amplitude with the given scale.
pub fn rayleigh_draw<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = rng.random();
    scale * (-2.0 * (1.0 - u).ln()).sqrt()
}

/// RSRP in dBm for a link with average loss `pl_avg_db` and fading amplitude `h`.
pub fn rsrp(pl_avg_db: f64, cfg: &RadioConfig, h: f64) -> f64 {
    let budget = cfg.tx_power_dbm - pl_avg_db + cfg.g_tx_db + cfg.g_rx_db;
    match cfg.fading {
        FadingMode::Off => budget,
        FadingMode::Linear => {
            let mean_power = 2.0 * cfg.rayleigh_scale * cfg.rayleigh_scale;
            budget + 10.0 * (h * h / mean_power).log10()
        }
        FadingMode::StrictDb => h * budget,
    }
}

/// Linear SINR of the serving link; interferer powers only count where the
/// matching `same_freq` flag is set.
pub fn sinr(serving_dbm: f64, interferers_dbm: &[f64], same_freq: &[bool], noise_dbm: f64) -> f64 {
    let interference: f64 = interferers_dbm
        .iter()
        .zip(same_freq)
        .filter(|(_, &same)| same)
        .map(|(&p, _)| dbm_to_mw(p))
        .sum();
    dbm_to_mw(serving_dbm) / (interference + dbm_to_mw(noise_dbm))
}

/// Equal-split Shannon rate in bits/s.
pub fn rate(served: bool, bandwidth_hz: f64, sinr: f64, num_served: usize) -> Result<f64> {
    if !served {
        return Ok(0.0);
    }
    if num_served == 0 {
        return Err(Error::Internal("served UE in a cell with zero served UEs".into()));
    }
    Ok(bandwidth_hz / num_served as f64 * (1.0 + sinr).log2())
}

/// Average path loss for every (cell, UE) pair at the given positions,
/// row-major `[cell * K + ue]`.
pub fn path_loss_matrix(layout: &CellLayout, positions: &[[f64; 2]], cfg: &RadioConfig) -> Vec<f64> {
    let k = positions.len();
    let mut out = Vec::with_capacity(layout.len() * k);
    for cell in &layout.cells {
        for p in positions {
            let d = ((cell.center[0] - p[0]).powi(2) + (cell.center[1] - p[1]).powi(2))
                .sqrt()
                .max(MIN_DISTANCE_M);
            let pr = los_probability(cfg.los_model, d);
            // Geometry is clamped and validated upstream, so this cannot fail.
            out.push(avg_path_loss(d, cell.freq_ghz, pr).expect("valid link geometry"));
        }
    }
    out
}

/// RSRP matrix for one slot, `[cell * K + ue]`. Fading amplitudes are drawn
/// from a stream keyed by `(seed, slot)` in cell-major order, so the matrix
/// for a slot is reproducible regardless of call order.
pub fn rsrp_matrix(layout: &CellLayout, positions: &[[f64; 2]], cfg: &RadioConfig, seed: u64, slot: usize) -> Vec<f64> {
    let pl = path_loss_matrix(layout, positions, cfg);
    let mut rng = rng::stream(seed, &[tag::FADING, slot as u64]);
    pl.into_iter()
        .map(|loss| {
            let h = match cfg.fading {
                FadingMode::Off => 1.0,
                _ => rayleigh_draw(&mut rng, cfg.rayleigh_scale),
            };
            rsrp(loss, cfg, h)
        })
        .collect()
}

/// Serving-link quantities for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMeasurement {
    pub rsrp_dbm: f64,
    pub sinr: f64,
    pub rate_bps: f64,
}

/// Computes SINR and equal-split rate of every UE on its serving link.
pub fn serving_links(layout: &CellLayout, rsrp: &[f64], serving: &[usize], cfg: &RadioConfig) -> Result<Vec<LinkMeasurement>> {
    let m = layout.len();
    let k = serving.len();
    if rsrp.len() != m * k {
        return Err(Error::Internal("RSRP matrix does not match layout and UE count".into()));
    }
    let mut served = vec![0usize; m];
    for &s in serving {
        served[s] += 1;
    }
    let noise_mw = dbm_to_mw(cfg.noise_dbm);
    let mut out = Vec::with_capacity(k);
    for (ue, &s) in serving.iter().enumerate() {
        let interference: f64 = (0..m)
            .filter(|&j| j != s && layout.same_frequency(s, j))
            .map(|j| dbm_to_mw(rsrp[j * k + ue]))
            .sum();
        let g = rsrp[s * k + ue];
        let gamma = dbm_to_mw(g) / (interference + noise_mw);
        out.push(LinkMeasurement {
            rsrp_dbm: g,
            sinr: gamma,
            rate_bps: rate(true, layout.cells[s].bandwidth_hz, gamma, served[s])?,
        });
    }
    Ok(out)
}
