//! Evaluation metrics. Everything here is a pure function of the episode
//! logs, so recomputing from exported CSV gives the in-run values exactly.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::consensus::NeighborGraph;
use crate::env::EpisodeLog;
use crate::error::{Error, Result};
use crate::handover::HandoverEvent;
use crate::logs::{Table, UeSlotRow};
use crate::scenario::CellLayout;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Ping-pong window in slots.
    pub ping_pong_window: usize,
    /// Low-rate threshold in bytes/s.
    pub low_rate_threshold_bytes: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            ping_pong_window: 5,
            low_rate_threshold_bytes: 1e6,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ping_pong_window == 0 {
            return Err(Error::config("ping_pong_window must be at least 1"));
        }
        if !(self.low_rate_threshold_bytes > 0.0) {
            return Err(Error::config("low_rate_threshold_bytes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub episode: usize,
    pub ping_pong_ratio: f64,
    /// Seconds; `None` when no inter-frequency handover happened.
    pub mean_handover_latency: Option<f64>,
    /// Bytes per second.
    pub system_throughput: f64,
    pub low_rate_user_ratio: f64,
    pub total_handover_count: usize,
    pub episode_objective: f64,
    pub intra_freq_neighbor_ratio: f64,
}

impl Table for EpisodeReport {
    const HEADERS: &'static [&'static str] = &[
        "episode",
        "ping_pong_ratio",
        "mean_handover_latency",
        "system_throughput",
        "low_rate_user_ratio",
        "total_handover_count",
        "episode_objective",
        "intra_freq_neighbor_ratio",
    ];
}

/// Fraction of handovers that bring a UE back to a cell it left less than
/// `window` slots earlier.
pub fn ping_pong_ratio(events: &[HandoverEvent], window: usize) -> f64 {
    if events.is_empty() {
        return 0.0;
    }
    let mut by_ue: HashMap<usize, Vec<&HandoverEvent>> = HashMap::new();
    for e in events {
        by_ue.entry(e.ue).or_default().push(e);
    }
    let mut count = 0usize;
    for list in by_ue.values_mut() {
        list.sort_by_key(|e| e.execute_slot);
        // Most recent departure slot per cell.
        let mut departed: HashMap<usize, usize> = HashMap::new();
        for e in list.iter() {
            if let Some(&t_dep) = departed.get(&e.target) {
                if e.execute_slot < t_dep + window {
                    count += 1;
                }
            }
            departed.insert(e.source, e.execute_slot);
        }
    }
    count as f64 / events.len() as f64
}

/// Mean time from monitor start to execution over inter-frequency events.
pub fn handover_latency(events: &[HandoverEvent], slot_length: f64) -> Option<f64> {
    let lat: Vec<f64> = events
        .iter()
        .filter(|e| e.kind.is_inter_frequency())
        .filter_map(|e| e.monitor_start_slot.map(|m| (e.execute_slot - m) as f64 * slot_length))
        .collect();
    if lat.is_empty() {
        None
    } else {
        Some(lat.iter().sum::<f64>() / lat.len() as f64)
    }
}

/// Bytes delivered to one UE in one slot, capped at its request.
pub fn delivered_bytes(row: &UeSlotRow, slot_length: f64) -> f64 {
    row.request_bytes.min(row.rate_bps * slot_length / 8.0)
}

pub fn system_throughput(rows: &[UeSlotRow], num_slots: usize, slot_length: f64) -> f64 {
    if num_slots == 0 {
        return 0.0;
    }
    let total: f64 = rows.iter().map(|r| delivered_bytes(r, slot_length)).sum();
    total / (num_slots as f64 * slot_length)
}

pub fn low_rate_user_ratio(rows: &[UeSlotRow], threshold_bytes: f64) -> f64 {
    let mut per_slot: HashMap<usize, (usize, usize)> = HashMap::new();
    for r in rows {
        let e = per_slot.entry(r.slot).or_default();
        e.1 += 1;
        if r.rate_bps / 8.0 < threshold_bytes {
            e.0 += 1;
        }
    }
    if per_slot.is_empty() {
        return 0.0;
    }
    let mut slots: Vec<_> = per_slot.into_iter().collect();
    slots.sort_by_key(|(s, _)| *s);
    slots.iter().map(|(_, (low, all))| *low as f64 / *all as f64).sum::<f64>() / slots.len() as f64
}

/// Mean share of each cell's consensus neighbors that use its frequency.
pub fn intra_freq_neighbor_ratio(layout: &CellLayout, graph: &NeighborGraph) -> f64 {
    let m = graph.len();
    if m == 0 {
        return 0.0;
    }
    graph
        .neighbors
        .iter()
        .enumerate()
        .map(|(c, nbrs)| {
            if nbrs.is_empty() {
                0.0
            } else {
                nbrs.iter().filter(|&&j| layout.same_frequency(c, j)).count() as f64 / nbrs.len() as f64
            }
        })
        .sum::<f64>()
        / m as f64
}

pub fn episode_report(
    log: &EpisodeLog,
    layout: &CellLayout,
    graph: Option<&NeighborGraph>,
    num_slots: usize,
    slot_length: f64,
    cfg: &MetricsConfig,
) -> EpisodeReport {
    let events = log.handover_events();
    EpisodeReport {
        episode: log.episode,
        ping_pong_ratio: ping_pong_ratio(&events, cfg.ping_pong_window),
        mean_handover_latency: handover_latency(&events, slot_length),
        system_throughput: system_throughput(&log.ue_slots, num_slots, slot_length),
        low_rate_user_ratio: low_rate_user_ratio(&log.ue_slots, cfg.low_rate_threshold_bytes),
        total_handover_count: events.len(),
        episode_objective: log.objective(),
        intra_freq_neighbor_ratio: graph.map_or(0.0, |g| intra_freq_neighbor_ratio(layout, g)),
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Normal-approximation 95% confidence interval of the mean.
pub fn confidence_interval_95(values: &[f64]) -> (f64, f64) {
    let (mean, std) = mean_std(values);
    let half = 1.96 * std / (values.len().max(1) as f64).sqrt();
    (mean - half, mean + half)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, _) = mean_std(&rx);
    let (my, _) = mean_std(&ry);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::handover::HandoverKind;
    use crate::scenario::{build_layout_with_plan, ScenarioConfig};

    fn ev(ue: usize, source: usize, target: usize, t: usize) -> HandoverEvent {
        HandoverEvent {
            ue,
            source,
            target,
            kind: HandoverKind::Cah,
            report_slot: t - 1,
            execute_slot: t,
            monitor_start_slot: None,
        }
    }

    fn row(slot: usize, ue: usize, rate_bps: f64, d: f64) -> UeSlotRow {
        UeSlotRow {
            episode: 0,
            slot,
            ue,
            serving: 0,
            rate_bps,
            request_bytes: d,
        }
    }

    #[test]
    fn ping_pong_examples() {
        assert_eq!(ping_pong_ratio(&[], 5), 0.0);
        let back = [ev(0, 0, 1, 10), ev(0, 1, 0, 13)];
        assert_eq!(ping_pong_ratio(&back, 5), 0.5);
        let late = [ev(0, 0, 1, 10), ev(0, 1, 0, 16)];
        assert_eq!(ping_pong_ratio(&late, 5), 0.0);
        let edge = [ev(0, 0, 1, 10), ev(0, 1, 0, 15)];
        assert_eq!(ping_pong_ratio(&edge, 5), 0.0);
        let relabeled = [ev(7, 0, 1, 10), ev(7, 1, 0, 13)];
        assert_eq!(ping_pong_ratio(&relabeled, 5), 0.5);
    }

    #[test]
    fn latency_examples() {
        let mut e = ev(0, 0, 1, 12);
        e.kind = HandoverKind::Ceh;
        e.monitor_start_slot = Some(3);
        assert!((handover_latency(&[e], 0.2).unwrap() - 1.8).abs() < 1e-12);
        assert_eq!(handover_latency(&[ev(0, 0, 1, 5)], 0.2), None);
        assert_eq!(handover_latency(&[], 0.2), None);
    }

    #[test]
    fn throughput_examples() {
        let rows: Vec<_> = (1..=100).map(|t| row(t, 0, 1e9, 1e6)).collect();
        assert!((system_throughput(&rows, 100, 0.2) - 5e6).abs() < 1e-6);
        let zero: Vec<_> = (1..=100).map(|t| row(t, 0, 0.0, 1e6)).collect();
        assert_eq!(system_throughput(&zero, 100, 0.2), 0.0);
        let doubled: Vec<_> = rows.iter().flat_map(|r| [*r, UeSlotRow { ue: 1, ..*r }]).collect();
        assert!((system_throughput(&doubled, 100, 0.2) - 1e7).abs() < 1e-6);
    }

    #[test]
    fn low_rate_examples() {
        let high: Vec<_> = (1..=4).map(|t| row(t, 0, 1e9, 1e6)).collect();
        assert_eq!(low_rate_user_ratio(&high, 1e6), 0.0);
        let low: Vec<_> = (1..=4).map(|t| row(t, 0, 1e3, 1e6)).collect();
        assert_eq!(low_rate_user_ratio(&low, 1e6), 1.0);
        let half: Vec<_> = (1..=4).flat_map(|t| [row(t, 0, 1e3, 1e6), row(t, 1, 1e9, 1e6)]).collect();
        assert_eq!(low_rate_user_ratio(&half, 1e6), 0.5);
    }

    #[test]
    fn intra_freq_ratio_line() {
        let cfg = ScenarioConfig {
            grid_side: 1,
            ..ScenarioConfig::default()
        };
        let layout = build_layout_with_plan(&cfg, &[2.6]).unwrap();
        // Build a three-cell line by hand on top of a single-cell layout.
        let mut cells = layout.cells.clone();
        for (id, f) in [(1usize, 2.6), (2, 4.9)] {
            let mut c = cells[0].clone();
            c.id = id;
            c.freq_ghz = f;
            cells.push(c);
        }
        let line = CellLayout {
            cells,
            map_size_m: layout.map_size_m,
            grid_side: 1,
        };
        let graph = NeighborGraph::from_adjacency(vec![vec![1], vec![0, 2], vec![1]], false).unwrap();
        assert!((intra_freq_neighbor_ratio(&line, &graph) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spearman_and_ci() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        let (lo, hi) = confidence_interval_95(&[1.0, 1.0, 1.0]);
        assert_eq!((lo, hi), (1.0, 1.0));
    }
}
