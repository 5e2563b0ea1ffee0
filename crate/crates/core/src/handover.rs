//! Per-UE handover state machine.
//!
//! Three handover types share one machine:
//!
//! | type | direction           | monitor gate                 | report condition            |
//! |------|---------------------|------------------------------|-----------------------------|
//! | CAH  | same frequency      | none                         | `G_j - G_s >= U_CA`         |
//! | CEH  | to lower frequency  | `G_s <= Z_CE` for H1 slots   | `G_j >= W_CE`               |
//! | PEH  | to higher frequency | `G_s <= Z_PE` for H1 slots   | `G_j >= W_PE`               |
//!
//! Report conditions must hold for H2 consecutive slots. An inter-frequency
//! monitor completes after H1 slots, monitoring starts on the following slot
//! (the UE retunes) and inter-frequency measurements are counted from the
//! slot after that. A report in slot `n` is executed in slot `n + 1`, after
//! which every counter and flag is cleared.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{grid_coord, CellLayout};

pub const U_CA_MIN: i32 = 0;
pub const U_CA_MAX: i32 = 96;
pub const THRESHOLD_MIN_DBM: i32 = -140;
pub const THRESHOLD_MAX_DBM: i32 = -44;

/// The five per-cell handover parameters, all integer dB / dBm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HandoverParams {
    pub u_ca: i32,
    pub z_ce: i32,
    pub w_ce: i32,
    pub z_pe: i32,
    pub w_pe: i32,
}

impl HandoverParams {
    /// Midpoint of every protocol range.
    pub const fn mid_range() -> Self {
        Self {
            u_ca: 48,
            z_ce: -92,
            w_ce: -92,
            z_pe: -92,
            w_pe: -92,
        }
    }

    /// Checks every field against its protocol range.
    pub fn validate(&self) -> std::result::Result<(), Vec<ParamViolation>> {
        let fields = [
            ("u_ca", self.u_ca, U_CA_MIN, U_CA_MAX),
            ("z_ce", self.z_ce, THRESHOLD_MIN_DBM, THRESHOLD_MAX_DBM),
            ("w_ce", self.w_ce, THRESHOLD_MIN_DBM, THRESHOLD_MAX_DBM),
            ("z_pe", self.z_pe, THRESHOLD_MIN_DBM, THRESHOLD_MAX_DBM),
            ("w_pe", self.w_pe, THRESHOLD_MIN_DBM, THRESHOLD_MAX_DBM),
        ];
        let violations: Vec<_> = fields
            .into_iter()
            .filter(|&(_, v, lo, hi)| v < lo || v > hi)
            .map(|(field, v, lo, hi)| ParamViolation {
                field,
                value: v as f64,
                reason: format!("outside [{lo}, {hi}]"),
            })
            .collect();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    /// Builds parameters from real values ordered `(u_ca, z_ce, w_ce, z_pe, w_pe)`,
    /// flagging non-integers as well as range violations.
    pub fn from_reals(values: [f64; 5]) -> std::result::Result<Self, Vec<ParamViolation>> {
        const NAMES: [&str; 5] = ["u_ca", "z_ce", "w_ce", "z_pe", "w_pe"];
        let mut violations = Vec::new();
        for (name, v) in NAMES.iter().zip(values) {
            if !v.is_finite() || v.fract() != 0.0 {
                violations.push(ParamViolation {
                    field: name,
                    value: v,
                    reason: "not an integer".into(),
                });
            }
        }
        let p = Self {
            u_ca: values[0] as i32,
            z_ce: values[1] as i32,
            w_ce: values[2] as i32,
            z_pe: values[3] as i32,
            w_pe: values[4] as i32,
        };
        if let Err(range) = p.validate() {
            let extra: Vec<_> = range
                .into_iter()
                .filter(|r| !violations.iter().any(|v| v.field == r.field))
                .collect();
            violations.extend(extra);
        }
        if violations.is_empty() {
            Ok(p)
        } else {
            Err(violations)
        }
    }
}

impl Default for HandoverParams {
    fn default() -> Self {
        Self::mid_range()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamViolation {
    pub field: &'static str,
    pub value: f64,
    pub reason: String,
}

impl std::fmt::Display for ParamViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} = {} {}", self.field, self.value, self.reason)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HandoverKind {
    #[serde(rename = "CAH")]
    Cah,
    #[serde(rename = "CEH")]
    Ceh,
    #[serde(rename = "PEH")]
    Peh,
}

impl HandoverKind {
    pub fn is_inter_frequency(self) -> bool {
        !matches!(self, HandoverKind::Cah)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HandoverKind::Cah => "CAH",
            HandoverKind::Ceh => "CEH",
            HandoverKind::Peh => "PEH",
        }
    }
}

/// Trigger windows H1 (monitor) and H2 (report), in slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HandoverConfig {
    pub h1: usize,
    pub h2: usize,
}

impl Default for HandoverConfig {
    fn default() -> Self {
        Self { h1: 5, h2: 3 }
    }
}

impl HandoverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h1 == 0 || self.h2 == 0 {
            return Err(Error::config("h1 and h2 must be at least one slot"));
        }
        Ok(())
    }
}

/// Per-cell candidate target sets, split by frequency relation.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub intra: Vec<Vec<usize>>,
    pub lower: Vec<Vec<usize>>,
    pub higher: Vec<Vec<usize>>,
}

impl Neighborhood {
    /// A cell measures every other cell whose center lies inside its
    /// `(2 kappa + 1)`-square observation window of side `grid_length`.
    pub fn from_layout(layout: &CellLayout, grid_length: f64, kappa: usize) -> Self {
        let squares = ((layout.map_size_m / grid_length).ceil() as usize).max(1);
        let coords: Vec<(i64, i64)> = layout
            .cells
            .iter()
            .map(|c| {
                (
                    grid_coord(c.center[0], grid_length, squares) as i64,
                    grid_coord(c.center[1], grid_length, squares) as i64,
                )
            })
            .collect();
        let m = layout.len();
        let (mut intra, mut lower, mut higher) = (vec![vec![]; m], vec![vec![]; m], vec![vec![]; m]);
        for a in 0..m {
            for b in 0..m {
                if a == b {
                    continue;
                }
                let k = kappa as i64;
                if (coords[a].0 - coords[b].0).abs() > k || (coords[a].1 - coords[b].1).abs() > k {
                    continue;
                }
                let (fa, fb) = (layout.cells[a].freq_ghz, layout.cells[b].freq_ghz);
                if layout.same_frequency(a, b) {
                    intra[a].push(b);
                } else if fb < fa {
                    lower[a].push(b);
                } else {
                    higher[a].push(b);
                }
            }
        }
        Self { intra, lower, higher }
    }

    pub fn all(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        self.intra[cell].iter().chain(&self.lower[cell]).chain(&self.higher[cell]).copied()
    }
}

/// An inter-frequency monitor that has completed its H1 window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monitor {
    /// First slot of the H1 window.
    pub start_slot: usize,
    /// Slot from which monitoring is in effect; measurements count after it.
    pub active_slot: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub target: usize,
    pub kind: HandoverKind,
    pub report_slot: usize,
    pub monitor_start_slot: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoverEvent {
    pub ue: usize,
    pub source: usize,
    pub target: usize,
    pub kind: HandoverKind,
    pub report_slot: usize,
    pub execute_slot: usize,
    pub monitor_start_slot: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct MonitorGate {
    count: u32,
    streak_start: Option<usize>,
    monitor: Option<Monitor>,
}

impl MonitorGate {
    fn step(&mut self, t: usize, below: bool, h1: usize) {
        if below {
            if self.count == 0 {
                self.streak_start = Some(t);
            }
            self.count += 1;
        } else {
            self.count = 0;
            self.streak_start = None;
        }
        if self.monitor.is_none() && self.count as usize >= h1 {
            self.monitor = Some(Monitor {
                start_slot: self.streak_start.unwrap_or(t),
                active_slot: t + 1,
            });
        }
    }

    fn measuring(&self, t: usize) -> bool {
        self.monitor.is_some_and(|m| t > m.active_slot)
    }
}

/// Handover memory of one UE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementState {
    pub serving: usize,
    ce: MonitorGate,
    pe: MonitorGate,
    ca_counters: Vec<u32>,
    ce_counters: Vec<u32>,
    pe_counters: Vec<u32>,
    pub pending: Option<Report>,
}

impl MeasurementState {
    pub fn new(serving: usize, num_cells: usize) -> Self {
        Self {
            serving,
            ce: MonitorGate::default(),
            pe: MonitorGate::default(),
            ca_counters: vec![0; num_cells],
            ce_counters: vec![0; num_cells],
            pe_counters: vec![0; num_cells],
            pending: None,
        }
    }

    pub fn ce_monitor(&self) -> Option<Monitor> {
        self.ce.monitor
    }

    pub fn pe_monitor(&self) -> Option<Monitor> {
        self.pe.monitor
    }

    pub fn ca_counter(&self, cell: usize) -> u32 {
        self.ca_counters[cell]
    }

    pub fn ce_counter(&self, cell: usize) -> u32 {
        self.ce_counters[cell]
    }

    pub fn pe_counter(&self, cell: usize) -> u32 {
        self.pe_counters[cell]
    }

    /// True when no counter, monitor or pending report survives.
    pub fn is_clear(&self) -> bool {
        self.ce == MonitorGate::default()
            && self.pe == MonitorGate::default()
            && self.pending.is_none()
            && self
                .ca_counters
                .iter()
                .chain(&self.ce_counters)
                .chain(&self.pe_counters)
                .all(|&c| c == 0)
    }

    fn reset(&mut self, serving: usize) {
        let m = self.ca_counters.len();
        *self = Self::new(serving, m);
    }

    /// Advances every counter by one slot and returns the report that fires,
    /// if any. Does nothing while a report is awaiting execution.
    pub fn step_measurements(
        &mut self,
        t: usize,
        rsrp_row: &[f64],
        params: &HandoverParams,
        timing: &HandoverConfig,
        neighbors: &Neighborhood,
    ) -> Result<Option<Report>> {
        let s = self.serving;
        let Some(&g_serving) = rsrp_row.get(s) else {
            return Err(Error::Internal(format!("serving cell {s} missing from RSRP row")));
        };
        if self.pending.is_some() {
            return Ok(None);
        }
        let h2 = timing.h2 as u32;

        for &j in &neighbors.intra[s] {
            bump(&mut self.ca_counters[j], rsrp_row[j] - g_serving >= params.u_ca as f64);
        }

        // Measurement eligibility is decided before this slot's monitor update.
        let ce_measuring = self.ce.measuring(t);
        let pe_measuring = self.pe.measuring(t);
        self.ce.step(t, g_serving <= params.z_ce as f64, timing.h1);
        self.pe.step(t, g_serving <= params.z_pe as f64, timing.h1);

        if ce_measuring {
            for &j in &neighbors.lower[s] {
                bump(&mut self.ce_counters[j], rsrp_row[j] >= params.w_ce as f64);
            }
        }
        if pe_measuring {
            for &j in &neighbors.higher[s] {
                bump(&mut self.pe_counters[j], rsrp_row[j] >= params.w_pe as f64);
            }
        }

        let pick = |cells: &[usize], counters: &[u32]| -> Option<usize> {
            cells
                .iter()
                .copied()
                .filter(|&j| counters[j] >= h2)
                .fold(None, |best: Option<usize>, j| match best {
                    Some(b) if rsrp_row[b] > rsrp_row[j] || (rsrp_row[b] == rsrp_row[j] && b < j) => Some(b),
                    _ => Some(j),
                })
        };
        let report = if let Some(target) = pick(&neighbors.intra[s], &self.ca_counters) {
            Some((target, HandoverKind::Cah, None))
        } else if let Some(target) = pick(&neighbors.lower[s], &self.ce_counters) {
            Some((target, HandoverKind::Ceh, self.ce.monitor.map(|m| m.start_slot)))
        } else {
            pick(&neighbors.higher[s], &self.pe_counters).map(|target| (target, HandoverKind::Peh, self.pe.monitor.map(|m| m.start_slot)))
        };
        Ok(report.map(|(target, kind, monitor_start_slot)| {
            let r = Report {
                target,
                kind,
                report_slot: t,
                monitor_start_slot,
            };
            self.pending = Some(r);
            r
        }))
    }

    /// Applies a pending report in slot `t`, moving the UE in `serving` and
    /// clearing all measurement records.
    pub fn execute_pending(&mut self, ue: usize, serving: &mut [usize], t: usize) -> Option<HandoverEvent> {
        let report = self.pending?;
        let num_cells = self.ca_counters.len();
        if report.target >= num_cells {
            tracing::warn!(ue, target = report.target, "dropping handover to unknown cell");
            self.reset(self.serving);
            return None;
        }
        let source = self.serving;
        serving[ue] = report.target;
        self.reset(report.target);
        Some(HandoverEvent {
            ue,
            source,
            target: report.target,
            kind: report.kind,
            report_slot: report.report_slot,
            execute_slot: t,
            monitor_start_slot: report.monitor_start_slot,
        })
    }
}

fn bump(counter: &mut u32, holds: bool) {
    if holds {
        *counter += 1;
    } else {
        *counter = 0;
    }
}

/// Attaches each UE to its strongest cell; ties go to the lowest cell id.
/// `rsrp` is row-major `[cell * K + ue]`.
pub fn initial_association(rsrp: &[f64], num_cells: usize, num_ues: usize) -> Vec<usize> {
    (0..num_ues)
        .map(|k| {
            (1..num_cells).fold(0, |best, m| {
                if rsrp[m * num_ues + k] > rsrp[best * num_ues + k] {
                    m
                } else {
                    best
                }
            })
        })
        .collect()
}

/// One-hot association matrix `alpha[m][k]` from a serving-cell vector.
pub fn association_matrix(serving: &[usize], num_cells: usize) -> Vec<Vec<u8>> {
    let mut alpha = vec![vec![0u8; serving.len()]; num_cells];
    for (k, &m) in serving.iter().enumerate() {
        alpha[m][k] = 1;
    }
    alpha
}
