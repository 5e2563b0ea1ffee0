//! Episode log rows and their CSV / JSON encodings. Column order is the field
//! order of each row type and is stable across releases.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::handover::{HandoverEvent, HandoverKind};

/// A row type with a fixed header, so empty tables still carry their columns.
pub trait Table: Serialize + DeserializeOwned {
    const HEADERS: &'static [&'static str];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub episode: usize,
    pub ue: usize,
    pub source: usize,
    pub target: usize,
    pub kind: HandoverKind,
    pub report_slot: usize,
    pub execute_slot: usize,
    pub monitor_start_slot: Option<usize>,
}

impl Table for EventRow {
    const HEADERS: &'static [&'static str] = &[
        "episode",
        "ue",
        "source",
        "target",
        "kind",
        "report_slot",
        "execute_slot",
        "monitor_start_slot",
    ];
}

impl EventRow {
    pub fn new(episode: usize, e: &HandoverEvent) -> Self {
        Self {
            episode,
            ue: e.ue,
            source: e.source,
            target: e.target,
            kind: e.kind,
            report_slot: e.report_slot,
            execute_slot: e.execute_slot,
            monitor_start_slot: e.monitor_start_slot,
        }
    }

    pub fn event(&self) -> HandoverEvent {
        HandoverEvent {
            ue: self.ue,
            source: self.source,
            target: self.target,
            kind: self.kind,
            report_slot: self.report_slot,
            execute_slot: self.execute_slot,
            monitor_start_slot: self.monitor_start_slot,
        }
    }
}

/// Per-slot, per-cell load record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadRow {
    pub episode: usize,
    pub slot: usize,
    pub cell: usize,
    pub load: f64,
    pub estimate: f64,
    pub reward: f64,
    /// Exact-average reward `-|L - mean(L)|`, kept for diagnostics.
    pub exact_reward: f64,
    pub load_std: f64,
}

impl Table for LoadRow {
    const HEADERS: &'static [&'static str] = &["episode", "slot", "cell", "load", "estimate", "reward", "exact_reward", "load_std"];
}

/// Per-slot, per-UE serving-link record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeSlotRow {
    pub episode: usize,
    pub slot: usize,
    pub ue: usize,
    pub serving: usize,
    pub rate_bps: f64,
    pub request_bytes: f64,
}

impl Table for UeSlotRow {
    const HEADERS: &'static [&'static str] = &["episode", "slot", "ue", "serving", "rate_bps", "request_bytes"];
}

pub fn write_csv<T: Table>(path: &Path, rows: &[T]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(T::HEADERS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: Table>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let headers = r.headers()?.clone();
    if headers.iter().ne(T::HEADERS.iter().copied()) {
        return Err(Error::Precondition(format!(
            "{}: unexpected columns {:?}",
            path.display(),
            headers.iter().collect::<Vec<_>>()
        )));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_json<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, rows)?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
