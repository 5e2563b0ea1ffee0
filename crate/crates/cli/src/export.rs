//! `hexcell export`: re-encode a run's logs as CSV or JSON.

use std::path::{Path, PathBuf};

use hexcell_core::logs::{read_csv, read_json, write_csv, write_json, EventRow, LoadRow, Table, UeSlotRow};
use hexcell_core::metrics::EpisodeReport;
use hexcell_learn::rollout::TrainRow;

use crate::error::{CmdResult, Failure};
use crate::manifest::RunManifest;
use crate::{eval, train};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum What {
    Events,
    Loads,
    UeSlots,
    Reports,
    Training,
}

impl What {
    pub fn stem(self) -> &'static str {
        match self {
            What::Events => "events",
            What::Loads => "loads",
            What::UeSlots => "ue_slots",
            What::Reports => "reports",
            What::Training => "training",
        }
    }

    fn source(self) -> &'static str {
        match self {
            What::Events => eval::EVENTS_FILE,
            What::Loads => eval::LOADS_FILE,
            What::UeSlots => eval::UE_SLOTS_FILE,
            What::Reports => eval::REPORTS_FILE,
            What::Training => train::CURVE_FILE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Failure;

    fn from_str(s: &str) -> Result<Self, Failure> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Failure::usage(format!("unknown export format {other:?}; expected csv or json"))),
        }
    }
}

pub fn write_rows<T: Table>(path: &Path, rows: &[T], format: Format) -> CmdResult<()> {
    match format {
        Format::Csv => write_csv(path, rows)?,
        Format::Json => write_json(path, rows)?,
    }
    Ok(())
}

pub fn read_rows<T: Table>(path: &Path, format: Format) -> CmdResult<Vec<T>> {
    Ok(match format {
        Format::Csv => read_csv(path)?,
        Format::Json => read_json(path)?,
    })
}

fn convert<T: Table>(src: &Path, dst: &Path, format: Format) -> CmdResult<usize> {
    let rows: Vec<T> = read_csv(src)?;
    write_rows(dst, &rows, format)?;
    Ok(rows.len())
}

/// Writes `<out>/<what>.<format>` and returns its path. `out` defaults to
/// `<run_dir>/export`.
pub fn run(run_dir: &Path, what: What, format: Format, out: Option<&Path>) -> CmdResult<PathBuf> {
    let manifest = RunManifest::read(run_dir).map_err(Failure::Usage)?;
    let src = run_dir.join(what.source());
    if !src.exists() {
        return Err(Failure::usage(format!(
            "{} run in {} has no {} log",
            manifest.command,
            run_dir.display(),
            what.stem()
        )));
    }
    let out = out.map_or_else(|| run_dir.join("export"), Path::to_path_buf);
    std::fs::create_dir_all(&out)?;
    let dst = out.join(format!("{}.{}", what.stem(), format.extension()));
    let n = match what {
        What::Events => convert::<EventRow>(&src, &dst, format)?,
        What::Loads => convert::<LoadRow>(&src, &dst, format)?,
        What::UeSlots => convert::<UeSlotRow>(&src, &dst, format)?,
        What::Reports => convert::<EpisodeReport>(&src, &dst, format)?,
        What::Training => convert::<TrainRow>(&src, &dst, format)?,
    };
    tracing::info!(rows = n, path = %dst.display(), "exported");
    Ok(dst)
}
