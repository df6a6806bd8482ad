//! On-disk layout: a directory holding `manifest.toml` and one CSV per
//! sequence with columns `t, c000..c141, grip_cmd, alpha_gt, omega_gt`.
//! Floats are written in shortest round-trip form, so save/load is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CollectionPlan, Dataset, FilteredScenario, SequenceMeta, TrajectorySequence};
use crate::controller::EpisodeResult;
use crate::error::{Error, Result};
use crate::sim::{lookup, ObjectProfile, TICK_HZ};
use crate::tactile::NUM_CHANNELS;

pub const DATASET_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";
const FORMAT: &str = "pivot-dataset";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    sample_rate: f64,
    sequence_count: usize,
    filtered_count: usize,
    #[serde(default)]
    objects: Vec<ObjectProfile>,
    #[serde(default)]
    plans: Vec<CollectionPlan>,
    #[serde(default)]
    sequences: Vec<Entry>,
    #[serde(default)]
    filtered: Vec<FilteredScenario>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    id: String,
    file: String,
    ticks: usize,
    meta: SequenceMeta,
}

fn header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..NUM_CHANNELS).map(|c| format!("c{c:03}")));
    h.extend(["grip_cmd", "alpha_gt", "omega_gt"].map(String::from));
    h
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}

fn write_sequence(path: &Path, s: &TrajectorySequence) -> Result<()> {
    let n = s.len();
    if [s.frames.len(), s.grip_cmd.len(), s.alpha_gt.len(), s.omega_gt.len()]
        .iter()
        .any(|&l| l != n)
    {
        return Err(Error::Length {
            context: "sequence per-tick arrays",
            left: n,
            right: s.frames.len(),
        });
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header()).map_err(|e| csv_error(path, e))?;
    let mut row: Vec<String> = Vec::with_capacity(NUM_CHANNELS + 4);
    for k in 0..n {
        if s.frames[k].len() != NUM_CHANNELS {
            return Err(Error::Shape {
                context: format!("{} frame {k}", s.id),
                expected: NUM_CHANNELS.to_string(),
                got: s.frames[k].len().to_string(),
            });
        }
        row.clear();
        row.push(s.t[k].to_string());
        row.extend(s.frames[k].iter().map(f64::to_string));
        row.push(s.grip_cmd[k].to_string());
        row.push(s.alpha_gt[k].to_string());
        row.push(s.omega_gt[k].to_string());
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the dataset; the manifest goes last so a complete manifest marks a
/// complete dataset.
pub fn save(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(ds.len());
    for s in &ds.sequences {
        let file = format!("{}.csv", s.id);
        write_sequence(&dir.join(&file), s)?;
        entries.push(Entry {
            id: s.id.clone(),
            file,
            ticks: s.len(),
            meta: s.meta.clone(),
        });
    }
    let objects = ds
        .objects()
        .iter()
        .map(|name| lookup(name))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        format: FORMAT.into(),
        version: DATASET_VERSION,
        sample_rate: TICK_HZ,
        sequence_count: entries.len(),
        filtered_count: ds.filtered.len(),
        objects,
        plans: ds.plans.clone(),
        sequences: entries,
        filtered: ds.filtered.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::invalid(format!("manifest encoding: {e}")))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, col: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("column {col}: cannot parse {v:?}"),
    })
}

fn read_sequence(path: &Path, entry: Entry) -> Result<TrajectorySequence> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => csv_error(path, e),
        })?;
    let expected = header();
    let got = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if got.len() != expected.len() || got.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("unexpected header ({} columns, expected {})", got.len(), expected.len()),
        });
    }
    let mut s = TrajectorySequence {
        id: entry.id,
        meta: entry.meta,
        t: Vec::with_capacity(entry.ticks),
        frames: Vec::with_capacity(entry.ticks),
        grip_cmd: Vec::with_capacity(entry.ticks),
        alpha_gt: Vec::with_capacity(entry.ticks),
        omega_gt: Vec::with_capacity(entry.ticks),
    };
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != expected.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected {} fields, found {}", expected.len(), rec.len()),
            });
        }
        s.t.push(parse_field(path, line, "t", &rec[0])?);
        let mut frame = Vec::with_capacity(NUM_CHANNELS);
        for c in 0..NUM_CHANNELS {
            frame.push(parse_field(path, line, &expected[c + 1], &rec[c + 1])?);
        }
        s.frames.push(frame);
        s.grip_cmd
            .push(parse_field(path, line, "grip_cmd", &rec[NUM_CHANNELS + 1])?);
        s.alpha_gt
            .push(parse_field(path, line, "alpha_gt", &rec[NUM_CHANNELS + 2])?);
        s.omega_gt
            .push(parse_field(path, line, "omega_gt", &rec[NUM_CHANNELS + 3])?);
    }
    if s.len() != entry.ticks {
        return Err(Error::Integrity(format!(
            "{} has {} rows, manifest says {}",
            path.display(),
            s.len(),
            entry.ticks
        )));
    }
    Ok(s)
}

pub fn load(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        line: 0,
        msg: e.to_string(),
    })?;
    match table.get("version").and_then(|v| v.as_integer()) {
        Some(v) if v == DATASET_VERSION as i64 => {}
        other => {
            return Err(Error::Version {
                found: other.map_or("missing".into(), |v| v.to_string()),
                supported: DATASET_VERSION,
            })
        }
    }
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        line: 0,
        msg: e.to_string(),
    })?;
    if manifest.format != FORMAT {
        return Err(Error::invalid(format!("{} is not a dataset manifest", path.display())));
    }
    let on_disk = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .count();
    if manifest.sequence_count != manifest.sequences.len() || on_disk != manifest.sequence_count {
        return Err(Error::Integrity(format!(
            "manifest lists {} sequences ({} entries) but the directory holds {} sequence files",
            manifest.sequence_count,
            manifest.sequences.len(),
            on_disk
        )));
    }
    if manifest.filtered_count != manifest.filtered.len() {
        return Err(Error::Integrity("filtered count does not match its entries".into()));
    }
    let mut sequences = Vec::with_capacity(manifest.sequences.len());
    for entry in manifest.sequences {
        let file = dir.join(&entry.file);
        sequences.push(read_sequence(&file, entry)?);
    }
    Ok(Dataset {
        sequences,
        filtered: manifest.filtered,
        plans: manifest.plans,
    })
}

/// Per-tick episode trace in the sequence format plus estimator columns.
pub fn write_episode_trace(path: &Path, r: &EpisodeResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut h = header();
    h.extend(["alpha_est", "omega_est", "phase"].map(String::from));
    w.write_record(&h).map_err(|e| csv_error(path, e))?;
    for (row, frame) in r.trace.iter().zip(&r.frames) {
        let mut rec: Vec<String> = vec![row.t.to_string()];
        rec.extend(frame.channels.iter().map(f64::to_string));
        rec.push(row.cmd.to_string());
        rec.push(row.alpha_gt.to_string());
        rec.push(row.omega_gt.to_string());
        rec.push(row.alpha_est.to_string());
        rec.push(row.omega_est.to_string());
        rec.push(row.phase.as_str().to_string());
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
