//! File emission: event logs, field snapshots with a manifest, and report
//! files. All formats are delimiter-separated text plus TOML for structured
//! reports, stable across runs for a fixed seed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::exact_sim::EventRecord;
use crate::network::Network;
use crate::pide::{DensityField, Grid};

/// Event log: one row per firing with time, reaction name, location,
/// consumed particle ids and produced species.
pub fn write_event_log<W: Write>(mut out: W, net: &Network, events: &[EventRecord]) -> Result<()> {
    let dim = net.domain.dim;
    write!(out, "t\treaction")?;
    for i in 0..dim {
        write!(out, "\ty{}", i + 1)?;
    }
    writeln!(out, "\tconsumed\tproduced")?;
    for e in events {
        write!(out, "{:.12e}\t{}", e.time, net.reactions[e.reaction].name)?;
        for i in 0..dim {
            write!(out, "\t{:.12e}", e.location[i])?;
        }
        let consumed: Vec<String> = e.consumed.iter().map(|id| id.to_string()).collect();
        let produced: Vec<String> = e
            .produced
            .iter()
            .map(|&(x, _)| net.species[x].name.clone())
            .collect();
        writeln!(out, "\t{}\t{}", consumed.join(";"), produced.join(";"))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub index: usize,
    pub time: f64,
    /// Species name to file name.
    pub files: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub cells_per_axis: usize,
    pub bounds: Vec<[f64; 2]>,
    pub snapshots: Vec<SnapshotEntry>,
}

impl Manifest {
    pub fn new(grid: &Grid) -> Self {
        let bounds = (0..grid.dim())
            .map(|i| [grid.domain.lo[i], grid.domain.hi[i]])
            .collect();
        Manifest { cells_per_axis: grid.cells_per_axis, bounds, snapshots: Vec::new() }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self)
            .map_err(|e| SimError::numeric(format!("manifest serialization: {e}")))?;
        fs::write(dir.join("manifest.toml"), text)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.toml"))?;
        toml::from_str(&text).map_err(|e| SimError::config(format!("manifest parse: {e}")))
    }
}

/// Write one snapshot of a field: one file per tracked species plus a
/// manifest entry. Returns the entry for the manifest.
pub fn write_field_snapshot(
    dir: &Path,
    net: &Network,
    field: &DensityField,
    index: usize,
) -> Result<SnapshotEntry> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for x in 0..net.species.len() {
        if !field.tracked[x] {
            continue;
        }
        let name = format!("field_{}_{index:05}.tsv", net.species[x].name);
        let mut out = fs::File::create(dir.join(&name))?;
        let dim = field.grid.dim();
        for i in 0..dim {
            write!(out, "y{}\t", i + 1)?;
        }
        writeln!(out, "value")?;
        match &field.cells[x] {
            Some(values) => {
                for (flat, v) in values.iter().enumerate() {
                    let c = field.grid.center(flat);
                    for i in 0..dim {
                        write!(out, "{:.12e}\t", c[i])?;
                    }
                    writeln!(out, "{v:.17e}")?;
                }
            }
            None => {
                let anchor = net.species[x].anchor().expect("untracked cells are localized");
                for i in 0..dim {
                    write!(out, "{:.12e}\t", anchor[i])?;
                }
                writeln!(out, "{:.17e}", field.masses[x])?;
            }
        }
        files.push((net.species[x].name.clone(), name));
    }
    Ok(SnapshotEntry { index, time: field.time, files })
}

/// Rebuild a field from a snapshot entry, for resuming a solve.
pub fn read_field_snapshot(
    dir: &Path,
    net: &Network,
    manifest: &Manifest,
    entry: &SnapshotEntry,
) -> Result<DensityField> {
    let grid = Grid::new(&net.domain, manifest.cells_per_axis)?;
    let mut field = DensityField::zero(net, grid);
    field.time = entry.time;
    for (species_name, file) in &entry.files {
        let x = net
            .species_index(species_name)
            .ok_or_else(|| SimError::config(format!("snapshot for unknown species '{species_name}'")))?;
        let text = fs::read_to_string(dir.join(file))?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let value: f64 = line
                .rsplit('\t')
                .next()
                .unwrap()
                .parse()
                .map_err(|e| SimError::config(format!("{file}:{}: {e}", i + 1)))?;
            rows.push(value);
        }
        match field.cells[x].as_mut() {
            Some(values) => {
                if rows.len() != values.len() {
                    return Err(SimError::config(format!(
                        "{file}: expected {} rows, got {}",
                        values.len(),
                        rows.len()
                    )));
                }
                values.copy_from_slice(&rows);
            }
            None => {
                if rows.len() != 1 {
                    return Err(SimError::config(format!(
                        "{file}: localized species snapshot must have one row"
                    )));
                }
                field.masses[x] = rows[0];
            }
        }
    }
    Ok(field)
}

/// Serialize any report structure as TOML next to the other outputs.
pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    let text = toml::to_string(report)
        .map_err(|e| SimError::numeric(format!("report serialization: {e}")))?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_config;
    use crate::pide::{Solver, SolverConfig};

    #[test]
    fn field_snapshot_round_trip() {
        let cfg = parse_config(crate::bundled::PROTEIN_DIFFUSIVE).unwrap();
        let net = &cfg.network;
        let solver =
            Solver::new(net, SolverConfig::from_settings(&cfg.solver).unwrap()).unwrap();
        let field0 =
            DensityField::from_initial(net, &cfg.initial, solver.grid.clone()).unwrap();
        let field = solver.solve(net, &field0, 0.05, None).unwrap();

        let dir = std::env::temp_dir().join(format!("srn_snap_{}", std::process::id()));
        let mut manifest = Manifest::new(&solver.grid);
        let entry = write_field_snapshot(&dir, net, &field, 0).unwrap();
        manifest.snapshots.push(entry.clone());
        manifest.write(&dir).unwrap();

        let back_manifest = Manifest::read(&dir).unwrap();
        let back = read_field_snapshot(&dir, net, &back_manifest, &entry).unwrap();
        assert!(back.l1_distance(&field) < 1e-12);
        assert_eq!(back.time, field.time);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn event_log_format() {
        let cfg = parse_config(crate::bundled::PROTEIN_HYBRID).unwrap();
        let net = &cfg.network;
        let events = vec![EventRecord {
            time: 0.25,
            reaction: 0,
            location: crate::geometry::point_from(&[0.0]),
            consumed: vec![3, 7],
            produced: vec![(0, crate::geometry::point_from(&[0.0]))],
        }];
        let mut buf = Vec::new();
        write_event_log(&mut buf, net, &events).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t\treaction\ty1\tconsumed\tproduced");
        let row = lines.next().unwrap();
        assert!(row.contains("transcription"));
        assert!(row.contains("3;7"));
        assert!(row.ends_with("mrna"));
    }
}
