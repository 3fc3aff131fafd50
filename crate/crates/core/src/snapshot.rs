//! Spectrum snapshot files: `omega,N` CSV plus a JSON sidecar carrying the
//! time and the grid description.
//!
//! Values are written with 17 significant digits, which round-trips every
//! finite `f64` exactly.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::SnapshotError;
use crate::grid::LogFrequencyGrid;
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub time: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_points: usize,
}

/// Path of the sidecar belonging to `csv` (`foo.csv` -> `foo.json`).
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Renders the CSV body; exposed for writers that bundle several tables.
pub fn to_csv(s: &Spectrum) -> String {
    let mut out = String::with_capacity(48 * s.len() + 8);
    out.push_str("omega,N\n");
    for (w, n) in s.omega().iter().zip(s.values()) {
        out.push_str(&format!("{w:.16e},{n:.16e}\n"));
    }
    out
}

pub fn write_snapshot(s: &Spectrum, csv: &Path) -> Result<(), SnapshotError> {
    fs::write(csv, to_csv(s)).map_err(io_err(csv))?;
    let g = s.grid();
    let meta = SnapshotMeta {
        time: s.time(),
        omega_min: g.omega_min(),
        omega_max: g.omega_max(),
        n_points: g.len(),
    };
    let side = sidecar_path(csv);
    let json = serde_json::to_string_pretty(&meta).expect("plain struct serializes");
    fs::write(&side, json).map_err(io_err(&side))
}

pub fn read_meta(csv: &Path) -> Result<SnapshotMeta, SnapshotError> {
    let side = sidecar_path(csv);
    let text = fs::read_to_string(&side).map_err(io_err(&side))?;
    serde_json::from_str(&text).map_err(|e| SnapshotError::Sidecar {
        path: side.display().to_string(),
        message: e.to_string(),
    })
}

/// Reads a snapshot; `grid` is reused when it matches the sidecar so a series
/// of snapshots shares one allocation.
pub fn read_snapshot(
    csv: &Path,
    grid: Option<&Arc<LogFrequencyGrid>>,
) -> Result<Spectrum, SnapshotError> {
    let meta = read_meta(csv)?;
    let text = fs::read_to_string(csv).map_err(io_err(csv))?;
    let path = csv.display().to_string();
    let parse_err = |line: usize, message: String| SnapshotError::Parse {
        path: path.clone(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "omega,N" => {}
        _ => return Err(parse_err(1, "expected header `omega,N`".into())),
    }
    let mut values = Vec::with_capacity(meta.n_points);
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let (Some(_), Some(n), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(parse_err(i + 1, "expected two columns".into()));
        };
        let v: f64 = n
            .trim()
            .parse()
            .map_err(|e| parse_err(i + 1, format!("bad number `{n}`: {e}")))?;
        values.push(v);
    }
    let grid = match grid {
        Some(g)
            if g.len() == meta.n_points
                && g.omega_min() == meta.omega_min
                && g.omega_max() == meta.omega_max =>
        {
            g.clone()
        }
        _ => Arc::new(LogFrequencyGrid::new(
            meta.omega_min,
            meta.omega_max,
            meta.n_points,
        )?),
    };
    Ok(Spectrum::new(grid, values, meta.time)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = Arc::new(LogFrequencyGrid::new(1e-10, 1e8, 300).unwrap());
        let s = Spectrum::from_fn(g.clone(), 0.123_456_789_012_345_67, |w| {
            (-(w - 1.0).powi(2) / 0.02).exp() + 1e-300 * w
        })
        .unwrap();
        let p = dir.path().join("snap.csv");
        write_snapshot(&s, &p).unwrap();
        let back = read_snapshot(&p, Some(&g)).unwrap();
        assert!(Arc::ptr_eq(back.grid(), &g));
        assert_eq!(back.time().to_bits(), s.time().to_bits());
        for (a, b) in back.values().iter().zip(s.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let fresh = read_snapshot(&p, None).unwrap();
        assert_eq!(fresh.omega(), s.omega());
    }

    #[test]
    fn reports_line_of_bad_row() {
        let dir = tempfile::tempdir().unwrap();
        let g = Arc::new(LogFrequencyGrid::new(1.0, 2.0, 8).unwrap());
        let s = Spectrum::from_fn(g, 0.0, |_| 1.0).unwrap();
        let p = dir.path().join("s.csv");
        write_snapshot(&s, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap().replacen(",1.0", ",x", 1);
        fs::write(&p, text).unwrap();
        match read_snapshot(&p, None) {
            Err(SnapshotError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
