//! On-disk formats.
//!
//! * series: first line `S,M,interval_s`, then one line of `M` comma-separated
//!   values per timestamp. Values use the shortest representation that parses
//!   back to the same number, so files round-trip exactly.
//! * records: CSV with header `user_id,time,lon,lat`.
//! * trajectories: CSV with header `user_id,timestamp,cell`, one row per point.
//! * grid: JSON object with `origin_lon`, `origin_lat`, `cell_size_m`, `rows`, `cols`.

use std::fmt::{Display, Write as _};
use std::fs;
use std::path::Path;

use mobdp_core::data::{
    AggregatedSeries, CellValue, CountSeries, GridSpec, NoisySeries, TrajectoryDataset, TrajectoryRecord,
    UserTrajectory,
};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn format_series<T: CellValue + Display>(series: &AggregatedSeries<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{},{},{}", series.len(), series.cells(), series.interval_s());
    for h in series.histograms() {
        for (m, v) in h.iter().enumerate() {
            if m > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// Parses a series; `origin` only labels errors.
pub fn parse_series(text: &str, origin: &Path) -> Result<NoisySeries> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::format(origin, 1, "empty file"))?;
    let dims: Vec<&str> = header.split(',').map(str::trim).collect();
    let [s, m, interval] = dims.as_slice() else {
        return Err(Error::format(origin, 1, "expected `S,M,interval_s`"));
    };
    let parse_dim = |v: &str, what: &str| {
        v.parse::<u64>()
            .map_err(|_| Error::format(origin, 1, format!("{what} must be a non-negative integer, got {v:?}")))
    };
    let (s, m, interval) =
        (parse_dim(s, "S")? as usize, parse_dim(m, "M")? as usize, parse_dim(interval, "interval_s")?);

    let mut rows = Vec::with_capacity(s);
    for (i, line) in lines {
        let lineno = i + 1;
        if rows.len() == s {
            return Err(Error::format(origin, lineno, format!("more than {s} rows")));
        }
        let row = line
            .split(',')
            .map(|v| {
                let v = v.trim();
                match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(Error::format(origin, lineno, format!("not a finite number: {v:?}"))),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != m {
            return Err(Error::format(origin, lineno, format!("expected {m} values, found {}", row.len())));
        }
        rows.push(row);
    }
    if rows.len() != s {
        return Err(Error::format(origin, 1, format!("header promises {s} rows, found {}", rows.len())));
    }
    Ok(NoisySeries::from_rows(rows, interval)?)
}

pub fn read_series(path: &Path) -> Result<NoisySeries> {
    parse_series(&read_text(path)?, path)
}

/// Reads a series that must hold non-negative integer counts.
pub fn read_counts(path: &Path) -> Result<CountSeries> {
    Ok(CountSeries::try_from_noisy(&read_series(path)?)?)
}

pub fn write_series<T: CellValue + Display>(path: &Path, series: &AggregatedSeries<T>) -> Result<()> {
    write_text(path, &format_series(series))
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordRow {
    user_id: String,
    time: u64,
    lon: f64,
    lat: f64,
}

pub fn read_records(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    reader
        .deserialize::<RecordRow>()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            Ok(TrajectoryRecord { user_id: row.user_id, time: row.time, lon: row.lon, lat: row.lat })
        })
        .collect()
}

pub fn write_records(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in records {
        writer
            .serialize(RecordRow { user_id: r.user_id.clone(), time: r.time, lon: r.lon, lat: r.lat })
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRow {
    user_id: String,
    timestamp: usize,
    cell: usize,
}

pub fn write_trajectories(path: &Path, dataset: &TrajectoryDataset) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    for user in dataset.users() {
        for (timestamp, &cell) in user.cells.iter().enumerate() {
            writer.serialize(PointRow { user_id: user.user_id.clone(), timestamp, cell }).map_err(csv_err)?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Reads trajectories over a grid of `cells` cells. Every user must have exactly
/// one point per timestamp `0..S`; users keep the order of their first row.
pub fn read_trajectories(path: &Path, cells: usize) -> Result<TrajectoryDataset> {
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut order: Vec<String> = Vec::new();
    let mut points: std::collections::HashMap<String, Vec<Option<usize>>> = std::collections::HashMap::new();
    for (i, row) in reader.deserialize::<PointRow>().enumerate() {
        let row = row.map_err(csv_err)?;
        let slots = points.entry(row.user_id.clone()).or_insert_with(|| {
            order.push(row.user_id.clone());
            Vec::new()
        });
        if slots.len() <= row.timestamp {
            slots.resize(row.timestamp + 1, None);
        }
        if slots[row.timestamp].replace(row.cell).is_some() {
            return Err(Error::format(
                path,
                i + 2,
                format!("duplicate point for {} at {}", row.user_id, row.timestamp),
            ));
        }
    }
    let timestamps = order.first().map_or(0, |u| points[u].len());
    let mut users = Vec::with_capacity(order.len());
    for user_id in order {
        let slots = points.remove(&user_id).unwrap_or_default();
        if slots.len() != timestamps || slots.iter().any(Option::is_none) {
            return Err(Error::format(path, 0, format!("user {user_id} does not cover timestamps 0..{timestamps}")));
        }
        users.push(UserTrajectory { user_id, cells: slots.into_iter().flatten().collect() });
    }
    Ok(TrajectoryDataset::new(users, timestamps, cells)?)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub cell_size_m: f64,
    pub rows: usize,
    pub cols: usize,
}

impl From<GridSpec> for GridFile {
    fn from(g: GridSpec) -> Self {
        GridFile {
            origin_lon: g.origin_lon,
            origin_lat: g.origin_lat,
            cell_size_m: g.cell_size_m,
            rows: g.rows,
            cols: g.cols,
        }
    }
}

pub fn read_grid(path: &Path) -> Result<GridSpec> {
    let text = read_text(path)?;
    let g: GridFile = serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    Ok(GridSpec::new(g.origin_lon, g.origin_lat, g.cell_size_m, g.rows, g.cols)?)
}

pub fn write_grid(path: &Path, grid: &GridSpec) -> Result<()> {
    let text = serde_json::to_string_pretty(&GridFile::from(*grid)).expect("grid serializes");
    write_text(path, &(text + "\n"))
}

/// Writes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    write_text(path, &(text + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_text_round_trip() {
        let series = NoisySeries::from_rows(vec![vec![0.1, -2.5e-7, 3.0], vec![1e300, -0.0, 7.25]], 1800).unwrap();
        let text = format_series(&series);
        assert!(text.starts_with("2,3,1800\n"));
        assert_eq!(parse_series(&text, Path::new("x")).unwrap(), series);
    }

    #[test]
    fn malformed_series() {
        let p = Path::new("x");
        assert!(parse_series("", p).is_err());
        assert!(parse_series("1,2\n1,2\n", p).is_err());
        assert!(parse_series("1,2,60\n1\n", p).is_err());
        assert!(parse_series("2,1,60\n1\n", p).is_err());
        assert!(parse_series("1,1,60\nNaN\n", p).is_err());
        assert!(parse_series("1,1,60\n1\n2\n", p).is_err());
    }
}
