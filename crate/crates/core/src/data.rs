//! Grid geometry, trajectory records and aggregated count histograms.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::{Error, Result};

/// Mean Earth radius in meters.
const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// A regular grid of square cells anchored at its south-west corner.
///
/// Cells are numbered row-major from the origin: `cell = row * cols + col`,
/// where rows grow northwards and columns eastwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub cell_size_m: f64,
    pub rows: usize,
    pub cols: usize,
}

/// Where a coordinate lands on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Inside(usize),
    OutOfBounds,
}

impl Placement {
    pub fn cell(self) -> Option<usize> {
        match self {
            Placement::Inside(cell) => Some(cell),
            Placement::OutOfBounds => None,
        }
    }
}

impl GridSpec {
    pub fn new(origin_lon: f64, origin_lat: f64, cell_size_m: f64, rows: usize, cols: usize) -> Result<Self> {
        let grid = GridSpec { origin_lon, origin_lat, cell_size_m, rows, cols };
        grid.validate()?;
        Ok(grid)
    }

    /// A grid with the origin at (0, 0) and 500 m cells, for tests and synthetic data.
    pub fn square(side: usize) -> Self {
        GridSpec { origin_lon: 0.0, origin_lat: 0.0, cell_size_m: 500.0, rows: side, cols: side }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size_m.is_finite() && self.cell_size_m > 0.0) {
            return Err(Error::InvalidGrid("cell_size_m must be positive"));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidGrid("rows and cols must be at least 1"));
        }
        if !(self.origin_lon.is_finite() && self.origin_lat.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite"));
        }
        Ok(())
    }

    /// Number of cells, `rows * cols`.
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn row_col(&self, cell: usize) -> (usize, usize) {
        (cell / self.cols, cell % self.cols)
    }

    fn meters_per_degree_lon(&self) -> f64 {
        EARTH_RADIUS_M * libm::cos(self.origin_lat.to_radians()) * core::f64::consts::PI / 180.0
    }

    fn meters_per_degree_lat(&self) -> f64 {
        EARTH_RADIUS_M * core::f64::consts::PI / 180.0
    }

    /// Equirectangular projection to local (east, north) meters from the origin.
    pub fn project(&self, lon: f64, lat: f64) -> (f64, f64) {
        ((lon - self.origin_lon) * self.meters_per_degree_lon(), (lat - self.origin_lat) * self.meters_per_degree_lat())
    }

    pub fn unproject(&self, east_m: f64, north_m: f64) -> (f64, f64) {
        (
            self.origin_lon + east_m / self.meters_per_degree_lon(),
            self.origin_lat + north_m / self.meters_per_degree_lat(),
        )
    }

    /// Row-major cell containing the coordinate.
    pub fn map_to_cell(&self, lon: f64, lat: f64) -> Result<Placement> {
        if !(lon.is_finite() && lat.is_finite()) {
            return Err(Error::RejectedRecord("non-finite coordinate".to_string()));
        }
        let (east, north) = self.project(lon, lat);
        let col = libm::floor(east / self.cell_size_m);
        let row = libm::floor(north / self.cell_size_m);
        if col < 0.0 || row < 0.0 || col >= self.cols as f64 || row >= self.rows as f64 {
            return Ok(Placement::OutOfBounds);
        }
        Ok(Placement::Inside(row as usize * self.cols + col as usize))
    }

    /// (lon, lat) of the centre of `cell`.
    pub fn centroid(&self, cell: usize) -> (f64, f64) {
        let (row, col) = self.row_col(cell);
        self.unproject((col as f64 + 0.5) * self.cell_size_m, (row as f64 + 0.5) * self.cell_size_m)
    }
}

/// One raw location fix.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub user_id: String,
    /// Seconds since the epoch.
    pub time: u64,
    pub lon: f64,
    pub lat: f64,
}

/// Value stored in a histogram cell.
pub trait CellValue: Copy + PartialEq + core::fmt::Debug {
    fn to_f64(self) -> f64;
}

impl CellValue for u64 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl CellValue for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

/// Per-cell user counts at one timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<T = u64>(Vec<T>);

impl<T: CellValue> Histogram<T> {
    pub fn new(counts: Vec<T>) -> Self {
        Histogram(counts)
    }

    pub fn counts(&self) -> &[T] {
        &self.0
    }

    pub fn into_counts(self) -> Vec<T> {
        self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().map(|v| v.to_f64()).sum()
    }

    pub fn to_noisy(&self) -> Histogram<f64> {
        Histogram(self.0.iter().map(|v| v.to_f64()).collect())
    }
}

impl<T> Deref for Histogram<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> core::ops::DerefMut for Histogram<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

/// Sequence of equally wide histograms, one per timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedSeries<T = u64> {
    interval_s: u64,
    cells: usize,
    histograms: Vec<Histogram<T>>,
}

/// Raw integer counts.
pub type CountSeries = AggregatedSeries<u64>;
/// Real-valued noisy release.
pub type NoisySeries = AggregatedSeries<f64>;

impl<T: CellValue> AggregatedSeries<T> {
    pub fn new(histograms: Vec<Histogram<T>>, interval_s: u64) -> Result<Self> {
        let cells = histograms.first().ok_or(Error::EmptySeries)?.len();
        if let Some(bad) = histograms.iter().find(|h| h.len() != cells) {
            return Err(Error::DimensionMismatch { expected: cells, found: bad.len() });
        }
        Ok(AggregatedSeries { interval_s, cells, histograms })
    }

    pub fn from_rows(rows: Vec<Vec<T>>, interval_s: u64) -> Result<Self> {
        Self::new(rows.into_iter().map(Histogram::new).collect(), interval_s)
    }

    /// Number of timestamps `S`.
    pub fn len(&self) -> usize {
        self.histograms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histograms.is_empty()
    }

    /// Number of cells `M`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn interval_s(&self) -> u64 {
        self.interval_s
    }

    /// Offset in seconds of timestamp `i` from the start of the series.
    pub fn timestamp(&self, i: usize) -> u64 {
        i as u64 * self.interval_s
    }

    pub fn histograms(&self) -> &[Histogram<T>] {
        &self.histograms
    }

    pub fn get(&self, i: usize) -> &Histogram<T> {
        &self.histograms[i]
    }

    pub fn into_histograms(self) -> Vec<Histogram<T>> {
        self.histograms
    }

    /// Histograms at the given timestamps, in order, as a new series.
    pub fn select(&self, indices: &[usize]) -> Vec<Histogram<T>> {
        indices.iter().map(|&i| self.histograms[i].clone()).collect()
    }

    pub fn to_noisy(&self) -> NoisySeries {
        AggregatedSeries {
            interval_s: self.interval_s,
            cells: self.cells,
            histograms: self.histograms.iter().map(Histogram::to_noisy).collect(),
        }
    }

    pub fn ensure_same_shape<U: CellValue>(&self, other: &AggregatedSeries<U>) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: other.len() });
        }
        if self.cells != other.cells {
            return Err(Error::DimensionMismatch { expected: self.cells, found: other.cells });
        }
        Ok(())
    }

    /// L1 distances between consecutive histograms.
    pub fn adjacent_distances(&self) -> Result<AdjacentDistances> {
        adjacent_distances(self)
    }
}

impl CountSeries {
    /// Converts a release whose cells are all non-negative integers.
    pub fn try_from_noisy(noisy: &NoisySeries) -> Result<Self> {
        let mut histograms = Vec::with_capacity(noisy.len());
        for (t, h) in noisy.histograms().iter().enumerate() {
            let mut counts = Vec::with_capacity(h.len());
            for (cell, &value) in h.iter().enumerate() {
                if !(value.is_finite() && value >= 0.0 && libm::trunc(value) == value) {
                    return Err(Error::NonIntegral { timestamp: t, cell, value });
                }
                counts.push(value as u64);
            }
            histograms.push(Histogram(counts));
        }
        Self::new(histograms, noisy.interval_s())
    }

    /// Multiplies every count by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        AggregatedSeries {
            interval_s: self.interval_s,
            cells: self.cells,
            histograms: self.histograms.iter().map(|h| Histogram(h.iter().map(|&c| c * k).collect())).collect(),
        }
    }
}

/// `Σ_m |a_m − b_m|`.
pub fn l1_distance<A: CellValue, B: CellValue>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(a.iter().zip(b).map(|(x, y)| libm::fabs(x.to_f64() - y.to_f64())).sum())
}

/// Consecutive-timestamp distances and their day mean (`T̄`).
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacentDistances {
    pub distances: Vec<f64>,
    pub mean: f64,
}

pub fn adjacent_distances<T: CellValue>(series: &AggregatedSeries<T>) -> Result<AdjacentDistances> {
    if series.len() < 2 {
        return Err(Error::TooFewTimestamps { needed: 2, found: series.len() });
    }
    let distances = series.histograms().windows(2).map(|w| l1_distance(&w[0], &w[1])).collect::<Result<Vec<_>>>()?;
    let mean = distances.iter().sum::<f64>() / distances.len() as f64;
    Ok(AdjacentDistances { distances, mean })
}

/// One user's cell sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserTrajectory {
    pub user_id: String,
    pub cells: Vec<usize>,
}

/// Ground-truth trajectories, all of the same length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryDataset {
    users: Vec<UserTrajectory>,
    timestamps: usize,
    cells: usize,
}

impl TrajectoryDataset {
    pub fn new(users: Vec<UserTrajectory>, timestamps: usize, cells: usize) -> Result<Self> {
        for user in &users {
            if user.cells.len() != timestamps {
                return Err(Error::DimensionMismatch { expected: timestamps, found: user.cells.len() });
            }
            if let Some(&bad) = user.cells.iter().find(|&&c| c >= cells) {
                return Err(Error::DimensionMismatch { expected: cells, found: bad });
            }
        }
        Ok(TrajectoryDataset { users, timestamps, cells })
    }

    pub fn users(&self) -> &[UserTrajectory] {
        &self.users
    }

    /// Number of users `N`.
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn timestamps(&self) -> usize {
        self.timestamps
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Keeps only the first `points` timestamps.
    pub fn truncate(&self, points: usize) -> Self {
        let points = points.min(self.timestamps);
        TrajectoryDataset {
            users: self
                .users
                .iter()
                .map(|u| UserTrajectory { user_id: u.user_id.clone(), cells: u.cells[..points].to_vec() })
                .collect(),
            timestamps: points,
            cells: self.cells,
        }
    }

    /// Histogram series counting users per cell at each timestamp.
    pub fn aggregate(&self, interval_s: u64) -> Result<CountSeries> {
        if self.timestamps == 0 {
            return Err(Error::EmptySeries);
        }
        let mut rows = vec![vec![0u64; self.cells]; self.timestamps];
        for user in &self.users {
            for (t, &cell) in user.cells.iter().enumerate() {
                rows[t][cell] += 1;
            }
        }
        CountSeries::from_rows(rows, interval_s)
    }
}

/// Bookkeeping produced alongside an aggregation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AggregationStats {
    pub records: usize,
    pub out_of_bounds: usize,
    pub beyond_horizon: usize,
    pub users_seen: usize,
    /// Users present in the histograms but missing from the trajectory dataset
    /// because their first fix falls after the first bucket.
    pub partially_covered: usize,
}

/// Output of [`aggregate`].
#[derive(Debug, Clone)]
pub struct Aggregation {
    pub series: CountSeries,
    pub dataset: TrajectoryDataset,
    pub stats: AggregationStats,
}

/// Buckets raw fixes into `floor(horizon / interval)` timestamps starting at the
/// earliest record.
///
/// Each user contributes the cell of their latest in-grid fix in a bucket, carried
/// forward through empty buckets. A user appears in the histograms from their first
/// covered bucket onwards; only users covered from bucket 0 enter the trajectory
/// dataset.
pub fn aggregate(
    records: &[TrajectoryRecord],
    grid: &GridSpec,
    interval_s: u64,
    horizon_s: u64,
) -> Result<Aggregation> {
    grid.validate()?;
    if interval_s == 0 {
        return Err(Error::param("interval", "must be positive"));
    }
    if horizon_s < interval_s {
        return Err(Error::param("horizon", "must be at least one interval"));
    }
    if records.is_empty() {
        return Err(Error::EmptySeries);
    }
    let buckets = (horizon_s / interval_s) as usize;
    let start = records.iter().map(|r| r.time).min().unwrap_or(0);
    let mut stats = AggregationStats { records: records.len(), ..Default::default() };

    // user -> (bucket -> (time, cell)) keeping the latest fix per bucket
    let mut latest: BTreeMap<&str, BTreeMap<usize, (u64, usize)>> = BTreeMap::new();
    for record in records {
        let placement = grid.map_to_cell(record.lon, record.lat)?;
        let bucket = ((record.time - start) / interval_s) as usize;
        let per_user = latest.entry(record.user_id.as_str()).or_default();
        if bucket >= buckets {
            stats.beyond_horizon += 1;
            continue;
        }
        let Placement::Inside(cell) = placement else {
            stats.out_of_bounds += 1;
            continue;
        };
        match per_user.get(&bucket) {
            Some(&(t, _)) if t > record.time => {}
            _ => {
                per_user.insert(bucket, (record.time, cell));
            }
        }
    }
    stats.users_seen = latest.len();

    let mut rows = vec![vec![0u64; grid.cells()]; buckets];
    let mut users = Vec::new();
    let mut any_covered = false;
    for (user_id, fixes) in &latest {
        let Some((&first, _)) = fixes.iter().next() else { continue };
        any_covered = true;
        let mut cells = Vec::with_capacity(buckets);
        let mut current = fixes[&first].1;
        for (bucket, row) in rows.iter_mut().enumerate().skip(first) {
            if let Some(&(_, cell)) = fixes.get(&bucket) {
                current = cell;
            }
            row[current] += 1;
            cells.push(current);
        }
        if first == 0 {
            users.push(UserTrajectory { user_id: user_id.to_string(), cells });
        } else {
            stats.partially_covered += 1;
        }
    }
    if !any_covered {
        return Err(Error::NoCoveredUsers);
    }
    Ok(Aggregation {
        series: CountSeries::from_rows(rows, interval_s)?,
        dataset: TrajectoryDataset::new(users, buckets, grid.cells())?,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn record(user: &str, time: u64, grid: &GridSpec, east: f64, north: f64) -> TrajectoryRecord {
        let (lon, lat) = grid.unproject(east, north);
        TrajectoryRecord { user_id: user.to_string(), time, lon, lat }
    }

    #[test]
    fn origin_maps_to_cell_zero() {
        let grid = GridSpec::new(116.3, 39.9, 250.0, 3, 3).unwrap();
        assert_eq!(grid.map_to_cell(116.3, 39.9).unwrap(), Placement::Inside(0));
    }

    #[test]
    fn offset_maps_by_projection() {
        let grid = GridSpec::new(116.3, 39.9, 500.0, 4, 4).unwrap();
        let (lon, lat) = grid.unproject(1.5 * 500.0, 0.5 * 500.0);
        assert_eq!(grid.map_to_cell(lon, lat).unwrap(), Placement::Inside(1));
    }

    #[test]
    fn west_of_origin_is_out_of_bounds() {
        let grid = GridSpec::new(116.3, 39.9, 500.0, 4, 4).unwrap();
        let (lon, lat) = grid.unproject(-10_000.0, 100.0);
        assert_eq!(grid.map_to_cell(lon, lat).unwrap(), Placement::OutOfBounds);
    }

    #[test]
    fn non_finite_coordinates_are_rejected() {
        let grid = GridSpec::square(2);
        assert!(matches!(grid.map_to_cell(f64::NAN, 0.0), Err(Error::RejectedRecord(_))));
    }

    #[test]
    fn invalid_grids() {
        assert!(GridSpec::new(0.0, 0.0, 0.0, 1, 1).is_err());
        assert!(GridSpec::new(0.0, 0.0, 10.0, 0, 1).is_err());
    }

    #[test]
    fn centroids_map_back() {
        let grid = GridSpec::new(116.3, 39.9, 500.0, 7, 5).unwrap();
        for cell in 0..grid.cells() {
            let (lon, lat) = grid.centroid(cell);
            assert_eq!(grid.map_to_cell(lon, lat).unwrap(), Placement::Inside(cell));
        }
    }

    #[test]
    fn singleton_aggregation() {
        let grid = GridSpec::square(1);
        let out = aggregate(&[record("a", 100, &grid, 10.0, 10.0)], &grid, 60, 60).unwrap();
        assert_eq!(out.series.histograms()[0].counts(), &[1]);
        assert_eq!(out.dataset.len(), 1);
        assert_eq!(out.dataset.users()[0].cells, vec![0]);
    }

    #[test]
    fn static_users_on_two_by_two() {
        let grid = GridSpec::square(2);
        let records = [
            record("a", 0, &grid, 100.0, 100.0),
            record("b", 0, &grid, 700.0, 700.0),
            record("a", 70, &grid, 100.0, 100.0),
            record("b", 70, &grid, 700.0, 700.0),
        ];
        let out = aggregate(&records, &grid, 60, 120).unwrap();
        for h in out.series.histograms() {
            assert_eq!(h.counts(), &[1, 0, 0, 1]);
        }
    }

    #[test]
    fn late_user_is_excluded_from_dataset_but_counted() {
        let grid = GridSpec::square(2);
        let records = [record("a", 0, &grid, 100.0, 100.0), record("late", 65, &grid, 700.0, 100.0)];
        let out = aggregate(&records, &grid, 60, 180).unwrap();
        assert_eq!(out.dataset.len(), 1);
        assert_eq!(out.stats.partially_covered, 1);
        let totals: Vec<f64> = out.series.histograms().iter().map(|h| h.total()).collect();
        assert_eq!(totals, vec![1.0, 2.0, 2.0]);
    }

    #[test]
    fn latest_fix_wins_and_gaps_are_forward_filled() {
        let grid = GridSpec::square(2);
        let records = [
            record("a", 0, &grid, 100.0, 100.0),
            record("a", 50, &grid, 700.0, 100.0),
            record("a", 10, &grid, 100.0, 700.0),
        ];
        let out = aggregate(&records, &grid, 60, 180).unwrap();
        assert_eq!(out.dataset.users()[0].cells, vec![1, 1, 1]);
    }

    #[test]
    fn aggregation_errors() {
        let grid = GridSpec::square(2);
        assert_eq!(aggregate(&[], &grid, 60, 60).unwrap_err(), Error::EmptySeries);
        let far = [record("a", 0, &grid, -5000.0, 0.0)];
        assert_eq!(aggregate(&far, &grid, 60, 60).unwrap_err(), Error::NoCoveredUsers);
    }

    #[test]
    fn l1_examples() {
        assert_eq!(l1_distance(&[1u64, 2, 3], &[1u64, 2, 3]).unwrap(), 0.0);
        assert_eq!(l1_distance(&[1u64, 2, 3], &[3u64, 2, 1]).unwrap(), 4.0);
        // one user moves from cell 0 to cell 2
        assert_eq!(l1_distance(&[2u64, 1, 0], &[1u64, 1, 1]).unwrap(), 2.0);
        assert!(l1_distance(&[1u64], &[1u64, 2]).is_err());
    }

    #[test]
    fn adjacent_distance_examples() {
        let constant = CountSeries::from_rows(vec![vec![3, 1]; 4], 60).unwrap();
        let adj = constant.adjacent_distances().unwrap();
        assert_eq!(adj.distances, vec![0.0; 3]);
        assert_eq!(adj.mean, 0.0);

        let series = CountSeries::from_rows(vec![vec![0, 2], vec![2, 0], vec![2, 0]], 60).unwrap();
        let adj = series.adjacent_distances().unwrap();
        assert_eq!(adj.distances, vec![4.0, 0.0]);
        assert_eq!(adj.mean, 2.0);

        let single = CountSeries::from_rows(vec![vec![1]], 60).unwrap();
        assert!(single.adjacent_distances().is_err());
    }

    #[test]
    fn noisy_conversion_rejects_fractions() {
        let noisy = NoisySeries::from_rows(vec![vec![1.0, 2.5]], 60).unwrap();
        assert!(matches!(CountSeries::try_from_noisy(&noisy), Err(Error::NonIntegral { .. })));
        let ok = NoisySeries::from_rows(vec![vec![1.0, 2.0]], 60).unwrap();
        assert_eq!(CountSeries::try_from_noisy(&ok).unwrap().get(0).counts(), &[1, 2]);
    }
}
