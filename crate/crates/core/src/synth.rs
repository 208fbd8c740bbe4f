//! Synthetic daily mobility with a quiet night and an active day.
//!
//! Every user owns a home cell drawn from a mixture of Gaussian population
//! hotspots and `k - 1` further stay cells within a commute radius of home.
//! Outside the day window the user is at home. Inside it the user visits
//! home, then each stay in turn, then home again, moving at `k` distinct
//! transition times drawn uniformly from the window. A transition at `τ` means
//! the cell differs between `τ` and `τ + 1`.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{CountSeries, GridSpec, TrajectoryDataset, TrajectoryRecord, UserTrajectory};
use crate::dp::RandomSource;
use crate::schemes::DivisionPoints;
use crate::{Error, Result};

/// `P(k stays)` for `k = 1..=5`.
pub const DEFAULT_STAY_DISTRIBUTION: [f64; 5] = [0.30, 0.45, 0.14, 0.087, 0.023];

pub const DEFAULT_COMMUTE_RADIUS: f64 = 10.0;

/// Side of the square grid used for the 1000-user desk-scale population.
pub const DEFAULT_GRID_SIDE: usize = 30;

/// A Gaussian population centre on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hotspot {
    pub row: f64,
    pub col: f64,
    /// Standard deviation in cells.
    pub spread: f64,
    pub weight: f64,
}

/// Three centres of decreasing weight spread over the grid.
pub fn default_hotspots(grid: &GridSpec) -> Vec<Hotspot> {
    let (rows, cols) = (grid.rows as f64, grid.cols as f64);
    let spread = rows.min(cols) / 8.0;
    vec![
        Hotspot { row: 0.35 * rows, col: 0.35 * cols, spread, weight: 0.5 },
        Hotspot { row: 0.65 * rows, col: 0.70 * cols, spread, weight: 0.3 },
        Hotspot { row: 0.25 * rows, col: 0.75 * cols, spread, weight: 0.2 },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_users: usize,
    pub grid: GridSpec,
    pub timestamps: usize,
    /// Inclusive, zero-based.
    pub day_window: DivisionPoints,
    /// `stay_distribution[k - 1] = P(k stays)`.
    pub stay_distribution: Vec<f64>,
    pub hotspots: Vec<Hotspot>,
    pub commute_radius: f64,
    pub interval_s: u64,
}

impl GeneratorConfig {
    /// 19 hourly timestamps with the day between 7 and 16.
    pub fn new(n_users: usize, grid: GridSpec) -> Self {
        let hotspots = default_hotspots(&grid);
        GeneratorConfig {
            n_users,
            grid,
            timestamps: 19,
            day_window: DivisionPoints::new(7, 16),
            stay_distribution: DEFAULT_STAY_DISTRIBUTION.to_vec(),
            hotspots,
            commute_radius: DEFAULT_COMMUTE_RADIUS,
            interval_s: 3600,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.timestamps == 0 {
            return Err(Error::param("timestamps", "must be positive"));
        }
        if self.interval_s == 0 {
            return Err(Error::param("interval_s", "must be positive"));
        }
        let DivisionPoints { start, end } = self.day_window;
        if start > end || end >= self.timestamps {
            return Err(Error::WindowOutOfRange { start, end, len: self.timestamps });
        }
        let p = &self.stay_distribution;
        if p.is_empty() || p.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
            return Err(Error::InvalidDistribution("probabilities must be finite and non-negative".to_string()));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {sum}")));
        }
        if self.hotspots.is_empty()
            || self
                .hotspots
                .iter()
                .any(|h| !(h.weight.is_finite() && h.weight > 0.0 && h.spread.is_finite() && h.spread >= 0.0))
        {
            return Err(Error::InvalidDistribution("hotspots need positive weights and finite spreads".to_string()));
        }
        if !(self.commute_radius.is_finite() && self.commute_radius >= 0.0) {
            return Err(Error::param("commute_radius", "must be non-negative"));
        }
        Ok(())
    }
}

/// Mean and `P(k <= 4)` of a stay-count distribution.
pub fn stay_moments(distribution: &[f64]) -> (f64, f64) {
    let mean = distribution.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
    let at_most_four = distribution.iter().take(4).sum();
    (mean, at_most_four)
}

/// Generated ground truth and its aggregate.
#[derive(Debug, Clone)]
pub struct SyntheticDay {
    pub dataset: TrajectoryDataset,
    pub series: CountSeries,
    /// Sampled stay count of each user.
    pub stays: Vec<usize>,
}

fn sample_weighted(weights: impl Iterator<Item = f64> + Clone, rng: &mut RandomSource) -> usize {
    let total: f64 = weights.clone().sum();
    let mut u = rng.unit() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
            if u < w {
                return i;
            }
        }
        u -= w;
    }
    last
}

fn standard_normal(rng: &mut RandomSource) -> f64 {
    // Box-Muller; 1 - unit() lies in (0, 1]
    let r = libm::sqrt(-2.0 * libm::log(1.0 - rng.unit()));
    r * libm::cos(2.0 * core::f64::consts::PI * rng.unit())
}

fn clamp_cell(grid: &GridSpec, row: f64, col: f64) -> usize {
    let r = libm::round(row).clamp(0.0, (grid.rows - 1) as f64) as usize;
    let c = libm::round(col).clamp(0.0, (grid.cols - 1) as f64) as usize;
    r * grid.cols + c
}

fn sample_home(config: &GeneratorConfig, rng: &mut RandomSource) -> usize {
    let h = config.hotspots[sample_weighted(config.hotspots.iter().map(|h| h.weight), rng)];
    let row = h.row + h.spread * standard_normal(rng);
    let col = h.col + h.spread * standard_normal(rng);
    clamp_cell(&config.grid, row, col)
}

fn sample_stay(config: &GeneratorConfig, home: usize, taken: &[usize], rng: &mut RandomSource) -> usize {
    let (hr, hc) = config.grid.row_col(home);
    let radius = config.commute_radius;
    let mut fallback = home;
    for _ in 0..64 {
        let dr = (2.0 * rng.unit() - 1.0) * radius;
        let dc = (2.0 * rng.unit() - 1.0) * radius;
        if dr * dr + dc * dc > radius * radius {
            continue;
        }
        let cell = clamp_cell(&config.grid, hr as f64 + dr, hc as f64 + dc);
        if cell == home {
            continue;
        }
        if !taken.contains(&cell) {
            return cell;
        }
        fallback = cell;
    }
    fallback
}

/// `n` distinct values from `lo..hi`, ascending.
fn sample_distinct(lo: usize, hi: usize, n: usize, rng: &mut RandomSource) -> Vec<usize> {
    let mut pool: Vec<usize> = (lo..hi).collect();
    for i in 0..n {
        let j = i + rng.index(pool.len() - i);
        pool.swap(i, j);
    }
    pool.truncate(n);
    pool.sort_unstable();
    pool
}

/// Homes and candidate stay places of a fixed set of users.
///
/// Each day resamples stay counts and transition times; a user with `k` stays
/// visits the first `k - 1` of their places.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    pub homes: Vec<usize>,
    pub places: Vec<Vec<usize>>,
}

impl Population {
    pub fn sample(config: &GeneratorConfig, rng: &mut RandomSource) -> Result<Self> {
        config.validate()?;
        let extra = config.stay_distribution.len() - 1;
        let mut homes = Vec::with_capacity(config.n_users);
        let mut places = Vec::with_capacity(config.n_users);
        for _ in 0..config.n_users {
            let home = sample_home(config, rng);
            let mut mine: Vec<usize> = Vec::with_capacity(extra);
            for _ in 0..extra {
                let cell = sample_stay(config, home, &mine, rng);
                mine.push(cell);
            }
            homes.push(home);
            places.push(mine);
        }
        Ok(Population { homes, places })
    }

    pub fn len(&self) -> usize {
        self.homes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.homes.is_empty()
    }

    /// One day of movement under `config`, which must share the population's grid.
    pub fn day(&self, config: &GeneratorConfig, rng: &mut RandomSource) -> Result<SyntheticDay> {
        config.validate()?;
        if self.homes.iter().any(|&h| h >= config.grid.cells()) {
            return Err(Error::param("grid", "does not contain the population"));
        }
        let DivisionPoints { start, end } = config.day_window;
        // a round trip through j places needs j + 1 transitions inside the window
        let slots = end - start;
        let mut users = Vec::with_capacity(self.len());
        let mut stays = Vec::with_capacity(self.len());
        for (u, (&home, places)) in self.homes.iter().zip(&self.places).enumerate() {
            let k = sample_weighted(config.stay_distribution.iter().copied(), rng) + 1;
            let mut cells = vec![home; config.timestamps];
            let visits = (k - 1).min(places.len()).min(slots.saturating_sub(1));
            if visits > 0 {
                let moves = sample_distinct(start, end, visits + 1, rng);
                for (place, w) in places.iter().zip(moves.windows(2)) {
                    cells[w[0] + 1..=w[1]].fill(*place);
                }
            }
            users.push(UserTrajectory { user_id: format!("u{u}"), cells });
            stays.push(k);
        }
        let dataset = TrajectoryDataset::new(users, config.timestamps, config.grid.cells())?;
        let series = dataset.aggregate(config.interval_s)?;
        Ok(SyntheticDay { dataset, series, stays })
    }
}

/// Samples a population and one day of it.
pub fn generate(config: &GeneratorConfig, rng: &mut RandomSource) -> Result<SyntheticDay> {
    Population::sample(config, rng)?.day(config, rng)
}

/// `days` consecutive days of one population.
pub fn generate_days(config: &GeneratorConfig, days: usize, rng: &mut RandomSource) -> Result<Vec<SyntheticDay>> {
    let population = Population::sample(config, rng)?;
    (0..days).map(|_| population.day(config, rng)).collect()
}

/// One fix per user and timestamp at the cell centroid, the first at `start`.
pub fn to_records(dataset: &TrajectoryDataset, grid: &GridSpec, interval_s: u64, start: u64) -> Vec<TrajectoryRecord> {
    let mut records = Vec::with_capacity(dataset.len() * dataset.timestamps());
    for user in dataset.users() {
        for (t, &cell) in user.cells.iter().enumerate() {
            let (lon, lat) = grid.centroid(cell);
            records.push(TrajectoryRecord {
                user_id: user.user_id.clone(),
                time: start + t as u64 * interval_s,
                lon,
                lat,
            });
        }
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(n: usize) -> GeneratorConfig {
        GeneratorConfig::new(n, GridSpec::square(30))
    }

    #[test]
    fn default_moments() {
        let (mean, p4) = stay_moments(&DEFAULT_STAY_DISTRIBUTION);
        assert!((mean - 2.083).abs() < 1e-9);
        assert!((p4 - 0.977).abs() < 1e-9);
    }

    #[test]
    fn single_stay_is_static() {
        let mut c = config(200);
        c.stay_distribution = vec![1.0];
        let day = generate(&c, &mut RandomSource::new(3, 0)).unwrap();
        assert!(day.series.adjacent_distances().unwrap().distances.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn night_is_still() {
        let c = config(500);
        let day = generate(&c, &mut RandomSource::new(4, 0)).unwrap();
        for user in day.dataset.users() {
            let home = user.cells[0];
            assert!(user.cells[..=7].iter().all(|&x| x == home));
            assert!(user.cells[16..].iter().all(|&x| x == home));
        }
        let d = day.series.adjacent_distances().unwrap().distances;
        let inside: f64 = d[7..16].iter().sum::<f64>() / 9.0;
        assert!(inside > 0.0);
        assert!(d[..7].iter().chain(&d[16..]).all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic() {
        let c = config(100);
        let a = generate(&c, &mut RandomSource::new(9, 0)).unwrap();
        let b = generate(&c, &mut RandomSource::new(9, 0)).unwrap();
        assert_eq!(a.dataset, b.dataset);
    }

    #[test]
    fn invalid_configs() {
        let mut c = config(10);
        c.stay_distribution = vec![0.5, 0.4];
        assert!(matches!(generate(&c, &mut RandomSource::new(1, 0)), Err(Error::InvalidDistribution(_))));
        let mut c = config(10);
        c.day_window = DivisionPoints::new(5, 19);
        assert!(generate(&c, &mut RandomSource::new(1, 0)).is_err());
    }
}
