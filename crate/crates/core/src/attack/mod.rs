//! Trajectory-recovery attack on published histograms.
//!
//! Histogram counts are expanded into per-user location slots, then partial
//! trajectories are extended one timestamp at a time by a minimum-cost
//! assignment of trajectories to the next timestamp's slots. The cost of moving
//! trajectory `k` to cell `s` is
//!
//! ```text
//! d(k, s)² / (2σ²) − ln(1 + λ · freq_k(s))
//! ```
//!
//! with `d` the grid distance from the trajectory's current cell and `freq_k`
//! the share of the prefix spent in `s`. Inside the night window `σ` is halved
//! and `λ` doubled.

mod assignment;

use alloc::vec;
use alloc::vec::Vec;

pub use assignment::{solve_assignment, solve_rectangular, solve_transport, Assignment};

use crate::data::{CountSeries, TrajectoryDataset};
use crate::{Error, Result};

/// Attack cost model.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    /// Distance kernel width, in cells.
    pub sigma: f64,
    /// Regularity weight.
    pub lambda: f64,
    /// Timestamps treated as low-mobility.
    pub night: Vec<usize>,
    /// Columns of the grid the cell indices refer to.
    pub grid_cols: usize,
}

impl AttackConfig {
    pub fn new(sigma: f64, lambda: f64, grid_cols: usize) -> Result<Self> {
        let config = AttackConfig { sigma, lambda, night: Vec::new(), grid_cols };
        config.validate()?;
        Ok(config)
    }

    pub fn with_night(mut self, night: impl IntoIterator<Item = usize>) -> Self {
        self.night = night.into_iter().collect();
        self.night.sort_unstable();
        self.night.dedup();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::param("sigma", "must be positive"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::param("lambda", "must be non-negative"));
        }
        if self.grid_cols == 0 {
            return Err(Error::param("grid_cols", "must be positive"));
        }
        Ok(())
    }

    pub fn is_night(&self, t: usize) -> bool {
        self.night.binary_search(&t).is_ok()
    }

    /// `(σ, λ)` in effect when extending into timestamp `t`.
    pub fn kernel_at(&self, t: usize) -> (f64, f64) {
        if self.is_night(t) {
            (self.sigma / 2.0, self.lambda * 2.0)
        } else {
            (self.sigma, self.lambda)
        }
    }

    fn distance(&self, a: usize, b: usize) -> f64 {
        let (ra, ca) = (a / self.grid_cols, a % self.grid_cols);
        let (rb, cb) = (b / self.grid_cols, b % self.grid_cols);
        let dr = ra as f64 - rb as f64;
        let dc = ca as f64 - cb as f64;
        libm::sqrt(dr * dr + dc * dc)
    }

    /// Cost of appending `cell` at timestamp `t` to `prefix`.
    pub fn cost(&self, prefix: &[usize], cell: usize, t: usize) -> f64 {
        let (sigma, lambda) = self.kernel_at(t);
        let head = *prefix.last().expect("prefixes are non-empty");
        let d = self.distance(head, cell);
        let visits = prefix.iter().filter(|&&c| c == cell).count();
        let freq = visits as f64 / prefix.len() as f64;
        d * d / (2.0 * sigma * sigma) - libm::log1p(lambda * freq)
    }
}

/// One location slot per counted user, per timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotExpansion {
    pub slots: Vec<Vec<usize>>,
}

impl SlotExpansion {
    pub fn counts(&self) -> Vec<usize> {
        self.slots.iter().map(Vec::len).collect()
    }
}

/// Expands each histogram into a sorted list of cell slots.
pub fn expand_slots(series: &CountSeries) -> SlotExpansion {
    let slots = series
        .histograms()
        .iter()
        .map(|h| h.iter().enumerate().flat_map(|(m, &u)| core::iter::repeat_n(m, u as usize)).collect())
        .collect();
    SlotExpansion { slots }
}

/// `K × K'` matrix of [`AttackConfig::cost`] for extending `prefixes` into the
/// `slots` of timestamp `t`.
pub fn build_cost_matrix(
    prefixes: &[Vec<usize>],
    slots: &[usize],
    config: &AttackConfig,
    t: usize,
) -> Result<Vec<Vec<f64>>> {
    if prefixes.is_empty() || prefixes.iter().any(Vec::is_empty) {
        return Err(Error::EmptyPrefixes);
    }
    config.validate()?;
    Ok(prefixes.iter().map(|p| slots.iter().map(|&s| config.cost(p, s, t)).collect()).collect())
}

/// Trajectories linked by the attack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveredTrajectorySet {
    pub trajectories: Vec<Vec<usize>>,
    /// Timestamp at which the slots ran out, if they did.
    pub truncated_at: Option<usize>,
}

impl RecoveredTrajectorySet {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Length of every trajectory.
    pub fn timestamps(&self) -> usize {
        self.trajectories.first().map_or(0, Vec::len)
    }
}

/// Links the slots of `series` into trajectories.
///
/// Slots that share a cell are interchangeable, so each step solves a
/// transport problem over distinct cells with capacity equal to the count,
/// which has the same optimum as the slot-level assignment. When there are
/// fewer slots than live trajectories the surplus trajectories end there.
pub fn recover(series: &CountSeries, config: &AttackConfig) -> Result<RecoveredTrajectorySet> {
    config.validate()?;
    if series.len() < 2 {
        return Err(Error::TooFewTimestamps { needed: 2, found: series.len() });
    }
    let first = series.get(0);
    let mut trajectories: Vec<Vec<usize>> =
        first.iter().enumerate().flat_map(|(m, &u)| core::iter::repeat_n(m, u as usize)).map(|m| vec![m]).collect();
    if trajectories.is_empty() {
        return Ok(RecoveredTrajectorySet { trajectories, truncated_at: Some(0) });
    }

    for t in 1..series.len() {
        let h = series.get(t);
        let cells: Vec<usize> = (0..h.len()).filter(|&m| h[m] > 0).collect();
        let mut capacity: Vec<usize> = cells.iter().map(|&m| h[m] as usize).collect();
        let slots: usize = capacity.iter().sum();
        if slots == 0 {
            trajectories.iter_mut().for_each(|p| p.truncate(t));
            return Ok(RecoveredTrajectorySet { trajectories, truncated_at: Some(t) });
        }
        let surplus = trajectories.len().saturating_sub(slots);
        let mut cost: Vec<Vec<f64>> =
            trajectories.iter().map(|p| cells.iter().map(|&m| config.cost(p, m, t)).collect()).collect();
        if surplus > 0 {
            // every trajectory pays the same to end, so the choice is left to the real costs
            capacity.push(surplus);
            cost.iter_mut().for_each(|row| row.push(0.0));
        }
        let assignment = solve_transport(&cost, &capacity)?;
        let mut next = Vec::with_capacity(trajectories.len() - surplus);
        for (mut p, &j) in trajectories.into_iter().zip(&assignment.row_to_col) {
            if j < cells.len() {
                p.push(cells[j]);
                next.push(p);
            }
        }
        trajectories = next;
    }
    Ok(RecoveredTrajectorySet { trajectories, truncated_at: None })
}

/// Attack success against the true trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub accuracy: f64,
    /// Share of recovered trajectories correct at each timestamp.
    pub per_timestamp: Vec<f64>,
    /// True user index matched to each recovered trajectory, if any.
    pub matched: Vec<Option<usize>>,
}

/// Matches recovered trajectories to users by maximum overlap and scores the
/// share of correct `(trajectory, timestamp)` cells over `K·S`.
///
/// Recovered trajectories left unmatched (more of them than users) score zero,
/// as do timestamps after `truncated_at`.
pub fn recovery_accuracy(recovered: &RecoveredTrajectorySet, truth: &TrajectoryDataset) -> Result<AccuracyReport> {
    let s = truth.timestamps();
    if recovered.is_empty() {
        return Ok(AccuracyReport { accuracy: 0.0, per_timestamp: vec![0.0; s], matched: Vec::new() });
    }
    let linked = recovered.truncated_at.unwrap_or(s);
    if let Some(bad) = recovered.trajectories.iter().find(|p| p.len() != linked || linked > s) {
        return Err(Error::DimensionMismatch { expected: linked.min(s), found: bad.len() });
    }
    let k = recovered.len();
    if truth.is_empty() {
        return Ok(AccuracyReport { accuracy: 0.0, per_timestamp: vec![0.0; s], matched: vec![None; k] });
    }

    // identical true trajectories are interchangeable columns
    let mut distinct: Vec<(&[usize], Vec<usize>)> = Vec::new();
    let mut order: Vec<usize> = (0..truth.len()).collect();
    let users = truth.users();
    order.sort_by(|&a, &b| users[a].cells.cmp(&users[b].cells));
    for u in order {
        let cells = users[u].cells.as_slice();
        match distinct.last_mut() {
            Some((last, members)) if *last == cells => members.push(u),
            _ => distinct.push((cells, vec![u])),
        }
    }

    // zip stops at the recovered length
    let overlap = |p: &[usize], q: &[usize]| p.iter().zip(q).filter(|(a, b)| a == b).count();
    let mut cost: Vec<Vec<f64>> = recovered
        .trajectories
        .iter()
        .map(|p| distinct.iter().map(|(q, _)| -(overlap(p, q) as f64)).collect())
        .collect();
    let mut capacity: Vec<usize> = distinct.iter().map(|(_, m)| m.len()).collect();
    let surplus = k.saturating_sub(truth.len());
    if surplus > 0 {
        capacity.push(surplus);
        cost.iter_mut().for_each(|row| row.push(0.0));
    }
    let assignment = solve_transport(&cost, &capacity)?;

    let mut next_member = vec![0usize; distinct.len()];
    let mut matched = Vec::with_capacity(k);
    let mut correct = vec![0usize; s];
    for (p, &j) in recovered.trajectories.iter().zip(&assignment.row_to_col) {
        if j >= distinct.len() {
            matched.push(None);
            continue;
        }
        let (q, members) = &distinct[j];
        matched.push(Some(members[next_member[j]]));
        next_member[j] += 1;
        for (t, (a, b)) in p.iter().zip(q.iter()).enumerate() {
            if a == b {
                correct[t] += 1;
            }
        }
    }
    let per_timestamp: Vec<f64> = correct.iter().map(|&c| c as f64 / k as f64).collect();
    let accuracy = correct.iter().sum::<usize>() as f64 / (k * s) as f64;
    Ok(AccuracyReport { accuracy, per_timestamp, matched })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::UserTrajectory;
    use alloc::string::ToString;

    fn dataset(rows: &[&[usize]], cells: usize) -> TrajectoryDataset {
        let users = rows
            .iter()
            .enumerate()
            .map(|(i, r)| UserTrajectory { user_id: i.to_string(), cells: r.to_vec() })
            .collect();
        TrajectoryDataset::new(users, rows[0].len(), cells).unwrap()
    }

    #[test]
    fn slots_follow_counts() {
        let series = CountSeries::from_rows(vec![vec![2, 0, 1], vec![0, 0, 0]], 60).unwrap();
        let slots = expand_slots(&series);
        assert_eq!(slots.slots[0], vec![0, 0, 2]);
        assert!(slots.slots[1].is_empty());
    }

    #[test]
    fn kernel_examples() {
        let config = AttackConfig::new(1.0, 0.0, 10).unwrap();
        let m = build_cost_matrix(&[vec![0]], &[0, 1, 2], &config, 1).unwrap();
        assert_eq!(m[0][0], 0.0);
        assert!((m[0][2] - m[0][1] - 1.5).abs() < 1e-12);

        let config = AttackConfig::new(1.0, 50.0, 10).unwrap();
        // cell 2 visited 5 times, cell 20 is equally far from the head at 11 but unvisited
        let prefix = vec![2, 2, 2, 2, 2, 11];
        assert!(config.cost(&prefix, 2, 1) < config.cost(&prefix, 20, 1));
    }

    #[test]
    fn night_reweights() {
        let config = AttackConfig::new(2.0, 1.0, 10).unwrap().with_night([3, 4]);
        assert_eq!(config.kernel_at(3), (1.0, 2.0));
        assert_eq!(config.kernel_at(5), (2.0, 1.0));
    }

    #[test]
    fn empty_prefix_is_rejected() {
        let config = AttackConfig::new(1.0, 0.0, 10).unwrap();
        assert!(matches!(build_cost_matrix(&[], &[0], &config, 1), Err(Error::EmptyPrefixes)));
        assert!(AttackConfig::new(0.0, 0.0, 10).is_err());
        assert!(AttackConfig::new(1.0, -1.0, 10).is_err());
    }

    #[test]
    fn static_users_are_recovered() {
        let truth = dataset(&[&[1; 5], &[7; 5]], 9);
        let series = truth.aggregate(60).unwrap();
        let config = AttackConfig::new(1.0, 1.0, 3).unwrap();
        let rec = recover(&series, &config).unwrap();
        assert_eq!(recovery_accuracy(&rec, &truth).unwrap().accuracy, 1.0);
    }

    #[test]
    fn crossing_users_are_mislinked() {
        // two users swap between far corners every step; continuity links them wrongly
        let truth = dataset(&[&[0, 99, 0, 99], &[99, 0, 99, 0]], 100);
        let series = truth.aggregate(60).unwrap();
        let config = AttackConfig::new(0.5, 0.0, 10).unwrap();
        let rec = recover(&series, &config).unwrap();
        let report = recovery_accuracy(&rec, &truth).unwrap();
        assert!(report.accuracy < 1.0);
        assert_eq!(report.accuracy, 0.5);
    }

    #[test]
    fn accuracy_arithmetic() {
        let truth = dataset(&[&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]], 10);
        let rec = RecoveredTrajectorySet { trajectories: vec![vec![0, 1, 2, 3, 4, 5, 6, 0, 0, 0]], truncated_at: None };
        assert!((recovery_accuracy(&rec, &truth).unwrap().accuracy - 0.7).abs() < 1e-12);

        // the eight unlinked timestamps count as misses
        let short = RecoveredTrajectorySet { trajectories: vec![vec![0, 1]], truncated_at: Some(2) };
        let report = recovery_accuracy(&short, &truth).unwrap();
        assert!((report.accuracy - 0.2).abs() < 1e-12);
        assert_eq!(report.per_timestamp[1..3], [1.0, 0.0]);

        let ragged = RecoveredTrajectorySet { trajectories: vec![vec![0, 1]], truncated_at: None };
        assert!(recovery_accuracy(&ragged, &truth).is_err());
    }

    #[test]
    fn accuracy_is_label_invariant() {
        let truth = dataset(&[&[0, 1, 2], &[3, 3, 3], &[5, 4, 3]], 6);
        let rec = RecoveredTrajectorySet {
            trajectories: vec![vec![5, 4, 3], vec![0, 1, 2], vec![3, 3, 3]],
            truncated_at: None,
        };
        let report = recovery_accuracy(&rec, &truth).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.matched, vec![Some(2), Some(0), Some(1)]);
    }

    #[test]
    fn shrinking_counts_end_trajectories() {
        let series = CountSeries::from_rows(vec![vec![1, 1, 0], vec![1, 0, 0], vec![0, 0, 0]], 60).unwrap();
        let config = AttackConfig::new(1.0, 0.0, 3).unwrap();
        let rec = recover(&series, &config).unwrap();
        assert_eq!(rec.truncated_at, Some(2));
        assert_eq!(rec.trajectories, vec![vec![0, 0]]);
    }
}
