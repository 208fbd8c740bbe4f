//! Differential-privacy primitives: seeded randomness, Laplace noise, the
//! exponential mechanism and budget accounting.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Deterministic random stream identified by `(seed, stream)`.
///
/// Streams with the same seed but different ids are independent ChaCha
/// keystreams, so parallel runs can each own one.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomSource { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A fresh source on another stream of the same seed.
    pub fn fork(&self, stream: u64) -> Self {
        RandomSource::new(self.seed, stream)
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(-1/2, 1/2)`.
    pub fn centered(&mut self) -> f64 {
        loop {
            let u = self.unit();
            if u > 0.0 {
                return u - 0.5;
            }
        }
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Lemire's nearly-divisionless method on 64-bit draws
        let n = n as u64;
        loop {
            let m = (self.rng.next_u64() as u128) * (n as u128);
            let low = m as u64;
            if low >= n.wrapping_neg() % n {
                return (m >> 64) as usize;
            }
        }
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Scale `b` of a zero-centred Laplace distribution.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LaplaceScale(f64);

impl LaplaceScale {
    pub fn new(b: f64) -> Result<Self> {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::param("scale", format!("must be positive and finite, got {b}")));
        }
        Ok(LaplaceScale(b))
    }

    /// `Δf / ε`.
    pub fn calibrated(sensitivity: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::param("epsilon", format!("must be positive, got {epsilon}")));
        }
        Self::new(sensitivity / epsilon)
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Density `exp(-|x| / b) / 2b`.
    pub fn density(self, x: f64) -> f64 {
        libm::exp(-libm::fabs(x) / self.0) / (2.0 * self.0)
    }
}

/// Inverse CDF of Laplace(b) evaluated at `u ∈ (-1/2, 1/2)`.
pub fn laplace_from_uniform(scale: LaplaceScale, u: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    -scale.0 * libm::copysign(1.0, u) * libm::log(1.0 - 2.0 * libm::fabs(u))
}

pub fn sample_laplace(scale: LaplaceScale, rng: &mut RandomSource) -> f64 {
    let u = rng.centered();
    laplace_from_uniform(scale, u)
}

/// `n` i.i.d. Laplace draws.
pub fn sample_laplace_vec(scale: LaplaceScale, n: usize, rng: &mut RandomSource) -> Vec<f64> {
    (0..n).map(|_| sample_laplace(scale, rng)).collect()
}

/// Selection probabilities `∝ exp(ε q_k / 2Δq)`, normalised after subtracting the
/// maximum score.
pub fn exponential_probabilities(scores: &[f64], epsilon: f64, delta_q: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore(i));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::param("epsilon", format!("must be positive, got {epsilon}")));
    }
    if !(delta_q.is_finite() && delta_q > 0.0) {
        return Err(Error::param("delta_q", format!("must be positive, got {delta_q}")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let factor = epsilon / (2.0 * delta_q);
    let weights: Vec<f64> = scores.iter().map(|&q| libm::exp(factor * (q - max))).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Exponential mechanism: index `k` with probability `∝ exp(ε q_k / 2Δq)`.
pub fn exponential_select(scores: &[f64], epsilon: f64, delta_q: f64, rng: &mut RandomSource) -> Result<usize> {
    let probabilities = exponential_probabilities(scores, epsilon, delta_q)?;
    let target = rng.unit();
    let mut cumulative = 0.0;
    for (k, p) in probabilities.iter().enumerate() {
        cumulative += p;
        if target < cumulative {
            return Ok(k);
        }
    }
    // rounding left the cumulative sum just below 1
    Ok(probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(0))
}

/// Exact non-negative rational, used to meter budget in whole shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Fraction {
    pub const ZERO: Fraction = Fraction { num: 0, den: 1 };
    pub const ONE: Fraction = Fraction { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        let g = gcd(num, den).max(1);
        Fraction { num: num / g, den: den / g }
    }

    pub fn numer(self) -> u64 {
        self.num
    }

    pub fn denom(self) -> u64 {
        self.den
    }

    pub fn is_one(self) -> bool {
        self.num == self.den
    }

    pub fn exceeds_one(self) -> bool {
        self.num > self.den
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `x · self`, exact when the fraction is 0 or 1 and never above `x` otherwise.
    pub fn of(self, x: f64) -> f64 {
        if self.num == 0 {
            0.0
        } else if self.num == self.den {
            x
        } else {
            x * self.to_f64()
        }
    }
}

impl core::ops::Add for Fraction {
    type Output = Fraction;

    fn add(self, rhs: Fraction) -> Fraction {
        let g = gcd(self.den, rhs.den);
        let den = self.den / g * rhs.den;
        Fraction::new(self.num * (den / self.den) + rhs.num * (den / rhs.den), den)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Named sub-budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BudgetPart {
    /// `ε_s`, time-division selection.
    Selection,
    /// `ε_d`, direct perturbation.
    Direct,
    /// `ε_t`, threshold perturbation.
    Threshold,
    /// `ε_1`, noisy threshold comparisons.
    Compare,
    /// `ε_2`, fresh releases inside threshold perturbation.
    Perturb,
    /// `ε_t1`, threshold perturbation before the daytime window.
    NightBefore,
    /// `ε_t2`, threshold perturbation after the daytime window.
    NightAfter,
}

impl BudgetPart {
    pub fn name(self) -> &'static str {
        match self {
            BudgetPart::Selection => "s",
            BudgetPart::Direct => "d",
            BudgetPart::Threshold => "t",
            BudgetPart::Compare => "1",
            BudgetPart::Perturb => "2",
            BudgetPart::NightBefore => "t1",
            BudgetPart::NightAfter => "t2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "s" => BudgetPart::Selection,
            "d" => BudgetPart::Direct,
            "t" => BudgetPart::Threshold,
            "1" => BudgetPart::Compare,
            "2" => BudgetPart::Perturb,
            "t1" => BudgetPart::NightBefore,
            "t2" => BudgetPart::NightAfter,
            _ => return None,
        })
    }
}

impl fmt::Display for BudgetPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ε_{}", self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Allocation {
    part: BudgetPart,
    epsilon: f64,
    spent: Fraction,
}

/// A total budget split into named allocations, with a ledger of what each
/// allocation has spent.
///
/// Allocations are stored so that their left-to-right floating-point sum equals
/// the total exactly; spending is metered as exact fractions of each allocation.
/// Together these make `consumed() <= total()` hold without tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyBudget {
    total: f64,
    allocations: Vec<Allocation>,
}

impl PrivacyBudget {
    /// The whole budget assigned to one part.
    pub fn single(epsilon: f64, part: BudgetPart) -> Result<Self> {
        split_budget(epsilon, &[(part, 1.0)])
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn allocation(&self, part: BudgetPart) -> Option<f64> {
        self.allocations.iter().find(|a| a.part == part).map(|a| a.epsilon)
    }

    /// Allocation for `part`, or 0 when absent.
    pub fn epsilon(&self, part: BudgetPart) -> f64 {
        self.allocation(part).unwrap_or(0.0)
    }

    pub fn parts(&self) -> impl Iterator<Item = (BudgetPart, f64)> + '_ {
        self.allocations.iter().map(|a| (a.part, a.epsilon))
    }

    pub fn spent(&self, part: BudgetPart) -> Fraction {
        self.allocations.iter().find(|a| a.part == part).map_or(Fraction::ZERO, |a| a.spent)
    }

    /// Records that `share` of the allocation for `part` has been used.
    pub fn charge(&mut self, part: BudgetPart, share: Fraction) -> Result<()> {
        let allocation =
            self.allocations.iter_mut().find(|a| a.part == part).ok_or(Error::BudgetExceeded { part: part.name() })?;
        let spent = allocation.spent + share;
        if spent.exceeds_one() {
            return Err(Error::BudgetExceeded { part: part.name() });
        }
        allocation.spent = spent;
        Ok(())
    }

    /// Total ε spent so far.
    pub fn consumed(&self) -> f64 {
        self.allocations.iter().fold(0.0, |acc, a| acc + a.spent.of(a.epsilon))
    }

    pub fn remaining(&self) -> f64 {
        self.total - self.consumed()
    }

    /// True when every allocation has been spent in full.
    pub fn is_exhausted(&self) -> bool {
        self.allocations.iter().all(|a| a.spent.is_one() || a.epsilon == 0.0)
    }

    /// Checks that the allocations are exactly `parts` (zero-valued parts may be absent).
    pub(crate) fn require_parts(&self, parts: &[BudgetPart]) -> Result<()> {
        for a in &self.allocations {
            if a.epsilon > 0.0 && !parts.contains(&a.part) {
                return Err(Error::BudgetSplit(format!("unexpected allocation {}", a.part)));
            }
        }
        for &part in parts {
            if self.epsilon(part) <= 0.0 {
                return Err(Error::BudgetSplit(format!("missing allocation {part}")));
            }
        }
        Ok(())
    }
}

/// A non-negative `tail` with `before + tail == total` in floating point, if one exists near `total − before`.
fn fit_tail(before: f64, total: f64) -> Option<f64> {
    let mut tail = (total - before).max(0.0);
    for _ in 0..128 {
        let got = before + tail;
        if got == total {
            return Some(tail);
        }
        tail = if got < total { tail.next_up() } else { tail.next_down().max(0.0) };
    }
    None
}

/// Splits `epsilon_total` into named allocations by fraction.
///
/// Fractions must be non-negative and sum to 1 within 1e-9. The last non-zero
/// allocation absorbs rounding so the allocations add up to the total exactly;
/// when no float fits, the allocation before it gives up an ulp.
pub fn split_budget(epsilon_total: f64, fractions: &[(BudgetPart, f64)]) -> Result<PrivacyBudget> {
    if !(epsilon_total.is_finite() && epsilon_total > 0.0) {
        return Err(Error::param("epsilon", format!("must be positive, got {epsilon_total}")));
    }
    if fractions.is_empty() {
        return Err(Error::BudgetSplit("no allocations".into()));
    }
    for (i, &(part, f)) in fractions.iter().enumerate() {
        if !(f.is_finite() && f >= 0.0) {
            return Err(Error::BudgetSplit(format!("fraction for {part} is negative or not finite")));
        }
        if fractions[..i].iter().any(|&(p, _)| p == part) {
            return Err(Error::BudgetSplit(format!("duplicate allocation {part}")));
        }
    }
    let sum: f64 = fractions.iter().map(|&(_, f)| f).sum();
    if libm::fabs(sum - 1.0) > 1e-9 {
        return Err(Error::BudgetSplit(format!("fractions sum to {sum}, not 1")));
    }

    let mut allocations: Vec<Allocation> = fractions
        .iter()
        .map(|&(part, f)| Allocation { part, epsilon: f * epsilon_total, spent: Fraction::ZERO })
        .collect();
    let last = fractions.iter().rposition(|&(_, f)| f > 0.0).expect("fractions sum to 1");
    let nudged = fractions[..last].iter().rposition(|&(_, f)| f > 0.0);
    let mut tail = None;
    for _ in 0..64 {
        let before: f64 = allocations[..last].iter().fold(0.0, |acc, a| acc + a.epsilon);
        tail = fit_tail(before, epsilon_total);
        match (tail, nudged) {
            (None, Some(k)) => allocations[k].epsilon = allocations[k].epsilon.next_down(),
            _ => break,
        }
    }
    let Some(tail) = tail else {
        return Err(Error::BudgetSplit(format!("cannot represent the split of {epsilon_total} exactly")));
    };
    allocations[last].epsilon = tail;
    Ok(PrivacyBudget { total: epsilon_total, allocations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_stream_repeat() {
        let mut a = RandomSource::new(7, 3);
        let mut b = RandomSource::new(7, 3);
        let mut c = RandomSource::new(7, 4);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let zs: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn median_draw_is_zero() {
        let b = LaplaceScale::new(3.0).unwrap();
        assert_eq!(laplace_from_uniform(b, 0.0), 0.0);
        // F⁻¹(3/4) = b ln 2
        assert!((laplace_from_uniform(b, 0.25) - 3.0 * core::f64::consts::LN_2).abs() < 1e-12);
        assert!((laplace_from_uniform(b, -0.25) + 3.0 * core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_scale() {
        assert!(LaplaceScale::new(0.0).is_err());
        assert!(LaplaceScale::new(-1.0).is_err());
        assert!(LaplaceScale::calibrated(1.0, 0.0).is_err());
    }

    #[test]
    fn frozen_laplace_draws() {
        let mut rng = RandomSource::new(42, 0);
        let b = LaplaceScale::new(1.0).unwrap();
        let draws = sample_laplace_vec(b, 3, &mut rng);
        let frozen = [0.4522303296245297, 2.3081084722574228, -0.15661544152644102];
        for (d, f) in draws.iter().zip(frozen) {
            assert_eq!(*d, f, "{draws:?}");
        }
    }

    #[test]
    fn single_candidate_is_certain() {
        let mut rng = RandomSource::new(1, 0);
        for _ in 0..10 {
            assert_eq!(exponential_select(&[3.5], 0.1, 1.0, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn exponential_errors() {
        let mut rng = RandomSource::new(1, 0);
        assert_eq!(exponential_select(&[], 1.0, 1.0, &mut rng), Err(Error::EmptyCandidates));
        assert_eq!(exponential_select(&[0.0, f64::NAN], 1.0, 1.0, &mut rng), Err(Error::NonFiniteScore(1)));
        assert!(exponential_select(&[0.0], 0.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn huge_scores_do_not_overflow() {
        let p = exponential_probabilities(&[1e6, 1e6 - 1.0], 10.0, 1.0).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_examples() {
        let b = split_budget(1.0, &[(BudgetPart::Direct, 1.0)]).unwrap();
        assert_eq!(b.epsilon(BudgetPart::Direct), 1.0);
        assert_eq!(b.epsilon(BudgetPart::Selection), 0.0);

        let b =
            split_budget(0.8, &[(BudgetPart::Selection, 0.2), (BudgetPart::Direct, 0.4), (BudgetPart::Threshold, 0.4)])
                .unwrap();
        assert!((b.epsilon(BudgetPart::Selection) - 0.16).abs() < 1e-15);
        assert!((b.epsilon(BudgetPart::Direct) - 0.32).abs() < 1e-15);
        assert!((b.epsilon(BudgetPart::Threshold) - 0.32).abs() < 1e-15);
        let sum = b.parts().fold(0.0, |acc, (_, e)| acc + e);
        assert_eq!(sum, 0.8);

        assert!(split_budget(1.0, &[(BudgetPart::Selection, 0.5), (BudgetPart::Direct, 0.6)]).is_err());
        assert!(split_budget(1.0, &[(BudgetPart::Selection, -0.5), (BudgetPart::Direct, 1.5)]).is_err());
    }

    #[test]
    fn ledger_charges_exactly() {
        let mut b = split_budget(0.7, &[(BudgetPart::Compare, 0.3), (BudgetPart::Perturb, 0.7)]).unwrap();
        for _ in 0..3 {
            b.charge(BudgetPart::Compare, Fraction::new(1, 3)).unwrap();
            b.charge(BudgetPart::Perturb, Fraction::new(1, 3)).unwrap();
        }
        assert_eq!(b.consumed(), 0.7);
        assert!(b.is_exhausted());
        assert!(b.charge(BudgetPart::Compare, Fraction::new(1, 3)).is_err());
        assert!(b.charge(BudgetPart::Selection, Fraction::ONE).is_err());
    }

    #[test]
    fn fraction_arithmetic() {
        assert_eq!(Fraction::new(1, 3) + Fraction::new(1, 6), Fraction::new(1, 2));
        assert_eq!(Fraction::new(2, 4), Fraction::new(1, 2));
        assert!(Fraction::new(3, 3).is_one());
        assert_eq!(Fraction::new(1, 2).of(3.0), 1.5);
    }
}
