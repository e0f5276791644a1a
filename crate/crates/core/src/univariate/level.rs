//! Probability levels that keep full relative precision in both tails.

use std::cmp::Ordering;

use libm::erfc;
use statrs::function::erf::erfc_inv;

/// Smallest level ever produced; keeps probit transforms finite.
pub const MIN_LEVEL: f64 = 1e-300;

/// A probability `p` stored together with its complement `1 - p`.
///
/// Upper-tail values such as `1 - 1e-13` cannot be represented accurately as
/// plain doubles, so every CDF in this crate returns the pair and every
/// quantile function consumes it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    lower: f64,
    upper: f64,
}

impl Level {
    pub const ZERO: Level = Level { lower: 0.0, upper: 1.0 };
    pub const ONE: Level = Level { lower: 1.0, upper: 0.0 };

    /// From `p`; the complement is `1 - p`.
    pub fn new(p: f64) -> Self {
        let p = p.clamp(0.0, 1.0);
        Self { lower: p, upper: 1.0 - p }
    }

    /// From the upper-tail mass `q = 1 - p`.
    pub fn from_upper(q: f64) -> Self {
        let q = q.clamp(0.0, 1.0);
        Self { lower: 1.0 - q, upper: q }
    }

    /// From both parts; they are trusted to sum to one up to rounding.
    pub fn from_parts(lower: f64, upper: f64) -> Self {
        let lower = lower.clamp(0.0, 1.0);
        let upper = upper.clamp(0.0, 1.0);
        if lower <= upper {
            Self { lower, upper: 1.0 - lower }
        } else {
            Self { lower: 1.0 - upper, upper }
        }
    }

    /// Both parts exactly as given, for reloading stored levels.
    pub(crate) fn from_raw(lower: f64, upper: f64) -> Self {
        Self { lower: lower.clamp(0.0, 1.0), upper: upper.clamp(0.0, 1.0) }
    }

    pub fn value(self) -> f64 {
        self.lower
    }

    pub fn complement(self) -> f64 {
        self.upper
    }

    /// True when the level lies in the lower half, where `value` is the precise part.
    pub fn is_lower_half(self) -> bool {
        self.lower <= 0.5
    }

    pub fn cmp_level(self, other: Level) -> Ordering {
        if self.is_lower_half() || other.is_lower_half() {
            self.lower.total_cmp(&other.lower)
        } else {
            other.upper.total_cmp(&self.upper)
        }
    }

    /// `other - self`, evaluated from whichever tail keeps precision.
    pub fn gap_to(self, other: Level) -> f64 {
        if self.is_lower_half() && other.is_lower_half() {
            other.lower - self.lower
        } else if !self.is_lower_half() && !other.is_lower_half() {
            self.upper - other.upper
        } else {
            other.lower - self.lower
        }
    }

    /// Moves `step` (a probability mass) up from `self`.
    pub fn advance(self, step: f64) -> Level {
        let lower = self.lower + step;
        if lower <= 0.5 {
            Level::new(lower)
        } else {
            Level::from_upper(self.upper - step)
        }
    }
}

/// Standard normal CDF.
pub fn normal_cdf(s: f64) -> Level {
    let lower = 0.5 * erfc(-s / std::f64::consts::SQRT_2);
    let upper = 0.5 * erfc(s / std::f64::consts::SQRT_2);
    Level::from_parts(lower, upper)
}

/// Standard normal quantile; levels are clamped to `[MIN_LEVEL, 1 - MIN_LEVEL]`.
pub fn normal_quantile(level: Level) -> f64 {
    let (p, sign) = if level.is_lower_half() { (level.lower, -1.0) } else { (level.upper, 1.0) };
    let p = p.max(MIN_LEVEL);
    // lower-tail quantile t < 0 of mass p, polished by Newton steps on Phi(t) = p
    let mut t = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..2 {
        let pdf = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if pdf <= 0.0 {
            break;
        }
        t -= (0.5 * erfc(-t / std::f64::consts::SQRT_2) - p) / pdf;
    }
    if sign < 0.0 {
        t
    } else {
        -t
    }
}
