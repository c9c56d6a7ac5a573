//! Sample statistics and confidence intervals.

use serde::Serialize;

/// 97.5% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::default();
        iter.into_iter().for_each(|x| acc.push(x));
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson(successes: u64, trials: u64, z: f64) -> Interval {
    if trials == 0 {
        return Interval {
            low: 0.0,
            high: 1.0,
        };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Interval {
        low: (centre - half).max(0.0),
        high: (centre + half).min(1.0),
    }
}

/// Binomial proportion interval: Wald when both tails hold at least ten
/// observations, Wilson otherwise.
pub fn proportion_interval(successes: u64, trials: u64) -> Interval {
    let failures = trials - successes;
    if successes.min(failures) < 10 {
        let w = wilson(successes, trials, Z95);
        let p = if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        };
        Interval {
            low: w.low.min(p),
            high: w.high.max(p),
        }
    } else {
        let n = trials as f64;
        let p = successes as f64 / n;
        let half = Z95 * (p * (1.0 - p) / n).sqrt();
        Interval {
            low: (p - half).max(0.0),
            high: (p + half).min(1.0),
        }
    }
}

/// `|a − b|` in units of the joint standard error.
pub fn joint_sigma_distance(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    let s = (sa * sa + sb * sb).sqrt();
    let d = (a - b).abs();
    if s == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        d / s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        let acc: Accumulator = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((acc.mean() - mean).abs() < 1e-14);
        assert!((acc.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn wilson_reference_value() {
        // 0 successes in 10 trials: upper bound z²/(n+z²)
        let w = wilson(0, 10, Z95);
        assert_eq!(w.low, 0.0);
        assert!((w.high - Z95 * Z95 / (10.0 + Z95 * Z95)).abs() < 1e-12);
    }

    #[test]
    fn interval_contains_estimate_at_extremes() {
        for (k, n) in [(0, 100), (100, 100), (3, 100), (50, 100)] {
            let i = proportion_interval(k, n);
            let p = k as f64 / n as f64;
            assert!(i.low <= p && p <= i.high);
            assert!(i.low >= 0.0 && i.high <= 1.0);
        }
    }
}
