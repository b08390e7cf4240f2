//! Streaming moments and order-statistic quantiles.

use serde::Serialize;

/// Running count, mean and sum of squared deviations.
///
/// `merge` combines two partial summaries exactly (Chan et al.), so
/// trial-parallel reductions agree with a sequential pass up to rounding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let (na, nb) = (self.count as f64, other.count as f64);
        let delta = other.mean - self.mean;
        Moments {
            count: n,
            mean: self.mean + delta * nb / n as f64,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n as f64,
        }
    }

    /// Pairwise (tree) reduction over a slice of values.
    pub fn from_slice(xs: &[f64]) -> Moments {
        match xs.len() {
            0 => Moments::new(),
            n if n <= 32 => {
                let mut m = Moments::new();
                xs.iter().for_each(|&x| m.push(x));
                m
            }
            n => {
                let (a, b) = xs.split_at(n / 2);
                Moments::from_slice(a).merge(&Moments::from_slice(b))
            }
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `NaN` when empty.
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Population standard deviation; `NaN` when empty.
    pub fn std(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            (self.m2 / self.count as f64).max(0.0).sqrt()
        }
    }

    /// Population variance; `NaN` when empty.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }
}

/// Lower empirical quantile `x_(⌈p·n⌉)` of an ascending slice, no interpolation.
///
/// Panics on an empty slice or `p ∉ [0, 1]`.
pub fn order_statistic(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    assert!((0.0..=1.0).contains(&p), "quantile level {p} outside [0,1]");
    let n = sorted.len();
    let rank = (p * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Two-sigma binomial slack `2·√(γ(1−γ)/n)`.
pub fn binomial_slack(gamma: f64, trials: u64) -> f64 {
    2.0 * (gamma * (1.0 - gamma) / trials as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn moments_of_known_sample() {
        let m = Moments::from_slice(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m.count(), 8);
        assert!((m.mean() - 5.0).abs() < 1e-15);
        assert!((m.std() - 2.0).abs() < 1e-15);
        assert!(Moments::new().mean().is_nan());
    }

    #[test]
    fn order_statistics() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(order_statistic(&xs, 0.0), 1.0);
        assert_eq!(order_statistic(&xs, 0.05), 1.0);
        assert_eq!(order_statistic(&xs, 0.1), 1.0);
        assert_eq!(order_statistic(&xs, 0.11), 2.0);
        assert_eq!(order_statistic(&xs, 0.5), 5.0);
        assert_eq!(order_statistic(&xs, 1.0), 10.0);
    }

    proptest! {
        #[test]
        fn merge_matches_sequential(xs in proptest::collection::vec(-1e3f64..1e3, 1..300), cut in 0usize..300) {
            let cut = cut.min(xs.len());
            let mut seq = Moments::new();
            xs.iter().for_each(|&x| seq.push(x));
            let merged = Moments::from_slice(&xs[..cut]).merge(&Moments::from_slice(&xs[cut..]));
            prop_assert_eq!(seq.count(), merged.count());
            prop_assert!((seq.mean() - merged.mean()).abs() <= 1e-9 * (1.0 + seq.mean().abs()));
            prop_assert!((seq.std() - merged.std()).abs() <= 1e-7 * (1.0 + seq.std()));
            prop_assert!(seq.std() >= 0.0);
        }

        #[test]
        fn quantiles_are_monotone(mut xs in proptest::collection::vec(-1e3f64..1e3, 1..100), p in 0.0f64..1.0, q in 0.0f64..1.0) {
            xs.sort_by(f64::total_cmp);
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(order_statistic(&xs, lo) <= order_statistic(&xs, hi));
        }
    }
}
