//! Mergeable moment accumulators.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Count, mean and central moment sums up to order four.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl Moments {
    pub fn from_samples(xs: &[f64]) -> Self {
        let mut m = Self::default();
        xs.iter().for_each(|&x| m.push(x));
        m
    }

    pub fn push(&mut self, x: f64) {
        self.merge(&Self { count: 1, mean: x, m2: 0.0, m3: 0.0, m4: 0.0 });
    }

    /// Combines two disjoint sample sets.
    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        let dn = d / n;
        let m2 = self.m2 + other.m2 + d * dn * na * nb;
        let m3 = self.m3 + other.m3 + d * dn * dn * na * nb * (na - nb) + 3.0 * dn * (na * other.m2 - nb * self.m2);
        let m4 = self.m4
            + other.m4
            + d * dn * dn * dn * na * nb * (na * na - na * nb + nb * nb)
            + 6.0 * dn * dn * (na * na * other.m2 + nb * nb * self.m2)
            + 4.0 * dn * (na * other.m3 - nb * self.m3);
        self.mean += nb * dn;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count as f64 - 1.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn skewness(&self) -> f64 {
        if self.m2 == 0.0 {
            return 0.0;
        }
        let n = self.count as f64;
        n.sqrt() * self.m3 / self.m2.powf(1.5)
    }

    pub fn excess_kurtosis(&self) -> f64 {
        if self.m2 == 0.0 {
            return 0.0;
        }
        let n = self.count as f64;
        n * self.m4 / (self.m2 * self.m2) - 3.0
    }

    /// Standard error of the sample variance, from the fourth central moment.
    pub fn variance_std_error(&self) -> f64 {
        let n = self.count as f64;
        if n < 2.0 {
            return f64::NAN;
        }
        let mu4 = self.m4 / n;
        let s2 = self.m2 / n;
        ((mu4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }

    /// 95% normal confidence interval for the mean.
    pub fn mean_ci(&self) -> (f64, f64) {
        let h = 1.96 * self.std_error();
        (self.mean - h, self.mean + h)
    }
}

/// Joint accumulator for a pair of observables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoMoments {
    pub count: u64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub m2_x: f64,
    pub m2_y: f64,
    pub c_xy: f64,
}

impl CoMoments {
    pub fn push(&mut self, x: f64, y: f64) {
        self.merge(&Self { count: 1, mean_x: x, mean_y: y, ..Self::default() });
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let dx = other.mean_x - self.mean_x;
        let dy = other.mean_y - self.mean_y;
        let f = na * nb / n;
        self.m2_x += other.m2_x + dx * dx * f;
        self.m2_y += other.m2_y + dy * dy * f;
        self.c_xy += other.c_xy + dx * dy * f;
        self.mean_x += dx * nb / n;
        self.mean_y += dy * nb / n;
        self.count += other.count;
    }

    pub fn covariance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.c_xy / (self.count as f64 - 1.0)
        }
    }

    pub fn correlation(&self) -> f64 {
        let d = (self.m2_x * self.m2_y).sqrt();
        if d > 0.0 {
            self.c_xy / d
        } else {
            0.0
        }
    }

    /// Large-sample standard error of the correlation under the null of zero correlation.
    pub fn correlation_std_error(&self) -> f64 {
        1.0 / (self.count as f64).sqrt()
    }
}

/// Named accumulators for one ensemble.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub observables: BTreeMap<String, Moments>,
    pub pairs: BTreeMap<String, CoMoments>,
}

impl EnsembleSummary {
    pub fn push(&mut self, name: &str, x: f64) {
        self.observables.entry(name.to_string()).or_default().push(x);
    }

    pub fn push_pair(&mut self, name: &str, x: f64, y: f64) {
        self.pairs.entry(name.to_string()).or_default().push(x, y);
    }

    pub fn get(&self, name: &str) -> Option<&Moments> {
        self.observables.get(name)
    }

    pub fn pair(&self, name: &str) -> Option<&CoMoments> {
        self.pairs.get(name)
    }

    pub fn count(&self) -> u64 {
        self.observables.values().map(|m| m.count).max().unwrap_or(0)
    }

    /// Merges another summary over the same observables.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if !self.observables.is_empty()
            && !other.observables.is_empty()
            && !self.observables.keys().eq(other.observables.keys())
        {
            return Err(Error::IncompatibleMerge("observable sets differ".into()));
        }
        for (k, v) in &other.observables {
            self.observables.entry(k.clone()).or_default().merge(v);
        }
        for (k, v) in &other.pairs {
            self.pairs.entry(k.clone()).or_default().merge(v);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(xs: &[f64]) -> (f64, f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let c = |p: i32| xs.iter().map(|x| (x - mean).powi(p)).sum::<f64>();
        (mean, c(2), c(3), c(4))
    }

    #[test]
    fn merge_matches_two_pass() {
        let xs: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64).sqrt() - 3.0).collect();
        let (a, b) = xs.split_at(73);
        let mut m = Moments::from_samples(a);
        m.merge(&Moments::from_samples(b));
        let (mean, m2, m3, m4) = naive(&xs);
        assert!((m.mean - mean).abs() < 1e-12);
        assert!((m.m2 - m2).abs() < 1e-9 * m2);
        assert!((m.m3 - m3).abs() < 1e-9 * m2.powf(1.5));
        assert!((m.m4 - m4).abs() < 1e-9 * m4);
    }

    #[test]
    fn single_sample() {
        let m = Moments::from_samples(&[2.5]);
        assert_eq!(m.count, 1);
        assert_eq!(m.mean, 2.5);
        assert_eq!(m.variance(), 0.0);
    }

    #[test]
    fn correlation_of_affine_pair() {
        let mut c = CoMoments::default();
        for i in 0..50 {
            let x = i as f64;
            c.push(x, 2.0 * x + 1.0);
        }
        assert!((c.correlation() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_summaries_do_not_merge() {
        let mut a = EnsembleSummary::default();
        a.push("x", 1.0);
        let mut b = EnsembleSummary::default();
        b.push("y", 1.0);
        assert!(a.merge(&b).is_err());
    }
}
