//! Small statistical toolkit for the Monte Carlo checks.

use serde::Serialize;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    if n == 0 {
        return MeanSe { mean: f64::NAN, se: f64::NAN, n };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanSe { mean, se: f64::NAN, n };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    MeanSe { mean, se: (var / n as f64).sqrt(), n }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Kolmogorov distribution tail `Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut acc = 0.0;
    let mut sign = 1.0;
    for k in 1..200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        acc += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against `cdf`; returns `(D, p)`.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    });
    let sn = n.sqrt();
    (d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d))
}

/// Two-sample Kolmogorov–Smirnov test; returns `(D, p)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let se = ne.sqrt();
    (d, kolmogorov_q((se + 0.12 + 0.11 / se) * d))
}

/// Pearson chi-square goodness of fit; returns `(statistic, p)`.
pub fn chi_square(observed: &[f64], expected: &[f64]) -> (f64, f64) {
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (observed.len() - 1) as f64;
    (stat, ChiSquared::new(df).map(|c| c.sf(stat)).unwrap_or(f64::NAN))
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// One-sided paired sign test of `H1: a > b`; ties are dropped.
pub fn sign_test_greater(a: &[f64], b: &[f64]) -> f64 {
    let (mut wins, mut n) = (0u64, 0u64);
    for (x, y) in a.iter().zip(b) {
        if x != y {
            n += 1;
            if x > y {
                wins += 1;
            }
        }
    }
    if n == 0 {
        return 1.0;
    }
    let bin = Binomial::new(0.5, n).expect("valid binomial");
    if wins == 0 {
        1.0
    } else {
        bin.sf(wins - 1)
    }
}

/// Verdict of a decreasing-trend check across an ordered sequence of levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendVerdict {
    /// Point estimates strictly decrease from each level to the next.
    pub strictly_decreasing: bool,
    /// No increase exceeds 1.96 combined standard errors.
    pub nonincreasing_within_noise: bool,
    /// One-sided paired sign-test p-values between consecutive levels
    /// (present only when per-replication data were paired).
    pub paired_p_values: Vec<f64>,
}

impl TrendVerdict {
    pub fn paired_significant(&self, alpha: f64) -> bool {
        !self.paired_p_values.is_empty() && self.paired_p_values.iter().all(|&p| p < alpha)
    }
}

/// Trend check on per-level summaries (`centers`) with standard errors and,
/// optionally, paired per-replication samples for each level.
pub fn decreasing_trend(centers: &[f64], ses: &[f64], paired: Option<&[Vec<f64>]>) -> TrendVerdict {
    let strictly_decreasing = centers.windows(2).all(|w| w[1] < w[0]);
    let nonincreasing_within_noise =
        centers.windows(2).zip(ses.windows(2)).all(|(c, s)| c[1] <= c[0] + 1.96 * (s[0] * s[0] + s[1] * s[1]).sqrt());
    let paired_p_values =
        paired.map(|levels| levels.windows(2).map(|w| sign_test_greater(&w[0], &w[1])).collect()).unwrap_or_default();
    TrendVerdict { strictly_decreasing, nonincreasing_within_noise, paired_p_values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let m = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_tail_reference_values() {
        // Q(1.36) ~ 0.049, Q(1.63) ~ 0.0098
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_q(1.63) - 0.0098).abs() < 1e-3);
    }

    #[test]
    fn ks_accepts_uniform_grid() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let (d, p) = ks_one_sample(&xs, |x| x);
        assert!(d <= 0.0005 + 1e-12);
        assert!(p > 0.99);
        let (_, p2) = ks_two_sample(&xs, &xs);
        assert!(p2 > 0.99);
    }

    #[test]
    fn sign_test_and_trend() {
        let a = vec![2.0; 20];
        let b = vec![1.0; 20];
        assert!(sign_test_greater(&a, &b) < 1e-5);
        assert_eq!(sign_test_greater(&b, &a), 1.0);
        let v = decreasing_trend(&[3.0, 2.0, 1.0], &[0.1, 0.1, 0.1], Some(&[a.clone(), b.clone(), vec![0.0; 20]]));
        assert!(v.strictly_decreasing && v.nonincreasing_within_noise && v.paired_significant(0.05));
    }

    #[test]
    fn chi_square_uniform_counts() {
        let (s, p) = chi_square(&[50.0, 50.0], &[50.0, 50.0]);
        assert_eq!(s, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }
}
