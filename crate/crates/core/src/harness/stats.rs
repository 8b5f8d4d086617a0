use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::rng::SimRng;

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const DEFAULT_LEVEL: f64 = 0.95;

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Percentile bootstrap interval for the mean.
///
/// # Panics
/// If `samples` is empty or `level` is outside `(0, 1)`.
pub fn bootstrap_ci(samples: &[f64], resamples: usize, level: f64, rng: &mut SimRng) -> (f64, f64) {
    assert!(!samples.is_empty(), "bootstrap of an empty sample");
    assert!(level > 0.0 && level < 1.0, "level {level} outside (0, 1)");
    let n = samples.len();
    let resamples = resamples.max(1);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    let m = mean(samples);
    // Keep the interval ordered around the sample mean despite float noise.
    (at(tail).min(m), at(1.0 - tail).max(m))
}

/// Two-sided Mann-Whitney U test p-value from the normal approximation with
/// tie and continuity corrections.
///
/// # Panics
/// If either sample is empty.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "Mann-Whitney test of an empty sample");
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&x| (x, true))
        .chain(b.iter().map(|&x| (x, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = pooled.len();
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_a += rank * pooled[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
    let mu = n1 * n2 / 2.0;
    let total = n1 + n2;
    let var = n1 * n2 / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * normal.sf(z)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_samples() {
        let (lo, hi) = bootstrap_ci(&[2.5; 40], 1000, 0.95, &mut seeded(0));
        assert_eq!((lo, hi), (2.5, 2.5));
    }

    #[test]
    fn symmetric_binary_samples() {
        let s: Vec<f64> = (0..2000).map(|i| (i % 2) as f64).collect();
        let (lo, hi) = bootstrap_ci(&s, 2000, 0.95, &mut seeded(1));
        assert!(lo < 0.5 && 0.5 < hi);
    }

    #[test]
    fn normal_interval_width() {
        let mut rng = seeded(2);
        let s: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (lo, hi) = bootstrap_ci(&s, DEFAULT_RESAMPLES, DEFAULT_LEVEL, &mut rng);
        let expected = 2.0 * 1.96 / 1000f64.sqrt();
        assert!(((hi - lo) - expected).abs() < 0.2 * expected, "{}", hi - lo);
    }

    #[test]
    fn mann_whitney_cases() {
        let a: Vec<f64> = (1..=20).map(f64::from).collect();
        let b: Vec<f64> = (21..=40).map(f64::from).collect();
        let p = mann_whitney_u(&a, &b);
        assert!(p < 0.001, "{p}");
        assert_eq!(p, mann_whitney_u(&b, &a));
        assert!(mann_whitney_u(&a, &a) > 0.99);
        assert_eq!(mann_whitney_u(&[1.0; 5], &[1.0; 7]), 1.0);
    }

    #[test]
    fn mann_whitney_matches_reference() {
        // U = 1 for {1,2,4} vs {3,5,6,7}: z = (|1 - 6| - 0.5) / sqrt(8).
        let p = mann_whitney_u(&[1.0, 2.0, 4.0], &[3.0, 5.0, 6.0, 7.0]);
        let z: f64 = 4.5 / 8f64.sqrt();
        let expected = statrs::function::erf::erfc(z / std::f64::consts::SQRT_2);
        assert!((p - expected).abs() < 1e-12);
    }

    #[test]
    fn mann_whitney_with_ties_matches_scipy() {
        // scipy.stats.mannwhitneyu(a, b, use_continuity=True, method="asymptotic")
        let a = [3.0, -5.0, 10.0, 10.0, 2.5, 7.0, -15.0, 10.0, 4.0, 4.0, 0.5];
        let b = [1.0, 1.0, -5.0, 2.5, 8.0, -10.0, 3.0, 3.0, 0.0, 6.0];
        let p = mann_whitney_u(&a, &b);
        assert!((p - 0.24343316066931164).abs() < 1e-9, "{p}");
    }
}
