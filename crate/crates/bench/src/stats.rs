//! Interval estimates for reported rates.

use crate::error::{HarnessError, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Wilson score interval at 95% for `successes` out of `n`.
pub fn wilson_ci(successes: u64, n: u64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(HarnessError::Domain("wilson_ci needs n >= 1".into()));
    }
    if successes > n {
        return Err(HarnessError::Domain(format!("{successes} successes out of {n}")));
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

/// 95% upper bound on an event rate after `n` trials with zero events.
pub fn rule_of_three(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(HarnessError::Domain("rule_of_three needs n >= 1".into()));
    }
    Ok(3.0 / n as f64)
}

/// Nearest-rank percentile of `values`, `q` in (0, 1].
pub fn percentile(values: &[u32], q: f64) -> Option<u32> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Wilson bounds are the roots of `|p_hat - p| = z * sqrt(p(1-p)/n)`;
    /// found here by bisection instead of the closed form.
    fn wilson_by_bisection(successes: u64, n: u64) -> (f64, f64) {
        let n_f = n as f64;
        let p_hat = successes as f64 / n_f;
        let excess = |p: f64| (p_hat - p).abs() - Z95 * (p * (1.0 - p) / n_f).sqrt();
        let root = |mut inside: f64, mut outside: f64| {
            for _ in 0..200 {
                let mid = 0.5 * (inside + outside);
                if excess(mid) <= 0.0 {
                    inside = mid;
                } else {
                    outside = mid;
                }
            }
            inside
        };
        let lo = if successes == 0 { 0.0 } else { root(p_hat, 0.0) };
        let hi = if successes == n { 1.0 } else { root(p_hat, 1.0) };
        (lo, hi)
    }

    #[test]
    fn thirty_of_thirty() {
        let (lo, hi) = wilson_ci(30, 30).unwrap();
        assert!((lo - 0.886).abs() <= 0.001, "{lo}");
        assert!((hi - 1.0).abs() <= 0.001, "{hi}");
    }

    #[test]
    fn degenerate_zero_of_one() {
        let (lo, hi) = wilson_ci(0, 1).unwrap();
        assert_eq!(lo, 0.0);
        assert!(hi < 1.0);
    }

    #[test]
    fn domain_errors() {
        assert!(wilson_ci(0, 0).is_err());
        assert!(wilson_ci(2, 1).is_err());
        assert!(rule_of_three(0).is_err());
    }

    #[test]
    fn rule_of_three_values() {
        let ub = rule_of_three(200_880).unwrap();
        assert!((ub - 1.49e-5).abs() <= 0.01e-5, "{ub}");
        let csv = rule_of_three(9_304).unwrap();
        assert!((csv * 100.0 - 0.032).abs() < 0.0005, "{csv}");
        assert!(rule_of_three(200).unwrap() <= 0.030 + 1e-12);
    }

    #[test]
    fn percentile_nearest_rank() {
        assert_eq!(percentile(&[], 0.95), None);
        assert_eq!(percentile(&[3], 0.95), Some(3));
        let v: Vec<u32> = (1..=20).collect();
        assert_eq!(percentile(&v, 0.95), Some(19));
        assert_eq!(percentile(&v, 1.0), Some(20));
    }

    proptest! {
        #[test]
        fn closed_form_matches_bisection(n in 1u64..5_000, frac in 0.0f64..=1.0) {
            let s = ((n as f64) * frac).round() as u64;
            let (lo, hi) = wilson_ci(s, n).unwrap();
            let (blo, bhi) = wilson_by_bisection(s, n);
            prop_assert!((lo - blo).abs() < 1e-9, "lo {} vs {}", lo, blo);
            prop_assert!((hi - bhi).abs() < 1e-9, "hi {} vs {}", hi, bhi);
            let p = s as f64 / n as f64;
            prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
        }
    }
}
