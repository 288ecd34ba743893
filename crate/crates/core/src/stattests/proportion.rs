use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use super::{Alternative, TestResult};
use crate::error::{bail_arg, Result};

/// Chi-squared test of `k1/n1 == k2/n2` with Yates' continuity correction.
/// `Greater` means the first proportion is larger.
pub fn two_proportion_test(
    k1: u64,
    n1: u64,
    k2: u64,
    n2: u64,
    alternative: Alternative,
) -> Result<TestResult> {
    if n1 == 0 || n2 == 0 {
        bail_arg!("proportion test needs n1, n2 ≥ 1");
    }
    if k1 > n1 || k2 > n2 {
        bail_arg!("successes exceed trials");
    }
    let (x1, m1, x2, m2) = (k1 as f64, n1 as f64, k2 as f64, n2 as f64);
    let delta = x1 / m1 - x2 / m2;
    let yates = (0.5f64).min(delta.abs() / (1.0 / m1 + 1.0 / m2));
    let pooled = (x1 + x2) / (m1 + m2);
    let stat = if pooled <= 0.0 || pooled >= 1.0 {
        0.0
    } else {
        [(x1, m1), (x2, m2)]
            .iter()
            .map(|&(x, m)| {
                let (e1, e0) = (m * pooled, m * (1.0 - pooled));
                ((x - e1).abs() - yates).powi(2) / e1 + (((m - x) - e0).abs() - yates).powi(2) / e0
            })
            .sum()
    };
    let p = match alternative {
        Alternative::TwoSided => ChiSquared::new(1.0).expect("df = 1").sf(stat),
        _ => {
            let z = delta.signum() * f64::from(delta != 0.0) * stat.sqrt();
            let norm = Normal::standard();
            if alternative == Alternative::Greater {
                norm.sf(z)
            } else {
                norm.cdf(z)
            }
        }
    };
    Ok(TestResult::new(stat, p, "two_proportion", alternative))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_proportions() {
        let r = two_proportion_test(30, 60, 50, 100, Alternative::TwoSided).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn strong_difference() {
        let r = two_proportion_test(90, 100, 50, 100, Alternative::Greater).unwrap();
        assert!(r.p_value < 1e-8);
        let r = two_proportion_test(90, 100, 50, 100, Alternative::Less).unwrap();
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn matches_hand_computation() {
        // 2×2 table (15, 5 | 8, 12); pooled 23/40.
        let r = two_proportion_test(15, 20, 8, 20, Alternative::TwoSided).unwrap();
        let p = 23.0 / 40.0;
        let e = [20.0 * p, 20.0 * (1.0 - p)];
        let obs: [[f64; 2]; 2] = [[15.0, 5.0], [8.0, 12.0]];
        let stat: f64 = obs
            .iter()
            .flat_map(|row| row.iter().zip(e.iter()).map(|(o, ex)| ((o - ex).abs() - 0.5f64).powi(2) / ex))
            .sum();
        assert!((r.statistic - stat).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pool() {
        let r = two_proportion_test(10, 10, 7, 7, Alternative::Greater).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 0.5);
        assert!(two_proportion_test(1, 0, 1, 1, Alternative::TwoSided).is_err());
    }
}
