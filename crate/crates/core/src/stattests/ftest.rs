use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::{Alternative, TestResult};
use crate::error::{bail_arg, Result};

/// One-sided F-test that the full model's held-out squared errors are smaller:
/// `Σ err_restricted / Σ err_full` against `F(m, m)`.
pub fn f_test_accuracy(err_restricted: &[f64], err_full: &[f64]) -> Result<TestResult> {
    let m = err_restricted.len();
    if m != err_full.len() {
        bail_arg!("error vectors differ in length ({m} vs {})", err_full.len());
    }
    if m < 3 {
        bail_arg!("F-test needs at least 3 held-out rows");
    }
    if err_restricted.iter().chain(err_full).any(|&v| !(v >= 0.0) || !v.is_finite()) {
        bail_arg!("squared errors must be finite and nonnegative");
    }
    let num: f64 = err_restricted.iter().sum();
    let den: f64 = err_full.iter().sum();
    if den == 0.0 {
        if num == 0.0 {
            return Ok(TestResult::new(1.0, 0.5, "f_test", Alternative::Greater));
        }
        let mut r = TestResult::new(f64::MAX, 0.0, "f_test", Alternative::Greater);
        r.warnings.push("full model has zero held-out error".into());
        return Ok(r);
    }
    let stat = num / den;
    let dist = FisherSnedecor::new(m as f64, m as f64).expect("positive degrees of freedom");
    Ok(TestResult::new(stat, dist.sf(stat), "f_test", Alternative::Greater))
}
