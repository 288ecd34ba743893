use statrs::function::factorial::ln_factorial;

use super::{Alternative, TestResult};
use crate::error::{bail_arg, Result};

/// Relative slack when comparing table probabilities with the observed one.
const SLACK: f64 = 1e-7;

/// Fisher's exact test on `[[a, b], [c, d]]`. The statistic is the sample
/// odds ratio with 0.5 added to every cell.
pub fn fisher_exact_2x2(table: [[i64; 2]; 2], alternative: Alternative) -> Result<TestResult> {
    if table.iter().flatten().any(|&v| v < 0) {
        bail_arg!("contingency counts must be nonnegative");
    }
    let [[a, b], [c, d]] = table.map(|r| r.map(|v| v as u64));
    let n = a + b + c + d;
    if n == 0 {
        bail_arg!("contingency table is empty");
    }
    let (r1, c1) = (a + b, a + c);
    let lo = (r1 + c1).saturating_sub(n);
    let hi = r1.min(c1);
    let base = ln_factorial(r1) + ln_factorial(n - r1) + ln_factorial(c1) + ln_factorial(n - c1)
        - ln_factorial(n);
    let logp = |x: u64| {
        base - ln_factorial(x) - ln_factorial(r1 - x) - ln_factorial(c1 - x)
            - ln_factorial(n + x - r1 - c1)
    };
    let probs: Vec<f64> = (lo..=hi).map(|x| logp(x).exp()).collect();
    let obs = (a - lo) as usize;
    let p = match alternative {
        Alternative::Less => probs[..=obs].iter().sum(),
        Alternative::Greater => probs[obs..].iter().sum(),
        Alternative::TwoSided => {
            let cut = probs[obs] * (1.0 + SLACK);
            probs.iter().filter(|&&q| q <= cut).sum()
        }
    };
    let odds = ((a as f64 + 0.5) * (d as f64 + 0.5)) / ((b as f64 + 0.5) * (c as f64 + 0.5));
    let mut r = TestResult::new(odds, p, "fisher_exact", alternative);
    r.exact = true;
    Ok(r)
}
