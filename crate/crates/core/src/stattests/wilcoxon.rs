use statrs::distribution::{ContinuousCDF, Normal};

use super::{midranks, Alternative, TestResult};
use crate::error::{bail_arg, Result};

/// Combined sample size up to which the exact null is used (absent ties).
const EXACT_LIMIT: usize = 20;

/// `counts[u]` = number of size-`m` subsets of `{1..m+n}` whose Mann–Whitney
/// statistic equals `u`.
pub fn rank_sum_null_counts(m: usize, n: usize) -> Vec<f64> {
    // f[j][u] over samples of size j drawn from the first i ranks.
    let max_u = m * n;
    let mut f = vec![vec![0.0; max_u + 1]; m + 1];
    f[0][0] = 1.0;
    for i in 1..=m + n {
        for j in (1..=m.min(i)).rev() {
            // Placing rank i in the sample adds (i - j) smaller non-sample ranks.
            let shift = i - j;
            if shift > n {
                continue;
            }
            for u in (shift..=max_u).rev() {
                let add = f[j - 1][u - shift];
                f[j][u] += add;
            }
        }
    }
    f.swap_remove(m)
}

/// Wilcoxon rank-sum (Mann–Whitney) test. The statistic is
/// `U = R_a - |a|(|a|+1)/2`; `Less` means `a` tends to be smaller.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        bail_arg!("rank-sum test needs two nonempty samples");
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        bail_arg!("rank-sum test needs finite values");
    }
    let (m, n) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let ra: f64 = ranks[..m].iter().sum();
    let u = ra - (m * (m + 1)) as f64 / 2.0;
    let has_ties = ties.iter().any(|&t| t > 1);

    if m + n <= EXACT_LIMIT && !has_ties {
        let counts = rank_sum_null_counts(m, n);
        let total: f64 = counts.iter().sum();
        let k = u.round() as usize;
        let lower = counts[..=k].iter().sum::<f64>() / total;
        let upper = counts[k..].iter().sum::<f64>() / total;
        let p = match alternative {
            Alternative::Less => lower,
            Alternative::Greater => upper,
            Alternative::TwoSided => {
                let tail = if u > (m * n) as f64 / 2.0 { upper } else { lower };
                (2.0 * tail).min(1.0)
            }
        };
        let mut r = TestResult::new(u, p, "wilcoxon_rank_sum", alternative);
        r.exact = true;
        return Ok(r);
    }

    let (mf, nf) = (m as f64, n as f64);
    let big_n = mf + nf;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (big_n * (big_n - 1.0));
    let sigma = (mf * nf / 12.0 * ((big_n + 1.0) - tie_term)).sqrt();
    let centered = u - mf * nf / 2.0;
    if sigma == 0.0 {
        return Ok(TestResult::new(u, 1.0, "wilcoxon_rank_sum", alternative));
    }
    let correction = match alternative {
        Alternative::TwoSided => 0.5 * centered.signum() * f64::from(centered != 0.0),
        Alternative::Greater => 0.5,
        Alternative::Less => -0.5,
    };
    let z = (centered - correction) / sigma;
    let norm = Normal::standard();
    let p = match alternative {
        Alternative::TwoSided => 2.0 * norm.cdf(z).min(norm.sf(z)),
        Alternative::Greater => norm.sf(z),
        Alternative::Less => norm.cdf(z),
    };
    Ok(TestResult::new(u, p, "wilcoxon_rank_sum", alternative))
}
