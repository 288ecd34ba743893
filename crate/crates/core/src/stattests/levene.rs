use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::{Alternative, TestResult};
use crate::error::{bail_arg, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeveneCenter {
    /// Brown–Forsythe variant.
    #[default]
    Median,
    Mean,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// Levene's test for equal spread: one-way ANOVA on absolute deviations
/// from each group's center.
pub fn levene(groups: &[Vec<f64>], center: LeveneCenter) -> Result<TestResult> {
    let k = groups.len();
    if k < 2 {
        bail_arg!("Levene's test needs at least two groups");
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        bail_arg!("Levene's test needs ≥ 2 points per group (found {})", g.len());
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        bail_arg!("Levene's test needs finite values");
    }
    let z: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let c = match center {
                LeveneCenter::Median => median(g),
                LeveneCenter::Mean => g.iter().sum::<f64>() / g.len() as f64,
            };
            g.iter().map(|v| (v - c).abs()).collect()
        })
        .collect();
    let total: usize = z.iter().map(Vec::len).sum();
    let grand = z.iter().flatten().sum::<f64>() / total as f64;
    let means: Vec<f64> = z.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let between: f64 = z
        .iter()
        .zip(&means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let within: f64 = z
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let (df1, df2) = ((k - 1) as f64, (total - k) as f64);
    let scale = grand.abs().max(1e-300);
    if between <= 1e-24 * scale * scale * total as f64 {
        return Ok(TestResult::new(0.0, 1.0, "levene", Alternative::TwoSided));
    }
    if within == 0.0 || df2 == 0.0 {
        let mut r = TestResult::new(f64::MAX, 0.0, "levene", Alternative::TwoSided);
        r.warnings.push("zero within-group spread".into());
        return Ok(r);
    }
    let f = (between / df1) / (within / df2);
    let dist = FisherSnedecor::new(df1, df2).expect("positive degrees of freedom");
    Ok(TestResult::new(f, dist.sf(f), "levene", Alternative::TwoSided))
}
