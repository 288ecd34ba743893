//! Two-sample, contingency and variance tests.

mod fisher;
mod ftest;
mod ks;
mod levene;
mod proportion;
mod wilcoxon;

pub use fisher::fisher_exact_2x2;
pub use ftest::f_test_accuracy;
pub use ks::{kolmogorov_sf, ks_two_sample};
pub use levene::{levene, LeveneCenter};
pub use proportion::two_proportion_test;
pub use wilcoxon::{rank_sum_null_counts, wilcoxon_rank_sum};

use crate::error::{bail_arg, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alternative {
    #[default]
    TwoSided,
    Greater,
    Less,
}

impl std::str::FromStr for Alternative {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "two_sided" | "two-sided" | "two.sided" => Self::TwoSided,
            "greater" => Self::Greater,
            "less" => Self::Less,
            _ => bail_arg!("unknown alternative `{s}`"),
        })
    }
}

impl std::fmt::Display for Alternative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::TwoSided => "two_sided",
            Self::Greater => "greater",
            Self::Less => "less",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    /// Always in `[0, 1]`.
    pub p_value: f64,
    pub method: &'static str,
    pub alternative: Alternative,
    /// Whether the p-value comes from an exact null distribution.
    pub exact: bool,
    pub warnings: Vec<String>,
}

impl TestResult {
    fn new(statistic: f64, p_value: f64, method: &'static str, alternative: Alternative) -> Self {
        Self {
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            method,
            alternative,
            exact: false,
            warnings: Vec::new(),
        }
    }
}

/// Midranks (1-based) of `v`, and the sizes of its tie groups.
pub(crate) fn midranks(v: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}
