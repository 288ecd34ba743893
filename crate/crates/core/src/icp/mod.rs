//! Invariant causal prediction: test every candidate subset, intersect the
//! accepted ones, and summarize the accepted family by its defining sets.

mod bands;
mod bootstrap;
mod defining;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use bands::{ace_bounds, confidence_band, confidence_bands, merge_intervals, AceInterval, BandConfig, BootstrapKind, ConfidenceBand};
pub use bootstrap::{block_bootstrap_resample, block_plan, Block, Panel};
pub use defining::{defining_sets, DefiningSets};

use crate::citests::{cond_indep_test, CITestConfig, Diagnostics, EnvColumn, Method};
use crate::data::{select_columns, Dataset};
use crate::error::{bail_arg, Result};
use crate::rng::derive_seed;
use defining::{for_each_combination, mask_of, members};

/// Largest predictor count enumerated in full by default.
pub const FULL_ENUMERATION_MAX_P: usize = 12;
/// Default subset size cap beyond that.
pub const DEFAULT_MAX_SET_SIZE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct IcpConfig {
    pub test: CITestConfig,
    /// Predictor columns to consider; `None` means all.
    pub candidates: Option<Vec<usize>>,
    pub max_set_size: Option<usize>,
    /// Stop after the cardinality level at which the running intersection of
    /// accepted sets becomes empty. Only Ŝ is meaningful afterwards.
    pub early_exit: bool,
}

impl IcpConfig {
    pub fn new(test: CITestConfig) -> Self {
        Self {
            test,
            candidates: None,
            max_set_size: None,
            early_exit: false,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.test.alpha
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetResult {
    /// Predictor column indices, ascending.
    pub set: Vec<usize>,
    pub p_value: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub alpha: f64,
    pub method: Method,
    pub test: CITestConfig,
    pub candidates: Vec<usize>,
    pub names: Vec<String>,
    pub max_set_size: usize,
    /// Every tested set in enumeration order (cardinality, then bitmask).
    pub tested: Vec<SetResult>,
    /// Sets with `p > alpha`.
    pub accepted: Vec<Vec<usize>>,
    pub s_hat: Vec<usize>,
    pub defining_sets: DefiningSets,
    /// False when early exit skipped larger sets.
    pub complete: bool,
    pub warnings: Vec<String>,
}

impl IcpResult {
    fn assemble(mut self) -> Self {
        let alpha = self.alpha;
        self.accepted = self
            .tested
            .iter()
            .filter(|r| r.p_value > alpha)
            .map(|r| r.set.clone())
            .collect();
        self.s_hat = intersection(&self.accepted);
        self.defining_sets = defining_sets(&self.accepted);
        self
    }

    /// The same tests re-thresholded at another level; cached p-values make
    /// accepted families nest across levels.
    pub fn at_alpha(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            bail_arg!("alpha must lie in (0, 1), got {alpha}");
        }
        let mut r = self.clone();
        r.alpha = alpha;
        r.test.alpha = alpha;
        Ok(r.assemble())
    }

    pub fn p_value(&self, set: &[usize]) -> Option<f64> {
        let mut s = set.to_vec();
        s.sort_unstable();
        self.tested.iter().find(|r| r.set == s).map(|r| r.p_value)
    }

    pub fn set_names(&self, set: &[usize]) -> Vec<String> {
        set.iter().map(|&j| self.names[j].clone()).collect()
    }
}

/// Intersection of a family of sets; empty for an empty family.
pub fn intersection(family: &[Vec<usize>]) -> Vec<usize> {
    let Some(first) = family.first() else {
        return Vec::new();
    };
    let mut out: Vec<usize> = first.clone();
    for s in &family[1..] {
        out.retain(|v| s.contains(v));
    }
    out.sort_unstable();
    out
}

pub fn run_icp(data: &Dataset, config: &IcpConfig) -> Result<IcpResult> {
    run_icp_on(
        &data.x,
        &data.y,
        &[EnvColumn::Categorical(data.env.clone())],
        &data.names,
        config,
    )
}

/// ICP over an explicit predictor matrix and one or more environment columns.
pub fn run_icp_on(
    x: &DMatrix<f64>,
    y: &[f64],
    envs: &[EnvColumn],
    names: &[String],
    config: &IcpConfig,
) -> Result<IcpResult> {
    config.test.validate()?;
    let p = x.ncols();
    if names.len() != p {
        bail_arg!("{} names for {p} predictors", names.len());
    }
    let candidates = match &config.candidates {
        Some(c) => {
            let mut c = c.clone();
            c.sort_unstable();
            c.dedup();
            if let Some(&bad) = c.iter().find(|&&j| j >= p) {
                bail_arg!("candidate column {bad} out of range (p = {p})");
            }
            c
        }
        None => (0..p).collect(),
    };
    let m = candidates.len();
    if m == 0 {
        bail_arg!("no candidate predictors");
    }
    let mut warnings = Vec::new();
    let max_set_size = match config.max_set_size {
        Some(k) => k.min(m),
        None if m <= FULL_ENUMERATION_MAX_P => m,
        None => {
            if m > 20 {
                bail_arg!("{m} candidates: set max_set_size explicitly");
            }
            warnings.push(format!(
                "{m} candidates: testing sets of size ≤ {DEFAULT_MAX_SET_SIZE} only"
            ));
            DEFAULT_MAX_SET_SIZE
        }
    };

    let ys = [y.to_vec()];
    let mut tested: Vec<SetResult> = Vec::new();
    let mut complete = true;
    for k in 0..=max_set_size {
        let mut locals = Vec::new();
        for_each_combination(m, k, |l| locals.push(l));
        let batch: Vec<Result<SetResult>> = locals
            .par_iter()
            .map(|&local| {
                let set: Vec<usize> = members(local).into_iter().map(|i| candidates[i]).collect();
                let mut test = config.test.clone();
                test.seed = derive_seed(config.test.seed, &[mask_of(&set)]);
                let xs = select_columns(x, &set);
                let out = cond_indep_test(&ys, envs, &xs, &test)?;
                Ok(SetResult {
                    set,
                    p_value: out.p_value,
                    diagnostics: out.diagnostics,
                })
            })
            .collect();
        for r in batch {
            tested.push(r?);
        }
        if config.early_exit && k < max_set_size {
            let accepted: Vec<Vec<usize>> = tested
                .iter()
                .filter(|r| r.p_value > config.test.alpha)
                .map(|r| r.set.clone())
                .collect();
            if !accepted.is_empty() && intersection(&accepted).is_empty() {
                complete = false;
                break;
            }
        }
    }
    if !complete {
        warnings.push("early exit: larger sets were not tested; defining sets are incomplete".into());
    }
    Ok(IcpResult {
        alpha: config.test.alpha,
        method: config.test.method,
        test: config.test.clone(),
        candidates,
        names: names.to_vec(),
        max_set_size,
        tested,
        accepted: Vec::new(),
        s_hat: Vec::new(),
        defining_sets: defining_sets(&[]),
        complete,
        warnings,
    }
    .assemble())
}
