//! Tests of `Y ⟂ E | X_S`, the invariance hypothesis for a predictor set `S`.
//!
//! Every test first puts the rows in a canonical order (sorted by
//! `(y, X_S, E)`) and recodes categorical environments by first appearance
//! in that order. Results therefore do not depend on the input row order or
//! on the names of the environment labels.

mod conditional_quantile;
mod env_prediction;
mod kci;
mod residual_distribution;
mod residual_prediction;
mod target_prediction;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

pub use conditional_quantile::invariant_conditional_quantile;
pub use env_prediction::invariant_environment_prediction;
pub use kci::kci_test;
pub use residual_distribution::invariant_residual_distribution;
pub use residual_prediction::residual_prediction_test;
pub use target_prediction::invariant_target_prediction;

use crate::data::encode_levels;
use crate::error::{bail_arg, Error, Result};
use crate::regress::FeatureKind;
use crate::rng::{derive_seed, derived_stream};

/// Regressor used inside tests (D) and (E).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regressor {
    Gam,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetTest {
    FTest,
    Wilcoxon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionTest {
    KolmogorovSmirnov,
    /// One-vs-rest Wilcoxon tests combined with a global Levene test.
    LeveneWilcoxon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// (A) kernel conditional independence.
    Kci,
    /// (B) residual prediction with the given basis.
    ResidualPrediction(FeatureKind),
    /// (C) invariant environment prediction.
    EnvironmentPrediction,
    /// (D) invariant target prediction.
    TargetPrediction(Regressor, TargetTest),
    /// (E) invariant residual distribution.
    ResidualDistribution(Regressor, DistributionTest),
    /// (F) invariant conditional quantile prediction.
    ConditionalQuantile,
}

impl Method {
    /// Whether the method accepts only categorical environments.
    pub fn needs_categorical_env(self) -> bool {
        matches!(
            self,
            Method::EnvironmentPrediction
                | Method::ResidualDistribution(..)
                | Method::ConditionalQuantile
        )
    }

    pub fn all() -> Vec<Method> {
        use DistributionTest::*;
        use Regressor::*;
        use TargetTest::*;
        vec![
            Method::Kci,
            Method::ResidualPrediction(FeatureKind::Fourier),
            Method::ResidualPrediction(FeatureKind::NystromRbf),
            Method::ResidualPrediction(FeatureKind::NystromPoly),
            Method::ResidualPrediction(FeatureKind::PolyBasis),
            Method::EnvironmentPrediction,
            Method::TargetPrediction(Gam, FTest),
            Method::TargetPrediction(Gam, Wilcoxon),
            Method::TargetPrediction(Forest, FTest),
            Method::TargetPrediction(Forest, Wilcoxon),
            Method::ResidualDistribution(Gam, KolmogorovSmirnov),
            Method::ResidualDistribution(Gam, LeveneWilcoxon),
            Method::ResidualDistribution(Forest, KolmogorovSmirnov),
            Method::ResidualDistribution(Forest, LeveneWilcoxon),
            Method::ConditionalQuantile,
        ]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let reg = |r: &Regressor| match r {
            Regressor::Gam => "gam",
            Regressor::Forest => "rf",
        };
        match self {
            Method::Kci => f.write_str("kci"),
            Method::ResidualPrediction(k) => write!(f, "rp:{k}"),
            Method::EnvironmentPrediction => f.write_str("env-pred"),
            Method::TargetPrediction(r, t) => write!(
                f,
                "target-pred:{}:{}",
                reg(r),
                match t {
                    TargetTest::FTest => "f",
                    TargetTest::Wilcoxon => "wilcoxon",
                }
            ),
            Method::ResidualDistribution(r, t) => write!(
                f,
                "resid-dist:{}:{}",
                reg(r),
                match t {
                    DistributionTest::KolmogorovSmirnov => "ks",
                    DistributionTest::LeveneWilcoxon => "levene-wilcoxon",
                }
            ),
            Method::ConditionalQuantile => f.write_str("cond-quantile"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts the canonical names printed by `Display`, their short forms
    /// (`rp`, `target-pred`, `resid-dist` use default sub-options), and the
    /// letter codes `A`..`F` with roman-numeral variants such as `E-ii`.
    fn from_str(s: &str) -> Result<Self> {
        use DistributionTest::*;
        use Regressor::*;
        use TargetTest::*;
        let lower = s.trim().to_ascii_lowercase();
        let parts: Vec<&str> = lower.split([':', '-', '_']).collect();
        let variant = |v: &str| match v {
            "i" | "1" => Some(0),
            "ii" | "2" => Some(1),
            "iii" | "3" => Some(2),
            "iv" | "4" => Some(3),
            _ => None,
        };
        let bad = || Error::InvalidArgument(format!("unknown test method `{s}`"));
        let regressor = |v: &str| match v {
            "gam" => Ok(Gam),
            "rf" | "forest" => Ok(Forest),
            _ => Err(bad()),
        };
        Ok(match parts.as_slice() {
            ["kci"] | ["a"] => Method::Kci,
            ["rp"] | ["b"] => Method::ResidualPrediction(FeatureKind::Fourier),
            ["b", v] => Method::ResidualPrediction(
                [
                    FeatureKind::Fourier,
                    FeatureKind::NystromRbf,
                    FeatureKind::NystromPoly,
                    FeatureKind::PolyBasis,
                ][variant(v).ok_or_else(bad)?],
            ),
            ["rp", rest @ ..] => Method::ResidualPrediction(rest.join("_").parse()?),
            ["env", "pred"] | ["env"] | ["c"] => Method::EnvironmentPrediction,
            ["target", "pred"] | ["d"] => Method::TargetPrediction(Gam, FTest),
            ["d", v] => {
                let k = variant(v).ok_or_else(bad)?;
                Method::TargetPrediction(
                    if k < 2 { Gam } else { Forest },
                    if k % 2 == 0 { FTest } else { Wilcoxon },
                )
            }
            ["target", "pred", r, t] => Method::TargetPrediction(
                regressor(r)?,
                match *t {
                    "f" => FTest,
                    "wilcoxon" => Wilcoxon,
                    _ => return Err(bad()),
                },
            ),
            ["resid", "dist"] | ["e"] => Method::ResidualDistribution(Gam, KolmogorovSmirnov),
            ["e", v] => {
                let k = variant(v).ok_or_else(bad)?;
                Method::ResidualDistribution(
                    if k < 2 { Gam } else { Forest },
                    if k % 2 == 0 { KolmogorovSmirnov } else { LeveneWilcoxon },
                )
            }
            ["resid", "dist", r, t @ ..] => Method::ResidualDistribution(
                regressor(r)?,
                match t {
                    ["ks"] => KolmogorovSmirnov,
                    ["levene", "wilcoxon"] | ["lw"] => LeveneWilcoxon,
                    _ => return Err(bad()),
                },
            ),
            ["cond", "quantile"] | ["quantile"] | ["f"] => Method::ConditionalQuantile,
            _ => return Err(bad()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CITestConfig {
    pub method: Method,
    pub alpha: f64,
    pub seed: u64,
    /// Simulated null samples for residual prediction.
    pub num_sims: usize,
    /// Levels β; the tested quantiles are `1 - β`.
    pub quantiles: Vec<f64>,
    pub train_fraction: f64,
    /// Stratify the train/test split by environment.
    pub stratify: bool,
    /// KCI regularization; `None` means `1e-3 · n`.
    pub kci_epsilon: Option<f64>,
    /// Trees for forests in tests (C)–(F).
    pub num_trees: usize,
    /// Trees for the forests inside residual prediction.
    pub rp_trees: usize,
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    /// Random features for residual prediction; `None` means `⌈n/4⌉`.
    pub num_features: Option<usize>,
    /// Discretize a continuous environment into this many quantile bins for
    /// methods that need categories.
    pub env_bins: Option<usize>,
}

impl Default for CITestConfig {
    fn default() -> Self {
        Self {
            method: Method::ConditionalQuantile,
            alpha: 0.05,
            seed: 0,
            num_sims: 250,
            quantiles: vec![0.1, 0.5, 0.9],
            train_fraction: 2.0 / 3.0,
            stratify: true,
            kci_epsilon: None,
            num_trees: 500,
            rp_trees: 50,
            mtry: None,
            min_leaf: 5,
            num_features: None,
            env_bins: None,
        }
    }
}

impl CITestConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail_arg!("alpha must lie in (0, 1), got {}", self.alpha);
        }
        if self.num_sims < 50 {
            bail_arg!("need at least 50 simulated null samples, got {}", self.num_sims);
        }
        if self.quantiles.is_empty() || self.quantiles.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            bail_arg!("quantile levels must be a nonempty subset of (0, 1)");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            bail_arg!("train fraction must lie in (0, 1)");
        }
        if self.num_trees == 0 || self.rp_trees == 0 {
            bail_arg!("forests need at least one tree");
        }
        if matches!(self.env_bins, Some(k) if k < 2) {
            bail_arg!("env_bins must be at least 2");
        }
        Ok(())
    }

    pub(crate) fn forest_params(&self, trees: usize, seed: u64) -> crate::regress::ForestParams {
        crate::regress::ForestParams {
            num_trees: trees,
            mtry: self.mtry,
            min_leaf: self.min_leaf,
            seed,
            ..Default::default()
        }
    }

    /// Seed for a named sub-stream of this test invocation.
    pub(crate) fn sub_seed(&self, tag: u64) -> u64 {
        derive_seed(self.seed, &[tag])
    }
}

/// One environment variable.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvColumn {
    Categorical(Vec<i64>),
    Continuous(Vec<f64>),
}

impl EnvColumn {
    pub fn len(&self) -> usize {
        match self {
            EnvColumn::Categorical(v) => v.len(),
            EnvColumn::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn key(&self, i: usize) -> f64 {
        match self {
            EnvColumn::Categorical(v) => v[i] as f64,
            EnvColumn::Continuous(v) => v[i],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub statistic: Option<f64>,
    /// Named p-values of the individual sub-tests.
    pub subtests: Vec<(String, f64)>,
    /// Bonferroni factor `t` applied to the minimum sub-test p-value.
    pub correction: usize,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CITestOutcome {
    pub p_value: f64,
    pub reject: bool,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

impl CITestOutcome {
    pub(crate) fn new(p_value: f64, config: &CITestConfig, diagnostics: Diagnostics) -> Self {
        let p_value = if p_value.is_nan() { 1.0 } else { p_value.clamp(0.0, 1.0) };
        Self {
            p_value,
            reject: p_value <= config.alpha,
            method: config.method,
            diagnostics,
        }
    }
}

/// Environment after canonical reordering.
#[derive(Debug, Clone)]
pub(crate) enum Env {
    /// Codes `0..k` in order of first appearance.
    Categorical { codes: Vec<u32>, k: usize },
    Continuous(Vec<f64>),
}

impl Env {
    pub(crate) fn numeric(&self) -> Vec<f64> {
        match self {
            Env::Categorical { codes, .. } => codes.iter().map(|&c| f64::from(c)).collect(),
            Env::Continuous(v) => v.clone(),
        }
    }

    /// Design columns: one-hot indicators for categories, the value otherwise.
    pub(crate) fn design(&self) -> DMatrix<f64> {
        match self {
            Env::Categorical { codes, k } => {
                DMatrix::from_fn(codes.len(), *k, |i, j| f64::from(codes[i] as usize == j))
            }
            Env::Continuous(v) => DMatrix::from_column_slice(v.len(), 1, v),
        }
    }
}

/// A test input in canonical row order.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub y: Vec<f64>,
    pub xs: DMatrix<f64>,
    pub env: Env,
}

impl Prepared {
    pub(crate) fn n(&self) -> usize {
        self.y.len()
    }

    pub(crate) fn categorical(&self) -> Result<(&[u32], usize)> {
        match &self.env {
            Env::Categorical { codes, k } => Ok((codes, *k)),
            Env::Continuous(_) => bail_arg!("this test needs a categorical environment"),
        }
    }
}

fn quantile_bins(v: &[f64], bins: usize) -> Vec<i64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let cuts: Vec<f64> = (1..bins).map(|b| sorted[(b * n / bins).min(n - 1)]).collect();
    v.iter().map(|x| cuts.partition_point(|c| c <= x) as i64).collect()
}

pub(crate) fn prepare(
    y: &[f64],
    env: &EnvColumn,
    xs: &DMatrix<f64>,
    config: &CITestConfig,
) -> Result<Prepared> {
    config.validate()?;
    let n = y.len();
    if env.len() != n || xs.nrows() != n {
        bail_arg!(
            "length mismatch: y has {n} rows, env {}, X_S {}",
            env.len(),
            xs.nrows()
        );
    }
    let env_finite = match env {
        EnvColumn::Categorical(_) => true,
        EnvColumn::Continuous(v) => v.iter().all(|e| e.is_finite()),
    };
    if y.iter().chain(xs.iter()).any(|v| !v.is_finite()) || !env_finite {
        bail_arg!("non-finite input value");
    }
    let binned;
    let env = match (env, config.method.needs_categorical_env(), config.env_bins) {
        (EnvColumn::Continuous(v), true, Some(k)) => {
            binned = EnvColumn::Categorical(quantile_bins(v, k));
            &binned
        }
        (EnvColumn::Continuous(_), true, None) => bail_arg!(
            "method {} needs a categorical environment; set env_bins to discretize",
            config.method
        ),
        _ => env,
    };
    let d = xs.ncols();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        y[a].total_cmp(&y[b])
            .then_with(|| {
                (0..d)
                    .map(|j| xs[(a, j)].total_cmp(&xs[(b, j)]))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| env.key(a).total_cmp(&env.key(b)))
    });
    let y2: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let xs2 = DMatrix::from_fn(n, d, |i, j| xs[(order[i], j)]);
    let env2 = match env {
        EnvColumn::Categorical(v) => {
            let labels: Vec<i64> = order.iter().map(|&i| v[i]).collect();
            let (codes, k) = encode_levels(&labels);
            if k < 2 {
                return Err(Error::TooFewEnvironments(k));
            }
            Env::Categorical { codes, k }
        }
        EnvColumn::Continuous(v) => Env::Continuous(order.iter().map(|&i| v[i]).collect()),
    };
    Ok(Prepared {
        y: y2,
        xs: xs2,
        env: env2,
    })
}

fn run_method(p: &Prepared, config: &CITestConfig) -> Result<CITestOutcome> {
    match config.method {
        Method::Kci => kci::run(p, config),
        Method::ResidualPrediction(kind) => residual_prediction::run(p, kind, config),
        Method::EnvironmentPrediction => env_prediction::run(p, config),
        Method::TargetPrediction(r, t) => target_prediction::run(p, r, t, config),
        Method::ResidualDistribution(r, t) => residual_distribution::run(p, r, t, config),
        Method::ConditionalQuantile => conditional_quantile::run(p, config),
    }
}

/// Runs the configured test for a single response and environment column.
pub fn ci_test(
    y: &[f64],
    env: &EnvColumn,
    xs: &DMatrix<f64>,
    config: &CITestConfig,
) -> Result<CITestOutcome> {
    let p = prepare(y, env, xs, config)?;
    run_method(&p, config)
}

/// Runs the configured test for every (response column, environment column)
/// pair and combines them as `d · min p` (capped at 1), `d` being the number
/// of pairs.
pub fn cond_indep_test(
    ys: &[Vec<f64>],
    envs: &[EnvColumn],
    xs: &DMatrix<f64>,
    config: &CITestConfig,
) -> Result<CITestOutcome> {
    if ys.is_empty() || envs.is_empty() {
        bail_arg!("need at least one response and one environment column");
    }
    if ys.len() == 1 && envs.len() == 1 {
        return ci_test(&ys[0], &envs[0], xs, config);
    }
    let mut parts = Vec::new();
    for (a, y) in ys.iter().enumerate() {
        for (b, env) in envs.iter().enumerate() {
            let mut c = config.clone();
            c.seed = derive_seed(config.seed, &[a as u64, b as u64]);
            let out = ci_test(y, env, xs, &c)?;
            parts.push((format!("y{}:env{}", a + 1, b + 1), out));
        }
    }
    let d = parts.len();
    let min = parts.iter().map(|(_, o)| o.p_value).fold(1.0, f64::min);
    let mut diag = Diagnostics {
        correction: d,
        ..Default::default()
    };
    for (name, o) in parts {
        diag.subtests.push((name, o.p_value));
        diag.flags.extend(o.diagnostics.flags);
    }
    Ok(CITestOutcome::new((d as f64 * min).min(1.0), config, diag))
}

/// Bonferroni combination `min(1, t · min p)` of the listed p-values.
pub(crate) fn bonferroni(ps: &[f64]) -> f64 {
    let min = ps.iter().copied().fold(1.0, f64::min);
    (ps.len() as f64 * min).min(1.0)
}

/// Stratified (when categorical and requested) train/test split; returns
/// sorted row indices.
pub(crate) fn split_rows(p: &Prepared, config: &CITestConfig, tag: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    use rand::seq::SliceRandom;
    let n = p.n();
    let mut rng = derived_stream(config.seed, &[tag]);
    let groups: Vec<Vec<usize>> = match (&p.env, config.stratify) {
        (Env::Categorical { codes, k }, true) => {
            let mut g = vec![Vec::new(); *k];
            for (i, &c) in codes.iter().enumerate() {
                g[c as usize].push(i);
            }
            g
        }
        _ => vec![(0..n).collect()],
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut g in groups {
        g.shuffle(&mut rng);
        let cut = ((g.len() as f64) * config.train_fraction).round() as usize;
        let cut = cut.clamp(1.min(g.len()), g.len().saturating_sub(1));
        train.extend_from_slice(&g[..cut]);
        test.extend_from_slice(&g[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    if let Env::Categorical { codes, k } = &p.env {
        let mut seen = vec![false; *k];
        for &i in &train {
            seen[codes[i] as usize] = true;
        }
        if seen.iter().any(|s| !s) {
            bail_arg!("an environment has no rows in the training split");
        }
    }
    if test.len() < 3 {
        bail_arg!("test split has only {} rows", test.len());
    }
    Ok((train, test))
}
