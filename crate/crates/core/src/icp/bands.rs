//! Bootstrap confidence bands for the regression of `Y` on an accepted set,
//! and the resulting bounds on average causal effects.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::bootstrap::{block_bootstrap_resample, iid_resample, Panel};
use crate::data::Dataset;
use crate::error::{bail_arg, Error, Result};
use crate::regress::{RegressionModel, RegressorConfig};
use crate::rng::derive_seed;

/// Minimum number of bootstrap fits in a band.
pub const MIN_BOOTSTRAP: usize = 50;
/// Largest tolerated fraction of failed bootstrap refits.
pub const MAX_DROP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootstrapKind {
    IidResidual,
    /// Panel block bootstrap with the given block length.
    Block(usize),
}

impl FromStr for BootstrapKind {
    type Err = Error;

    /// `iid` or `block:<len>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "iid" || s == "iid_residual" => Ok(Self::IidResidual),
            Some(("block", len)) => match len.parse::<usize>() {
                Ok(l) if l >= 1 => Ok(Self::Block(l)),
                _ => bail_arg!("bad block length `{len}`"),
            },
            None if s == "block" => Ok(Self::Block(3)),
            _ => bail_arg!("unknown bootstrap kind `{s}` (expected iid or block:<len>)"),
        }
    }
}

impl fmt::Display for BootstrapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::IidResidual => f.write_str("iid"),
            Self::Block(l) => write!(f, "block:{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandConfig {
    pub regressor: RegressorConfig,
    pub num_bootstrap: usize,
    pub alpha: f64,
    pub kind: BootstrapKind,
    pub seed: u64,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            regressor: RegressorConfig::default(),
            num_bootstrap: 100,
            alpha: 0.05,
            kind: BootstrapKind::IidResidual,
            seed: 0,
        }
    }
}

/// Bootstrap-fitted regression functions of `Y` on the columns `set`; the
/// band at a point is the pointwise `(α/2, 1 - α/2)` envelope of the fits.
#[derive(Debug, Clone)]
pub struct ConfidenceBand {
    pub set: Vec<usize>,
    pub alpha: f64,
    pub fits: Vec<RegressionModel>,
    /// Training range `(min, max)` of each coordinate of `set`.
    pub hull: Vec<(f64, f64)>,
    pub dropped: usize,
    pub warnings: Vec<String>,
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl ConfidenceBand {
    pub fn from_fits(set: Vec<usize>, alpha: f64, fits: Vec<RegressionModel>, hull: Vec<(f64, f64)>) -> Result<Self> {
        if fits.is_empty() {
            bail_arg!("a band needs at least one fit");
        }
        if hull.len() != set.len() {
            bail_arg!("hull has {} coordinates for a set of size {}", hull.len(), set.len());
        }
        Ok(Self {
            set,
            alpha,
            fits,
            hull,
            dropped: 0,
            warnings: Vec::new(),
        })
    }

    /// Value of every bootstrap fit at `x_s` (coordinates of `set` only).
    pub fn evaluate(&self, x_s: &[f64]) -> Result<Vec<f64>> {
        if x_s.len() != self.set.len() {
            bail_arg!("band over {} coordinates evaluated at {}", self.set.len(), x_s.len());
        }
        let row = DMatrix::from_row_slice(1, x_s.len(), x_s);
        self.fits.iter().map(|g| Ok(g.predict(&row)?[0])).collect()
    }

    /// Pointwise `(lower, upper)` envelope at `x_s`.
    pub fn envelope(&self, x_s: &[f64]) -> Result<(f64, f64)> {
        let mut v = self.evaluate(x_s)?;
        v.sort_by(f64::total_cmp);
        Ok((
            quantile_sorted(&v, self.alpha / 2.0),
            quantile_sorted(&v, 1.0 - self.alpha / 2.0),
        ))
    }

    pub fn lower(&self, x_s: &[f64]) -> Result<f64> {
        Ok(self.envelope(x_s)?.0)
    }

    pub fn upper(&self, x_s: &[f64]) -> Result<f64> {
        Ok(self.envelope(x_s)?.1)
    }

    pub fn in_hull(&self, x_s: &[f64]) -> bool {
        x_s.iter().zip(&self.hull).all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    /// Coordinates of `set` picked from a full predictor vector.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.set.iter().map(|&j| x[j]).collect()
    }
}

fn with_seed(config: &RegressorConfig, seed: u64) -> RegressorConfig {
    let mut c = config.clone();
    c.forest.seed = seed;
    c
}

pub fn confidence_band(data: &Dataset, set: &[usize], config: &BandConfig) -> Result<ConfidenceBand> {
    if config.num_bootstrap < MIN_BOOTSTRAP {
        bail_arg!("need at least {MIN_BOOTSTRAP} bootstrap fits, got {}", config.num_bootstrap);
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        bail_arg!("alpha must lie in (0, 1)");
    }
    let mut set = set.to_vec();
    set.sort_unstable();
    if let Some(&bad) = set.iter().find(|&&j| j >= data.p()) {
        bail_arg!("column {bad} out of range");
    }
    let xs = data.columns(&set);
    let base = RegressionModel::fit(&xs, &data.y, &[], &with_seed(&config.regressor, derive_seed(config.seed, &[u64::MAX])))?;
    let fitted = base.predict(&xs)?;
    let mut resid: Vec<f64> = data.y.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let mean = resid.iter().sum::<f64>() / resid.len() as f64;
    resid.iter_mut().for_each(|r| *r -= mean);

    let panel = match (config.kind, &data.unit, &data.time) {
        (BootstrapKind::Block(_), Some(u), Some(t)) => Some(Panel { unit: u, time: t }),
        (BootstrapKind::Block(_), _, _) => bail_arg!("block bootstrap needs unit and time columns"),
        _ => None,
    };
    let mut fits = Vec::with_capacity(config.num_bootstrap);
    let mut warnings = Vec::new();
    for b in 0..config.num_bootstrap as u64 {
        let seed = derive_seed(config.seed, &[b]);
        let yb = match (config.kind, panel) {
            (BootstrapKind::Block(l), Some(p)) => block_bootstrap_resample(&fitted, &resid, p, l, seed)?,
            _ => iid_resample(&fitted, &resid, seed),
        };
        match RegressionModel::fit(&xs, &yb, &[], &with_seed(&config.regressor, derive_seed(seed, &[1]))) {
            Ok(g) => fits.push(g),
            Err(e) => warnings.push(format!("bootstrap fit {b} dropped: {e}")),
        }
    }
    let dropped = config.num_bootstrap - fits.len();
    if dropped as f64 > MAX_DROP_FRACTION * config.num_bootstrap as f64 {
        return Err(Error::Runtime(format!(
            "{dropped} of {} bootstrap fits failed",
            config.num_bootstrap
        )));
    }
    let hull = (0..set.len())
        .map(|j| {
            xs.column(j)
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
        })
        .collect();
    Ok(ConfidenceBand {
        set,
        alpha: config.alpha,
        fits,
        hull,
        dropped,
        warnings,
    })
}

/// One band per set, with per-set seeds.
pub fn confidence_bands(data: &Dataset, sets: &[Vec<usize>], config: &BandConfig) -> Result<Vec<ConfidenceBand>> {
    sets.iter()
        .map(|s| {
            let mut c = config.clone();
            c.seed = derive_seed(config.seed, &[super::defining::mask_of(s)]);
            confidence_band(data, s, &c)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AceInterval {
    /// `(set, lower, upper)` for each band.
    pub per_set: Vec<(Vec<usize>, f64, f64)>,
    /// Disjoint merged intervals, ascending.
    pub union: Vec<(f64, f64)>,
    pub hull: (f64, f64),
    /// Joint coverage guarantee `1 - 2α`.
    pub level: f64,
    /// Some query coordinate lies outside a band's training range.
    pub extrapolation: bool,
}

/// Merges intervals into a sorted list of disjoint ones.
pub fn merge_intervals(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (lo, hi) in v {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Bounds on `E[Y | do(X = x̃)] - E[Y | do(X = x)]` from the bands of the
/// accepted sets; `x_tilde` and `x` are full predictor vectors.
pub fn ace_bounds(bands: &[ConfidenceBand], x_tilde: &[f64], x: &[f64]) -> Result<AceInterval> {
    if bands.is_empty() {
        bail_arg!("no accepted sets: average causal effect bounds are undefined");
    }
    if x_tilde.len() != x.len() {
        bail_arg!("query points differ in dimension");
    }
    let mut per_set = Vec::with_capacity(bands.len());
    let mut extrapolation = false;
    for band in bands {
        if let Some(&j) = band.set.iter().find(|&&j| j >= x.len()) {
            bail_arg!("query points have {} coordinates, band uses column {j}", x.len());
        }
        let (xt, xb) = (band.project(x_tilde), band.project(x));
        extrapolation |= !band.in_hull(&xt) || !band.in_hull(&xb);
        let a = band.evaluate(&xt)?;
        let b = band.evaluate(&xb)?;
        let (lo, hi) = a
            .iter()
            .zip(&b)
            .map(|(u, v)| u - v)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        per_set.push((band.set.clone(), lo, hi));
    }
    let union = merge_intervals(per_set.iter().map(|(_, lo, hi)| (*lo, *hi)).collect());
    let hull = (union[0].0, union.last().expect("nonempty").1);
    let alpha = bands.iter().map(|b| b.alpha).fold(0.0, f64::max);
    Ok(AceInterval {
        per_set,
        union,
        hull,
        level: 1.0 - 2.0 * alpha,
        extrapolation,
    })
}
