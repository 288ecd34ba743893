//! (F) Invariant conditional quantile prediction: under invariance, the
//! indicator `Y > Q̂_{1-β}(X_S)` is independent of the environment for every
//! level `β`. Quantiles come from out-of-bag quantile regression forest
//! weights that never include the row's own response.

use nalgebra::DMatrix;

use super::{CITestConfig, CITestOutcome, Diagnostics, Prepared};
use crate::error::Result;
use crate::regress::QuantileForest;
use crate::stattests::{fisher_exact_2x2, Alternative};

const TAG_FOREST: u64 = 0xF001;

/// Empirical quantile: smallest `y` with `F_n(y) ≥ q`.
fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let k = ((q * n as f64) * (1.0 - 1e-12)).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

/// Per-row quantile predictions, one vector per tested level `1 - β`.
fn predicted_quantiles(p: &Prepared, levels: &[f64], config: &CITestConfig) -> Result<Vec<Vec<f64>>> {
    let n = p.n();
    if p.xs.ncols() == 0 {
        let mut sorted = p.y.clone();
        sorted.sort_by(f64::total_cmp);
        return Ok(levels.iter().map(|&q| vec![empirical_quantile(&sorted, q); n]).collect());
    }
    let params = config.forest_params(config.num_trees, config.sub_seed(TAG_FOREST));
    let qf = QuantileForest::fit(&p.xs, &p.y, &params)?;
    let mut out = vec![Vec::with_capacity(n); levels.len()];
    for i in 0..n {
        for (l, q) in qf.oob_quantiles(i, levels)?.into_iter().enumerate() {
            out[l].push(q);
        }
    }
    Ok(out)
}

pub(crate) fn run(p: &Prepared, config: &CITestConfig) -> Result<CITestOutcome> {
    let (codes, k) = p.categorical()?;
    let levels: Vec<f64> = config.quantiles.iter().map(|b| 1.0 - b).collect();
    let preds = predicted_quantiles(p, &levels, config)?;
    let envs = if k == 2 { 1 } else { k };
    let mut diag = Diagnostics::default();
    let mut ps = Vec::new();
    for (beta, q) in config.quantiles.iter().zip(&preds) {
        let exceed: Vec<bool> = p.y.iter().zip(q).map(|(y, q)| y > q).collect();
        let total = exceed.iter().filter(|&&b| b).count();
        for e in 0..envs as u32 {
            let mut table = [[0i64; 2]; 2];
            for (&c, &x) in codes.iter().zip(&exceed) {
                table[usize::from(!x)][usize::from(c != e)] += 1;
            }
            let pv = if total == 0 || total == p.n() {
                diag.flags.push(format!("beta={beta}: exceedance indicator is constant"));
                1.0
            } else {
                fisher_exact_2x2(table, Alternative::TwoSided)?.p_value
            };
            diag.subtests.push((format!("beta={beta}:env{e}"), pv));
            ps.push(pv);
        }
    }
    diag.correction = ps.len();
    Ok(CITestOutcome::new(super::bonferroni(&ps), config, diag))
}

/// Convenience wrapper: conditional quantile test.
pub fn invariant_conditional_quantile(
    y: &[f64],
    env: &super::EnvColumn,
    xs: &DMatrix<f64>,
    config: &CITestConfig,
) -> Result<CITestOutcome> {
    let mut c = config.clone();
    c.method = super::Method::ConditionalQuantile;
    super::ci_test(y, env, xs, &c)
}
