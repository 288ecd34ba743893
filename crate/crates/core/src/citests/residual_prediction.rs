//! (B) Residual prediction: regress `Y` on a random-feature or polynomial
//! basis of `X_S` by least squares, then ask whether a forest on `(E, X_S)`
//! can predict the scaled residuals (or their absolute values). The null
//! distribution of the forest's out-of-bag skill is simulated by projecting
//! Gaussian noise off the least-squares column space.

use nalgebra::DMatrix;

use super::{CITestConfig, CITestOutcome, Diagnostics, Prepared};
use crate::error::Result;
use crate::regress::{ols_fit, FeatureKind, FeatureMap, KernelParams, RandomForest};
use crate::rng::{derive_seed, derived_stream, std_normal};

const TAG_FEATURES: u64 = 0xB001;
const TAG_NOISE: u64 = 0xB002;
const TAG_FOREST: u64 = 0xB003;

fn standardize_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        for v in col.iter_mut() {
            *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
        }
    }
    out
}

/// Rescales to unit sample standard deviation; `None` if constant.
fn unit_scale(r: &[f64]) -> Option<Vec<f64>> {
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (sd > 1e-12 * (1.0 + mean.abs())).then(|| r.iter().map(|v| v / sd).collect())
}

fn population_var(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Out-of-bag skill `var(t) - MSE_oob` of a forest predicting `t` from `z`,
/// for `t = r` and `t = |r|`.
fn skills(z: &DMatrix<f64>, r: &[f64], config: &CITestConfig, seed: u64) -> Result<[f64; 2]> {
    let abs: Vec<f64> = r.iter().map(|v| v.abs()).collect();
    let mut out = [0.0; 2];
    for (k, target) in [r, abs.as_slice()].into_iter().enumerate() {
        let params = config.forest_params(config.rp_trees, derive_seed(seed, &[k as u64]));
        let forest = RandomForest::fit_regression(z, target, &params)?;
        let mse = forest.oob_mse(target);
        out[k] = population_var(target) - if mse.is_nan() { population_var(target) } else { mse };
    }
    Ok(out)
}

pub(crate) fn run(p: &Prepared, kind: FeatureKind, config: &CITestConfig) -> Result<CITestOutcome> {
    let n = p.n();
    let d = p.xs.ncols();
    let h = if d == 0 {
        DMatrix::from_element(n, 1, 1.0)
    } else {
        let xs = standardize_columns(&p.xs);
        let m = config.num_features.unwrap_or(n.div_ceil(4)).clamp(1, n);
        let map = FeatureMap::new(&xs, kind, m, KernelParams::default(), config.sub_seed(TAG_FEATURES))?;
        let feats = map.apply(&xs)?;
        DMatrix::from_fn(n, feats.ncols() + 1, |i, j| if j == 0 { 1.0 } else { feats[(i, j - 1)] })
    };
    let fit = ols_fit(&h, &p.y)?;
    let mut diag = Diagnostics {
        correction: 2,
        ..Default::default()
    };
    let Some(r) = unit_scale(&fit.residuals) else {
        diag.flags.push("residuals are constant".into());
        return Ok(CITestOutcome::new(1.0, config, diag));
    };

    let env = p.env.design();
    let z = DMatrix::from_fn(n, env.ncols() + d, |i, j| {
        if j < env.ncols() {
            env[(i, j)]
        } else {
            p.xs[(i, j - env.ncols())]
        }
    });
    let forest_seed = config.sub_seed(TAG_FOREST);
    let observed = skills(&z, &r, config, derive_seed(forest_seed, &[u64::MAX]))?;
    let mut exceed = [0usize; 2];
    let mut done = 0usize;
    for b in 0..config.num_sims {
        let mut rng = derived_stream(config.seed, &[TAG_NOISE, b as u64]);
        let noise: Vec<f64> = (0..n).map(|_| std_normal(&mut rng)).collect();
        let Some(rb) = unit_scale(&fit.project_out(&noise)) else {
            continue;
        };
        let sim = skills(&z, &rb, config, derive_seed(forest_seed, &[b as u64]))?;
        done += 1;
        for k in 0..2 {
            if sim[k] >= observed[k] {
                exceed[k] += 1;
            }
        }
    }
    if done < config.num_sims {
        diag.flags.push(format!("{} degenerate null samples skipped", config.num_sims - done));
    }
    let pv: Vec<f64> = exceed
        .iter()
        .map(|&c| (1 + c) as f64 / (done + 1) as f64)
        .collect();
    diag.statistic = Some(observed[0]);
    diag.subtests.push(("mean".into(), pv[0]));
    diag.subtests.push(("abs".into(), pv[1]));
    let p_value = (2.0 * pv[0].min(pv[1])).min(1.0);
    Ok(CITestOutcome::new(p_value, config, diag))
}

/// Convenience wrapper: residual prediction test with the given basis.
pub fn residual_prediction_test(
    y: &[f64],
    env: &super::EnvColumn,
    xs: &DMatrix<f64>,
    kind: FeatureKind,
    config: &CITestConfig,
) -> Result<CITestOutcome> {
    let mut c = config.clone();
    c.method = super::Method::ResidualPrediction(kind);
    super::ci_test(y, env, xs, &c)
}
