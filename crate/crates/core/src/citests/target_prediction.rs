//! (D) Invariant target prediction: compare held-out errors of a model for
//! `Y` using `(X_S, E)` against one that cannot use `E`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use super::{split_rows, CITestConfig, CITestOutcome, Diagnostics, Env, Prepared, Regressor, TargetTest};
use crate::data::select_rows;
use crate::error::Result;
use crate::regress::{AdditiveModel, AdditiveParams, RandomForest};
use crate::rng::derived_stream;
use crate::stattests::{f_test_accuracy, wilcoxon_rank_sum, Alternative};

const TAG_SPLIT: u64 = 0xD001;
const TAG_PERMUTE: u64 = 0xD002;
const TAG_FOREST: u64 = 0xD003;

fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ca = a.ncols();
    DMatrix::from_fn(a.nrows(), ca + b.ncols(), |i, j| if j < ca { a[(i, j)] } else { b[(i, j - ca)] })
}

fn permute_rows(m: &DMatrix<f64>, seed: u64) -> DMatrix<f64> {
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.shuffle(&mut derived_stream(seed, &[TAG_PERMUTE]));
    select_rows(m, &idx)
}

/// Held-out residuals `(restricted, full)`.
fn residuals(p: &Prepared, regressor: Regressor, config: &CITestConfig, train: &[usize], test: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let y_train: Vec<f64> = train.iter().map(|&i| p.y[i]).collect();
    let y_test: Vec<f64> = test.iter().map(|&i| p.y[i]).collect();
    let resid = |pred: Vec<f64>| -> Vec<f64> { y_test.iter().zip(pred).map(|(y, f)| y - f).collect() };
    let d = p.xs.ncols();
    match regressor {
        Regressor::Forest => {
            let env = p.env.design();
            let full = hstack(&p.xs, &env);
            let restricted = hstack(&p.xs, &permute_rows(&env, config.seed));
            let mut params = config.forest_params(config.num_trees, config.sub_seed(TAG_FOREST));
            params.feature_names = Some(
                (0..d)
                    .map(|j| format!("x{j}"))
                    .chain((0..env.ncols()).map(|j| format!("e{j}")))
                    .collect(),
            );
            let mut out = Vec::with_capacity(2);
            for z in [&restricted, &full] {
                let f = RandomForest::fit_regression(&select_rows(z, train), &y_train, &params)?;
                out.push(resid(f.predict(&select_rows(z, test))?));
            }
            let full = out.pop().expect("two fits");
            Ok((out.pop().expect("two fits"), full))
        }
        Regressor::Gam => {
            let params = AdditiveParams::default();
            let xs_train = select_rows(&p.xs, train);
            let xs_test = select_rows(&p.xs, test);
            let restricted = if d == 0 {
                let mean = y_train.iter().sum::<f64>() / y_train.len() as f64;
                resid(vec![mean; test.len()])
            } else {
                let m = AdditiveModel::fit(&xs_train, &y_train, &vec![false; d], &params)?;
                resid(m.predict(&xs_test)?)
            };
            let env_col = DMatrix::from_column_slice(p.n(), 1, &p.env.numeric());
            let full_x = hstack(&p.xs, &env_col);
            let mut flags = vec![false; d];
            flags.push(matches!(p.env, Env::Categorical { .. }));
            let m = AdditiveModel::fit(&select_rows(&full_x, train), &y_train, &flags, &params)?;
            let full = resid(m.predict(&select_rows(&full_x, test))?);
            Ok((restricted, full))
        }
    }
}

pub(crate) fn run(p: &Prepared, regressor: Regressor, test: TargetTest, config: &CITestConfig) -> Result<CITestOutcome> {
    let (train, held_out) = split_rows(p, config, TAG_SPLIT)?;
    let (res_r, res_f) = residuals(p, regressor, config, &train, &held_out)?;
    let res = match test {
        TargetTest::FTest => {
            let sq = |r: &[f64]| r.iter().map(|v| v * v).collect::<Vec<_>>();
            f_test_accuracy(&sq(&res_r), &sq(&res_f))?
        }
        TargetTest::Wilcoxon => {
            let abs = |r: &[f64]| r.iter().map(|v| v.abs()).collect::<Vec<_>>();
            wilcoxon_rank_sum(&abs(&res_r), &abs(&res_f), Alternative::Greater)?
        }
    };
    let diag = Diagnostics {
        statistic: Some(res.statistic),
        subtests: vec![(res.method.to_string(), res.p_value)],
        correction: 1,
        flags: res.warnings,
    };
    Ok(CITestOutcome::new(res.p_value, config, diag))
}

/// Convenience wrapper: target prediction test.
pub fn invariant_target_prediction(
    y: &[f64],
    env: &super::EnvColumn,
    xs: &DMatrix<f64>,
    regressor: Regressor,
    test: TargetTest,
    config: &CITestConfig,
) -> Result<CITestOutcome> {
    let mut c = config.clone();
    c.method = super::Method::TargetPrediction(regressor, test);
    super::ci_test(y, env, xs, &c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citests::EnvColumn;
    use crate::rng::{std_normal, stream};

    fn sample(seed: u64, n: usize, shift: f64) -> (Vec<f64>, EnvColumn, DMatrix<f64>) {
        let mut rng = stream(seed);
        let env: Vec<i64> = (0..n).map(|i| (i % 2) as i64).collect();
        let x: Vec<f64> = env.iter().map(|&e| e as f64 + std_normal(&mut rng)).collect();
        let y = (0..n)
            .map(|i| x[i].tanh() + shift * env[i] as f64 + 0.5 * std_normal(&mut rng))
            .collect();
        (y, EnvColumn::Categorical(env), DMatrix::from_column_slice(n, 1, &x))
    }

    fn config(seed: u64) -> CITestConfig {
        CITestConfig { seed, num_trees: 100, ..Default::default() }
    }

    #[test]
    fn all_variants_detect_a_mean_shift() {
        for r in [Regressor::Gam, Regressor::Forest] {
            for t in [TargetTest::FTest, TargetTest::Wilcoxon] {
                let (y, env, xs) = sample(1, 300, 1.5);
                let out = invariant_target_prediction(&y, &env, &xs, r, t, &config(1)).unwrap();
                assert!(out.p_value < 0.01, "{r:?} {t:?}: p {}", out.p_value);
            }
        }
    }

    #[test]
    fn gam_f_test_size() {
        let rej = (0..60)
            .filter(|&s| {
                let (y, env, xs) = sample(20 + s, 150, 0.0);
                invariant_target_prediction(&y, &env, &xs, Regressor::Gam, TargetTest::FTest, &config(s))
                    .unwrap()
                    .reject
            })
            .count();
        assert!(rej <= 7, "{rej} of 60 rejected");
    }

    #[test]
    fn empty_set_uses_training_mean() {
        let (y, env, _) = sample(3, 90, 0.0);
        let out = invariant_target_prediction(&y, &env, &DMatrix::zeros(90, 0), Regressor::Gam, TargetTest::Wilcoxon, &config(3))
            .unwrap();
        assert!((0.0..=1.0).contains(&out.p_value));
    }
}
