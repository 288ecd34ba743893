//! (C) Invariant environment prediction: if `E` can be predicted better
//! from `(Y, X_S)` than from `(Y', X_S)` with `Y'` a permutation of `Y`,
//! then `Y` carries information about `E` beyond `X_S`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use super::{split_rows, CITestConfig, CITestOutcome, Diagnostics, Prepared};
use crate::data::select_rows;
use crate::error::Result;
use crate::regress::RandomForest;
use crate::rng::derived_stream;
use crate::stattests::{two_proportion_test, Alternative};

const TAG_SPLIT: u64 = 0xC001;
const TAG_PERMUTE: u64 = 0xC002;
const TAG_FOREST: u64 = 0xC003;

fn with_response(y: &[f64], xs: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(y.len(), xs.ncols() + 1, |i, j| if j == 0 { y[i] } else { xs[(i, j - 1)] })
}

pub(crate) fn run(p: &Prepared, config: &CITestConfig) -> Result<CITestOutcome> {
    let (codes, k) = p.categorical()?;
    let (train, test) = split_rows(p, config, TAG_SPLIT)?;
    let mut y_perm = p.y.clone();
    y_perm.shuffle(&mut derived_stream(config.seed, &[TAG_PERMUTE]));

    let mut params = config.forest_params(config.num_trees, config.sub_seed(TAG_FOREST));
    // Shared names and seed pair the two forests' feature sampling.
    params.feature_names = Some(
        std::iter::once("y".to_string())
            .chain((0..p.xs.ncols()).map(|j| format!("x{j}")))
            .collect(),
    );
    let labels: Vec<u32> = train.iter().map(|&i| codes[i]).collect();
    let truth: Vec<u32> = test.iter().map(|&i| codes[i]).collect();
    let mut correct = [0u64; 2];
    for (slot, y) in [&p.y, &y_perm].into_iter().enumerate() {
        let z = with_response(y, &p.xs);
        let forest = RandomForest::fit_classification(&select_rows(&z, &train), &labels, k, &params)?;
        let pred = forest.predict_classes(&select_rows(&z, &test))?;
        correct[slot] = pred.iter().zip(&truth).filter(|(a, b)| a == b).count() as u64;
    }
    let m = test.len() as u64;
    let res = two_proportion_test(correct[0], m, correct[1], m, Alternative::Greater)?;
    let diag = Diagnostics {
        statistic: Some(res.statistic),
        subtests: vec![
            ("accuracy".into(), correct[0] as f64 / m as f64),
            ("accuracy_permuted".into(), correct[1] as f64 / m as f64),
            ("prop_test".into(), res.p_value),
        ],
        correction: 1,
        flags: res.warnings,
    };
    Ok(CITestOutcome::new(res.p_value, config, diag))
}

/// Convenience wrapper: environment prediction test.
pub fn invariant_environment_prediction(
    y: &[f64],
    env: &super::EnvColumn,
    xs: &DMatrix<f64>,
    config: &CITestConfig,
) -> Result<CITestOutcome> {
    let mut c = config.clone();
    c.method = super::Method::EnvironmentPrediction;
    super::ci_test(y, env, xs, &c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citests::EnvColumn;
    use crate::rng::{std_normal, stream};

    fn sample(seed: u64, n: usize, shift: f64) -> (Vec<f64>, EnvColumn, DMatrix<f64>) {
        let mut rng = stream(seed);
        let env: Vec<i64> = (0..n).map(|i| (i % 3) as i64).collect();
        let x: Vec<f64> = env.iter().map(|&e| e as f64 + std_normal(&mut rng)).collect();
        let y = (0..n)
            .map(|i| x[i] * x[i] / 3.0 + shift * (env[i] == 2) as i64 as f64 + 0.5 * std_normal(&mut rng))
            .collect();
        (y, EnvColumn::Categorical(env), DMatrix::from_column_slice(n, 1, &x))
    }

    fn config(seed: u64) -> CITestConfig {
        CITestConfig { seed, num_trees: 100, ..Default::default() }
    }

    #[test]
    fn rejects_under_mean_shift() {
        let (y, env, xs) = sample(1, 600, 2.0);
        let out = invariant_environment_prediction(&y, &env, &xs, &config(1)).unwrap();
        assert!(out.p_value < 0.01, "p {}", out.p_value);
    }

    #[test]
    fn size_is_controlled() {
        let rej = (0..40)
            .filter(|&s| {
                let (y, env, xs) = sample(50 + s, 150, 0.0);
                invariant_environment_prediction(&y, &env, &xs, &config(s)).unwrap().reject
            })
            .count();
        assert!(rej <= 5, "{rej} of 40 rejected");
    }

    #[test]
    fn continuous_env_needs_bins() {
        let (y, _, xs) = sample(2, 60, 0.0);
        let env = EnvColumn::Continuous((0..60).map(f64::from).collect());
        assert!(invariant_environment_prediction(&y, &env, &xs, &config(0)).is_err());
    }
}
