//! (E) Invariant residual distribution: fit `Y` on `X_S` pooled over all
//! environments and compare the residual distribution of each environment
//! with that of the rest.

use nalgebra::DMatrix;

use super::{bonferroni, CITestConfig, CITestOutcome, Diagnostics, DistributionTest, Prepared, Regressor};
use crate::error::{bail_arg, Result};
use crate::regress::{AdditiveModel, AdditiveParams, RandomForest};
use crate::stattests::{ks_two_sample, levene, wilcoxon_rank_sum, Alternative, LeveneCenter};

const TAG_FOREST: u64 = 0xE001;

/// Pooled residuals: in-sample for the additive model, out-of-bag for forests.
pub(crate) fn pooled_residuals(p: &Prepared, regressor: Regressor, config: &CITestConfig) -> Result<(Vec<f64>, Vec<String>)> {
    let n = p.n();
    if p.xs.ncols() == 0 {
        let mean = p.y.iter().sum::<f64>() / n as f64;
        return Ok((p.y.iter().map(|v| v - mean).collect(), Vec::new()));
    }
    Ok(match regressor {
        Regressor::Gam => {
            let m = AdditiveModel::fit(&p.xs, &p.y, &vec![false; p.xs.ncols()], &AdditiveParams::default())?;
            let flags = if m.converged {
                Vec::new()
            } else {
                vec![format!("backfitting did not converge in {} sweeps", m.sweeps)]
            };
            (p.y.iter().zip(m.fitted()).map(|(y, f)| y - f).collect(), flags)
        }
        Regressor::Forest => {
            let params = config.forest_params(config.num_trees, config.sub_seed(TAG_FOREST));
            let f = RandomForest::fit_regression(&p.xs, &p.y, &params)?;
            let fitted = f.oob_or_fitted(&p.xs);
            (p.y.iter().zip(fitted).map(|(y, f)| y - f).collect(), Vec::new())
        }
    })
}

/// Residuals split into (environment `e`, all other environments).
fn one_vs_rest(res: &[f64], codes: &[u32], e: u32) -> (Vec<f64>, Vec<f64>) {
    let mut inside = Vec::new();
    let mut rest = Vec::new();
    for (r, &c) in res.iter().zip(codes) {
        if c == e {
            inside.push(*r);
        } else {
            rest.push(*r);
        }
    }
    (inside, rest)
}

pub(crate) fn run(p: &Prepared, regressor: Regressor, test: DistributionTest, config: &CITestConfig) -> Result<CITestOutcome> {
    let (codes, k) = p.categorical()?;
    let mut counts = vec![0usize; k];
    for &c in codes {
        counts[c as usize] += 1;
    }
    if let Some(e) = counts.iter().position(|&c| c < 2) {
        bail_arg!("environment {e} has fewer than 2 rows");
    }
    let (res, flags) = pooled_residuals(p, regressor, config)?;
    // With two environments the one-vs-rest comparisons coincide.
    let envs = if k == 2 { 1 } else { k };
    let mut diag = Diagnostics { flags, ..Default::default() };
    let p_value = match test {
        DistributionTest::KolmogorovSmirnov => {
            let mut ps = Vec::with_capacity(envs);
            for e in 0..envs {
                let (a, b) = one_vs_rest(&res, codes, e as u32);
                let r = ks_two_sample(&a, &b)?;
                diag.subtests.push((format!("ks:env{e}"), r.p_value));
                ps.push(r.p_value);
            }
            diag.correction = ps.len();
            bonferroni(&ps)
        }
        DistributionTest::LeveneWilcoxon => {
            let mut ps = Vec::with_capacity(envs);
            for e in 0..envs {
                let (a, b) = one_vs_rest(&res, codes, e as u32);
                let r = wilcoxon_rank_sum(&a, &b, Alternative::TwoSided)?;
                diag.subtests.push((format!("wilcoxon:env{e}"), r.p_value));
                ps.push(r.p_value);
            }
            let p_mean = bonferroni(&ps);
            let groups: Vec<Vec<f64>> = (0..k as u32).map(|e| one_vs_rest(&res, codes, e).0).collect();
            let lev = levene(&groups, LeveneCenter::Median)?;
            diag.subtests.push(("levene".into(), lev.p_value));
            diag.statistic = Some(lev.statistic);
            diag.correction = 2;
            (2.0 * p_mean.min(lev.p_value)).min(1.0)
        }
    };
    Ok(CITestOutcome::new(p_value, config, diag))
}

/// Convenience wrapper: residual distribution test.
pub fn invariant_residual_distribution(
    y: &[f64],
    env: &super::EnvColumn,
    xs: &DMatrix<f64>,
    regressor: Regressor,
    test: DistributionTest,
    config: &CITestConfig,
) -> Result<CITestOutcome> {
    let mut c = config.clone();
    c.method = super::Method::ResidualDistribution(regressor, test);
    super::ci_test(y, env, xs, &c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citests::EnvColumn;
    use crate::rng::{std_normal, stream};

    fn sample(seed: u64, n: usize, k: i64, scale: f64) -> (Vec<f64>, EnvColumn, DMatrix<f64>) {
        let mut rng = stream(seed);
        let env: Vec<i64> = (0..n as i64).map(|i| i % k).collect();
        let x: Vec<f64> = env.iter().map(|&e| e as f64 + std_normal(&mut rng)).collect();
        let y = (0..n)
            .map(|i| x[i].sin() + (1.0 + scale * (env[i] == 0) as i64 as f64) * 0.5 * std_normal(&mut rng))
            .collect();
        (y, EnvColumn::Categorical(env), DMatrix::from_column_slice(n, 1, &x))
    }

    fn config(seed: u64) -> CITestConfig {
        CITestConfig { seed, num_trees: 100, ..Default::default() }
    }

    #[test]
    fn two_environments_run_one_comparison() {
        let (y, env, xs) = sample(1, 100, 2, 0.0);
        let out = invariant_residual_distribution(&y, &env, &xs, Regressor::Gam, DistributionTest::KolmogorovSmirnov, &config(1))
            .unwrap();
        assert_eq!(out.diagnostics.correction, 1);
        assert_eq!(out.diagnostics.subtests.len(), 1);
        let (y, env, xs) = sample(1, 120, 3, 0.0);
        let out = invariant_residual_distribution(&y, &env, &xs, Regressor::Gam, DistributionTest::KolmogorovSmirnov, &config(1))
            .unwrap();
        assert_eq!(out.diagnostics.correction, 3);
        let min = out.diagnostics.subtests.iter().map(|s| s.1).fold(1.0, f64::min);
        assert!((out.p_value - (3.0 * min).min(1.0)).abs() < 1e-15);
    }

    #[test]
    fn levene_catches_scale_change() {
        for r in [Regressor::Gam, Regressor::Forest] {
            let (y, env, xs) = sample(2, 300, 3, 1.5);
            let out = invariant_residual_distribution(&y, &env, &xs, r, DistributionTest::LeveneWilcoxon, &config(2)).unwrap();
            assert!(out.p_value < 0.01, "{r:?}: p {}", out.p_value);
        }
    }

    #[test]
    fn size_is_controlled() {
        for test in [DistributionTest::KolmogorovSmirnov, DistributionTest::LeveneWilcoxon] {
            let rej = (0..60)
                .filter(|&s| {
                    let (y, env, xs) = sample(40 + s, 150, 3, 0.0);
                    invariant_residual_distribution(&y, &env, &xs, Regressor::Gam, test, &config(s)).unwrap().reject
                })
                .count();
            assert!(rej <= 7, "{test:?}: {rej} of 60 rejected");
        }
    }

    #[test]
    fn tiny_environment_is_an_error() {
        let (y, _, xs) = sample(3, 40, 2, 0.0);
        let mut labels = vec![0i64; 40];
        labels[5] = 1;
        let err = invariant_residual_distribution(&y, &EnvColumn::Categorical(labels), &xs, Regressor::Gam, DistributionTest::KolmogorovSmirnov, &config(0));
        assert!(err.is_err());
    }
}
