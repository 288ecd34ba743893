//! Regression engines used inside the invariance tests.

pub mod additive;
pub mod features;
pub mod forest;
pub mod ols;
pub mod quantile;

use nalgebra::DMatrix;

pub use additive::{AdditiveModel, AdditiveParams};
pub use features::{FeatureKind, FeatureMap, KernelParams};
pub use forest::{ForestKind, ForestParams, RandomForest};
pub use ols::{ols_fit, OlsFit};
pub use quantile::QuantileForest;

use crate::error::{bail_arg, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressorKind {
    RandomForest,
    AdditiveModel,
    OlsBasis,
}

impl std::str::FromStr for RegressorKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rf" | "forest" | "random_forest" => Self::RandomForest,
            "gam" | "additive" | "additive_model" => Self::AdditiveModel,
            "ols" | "ols_basis" => Self::OlsBasis,
            _ => bail_arg!("unknown regressor `{s}`"),
        })
    }
}

impl std::fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::RandomForest => "random_forest",
            Self::AdditiveModel => "additive_model",
            Self::OlsBasis => "ols_basis",
        })
    }
}

/// Settings for [`RegressionModel::fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorConfig {
    pub kind: RegressorKind,
    pub forest: ForestParams,
    pub additive: AdditiveParams,
    /// Total polynomial degree of the basis used by `OlsBasis`.
    pub basis_degree: u32,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            kind: RegressorKind::RandomForest,
            forest: ForestParams::default(),
            additive: AdditiveParams::default(),
            basis_degree: 1,
        }
    }
}

impl RegressorConfig {
    pub fn of_kind(kind: RegressorKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct OlsBasisModel {
    map: Option<FeatureMap>,
    coefficients: Vec<f64>,
}

impl OlsBasisModel {
    fn design(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let h = match &self.map {
            Some(m) => m.apply(x)?,
            None => DMatrix::zeros(x.nrows(), 0),
        };
        Ok(DMatrix::from_fn(x.nrows(), h.ncols() + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                h[(i, j - 1)]
            }
        }))
    }

    pub fn fit(x: &DMatrix<f64>, y: &[f64], degree: u32) -> Result<Self> {
        let map = if x.ncols() == 0 {
            None
        } else {
            let params = KernelParams {
                bandwidth: None,
                degree: Some(degree.max(1)),
            };
            Some(FeatureMap::new(x, FeatureKind::PolyBasis, usize::MAX, params, 0)?)
        };
        let mut model = Self {
            map,
            coefficients: Vec::new(),
        };
        let fit = ols_fit(&model.design(x)?, y)?;
        model.coefficients = fit.coefficients;
        Ok(model)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let h = self.design(x)?;
        Ok((0..h.nrows())
            .map(|i| (0..h.ncols()).map(|j| h[(i, j)] * self.coefficients[j]).sum())
            .collect())
    }
}

/// A fitted regression function of any supported kind.
#[derive(Debug, Clone)]
pub enum RegressionModel {
    Forest(RandomForest),
    Additive(AdditiveModel),
    OlsBasis(OlsBasisModel),
    /// Intercept-only model, used when there are no covariates.
    Constant(f64),
}

impl RegressionModel {
    /// Fits `y` on all columns of `x`; `categorical` marks factor columns
    /// (honored by the additive model, treated as numeric otherwise).
    pub fn fit(
        x: &DMatrix<f64>,
        y: &[f64],
        categorical: &[bool],
        config: &RegressorConfig,
    ) -> Result<Self> {
        if y.is_empty() {
            bail_arg!("regression needs at least one row");
        }
        if x.ncols() == 0 {
            return Ok(Self::Constant(y.iter().sum::<f64>() / y.len() as f64));
        }
        Ok(match config.kind {
            RegressorKind::RandomForest => {
                Self::Forest(RandomForest::fit_regression(x, y, &config.forest)?)
            }
            RegressorKind::AdditiveModel => {
                let flags = if categorical.is_empty() {
                    vec![false; x.ncols()]
                } else {
                    categorical.to_vec()
                };
                Self::Additive(AdditiveModel::fit(x, y, &flags, &config.additive)?)
            }
            RegressorKind::OlsBasis => Self::OlsBasis(OlsBasisModel::fit(x, y, config.basis_degree)?),
        })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        match self {
            Self::Forest(m) => m.predict(x),
            Self::Additive(m) => m.predict(x),
            Self::OlsBasis(m) => m.predict(x),
            Self::Constant(c) => Ok(vec![*c; x.nrows()]),
        }
    }

    /// `y - predict(x)` row-wise.
    pub fn residuals(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict(x)?.iter().zip(y).map(|(p, v)| v - p).collect())
    }

    /// Warning flags raised during fitting.
    pub fn warnings(&self) -> Vec<String> {
        match self {
            Self::Additive(m) if !m.converged => {
                vec![format!("backfitting did not converge in {} sweeps", m.sweeps)]
            }
            _ => Vec::new(),
        }
    }
}
