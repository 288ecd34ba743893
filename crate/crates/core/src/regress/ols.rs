//! Minimum-norm least squares through the thin SVD.

use nalgebra::{DMatrix, DVector};

use crate::error::{bail_arg, Result};

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Leverages, the diagonal of the projection onto the column space.
    pub hat_diag: Vec<f64>,
    pub rank: usize,
    /// Orthonormal basis (n × rank) of the column space of the design.
    pub basis: DMatrix<f64>,
}

impl OlsFit {
    /// Applies `I - P` (projection off the column space) to `v`.
    pub fn project_out(&self, v: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        let coef = self.basis.tr_mul(&v);
        let fitted = &self.basis * coef;
        (v - fitted).iter().copied().collect()
    }
}

pub fn ols_fit(h: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit> {
    let (n, m) = h.shape();
    if n == 0 {
        bail_arg!("least squares needs at least one row");
    }
    if y.len() != n {
        bail_arg!("design has {n} rows but response has {}", y.len());
    }
    let yv = DVector::from_column_slice(y);
    if m == 0 {
        return Ok(OlsFit {
            coefficients: Vec::new(),
            residuals: y.to_vec(),
            hat_diag: vec![0.0; n],
            rank: 0,
            basis: DMatrix::zeros(n, 0),
        });
    }
    let svd = h.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested Vᵀ");
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let tol = smax * (n.max(m) as f64) * f64::EPSILON;
    let keep: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] > tol).collect();
    let rank = keep.len();

    let mut basis = DMatrix::zeros(n, rank);
    let mut coef = DVector::zeros(m);
    for (c, &k) in keep.iter().enumerate() {
        basis.set_column(c, &u.column(k));
        let proj = u.column(k).dot(&yv) / sv[k];
        coef += vt.row(k).transpose() * proj;
    }
    let fitted = h * &coef;
    let residuals = (&yv - fitted).iter().copied().collect();
    let hat_diag = (0..n).map(|i| basis.row(i).norm_squared()).collect();
    Ok(OlsFit {
        coefficients: coef.iter().copied().collect(),
        residuals,
        hat_diag,
        rank,
        basis,
    })
}
