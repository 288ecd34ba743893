//! Additive models fitted by backfitting penalized cubic regression splines.
//!
//! Each smooth term is a cubic B-spline with knots at quantiles of the
//! covariate and a second-difference penalty on its coefficients. The term
//! is reparametrized once so that every smoothing level costs O(K), and the
//! smoothing level is chosen by generalized cross-validation. Categorical
//! covariates enter as centered group effects.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::column;
use crate::error::{bail_arg, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveParams {
    /// Spline segments per smooth term (fewer when the covariate has few distinct values).
    pub segments: usize,
    pub max_sweeps: usize,
    /// Convergence threshold on the largest coefficient change, relative to the response scale.
    pub tol: f64,
    /// Fixed effective degrees of freedom per smooth term; `None` selects by GCV.
    pub df: Option<f64>,
    /// Stop re-selecting smoothing levels after this many sweeps.
    pub freeze_lambda_after: Option<usize>,
}

impl Default for AdditiveParams {
    fn default() -> Self {
        Self {
            segments: 20,
            max_sweeps: 50,
            tol: 1e-6,
            df: None,
            freeze_lambda_after: Some(10),
        }
    }
}

const DEGREE: usize = 3;

/// Clamped cubic knot vector with interior knots at quantiles of `x`.
fn knot_vector(x: &[f64], segments: usize) -> Vec<f64> {
    let mut uniq = x.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    let (lo, hi) = (uniq[0], *uniq.last().unwrap());
    let segs = segments.min(uniq.len().saturating_sub(1)).max(1);
    let mut interior: Vec<f64> = (1..segs)
        .map(|k| uniq[(k * (uniq.len() - 1) + segs / 2) / segs])
        .filter(|&v| v > lo && v < hi)
        .collect();
    interior.dedup();
    let mut t = vec![lo; DEGREE + 1];
    t.extend(interior);
    t.extend(std::iter::repeat_n(hi, DEGREE + 1));
    t
}

/// Nonzero cubic B-spline values at `x` and the index of the first one.
fn basis_at(t: &[f64], x: f64) -> (usize, [f64; DEGREE + 1]) {
    let k = t.len() - DEGREE - 1;
    let x = x.clamp(t[0], t[t.len() - 1]);
    // Span s with t[s] ≤ x < t[s+1], restricted to the valid range.
    let s = (t.partition_point(|&v| v <= x).saturating_sub(1)).clamp(DEGREE, k - 1);
    let mut n = [0.0; DEGREE + 1];
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    n[0] = 1.0;
    for j in 1..=DEGREE {
        left[j] = x - t[s + 1 - j];
        right[j] = t[s + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom > 0.0 { n[r] / denom } else { 0.0 };
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    (s - DEGREE, n)
}

fn design(t: &[f64], x: &[f64]) -> DMatrix<f64> {
    let k = t.len() - DEGREE - 1;
    let mut b = DMatrix::zeros(x.len(), k);
    for (i, &v) in x.iter().enumerate() {
        let (first, vals) = basis_at(t, v);
        for (o, val) in vals.iter().enumerate() {
            b[(i, first + o)] = *val;
        }
    }
    b
}

/// A smooth term's spline basis in its penalty-diagonalizing parametrization:
/// fitted values are `q · c`, spline coefficients `back · c`, and the penalty
/// on `c` is `Σ s_k c_k²`.
#[derive(Debug, Clone)]
struct SplineBasis {
    knots: Vec<f64>,
    q: DMatrix<f64>,
    s: Vec<f64>,
    back: DMatrix<f64>,
}

impl SplineBasis {
    fn new(x: &[f64], segments: usize) -> Self {
        let knots = knot_vector(x, segments);
        let b = design(&knots, x);
        let k = b.ncols();
        let g = b.tr_mul(&b);
        let eg = SymmetricEigen::new(g);
        let gmax = eg.eigenvalues.iter().copied().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..k).filter(|&j| eg.eigenvalues[j] > gmax * 1e-10).collect();
        let mut whiten = DMatrix::zeros(k, keep.len());
        for (c, &j) in keep.iter().enumerate() {
            whiten.set_column(c, &(eg.eigenvectors.column(j) / eg.eigenvalues[j].sqrt()));
        }
        let mut d2 = DMatrix::zeros(k.saturating_sub(2), k);
        for r in 0..k.saturating_sub(2) {
            d2[(r, r)] = 1.0;
            d2[(r, r + 1)] = -2.0;
            d2[(r, r + 2)] = 1.0;
        }
        let pw = &d2 * &whiten;
        let a = pw.tr_mul(&pw);
        let ea = SymmetricEigen::new(a);
        let back = &whiten * &ea.eigenvectors;
        let q = &b * &back;
        let s = ea.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
        Self { knots, q, s, back }
    }

    fn edf(&self, lambda: f64) -> f64 {
        self.s.iter().map(|&s| 1.0 / (1.0 + lambda * s)).sum()
    }

    fn gcv(&self, z: &[f64], rss_base: f64, lambda: f64, n: f64) -> f64 {
        let mut rss = rss_base;
        for (zk, &sk) in z.iter().zip(&self.s) {
            let shrink = lambda * sk / (1.0 + lambda * sk);
            rss += (zk * shrink).powi(2);
        }
        let denom = n - self.edf(lambda);
        if denom <= 0.0 {
            f64::INFINITY
        } else {
            n * rss / (denom * denom)
        }
    }

    fn lambda_range(&self) -> (f64, f64) {
        let smax = self.s.iter().copied().fold(0.0, f64::max).max(1e-300);
        (1e-4 / smax, 1e10 / smax)
    }

    fn select_lambda(&self, z: &[f64], rss_base: f64, n: f64) -> f64 {
        let (lo, hi) = self.lambda_range();
        let steps = 140;
        let mut best = (f64::INFINITY, hi);
        for i in 0..=steps {
            let lambda = lo * (hi / lo).powf(i as f64 / steps as f64);
            let g = self.gcv(z, rss_base, lambda, n);
            if g < best.0 {
                best = (g, lambda);
            }
        }
        best.1
    }

    fn lambda_for_df(&self, df: f64) -> f64 {
        let (mut lo, mut hi) = self.lambda_range();
        let target = df.clamp(self.edf(hi), self.edf(lo));
        for _ in 0..100 {
            let mid = (lo * hi).sqrt();
            if self.edf(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo * hi).sqrt()
    }
}

#[derive(Debug, Clone)]
enum Term {
    Smooth {
        basis: SplineBasis,
        coef: DVector<f64>,
        offset: f64,
        lambda: f64,
    },
    Factor {
        effects: BTreeMap<u64, f64>,
    },
}

impl Term {
    fn eval(&self, v: f64) -> f64 {
        match self {
            Term::Smooth {
                basis, coef, offset, ..
            } => {
                let (first, vals) = basis_at(&basis.knots, v);
                vals.iter().enumerate().map(|(o, b)| b * coef[first + o]).sum::<f64>() - offset
            }
            Term::Factor { effects } => effects.get(&v.to_bits()).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdditiveModel {
    intercept: f64,
    terms: Vec<Term>,
    fitted: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

impl AdditiveModel {
    /// Fits `y ~ α + Σ_j f_j(x_j)`; `categorical[j]` marks factor covariates.
    pub fn fit(
        x: &DMatrix<f64>,
        y: &[f64],
        categorical: &[bool],
        params: &AdditiveParams,
    ) -> Result<Self> {
        let (n, d) = x.shape();
        if y.len() != n {
            bail_arg!("x has {n} rows but response has {}", y.len());
        }
        if categorical.len() != d {
            bail_arg!("{} categorical flags for {d} columns", categorical.len());
        }
        if n <= 10 * d {
            bail_arg!("additive model needs n > 10·d (n = {n}, d = {d})");
        }
        if n == 0 || y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            bail_arg!("additive model needs finite, nonempty data");
        }
        let nf = n as f64;
        let intercept = y.iter().sum::<f64>() / nf;
        let sd = (y.iter().map(|v| (v - intercept).powi(2)).sum::<f64>() / nf).sqrt();
        let threshold = params.tol * sd.max(1e-300);

        let mut terms: Vec<Term> = (0..d)
            .map(|j| {
                if categorical[j] {
                    Term::Factor {
                        effects: BTreeMap::new(),
                    }
                } else {
                    let basis = SplineBasis::new(column(x, j), params.segments);
                    let k = basis.back.nrows();
                    let lambda = match params.df {
                        Some(df) => basis.lambda_for_df(df),
                        None => 0.0,
                    };
                    Term::Smooth {
                        basis,
                        coef: DVector::zeros(k),
                        offset: 0.0,
                        lambda,
                    }
                }
            })
            .collect();
        let mut contrib: Vec<Vec<f64>> = vec![vec![0.0; n]; d];
        let mut partial = vec![0.0; n];
        let mut converged = d <= 1;
        let mut sweeps = 0;

        for sweep in 1..=params.max_sweeps.max(1) {
            sweeps = sweep;
            let reselect = params.df.is_none()
                && params.freeze_lambda_after.is_none_or(|f| sweep <= f);
            let mut max_change: f64 = 0.0;
            for j in 0..d {
                for i in 0..n {
                    let others: f64 = (0..d).filter(|&k| k != j).map(|k| contrib[k][i]).sum();
                    partial[i] = y[i] - intercept - others;
                }
                match &mut terms[j] {
                    Term::Smooth {
                        basis,
                        coef,
                        offset,
                        lambda,
                    } => {
                        let r = DVector::from_column_slice(&partial);
                        let z = basis.q.tr_mul(&r);
                        if reselect {
                            let rss_base = r.norm_squared() - z.norm_squared();
                            *lambda = basis.select_lambda(z.as_slice(), rss_base.max(0.0), nf);
                        }
                        let c = DVector::from_iterator(
                            z.len(),
                            z.iter().zip(&basis.s).map(|(zk, &sk)| zk / (1.0 + *lambda * sk)),
                        );
                        let new_coef = &basis.back * &c;
                        let f = &basis.q * &c;
                        let mean = f.sum() / nf;
                        max_change = max_change.max((&new_coef - &*coef).amax());
                        *coef = new_coef;
                        *offset = mean;
                        for i in 0..n {
                            contrib[j][i] = f[i] - mean;
                        }
                    }
                    Term::Factor { effects } => {
                        let mut sums: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
                        for i in 0..n {
                            let e = sums.entry(x[(i, j)].to_bits()).or_insert((0.0, 0.0));
                            e.0 += partial[i];
                            e.1 += 1.0;
                        }
                        let grand = partial.iter().sum::<f64>() / nf;
                        let new: BTreeMap<u64, f64> =
                            sums.into_iter().map(|(k, (s, c))| (k, s / c - grand)).collect();
                        for (k, v) in &new {
                            let old = effects.get(k).copied().unwrap_or(0.0);
                            max_change = max_change.max((v - old).abs());
                        }
                        *effects = new;
                        for i in 0..n {
                            contrib[j][i] = effects[&x[(i, j)].to_bits()];
                        }
                    }
                }
            }
            if d <= 1 {
                break;
            }
            if max_change < threshold && !(reselect && params.freeze_lambda_after == Some(sweep))
            {
                converged = true;
                break;
            }
        }

        let fitted = (0..n)
            .map(|i| intercept + (0..d).map(|j| contrib[j][i]).sum::<f64>())
            .collect();
        Ok(Self {
            intercept,
            terms,
            fitted,
            converged,
            sweeps,
        })
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// In-sample fitted values.
    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// Centered contribution of term `j` at covariate value `v`.
    pub fn component(&self, j: usize, v: f64) -> f64 {
        self.terms[j].eval(v)
    }

    /// Prediction at one row; smooth inputs are clamped to their training range.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.terms.iter().zip(row).map(|(t, &v)| t.eval(v)).sum::<f64>()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.terms.len() {
            bail_arg!("additive model has {} terms, got {} columns", self.terms.len(), x.ncols());
        }
        let mut row = vec![0.0; x.ncols()];
        Ok((0..x.nrows())
            .map(|i| {
                for (f, r) in row.iter_mut().enumerate() {
                    *r = x[(i, f)];
                }
                self.predict_row(&row)
            })
            .collect())
    }

    /// Smoothing level and effective degrees of freedom per smooth term.
    pub fn smoothing(&self) -> Vec<Option<(f64, f64)>> {
        self.terms
            .iter()
            .map(|t| match t {
                Term::Smooth { basis, lambda, .. } => Some((*lambda, basis.edf(*lambda))),
                Term::Factor { .. } => None,
            })
            .collect()
    }
}
