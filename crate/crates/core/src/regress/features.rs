//! Finite-dimensional feature maps approximating kernel regression.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng as _;

use crate::error::{bail_arg, Result};
use crate::rng::{std_normal, stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Fourier,
    NystromRbf,
    NystromPoly,
    PolyBasis,
}

impl std::str::FromStr for FeatureKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fourier" | "a" => Self::Fourier,
            "nystrom_rbf" | "nystrom-rbf" | "b" => Self::NystromRbf,
            "nystrom_poly" | "nystrom-poly" | "c" => Self::NystromPoly,
            "poly_basis" | "poly-basis" | "poly" | "d" => Self::PolyBasis,
            _ => bail_arg!("unknown feature map `{s}`"),
        })
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Fourier => "fourier",
            Self::NystromRbf => "nystrom_rbf",
            Self::NystromPoly => "nystrom_poly",
            Self::PolyBasis => "poly_basis",
        })
    }
}

/// Kernel hyperparameters; unset values are chosen from the data and seed.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KernelParams {
    pub bandwidth: Option<f64>,
    pub degree: Option<u32>,
}

#[derive(Debug, Clone)]
enum State {
    Fourier {
        omega: DMatrix<f64>,
        phase: Vec<f64>,
    },
    Nystrom {
        landmarks: DMatrix<f64>,
        /// U Λ^{-1/2} over the retained eigenpairs of K(L, L).
        proj: DMatrix<f64>,
    },
    Poly {
        /// Exponent vector per output column.
        monomials: Vec<Vec<u32>>,
    },
}

#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub kind: FeatureKind,
    pub bandwidth: f64,
    pub degree: u32,
    input_dim: usize,
    state: State,
}

/// Median of pairwise Euclidean distances, over at most 1000 evenly spaced rows.
pub fn median_pairwise_distance(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let rows: Vec<usize> = if n <= 1000 {
        (0..n).collect()
    } else {
        (0..1000).map(|k| k * n / 1000).collect()
    };
    let mut dist = Vec::with_capacity(rows.len() * rows.len() / 2);
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            let d2: f64 = (0..x.ncols()).map(|f| (x[(i, f)] - x[(j, f)]).powi(2)).sum();
            dist.push(d2.sqrt());
        }
    }
    if dist.is_empty() {
        return 1.0;
    }
    let mid = dist.len() / 2;
    let (_, m, _) = dist.select_nth_unstable_by(mid, f64::total_cmp);
    if *m > 0.0 {
        *m
    } else {
        1.0
    }
}

pub fn rbf(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

fn poly_kernel(a: &[f64], b: &[f64], degree: u32) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
    (1.0 + dot).powi(degree as i32)
}

fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    (0..x.ncols()).map(|f| x[(i, f)]).collect()
}

/// Exponent vectors of all monomials of total degree 1..=degree in `d` variables,
/// ordered by degree then lexicographically descending.
fn monomials(d: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(d: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == d - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e);
            rec(d, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for k in 1..=degree {
        rec(d, k, &mut Vec::with_capacity(d), &mut out);
    }
    out
}

impl FeatureMap {
    pub fn new(
        x: &DMatrix<f64>,
        kind: FeatureKind,
        m: usize,
        params: KernelParams,
        seed: u64,
    ) -> Result<Self> {
        let (n, d) = x.shape();
        if m == 0 {
            bail_arg!("feature map needs M ≥ 1");
        }
        if d == 0 {
            bail_arg!("feature map needs at least one input column");
        }
        let mut rng: Rng = stream(seed);
        let degree = match params.degree {
            Some(k) if k >= 1 => k,
            Some(_) => bail_arg!("polynomial degree must be ≥ 1"),
            None => rng.random_range(2..=4),
        };
        let bandwidth = match params.bandwidth {
            Some(s) if s > 0.0 => s,
            Some(_) => bail_arg!("bandwidth must be positive"),
            None => median_pairwise_distance(x),
        };
        let state = match kind {
            FeatureKind::Fourier => {
                let omega = DMatrix::from_fn(d, m, |_, _| std_normal(&mut rng) / bandwidth);
                let phase = (0..m)
                    .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
                    .collect();
                State::Fourier { omega, phase }
            }
            FeatureKind::NystromRbf | FeatureKind::NystromPoly => {
                if m > n {
                    bail_arg!("Nyström map needs M ≤ n (M = {m}, n = {n})");
                }
                let mut idx = sample(&mut rng, n, m).into_vec();
                idx.sort_unstable();
                let landmarks = DMatrix::from_fn(m, d, |i, f| x[(idx[i], f)]);
                let rows: Vec<Vec<f64>> = (0..m).map(|i| row(&landmarks, i)).collect();
                let k = DMatrix::from_fn(m, m, |i, j| match kind {
                    FeatureKind::NystromRbf => rbf(&rows[i], &rows[j], bandwidth),
                    _ => poly_kernel(&rows[i], &rows[j], degree),
                });
                let eig = SymmetricEigen::new(k);
                let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
                let keep: Vec<usize> = (0..m)
                    .filter(|&j| eig.eigenvalues[j] > lmax * 1e-12)
                    .collect();
                let mut proj = DMatrix::zeros(m, keep.len());
                for (c, &j) in keep.iter().enumerate() {
                    let s = eig.eigenvalues[j].sqrt();
                    proj.set_column(c, &(eig.eigenvectors.column(j) / s));
                }
                State::Nystrom { landmarks, proj }
            }
            FeatureKind::PolyBasis => {
                let mut all = monomials(d, degree);
                if all.len() > m {
                    let mut keep = sample(&mut rng, all.len(), m).into_vec();
                    keep.sort_unstable();
                    all = keep.into_iter().map(|k| all[k].clone()).collect();
                }
                State::Poly { monomials: all }
            }
        };
        Ok(Self {
            kind,
            bandwidth,
            degree,
            input_dim: d,
            state,
        })
    }

    pub fn num_features(&self) -> usize {
        match &self.state {
            State::Fourier { phase, .. } => phase.len(),
            State::Nystrom { proj, .. } => proj.ncols(),
            State::Poly { monomials } => monomials.len(),
        }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim {
            bail_arg!(
                "feature map built for {} columns, got {}",
                self.input_dim,
                x.ncols()
            );
        }
        let n = x.nrows();
        Ok(match &self.state {
            State::Fourier { omega, phase } => {
                let m = phase.len();
                let scale = (2.0 / m as f64).sqrt();
                let mut z = x * omega;
                for j in 0..m {
                    for i in 0..n {
                        z[(i, j)] = scale * (z[(i, j)] + phase[j]).cos();
                    }
                }
                z
            }
            State::Nystrom { landmarks, proj } => {
                let lrows: Vec<Vec<f64>> = (0..landmarks.nrows()).map(|i| row(landmarks, i)).collect();
                let kx = DMatrix::from_fn(n, landmarks.nrows(), |i, j| {
                    let r = row(x, i);
                    match self.kind {
                        FeatureKind::NystromRbf => rbf(&r, &lrows[j], self.bandwidth),
                        _ => poly_kernel(&r, &lrows[j], self.degree),
                    }
                });
                kx * proj
            }
            State::Poly { monomials } => DMatrix::from_fn(n, monomials.len(), |i, j| {
                monomials[j]
                    .iter()
                    .enumerate()
                    .map(|(f, &e)| x[(i, f)].powi(e as i32))
                    .product()
            }),
        })
    }
}
