//! Random forests of CART trees grown on bootstrap resamples.
//!
//! Features are pre-binned (exactly, whenever a feature has at most
//! `max_bins` distinct values) so split search is a histogram scan. The
//! features tried at each node are chosen by ranking per-node random keys
//! derived from feature *names*, which makes a fitted forest independent of
//! column order.

use nalgebra::DMatrix;
use rand::{Rng as _, RngCore};
use rayon::prelude::*;

use crate::data::column;
use crate::error::{bail_arg, Result};
use crate::rng::{derive_seed, hash_str, mix, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub num_trees: usize,
    /// Features tried per split; `None` = ⌈d/3⌉ (regression) or ⌈√d⌉ (classification).
    pub mtry: Option<usize>,
    /// Minimum bootstrap weight in each child of a split.
    pub min_leaf: usize,
    pub seed: u64,
    pub max_bins: usize,
    /// Names keying the per-node feature sampling; defaults to column positions.
    pub feature_names: Option<Vec<String>>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            num_trees: 500,
            mtry: None,
            min_leaf: 5,
            seed: 0,
            max_bins: 256,
            feature_names: None,
        }
    }
}

impl ForestParams {
    pub fn with_trees(num_trees: usize, seed: u64) -> Self {
        Self {
            num_trees,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForestKind {
    Regression,
    Classification { num_classes: usize },
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf { value: f64 },
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone)]
pub(crate) struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Index of the leaf reached by a row whose feature `f` is `get(f)`.
    #[inline]
    pub(crate) fn leaf_index(&self, get: impl Fn(usize) -> f64) -> usize {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if get(feature as usize) <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    #[inline]
    fn predict(&self, get: impl Fn(usize) -> f64) -> f64 {
        match self.nodes[self.leaf_index(get)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub(crate) fn num_nodes(&self) -> usize {
        self.nodes.len()
    }
}

/// Per-feature bin codes plus the value range covered by each bin.
struct Binned {
    codes: Vec<Vec<u16>>,
    lo: Vec<Vec<f64>>,
    hi: Vec<Vec<f64>>,
}

impl Binned {
    fn new(x: &DMatrix<f64>, max_bins: usize) -> Self {
        let d = x.ncols();
        let mut codes = Vec::with_capacity(d);
        let mut lo = Vec::with_capacity(d);
        let mut hi = Vec::with_capacity(d);
        for j in 0..d {
            let col = column(x, j);
            let mut uniq: Vec<f64> = col.to_vec();
            uniq.sort_by(f64::total_cmp);
            uniq.dedup();
            // Upper edges of the bins: every distinct value, or evenly spaced
            // order statistics of the distinct values when there are too many.
            let edges: Vec<f64> = if uniq.len() <= max_bins {
                uniq.clone()
            } else {
                let mut e: Vec<f64> = (1..=max_bins)
                    .map(|b| uniq[(b * uniq.len()) / max_bins - 1])
                    .collect();
                e.dedup();
                e
            };
            let mut blo = Vec::with_capacity(edges.len());
            let mut prev = f64::NEG_INFINITY;
            for &e in &edges {
                // Smallest distinct value strictly above the previous edge.
                let start = uniq.partition_point(|&v| v <= prev);
                blo.push(uniq[start]);
                prev = e;
            }
            let c: Vec<u16> = col
                .iter()
                .map(|v| edges.partition_point(|&e| e < *v) as u16)
                .collect();
            codes.push(c);
            lo.push(blo);
            hi.push(edges);
        }
        Self { codes, lo, hi }
    }

    fn nbins(&self, f: usize) -> usize {
        self.hi[f].len()
    }
}

enum Response<'a> {
    Real(&'a [f64]),
    Class(&'a [u32], usize),
}

struct Builder<'a> {
    binned: &'a Binned,
    response: Response<'a>,
    keys: &'a [u64],
    mtry: usize,
    min_leaf: f64,
}

/// Sufficient statistics of a set of weighted rows.
#[derive(Clone)]
struct Stats {
    w: f64,
    s: f64,
    classes: Vec<f64>,
}

impl Stats {
    fn zero(nc: usize) -> Self {
        Self {
            w: 0.0,
            s: 0.0,
            classes: vec![0.0; nc],
        }
    }

    fn clear(&mut self) {
        self.w = 0.0;
        self.s = 0.0;
        self.classes.iter_mut().for_each(|c| *c = 0.0);
    }

    /// Node impurity score to maximize (sum of squares for regression, Gini purity for classes).
    fn score(&self) -> f64 {
        if self.w <= 0.0 {
            return 0.0;
        }
        if self.classes.is_empty() {
            self.s * self.s / self.w
        } else {
            self.classes.iter().map(|c| c * c).sum::<f64>() / self.w
        }
    }
}

impl Builder<'_> {
    fn nclasses(&self) -> usize {
        match self.response {
            Response::Real(_) => 0,
            Response::Class(_, k) => k,
        }
    }

    #[inline]
    fn add(&self, st: &mut Stats, row: usize, w: f64) {
        st.w += w;
        match self.response {
            Response::Real(y) => st.s += w * y[row],
            Response::Class(c, _) => st.classes[c[row] as usize] += w,
        }
    }

    fn leaf_value(&self, rows: &[u32], counts: &[u32]) -> f64 {
        match self.response {
            Response::Real(y) => {
                let (mut w, mut s) = (0.0, 0.0);
                for &r in rows {
                    let c = f64::from(counts[r as usize]);
                    w += c;
                    s += c * y[r as usize];
                }
                s / w
            }
            Response::Class(labels, k) => {
                let mut tally = vec![0u32; k];
                for &r in rows {
                    tally[labels[r as usize] as usize] += counts[r as usize];
                }
                argmax_first(&tally) as f64
            }
        }
    }

    fn is_pure(&self, rows: &[u32]) -> bool {
        match self.response {
            Response::Real(y) => {
                let first = y[rows[0] as usize];
                rows.iter().all(|&r| y[r as usize] == first)
            }
            Response::Class(c, _) => {
                let first = c[rows[0] as usize];
                rows.iter().all(|&r| c[r as usize] == first)
            }
        }
    }

    fn build(&self, seed: u64) -> (Tree, Vec<u32>) {
        let n = self.binned.codes[0].len();
        let d = self.binned.codes.len();
        let mut rng = stream(seed);
        let mut counts = vec![0u32; n];
        for _ in 0..n {
            counts[rng.random_range(0..n)] += 1;
        }
        let mut rows: Vec<u32> = (0..n as u32).filter(|&i| counts[i as usize] > 0).collect();

        let nc = self.nclasses();
        let max_bins = (0..d).map(|f| self.binned.nbins(f)).max().unwrap_or(1);
        let width = nc.max(1);
        let mut hist_w = vec![0.0; max_bins];
        let mut hist_v = vec![0.0; max_bins * width];
        let mut pairs: Vec<(u16, u32)> = Vec::new();
        let mut keyed: Vec<(u64, usize)> = Vec::with_capacity(d);
        let mut left = Stats::zero(nc);
        let mut total = Stats::zero(nc);

        let mut nodes: Vec<Node> = vec![Node::Leaf { value: 0.0 }];
        let mut stack: Vec<(usize, usize, usize)> = vec![(0, 0, rows.len())];

        while let Some((id, lo, hi)) = stack.pop() {
            let node_rows = &rows[lo..hi];
            total.clear();
            for &r in node_rows {
                self.add(&mut total, r as usize, f64::from(counts[r as usize]));
            }
            let node_key = rng.next_u64();
            if total.w < 2.0 * self.min_leaf || self.is_pure(node_rows) {
                nodes[id] = Node::Leaf {
                    value: self.leaf_value(node_rows, &counts),
                };
                continue;
            }

            keyed.clear();
            keyed.extend((0..d).map(|f| (mix(node_key, self.keys[f]), f)));
            keyed.sort_unstable();

            let parent_score = total.score();
            let mut best_score = parent_score + 1e-10 * parent_score.abs().max(1e-300);
            let mut best: Option<(usize, u16, f64)> = None;

            for &(_, f) in keyed.iter().take(self.mtry) {
                let nb = self.binned.nbins(f);
                if nb < 2 {
                    continue;
                }
                let codes = &self.binned.codes[f];
                // Aggregated (bin, weight, value-sums) in ascending bin order.
                let groups: Vec<usize> = if node_rows.len() * 4 < nb {
                    pairs.clear();
                    pairs.extend(node_rows.iter().map(|&r| (codes[r as usize], r)));
                    pairs.sort_unstable();
                    let mut used = Vec::new();
                    for &(b, r) in &pairs {
                        let b = b as usize;
                        if used.last() != Some(&b) {
                            used.push(b);
                            hist_w[b] = 0.0;
                            hist_v[b * width..(b + 1) * width].iter_mut().for_each(|v| *v = 0.0);
                        }
                        self.accumulate(&mut hist_w, &mut hist_v, width, b, r as usize, &counts);
                    }
                    used
                } else {
                    hist_w[..nb].iter_mut().for_each(|v| *v = 0.0);
                    hist_v[..nb * width].iter_mut().for_each(|v| *v = 0.0);
                    for &r in node_rows {
                        let b = codes[r as usize] as usize;
                        self.accumulate(&mut hist_w, &mut hist_v, width, b, r as usize, &counts);
                    }
                    (0..nb).filter(|&b| hist_w[b] > 0.0).collect()
                };
                if groups.len() < 2 {
                    continue;
                }

                left.clear();
                for gi in 0..groups.len() - 1 {
                    let b = groups[gi];
                    left.w += hist_w[b];
                    if nc == 0 {
                        left.s += hist_v[b];
                    } else {
                        for c in 0..nc {
                            left.classes[c] += hist_v[b * width + c];
                        }
                    }
                    let wr = total.w - left.w;
                    if left.w < self.min_leaf || wr < self.min_leaf {
                        continue;
                    }
                    let right_score = if nc == 0 {
                        let sr = total.s - left.s;
                        sr * sr / wr
                    } else {
                        (0..nc)
                            .map(|c| {
                                let v = total.classes[c] - left.classes[c];
                                v * v
                            })
                            .sum::<f64>()
                            / wr
                    };
                    let score = left.score() + right_score;
                    if score > best_score {
                        best_score = score;
                        let next = groups[gi + 1];
                        let thr = 0.5 * (self.binned.hi[f][b] + self.binned.lo[f][next]);
                        best = Some((f, b as u16, thr));
                    }
                }
            }

            match best {
                None => {
                    nodes[id] = Node::Leaf {
                        value: self.leaf_value(node_rows, &counts),
                    };
                }
                Some((f, b, threshold)) => {
                    let codes = &self.binned.codes[f];
                    let slice = &mut rows[lo..hi];
                    let mut mid = 0;
                    for i in 0..slice.len() {
                        if codes[slice[i] as usize] <= b {
                            slice.swap(i, mid);
                            mid += 1;
                        }
                    }
                    let l = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[id] = Node::Split {
                        feature: f as u32,
                        threshold,
                        left: l as u32,
                        right: l as u32 + 1,
                    };
                    stack.push((l + 1, lo + mid, hi));
                    stack.push((l, lo, lo + mid));
                }
            }
        }
        (Tree { nodes }, counts)
    }

    #[inline]
    fn accumulate(
        &self,
        hist_w: &mut [f64],
        hist_v: &mut [f64],
        width: usize,
        b: usize,
        r: usize,
        counts: &[u32],
    ) {
        let w = f64::from(counts[r]);
        hist_w[b] += w;
        match self.response {
            Response::Real(y) => hist_v[b] += w * y[r],
            Response::Class(c, _) => hist_v[b * width + c[r] as usize] += w,
        }
    }
}

fn argmax_first(v: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in v.iter().enumerate() {
        if c > v[best] {
            best = i;
        }
    }
    best
}

/// A fitted ensemble. Regression predicts the mean over trees, classification
/// the majority vote (ties go to the lowest class code).
#[derive(Debug, Clone)]
pub struct RandomForest {
    pub(crate) trees: Vec<Tree>,
    /// Bootstrap multiplicity of each training row, per tree.
    pub(crate) inbag: Vec<Vec<u32>>,
    kind: ForestKind,
    num_features: usize,
    oob: Vec<f64>,
}

impl RandomForest {
    pub fn fit_regression(x: &DMatrix<f64>, y: &[f64], params: &ForestParams) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            bail_arg!("non-finite response");
        }
        Self::fit(x, Response::Real(y), params)
    }

    pub fn fit_classification(
        x: &DMatrix<f64>,
        labels: &[u32],
        num_classes: usize,
        params: &ForestParams,
    ) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            bail_arg!("class label {bad} out of range for {num_classes} classes");
        }
        Self::fit(x, Response::Class(labels, num_classes), params)
    }

    fn fit(x: &DMatrix<f64>, response: Response<'_>, params: &ForestParams) -> Result<Self> {
        let (n, d) = x.shape();
        let len = match response {
            Response::Real(y) => y.len(),
            Response::Class(c, _) => c.len(),
        };
        if len != n {
            bail_arg!("x has {n} rows but response has {len}");
        }
        if n < 2 || d < 1 {
            bail_arg!("random forest needs n ≥ 2 and d ≥ 1 (got n = {n}, d = {d})");
        }
        if params.num_trees == 0 {
            bail_arg!("num_trees must be positive");
        }
        if x.iter().any(|v| !v.is_finite()) {
            bail_arg!("non-finite predictor value");
        }
        if !(2..=u16::MAX as usize).contains(&params.max_bins) {
            bail_arg!("max_bins must be in 2..=65535");
        }
        let keys: Vec<u64> = match &params.feature_names {
            Some(names) if names.len() == d => names.iter().map(|s| hash_str(s)).collect(),
            Some(names) => bail_arg!("{} feature names for {d} columns", names.len()),
            None => (0..d).map(|j| hash_str(&j.to_string())).collect(),
        };
        let kind = match response {
            Response::Real(_) => ForestKind::Regression,
            Response::Class(_, k) => ForestKind::Classification { num_classes: k },
        };
        let mtry = params
            .mtry
            .unwrap_or(match kind {
                ForestKind::Regression => d.div_ceil(3),
                ForestKind::Classification { .. } => (d as f64).sqrt().ceil() as usize,
            })
            .clamp(1, d);

        let binned = Binned::new(x, params.max_bins);
        let builder = Builder {
            binned: &binned,
            response,
            keys: &keys,
            mtry,
            min_leaf: params.min_leaf.max(1) as f64,
        };
        let built: Vec<(Tree, Vec<u32>)> = (0..params.num_trees)
            .into_par_iter()
            .map(|t| builder.build(derive_seed(params.seed, &[t as u64])))
            .collect();
        let (trees, inbag): (Vec<Tree>, Vec<Vec<u32>>) = built.into_iter().unzip();

        let mut forest = Self {
            trees,
            inbag,
            kind,
            num_features: d,
            oob: Vec::new(),
        };
        forest.oob = forest.compute_oob(x);
        Ok(forest)
    }

    fn compute_oob(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let n = x.nrows();
        let mut out = vec![f64::NAN; n];
        match self.kind {
            ForestKind::Regression => {
                let mut sum = vec![0.0; n];
                let mut cnt = vec![0u32; n];
                for (tree, bag) in self.trees.iter().zip(&self.inbag) {
                    for i in (0..n).filter(|&i| bag[i] == 0) {
                        sum[i] += tree.predict(|f| x[(i, f)]);
                        cnt[i] += 1;
                    }
                }
                for i in 0..n {
                    if cnt[i] > 0 {
                        out[i] = sum[i] / f64::from(cnt[i]);
                    }
                }
            }
            ForestKind::Classification { num_classes } => {
                let mut votes = vec![0u32; n * num_classes];
                for (tree, bag) in self.trees.iter().zip(&self.inbag) {
                    for i in (0..n).filter(|&i| bag[i] == 0) {
                        let c = tree.predict(|f| x[(i, f)]) as usize;
                        votes[i * num_classes + c] += 1;
                    }
                }
                for i in 0..n {
                    let v = &votes[i * num_classes..(i + 1) * num_classes];
                    if v.iter().any(|&c| c > 0) {
                        out[i] = argmax_first(v) as f64;
                    }
                }
            }
        }
        out
    }

    pub fn kind(&self) -> ForestKind {
        self.kind
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// Prediction for one row given as a slice of `num_features` values.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.kind {
            ForestKind::Regression => {
                self.trees.iter().map(|t| t.predict(|f| row[f])).sum::<f64>()
                    / self.trees.len() as f64
            }
            ForestKind::Classification { num_classes } => {
                let mut votes = vec![0u32; num_classes];
                for t in &self.trees {
                    votes[t.predict(|f| row[f]) as usize] += 1;
                }
                argmax_first(&votes) as f64
            }
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.num_features {
            bail_arg!(
                "forest fitted on {} features, got {}",
                self.num_features,
                x.ncols()
            );
        }
        let mut row = vec![0.0; self.num_features];
        Ok((0..x.nrows())
            .map(|i| {
                for (f, r) in row.iter_mut().enumerate() {
                    *r = x[(i, f)];
                }
                self.predict_row(&row)
            })
            .collect())
    }

    pub fn predict_classes(&self, x: &DMatrix<f64>) -> Result<Vec<u32>> {
        Ok(self.predict(x)?.into_iter().map(|v| v as u32).collect())
    }

    /// Out-of-bag predictions for the training rows (`NaN` if a row was in
    /// every bootstrap sample).
    pub fn oob_predictions(&self) -> &[f64] {
        &self.oob
    }

    /// Out-of-bag predictions with in-sample fallback for rows never left out.
    pub fn oob_or_fitted(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut row = vec![0.0; self.num_features];
        self.oob
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v.is_nan() {
                    for (f, r) in row.iter_mut().enumerate() {
                        *r = x[(i, f)];
                    }
                    self.predict_row(&row)
                } else {
                    v
                }
            })
            .collect()
    }

    pub fn oob_mse(&self, y: &[f64]) -> f64 {
        let (mut s, mut c) = (0.0, 0usize);
        for (p, v) in self.oob.iter().zip(y) {
            if !p.is_nan() {
                s += (p - v) * (p - v);
                c += 1;
            }
        }
        if c == 0 {
            f64::NAN
        } else {
            s / c as f64
        }
    }

    /// `1 - MSE_oob / var(y)`.
    pub fn oob_r2(&self, y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if var == 0.0 {
            return if self.oob_mse(y) == 0.0 { 1.0 } else { f64::NEG_INFINITY };
        }
        1.0 - self.oob_mse(y) / var
    }

    pub fn oob_accuracy(&self, labels: &[u32]) -> f64 {
        let (mut hit, mut c) = (0usize, 0usize);
        for (p, &l) in self.oob.iter().zip(labels) {
            if !p.is_nan() {
                c += 1;
                if *p as u32 == l {
                    hit += 1;
                }
            }
        }
        hit as f64 / c.max(1) as f64
    }

    /// Leaf index reached by `row` in tree `t`.
    pub(crate) fn leaf_of(&self, t: usize, row: &[f64]) -> usize {
        self.trees[t].leaf_index(|f| row[f])
    }
}
