//! Quantile regression forests: conditional quantiles read off the
//! forest-weighted empirical distribution of the training responses.

use nalgebra::DMatrix;

use super::forest::{ForestParams, RandomForest};
use crate::error::{bail_arg, Result};

#[derive(Debug, Clone)]
pub struct QuantileForest {
    forest: RandomForest,
    /// Training responses in ascending order.
    sorted_y: Vec<f64>,
    /// Position of each training row in `sorted_y`.
    rank: Vec<u32>,
    /// Per tree: CSR layout of (rank, bootstrap count) members for each node id.
    leaf_start: Vec<Vec<u32>>,
    leaf_members: Vec<Vec<(u32, u32)>>,
    /// Per tree: leaf reached by each training row.
    train_leaf: Vec<Vec<u32>>,
}

fn check_level(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        bail_arg!("quantile level {q} outside (0, 1)");
    }
    Ok(())
}

impl QuantileForest {
    pub fn fit(x: &DMatrix<f64>, y: &[f64], params: &ForestParams) -> Result<Self> {
        let forest = RandomForest::fit_regression(x, y, params)?;
        let n = y.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
        let mut rank = vec![0u32; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r as u32;
        }
        let sorted_y = order.iter().map(|&i| y[i]).collect();

        let d = x.ncols();
        let mut row = vec![0.0; d];
        let mut train_leaf = Vec::with_capacity(forest.num_trees());
        let mut leaf_start = Vec::with_capacity(forest.num_trees());
        let mut leaf_members = Vec::with_capacity(forest.num_trees());
        for t in 0..forest.num_trees() {
            let leaves: Vec<u32> = (0..n)
                .map(|i| {
                    for (f, r) in row.iter_mut().enumerate() {
                        *r = x[(i, f)];
                    }
                    forest.leaf_of(t, &row) as u32
                })
                .collect();
            let num_nodes = forest.trees[t].num_nodes();
            let bag = &forest.inbag[t];
            let mut start = vec![0u32; num_nodes + 1];
            for i in 0..n {
                if bag[i] > 0 {
                    start[leaves[i] as usize + 1] += 1;
                }
            }
            for k in 0..num_nodes {
                start[k + 1] += start[k];
            }
            let mut fill = start.clone();
            let mut members = vec![(0u32, 0u32); start[num_nodes] as usize];
            for i in 0..n {
                if bag[i] > 0 {
                    let slot = &mut fill[leaves[i] as usize];
                    members[*slot as usize] = (rank[i], bag[i]);
                    *slot += 1;
                }
            }
            train_leaf.push(leaves);
            leaf_start.push(start);
            leaf_members.push(members);
        }
        Ok(Self {
            forest,
            sorted_y,
            rank,
            leaf_start,
            leaf_members,
            train_leaf,
        })
    }

    pub fn forest(&self) -> &RandomForest {
        &self.forest
    }

    /// Adds tree `t`'s weights for `leaf` into `w`, skipping rank `skip`.
    fn add_leaf(&self, t: usize, leaf: usize, skip: Option<u32>, w: &mut [f64]) -> bool {
        let members =
            &self.leaf_members[t][self.leaf_start[t][leaf] as usize..self.leaf_start[t][leaf + 1] as usize];
        let total: u32 = members
            .iter()
            .filter(|(r, _)| Some(*r) != skip)
            .map(|&(_, c)| c)
            .sum();
        if total == 0 {
            return false;
        }
        let inv = 1.0 / f64::from(total);
        for &(r, c) in members {
            if Some(r) != skip {
                w[r as usize] += f64::from(c) * inv;
            }
        }
        true
    }

    fn read_quantiles(&self, w: &[f64], levels: &[f64]) -> Vec<f64> {
        let total: f64 = w.iter().sum();
        levels
            .iter()
            .map(|&q| {
                let target = q * total;
                let mut acc = 0.0;
                for (k, &wk) in w.iter().enumerate() {
                    acc += wk;
                    // Relative slack guards against rounding in the running sum.
                    if wk > 0.0 && acc >= target * (1.0 - 1e-12) {
                        return self.sorted_y[k];
                    }
                }
                *self.sorted_y.last().unwrap()
            })
            .collect()
    }

    /// Conditional quantiles of the response at `row` for each level in `levels`.
    pub fn quantiles(&self, row: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.forest.num_features() {
            bail_arg!(
                "quantile forest fitted on {} features, got {}",
                self.forest.num_features(),
                row.len()
            );
        }
        for &q in levels {
            check_level(q)?;
        }
        let mut w = vec![0.0; self.sorted_y.len()];
        for t in 0..self.forest.num_trees() {
            let leaf = self.forest.leaf_of(t, row);
            self.add_leaf(t, leaf, None, &mut w);
        }
        Ok(self.read_quantiles(&w, levels))
    }

    pub fn query(&self, row: &[f64], level: f64) -> Result<f64> {
        Ok(self.quantiles(row, &[level])?[0])
    }

    /// Quantiles for training row `i`, using only trees in which `i` was out of
    /// bag (all trees if there are none) and never `i`'s own response.
    pub fn oob_quantiles(&self, i: usize, levels: &[f64]) -> Result<Vec<f64>> {
        if i >= self.rank.len() {
            bail_arg!("row {i} out of range");
        }
        for &q in levels {
            check_level(q)?;
        }
        let skip = Some(self.rank[i]);
        let mut w = vec![0.0; self.sorted_y.len()];
        let mut used = false;
        for t in 0..self.forest.num_trees() {
            if self.forest.inbag[t][i] == 0 {
                used |= self.add_leaf(t, self.train_leaf[t][i] as usize, skip, &mut w);
            }
        }
        if !used {
            for t in 0..self.forest.num_trees() {
                self.add_leaf(t, self.train_leaf[t][i] as usize, skip, &mut w);
            }
        }
        if w.iter().all(|&v| v == 0.0) {
            // Only possible when every leaf holding `i` holds nothing else.
            for (k, v) in w.iter_mut().enumerate() {
                if Some(k as u32) != skip {
                    *v = 1.0;
                }
            }
        }
        Ok(self.read_quantiles(&w, levels))
    }
}
