//! Residual resampling for bootstrap bands, including the panel block
//! bootstrap that keeps short runs of consecutive residuals together.

use rand::Rng as _;

use crate::data::levels_in_order;
use crate::error::{bail_arg, Result};
use crate::rng::{stream, Rng};

/// Unit and time index per row.
#[derive(Debug, Clone, Copy)]
pub struct Panel<'a> {
    pub unit: &'a [i64],
    pub time: &'a [i64],
}

/// One block of a resampled series: positions `start..start + len` of
/// series `unit` receive residuals `source_start..` of series `source_unit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub unit: usize,
    pub start: usize,
    pub len: usize,
    pub source_unit: usize,
    pub source_start: usize,
}

/// Blocks covering every series of the given lengths. The last block of a
/// series is truncated to fit.
pub fn block_plan(lengths: &[usize], block_len: usize, rng: &mut Rng) -> Result<Vec<Block>> {
    if block_len == 0 {
        bail_arg!("block length must be at least 1");
    }
    if let Some(&short) = lengths.iter().find(|&&t| t < block_len) {
        bail_arg!("block length {block_len} exceeds series length {short}");
    }
    let mut plan = Vec::new();
    for (unit, &t) in lengths.iter().enumerate() {
        for start in (0..t).step_by(block_len) {
            let source_unit = rng.random_range(0..lengths.len());
            let source_start = rng.random_range(0..=lengths[source_unit] - block_len);
            plan.push(Block {
                unit,
                start,
                len: block_len.min(t - start),
                source_unit,
                source_start,
            });
        }
    }
    Ok(plan)
}

/// Row indices of each unit's series, sorted by time; units in order of first
/// appearance.
pub(crate) fn series(panel: Panel<'_>) -> Result<Vec<Vec<usize>>> {
    if panel.unit.len() != panel.time.len() {
        bail_arg!("unit and time columns differ in length");
    }
    let units = levels_in_order(panel.unit);
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); units.len()];
    for (i, u) in panel.unit.iter().enumerate() {
        let k = units.iter().position(|v| v == u).expect("listed unit");
        rows[k].push(i);
    }
    for r in &mut rows {
        r.sort_by_key(|&i| panel.time[i]);
        if r.windows(2).any(|w| panel.time[w[0]] == panel.time[w[1]]) {
            bail_arg!("duplicate time index within a unit");
        }
    }
    Ok(rows)
}

/// `fitted + residuals` with residual blocks of length `block_len` drawn from
/// random units and random start times.
pub fn block_bootstrap_resample(
    fitted: &[f64],
    residuals: &[f64],
    panel: Panel<'_>,
    block_len: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = fitted.len();
    if residuals.len() != n || panel.unit.len() != n {
        bail_arg!("fitted values, residuals and panel must have equal length");
    }
    let rows = series(panel)?;
    let lengths: Vec<usize> = rows.iter().map(Vec::len).collect();
    let plan = block_plan(&lengths, block_len, &mut stream(seed))?;
    let mut out = fitted.to_vec();
    for b in plan {
        for j in 0..b.len {
            let target = rows[b.unit][b.start + j];
            out[target] += residuals[rows[b.source_unit][b.source_start + j]];
        }
    }
    Ok(out)
}

/// `fitted + residuals` with residuals drawn independently with replacement.
pub(crate) fn iid_resample(fitted: &[f64], residuals: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = stream(seed);
    let n = residuals.len();
    fitted.iter().map(|f| f + residuals[rng.random_range(0..n)]).collect()
}
