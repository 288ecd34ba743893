//! Simulation benchmark on the six-node graph: draw random settings, sample
//! three-environment data, run ICP with each method, and score the estimate
//! against the true parents.

mod aggregate;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate, read_results, write_aggregate, AggregateRow, STRATA};

use crate::citests::{CITestConfig, Method};
use crate::error::{bail_arg, Error, Result};
use crate::icp::{run_icp, IcpConfig};
use crate::rng::{derive_seed, derived_stream, hash_str, Rng};
use crate::scm::{
    choose, figure7_dag, Composition, NodeSample, InterventionKind, InterventionSpec, Mechanism, Nonlinearity,
    NoiseSpec, StructuralCausalModel, DF_GRID,
};

pub const N_GRID: [usize; 5] = [100, 200, 500, 2000, 5000];
pub const STRENGTH_GRID: [f64; 8] = [0.0, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];
pub const NUM_NODES: usize = 6;
pub const NUM_ENVS: usize = 3;

const TAG_SETTING: u64 = 0x5E7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interv {
    All,
    Rand,
    Close,
}

impl FromStr for Interv {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Self::All,
            "rand" => Self::Rand,
            "close" => Self::Close,
            _ => bail_arg!("unknown intervention location `{s}`"),
        })
    }
}

impl fmt::Display for Interv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::All => "all",
            Self::Rand => "rand",
            Self::Close => "close",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSetting {
    pub index: u64,
    pub n: usize,
    pub target: usize,
    pub df: u32,
    pub multiplic: bool,
    pub shift: bool,
    pub strength: f64,
    pub meanshift: f64,
    pub id: u8,
    pub interv: Interv,
    /// Intervened nodes in environments 2 and 3.
    pub env_targets: [Vec<usize>; 2],
}

/// Fixed values replacing random draws; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SettingOverrides {
    pub n: Option<usize>,
    /// Target drawn uniformly from this list.
    pub target: Option<Vec<usize>>,
    pub df: Option<u32>,
    pub multiplic: Option<bool>,
    pub shift: Option<bool>,
    pub strength: Option<f64>,
    pub meanshift: Option<f64>,
    pub id: Option<u8>,
    pub interv: Option<Interv>,
    /// Intervene on exactly these nodes in environments 2 and 3.
    pub intervention_targets: Option<Vec<usize>>,
}

/// Nodes intervened on in one environment for the given location rule.
fn draw_targets(rng: &mut Rng, interv: Interv, target: usize) -> Vec<usize> {
    let dag = figure7_dag();
    let mut t: Vec<usize> = match interv {
        Interv::All => (1..=NUM_NODES).filter(|&k| k != target).collect(),
        Interv::Rand => [dag.ancestors(target), dag.descendants(target)]
            .iter()
            .filter_map(|set| choose(rng, set))
            .collect(),
        Interv::Close => [dag.parents(target), dag.children(target)]
            .iter()
            .filter_map(|set| choose(rng, set))
            .collect(),
    };
    t.sort_unstable();
    t
}

/// Settings drawn with every grid restricted as requested.
pub fn draw_setting_with(master_seed: u64, index: u64, n_max: Option<usize>, o: &SettingOverrides) -> Result<SimSetting> {
    let mut rng = derived_stream(master_seed, &[TAG_SETTING, index]);
    let n_grid: Vec<usize> = N_GRID.iter().copied().filter(|&n| n_max.is_none_or(|m| n <= m)).collect();
    if n_grid.is_empty() && o.n.is_none() {
        bail_arg!("no sample size in the grid is ≤ n_max");
    }
    // Always consume the same draws so overriding one field leaves the others unchanged.
    let n = choose(&mut rng, &n_grid).unwrap_or(0);
    let target = rng.random_range(1..=NUM_NODES);
    let df = choose(&mut rng, &DF_GRID).expect("nonempty grid");
    let multiplic = rng.random_bool(0.5);
    let shift = rng.random_bool(0.5);
    let strength = choose(&mut rng, &STRENGTH_GRID).expect("nonempty grid");
    let meanshift = choose(&mut rng, &STRENGTH_GRID).expect("nonempty grid");
    let id = rng.random_range(1..=4u8);
    let interv = choose(&mut rng, &[Interv::All, Interv::Rand, Interv::Close]).expect("nonempty");
    let target = match &o.target {
        Some(list) if list.is_empty() => bail_arg!("target override list is empty"),
        Some(list) => list[rng.random_range(0..list.len())],
        None => target,
    };
    if !(1..=NUM_NODES).contains(&target) {
        bail_arg!("target {target} outside 1..={NUM_NODES}");
    }
    let interv = o.interv.unwrap_or(interv);
    let env_targets = match &o.intervention_targets {
        Some(t) => {
            let mut t = t.clone();
            t.sort_unstable();
            t.dedup();
            if t.iter().any(|&k| k == target || !(1..=NUM_NODES).contains(&k)) {
                bail_arg!("intervention targets must be non-target nodes in 1..={NUM_NODES}");
            }
            [t.clone(), t]
        }
        None => [draw_targets(&mut rng, interv, target), draw_targets(&mut rng, interv, target)],
    };
    let s = SimSetting {
        index,
        n: o.n.unwrap_or(n),
        target,
        df: o.df.unwrap_or(df),
        multiplic: o.multiplic.unwrap_or(multiplic),
        shift: o.shift.unwrap_or(shift),
        strength: o.strength.unwrap_or(strength),
        meanshift: o.meanshift.unwrap_or(meanshift),
        id: o.id.unwrap_or(id),
        interv,
        env_targets,
    };
    if s.n < 20 {
        bail_arg!("sample size {} too small", s.n);
    }
    if !DF_GRID.contains(&s.df) {
        bail_arg!("df {} not in {DF_GRID:?}", s.df);
    }
    if !(1..=4).contains(&s.id) {
        bail_arg!("nonlinearity id {} outside 1..=4", s.id);
    }
    if s.strength < 0.0 {
        bail_arg!("strength must be nonnegative");
    }
    Ok(s)
}

/// A setting drawn uniformly from the full grids.
pub fn draw_setting(master_seed: u64, index: u64) -> SimSetting {
    draw_setting_with(master_seed, index, None, &SettingOverrides::default()).expect("unrestricted grids are valid")
}

impl SimSetting {
    pub fn model(&self) -> Result<StructuralCausalModel> {
        let composition = if self.multiplic { Composition::Multiplicative } else { Composition::Additive };
        let mech = Mechanism::new(Nonlinearity::from_id(self.id)?, composition);
        Ok(StructuralCausalModel::homogeneous(figure7_dag(), mech, NoiseSpec::student_t(self.df, 1.0)?))
    }

    pub fn env_plan(&self) -> Result<Vec<InterventionSpec>> {
        let kind = if self.shift { InterventionKind::Shift } else { InterventionKind::Do };
        let noise = NoiseSpec::student_t(self.df, 1.0)?;
        let mut plan = vec![InterventionSpec::none()];
        for t in &self.env_targets {
            plan.push(InterventionSpec::random(kind, t.clone(), noise, self.meanshift, self.strength));
        }
        Ok(plan)
    }

    /// True parents of the target, as node numbers.
    pub fn parents(&self) -> Vec<usize> {
        figure7_dag().parents(self.target)
    }

    /// Samples every node; each row joins one of the three environments
    /// uniformly at random.
    pub fn sample_nodes(&self, seed: u64) -> Result<NodeSample> {
        let mut rng = derived_stream(seed, &[0]);
        let mut counts = [0usize; NUM_ENVS];
        for _ in 0..self.n {
            counts[rng.random_range(0..NUM_ENVS)] += 1;
        }
        self.model()?.sample_nodes(&self.env_plan()?, &counts, derive_seed(seed, &[1]))
    }

    /// The sample with the setting's target as response.
    pub fn sample(&self, seed: u64) -> Result<crate::Dataset> {
        self.sample_nodes(seed)?.into_dataset(self.target)
    }

    /// `key = value` lines describing the setting.
    pub fn describe(&self) -> Vec<String> {
        vec![
            format!("setting = {}", self.index),
            format!("n = {}", self.n),
            format!("target = {}", self.target),
            format!("df = {}", self.df),
            format!("multiplic = {}", self.multiplic),
            format!("shift = {}", self.shift),
            format!("strength = {}", self.strength),
            format!("meanshift = {}", self.meanshift),
            format!("id = {}", self.id),
            format!("interv = {}", self.interv),
            format!("env2_targets = {}", format_set(&self.env_targets[0])),
            format!("env3_targets = {}", format_set(&self.env_targets[1])),
        ]
    }
}

/// `|A ∩ B| / |A ∪ B|`, and 1 when both are empty.
pub fn jaccard(s_hat: &[usize], s_star: &[usize]) -> f64 {
    let inter = s_hat.iter().filter(|v| s_star.contains(v)).count();
    let union = s_hat.len() + s_star.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// `∅` with probability `1 - alpha`, otherwise one uniformly chosen non-target node.
pub fn random_baseline(p: usize, target: usize, alpha: f64, seed: u64) -> Result<Vec<usize>> {
    if p < 2 {
        bail_arg!("random baseline needs p ≥ 2");
    }
    if !(1..=p).contains(&target) {
        bail_arg!("target {target} outside 1..={p}");
    }
    let mut rng = crate::rng::stream(seed);
    if rng.random::<f64>() >= alpha {
        return Ok(Vec::new());
    }
    let others: Vec<usize> = (1..=p).filter(|&k| k != target).collect();
    Ok(vec![others[rng.random_range(0..others.len())]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMethod {
    Icp(Method),
    Random,
}

impl FromStr for BenchMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "random" {
            Ok(Self::Random)
        } else {
            Ok(Self::Icp(s.parse()?))
        }
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Icp(m) => m.fmt(f),
            Self::Random => f.write_str("random"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub num_settings: usize,
    pub reps: usize,
    pub methods: Vec<String>,
    pub alpha: f64,
    /// Largest sample size drawn from the grid.
    pub n_max: Option<usize>,
    /// Trees per forest inside the tests.
    pub num_trees: usize,
    pub num_sims: usize,
    /// Skip larger sets once the running intersection is empty.
    pub early_exit: bool,
    pub overrides: SettingOverrides,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            num_settings: 40,
            reps: 5,
            methods: vec![
                "env-pred".into(),
                "resid-dist:gam:levene-wilcoxon".into(),
                "cond-quantile".into(),
            ],
            alpha: 0.05,
            n_max: Some(500),
            num_trees: 100,
            num_sims: 250,
            early_exit: true,
            overrides: SettingOverrides::default(),
        }
    }
}

impl GridConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("grid config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            bail_arg!("benchmark needs at least one method");
        }
        self.parsed_methods()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail_arg!("alpha must lie in (0, 1)");
        }
        if self.num_trees == 0 {
            bail_arg!("num_trees must be positive");
        }
        Ok(())
    }

    pub fn parsed_methods(&self) -> Result<Vec<BenchMethod>> {
        self.methods.iter().map(|m| m.parse()).collect()
    }
}

/// One (setting, repetition, method) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub setting: u64,
    pub rep: u64,
    pub method: String,
    pub n: usize,
    pub target: usize,
    pub df: u32,
    pub multiplic: bool,
    pub shift: bool,
    pub strength: f64,
    pub meanshift: f64,
    pub id: u8,
    pub interv: String,
    pub env2_targets: String,
    pub env3_targets: String,
    pub s_hat: String,
    pub s_star: String,
    pub fwer_violation: Option<bool>,
    pub jaccard: Option<f64>,
    pub status: String,
    pub error: String,
}

/// `{1;3}` style rendering of a node set.
pub fn format_set(s: &[usize]) -> String {
    let inner: Vec<String> = s.iter().map(|v| v.to_string()).collect();
    format!("{{{}}}", inner.join(";"))
}

pub fn parse_set(s: &str) -> Result<Vec<usize>> {
    let inner = s
        .trim()
        .strip_prefix('{')
        .and_then(|r| r.strip_suffix('}'))
        .ok_or_else(|| Error::InvalidArgument(format!("bad set `{s}`")))?;
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(';')
        .map(|v| v.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad set `{s}`"))))
        .collect()
}

/// Runs one method on one sampled dataset and returns `Ŝ` as node numbers.
fn estimate(setting: &SimSetting, method: BenchMethod, grid: &GridConfig, data_seed: u64) -> Result<Vec<usize>> {
    let method_seed = derive_seed(data_seed, &[hash_str(&method.to_string())]);
    match method {
        BenchMethod::Random => random_baseline(NUM_NODES, setting.target, grid.alpha, method_seed),
        BenchMethod::Icp(m) => {
            let data = setting.sample(data_seed)?;
            let test = CITestConfig {
                method: m,
                alpha: grid.alpha,
                seed: method_seed,
                num_trees: grid.num_trees,
                num_sims: grid.num_sims,
                ..CITestConfig::default()
            };
            let config = IcpConfig {
                early_exit: grid.early_exit,
                ..IcpConfig::new(test)
            };
            let res = run_icp(&data, &config)?;
            let nodes: Vec<usize> = (1..=NUM_NODES).filter(|&k| k != setting.target).collect();
            Ok(res.s_hat.iter().map(|&j| nodes[j]).collect())
        }
    }
}

pub fn run_one(setting: &SimSetting, rep: u64, method: BenchMethod, grid: &GridConfig, master_seed: u64) -> BenchRow {
    let data_seed = derive_seed(master_seed, &[setting.index, rep]);
    let s_star = setting.parents();
    let result = estimate(setting, method, grid, data_seed);
    let (s_hat, fwer, jac, status, error) = match result {
        Ok(s) => {
            let fwer = s.iter().any(|v| !s_star.contains(v));
            let j = jaccard(&s, &s_star);
            (format_set(&s), Some(fwer), Some(j), "ok", String::new())
        }
        Err(e) => (String::new(), None, None, "error", e.to_string()),
    };
    BenchRow {
        setting: setting.index,
        rep,
        method: method.to_string(),
        n: setting.n,
        target: setting.target,
        df: setting.df,
        multiplic: setting.multiplic,
        shift: setting.shift,
        strength: setting.strength,
        meanshift: setting.meanshift,
        id: setting.id,
        interv: setting.interv.to_string(),
        env2_targets: format_set(&setting.env_targets[0]),
        env3_targets: format_set(&setting.env_targets[1]),
        s_hat,
        s_star: format_set(&s_star),
        fwer_violation: fwer,
        jaccard: jac,
        status: status.into(),
        error,
    }
}

/// The full benchmark table, ordered by (setting, rep, method). The result
/// does not depend on `jobs`.
pub fn run_benchmark(grid: &GridConfig, master_seed: u64, jobs: Option<usize>) -> Result<Vec<BenchRow>> {
    grid.validate()?;
    let methods = grid.parsed_methods()?;
    let settings: Vec<SimSetting> = (0..grid.num_settings as u64)
        .map(|i| draw_setting_with(master_seed, i, grid.n_max, &grid.overrides))
        .collect::<Result<_>>()?;
    let mut work = Vec::new();
    for s in &settings {
        for rep in 0..grid.reps as u64 {
            for &m in &methods {
                work.push((s, rep, m));
            }
        }
    }
    let run = || -> Vec<BenchRow> {
        work.par_iter()
            .map(|&(s, rep, m)| run_one(s, rep, m, grid, master_seed))
            .collect()
    };
    match jobs {
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Error::Runtime(e.to_string()))?;
            Ok(pool.install(run))
        }
        None => Ok(run()),
    }
}

/// Writes rows as comma-separated text with a header.
pub fn write_results<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Runtime(e.to_string()))?;
    Ok(())
}
