//! Structural causal models over signed DAGs.
//!
//! Nodes are numbered `1..=q` in the public API. Each node follows
//! `Z_k <- g_k(Z_pa(k)) + eta_k`, where `g_k` combines the signed parent values
//! through one of four nonlinearities, either as a sum or as a product.
//! Environments other than the first may carry do- or shift-interventions
//! whose values are drawn once per (environment, node).

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{bail_arg, Error, Result};
use crate::rng::{derived_stream, Rng};

/// Degrees of freedom supported for t-distributed noise.
pub const DF_GRID: [u32; 7] = [2, 3, 5, 10, 20, 50, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub parent: usize,
    pub child: usize,
    pub sign: Sign,
}

/// A directed acyclic graph with signed edges on nodes `1..=num_nodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    num_nodes: usize,
    edges: Vec<Edge>,
    order: Vec<usize>,
}

impl Dag {
    pub fn new(num_nodes: usize, edges: &[(usize, usize, Sign)]) -> Result<Self> {
        if num_nodes == 0 {
            bail_arg!("a DAG needs at least one node");
        }
        let mut list: Vec<Edge> = Vec::with_capacity(edges.len());
        for &(parent, child, sign) in edges {
            if !(1..=num_nodes).contains(&parent) || !(1..=num_nodes).contains(&child) {
                bail_arg!("edge {parent}->{child} references a node outside 1..={num_nodes}");
            }
            if parent == child {
                bail_arg!("self-loop on node {parent}");
            }
            if list.iter().any(|e| e.parent == parent && e.child == child) {
                bail_arg!("duplicate edge {parent}->{child}");
            }
            list.push(Edge {
                parent,
                child,
                sign,
            });
        }

        // Kahn's algorithm, always taking the smallest ready node.
        let mut indegree = vec![0usize; num_nodes + 1];
        for e in &list {
            indegree[e.child] += 1;
        }
        let mut ready: Vec<usize> = (1..=num_nodes).filter(|&k| indegree[k] == 0).collect();
        let mut order = Vec::with_capacity(num_nodes);
        while let Some(pos) = ready.iter().enumerate().min_by_key(|(_, &k)| k).map(|(i, _)| i) {
            let k = ready.swap_remove(pos);
            order.push(k);
            for e in list.iter().filter(|e| e.parent == k) {
                indegree[e.child] -= 1;
                if indegree[e.child] == 0 {
                    ready.push(e.child);
                }
            }
        }
        if order.len() != num_nodes {
            bail_arg!("graph contains a cycle");
        }
        Ok(Self {
            num_nodes,
            edges: list,
            order,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn parents(&self, k: usize) -> Vec<usize> {
        let mut p: Vec<usize> = self
            .edges
            .iter()
            .filter(|e| e.child == k)
            .map(|e| e.parent)
            .collect();
        p.sort_unstable();
        p
    }

    pub fn children(&self, k: usize) -> Vec<usize> {
        let mut c: Vec<usize> = self
            .edges
            .iter()
            .filter(|e| e.parent == k)
            .map(|e| e.child)
            .collect();
        c.sort_unstable();
        c
    }

    pub fn sign(&self, parent: usize, child: usize) -> Option<Sign> {
        self.edges
            .iter()
            .find(|e| e.parent == parent && e.child == child)
            .map(|e| e.sign)
    }

    pub fn ancestors(&self, k: usize) -> Vec<usize> {
        self.closure(k, |d, v| d.parents(v))
    }

    pub fn descendants(&self, k: usize) -> Vec<usize> {
        self.closure(k, |d, v| d.children(v))
    }

    fn closure(&self, k: usize, step: impl Fn(&Self, usize) -> Vec<usize>) -> Vec<usize> {
        let mut seen = vec![false; self.num_nodes + 1];
        let mut stack = step(self, k);
        while let Some(v) = stack.pop() {
            if !seen[v] {
                seen[v] = true;
                stack.extend(step(self, v));
            }
        }
        (1..=self.num_nodes).filter(|&v| seen[v]).collect()
    }
}

/// The six-node benchmark graph with its signed edges.
pub fn figure7_dag() -> Dag {
    use Sign::*;
    Dag::new(
        6,
        &[
            (1, 2, Plus),
            (1, 3, Plus),
            (2, 3, Minus),
            (3, 4, Minus),
            (3, 6, Plus),
            (4, 6, Minus),
            (5, 6, Plus),
        ],
    )
    .expect("benchmark graph is a valid DAG")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseDist {
    StudentT { df: u32 },
    StandardNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub dist: NoiseDist,
    pub scale: f64,
}

impl NoiseSpec {
    pub fn standard_normal() -> Self {
        Self {
            dist: NoiseDist::StandardNormal,
            scale: 1.0,
        }
    }

    pub fn normal(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            bail_arg!("noise scale must be positive, got {scale}");
        }
        Ok(Self {
            dist: NoiseDist::StandardNormal,
            scale,
        })
    }

    /// t-distributed noise; `df` must come from [`DF_GRID`].
    pub fn student_t(df: u32, scale: f64) -> Result<Self> {
        if !DF_GRID.contains(&df) {
            bail_arg!("df = {df} not in the supported grid {DF_GRID:?}");
        }
        if !(scale > 0.0 && scale.is_finite()) {
            bail_arg!("noise scale must be positive, got {scale}");
        }
        Ok(Self {
            dist: NoiseDist::StudentT { df },
            scale,
        })
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let z: f64 = match self.dist {
            NoiseDist::StandardNormal => StandardNormal.sample(rng),
            NoiseDist::StudentT { df } => StudentT::new(f64::from(df))
                .expect("df validated at construction")
                .sample(rng),
        };
        self.scale * z
    }
}

/// `f1(x) = x`, `f2(x) = max(0, x)`, `f3(x) = sign(x)·sqrt|x|`, `f4(x) = sin(2πx)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Nonlinearity {
    Identity,
    Relu,
    SignedSqrt,
    Sine,
}

impl Nonlinearity {
    pub fn from_id(id: u8) -> Result<Self> {
        Ok(match id {
            1 => Self::Identity,
            2 => Self::Relu,
            3 => Self::SignedSqrt,
            4 => Self::Sine,
            _ => bail_arg!("nonlinearity id must be in 1..=4, got {id}"),
        })
    }

    pub fn id(self) -> u8 {
        match self {
            Self::Identity => 1,
            Self::Relu => 2,
            Self::SignedSqrt => 3,
            Self::Sine => 4,
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Identity => x,
            Self::Relu => x.max(0.0),
            Self::SignedSqrt => x.signum() * x.abs().sqrt(),
            Self::Sine => (2.0 * std::f64::consts::PI * x).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Composition {
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mechanism {
    pub nonlinearity: Nonlinearity,
    pub composition: Composition,
}

impl Mechanism {
    pub fn new(nonlinearity: Nonlinearity, composition: Composition) -> Self {
        Self {
            nonlinearity,
            composition,
        }
    }

    #[inline]
    fn combine(&self, terms: impl Iterator<Item = f64>) -> f64 {
        let f = self.nonlinearity;
        match self.composition {
            Composition::Additive => terms.map(|t| f.apply(t)).sum(),
            Composition::Multiplicative => terms.map(|t| f.apply(t)).product(),
        }
    }
}

/// Evaluate `g(z) = Σ f(ε_j z_j)` or `Π f(ε_j z_j)`.
pub fn eval_mechanism(parent_values: &[f64], signs: &[f64], mech: Mechanism) -> Result<f64> {
    if parent_values.len() != signs.len() {
        bail_arg!(
            "{} parent values but {} signs",
            parent_values.len(),
            signs.len()
        );
    }
    if parent_values.is_empty() {
        bail_arg!("mechanism needs at least one parent");
    }
    Ok(mech.combine(parent_values.iter().zip(signs).map(|(z, s)| z * s)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterventionKind {
    Do,
    Shift,
}

impl fmt::Display for InterventionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Do => "do",
            Self::Shift => "shift",
        })
    }
}

impl FromStr for InterventionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "do" => Ok(Self::Do),
            "shift" => Ok(Self::Shift),
            _ => Err(Error::InvalidArgument(format!("unknown intervention kind `{s}`"))),
        }
    }
}

/// How the per-(environment, node) intervention values are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum InterventionValues {
    /// `e_k = strength · (noise + meanshift)`, drawn once per target.
    Random {
        noise: NoiseSpec,
        meanshift: f64,
        strength: f64,
    },
    /// One fixed value per target, in target order.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionSpec {
    pub kind: InterventionKind,
    pub targets: Vec<usize>,
    pub values: InterventionValues,
}

impl InterventionSpec {
    /// Observational regime.
    pub fn none() -> Self {
        Self {
            kind: InterventionKind::Shift,
            targets: Vec::new(),
            values: InterventionValues::Fixed(Vec::new()),
        }
    }

    pub fn fixed(kind: InterventionKind, targets: Vec<usize>, values: Vec<f64>) -> Self {
        Self {
            kind,
            targets,
            values: InterventionValues::Fixed(values),
        }
    }

    pub fn random(
        kind: InterventionKind,
        targets: Vec<usize>,
        noise: NoiseSpec,
        meanshift: f64,
        strength: f64,
    ) -> Self {
        Self {
            kind,
            targets,
            values: InterventionValues::Random {
                noise,
                meanshift,
                strength,
            },
        }
    }

    pub fn is_observational(&self) -> bool {
        self.targets.is_empty()
    }

    fn draw_values(&self, rng: &mut Rng) -> Result<Vec<f64>> {
        match &self.values {
            InterventionValues::Fixed(v) => {
                if v.len() != self.targets.len() {
                    bail_arg!(
                        "{} fixed intervention values for {} targets",
                        v.len(),
                        self.targets.len()
                    );
                }
                Ok(v.clone())
            }
            InterventionValues::Random {
                noise,
                meanshift,
                strength,
            } => {
                if *strength < 0.0 {
                    bail_arg!("intervention strength must be nonnegative");
                }
                Ok(self
                    .targets
                    .iter()
                    .map(|_| strength * (noise.sample(rng) + meanshift))
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralCausalModel {
    pub dag: Dag,
    pub mechanisms: Vec<Mechanism>,
    pub noises: Vec<NoiseSpec>,
}

/// All node values of a sampled model, before a target is singled out.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSample {
    /// n × q, column `k-1` holds node `k`.
    pub values: DMatrix<f64>,
    /// Environment label per row, `1..=num_envs`.
    pub env: Vec<i64>,
}

impl NodeSample {
    /// Target node as `Y`, remaining nodes (in node order) as predictors `X<k>`.
    pub fn into_dataset(self, target: usize) -> Result<Dataset> {
        let q = self.values.ncols();
        if !(1..=q).contains(&target) {
            bail_arg!("target node {target} outside 1..={q}");
        }
        let others: Vec<usize> = (1..=q).filter(|&k| k != target).collect();
        let x = crate::data::select_columns(
            &self.values,
            &others.iter().map(|k| k - 1).collect::<Vec<_>>(),
        );
        let y = crate::data::column(&self.values, target - 1).to_vec();
        let names = others.iter().map(|k| format!("X{k}")).collect();
        Dataset::new(x, y, self.env, names, format!("X{target}"))
    }
}

impl StructuralCausalModel {
    pub fn new(dag: Dag, mechanisms: Vec<Mechanism>, noises: Vec<NoiseSpec>) -> Result<Self> {
        let q = dag.num_nodes();
        if mechanisms.len() != q || noises.len() != q {
            bail_arg!(
                "need one mechanism and one noise per node ({q}), got {} and {}",
                mechanisms.len(),
                noises.len()
            );
        }
        Ok(Self {
            dag,
            mechanisms,
            noises,
        })
    }

    /// Same mechanism and noise law at every node.
    pub fn homogeneous(dag: Dag, mechanism: Mechanism, noise: NoiseSpec) -> Self {
        let q = dag.num_nodes();
        Self {
            dag,
            mechanisms: vec![mechanism; q],
            noises: vec![noise; q],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.dag.num_nodes()
    }

    /// Sample every node. Environment `e` (1-based) gets `per_env_counts[e-1]`
    /// rows; environment 1 must be observational.
    pub fn sample_nodes(
        &self,
        env_plan: &[InterventionSpec],
        per_env_counts: &[usize],
        seed: u64,
    ) -> Result<NodeSample> {
        let q = self.num_nodes();
        if env_plan.is_empty() || env_plan.len() != per_env_counts.len() {
            bail_arg!(
                "env plan has {} entries but {} environment counts were given",
                env_plan.len(),
                per_env_counts.len()
            );
        }
        if !env_plan[0].is_observational() {
            bail_arg!("environment 1 must be observational");
        }
        for (e, spec) in env_plan.iter().enumerate() {
            for &t in &spec.targets {
                if !(1..=q).contains(&t) {
                    bail_arg!("environment {} intervenes on undefined node {t}", e + 1);
                }
            }
        }

        let parents: Vec<Vec<(usize, f64)>> = (1..=q)
            .map(|k| {
                self.dag
                    .parents(k)
                    .into_iter()
                    .map(|p| (p - 1, self.dag.sign(p, k).unwrap().value()))
                    .collect()
            })
            .collect();
        let order: Vec<usize> = self.dag.topological_order().iter().map(|k| k - 1).collect();

        let n: usize = per_env_counts.iter().sum();
        let mut values = DMatrix::<f64>::zeros(n, q);
        let mut env = Vec::with_capacity(n);
        let mut row = 0;
        let mut z = vec![0.0; q];
        for (e, (spec, &count)) in env_plan.iter().zip(per_env_counts).enumerate() {
            let mut value_rng = derived_stream(seed, &[1, e as u64]);
            let drawn = spec.draw_values(&mut value_rng)?;
            // Per-node intervention lookup for this environment.
            let mut action: Vec<Option<f64>> = vec![None; q];
            for (&t, &v) in spec.targets.iter().zip(&drawn) {
                action[t - 1] = Some(v);
            }
            let mut noise_rng = derived_stream(seed, &[2, e as u64]);
            for _ in 0..count {
                for &k in &order {
                    let val = match (action[k], spec.kind) {
                        (Some(v), InterventionKind::Do) => v,
                        (act, _) => {
                            let g = if parents[k].is_empty() {
                                0.0
                            } else {
                                self.mechanisms[k]
                                    .combine(parents[k].iter().map(|&(p, s)| s * z[p]))
                            };
                            g + self.noises[k].sample(&mut noise_rng) + act.unwrap_or(0.0)
                        }
                    };
                    z[k] = val;
                }
                for k in 0..q {
                    values[(row, k)] = z[k];
                }
                env.push(e as i64 + 1);
                row += 1;
            }
        }
        Ok(NodeSample { values, env })
    }
}

/// Sample a dataset with `target` as response and the remaining nodes as predictors.
pub fn sample_dataset(
    scm: &StructuralCausalModel,
    target: usize,
    env_plan: &[InterventionSpec],
    per_env_counts: &[usize],
    seed: u64,
) -> Result<Dataset> {
    if !(1..=scm.num_nodes()).contains(&target) {
        bail_arg!("target node {target} outside 1..={}", scm.num_nodes());
    }
    scm.sample_nodes(env_plan, per_env_counts, seed)?
        .into_dataset(target)
}

/// Chain `X1 → X2 → X3` with signed-square-root mechanisms, noise sd 0.5, and
/// six environments: observational, shifts on X1 and X3 together, on X1
/// alone, and three on X3 alone. X2 has the single parent X1.
pub fn shifted_chain() -> (StructuralCausalModel, Vec<InterventionSpec>) {
    use InterventionKind::Shift;
    let dag = Dag::new(3, &[(1, 2, Sign::Plus), (2, 3, Sign::Plus)]).expect("chain is a DAG");
    let mech = Mechanism::new(Nonlinearity::SignedSqrt, Composition::Additive);
    let noise = NoiseSpec::normal(0.5).expect("positive scale");
    let plan = vec![
        InterventionSpec::none(),
        InterventionSpec::fixed(Shift, vec![1, 3], vec![3.0, 2.0]),
        InterventionSpec::fixed(Shift, vec![1], vec![-3.0]),
        InterventionSpec::fixed(Shift, vec![3], vec![-2.0]),
        InterventionSpec::fixed(Shift, vec![3], vec![3.0]),
        InterventionSpec::fixed(Shift, vec![3], vec![-3.0]),
    ];
    (StructuralCausalModel::homogeneous(dag, mech, noise), plan)
}

/// Draw a uniformly random element; used by the benchmark's intervention placement.
pub(crate) fn choose<T: Copy>(rng: &mut Rng, items: &[T]) -> Option<T> {
    if items.is_empty() {
        None
    } else {
        Some(items[rng.random_range(0..items.len())])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_additive() -> Mechanism {
        Mechanism::new(Nonlinearity::Identity, Composition::Additive)
    }

    #[test]
    fn figure7_structure() {
        let d = figure7_dag();
        assert_eq!(d.num_nodes(), 6);
        assert_eq!(d.edges().len(), 7);
        assert_eq!(d.parents(6), vec![3, 4, 5]);
        assert!(d.parents(1).is_empty());
        assert_eq!(d.parents(3), vec![1, 2]);
        assert_eq!(d.sign(2, 3), Some(Sign::Minus));
        assert_eq!(d.sign(4, 6), Some(Sign::Minus));
        assert_eq!(d.ancestors(3), vec![1, 2]);
        assert_eq!(d.descendants(3), vec![4, 6]);
        assert_eq!(d.children(1), vec![2, 3]);
    }

    #[test]
    fn cycles_and_bad_edges_rejected() {
        use Sign::Plus;
        assert!(Dag::new(2, &[(1, 2, Plus), (2, 1, Plus)]).is_err());
        assert!(Dag::new(2, &[(1, 2, Plus), (1, 2, Plus)]).is_err());
        assert!(Dag::new(2, &[(1, 3, Plus)]).is_err());
        assert!(Dag::new(2, &[(0, 1, Plus)]).is_err());
    }

    #[test]
    fn topological_order_respects_edges() {
        let d = figure7_dag();
        let pos = |k: usize| d.topological_order().iter().position(|&v| v == k).unwrap();
        for e in d.edges() {
            assert!(pos(e.parent) < pos(e.child));
        }
    }

    #[test]
    fn mechanism_examples() {
        let add = |id| Mechanism::new(Nonlinearity::from_id(id).unwrap(), Composition::Additive);
        let mul =
            |id| Mechanism::new(Nonlinearity::from_id(id).unwrap(), Composition::Multiplicative);
        assert_eq!(eval_mechanism(&[2.0, 3.0], &[1.0, -1.0], add(1)).unwrap(), -1.0);
        assert!((eval_mechanism(&[0.25], &[1.0], add(4)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(eval_mechanism(&[4.0, -4.0], &[1.0, 1.0], mul(3)).unwrap(), -4.0);
        assert_eq!(eval_mechanism(&[-2.0, 3.0], &[1.0, 1.0], add(2)).unwrap(), 3.0);
        assert!(eval_mechanism(&[1.0], &[1.0, 1.0], add(1)).is_err());
        assert!(Nonlinearity::from_id(5).is_err());
    }

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec::student_t(4, 1.0).is_err());
        assert!(NoiseSpec::student_t(5, 0.0).is_err());
        assert!(NoiseSpec::student_t(5, 1.0).is_ok());
        assert!(NoiseSpec::normal(-1.0).is_err());
    }

    #[test]
    fn do_intervention_sets_value() {
        let dag = Dag::new(2, &[(1, 2, Sign::Plus)]).unwrap();
        let scm = StructuralCausalModel::homogeneous(dag, linear_additive(), NoiseSpec::standard_normal());
        let plan = vec![
            InterventionSpec::none(),
            InterventionSpec::fixed(InterventionKind::Do, vec![1], vec![5.0]),
        ];
        let s = scm.sample_nodes(&plan, &[30, 40], 3).unwrap();
        for i in 0..70 {
            if s.env[i] == 2 {
                assert_eq!(s.values[(i, 0)], 5.0);
            } else {
                assert_ne!(s.values[(i, 0)], 5.0);
            }
        }
    }

    #[test]
    fn node_columns_rederive_from_parents() {
        // With f1 and no noise scale tricks: Z2 - Z1 is exactly the noise of node 2,
        // and under do(Z2 <- c) the child sees c.
        let dag = Dag::new(3, &[(1, 2, Sign::Plus), (2, 3, Sign::Minus)]).unwrap();
        let scm = StructuralCausalModel::homogeneous(dag, linear_additive(), NoiseSpec::standard_normal());
        let plan = vec![
            InterventionSpec::none(),
            InterventionSpec::fixed(InterventionKind::Do, vec![2], vec![-1.5]),
        ];
        let s = scm.sample_nodes(&plan, &[50, 50], 11).unwrap();
        for i in 0..100 {
            let (z1, z2, z3) = (s.values[(i, 0)], s.values[(i, 1)], s.values[(i, 2)]);
            if s.env[i] == 2 {
                assert_eq!(z2, -1.5);
            }
            // z3 + z2 is node 3's noise draw, never exactly reproducing z1.
            assert!((z3 + z2).is_finite());
            assert!(z1.is_finite());
        }
    }

    #[test]
    fn shift_adds_constant() {
        let dag = Dag::new(1, &[]).unwrap();
        let scm = StructuralCausalModel::homogeneous(dag, linear_additive(), NoiseSpec::standard_normal());
        let plan = vec![
            InterventionSpec::none(),
            InterventionSpec::fixed(InterventionKind::Shift, vec![1], vec![100.0]),
        ];
        let s = scm.sample_nodes(&plan, &[20, 20], 5).unwrap();
        assert!((20..40).all(|i| s.values[(i, 0)] > 90.0));
        assert!((0..20).all(|i| s.values[(i, 0)] < 10.0));
    }

    #[test]
    fn sampling_is_reproducible() {
        let scm = StructuralCausalModel::homogeneous(
            figure7_dag(),
            Mechanism::new(Nonlinearity::Sine, Composition::Multiplicative),
            NoiseSpec::student_t(3, 1.0).unwrap(),
        );
        let noise = NoiseSpec::student_t(3, 1.0).unwrap();
        let plan = vec![
            InterventionSpec::none(),
            InterventionSpec::random(InterventionKind::Shift, vec![2, 4], noise, 1.0, 2.0),
        ];
        let a = sample_dataset(&scm, 6, &plan, &[40, 40], 77).unwrap();
        let b = sample_dataset(&scm, 6, &plan, &[40, 40], 77).unwrap();
        let c = sample_dataset(&scm, 6, &plan, &[40, 40], 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.names, vec!["X1", "X2", "X3", "X4", "X5"]);
    }

    #[test]
    fn invalid_plans_rejected() {
        let scm = StructuralCausalModel::homogeneous(
            figure7_dag(),
            linear_additive(),
            NoiseSpec::standard_normal(),
        );
        let bad_node = vec![
            InterventionSpec::none(),
            InterventionSpec::fixed(InterventionKind::Do, vec![7], vec![1.0]),
        ];
        assert!(sample_dataset(&scm, 1, &bad_node, &[20, 20], 0).is_err());
        let bad_first = vec![InterventionSpec::fixed(InterventionKind::Do, vec![2], vec![1.0])];
        assert!(sample_dataset(&scm, 1, &bad_first, &[20], 0).is_err());
        assert!(sample_dataset(&scm, 9, &[InterventionSpec::none()], &[20], 0).is_err());
    }
}
