use std::sync::OnceLock;

use nalgebra::DMatrix;
use proptest::prelude::*;

use nlicp::bench::{draw_setting, jaccard, N_GRID, STRENGTH_GRID};
use nlicp::citests::{ci_test, CITestConfig, EnvColumn, Method};
use nlicp::icp::{block_plan, defining_sets, intersection, merge_intervals, run_icp, IcpConfig, IcpResult};
use nlicp::io::fmt_f64;
use nlicp::regress::{ForestParams, QuantileForest, RandomForest};
use nlicp::rng::{std_normal, stream};
use nlicp::scm::DF_GRID;
use nlicp::stattests::{fisher_exact_2x2, ks_two_sample, wilcoxon_rank_sum, Alternative};
use nlicp::Dataset;

fn sample(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, len)
}

// Two-sample and contingency tests.

proptest! {
    #[test]
    fn two_sided_tests_are_symmetric(a in sample(1..25), b in sample(1..25)) {
        let w1 = wilcoxon_rank_sum(&a, &b, Alternative::TwoSided).unwrap().p_value;
        let w2 = wilcoxon_rank_sum(&b, &a, Alternative::TwoSided).unwrap().p_value;
        prop_assert!((w1 - w2).abs() < 1e-12);
        let k1 = ks_two_sample(&a, &b).unwrap().p_value;
        let k2 = ks_two_sample(&b, &a).unwrap().p_value;
        prop_assert!((k1 - k2).abs() < 1e-12);
        for p in [w1, k1] {
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn one_sided_wilcoxon_mirrors(a in sample(1..15), b in sample(1..15)) {
        let g = wilcoxon_rank_sum(&a, &b, Alternative::Greater).unwrap().p_value;
        let l = wilcoxon_rank_sum(&b, &a, Alternative::Less).unwrap().p_value;
        prop_assert!((g - l).abs() < 1e-12);
    }

    #[test]
    fn rank_tests_ignore_monotone_transforms(a in sample(1..20), b in sample(1..20)) {
        let f = |v: &[f64]| v.iter().map(|x| x * x * x + 2.0 * x).collect::<Vec<_>>();
        for alt in [Alternative::TwoSided, Alternative::Greater, Alternative::Less] {
            let p = wilcoxon_rank_sum(&a, &b, alt).unwrap().p_value;
            let q = wilcoxon_rank_sum(&f(&a), &f(&b), alt).unwrap().p_value;
            prop_assert!((p - q).abs() < 1e-12);
        }
        let p = ks_two_sample(&a, &b).unwrap().p_value;
        let q = ks_two_sample(&f(&a), &f(&b)).unwrap().p_value;
        prop_assert!((p - q).abs() < 1e-12);
    }

    #[test]
    fn fisher_is_symmetric_and_proper(a in 0..40i64, b in 0..40i64, c in 0..40i64, d in 0..40i64) {
        prop_assume!(a + b + c + d > 0);
        let two = fisher_exact_2x2([[a, b], [c, d]], Alternative::TwoSided).unwrap().p_value;
        let swapped = fisher_exact_2x2([[c, d], [a, b]], Alternative::TwoSided).unwrap().p_value;
        let transposed = fisher_exact_2x2([[a, c], [b, d]], Alternative::TwoSided).unwrap().p_value;
        prop_assert!((two - swapped).abs() < 1e-9 && (two - transposed).abs() < 1e-9);
        let g = fisher_exact_2x2([[a, b], [c, d]], Alternative::Greater).unwrap().p_value;
        let l = fisher_exact_2x2([[a, b], [c, d]], Alternative::Less).unwrap().p_value;
        prop_assert!(g + l >= 1.0 - 1e-9);
        for p in [two, g, l] {
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn number_text_round_trips(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}

// Conditional independence tests.

fn ci_data(seed: u64, n: usize) -> (Vec<f64>, Vec<i64>, DMatrix<f64>) {
    let mut r = stream(seed);
    let env: Vec<i64> = (0..n).map(|i| (i % 3) as i64 * 10 + 1).collect();
    let x = DMatrix::from_fn(n, 2, |_, _| std_normal(&mut r));
    let y = (0..n)
        .map(|i| x[(i, 0)].sin() + 0.2 * env[i] as f64 / 10.0 * x[(i, 1)] + std_normal(&mut r))
        .collect();
    (y, env, x)
}

fn quick(method: Method, seed: u64) -> CITestConfig {
    CITestConfig {
        seed,
        num_trees: 30,
        rp_trees: 20,
        num_sims: 60,
        ..CITestConfig::new(method)
    }
}

fn methods() -> Vec<Method> {
    [
        "kci",
        "rp:fourier",
        "env-pred",
        "target-pred:gam:f",
        "target-pred:rf:wilcoxon",
        "resid-dist:gam:ks",
        "resid-dist:rf:levene-wilcoxon",
        "cond-quantile",
    ]
    .iter()
    .map(|m| m.parse().unwrap())
    .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn p_values_ignore_label_names_and_row_order(seed in any::<u64>(), shuffle in any::<u64>(), offset in 1..1000i64) {
        let n = 90;
        let (y, env, x) = ci_data(seed, n);
        let mut order: Vec<usize> = (0..n).collect();
        let mut r = stream(shuffle);
        for i in (1..n).rev() {
            order.swap(i, rand::Rng::random_range(&mut r, 0..=i));
        }
        let y2: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let x2 = DMatrix::from_fn(n, 2, |i, j| x[(order[i], j)]);
        // A bijective relabeling that also changes the order of first appearance.
        let env2: Vec<i64> = order.iter().map(|&i| -3 * env[i] + offset).collect();
        for m in methods() {
            let c = quick(m, seed);
            let base = ci_test(&y, &EnvColumn::Categorical(env.clone()), &x, &c).unwrap();
            let again = ci_test(&y, &EnvColumn::Categorical(env.clone()), &x, &c).unwrap();
            let moved = ci_test(&y2, &EnvColumn::Categorical(env2.clone()), &x2, &c).unwrap();
            prop_assert!((0.0..=1.0).contains(&base.p_value));
            prop_assert_eq!(base.p_value, again.p_value, "{} not deterministic", m);
            prop_assert_eq!(base.p_value, moved.p_value, "{} depends on labels or row order", m);
        }
    }
}

// ICP engine.

fn family() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::btree_set(0..8usize, 1..6), 0..6)
        .prop_map(|f| f.into_iter().map(|s| s.into_iter().collect()).collect())
}

fn brute_force(family: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let masks: Vec<u32> = family.iter().map(|s| s.iter().fold(0, |m, &i| m | 1 << i)).collect();
    let hits: Vec<u32> = (0u32..256).filter(|&c| masks.iter().all(|&s| s & c != 0)).collect();
    let mut out: Vec<Vec<usize>> = hits
        .iter()
        .filter(|&&c| !hits.iter().any(|&o| o != c && o & c == o))
        .map(|&c| (0..8).filter(|i| c >> i & 1 == 1).collect())
        .collect();
    out.sort_by(|a: &Vec<usize>, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out
}

proptest! {
    #[test]
    fn defining_sets_are_minimal_hitting_sets(f in family()) {
        let d = defining_sets(&f);
        prop_assert_eq!(d.empty_family, f.is_empty());
        prop_assert_eq!(d.sets, brute_force(&f));
    }

    #[test]
    fn intersection_is_contained_in_every_member(f in family()) {
        let s = intersection(&f);
        for set in &f {
            prop_assert!(s.iter().all(|v| set.contains(v)));
        }
        // Nothing outside Ŝ lies in every member.
        if !f.is_empty() {
            for v in 0..8 {
                if f.iter().all(|set| set.contains(&v)) {
                    prop_assert!(s.contains(&v));
                }
            }
        }
    }

    #[test]
    fn merged_intervals_are_disjoint_and_cover(v in prop::collection::vec((-10.0..10.0f64, 0.0..5.0f64), 1..12)) {
        let iv: Vec<(f64, f64)> = v.iter().map(|&(lo, w)| (lo, lo + w)).collect();
        let m = merge_intervals(iv.clone());
        for w in m.windows(2) {
            prop_assert!(w[0].1 < w[1].0);
        }
        for (lo, hi) in iv {
            prop_assert!(m.iter().any(|&(a, b)| a <= lo && hi <= b));
        }
    }

    #[test]
    fn block_plans_cover_every_position_once(lengths in prop::collection::vec(3..20usize, 1..5), l in 1..4usize, seed in any::<u64>()) {
        let plan = block_plan(&lengths, l, &mut stream(seed)).unwrap();
        for (u, &t) in lengths.iter().enumerate() {
            let mut covered = vec![0; t];
            for b in plan.iter().filter(|b| b.unit == u) {
                prop_assert!(b.source_start + b.len <= lengths[b.source_unit]);
                for j in b.start..b.start + b.len {
                    covered[j] += 1;
                }
            }
            prop_assert!(covered.iter().all(|&c| c == 1));
        }
    }
}

fn icp_result() -> &'static IcpResult {
    static R: OnceLock<IcpResult> = OnceLock::new();
    R.get_or_init(|| {
        let mut r = stream(9);
        let n = 240;
        let env: Vec<i64> = (0..n).map(|i| (i % 3) as i64).collect();
        let x0: Vec<f64> = env.iter().map(|&e| e as f64 + std_normal(&mut r)).collect();
        let x1: Vec<f64> = (0..n).map(|_| std_normal(&mut r)).collect();
        let y: Vec<f64> = (0..n).map(|i| x0[i].tanh() + 0.5 * std_normal(&mut r)).collect();
        let x2: Vec<f64> = y.iter().zip(&env).map(|(v, &e)| v + e as f64 * 0.3 + std_normal(&mut r)).collect();
        let mut cols = x0;
        cols.extend(x1);
        cols.extend(x2);
        let x = DMatrix::from_column_slice(n, 3, &cols);
        let data = Dataset::new(x, y, env, vec!["a".into(), "b".into(), "c".into()], "y").unwrap();
        run_icp(&data, &IcpConfig::new(quick("resid-dist:gam:ks".parse().unwrap(), 1))).unwrap()
    })
}

proptest! {
    #[test]
    fn accepted_families_nest_across_levels(a1 in 0.001..0.5f64, a2 in 0.001..0.5f64) {
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let base = icp_result();
        let small = base.at_alpha(lo).unwrap();
        let large = base.at_alpha(hi).unwrap();
        prop_assert!(large.accepted.iter().all(|s| small.accepted.contains(s)));
        for r in [&small, &large] {
            for s in &r.accepted {
                prop_assert!(r.s_hat.iter().all(|v| s.contains(v)));
            }
        }
    }
}

// Benchmark settings and scores.

proptest! {
    #[test]
    fn settings_stay_in_their_grids(seed in any::<u64>(), index in 0..1000u64) {
        let s = draw_setting(seed, index);
        prop_assert_eq!(&s, &draw_setting(seed, index));
        prop_assert!(N_GRID.contains(&s.n) && DF_GRID.contains(&s.df));
        prop_assert!(STRENGTH_GRID.contains(&s.strength) && STRENGTH_GRID.contains(&s.meanshift));
        prop_assert!((1..=6).contains(&s.target) && (1..=4).contains(&s.id));
        for t in &s.env_targets {
            prop_assert!(!t.contains(&s.target));
        }
    }

    #[test]
    fn jaccard_is_one_exactly_for_equal_sets(a in prop::collection::btree_set(1..7usize, 0..6), b in prop::collection::btree_set(1..7usize, 0..6)) {
        let (a, b): (Vec<usize>, Vec<usize>) = (a.into_iter().collect(), b.into_iter().collect());
        let j = jaccard(&a, &b);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(j == 1.0, a == b);
        prop_assert_eq!(j, jaccard(&b, &a));
    }

    #[test]
    fn forest_quantiles_are_monotone_everywhere(q0 in -4.0..4.0f64, q1 in -4.0..4.0f64, l1 in 0.01..0.99f64, l2 in 0.01..0.99f64) {
        static QF: OnceLock<QuantileForest> = OnceLock::new();
        let qf = QF.get_or_init(|| {
            let mut r = stream(4);
            let x = DMatrix::from_fn(200, 2, |_, _| std_normal(&mut r));
            let y: Vec<f64> = (0..200).map(|i| x[(i, 0)] + (1.0 + x[(i, 1)].abs()) * std_normal(&mut r)).collect();
            QuantileForest::fit(&x, &y, &ForestParams::with_trees(40, 2)).unwrap()
        });
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        prop_assert!(qf.query(&[q0, q1], lo).unwrap() <= qf.query(&[q0, q1], hi).unwrap());
    }
}

// Sampling and fitting are functions of the seed alone.

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulation_is_bit_identical_per_seed(seed in any::<u64>(), index in 0..50u64, data_seed in any::<u64>()) {
        let mut s = draw_setting(seed, index);
        s.n = 60;
        let a = s.sample_nodes(data_seed).unwrap();
        let b = s.sample_nodes(data_seed).unwrap();
        prop_assert_eq!(a.env, b.env);
        prop_assert!(a.values.iter().zip(b.values.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn forest_refits_are_identical(seed in any::<u64>()) {
        let mut r = stream(seed);
        let x = DMatrix::from_fn(80, 3, |_, _| std_normal(&mut r));
        let y: Vec<f64> = (0..80).map(|i| x[(i, 0)].abs() + std_normal(&mut r)).collect();
        let p = ForestParams::with_trees(15, seed);
        let a = RandomForest::fit_regression(&x, &y, &p).unwrap().predict(&x).unwrap();
        let b = RandomForest::fit_regression(&x, &y, &p).unwrap().predict(&x).unwrap();
        prop_assert_eq!(a, b);
    }
}
