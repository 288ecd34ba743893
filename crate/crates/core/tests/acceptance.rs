//! End-to-end acceptance checks. Prints one line per criterion and exits
//! nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use nlicp::bench::{aggregate, run_benchmark, write_results, GridConfig, SettingOverrides};
use nlicp::citests::{ci_test, CITestConfig, EnvColumn};
use nlicp::icp::{ace_bounds, confidence_band, defining_sets, intersection, run_icp, BandConfig, IcpConfig};
use nlicp::regress::{RegressorConfig, RegressorKind};
use nlicp::rng::{std_normal, stream};
use nlicp::scm::{sample_dataset, shifted_chain};
use nlicp::stattests::{fisher_exact_2x2, wilcoxon_rank_sum, Alternative};
use nlicp::Dataset;
use rand::Rng as _;

const SEED: u64 = 20_261_016;
const ALPHA: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn desk_grid(overrides: SettingOverrides, settings: usize, reps: usize) -> GridConfig {
    GridConfig {
        num_settings: settings,
        reps,
        overrides,
        ..Default::default()
    }
}

fn se(p: f64, runs: usize) -> f64 {
    (p * (1.0 - p) / runs as f64).sqrt()
}

fn level_fwer() -> Outcome {
    let grid = desk_grid(SettingOverrides { n: Some(500), ..Default::default() }, 40, 5);
    let rows = run_benchmark(&grid, SEED, None).expect("benchmark runs");
    let bound = ALPHA + 2.0 * se(ALPHA, 200);
    let agg = aggregate(&rows, &[]).expect("aggregates");
    let pass = agg.iter().all(|a| a.runs == 200 && a.fwer <= bound);
    let detail = agg
        .iter()
        .map(|a| format!("{} fwer={:.3} (runs={})", a.method, a.fwer, a.runs))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, format!("{detail}; bound {bound:.3}"))
}

fn root_target_power() -> Outcome {
    let o = SettingOverrides {
        n: Some(500),
        target: Some(vec![1, 5]),
        ..Default::default()
    };
    let rows = run_benchmark(&desk_grid(o, 40, 5), SEED + 1, None).expect("benchmark runs");
    let agg = aggregate(&rows, &[]).expect("aggregates");
    let bound = 1.0 - ALPHA - 0.05;
    let pass = agg.iter().all(|a| a.runs == 200 && a.jaccard >= bound);
    let detail = agg
        .iter()
        .map(|a| format!("{} jaccard={:.3}", a.method, a.jaccard))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, format!("{detail}; bound {bound:.2}"))
}

fn shifted_chain_data(seed: u64) -> Dataset {
    let (scm, plan) = shifted_chain();
    sample_dataset(&scm, 2, &plan, &[150; 6], seed).unwrap()
}

fn chain_recovery() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for m in ["kci", "resid-dist:gam:ks", "cond-quantile"] {
        let hits = (0..50u64)
            .into_par_iter()
            .filter(|&s| {
                let test = CITestConfig {
                    seed: s,
                    num_trees: 100,
                    ..CITestConfig::new(m.parse().unwrap())
                };
                let data = shifted_chain_data(SEED + s);
                let res = run_icp(&data, &IcpConfig::new(test)).expect("icp runs");
                res.set_names(&res.s_hat) == ["X1"]
            })
            .count();
        pass &= hits >= 40;
        parts.push(format!("{m} {hits}/50"));
    }
    outcome(pass, format!("Ŝ = {{X1}}: {}; need ≥ 40", parts.join(", ")))
}

/// Y = X² + E·η with E = 0.2·η_E continuous.
fn heteroscedastic(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>, DMatrix<f64>) {
    let mut r = stream(seed);
    let e: Vec<f64> = (0..n).map(|_| 0.2 * std_normal(&mut r)).collect();
    let x: Vec<f64> = (0..n).map(|_| std_normal(&mut r)).collect();
    let y = (0..n).map(|i| x[i] * x[i] + e[i] * std_normal(&mut r)).collect();
    (y, e, DMatrix::from_column_slice(n, 1, &x))
}

/// Slope 2 with unit noise in environment 1, slope -1 with noise 0.3 in
/// environment 2; X and N standard normal in both.
fn opposite_slopes(seed: u64, n: usize) -> (Vec<f64>, Vec<i64>, DMatrix<f64>) {
    let mut r = stream(seed);
    let env: Vec<i64> = (0..n).map(|i| (i % 2) as i64 + 1).collect();
    let x: Vec<f64> = (0..n).map(|_| std_normal(&mut r)).collect();
    let y = (0..n)
        .map(|i| {
            let noise = std_normal(&mut r);
            if env[i] == 1 {
                2.0 * x[i] + noise
            } else {
                -x[i] + 0.3 * noise
            }
        })
        .collect();
    (y, env, DMatrix::from_column_slice(n, 1, &x))
}

fn rejection_rate<F>(seeds: u64, f: F) -> f64
where
    F: Fn(u64) -> bool + Sync,
{
    (0..seeds).into_par_iter().filter(|&s| f(s)).count() as f64 / seeds as f64
}

fn counterexamples() -> Outcome {
    let config = |m: &str, s: u64, bins: Option<usize>| CITestConfig {
        seed: s,
        num_trees: 100,
        env_bins: bins,
        ..CITestConfig::new(m.parse().unwrap())
    };
    let hetero = |m: &str, bins: Option<usize>| {
        rejection_rate(200, |s| {
            let (y, e, x) = heteroscedastic(SEED + s, 1000);
            ci_test(&y, &EnvColumn::Continuous(e), &x, &config(m, s, bins)).unwrap().reject
        })
    };
    let target = hetero("target-pred:gam:f", None);
    let quantile = hetero("cond-quantile", Some(3));
    let slopes = |m: &str| {
        rejection_rate(100, |s| {
            let (y, e, x) = opposite_slopes(SEED + s, 1000);
            ci_test(&y, &EnvColumn::Categorical(e), &x, &config(m, s, None)).unwrap().reject
        })
    };
    let resid = slopes("resid-dist:gam:ks");
    let quantile5 = slopes("cond-quantile");
    let pass = target <= 0.10 && quantile >= 0.80 && quantile5 - resid >= 0.3;
    outcome(
        pass,
        format!(
            "heteroscedastic: target-pred {target:.3} (≤ 0.10), cond-quantile {quantile:.3} (≥ 0.80); \
             opposite slopes: resid-dist {resid:.2} vs cond-quantile {quantile5:.2} (gap ≥ 0.30)"
        ),
    )
}

fn choose(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact hypergeometric tail sums with integer weights.
fn fisher_oracle(a: u64, b: u64, c: u64, d: u64) -> [f64; 3] {
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let w: Vec<u128> = (lo..=hi).map(|x| choose(r1, x) * choose(r2, c1 - x)).collect();
    let total: u128 = w.iter().sum();
    let k = (a - lo) as usize;
    let less: u128 = w[..=k].iter().sum();
    let greater: u128 = w[k..].iter().sum();
    let two: u128 = w.iter().filter(|&&v| v <= w[k]).sum();
    [two, greater, less].map(|v| v as f64 / total as f64)
}

/// Mann–Whitney U of `a` within `pooled`, from all rank assignments.
fn wilcoxon_oracle(m: usize, n: usize, u_obs: usize) -> (f64, f64) {
    let big = m + n;
    let (mut le, mut ge, mut total) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << big) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let rank_sum: usize = (0..big).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).sum();
        let u = rank_sum - m * (m + 1) / 2;
        total += 1;
        le += (u <= u_obs) as u64;
        ge += (u >= u_obs) as u64;
    }
    (le as f64 / total as f64, ge as f64 / total as f64)
}

fn brute_force_defining(family: &[Vec<usize>], ground: usize) -> Vec<Vec<usize>> {
    let masks: Vec<u32> = family.iter().map(|s| s.iter().fold(0, |m, &i| m | 1 << i)).collect();
    let hitting: Vec<u32> = (0u32..1 << ground)
        .filter(|&c| masks.iter().all(|&s| s & c != 0))
        .collect();
    let mut minimal: Vec<Vec<usize>> = hitting
        .iter()
        .filter(|&&c| !hitting.iter().any(|&o| o != c && o & c == o))
        .map(|&c| (0..ground).filter(|i| c >> i & 1 == 1).collect())
        .collect();
    minimal.sort_by(|a: &Vec<usize>, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    minimal
}

fn exact_oracles() -> Outcome {
    let alts = [Alternative::TwoSided, Alternative::Greater, Alternative::Less];
    let mut fisher_tables = 0;
    let mut fisher_bad = 0;
    for a in 0..=12u64 {
        for b in 0..=12 - a {
            for c in 0..=12 - a {
                for d in 0..=(12 - c).min(12 - b) {
                    if a + b + c + d == 0 {
                        continue;
                    }
                    fisher_tables += 1;
                    let want = fisher_oracle(a, b, c, d);
                    let t = [[a as i64, b as i64], [c as i64, d as i64]];
                    for (alt, w) in alts.iter().zip(want) {
                        let got = fisher_exact_2x2(t, *alt).unwrap().p_value;
                        if (got - w).abs() > 1e-10 * w.max(1e-300) && (got - w).abs() > 1e-14 {
                            fisher_bad += 1;
                        }
                    }
                }
            }
        }
    }

    let mut rng = stream(SEED);
    let mut wilcoxon_cases = 0;
    let mut wilcoxon_bad = 0;
    for m in 1..12usize {
        for n in 1..=12 - m {
            for _ in 0..5 {
                let a: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.3).collect();
                let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                let u = a.iter().map(|x| b.iter().filter(|&&y| y < *x).count()).sum::<usize>();
                let (le, ge) = wilcoxon_oracle(m, n, u);
                let want = [(2.0 * le.min(ge)).min(1.0), ge, le];
                for (alt, w) in alts.iter().zip(want) {
                    wilcoxon_cases += 1;
                    let r = wilcoxon_rank_sum(&a, &b, *alt).unwrap();
                    if !r.exact || (r.p_value - w).abs() > 1e-12 {
                        wilcoxon_bad += 1;
                    }
                }
            }
        }
    }

    let mut defining_bad = 0;
    for _ in 0..100 {
        let ground = rng.random_range(1..=8usize);
        let k = rng.random_range(1..=5usize);
        let family: Vec<Vec<usize>> = (0..k)
            .map(|_| {
                let mask = rng.random_range(1u32..1 << ground);
                (0..ground).filter(|i| mask >> i & 1 == 1).collect()
            })
            .collect();
        if defining_sets(&family).sets != brute_force_defining(&family, ground) {
            defining_bad += 1;
        }
    }
    outcome(
        fisher_bad + wilcoxon_bad + defining_bad == 0,
        format!(
            "fisher {fisher_bad} mismatches over {fisher_tables} tables × 3 alternatives; \
             wilcoxon {wilcoxon_bad}/{wilcoxon_cases}; defining sets {defining_bad}/100"
        ),
    )
}

fn algebra() -> Outcome {
    let family = [vec![1, 3], vec![2, 3]];
    let s_hat = intersection(&family);
    let def = defining_sets(&family).sets;
    let mut pass = s_hat == [3] && def == [vec![3], vec![1, 2]];

    let mut r = stream(SEED);
    let n = 150;
    let x = DMatrix::from_fn(n, 2, |_, _| std_normal(&mut r));
    let y = (0..n).map(|i| x[(i, 0)].sin() + 0.5 * x[(i, 1)] + 0.3 * std_normal(&mut r)).collect();
    let env = (0..n as i64).map(|i| i % 3).collect();
    let data = Dataset::new(x, y, env, vec!["a".into(), "b".into()], "y").unwrap();
    let mut bands = Vec::new();
    for kind in [RegressorKind::OlsBasis, RegressorKind::AdditiveModel, RegressorKind::RandomForest] {
        let mut regressor = RegressorConfig::of_kind(kind);
        regressor.forest.num_trees = 30;
        let config = BandConfig {
            regressor,
            num_bootstrap: 50,
            seed: SEED,
            ..Default::default()
        };
        for set in [vec![0], vec![1], vec![0, 1]] {
            bands.push(confidence_band(&data, &set, &config).unwrap());
        }
    }
    let mut checked = 0;
    for _ in 0..20 {
        let q = [2.0 * std_normal(&mut r), 2.0 * std_normal(&mut r)];
        let ace = ace_bounds(&bands, &q, &q).unwrap();
        pass &= ace.per_set.iter().all(|(_, lo, hi)| *lo == 0.0 && *hi == 0.0) && ace.union == [(0.0, 0.0)];
        checked += 1;
    }
    outcome(
        pass,
        format!(
            "Ŝ = {s_hat:?}, defining sets {def:?}; ace(x, x) = [0, 0] for {} bands at {checked} points",
            bands.len()
        ),
    )
}

fn faithfulness_stress() -> Outcome {
    let o = SettingOverrides {
        n: Some(500),
        target: Some(vec![3]),
        id: Some(1),
        multiplic: Some(false),
        intervention_targets: Some(vec![1]),
        ..Default::default()
    };
    let rows = run_benchmark(&desk_grid(o, 20, 2), SEED + 7, None).expect("benchmark runs");
    let agg = aggregate(&rows, &[]).expect("aggregates");
    let pass = agg.iter().all(|a| a.runs == 40 && a.jaccard <= 0.1);
    let detail = agg
        .iter()
        .map(|a| format!("{} jaccard={:.3}", a.method, a.jaccard))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, format!("{detail}; bound 0.10"))
}

fn determinism() -> Outcome {
    let grid = GridConfig {
        num_settings: 6,
        reps: 2,
        n_max: Some(200),
        methods: vec![
            "env-pred".into(),
            "resid-dist:gam:levene-wilcoxon".into(),
            "cond-quantile".into(),
            "random".into(),
        ],
        ..Default::default()
    };
    let table = |jobs| {
        let mut out = Vec::new();
        write_results(&run_benchmark(&grid, SEED, Some(jobs)).unwrap(), &mut out).unwrap();
        out
    };
    let (one, four) = (table(1), table(4));
    outcome(
        !one.is_empty() && one == four,
        format!("{} bytes with 1 job, {} bytes with 4 jobs", one.len(), four.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("level / FWER on the desk-scale benchmark", level_fwer),
        ("root-target power", root_target_power),
        ("shifted chain recovers the parent", chain_recovery),
        ("counterexample fidelity", counterexamples),
        ("exact oracles", exact_oracles),
        ("intersection and effect-bound algebra", algebra),
        ("faithfulness stress", faithfulness_stress),
        ("determinism across job counts", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        failed += !o.pass as usize;
        println!("criterion {} {verdict}: {name}: {} ({:.1}s)", i + 1, o.detail, t.elapsed().as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
