use std::io::Write;

use nlicp::bench::{
    aggregate, draw_setting_with, read_results, run_benchmark, write_aggregate, write_results, GridConfig,
    SettingOverrides,
};
use nlicp::citests::{ci_test, EnvColumn};
use nlicp::icp::{ace_bounds, confidence_bands, run_icp, BandConfig, IcpConfig, IcpResult};
use nlicp::io::{fmt_f64, ingest_csv, write_node_sample, Columns};
use nlicp::regress::RegressorConfig;
use nlicp::rng::derive_seed;
use nlicp::scm::shifted_chain;
use nlicp::stattests::{
    f_test_accuracy, fisher_exact_2x2, ks_two_sample, levene, two_proportion_test, wilcoxon_rank_sum,
    LeveneCenter, TestResult,
};
use nlicp::{Dataset, Error, Result};

use crate::report::{braces, io_err, join, sink, Header};
use crate::{AceArgs, AggregateArgs, BenchArgs, CitestArgs, DataArgs, RunArgs, SimulateArgs, StatTest, StattestArgs};

fn load(a: &DataArgs) -> Result<Dataset> {
    let columns = Columns {
        unit: a.unit.clone(),
        time: a.time.clone(),
        ..Columns::new(&a.target, &a.env)
    };
    ingest_csv(&a.data, &columns)
}

fn data_header(h: &mut Header, a: &DataArgs, ds: &Dataset) {
    h.kv("data", a.data.display())
        .kv("target", &a.target)
        .kv("env", &a.env)
        .kv("rows", ds.n())
        .kv("predictors", ds.names.join(","));
    if let (Some(u), Some(t)) = (&a.unit, &a.time) {
        h.kv("unit", u).kv("time", t);
    }
}

fn indices(ds: &Dataset, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .filter(|n| !n.is_empty())
        .map(|n| ds.name_index(n).ok_or_else(|| Error::MissingColumn(n.clone())))
        .collect()
}

fn icp(ds: &Dataset, a: &crate::TestArgs, candidates: Option<&[String]>, max: Option<usize>, early: bool) -> Result<IcpResult> {
    let config = IcpConfig {
        candidates: candidates.map(|c| indices(ds, c)).transpose()?,
        max_set_size: max,
        early_exit: early,
        ..IcpConfig::new(a.config())
    };
    run_icp(ds, &config)
}

fn icp_header(h: &mut Header, r: &IcpResult) {
    h.kv("candidates", r.set_names(&r.candidates).join(","))
        .kv("max_set_size", r.max_set_size)
        .kv("sets_tested", r.tested.len())
        .kv("sets_accepted", r.accepted.len())
        .kv("s_hat", braces(&r.set_names(&r.s_hat)))
        .kv(
            "defining_sets",
            r.defining_sets
                .sets
                .iter()
                .map(|s| braces(&r.set_names(s)))
                .collect::<Vec<_>>()
                .join(" "),
        )
        .kv("complete", r.complete);
    if r.defining_sets.empty_family {
        h.line("no set was accepted: the model may be misspecified or a hidden variable may be present");
    }
    for w in &r.warnings {
        h.kv("warning", w);
    }
}

pub fn run(a: &RunArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let r = icp(&ds, &a.test, a.candidates.as_deref(), a.max_set_size, a.early_exit)?;
    let mut h = Header::new("run");
    data_header(&mut h, &a.data, &ds);
    h.test_config(&a.test.config()).kv("early_exit", a.early_exit);
    icp_header(&mut h, &r);

    let mut out = sink(a.out.as_deref())?;
    h.write(&mut out)?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["set", "size", "p_value", "accepted"])?;
    for t in &r.tested {
        w.write_record([
            braces(&r.set_names(&t.set)),
            t.set.len().to_string(),
            fmt_f64(t.p_value),
            (t.p_value > r.alpha).to_string(),
        ])?;
    }
    w.flush().map_err(io_err)?;
    drop(w);
    out.flush().map_err(io_err)?;
    if a.out.is_some() {
        println!("S_hat = {}", braces(&r.set_names(&r.s_hat)));
    }
    Ok(())
}

pub fn citest(a: &CitestArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let set = indices(&ds, &a.set)?;
    let config = a.test.config();
    let env = match config.env_bins {
        Some(_) => EnvColumn::Continuous(ds.env.iter().map(|&e| e as f64).collect()),
        None => EnvColumn::Categorical(ds.env.clone()),
    };
    let o = ci_test(&ds.y, &env, &ds.columns(&set), &config)?;
    let mut h = Header::new("citest");
    data_header(&mut h, &a.data, &ds);
    h.test_config(&config).kv("set", braces(&ds.names_of(&set)));
    let mut out = sink(a.out.as_deref())?;
    h.write(&mut out)?;
    let mut lines = vec![
        format!("p_value = {}", fmt_f64(o.p_value)),
        format!("reject = {}", o.reject),
    ];
    if let Some(s) = o.diagnostics.statistic {
        lines.push(format!("statistic = {}", fmt_f64(s)));
    }
    lines.push(format!("correction = {}", o.diagnostics.correction));
    for (name, p) in &o.diagnostics.subtests {
        lines.push(format!("subtest {name} = {}", fmt_f64(*p)));
    }
    for f in &o.diagnostics.flags {
        lines.push(format!("flag = {f}"));
    }
    for l in lines {
        writeln!(out, "{l}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn need(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(what.into()))
    }
}

pub fn stattest(a: &StattestArgs) -> Result<()> {
    let r: TestResult = match a.test {
        StatTest::Fisher => {
            need(a.table.len() == 4, "--table needs four counts a,b,c,d")?;
            let t = &a.table;
            fisher_exact_2x2([[t[0], t[1]], [t[2], t[3]]], a.alternative)?
        }
        StatTest::Wilcoxon => wilcoxon_rank_sum(&a.a, &a.b, a.alternative)?,
        StatTest::Ks => ks_two_sample(&a.a, &a.b)?,
        StatTest::FTest => f_test_accuracy(&a.a, &a.b)?,
        StatTest::Levene => {
            let spec = a.groups.as_deref().ok_or_else(|| Error::InvalidArgument("--groups is required".into()))?;
            let groups = spec
                .split(';')
                .map(|g| {
                    g.split(',')
                        .map(|v| v.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad value `{v}`"))))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            levene(&groups, LeveneCenter::Median)?
        }
        StatTest::Proportion => {
            need(a.counts.len() == 4, "--counts needs k1,n1,k2,n2")?;
            let c = &a.counts;
            two_proportion_test(c[0], c[1], c[2], c[3], a.alternative)?
        }
    };
    println!("# nlicp {}", env!("CARGO_PKG_VERSION"));
    println!("test = {}", r.method);
    println!("alternative = {}", r.alternative);
    println!("statistic = {}", fmt_f64(r.statistic));
    println!("p_value = {}", fmt_f64(r.p_value));
    println!("exact = {}", r.exact);
    for w in &r.warnings {
        println!("warning = {w}");
    }
    Ok(())
}

pub fn bench(a: &BenchArgs, jobs: Option<usize>) -> Result<()> {
    let grid = match &a.grid {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.clone(),
                source,
            })?;
            GridConfig::from_toml(&text)?
        }
        None => GridConfig::default(),
    };
    let rows = run_benchmark(&grid, a.seed, jobs)?;
    // The job count is deliberately absent: it does not affect the table.
    let mut h = Header::new("bench");
    h.kv("seed", a.seed);
    for l in grid.to_toml().lines().filter(|l| !l.trim().is_empty()) {
        h.line(l);
    }
    let mut out = sink(a.out.as_deref())?;
    h.write(&mut out)?;
    write_results(&rows, &mut out)?;
    out.flush().map_err(io_err)?;
    if a.out.is_some() {
        let errors = rows.iter().filter(|r| r.status != "ok").count();
        println!("{} runs, {errors} errors", rows.len());
        write_aggregate(&aggregate(&rows, &[])?, &[], std::io::stdout())?;
    }
    Ok(())
}

pub fn bench_aggregate(a: &AggregateArgs) -> Result<()> {
    let file = std::fs::File::open(&a.results).map_err(|source| Error::Io {
        path: a.results.clone(),
        source,
    })?;
    let rows = read_results(file)?;
    let by: Vec<&str> = a.by.iter().map(String::as_str).filter(|s| !s.is_empty()).collect();
    let agg = aggregate(&rows, &by)?;
    let mut out = sink(a.out.as_deref())?;
    write_aggregate(&agg, &by, &mut out)?;
    out.flush().map_err(io_err)
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut h = Header::new("simulate");
    h.kv("seed", a.seed);
    let sample = if a.chain {
        let (scm, plan) = shifted_chain();
        let k = plan.len();
        if a.n < k {
            return Err(Error::InvalidArgument(format!("need n ≥ {k} for {k} environments")));
        }
        let counts: Vec<usize> = (0..k).map(|e| a.n / k + usize::from(e < a.n % k)).collect();
        h.kv("model", "chain").kv("n", a.n).kv("env_counts", join(&counts));
        scm.sample_nodes(&plan, &counts, a.seed)?
    } else {
        let o = SettingOverrides {
            n: Some(a.n),
            target: a.target.map(|t| vec![t]),
            df: a.df,
            multiplic: a.multiplicative,
            shift: a.shift,
            strength: a.strength,
            meanshift: a.meanshift,
            id: a.id,
            interv: a.interv,
            intervention_targets: a.intervene.clone(),
        };
        let setting = draw_setting_with(a.seed, a.index, None, &o)?;
        h.kv("model", "figure7");
        for l in setting.describe() {
            h.line(l);
        }
        setting.sample_nodes(derive_seed(a.seed, &[a.index, 0]))?
    };
    let mut out = sink(a.out.as_deref())?;
    let mut buf = Vec::new();
    h.write(&mut buf)?;
    write_node_sample(&mut buf, &sample, "env", &[])?;
    out.write_all(&buf).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn ace(a: &AceArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let p = ds.p();
    need(a.x_tilde.len() == p && a.x.len() == p, &format!("--x-tilde and --x need {p} values ({})", ds.names.join(",")))?;
    let r = icp(&ds, &a.test, None, None, false)?;
    let config = BandConfig {
        regressor: RegressorConfig {
            forest: nlicp::regress::ForestParams {
                num_trees: a.test.num_trees,
                min_leaf: a.test.min_leaf,
                mtry: a.test.mtry,
                ..Default::default()
            },
            ..RegressorConfig::of_kind(a.regressor)
        },
        num_bootstrap: a.bootstrap,
        alpha: a.test.alpha,
        kind: a.resampling,
        seed: derive_seed(a.test.seed, &[0xACE]),
    };
    let bands = confidence_bands(&ds, &r.accepted, &config)?;
    let ace = ace_bounds(&bands, &a.x_tilde, &a.x)?;

    let mut h = Header::new("ace");
    data_header(&mut h, &a.data, &ds);
    h.test_config(&a.test.config())
        .kv("regressor", a.regressor)
        .kv("bootstrap", a.bootstrap)
        .kv("resampling", a.resampling)
        .kv("x_tilde", join(&a.x_tilde))
        .kv("x", join(&a.x));
    icp_header(&mut h, &r);
    let interval = |(lo, hi): (f64, f64)| format!("[{}, {}]", fmt_f64(lo), fmt_f64(hi));
    h.kv("level", ace.level)
        .kv("union", ace.union.iter().map(|&iv| interval(iv)).collect::<Vec<_>>().join(" "))
        .kv("hull", interval(ace.hull))
        .kv("extrapolation", ace.extrapolation);
    for b in &bands {
        for w in &b.warnings {
            h.kv("warning", w);
        }
    }

    let mut out = sink(a.out.as_deref())?;
    h.write(&mut out)?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["set", "lower", "upper"])?;
    for (set, lo, hi) in &ace.per_set {
        w.write_record([braces(&r.set_names(set)), fmt_f64(*lo), fmt_f64(*hi)])?;
    }
    w.flush().map_err(io_err)?;
    drop(w);
    out.flush().map_err(io_err)?;
    if a.out.is_some() {
        println!("average causal effect in {} at level {}", interval(ace.hull), ace.level);
    }
    Ok(())
}
