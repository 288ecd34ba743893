//! Stratified means of benchmark rows.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::BenchRow;
use crate::error::{bail_arg, Error, Result};

/// Columns a benchmark table can be stratified by.
pub const STRATA: [&str; 9] = ["n", "id", "target", "interv", "multiplic", "strength", "meanshift", "shift", "df"];

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: String,
    /// Stratum values in the order of the requested keys.
    pub keys: Vec<String>,
    /// Successful runs entering the means.
    pub runs: usize,
    pub errors: usize,
    pub fwer: f64,
    pub fwer_se: f64,
    pub jaccard: f64,
    pub jaccard_se: f64,
}

fn stratum(row: &BenchRow, key: &str) -> String {
    match key {
        "n" => row.n.to_string(),
        "id" => row.id.to_string(),
        "target" => row.target.to_string(),
        "interv" => row.interv.clone(),
        "multiplic" => row.multiplic.to_string(),
        "strength" => row.strength.to_string(),
        "meanshift" => row.meanshift.to_string(),
        "shift" => row.shift.to_string(),
        "df" => row.df.to_string(),
        _ => unreachable!("keys are validated"),
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Per-method means of FWER violation and Jaccard similarity within each
/// stratum. Error rows are counted but excluded from the means. Groups are
/// ordered by method (first appearance) and then by stratum values.
pub fn aggregate(rows: &[BenchRow], by: &[&str]) -> Result<Vec<AggregateRow>> {
    if let Some(bad) = by.iter().find(|k| !STRATA.contains(k)) {
        bail_arg!("unknown stratum `{bad}`; expected one of {}", STRATA.join(","));
    }
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut out = Vec::new();
    for m in methods {
        // Numeric strata sort numerically through a parsed key.
        let mut groups: BTreeMap<Vec<(OrdKey, String)>, Vec<&BenchRow>> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.method == m) {
            let key = by
                .iter()
                .map(|k| {
                    let v = stratum(r, k);
                    (OrdKey::of(&v), v)
                })
                .collect();
            groups.entry(key).or_default().push(r);
        }
        for (key, members) in groups {
            let ok: Vec<&&BenchRow> = members.iter().filter(|r| r.status == "ok").collect();
            let fwer: Vec<f64> = ok.iter().filter_map(|r| r.fwer_violation).map(|v| v as u8 as f64).collect();
            let jac: Vec<f64> = ok.iter().filter_map(|r| r.jaccard).collect();
            let (fwer, fwer_se) = mean_se(&fwer);
            let (jaccard, jaccard_se) = mean_se(&jac);
            out.push(AggregateRow {
                method: m.to_string(),
                keys: key.into_iter().map(|(_, v)| v).collect(),
                runs: ok.len(),
                errors: members.len() - ok.len(),
                fwer,
                fwer_se,
                jaccard,
                jaccard_se,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum OrdKey {
    Num(i64),
    Text(String),
}

impl OrdKey {
    fn of(v: &str) -> Self {
        match v.parse::<f64>() {
            // Scaled to keep grid values such as 0.1 distinct and ordered.
            Ok(x) if x.is_finite() => {
                Self::Num((x * 1e6).round() as i64)
            }
            _ => Self::Text(v.to_string()),
        }
    }
}

pub fn read_results<R: Read>(input: R) -> Result<Vec<BenchRow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn write_aggregate<W: Write>(rows: &[AggregateRow], by: &[&str], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["method"];
    header.extend_from_slice(by);
    header.extend_from_slice(&["runs", "errors", "fwer", "fwer_se", "jaccard", "jaccard_se"]);
    w.write_record(&header)?;
    for a in rows {
        let mut rec = vec![a.method.clone()];
        rec.extend(a.keys.iter().cloned());
        rec.push(a.runs.to_string());
        rec.push(a.errors.to_string());
        for v in [a.fwer, a.fwer_se, a.jaccard, a.jaccard_se] {
            rec.push(if v.is_nan() { "NA".into() } else { format!("{v:.4}") });
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::Runtime(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{run_benchmark, write_results, GridConfig};
    use super::*;

    fn rows() -> Vec<BenchRow> {
        let grid = GridConfig {
            num_settings: 30,
            reps: 3,
            methods: vec!["random".into()],
            ..Default::default()
        };
        run_benchmark(&grid, 2, Some(2)).unwrap()
    }

    #[test]
    fn overall_means_match_direct_computation() {
        let rows = rows();
        let agg = aggregate(&rows, &[]).unwrap();
        assert_eq!(agg.len(), 1);
        let viol = rows.iter().filter(|r| r.fwer_violation == Some(true)).count();
        assert_eq!(agg[0].runs, 90);
        assert!((agg[0].fwer - viol as f64 / 90.0).abs() < 1e-12);
    }

    #[test]
    fn strata_partition_the_runs() {
        let rows = rows();
        let agg = aggregate(&rows, &["target", "interv"]).unwrap();
        assert_eq!(agg.iter().map(|a| a.runs).sum::<usize>(), rows.len());
        assert!(aggregate(&rows, &["colour"]).is_err());
    }

    #[test]
    fn error_rows_are_counted_not_averaged() {
        let mut rows = rows();
        rows[0].status = "error".into();
        rows[0].fwer_violation = None;
        rows[0].jaccard = None;
        let agg = aggregate(&rows, &[]).unwrap();
        assert_eq!((agg[0].runs, agg[0].errors), (89, 1));
    }

    #[test]
    fn results_round_trip_through_csv() {
        let rows = rows();
        let mut buf = Vec::new();
        write_results(&rows, &mut buf).unwrap();
        assert_eq!(read_results(buf.as_slice()).unwrap(), rows);
    }
}
