//! Comma-separated input and output. Lines starting with `#` are comments;
//! writers use them for a provenance header.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::{levels_in_order, Dataset};
use crate::error::{bail_arg, Error, Result};
use crate::scm::NodeSample;

/// Column roles for [`ingest_csv`]. Every other column is a predictor.
#[derive(Debug, Clone, Default)]
pub struct Columns {
    pub target: String,
    pub env: String,
    pub unit: Option<String>,
    pub time: Option<String>,
}

impl Columns {
    pub fn new(target: impl Into<String>, env: impl Into<String>) -> Self {
        Self {
            target: target.into(),
            env: env.into(),
            ..Self::default()
        }
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn ingest_csv(path: impl AsRef<Path>, columns: &Columns) -> Result<Dataset> {
    read_dataset(open(path.as_ref())?, columns)
}

/// Parses a dataset. Row numbers in errors count data records from 1.
pub fn read_dataset<R: Read>(input: R, columns: &Columns) -> Result<Dataset> {
    let mut rdr = reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let target = find(&columns.target)?;
    let env = find(&columns.env)?;
    if target == env {
        bail_arg!("target and environment must be different columns");
    }
    let unit = columns.unit.as_deref().map(find).transpose()?;
    let time = columns.time.as_deref().map(find).transpose()?;
    let reserved = [Some(target), Some(env), unit, time];
    let predictors: Vec<usize> = (0..header.len()).filter(|j| !reserved.contains(&Some(*j))).collect();

    let mut y = Vec::new();
    let mut e = Vec::new();
    let mut units = Vec::new();
    let mut times = Vec::new();
    let mut x = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let cell = |j: usize| rec.get(j).unwrap_or("");
        let real = |j: usize| -> Result<f64> {
            match cell(j).parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    row,
                    column: header[j].clone(),
                    value: cell(j).to_string(),
                }),
            }
        };
        let label = |j: usize| -> Result<i64> {
            cell(j).parse::<i64>().map_err(|_| Error::Parse {
                row,
                column: header[j].clone(),
                value: cell(j).to_string(),
            })
        };
        y.push(real(target)?);
        e.push(label(env)?);
        if let Some(j) = unit {
            units.push(label(j)?);
        }
        if let Some(j) = time {
            times.push(label(j)?);
        }
        for &j in &predictors {
            x.push(real(j)?);
        }
    }
    let levels = levels_in_order(&e).len();
    if levels < 2 {
        return Err(Error::TooFewEnvironments(levels));
    }
    let n = y.len();
    let x = DMatrix::from_row_slice(n, predictors.len(), &x);
    let names = predictors.iter().map(|&j| header[j].clone()).collect();
    let ds = Dataset::new(x, y, e, names, header[target].clone())?;
    match (unit, time) {
        (Some(_), Some(_)) => ds.with_panel(units, times),
        (None, None) => Ok(ds),
        _ => bail_arg!("unit and time columns must be given together"),
    }
}

/// Shortest text that parses back to the same value; scientific notation
/// outside `[1e-5, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes `# line` for each entry.
pub fn write_comments<W: Write>(out: &mut W, lines: &[String]) -> Result<()> {
    for l in lines {
        writeln!(out, "# {l}").map_err(|e| Error::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn write_rows<W: Write>(out: W, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::Runtime(e.to_string()))?;
    Ok(())
}

/// Predictors, target and environment (plus panel columns when present).
pub fn write_dataset<W: Write>(mut out: W, ds: &Dataset, env_name: &str, comments: &[String]) -> Result<()> {
    write_comments(&mut out, comments)?;
    let mut header = ds.names.clone();
    header.push(ds.target_name.clone());
    header.push(env_name.to_string());
    let panel = ds.unit.as_ref().zip(ds.time.as_ref());
    if panel.is_some() {
        header.extend(["unit".to_string(), "time".to_string()]);
    }
    let rows = (0..ds.n()).map(|i| {
        let mut r: Vec<String> = (0..ds.p()).map(|j| fmt_f64(ds.x[(i, j)])).collect();
        r.push(fmt_f64(ds.y[i]));
        r.push(ds.env[i].to_string());
        if let Some((u, t)) = panel {
            r.push(u[i].to_string());
            r.push(t[i].to_string());
        }
        r
    });
    write_rows(out, &header, rows)
}

/// Every node as `X<k>`, followed by the environment label.
pub fn write_node_sample<W: Write>(mut out: W, sample: &NodeSample, env_name: &str, comments: &[String]) -> Result<()> {
    write_comments(&mut out, comments)?;
    let q = sample.values.ncols();
    let mut header: Vec<String> = (1..=q).map(|k| format!("X{k}")).collect();
    header.push(env_name.to_string());
    let rows = (0..sample.values.nrows()).map(|i| {
        let mut r: Vec<String> = (0..q).map(|k| fmt_f64(sample.values[(i, k)])).collect();
        r.push(sample.env[i].to_string());
        r
    });
    write_rows(out, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{figure7_dag, Composition, InterventionKind, InterventionSpec, Mechanism, NoiseSpec, Nonlinearity, StructuralCausalModel};

    fn table(rows: usize, bad_row: Option<usize>) -> String {
        let mut s = String::from("x1,env,y\n");
        for i in 1..=rows {
            let x = if Some(i) == bad_row { "oops".to_string() } else { format!("{}", i as f64 * 0.5) };
            s.push_str(&format!("{x},{},{}\n", i % 2, i));
        }
        s
    }

    #[test]
    fn three_columns_give_one_predictor() {
        let ds = read_dataset(table(30, None).as_bytes(), &Columns::new("y", "env")).unwrap();
        assert_eq!((ds.n(), ds.p()), (30, 1));
        assert_eq!(ds.names, vec!["x1"]);
        assert_eq!(ds.y[3], 4.0);
    }

    #[test]
    fn bad_cell_names_its_row() {
        let err = read_dataset(table(30, Some(17)).as_bytes(), &Columns::new("y", "env")).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 17, .. }), "{err}");
        assert!(err.to_string().contains("row 17"));
    }

    #[test]
    fn single_environment_and_missing_columns() {
        let one = table(30, None).replace(",0,", ",1,");
        let err = read_dataset(one.as_bytes(), &Columns::new("y", "env")).unwrap_err();
        assert!(err.to_string().contains("need ≥ 2 environments"));
        let err = read_dataset(table(30, None).as_bytes(), &Columns::new("z", "env")).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "z"));
    }

    #[test]
    fn simulated_data_round_trips_exactly() {
        let scm = StructuralCausalModel::homogeneous(
            figure7_dag(),
            Mechanism::new(Nonlinearity::Sine, Composition::Additive),
            NoiseSpec::student_t(3, 1.0).unwrap(),
        );
        let plan = [
            InterventionSpec::none(),
            InterventionSpec::random(InterventionKind::Do, vec![2], NoiseSpec::standard_normal(), 1.0, 2.0),
        ];
        let sample = scm.sample_nodes(&plan, &[40, 40], 5).unwrap();
        let mut buf = Vec::new();
        write_node_sample(&mut buf, &sample, "env", &["seed = 5".into()]).unwrap();
        let back = read_dataset(buf.as_slice(), &Columns::new("X4", "env")).unwrap();
        assert_eq!(back, sample.into_dataset(4).unwrap());
    }

    #[test]
    fn number_text_round_trips() {
        for v in [0.0, -0.0, 1.0, 0.1, 1e-300, -5.1443e-47, 123456.789, 2e20, f64::MIN_POSITIVE, f64::MAX] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits(), "{v}");
        }
        assert_eq!(fmt_f64(5e-47), "5e-47");
    }

    #[test]
    fn datasets_round_trip_with_panel() {
        let ds = read_dataset(table(24, None).as_bytes(), &Columns::new("y", "env")).unwrap();
        let ds = ds.with_panel((0..24).map(|i| i / 6).collect(), (0..24).map(|i| i % 6).collect()).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds, "env", &[]).unwrap();
        let cols = Columns {
            unit: Some("unit".into()),
            time: Some("time".into()),
            ..Columns::new("y", "env")
        };
        assert_eq!(read_dataset(buf.as_slice(), &cols).unwrap(), ds);
    }
}
