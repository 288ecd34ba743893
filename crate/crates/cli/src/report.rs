use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use nlicp::citests::CITestConfig;
use nlicp::io::write_comments;
use nlicp::{Error, Result};

/// `# key = value` provenance header shared by every output file.
#[derive(Debug, Default)]
pub struct Header(Vec<String>);

impl Header {
    pub fn new(command: &str) -> Self {
        Self(vec![
            format!("nlicp {}", env!("CARGO_PKG_VERSION")),
            format!("command = {command}"),
        ])
    }

    pub fn kv(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.0.push(format!("{key} = {value}"));
        self
    }

    pub fn line(&mut self, line: impl Into<String>) -> &mut Self {
        self.0.push(line.into());
        self
    }

    pub fn test_config(&mut self, c: &CITestConfig) -> &mut Self {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        self.kv("method", c.method)
            .kv("alpha", c.alpha)
            .kv("seed", c.seed)
            .kv("num_trees", c.num_trees)
            .kv("num_sims", c.num_sims)
            .kv("quantiles", join(&c.quantiles))
            .kv("train_fraction", c.train_fraction)
            .kv("stratify", c.stratify)
            .kv("kci_epsilon", opt(c.kci_epsilon.map(|v| v.to_string())))
            .kv("rp_trees", c.rp_trees)
            .kv("mtry", opt(c.mtry.map(|v| v.to_string())))
            .kv("min_leaf", c.min_leaf)
            .kv("num_features", opt(c.num_features.map(|v| v.to_string())))
            .kv("env_bins", opt(c.env_bins.map(|v| v.to_string())))
    }

    pub fn write(&self, out: &mut dyn Write) -> Result<()> {
        let mut buf = Vec::new();
        write_comments(&mut buf, &self.0)?;
        out.write_all(&buf).map_err(|e| Error::Runtime(e.to_string()))
    }
}

pub fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// `{a;b}` rendering of named members.
pub fn braces(names: &[String]) -> String {
    format!("{{{}}}", names.join(";"))
}

/// The output file, or stdout.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        })?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

pub fn io_err(e: io::Error) -> Error {
    Error::Runtime(e.to_string())
}
