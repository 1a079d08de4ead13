//! Versioned numeric CSV tables.
//!
//! ```text
//! # schema=cld/1.0.0
//! # basis=9f2c...
//! n,ld_acyclic,ld_cyclic,ld_total,n2_ld
//! 1.0,0.1,0.0,0.1,0.1
//! ```

use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Major version written by this build and the only one it reads.
pub const SCHEMA_MAJOR: u32 = 1;
pub const SCHEMA_VERSION: &str = "1.0.0";

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub schema: String,
    pub version: String,
    /// `key=value` comment lines after the schema line.
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Shortest decimal that reads back to the same `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

impl Table {
    pub fn new(schema: &str, columns: &[&str]) -> Self {
        Self {
            schema: schema.to_string(),
            version: SCHEMA_VERSION.to_string(),
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.push((key.to_string(), value.into()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("# schema={}/{}\n", self.schema, self.version);
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}={v}\n"));
        }
        let mut buf = out.into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.columns).expect("write to memory");
            for row in &self.rows {
                w.write_record(row.iter().map(|&v| fmt_float(v))).expect("write to memory");
            }
            w.flush().expect("write to memory");
        }
        buf
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    /// Reads a table and checks its schema name and major version.
    pub fn read(path: &Path, schema: &str) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Missing { path: path.to_path_buf(), reason: e.to_string() })?;
        Self::parse(&text, schema, path)
    }

    pub fn parse(text: &str, schema: &str, path: &Path) -> Result<Self, CliError> {
        let bad = |found: &str| CliError::Schema {
            path: path.to_path_buf(),
            found: found.to_string(),
            expected: schema.to_string(),
            major: SCHEMA_MAJOR,
        };
        let mut lines = text.split_inclusive('\n');
        let first = lines.next().unwrap_or("").trim_end();
        let tag = first.strip_prefix("# schema=").ok_or_else(|| bad(first))?;
        let (name, version) = tag.split_once('/').ok_or_else(|| bad(tag))?;
        let major: u32 = version.split('.').next().and_then(|m| m.parse().ok()).ok_or_else(|| bad(tag))?;
        if name != schema || major != SCHEMA_MAJOR {
            return Err(bad(tag));
        }
        let mut meta = Vec::new();
        let mut offset = first.len() + 1;
        for line in lines {
            let Some(rest) = line.strip_prefix("# ") else { break };
            if let Some((k, v)) = rest.trim_end().split_once('=') {
                meta.push((k.to_string(), v.to_string()));
            }
            offset += line.len();
        }
        let body = text.get(offset.min(text.len())..).unwrap_or("");
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let malformed = |reason: String| CliError::Missing { path: path.to_path_buf(), reason };
        let columns: Vec<String> =
            reader.headers().map_err(|e| malformed(e.to_string()))?.iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| malformed(e.to_string()))?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| malformed(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { schema: name.to_string(), version: version.to_string(), meta, columns, rows })
    }
}

/// Path helper: `dir/name`.
pub fn in_dir(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
