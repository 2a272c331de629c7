//! CSV / JSON output of command results.

use crate::Format;
use ratfield::{Error, Result};
use serde_json::{json, Map};
use std::io::Write;
use std::path::Path;

pub enum Value {
    F(f64),
    U(u64),
    S(String),
    B(bool),
    Null,
}

impl Value {
    fn csv(&self) -> String {
        match self {
            Value::F(v) => format!("{v:e}"),
            Value::U(v) => v.to_string(),
            Value::S(s) => s.clone(),
            Value::B(b) => b.to_string(),
            Value::Null => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Value::F(v) => json!(v),
            Value::U(v) => json!(v),
            Value::S(s) => json!(s),
            Value::B(b) => json!(b),
            Value::Null => serde_json::Value::Null,
        }
    }
}

pub struct Report {
    command: &'static str,
    config: String,
    columns: Vec<String>,
    rows: Vec<Vec<Value>>,
    summary: Option<serde_json::Value>,
    raw: Option<Vec<u8>>,
    to_stdout: bool,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

impl Report {
    pub fn new(command: &'static str, config: String) -> Self {
        Self { command, config, columns: Vec::new(), rows: Vec::new(), summary: None, raw: None, to_stdout: false }
    }

    /// Output that is already in its final form (the mesh dump format).
    pub fn raw(command: &'static str, bytes: Vec<u8>) -> Self {
        let mut r = Self::new(command, String::new());
        r.raw = Some(bytes);
        r
    }

    pub fn columns<S: ToString>(&mut self, cols: impl IntoIterator<Item = S>) {
        self.columns = cols.into_iter().map(|c| c.to_string()).collect();
    }

    pub fn row(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn summary(&mut self, s: serde_json::Value) {
        self.summary = Some(s);
    }

    /// The payload went to --out already; the table goes to stdout.
    pub fn already_written(&mut self) {
        self.to_stdout = true;
    }

    pub fn write(&self, format: Format, out: Option<&Path>) -> Result<()> {
        let out = if self.to_stdout { None } else { out };
        let mut w: Box<dyn Write> = match out {
            Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
            None => Box::new(std::io::stdout().lock()),
        };
        if let Some(raw) = &self.raw {
            w.write_all(raw)?;
            w.flush()?;
            return Ok(());
        }
        match format {
            Format::Csv => {
                writeln!(w, "# ratfield {} {}", self.command, self.config)?;
                let mut cw = csv::Writer::from_writer(w);
                cw.write_record(&self.columns).map_err(csv_err)?;
                for r in &self.rows {
                    cw.write_record(r.iter().map(Value::csv)).map_err(csv_err)?;
                }
                cw.flush()?;
            }
            Format::Json => {
                let rows: Vec<serde_json::Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let mut m = Map::new();
                        for (c, v) in self.columns.iter().zip(r) {
                            m.insert(c.clone(), v.json());
                        }
                        serde_json::Value::Object(m)
                    })
                    .collect();
                let mut doc = json!({ "command": self.command, "config": self.config, "rows": rows });
                if let Some(s) = &self.summary {
                    doc["summary"] = s.clone();
                }
                serde_json::to_writer_pretty(&mut w, &doc)?;
                writeln!(w)?;
                w.flush()?;
            }
        }
        Ok(())
    }
}
