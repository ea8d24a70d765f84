//! Deterministic text formatting shared by the CLI and table exports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;

/// 17 significant digits in scientific notation; stable across runs.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    /// Acceptance criterion this check belongs to.
    pub criterion: u8,
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, (header, rows): (Vec<String>, Vec<Vec<String>>)) -> Self {
        Self { name: name.into(), header, rows }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub experiment: String,
    pub seed: u64,
    /// The fully defaulted configuration, enough to rerun the experiment.
    pub parameters: Value,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    /// Seconds; printed to stderr only so report files stay byte-stable.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl RunReport {
    pub fn new(experiment: &str, seed: u64, parameters: Value) -> Self {
        Self {
            experiment: experiment.into(),
            seed,
            parameters,
            metrics: BTreeMap::new(),
            checks: Vec::new(),
            tables: Vec::new(),
            wall_time: 0.0,
        }
    }

    pub fn metric(&mut self, name: impl Into<String>, v: f64) {
        self.metrics.insert(name.into(), v);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn check(&mut self, criterion: u8, name: &str, passed: bool, detail: impl Into<String>) {
        let status = if passed { Status::Pass } else { Status::Fail };
        self.checks.push(Check { criterion, name: name.into(), status, detail: detail.into() });
    }

    pub fn skip(&mut self, criterion: u8, name: &str, reason: impl Into<String>) {
        self.checks.push(Check { criterion, name: name.into(), status: Status::Skipped, detail: reason.into() });
    }

    pub fn table(&mut self, t: Table) {
        self.tables.push(t);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn find_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// summary.json text; tables are inlined only for the json format.
    pub fn summary_json(&self, format: Format) -> String {
        let mut o = String::from("{\n");
        let _ = writeln!(o, "  \"experiment\": {},", quote(&self.experiment));
        let _ = writeln!(o, "  \"seed\": {},", self.seed);
        let _ = writeln!(o, "  \"all_pass\": {},", self.all_pass());
        o.push_str("  \"parameters\": ");
        write_value(&mut o, &self.parameters, 1);
        o.push_str(",\n  \"metrics\": {");
        for (i, (k, v)) in self.metrics.iter().enumerate() {
            let sep = if i == 0 { "\n" } else { ",\n" };
            let _ = write!(o, "{sep}    {}: {}", quote(k), number(*v));
        }
        o.push_str(if self.metrics.is_empty() { "},\n" } else { "\n  },\n" });
        o.push_str("  \"checks\": [");
        for (i, c) in self.checks.iter().enumerate() {
            let sep = if i == 0 { "\n" } else { ",\n" };
            let _ = write!(
                o,
                "{sep}    {{\"criterion\": {}, \"name\": {}, \"status\": {}, \"detail\": {}}}",
                c.criterion,
                quote(&c.name),
                quote(c.status.as_str()),
                quote(&c.detail)
            );
        }
        o.push_str(if self.checks.is_empty() { "]" } else { "\n  ]" });
        match format {
            Format::Csv => {
                o.push_str(",\n  \"tables\": [");
                let names: Vec<String> = self.tables.iter().map(|t| quote(&format!("{}.csv", t.name))).collect();
                o.push_str(&names.join(", "));
                o.push(']');
            }
            Format::Json => {
                o.push_str(",\n  \"tables\": {");
                for (i, t) in self.tables.iter().enumerate() {
                    let sep = if i == 0 { "\n" } else { ",\n" };
                    let header: Vec<String> = t.header.iter().map(|h| quote(h)).collect();
                    let _ = write!(o, "{sep}    {}: {{\n      \"header\": [{}],\n      \"rows\": [", quote(&t.name), header.join(", "));
                    for (j, r) in t.rows.iter().enumerate() {
                        let cells: Vec<String> = r.iter().map(|c| quote(c)).collect();
                        let sep = if j == 0 { "\n" } else { ",\n" };
                        let _ = write!(o, "{sep}        [{}]", cells.join(", "));
                    }
                    o.push_str(if t.rows.is_empty() { "]\n    }" } else { "\n      ]\n    }" });
                }
                o.push_str(if self.tables.is_empty() { "}" } else { "\n  }" });
            }
        }
        o.push_str("\n}\n");
        o
    }

    /// Writes summary.json plus, for csv, one file per table. Returns the paths written.
    pub fn emit(&self, dir: &Path, format: Format) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let summary = dir.join("summary.json");
        std::fs::write(&summary, self.summary_json(format))?;
        written.push(summary);
        if format == Format::Csv {
            for t in &self.tables {
                let path = dir.join(format!("{}.csv", t.name));
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(&t.header)?;
                for r in &t.rows {
                    w.write_record(r)?;
                }
                w.flush()?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// Finite values as bare JSON numbers; NaN and infinities as strings.
fn number(v: f64) -> String {
    if v.is_finite() {
        fmt_f64(v)
    } else {
        quote(&fmt_f64(v))
    }
}

fn write_value(o: &mut String, v: &Value, depth: usize) {
    let pad = "  ".repeat(depth + 1);
    match v {
        Value::Object(map) if !map.is_empty() => {
            o.push_str("{\n");
            for (i, (k, val)) in map.iter().enumerate() {
                if i > 0 {
                    o.push_str(",\n");
                }
                let _ = write!(o, "{pad}{}: ", quote(k));
                write_value(o, val, depth + 1);
            }
            let _ = write!(o, "\n{}}}", "  ".repeat(depth));
        }
        Value::Array(items) => {
            o.push('[');
            for (i, val) in items.iter().enumerate() {
                if i > 0 {
                    o.push_str(", ");
                }
                write_value(o, val, depth + 1);
            }
            o.push(']');
        }
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => o.push_str(&u.to_string()),
            (_, Some(i), _) => o.push_str(&i.to_string()),
            (_, _, Some(f)) => o.push_str(&number(f)),
            _ => o.push_str(&n.to_string()),
        },
        other => o.push_str(&other.to_string()),
    }
}
