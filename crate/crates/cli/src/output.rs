//! In-memory output bundle, flushed to disk only once a run has produced it.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};
use tempfile::NamedTempFile;

pub const MANIFEST: &str = "run_report.json";

/// One CSV table, rows already formatted.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_header(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Shortest round-trip formatting, stable across runs.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

#[derive(Default)]
pub struct Bundle {
    files: Vec<(String, Vec<u8>, Option<usize>)>,
    pub summary: Map<String, Value>,
    pub seeds: Map<String, Value>,
    pub skipped: Vec<Value>,
    pub failures: Vec<String>,
}

impl Bundle {
    pub fn table(&mut self, name: impl Into<String>, t: &Table) {
        self.files.push((name.into(), t.to_bytes(), Some(t.rows.len())));
    }

    pub fn text(&mut self, name: impl Into<String>, s: String) {
        self.files.push((name.into(), s.into_bytes(), None));
    }

    fn manifest(&self, command: &str, config: &Path) -> Vec<u8> {
        let files: Vec<Value> = self
            .files
            .iter()
            .map(|(name, bytes, rows)| json!({ "path": name, "bytes": bytes.len(), "rows": rows }))
            .collect();
        let report = json!({
            "tool": "purcell",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": config.display().to_string(),
            "status": if self.failures.is_empty() { "ok" } else { "numerical-failure" },
            "seeds": self.seeds,
            "files": files,
            "summary": self.summary,
            "skipped": self.skipped,
            "failures": self.failures,
        });
        let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
        s.push('\n');
        s.into_bytes()
    }

    /// Writes every file, then the manifest. Each file is staged in the
    /// output directory and renamed into place.
    pub fn write(&self, dir: &Path, command: &str, config: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = self.manifest(command, config);
        let all = self
            .files
            .iter()
            .map(|(n, b, _)| (n.as_str(), b.as_slice()))
            .chain(std::iter::once((MANIFEST, manifest.as_slice())));
        for (name, bytes) in all {
            let mut tmp = NamedTempFile::new_in(dir)?;
            tmp.write_all(bytes)?;
            tmp.persist(dir.join(name)).map_err(|e| e.error)?;
        }
        Ok(())
    }
}
