//! Artifact writing. Files are staged in a hidden directory inside the
//! output directory and renamed into place only once everything succeeded.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use tempfile::TempDir;

use crate::protocols::Table;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Serialize)]
pub struct Summary {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub status: &'static str,
    pub scenario: Option<String>,
    pub scenario_hash: Option<String>,
    pub seed: Option<u64>,
    pub results: serde_json::Map<String, Value>,
    pub artifacts: Vec<String>,
    pub errors: Vec<String>,
}

impl Summary {
    pub fn new(command: &str) -> Self {
        Summary {
            tool: "darkqubit",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            status: "ok",
            scenario: None,
            scenario_hash: None,
            seed: None,
            results: serde_json::Map::new(),
            artifacts: Vec::new(),
            errors: Vec::new(),
        }
    }
}

fn cell(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:e}")
    }
}

pub fn table_csv(t: &Table) -> String {
    let mut s = t.columns.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(",");
    s.push('\n');
    for r in &t.rows {
        s.push_str(&r.iter().map(|&x| cell(x)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

fn columns_json(t: &Table) -> Value {
    Value::Array(t.columns.iter().map(|c| json!({"name": c.name, "label": c.label, "unit": c.unit})).collect())
}

fn table_manifest(t: &Table, file: &str) -> Value {
    json!({
        "table": t.name,
        "description": t.description,
        "file": file,
        "rows": t.rows.len(),
        "axes": {"x": t.columns[0].name, "y": t.columns[1..].iter().map(|c| c.name.clone()).collect::<Vec<_>>()},
        "columns": columns_json(t),
    })
}

fn table_json(t: &Table) -> Value {
    let rows: Vec<Vec<Value>> = t
        .rows
        .iter()
        .map(|r| r.iter().map(|&x| if x.is_finite() { json!(x) } else { json!(cell(x)) }).collect())
        .collect();
    json!({
        "table": t.name,
        "description": t.description,
        "columns": columns_json(t),
        "rows": rows,
    })
}

pub struct Writer {
    out: PathBuf,
    stage: TempDir,
    files: Vec<String>,
}

impl Writer {
    pub fn new(out: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(out)?;
        let stage = tempfile::Builder::new().prefix(".darkqubit-stage").tempdir_in(out)?;
        Ok(Writer { out: out.to_path_buf(), stage, files: Vec::new() })
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn put(&mut self, name: &str, contents: &[u8]) -> std::io::Result<()> {
        let mut f = fs::File::create(self.stage.path().join(name))?;
        f.write_all(contents)?;
        f.sync_all()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn table(&mut self, t: &Table, format: Format) -> std::io::Result<()> {
        match format {
            Format::Csv => {
                let file = format!("{}.csv", t.name);
                self.put(&file, table_csv(t).as_bytes())?;
                let manifest = to_pretty(&table_manifest(t, &file));
                self.put(&format!("{}.manifest.json", t.name), manifest.as_bytes())
            }
            Format::Json => self.put(&format!("{}.json", t.name), to_pretty(&table_json(t)).as_bytes()),
        }
    }

    /// Writes the summary last and moves every staged file into place.
    pub fn commit(mut self, summary: &Summary) -> std::io::Result<Vec<PathBuf>> {
        self.put("summary.json", to_pretty(summary).as_bytes())?;
        let mut moved = Vec::new();
        for name in &self.files {
            let dst = self.out.join(name);
            if let Err(e) = fs::rename(self.stage.path().join(name), &dst) {
                for p in &moved {
                    let _ = fs::remove_file(p);
                }
                return Err(e);
            }
            moved.push(dst);
        }
        Ok(moved)
    }
}

pub fn to_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("summary serializes");
    s.push('\n');
    s
}

/// A lone summary (failure paths), still written atomically.
pub fn write_summary_only(out: &Path, summary: &Summary) -> std::io::Result<()> {
    Writer::new(out)?.commit(summary).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::Column;

    fn table() -> Table {
        Table {
            name: "t".into(),
            description: "d".into(),
            columns: vec![Column::new("x", "x", "s"), Column::new("y", "y", "1")],
            rows: vec![vec![0.0, 1.0], vec![0.5, f64::INFINITY]],
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        assert_eq!(table_csv(&table()), "x,y\n0e0,1e0\n5e-1,inf\n");
    }

    #[test]
    fn commit_leaves_no_stage_behind() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = Writer::new(dir.path()).unwrap();
        w.table(&table(), Format::Csv).unwrap();
        w.commit(&Summary::new("test")).unwrap();
        let mut names: Vec<String> =
            fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        names.sort();
        assert_eq!(names, ["summary.json", "t.csv", "t.manifest.json"]);
    }

    #[test]
    fn dropped_writer_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut w = Writer::new(dir.path()).unwrap();
            w.table(&table(), Format::Json).unwrap();
        }
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
