//! CSV tables with a schema line, and the run manifest.

use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // Shortest round-trip form: identical bits give identical text.
            Cell::Float(v) => format!("{v:e}"),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn render(&self, experiment: &str) -> Result<Vec<u8>, std::io::Error> {
        let mut buf = Vec::new();
        writeln!(
            buf,
            "# schema: quasichaos/{experiment}/{} v{SCHEMA_VERSION} columns={}",
            self.name,
            self.columns.join(",")
        )?;
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.into_inner().map_err(|e| e.into_error())
    }
}

/// Where the artifacts of one run go.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub dir: PathBuf,
    pub stem: String,
}

impl OutputLayout {
    /// `path` ending in `.csv` names the primary table; anything else is a directory.
    pub fn new(path: &Path, experiment: &str) -> Self {
        if path.extension().is_some_and(|e| e == "csv") {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
            let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
            Self { dir, stem }
        } else {
            Self { dir: path.to_path_buf(), stem: experiment.to_string() }
        }
    }

    /// The first table takes the primary name; others are suffixed.
    pub fn table_path(&self, index: usize, table: &Table) -> PathBuf {
        if index == 0 {
            self.dir.join(format!("{}.csv", self.stem))
        } else {
            self.dir.join(format!("{}.{}.csv", self.stem, table.name))
        }
    }

    pub fn json_path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{}.{name}.json", self.stem))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join(format!("{}.manifest.json", self.stem))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailedPoint {
    pub index: usize,
    pub label: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub code_version: String,
    pub config: serde_json::Value,
    pub resolved: serde_json::Value,
    pub defaults: serde_json::Value,
    pub preset: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_clock_s: f64,
    pub outputs: Vec<OutputEntry>,
    pub failed_points: Vec<FailedPoint>,
    pub warnings: Vec<String>,
}

/// Writes every file to a temporary name first and renames once all succeed.
pub fn write_atomically(files: &[(PathBuf, Vec<u8>)]) -> std::io::Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("partial");
        fs::write(&tmp, bytes)?;
        staged.push((tmp, path));
    }
    for (tmp, path) in staged {
        fs::rename(tmp, path)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_line_and_header() {
        let mut t = Table::new("grid", &["mode", "purity"]);
        t.push(vec![3usize.into(), 0.5.into()]);
        let text = String::from_utf8(t.render("cqed-grid").unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# schema: quasichaos/cqed-grid/grid v1"));
        assert_eq!(lines[1], "mode,purity");
        assert_eq!(lines[2], "3,5e-1");
    }

    #[test]
    fn float_text_round_trips() {
        for &x in &[0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            let s = Cell::Float(x).render();
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn layout_from_file_or_directory() {
        let l = OutputLayout::new(Path::new("out/grid.csv"), "cqed-grid");
        let t = Table::new("rates", &["a"]);
        assert_eq!(l.table_path(0, &t), PathBuf::from("out/grid.csv"));
        assert_eq!(l.table_path(1, &t), PathBuf::from("out/grid.rates.csv"));
        assert_eq!(l.manifest_path(), PathBuf::from("out/grid.manifest.json"));
        let d = OutputLayout::new(Path::new("results"), "ncrit");
        assert_eq!(d.json_path("summary"), PathBuf::from("results/ncrit.summary.json"));
    }
}
