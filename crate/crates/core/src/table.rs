//! Named result tables and their CSV form.
//!
//! Floats print with Rust's shortest round-trip formatting, so identical
//! values give identical bytes.

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Bool(v) => write!(f, "{v}"),
            Cell::Text(v) => f.write_str(v),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
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

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Builds a row from heterogeneous values.
#[macro_export]
macro_rules! row {
    ($($v:expr),* $(,)?) => { vec![$($crate::table::Cell::from($v)),*] };
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Config(format!("table {} has no column {name}", self.name)))
    }

    /// Numeric column; integers widen, other cells give NaN.
    pub fn nums(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column(name)?;
        Ok(self
            .rows
            .iter()
            .map(|r| match &r[j] {
                Cell::Num(v) => *v,
                Cell::Int(v) => *v as f64,
                _ => f64::NAN,
            })
            .collect())
    }

    pub fn bools(&self, name: &str) -> Result<Vec<bool>> {
        let j = self.column(name)?;
        Ok(self.rows.iter().map(|r| matches!(r[j], Cell::Bool(true))).collect())
    }

    pub fn texts(&self, name: &str) -> Result<Vec<String>> {
        let j = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[j].to_string()).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
        w.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|c| c.to_string())).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn write_csv(&self, dir: &Path) -> Result<std::path::PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&path, self.to_csv()?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
