//! Results produced by an experiment before they are written out.

use serde::Serialize;
use serde_json::Value;

/// One acceptance assertion with its measured margin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Acceptance criterion this assertion belongs to, if any.
    pub criterion: Option<u8>,
    pub pass: bool,
    pub value: f64,
    pub limit: f64,
    /// Distance to the limit, positive when passing.
    pub margin: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `value ≤ limit`.
    pub fn at_most(criterion: Option<u8>, name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            criterion,
            pass: value <= limit,
            value,
            limit,
            margin: limit - value,
            detail: String::new(),
        }
    }

    /// Passes when `value ≥ limit`.
    pub fn at_least(criterion: Option<u8>, name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            margin: value - limit,
            pass: value >= limit,
            ..Self::at_most(criterion, name, value, limit)
        }
    }

    pub fn flag(criterion: Option<u8>, name: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            criterion,
            pass,
            value: if pass { 1.0 } else { 0.0 },
            limit: 1.0,
            margin: if pass { 0.0 } else { -1.0 },
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Float(x) => format!("{x:.16e}"),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

pub fn verdict(pass: bool) -> Cell {
    Cell::Text(if pass { "pass" } else { "fail" }.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem, written as `<name>.csv`.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

/// A log-log rate plot.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePlot {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub name: String,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub plots: Vec<RatePlot>,
    pub report: Value,
}

impl ExperimentOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}
