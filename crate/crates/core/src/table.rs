//! Minimal CSV emission: comma separated, `.` decimal, header row, LF
//! endings. Fields are numbers or bare identifiers, so nothing is quoted.

use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Round-trippable float formatting.
pub fn num(x: f64) -> String {
    let mut s = String::new();
    write!(s, "{x:?}").unwrap();
    s
}
