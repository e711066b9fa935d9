//! Tabular export. Doubles are written in scientific notation with 17
//! significant digits, a header row always comes first and records end in
//! a bare LF, so identical tables are identical bytes.

use crate::error::{Error, Result};

/// A cell of an exported row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Flag(bool),
    /// A fixed label.
    Text(&'static str),
}

impl From<&'static str> for Cell {
    fn from(x: &'static str) -> Self {
        Cell::Text(x)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Flag(x)
    }
}

/// Canonical text of a double.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl Cell {
    fn render(self) -> String {
        match self {
            Cell::Float(x) => format_f64(x),
            Cell::Int(x) => x.to_string(),
            Cell::Flag(b) => u8::from(b).to_string(),
            Cell::Text(t) => t.to_string(),
        }
    }
}

/// In-memory table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::DimensionMismatch {
                expected: self.header.len(),
                found: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut w = ::csv::WriterBuilder::new()
            .terminator(::csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.render()))
                .expect("in-memory write");
        }
        let bytes = w.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("ascii output")
    }
}

/// Build a row from heterogeneous values.
#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => {
        vec![$($crate::csv::Cell::from($x)),*]
    };
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dialect() {
        let mut t = Table::new(&["q", "n", "ok"]);
        t.push(row![0.1, 3usize, true]).unwrap();
        t.push(row![-2.0, 0usize, false]).unwrap();
        assert_eq!(
            t.to_csv(),
            "q,n,ok\n1.0000000000000001e-1,3,1\n-2.0000000000000000e0,0,0\n"
        );
        assert!(t.push(row![1.0]).is_err());
    }

    #[test]
    fn doubles_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2f64.ln(), 1e-300, -7.25e17] {
            assert_eq!(format_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
