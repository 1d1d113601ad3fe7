//! Whitespace-delimited plot data files (`*.dat`): a header line of column
//! names followed by one row per record, single-space separated, `\n` line
//! endings.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl DatTable {
    pub fn new<I, S>(header: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        DatTable {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row. Panics if the width does not match the header.
    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        debug_assert!(row.iter().all(|c| !c.is_empty() && !c.contains(char::is_whitespace)));
        self.rows.push(row);
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(" ");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_header_and_rows() {
        let mut t = DatTable::new(["year", "psi"]);
        t.push(["2010", "0.000000"]);
        t.push(["2011", "0.012000"]);
        assert_eq!(t.render(), "year psi\n2010 0.000000\n2011 0.012000\n");
    }

    #[test]
    #[should_panic]
    fn width_mismatch_panics() {
        DatTable::new(["a", "b"]).push(["1"]);
    }
}
