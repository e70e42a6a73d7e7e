//! Tabular experiment output and CSV serialization.

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_sig9(*v),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            Cell::Text(_) => None,
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

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
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

/// Formats with 9 significant digits, `%g` style: fixed notation for
/// moderate exponents, scientific otherwise, trailing zeros removed.
pub fn format_sig9(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// One table of results; every row has one cell per header column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Report {
    pub fn new(header: &[&str]) -> Self {
        Report { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn get(&self, row: usize, name: &str) -> Option<&Cell> {
        self.column(name).and_then(|c| self.rows.get(row).map(|r| &r[c]))
    }

    pub fn f64_at(&self, row: usize, name: &str) -> Option<f64> {
        self.get(row, name).and_then(Cell::as_f64)
    }

    pub fn text_at(&self, row: usize, name: &str) -> Option<&str> {
        match self.get(row, name)? {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("cells are valid UTF-8")
    }

    /// CSV text with every column whose name ends in `_wall_s` blanked, for
    /// reproducibility comparisons.
    pub fn to_csv_string_without_wall_time(&self) -> String {
        let mut copy = self.clone();
        for (c, name) in self.header.iter().enumerate() {
            if name.ends_with("_wall_s") {
                for row in &mut copy.rows {
                    row[c] = Cell::Text(String::new());
                }
            }
        }
        copy.to_csv_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.5), "1.5");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(2.0 / 3.0 * 1e6), "666666.667");
        assert_eq!(format_sig9(123456789.0), "123456789");
        assert_eq!(format_sig9(1.0e10), "1e10");
        assert_eq!(format_sig9(-1.234567891234e-7), "-1.23456789e-7");
        assert_eq!(format_sig9(0.000123), "0.000123");
        assert_eq!(format_sig9(f64::INFINITY), "inf");
        assert_eq!(format_sig9(f64::NAN), "nan");
    }

    #[test]
    fn round_trip_precision() {
        for v in [std::f64::consts::PI, 1e-20, 6.02214076e23, -0.1] {
            let back: f64 = format_sig9(v).parse().unwrap();
            assert!(((back - v) / v).abs() < 1e-8);
        }
    }

    #[test]
    fn csv_layout() {
        let mut r = Report::new(&["name", "k", "value", "solve_wall_s"]);
        r.push(vec!["Max-logDet".into(), 80usize.into(), 0.1.into(), 0.5.into()]);
        assert_eq!(r.to_csv_string(), "name,k,value,solve_wall_s\nMax-logDet,80,0.1,0.5\n");
        assert_eq!(r.to_csv_string_without_wall_time(), "name,k,value,solve_wall_s\nMax-logDet,80,0.1,\n");
        assert_eq!(r.f64_at(0, "k"), Some(80.0));
    }
}
