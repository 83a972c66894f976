//! Deterministic table output: comma or tab separated, header row first,
//! reals printed with 17 significant digits and a '.' decimal point,
//! never a bare NaN. Missing values print as explicit sentinels:
//! `oor` (out of regime) and `na` (not applicable).

use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Tsv,
}

impl Format {
    pub fn separator(&self) -> char {
        match self {
            Format::Csv => ',',
            Format::Tsv => '\t',
        }
    }
}

#[derive(Debug, Clone)]
pub enum Cell {
    UInt(u64),
    Real(f64),
    Bool(bool),
    Text(String),
    Oor,
    Na,
}

impl Cell {
    pub fn opt_real(v: Option<f64>) -> Cell {
        match v {
            Some(x) => Cell::Real(x),
            None => Cell::Na,
        }
    }

    pub fn regime_real(v: Option<f64>) -> Cell {
        match v {
            Some(x) => Cell::Real(x),
            None => Cell::Oor,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::UInt(v) => v.to_string(),
            Cell::Real(v) => {
                debug_assert!(v.is_finite(), "non-finite value reached the output layer");
                format!("{v:.16e}")
            }
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Oor => "oor".to_string(),
            Cell::Na => "na".to_string(),
        }
    }
}

pub struct Table<'a, W: Write> {
    out: &'a mut W,
    sep: char,
}

impl<'a, W: Write> Table<'a, W> {
    pub fn new(out: &'a mut W, format: Format) -> Self {
        Self {
            out,
            sep: format.separator(),
        }
    }

    pub fn comment(&mut self, text: &str) -> std::io::Result<()> {
        writeln!(self.out, "# {text}")
    }

    pub fn header(&mut self, names: &[&str]) -> std::io::Result<()> {
        writeln!(self.out, "{}", names.join(&self.sep.to_string()))
    }

    pub fn row(&mut self, cells: &[Cell]) -> std::io::Result<()> {
        let rendered: Vec<String> = cells.iter().map(Cell::render).collect();
        writeln!(self.out, "{}", rendered.join(&self.sep.to_string()))
    }
}
