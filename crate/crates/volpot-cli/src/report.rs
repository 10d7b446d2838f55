//! Deterministic report writing: CSV with a commented config echo, or a flat
//! key-value tree. Floats are printed with 14 significant digits in
//! scientific notation so reruns are byte-identical; timings never enter the
//! report (they go to stderr).

use std::io::Write;

pub enum Format {
    Csv,
    Kv,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "kv" => Ok(Format::Kv),
            other => Err(format!("unknown format `{other}` (expected csv or kv)")),
        }
    }
}

pub struct Report {
    pub config_echo: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

/// 14 significant digits, scientific.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.13E}")
}

impl Report {
    pub fn new(config_echo: String, columns: Vec<&'static str>) -> Self {
        Self {
            config_echo,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, format: &Format, w: &mut impl Write) -> std::io::Result<()> {
        match format {
            Format::Csv => {
                writeln!(w, "# config: {}", self.config_echo)?;
                writeln!(w, "{}", self.columns.join(","))?;
                for row in &self.rows {
                    writeln!(w, "{}", row.join(","))?;
                }
            }
            Format::Kv => {
                writeln!(w, "config = {}", self.config_echo)?;
                writeln!(w, "rows = {}", self.rows.len())?;
                for (i, row) in self.rows.iter().enumerate() {
                    for (col, val) in self.columns.iter().zip(row) {
                        writeln!(w, "row.{i}.{col} = {val}")?;
                    }
                }
            }
        }
        Ok(())
    }
}
