//! CSV tables and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::analysis::{DataPoint, DataSeries};
use crate::{Error, Result};

/// Significant digits of every number written to a CSV file.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Shortest `%g`-style rendering with [`SIGNIFICANT_DIGITS`] significant
/// digits: fixed notation for exponents in `[-5, 9)`, scientific otherwise,
/// trailing zeros removed.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_owned()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}

/// Numeric table with a unit-annotated header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| (*h).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from header");
        self.rows.push(row);
    }

    /// Two columns, or three with a `sigma` column when any point carries one.
    pub fn from_series(series: &DataSeries) -> Self {
        let with_sigma = series.points().iter().any(|p| p.sigma.is_some());
        let mut header = vec![series.x_label.as_str(), series.y_label.as_str()];
        if with_sigma {
            header.push("sigma");
        }
        let mut table = Self::new(&header);
        for p in series.points() {
            let mut row = vec![p.x, p.y];
            if with_sigma {
                row.push(p.sigma.unwrap_or(f64::NAN));
            }
            table.push(row);
        }
        table
    }

    /// Long form of `values[i][j]` at `(outer[i], inner[j])`, outer index major.
    pub fn from_grid(labels: [&str; 3], outer: &[f64], inner: &[f64], values: &[Vec<f64>]) -> Self {
        let mut table = Self::new(&labels);
        for (i, &o) in outer.iter().enumerate() {
            for (j, &v) in inner.iter().enumerate() {
                table.push(vec![o, v, values[i][j]]);
            }
        }
        table
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|&v| format_float(v)))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = r
            .headers()
            .map_err(|e| Error::Data(format!("bad CSV header: {e}")))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("bad CSV record: {e}")))?;
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| {
                        Error::Data(format!("line {}: '{f}' is not a number", k + 2))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    /// First two columns as `(x, y)`; a column named `sigma` supplies uncertainties.
    pub fn to_series(&self) -> Result<DataSeries> {
        if self.header.len() < 2 {
            return Err(Error::Data("need at least two columns".into()));
        }
        let sigma_col = self.header.iter().position(|h| h == "sigma");
        let points = self
            .rows
            .iter()
            .map(|row| DataPoint {
                x: row[0],
                y: row[1],
                sigma: sigma_col.map(|c| row[c]),
            })
            .collect();
        DataSeries::new(points, &self.header[0], &self.header[1])
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Flat `key = value` record of a run plus a `files:` section of
/// `path sha256` lines.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunManifest {
    pub entries: Vec<(String, String)>,
    /// Paths relative to the output directory.
    pub files: Vec<(String, String)>,
}

impl RunManifest {
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    /// Records the checksum of `dir/name`, which must already be written.
    pub fn add_file(&mut self, dir: &Path, name: &str) -> Result<()> {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.files.push((name.to_owned(), sha256_hex(&bytes)));
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out.push_str("files:\n");
        for (path, sum) in &self.files {
            let _ = writeln!(out, "{path} {sum}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    /// `files:` section of a rendered manifest.
    pub fn parse_files(text: &str) -> Vec<(String, String)> {
        text.lines()
            .skip_while(|l| *l != "files:")
            .skip(1)
            .filter_map(|l| l.rsplit_once(' '))
            .map(|(p, s)| (p.to_owned(), s.to_owned()))
            .collect()
    }
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}
