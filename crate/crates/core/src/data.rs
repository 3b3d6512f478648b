//! Tagged observations for all populations, with CSV input and output.
//!
//! Rows carry a population id (0 is the target), an arm (1 treated, 0 control), an outcome
//! and a covariate vector. The CSV header is `pop,arm,y,x1,...,xd`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::points::Points;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pop: Vec<usize>,
    arm: Vec<u8>,
    y: Vec<f64>,
    x: Points,
}

/// One stratum of the data: covariates and outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub x: Points,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self { pop: Vec::new(), arm: Vec::new(), y: Vec::new(), x: Points::new(dim) }
    }

    /// Appends a row, enforcing the row-level invariants.
    pub fn push(&mut self, pop: usize, arm: u8, y: f64, x: &[f64]) -> Result<()> {
        if arm > 1 {
            return Err(Error::Data(format!("arm must be 0 or 1, got {arm}")));
        }
        if pop == 0 && arm == 1 {
            return Err(Error::Data("the target population (pop 0) cannot have treated rows".into()));
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value".into()));
        }
        self.x.push(x)?;
        self.pop.push(pop);
        self.arm.push(arm);
        self.y.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// Largest population id, i.e. the number of sources when ids are contiguous.
    pub fn n_sources(&self) -> usize {
        self.pop.iter().copied().max().unwrap_or(0)
    }

    pub fn pop(&self, row: usize) -> usize {
        self.pop[row]
    }

    pub fn arm(&self, row: usize) -> u8 {
        self.arm[row]
    }

    pub fn y(&self, row: usize) -> f64 {
        self.y[row]
    }

    pub fn x(&self, row: usize) -> &[f64] {
        self.x.row(row)
    }

    pub fn covariates(&self) -> &Points {
        &self.x
    }

    pub fn group(&self, pop: usize, arm: u8) -> Group {
        let mut x = Points::new(self.dim());
        let mut y = Vec::new();
        for r in 0..self.len() {
            if self.pop[r] == pop && self.arm[r] == arm {
                x.push(self.x.row(r)).expect("rows share the dataset dimension");
                y.push(self.y[r]);
            }
        }
        Group { x, y }
    }

    pub fn count(&self, pop: usize, arm: u8) -> usize {
        (0..self.len()).filter(|&r| self.pop[r] == pop && self.arm[r] == arm).count()
    }

    /// Checks that the target has controls and every source `1..=N` has both arms.
    pub fn validate_for_estimation(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        if self.count(0, 0) == 0 {
            return Err(Error::Data("the target population (pop 0) has no rows".into()));
        }
        let n = self.n_sources();
        if n == 0 {
            return Err(Error::Data("no source populations (pop >= 1)".into()));
        }
        for i in 1..=n {
            for arm in [0, 1] {
                if self.count(i, arm) == 0 {
                    let what = if arm == 1 { "treated" } else { "control" };
                    return Err(Error::Data(format!("source population {i} has no {what} rows")));
                }
            }
        }
        Ok(())
    }

    pub fn map_outcomes(&mut self, f: impl Fn(f64) -> f64) {
        self.y.iter_mut().for_each(|v| *v = f(*v));
    }

    pub fn map_covariate(&mut self, column: usize, f: impl Fn(f64) -> f64) {
        let rows: Vec<Vec<f64>> = self
            .x
            .iter()
            .map(|r| {
                let mut r = r.to_vec();
                r[column] = f(r[column]);
                r
            })
            .collect();
        let mut x = Points::new(self.dim());
        for r in &rows {
            x.push(r).expect("same dimension");
        }
        self.x = x;
    }

    /// Writes the dataset as CSV with full-precision numbers.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["pop".to_string(), "arm".to_string(), "y".to_string()];
        header.extend((1..=self.dim()).map(|k| format!("x{k}")));
        w.write_record(&header).map_err(io_err)?;
        for r in 0..self.len() {
            let mut rec = vec![self.pop[r].to_string(), self.arm[r].to_string(), format_float(self.y[r])];
            rec.extend(self.x.row(r).iter().map(|v| format_float(*v)));
            w.write_record(&rec).map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::Input(e.to_string()))
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Input(e.to_string())
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Inverse hyperbolic sine, `ln(y + sqrt(y² + 1))`.
pub fn asinh(y: f64) -> f64 {
    y.asinh()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadOptions {
    /// Column names (`y`, `x1`, ...) to pass through the inverse hyperbolic sine.
    pub asinh_columns: Vec<String>,
    /// Standardize `y` by the target-control mean and standard deviation (after any asinh).
    pub standardize: bool,
}

/// What was applied while loading, for reports.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadRecord {
    pub rows: usize,
    pub asinh_columns: Vec<String>,
    /// Target-control mean and standard deviation used for standardization.
    pub standardization: Option<(f64, f64)>,
}

pub fn load_dataset(path: &Path, options: &LoadOptions) -> Result<(Dataset, LoadRecord)> {
    let file = std::fs::File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    read_dataset(file, options)
}

pub fn read_dataset<R: Read>(input: R, options: &LoadOptions) -> Result<(Dataset, LoadRecord)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 4 || names[..3] != ["pop", "arm", "y"] {
        return Err(Error::Parse { line: 1, message: "header must be pop,arm,y,x1,...,xd".into() });
    }
    let dim = names.len() - 3;
    for (k, name) in names[3..].iter().enumerate() {
        if *name != format!("x{}", k + 1) {
            return Err(Error::Parse {
                line: 1,
                message: format!("covariate column {} must be named x{}, found '{name}'", k + 1, k + 1),
            });
        }
    }
    for col in &options.asinh_columns {
        if !names[2..].contains(&col.as_str()) {
            return Err(Error::Config(format!("asinh column '{col}' is not an outcome or covariate column")));
        }
    }
    let mut data = Dataset::new(dim);
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse { line, message };
        if record.len() != names.len() {
            return Err(parse_err(format!("expected {} fields, found {}", names.len(), record.len())));
        }
        let pop: usize = record[0]
            .parse()
            .map_err(|_| parse_err(format!("pop must be a nonnegative integer, found '{}'", &record[0])))?;
        let arm: u8 = match &record[1] {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(format!("arm must be 0 or 1, found '{other}'"))),
        };
        let mut values = Vec::with_capacity(dim + 1);
        for (k, field) in record.iter().enumerate().skip(2) {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(format!("column {} is not a number: '{field}'", names[k])))?;
            if !v.is_finite() {
                return Err(parse_err(format!("column {} is not finite: '{field}'", names[k])));
            }
            values.push(v);
        }
        if pop == 0 && arm == 1 {
            return Err(parse_err("the target population (pop 0) cannot have treated rows".into()));
        }
        data.push(pop, arm, values[0], &values[1..]).map_err(|e| parse_err(e.to_string()))?;
    }
    if data.is_empty() {
        return Err(Error::Data("dataset has no rows".into()));
    }
    let mut record = LoadRecord { rows: data.len(), ..Default::default() };
    for col in &options.asinh_columns {
        if col == "y" {
            data.map_outcomes(asinh);
        } else {
            let k: usize = col[1..].parse().expect("validated column name");
            data.map_covariate(k - 1, asinh);
        }
        record.asinh_columns.push(col.clone());
    }
    if options.standardize {
        let tc = data.group(0, 0).y;
        if tc.len() < 2 {
            return Err(Error::Data("standardization needs at least two target control rows".into()));
        }
        let mean = crate::linalg::mean(&tc);
        let var = tc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (tc.len() - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(Error::Data("target control outcomes are constant; cannot standardize".into()));
        }
        data.map_outcomes(|v| (v - mean) / sd);
        record.standardization = Some((mean, sd));
    }
    Ok((data, record))
}
