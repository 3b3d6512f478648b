use crate::error::{Error, Result};

/// A set of covariate vectors of one fixed dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut points = Self::new(dim);
        for row in rows {
            points.push(row)?;
        }
        Ok(points)
    }

    /// One-dimensional points from scalars.
    pub fn from_scalars(values: &[f64]) -> Self {
        Self { dim: 1, data: values.to_vec() }
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if self.data.is_empty() && self.dim == 0 {
            self.dim = row.len();
        }
        if row.len() != self.dim {
            return Err(Error::Shape(format!(
                "covariate of dimension {} where {} was expected",
                row.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    /// First coordinate of every point.
    pub fn first_coordinate(&self) -> Vec<f64> {
        self.iter().map(|r| r[0]).collect()
    }

    pub fn concat<'a>(sets: impl IntoIterator<Item = &'a Points>) -> Result<Points> {
        let mut out: Option<Points> = None;
        for set in sets {
            match out.as_mut() {
                None => out = Some(set.clone()),
                Some(acc) => {
                    if acc.dim != set.dim {
                        return Err(Error::Shape("cannot concatenate point sets of different dimension".into()));
                    }
                    acc.data.extend_from_slice(&set.data);
                }
            }
        }
        Ok(out.unwrap_or_else(|| Points::new(0)))
    }
}
