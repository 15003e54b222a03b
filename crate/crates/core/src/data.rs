//! Row-oriented datasets shared by every base learner.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Covariates `x` (n×d) and optional responses `y` (n×q).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: Option<DMatrix<f64>>,
    column_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: Option<DVector<f64>>) -> Result<Self> {
        Self::with_targets(x, y.map(|v| DMatrix::from_column_slice(v.len(), 1, v.as_slice())))
    }

    pub fn with_targets(x: DMatrix<f64>, y: Option<DMatrix<f64>>) -> Result<Self> {
        if let Some(y) = &y {
            if y.nrows() != x.nrows() {
                return Err(Error::InvalidArgument(format!(
                    "{} responses for {} rows",
                    y.nrows(),
                    x.nrows()
                )));
            }
        }
        Ok(Dataset {
            x,
            y,
            column_names: None,
        })
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.x.ncols() {
            return Err(Error::InvalidArgument(format!(
                "{} names for {} columns",
                names.len(),
                self.x.ncols()
            )));
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> Option<&DMatrix<f64>> {
        self.y.as_ref()
    }

    /// First response column, for single-output regression.
    pub fn response(&self) -> Result<DVector<f64>> {
        let y = self.y.as_ref().ok_or(Error::EmptyInput("response"))?;
        Ok(y.column(0).into_owned())
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    /// Rows in the given order; indices may repeat.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: self.y.as_ref().map(|y| y.select_rows(rows)),
            column_names: self.column_names.clone(),
        }
    }

    pub fn without_row(&self, i: usize) -> Dataset {
        Dataset {
            x: self.x.clone().remove_row(i),
            y: self.y.clone().map(|y| y.remove_row(i)),
            column_names: self.column_names.clone(),
        }
    }
}
