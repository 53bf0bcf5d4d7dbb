//! Serde views of matrices for JSON files.
//!
//! Real matrices are `{"d": 3, "entries": [[...], ...]}`; complex matrices
//! are `{"rows": n, "cols": n, "entries": [[re, im], ...]}` in row-major
//! order, with optional `"d"` and `"s"` fields when read as block unitaries.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{BistochasticMatrix, BlockUnitary, ComplexMatrix, Tolerance, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMatrixFile {
    pub d: usize,
    pub entries: Vec<Vec<f64>>,
}

impl RealMatrixFile {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        RealMatrixFile {
            d: m.nrows(),
            entries: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect(),
        }
    }

    pub fn to_bistochastic(&self, tol: &Tolerance) -> Result<BistochasticMatrix> {
        if self.entries.len() != self.d {
            return Err(Error::Dimension(format!(
                "\"d\" is {} but there are {} rows",
                self.d,
                self.entries.len()
            )));
        }
        BistochasticMatrix::from_rows(&self.entries, tol)
    }
}

impl From<&BistochasticMatrix> for RealMatrixFile {
    fn from(b: &BistochasticMatrix) -> Self {
        RealMatrixFile::from_matrix(b.matrix())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrixFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<[f64; 2]>,
}

impl ComplexMatrixFile {
    pub fn from_complex(m: &ComplexMatrix) -> Self {
        ComplexMatrixFile {
            d: None,
            s: None,
            rows: m.rows(),
            cols: m.cols(),
            entries: m.row_major_entries().iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn to_complex(&self) -> Result<ComplexMatrix> {
        let entries = self.entries.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        ComplexMatrix::from_row_major(self.rows, self.cols, entries)
    }

    /// Reads as a block unitary; `d` and `s` come from the file unless given.
    pub fn to_block_unitary(&self, d: Option<usize>, s: Option<usize>, tol: &Tolerance) -> Result<BlockUnitary> {
        let m = self.to_complex()?;
        let n = m.rows();
        let (d, s) = match (d.or(self.d), s.or(self.s)) {
            (Some(d), Some(s)) => (d, s),
            (Some(d), None) if d > 0 && n % d == 0 => (d, n / d),
            (None, Some(s)) if s > 0 && n % s == 0 => (n / s, s),
            (None, None) => (n, 1),
            _ => {
                return Err(Error::Dimension(format!(
                    "cannot split a {n}x{n} matrix into the requested blocks"
                )))
            }
        };
        BlockUnitary::new(m, d, s, tol)
    }
}

impl From<&BlockUnitary> for ComplexMatrixFile {
    fn from(u: &BlockUnitary) -> Self {
        ComplexMatrixFile {
            d: Some(u.d()),
            s: Some(u.s()),
            ..ComplexMatrixFile::from_complex(u.matrix())
        }
    }
}
